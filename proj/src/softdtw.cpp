#include "finepseudo/softdtw.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fp {

namespace {

void check_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw DomainError("soft-DTW smoothing gamma must be a positive finite value");
}

inline double softmin3(double a, double b, double c, double gamma) {
    const double m = std::min({a, b, c});
    const double s = std::exp(-(a - m) / gamma) + std::exp(-(b - m) / gamma) + std::exp(-(c - m) / gamma);
    return m - gamma * std::log(s);
}

}  // namespace

double softmin(std::span<const double> values, double gamma) {
    if (values.empty()) throw DomainError("softmin of an empty list");
    check_gamma(gamma);
    const double m = *std::min_element(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += std::exp(-(v - m) / gamma);
    return m - gamma * std::log(s);
}

AlignmentResult softdtw_forward(const CostMatrix& cost, double gamma) {
    check_gamma(gamma);
    const Index tu = cost.rows();
    const Index tv = cost.cols();
    if (tu < 1 || tv < 1) throw DimensionError("soft-DTW needs a non-empty cost matrix");
    AlignmentResult out;
    out.gamma = gamma;
    out.r_table = Matrix::Constant(tu + 2, tv + 2, kBorder);
    Matrix& r = out.r_table;
    r(0, 0) = 0.0;
    for (Index i = 1; i <= tu; ++i) {
        for (Index j = 1; j <= tv; ++j) {
            r(i, j) = cost(i - 1, j - 1) + softmin3(r(i - 1, j), r(i, j - 1), r(i - 1, j - 1), gamma);
        }
    }
    out.distance = r(tu, tv);
    return out;
}

double hard_dtw(const CostMatrix& cost) {
    const Index tu = cost.rows();
    const Index tv = cost.cols();
    if (tu < 1 || tv < 1) throw DimensionError("DTW needs a non-empty cost matrix");
    Matrix r = Matrix::Constant(tu + 1, tv + 1, kBorder);
    r(0, 0) = 0.0;
    for (Index i = 1; i <= tu; ++i)
        for (Index j = 1; j <= tv; ++j)
            r(i, j) = cost(i - 1, j - 1) + std::min({r(i - 1, j), r(i, j - 1), r(i - 1, j - 1)});
    return r(tu, tv);
}

CostGradient softdtw_grad_cost(const AlignmentResult& result, const CostMatrix& cost) {
    const Index tu = cost.rows();
    const Index tv = cost.cols();
    const Matrix& r = result.r_table;
    if (r.rows() != tu + 2 || r.cols() != tv + 2)
        throw DimensionError("softdtw_grad_cost: DP table does not match the cost matrix");
    const double gamma = result.gamma;
    check_gamma(gamma);

    // e(i, j) = sum over in-grid successors s of e(s) * P(path to s came through (i, j)),
    // where P = exp((r(s) - c(s) - r(i, j)) / gamma). Border cells are never visited.
    Matrix e = Matrix::Zero(tu + 2, tv + 2);
    e(tu, tv) = 1.0;
    auto weight = [&](Index si, Index sj, Index i, Index j) {
        return std::exp((r(si, sj) - cost(si - 1, sj - 1) - r(i, j)) / gamma);
    };
    for (Index i = tu; i >= 1; --i) {
        for (Index j = tv; j >= 1; --j) {
            if (i == tu && j == tv) continue;
            double acc = 0.0;
            if (i + 1 <= tu) acc += e(i + 1, j) * weight(i + 1, j, i, j);
            if (j + 1 <= tv) acc += e(i, j + 1) * weight(i, j + 1, i, j);
            if (i + 1 <= tu && j + 1 <= tv) acc += e(i + 1, j + 1) * weight(i + 1, j + 1, i, j);
            e(i, j) = acc;
        }
    }
    return e.block(1, 1, tu, tv);
}

double softdtw_backprop(const FrameSequence& u, const FrameSequence& v, double gamma, double upstream,
                        Matrix& grad_u, Matrix& grad_v) {
    const CostMatrix c = cost_matrix(u, v);
    const AlignmentResult res = softdtw_forward(c, gamma);
    if (upstream == 0.0) return res.distance;
    const CostGradient e = softdtw_grad_cost(res, c);
    const Index f = u.dim();
    for (Index i = 0; i < u.length(); ++i) {
        for (Index j = 0; j < v.length(); ++j) {
            const double w = e(i, j);
            if (w == 0.0) continue;
            cosine_distance_grad(u.frame(i), v.frame(j), upstream * w,
                                 {grad_u.data() + i * f, static_cast<std::size_t>(f)},
                                 {grad_v.data() + j * f, static_cast<std::size_t>(f)});
        }
    }
    return res.distance;
}

EmbeddingGradient softdtw_grad_embeddings(const FrameSequence& u, const FrameSequence& v, double gamma) {
    if (u.dim() != v.dim()) throw DimensionError("softdtw_grad_embeddings: feature dims differ");
    EmbeddingGradient out;
    out.grad_u = Matrix::Zero(u.length(), u.dim());
    out.grad_v = Matrix::Zero(v.length(), v.dim());
    out.distance = softdtw_backprop(u, v, gamma, 1.0, out.grad_u, out.grad_v);
    return out;
}

double softdtw_distance(const FrameSequence& u, const FrameSequence& v, double gamma) {
    return softdtw_forward(cost_matrix(u, v), gamma).distance;
}

}  // namespace fp
