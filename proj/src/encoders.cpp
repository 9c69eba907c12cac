#include "finepseudo/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace fp {

namespace {

Matrix uniform(Index rows, Index cols, double scale, Rng& rng) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

double glorot(Index fan_in, Index fan_out) { return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); }

void require_cols(const Matrix& video, Index cols, const char* what) {
    if (video.cols() != cols)
        throw DimensionError(std::string(what) + ": expected " + std::to_string(cols) + " input features, got " +
                             std::to_string(video.cols()));
}

}  // namespace

AlignEncoderParams AlignEncoderParams::init(const EncoderDims& d, Rng& rng) {
    AlignEncoderParams p;
    p.w1 = uniform(d.input_dim, d.hidden, glorot(d.input_dim, d.hidden), rng);
    p.b1 = Matrix::Zero(1, d.hidden);
    p.kernel = Matrix(3, d.hidden);
    p.kernel.row(0).setConstant(0.25);
    p.kernel.row(1).setConstant(0.5);
    p.kernel.row(2).setConstant(0.25);
    p.kernel += uniform(3, d.hidden, 0.05, rng);
    p.w2 = uniform(d.hidden, d.embed_dim, glorot(d.hidden, d.embed_dim), rng);
    p.b2 = Matrix::Zero(1, d.embed_dim);
    return p;
}

Matrix fa_forward(const AlignEncoderParams& p, const Matrix& video, AlignEncoderCache* cache) {
    require_cols(video, p.w1.rows(), "fa_forward");
    if (video.rows() < 2) throw DimensionError("fa_forward: need at least 2 frames");
    const Index t_len = video.rows();
    Matrix hidden = ((video * p.w1).rowwise() + p.b1.row(0)).array().tanh().matrix();
    Matrix mixed = hidden.array().rowwise() * p.kernel.row(1).array();
    for (Index t = 0; t < t_len; ++t) {
        if (t > 0) mixed.row(t).array() += p.kernel.row(0).array() * hidden.row(t - 1).array();
        if (t + 1 < t_len) mixed.row(t).array() += p.kernel.row(2).array() * hidden.row(t + 1).array();
    }
    Matrix out = (mixed * p.w2).rowwise() + p.b2.row(0);
    if (cache) {
        cache->input = video;
        cache->hidden = std::move(hidden);
        cache->mixed = std::move(mixed);
    }
    return out;
}

FrameSequence fa_embed(const AlignEncoderParams& p, const Matrix& video) { return FrameSequence(fa_forward(p, video)); }

AlignEncoderParams fa_backward(const AlignEncoderParams& p, const AlignEncoderCache& c, const Matrix& grad_out) {
    const Index t_len = c.hidden.rows();
    AlignEncoderParams g;
    g.w2 = c.mixed.transpose() * grad_out;
    g.b2 = grad_out.colwise().sum();
    const Matrix d_mixed = grad_out * p.w2.transpose();

    g.kernel = Matrix::Zero(3, p.kernel.cols());
    Matrix d_hidden = d_mixed.array().rowwise() * p.kernel.row(1).array();
    g.kernel.row(1) = (d_mixed.array() * c.hidden.array()).colwise().sum();
    for (Index t = 0; t < t_len; ++t) {
        if (t > 0) {
            g.kernel.row(0).array() += d_mixed.row(t).array() * c.hidden.row(t - 1).array();
            d_hidden.row(t - 1).array() += p.kernel.row(0).array() * d_mixed.row(t).array();
        }
        if (t + 1 < t_len) {
            g.kernel.row(2).array() += d_mixed.row(t).array() * c.hidden.row(t + 1).array();
            d_hidden.row(t + 1).array() += p.kernel.row(2).array() * d_mixed.row(t).array();
        }
    }
    const Matrix d_pre = d_hidden.array() * (1.0 - c.hidden.array().square());
    g.w1 = c.input.transpose() * d_pre;
    g.b1 = d_pre.colwise().sum();
    return g;
}

ActionEncoderParams ActionEncoderParams::init(const EncoderDims& d, Index num_classes, Rng& rng) {
    ActionEncoderParams p;
    p.w = uniform(d.input_dim, d.hidden, glorot(d.input_dim, d.hidden), rng);
    p.b = Matrix::Zero(1, d.hidden);
    p.wc = uniform(d.hidden, num_classes, glorot(d.hidden, num_classes), rng);
    p.bc = Matrix::Zero(1, num_classes);
    return p;
}

Vector fe_logits(const ActionEncoderParams& p, const Matrix& video, ActionEncoderCache* cache) {
    require_cols(video, p.w.rows(), "fe_forward");
    if (video.rows() < 1) throw DimensionError("fe_forward: empty video");
    Matrix hidden = ((video * p.w).rowwise() + p.b.row(0)).array().tanh().matrix();
    Vector pooled = hidden.colwise().mean().transpose();
    Vector logits = (pooled.transpose() * p.wc + p.bc).transpose();
    if (cache) {
        cache->input = video;
        cache->hidden = std::move(hidden);
        cache->pooled = std::move(pooled);
    }
    return logits;
}

Vector fe_forward(const ActionEncoderParams& p, const Matrix& video) { return softmax(fe_logits(p, video)); }

ActionEncoderParams fe_backward(const ActionEncoderParams& p, const ActionEncoderCache& c, const Vector& grad_logits) {
    ActionEncoderParams g;
    g.wc = c.pooled * grad_logits.transpose();
    g.bc = grad_logits.transpose();
    const Vector d_pooled = p.wc * grad_logits;
    const double inv_t = 1.0 / static_cast<double>(c.hidden.rows());
    Matrix d_pre = (1.0 - c.hidden.array().square()).matrix();
    d_pre.array().rowwise() *= (d_pooled.transpose().array() * inv_t);
    g.w = c.input.transpose() * d_pre;
    g.b = d_pre.colwise().sum();
    return g;
}

ScoreNetParams ScoreNetParams::init(const EncoderDims& d, Rng& rng) {
    ScoreNetParams p;
    // Soft-DTW distances of T-frame sequences lie roughly in [0, 2T]. Unit h
    // switches around distance 2T (h + 0.5) / H_s, with a transition width of
    // about T / 4.
    const double t = static_cast<double>(std::max<Index>(d.frames, 1));
    p.w1 = Matrix::Constant(1, d.score_hidden, 4.0 / t);
    p.b1.resize(1, d.score_hidden);
    for (Index h = 0; h < d.score_hidden; ++h)
        p.b1(0, h) = -p.w1(0, h) * 2.0 * t * (static_cast<double>(h) + 0.5) / static_cast<double>(d.score_hidden);
    p.w2 = uniform(d.score_hidden, 1, glorot(d.score_hidden, 1), rng);
    p.b2 = Matrix::Zero(1, 1);
    return p;
}

double score_logit(const ScoreNetParams& p, double distance) {
    if (!std::isfinite(distance)) throw DomainError("score network input must be finite");
    double s = p.b2(0, 0);
    for (Index h = 0; h < p.w1.cols(); ++h) s += p.w2(h, 0) * std::tanh(p.w1(0, h) * distance + p.b1(0, h));
    return s;
}

ScoreGradient score_backward(const ScoreNetParams& p, double distance, double upstream) {
    ScoreGradient g;
    g.params = zeros_like(p);
    g.params.b2(0, 0) = upstream;
    for (Index h = 0; h < p.w1.cols(); ++h) {
        const double a = std::tanh(p.w1(0, h) * distance + p.b1(0, h));
        g.params.w2(h, 0) = upstream * a;
        const double dz = upstream * p.w2(h, 0) * (1.0 - a * a);
        g.params.w1(0, h) = dz * distance;
        g.params.b1(0, h) = dz;
        g.d_distance += dz * p.w1(0, h);
    }
    return g;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double alignability_score(const ScoreNetParams& p, double distance) { return sigmoid(score_logit(p, distance)); }

ProjectionParams ProjectionParams::init(const EncoderDims& d, Rng& rng) {
    ProjectionParams p;
    p.w1 = uniform(d.embed_dim, d.embed_dim, glorot(d.embed_dim, d.embed_dim), rng);
    p.b1 = Matrix::Zero(1, d.embed_dim);
    p.w2 = uniform(d.embed_dim, d.embed_dim, glorot(d.embed_dim, d.embed_dim), rng);
    p.b2 = Matrix::Zero(1, d.embed_dim);
    return p;
}

Matrix project(const ProjectionParams& p, const Matrix& emb, ProjectionCache* cache) {
    require_cols(emb, p.w1.rows(), "project");
    Matrix hidden = ((emb * p.w1).rowwise() + p.b1.row(0)).array().tanh().matrix();
    Matrix out = (hidden * p.w2).rowwise() + p.b2.row(0);
    if (cache) {
        cache->input = emb;
        cache->hidden = std::move(hidden);
    }
    return out;
}

ProjectionGradient project_backward(const ProjectionParams& p, const ProjectionCache& c, const Matrix& grad_out) {
    ProjectionGradient g;
    g.params.w2 = c.hidden.transpose() * grad_out;
    g.params.b2 = grad_out.colwise().sum();
    const Matrix d_pre = (grad_out * p.w2.transpose()).array() * (1.0 - c.hidden.array().square());
    g.params.w1 = c.input.transpose() * d_pre;
    g.params.b1 = d_pre.colwise().sum();
    g.d_input = d_pre * p.w1.transpose();
    return g;
}

Vector softmax(const Vector& logits) {
    if (logits.size() == 0) throw DomainError("softmax of an empty vector");
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

double cross_entropy(const Vector& probs, const Vector& one_hot) {
    if (probs.size() != one_hot.size()) throw DimensionError("cross_entropy: size mismatch");
    double loss = 0.0;
    int ones = 0;
    for (Index c = 0; c < probs.size(); ++c) {
        if (one_hot(c) == 1.0) {
            ++ones;
            loss -= std::log(probs(c));
        } else if (one_hot(c) != 0.0) {
            throw DomainError("cross_entropy: target is not one-hot");
        }
    }
    if (ones != 1) throw DomainError("cross_entropy: target is not one-hot");
    return loss;
}

CrossEntropyResult cross_entropy_logits(const Vector& logits, Index label) {
    if (label < 0 || label >= logits.size()) throw DomainError("cross_entropy: label out of range");
    CrossEntropyResult r;
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    r.loss = lse - logits(label);
    r.probs = (logits.array() - lse).exp().matrix();
    r.grad_logits = r.probs;
    r.grad_logits(label) -= 1.0;
    return r;
}

double gradient_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const LossWithGradient& loss_fn, std::vector<double> x, double step, double tol) {
    std::vector<double> grad(x.size(), 0.0), grad_again(x.size(), 0.0), scratch(x.size(), 0.0);
    const double f0 = loss_fn(x, grad);
    const double f1 = loss_fn(x, grad_again);
    if (f0 != f1 || grad != grad_again)
        throw DeterminismError("loss function is not deterministic: repeated evaluation differs");

    GradCheckReport report;
    report.checked = x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        const double h = step * std::max(1.0, std::abs(orig));
        auto at = [&](double offset) {
            x[i] = orig + offset;
            return loss_fn(x, scratch);
        };
        // Five-point central stencil, O(h^4) truncation error.
        const double numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        x[i] = orig;
        const double err = gradient_rel_error(grad[i], numeric);
        // NaN sticks once seen.
        const bool worse = i == 0 || std::isnan(err) ||
                           (!std::isnan(report.max_rel_error) && err > report.max_rel_error);
        if (worse) {
            report.max_rel_error = err;
            report.worst_index = i;
            report.worst_analytic = grad[i];
            report.worst_numeric = numeric;
        }
    }
    report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error <= tol;
    return report;
}

}  // namespace fp
