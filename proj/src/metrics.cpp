#include "finepseudo/metrics.hpp"

#include "finepseudo/encoders.hpp"
#include "finepseudo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fp {

double verification_ap(std::span<const double> scores, std::span<const int> same) {
    if (scores.size() != same.size()) throw DimensionError("verification_ap: scores vs labels");
    const auto positives = static_cast<std::size_t>(std::count_if(same.begin(), same.end(), [](int s) { return s != 0; }));
    if (positives == 0 || positives == same.size())
        throw DomainError("verification_ap: need at least one positive and one negative pair");
    for (double s : scores)
        if (std::isnan(s)) throw DomainError("verification_ap: NaN score");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += same[order[j]] != 0 ? 1 : 0;
            ++j;
        }
        seen = j;
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(what) + ": sequences must have the same shape");
}

double vec_cosine_distance(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    return cosine_distance(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                           std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

}  // namespace

double cosine_mean_distance(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("cosine_mean_distance: feature dims differ");
    return vec_cosine_distance(a.colwise().mean(), b.colwise().mean());
}

double cosine_full_distance(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "cosine_full_distance");
    double s = 0.0;
    for (Index t = 0; t < a.rows(); ++t) s += vec_cosine_distance(a.row(t), b.row(t));
    return s / static_cast<double>(a.rows());
}

double cosine_4seg_distance(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "cosine_4seg_distance");
    if (a.rows() < 4) throw DomainError("cosine_4seg_distance: need at least 4 frames");
    double s = 0.0;
    for (Index k = 0; k < 4; ++k) {
        const Index lo = k * a.rows() / 4;
        const Index hi = (k + 1) * a.rows() / 4;
        s += vec_cosine_distance(a.middleRows(lo, hi - lo).colwise().mean(), b.middleRows(lo, hi - lo).colwise().mean());
    }
    return s;
}

std::vector<Index> nearest_frames(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("nearest_frames: feature dims differ");
    Matrix an = a, bn = b;
    for (Index t = 0; t < an.rows(); ++t) {
        const double n = an.row(t).norm();
        if (n <= 0.0) throw DomainError("nearest_frames: zero-norm frame");
        an.row(t) /= n;
    }
    for (Index t = 0; t < bn.rows(); ++t) {
        const double n = bn.row(t).norm();
        if (n <= 0.0) throw DomainError("nearest_frames: zero-norm frame");
        bn.row(t) /= n;
    }
    const Matrix sim = an * bn.transpose();
    std::vector<Index> out(static_cast<std::size_t>(a.rows()));
    for (Index t = 0; t < a.rows(); ++t) {
        Index best = 0;
        sim.row(t).maxCoeff(&best);
        out[static_cast<std::size_t>(t)] = best;
    }
    return out;
}

double kendalls_tau(std::span<const Index> matches) {
    const std::size_t n = matches.size();
    if (n < 2) throw DomainError("kendalls_tau: need at least 2 frames");
    long long score = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (matches[j] > matches[i]) ++score;
            else if (matches[j] < matches[i]) --score;
        }
    return static_cast<double>(score) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double kendalls_tau(const Matrix& emb_a, const Matrix& emb_b) {
    const auto m = nearest_frames(emb_a, emb_b);
    return kendalls_tau(m);
}

namespace {

struct ProbeParams {
    Matrix w;
    Matrix b;

    template <class F> void visit(F&& f) { f("w", w); f("b", b); }
    template <class F> void visit(F&& f) const { f("w", w); f("b", b); }
};

}  // namespace

double phase_probe_accuracy(std::span<const Matrix> embeddings, std::span<const std::vector<int>> phases,
                            const ProbeConfig& config, Rng& rng) {
    if (embeddings.size() != phases.size()) throw DimensionError("phase_probe_accuracy: embeddings vs phases");
    if (embeddings.size() < 2) throw DomainError("phase_probe_accuracy: need at least 2 videos");
    const Index dim = embeddings[0].cols();
    int classes = 0;
    for (std::size_t v = 0; v < embeddings.size(); ++v) {
        if (static_cast<std::size_t>(embeddings[v].rows()) != phases[v].size())
            throw DimensionError("phase_probe_accuracy: one phase id per frame required");
        if (embeddings[v].cols() != dim) throw DimensionError("phase_probe_accuracy: embedding dims differ");
        for (int p : phases[v]) {
            if (p < 0) throw DomainError("phase_probe_accuracy: negative phase id");
            classes = std::max(classes, p + 1);
        }
    }
    // Interleaved split: video i trains the probe when the running count
    // floor((i + 1) * f) steps up, so class-sorted inputs stay balanced.
    std::vector<bool> is_train(embeddings.size());
    std::size_t n_train = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const auto before = static_cast<long long>(std::floor(static_cast<double>(i) * config.train_fraction));
        const auto after = static_cast<long long>(std::floor(static_cast<double>(i + 1) * config.train_fraction));
        is_train[i] = after > before;
        n_train += is_train[i] ? 1 : 0;
    }
    if (n_train == 0 || n_train == embeddings.size())
        throw DomainError("phase_probe_accuracy: train fraction leaves one side empty");

    auto gather = [&](bool train, Matrix& x, std::vector<int>& y) {
        Index rows = 0;
        for (std::size_t v = 0; v < embeddings.size(); ++v)
            if (is_train[v] == train) rows += embeddings[v].rows();
        x.resize(rows, dim);
        y.clear();
        Index r = 0;
        for (std::size_t v = 0; v < embeddings.size(); ++v) {
            if (is_train[v] != train) continue;
            for (Index t = 0; t < embeddings[v].rows(); ++t, ++r) {
                const double n = embeddings[v].row(t).norm();
                x.row(r) = n > 0.0 ? Eigen::RowVectorXd(embeddings[v].row(t) / n) : Eigen::RowVectorXd(embeddings[v].row(t));
                y.push_back(phases[v][static_cast<std::size_t>(t)]);
            }
        }
    };
    Matrix xtr, xte;
    std::vector<int> ytr, yte;
    gather(true, xtr, ytr);
    gather(false, xte, yte);

    ProbeParams p{Matrix::Zero(dim, classes), Matrix::Zero(1, classes)};
    Adam<ProbeParams> opt(p);
    std::vector<std::size_t> order(ytr.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
            const std::size_t e = std::min(order.size(), s + config.batch_size);
            ProbeParams g = zeros_like(p);
            const double inv = 1.0 / static_cast<double>(e - s);
            for (std::size_t k = s; k < e; ++k) {
                const auto row = xtr.row(static_cast<Index>(order[k]));
                const Vector logits = (row * p.w + p.b).transpose();
                const CrossEntropyResult ce = cross_entropy_logits(logits, ytr[order[k]]);
                g.w.noalias() += inv * row.transpose() * ce.grad_logits.transpose();
                g.b += inv * ce.grad_logits.transpose();
            }
            opt.step(p, g, config.lr);
        }
    }
    std::size_t correct = 0;
    for (Index r = 0; r < xte.rows(); ++r) {
        const Eigen::RowVectorXd logits = xte.row(r) * p.w + p.b;
        Index best = 0;
        logits.maxCoeff(&best);
        if (best == yte[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(yte.size());
}

}  // namespace fp
