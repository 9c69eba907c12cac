#include "finepseudo/gitdl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fp {

void GitdlConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("gitdl: temperature must be > 0");
    if (!(kappa >= 0.0 && kappa < 1.0)) throw ConfigError("gitdl: kappa must lie in [0, 1)");
    if (!(sigma > 0.0)) throw ConfigError("gitdl: sigma must be > 0");
    if (frames < 2) throw ConfigError("gitdl: clip length must be >= 2");
    if (epochs < 0) throw ConfigError("gitdl: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("gitdl: batch size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("gitdl: learning rate must be > 0");
}

ClipPair make_clip_pair(const Matrix& video, Index frames, Index global_start, Index local_start) {
    const Index span = 2 * frames - 1;
    if (video.rows() < span)
        throw SamplingError("video has " + std::to_string(video.rows()) + " frames, global clip needs " +
                            std::to_string(span));
    if (global_start < 0 || global_start + span > video.rows())
        throw SamplingError("global clip start out of range");
    if (local_start < global_start || local_start + frames > global_start + span)
        throw SamplingError("local clip must lie inside the global clip span");

    ClipPair p;
    p.global_start = global_start;
    p.local_start = local_start;
    p.global_clip.resize(frames, video.cols());
    p.local_clip.resize(frames, video.cols());
    for (Index k = 0; k < frames; ++k) {
        p.global_clip.row(k) = video.row(global_start + 2 * k);
        p.local_clip.row(k) = video.row(local_start + k);
    }
    for (Index k = 0; k < frames; ++k) {
        const Index id = local_start + k;
        if ((id - global_start) % 2 == 0) {
            p.common_ids.push_back(id);
            p.global_pos.push_back((id - global_start) / 2);
            p.local_pos.push_back(k);
        }
    }
    return p;
}

ClipPair sample_global_local(const Matrix& video, Index frames, Rng& rng) {
    if (frames < 2) throw SamplingError("clip length must be >= 2");
    const Index span = 2 * frames - 1;
    if (video.rows() < span)
        throw SamplingError("video has " + std::to_string(video.rows()) + " frames, global clip needs " +
                            std::to_string(span));
    std::uniform_int_distribution<Index> g(0, video.rows() - span);
    const Index gs = g(rng);
    std::uniform_int_distribution<Index> l(gs, gs + span - frames);
    const Index ls = l(rng);
    return make_clip_pair(video, frames, gs, ls);
}

double gaussian_weight(Index t1, Index t2, Index count, double kappa, double sigma) {
    if (t1 == t2) throw DomainError("gaussian_weight: t1 == t2 is the positive, not a negative");
    if (count < 1) throw DomainError("gaussian_weight: count must be >= 1");
    const double delta = static_cast<double>(t1 - t2) / static_cast<double>(count);
    return 1.0 - kappa * std::exp(-delta * delta / (2.0 * sigma * sigma));
}

GitdlLoss gitdl_loss(const Matrix& global_emb, const Matrix& local_emb, const GitdlConfig& config) {
    const Index n = global_emb.rows();
    if (n < 2) throw DomainError("gitdl_loss: need at least 2 common frames");
    if (local_emb.rows() != n || local_emb.cols() != global_emb.cols())
        throw DimensionError("gitdl_loss: global and local embeddings must have the same shape");
    const double tau = config.temperature;

    Vector gn(n), ln(n);
    for (Index t = 0; t < n; ++t) {
        gn(t) = global_emb.row(t).norm();
        ln(t) = local_emb.row(t).norm();
        if (gn(t) <= 0.0 || ln(t) <= 0.0) throw DomainError("gitdl_loss: zero-norm embedding row");
    }
    const Matrix cos = (local_emb * global_emb.transpose()).array() / (ln * gn.transpose()).array();

    // d loss / d cos(l_a, g_b)
    Matrix dcos = Matrix::Zero(n, n);
    GitdlLoss out;
    for (Index a = 0; a < n; ++a) {
        // log sum_{b != a} w_ab exp(cos_ab / tau), around its max exponent
        double m = -std::numeric_limits<double>::infinity();
        std::vector<double> z(static_cast<std::size_t>(n), 0.0);
        for (Index b = 0; b < n; ++b) {
            if (b == a) continue;
            const double w = gaussian_weight(a + 1, b + 1, n, config.kappa, config.sigma);
            z[static_cast<std::size_t>(b)] = std::log(w) + cos(a, b) / tau;
            m = std::max(m, z[static_cast<std::size_t>(b)]);
        }
        double s = 0.0;
        for (Index b = 0; b < n; ++b)
            if (b != a) s += std::exp(z[static_cast<std::size_t>(b)] - m);
        const double lse = m + std::log(s);
        out.loss += -cos(a, a) / tau + lse;
        dcos(a, a) -= 1.0 / tau;
        for (Index b = 0; b < n; ++b)
            if (b != a) dcos(a, b) += std::exp(z[static_cast<std::size_t>(b)] - lse) / tau;
    }

    // cos_ab = <l_a, g_b> / (|l_a| |g_b|)
    out.grad_local = Matrix::Zero(n, local_emb.cols());
    out.grad_global = Matrix::Zero(n, global_emb.cols());
    for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) {
            const double d = dcos(a, b);
            if (d == 0.0) continue;
            const double inv = 1.0 / (ln(a) * gn(b));
            out.grad_local.row(a) += d * (global_emb.row(b) * inv - cos(a, b) * local_emb.row(a) / (ln(a) * ln(a)));
            out.grad_global.row(b) += d * (local_emb.row(a) * inv - cos(a, b) * global_emb.row(b) / (gn(b) * gn(b)));
        }
    }
    return out;
}

GitdlBatchLoss gitdl_batch_loss(const AlignEncoderParams& encoder, const ProjectionParams& projection,
                                std::span<const ClipPair> pairs, const GitdlConfig& config) {
    GitdlBatchLoss out;
    out.grad_encoder = zeros_like(encoder);
    out.grad_projection = zeros_like(projection);
    if (pairs.empty()) return out;
    const double inv = 1.0 / static_cast<double>(pairs.size());

    for (const ClipPair& pair : pairs) {
        AlignEncoderCache gc, lc;
        ProjectionCache gpc, lpc;
        const Matrix gz = project(projection, fa_forward(encoder, pair.global_clip, &gc), &gpc);
        const Matrix lz = project(projection, fa_forward(encoder, pair.local_clip, &lc), &lpc);

        const Index n = static_cast<Index>(pair.common_ids.size());
        Matrix gsub(n, gz.cols()), lsub(n, lz.cols());
        for (Index k = 0; k < n; ++k) {
            gsub.row(k) = gz.row(pair.global_pos[static_cast<std::size_t>(k)]);
            lsub.row(k) = lz.row(pair.local_pos[static_cast<std::size_t>(k)]);
        }
        const GitdlLoss l = gitdl_loss(gsub, lsub, config);
        out.loss += inv * l.loss;

        Matrix dgz = Matrix::Zero(gz.rows(), gz.cols());
        Matrix dlz = Matrix::Zero(lz.rows(), lz.cols());
        for (Index k = 0; k < n; ++k) {
            dgz.row(pair.global_pos[static_cast<std::size_t>(k)]) = inv * l.grad_global.row(k);
            dlz.row(pair.local_pos[static_cast<std::size_t>(k)]) = inv * l.grad_local.row(k);
        }
        const ProjectionGradient gpg = project_backward(projection, gpc, dgz);
        const ProjectionGradient lpg = project_backward(projection, lpc, dlz);
        add_scaled(out.grad_projection, gpg.params, 1.0);
        add_scaled(out.grad_projection, lpg.params, 1.0);
        add_scaled(out.grad_encoder, fa_backward(encoder, gc, gpg.d_input), 1.0);
        add_scaled(out.grad_encoder, fa_backward(encoder, lc, lpg.d_input), 1.0);
    }
    return out;
}

PretrainResult pretrain(AlignEncoderParams& encoder, ProjectionParams& projection, std::span<const Matrix> unlabeled,
                        const GitdlConfig& config, int warmup_epochs, Rng& rng, const EpochCallback& on_epoch) {
    config.validate();
    if (unlabeled.empty()) throw ConfigError("pretraining needs a non-empty unlabeled set");
    for (const Matrix& v : unlabeled)
        if (v.rows() < 2 * config.frames - 1)
            throw SamplingError("unlabeled video with " + std::to_string(v.rows()) + " frames is too short for clip length " +
                                std::to_string(config.frames));

    Adam<AlignEncoderParams> enc_opt(encoder);
    Adam<ProjectionParams> proj_opt(projection);
    PretrainResult result;
    std::vector<std::size_t> order(unlabeled.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = scheduled_lr(config.lr, epoch, config.epochs, warmup_epochs);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
            const std::size_t e = std::min(order.size(), s + config.batch_size);
            std::vector<ClipPair> pairs;
            for (std::size_t k = s; k < e; ++k) pairs.push_back(sample_global_local(unlabeled[order[k]], config.frames, rng));
            const GitdlBatchLoss bl = gitdl_batch_loss(encoder, projection, pairs, config);
            enc_opt.step(encoder, bl.grad_encoder, lr);
            proj_opt.step(projection, bl.grad_projection, lr);
            total += bl.loss;
            ++batches;
        }
        const double mean = batches ? total / static_cast<double>(batches) : 0.0;
        result.loss_curve.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    return result;
}

}  // namespace fp
