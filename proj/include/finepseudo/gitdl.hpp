#pragma once

#include "finepseudo/encoders.hpp"
#include "finepseudo/optim.hpp"

#include <functional>
#include <span>
#include <vector>

namespace fp {

/// Two views of one raw video: a sparse global clip (every 2nd frame, T
/// frames spanning 2T-1 raw frames) and a dense local clip (T consecutive
/// raw frames inside the global span). `common_ids` are the raw frame ids
/// present in both, ascending; `global_pos` / `local_pos` give their row
/// in each clip.
struct ClipPair {
    Matrix global_clip;
    Matrix local_clip;
    Index global_start = 0;
    Index local_start = 0;
    std::vector<Index> common_ids;
    std::vector<Index> global_pos;
    std::vector<Index> local_pos;
};

struct GitdlConfig {
    double temperature = 0.1;  // tau
    double kappa = 0.99;       // peak of the Gaussian prior
    double sigma = 0.2;        // width, in normalized time
    Index frames = 16;         // T
    int epochs = 20;
    std::size_t batch_size = 16;
    double lr = 3e-3;

    void validate() const;
};

/// Requires video.rows() >= 2T - 1, otherwise SamplingError.
ClipPair sample_global_local(const Matrix& video, Index frames, Rng& rng);
/// Deterministic variant for explicit start positions.
ClipPair make_clip_pair(const Matrix& video, Index frames, Index global_start, Index local_start);

/// Negative weight 1 - kappa * exp(-delta^2 / (2 sigma^2)) with
/// delta = (t1 - t2) / count. Positions are 1-based; t1 != t2.
double gaussian_weight(Index t1, Index t2, Index count, double kappa, double sigma);

struct GitdlLoss {
    double loss = 0.0;
    Matrix grad_global;
    Matrix grad_local;
};

/// Gaussian-weighted temporal distinctiveness loss over aligned rows of
/// projected global / local embeddings (count x F each). The denominator
/// runs over global negatives t2 != t1 only.
GitdlLoss gitdl_loss(const Matrix& global_emb, const Matrix& local_emb, const GitdlConfig& config);

struct GitdlBatchLoss {
    double loss = 0.0;
    AlignEncoderParams grad_encoder;
    ProjectionParams grad_projection;
};

/// Full forward/backward for a set of clip pairs (mean loss).
GitdlBatchLoss gitdl_batch_loss(const AlignEncoderParams& encoder, const ProjectionParams& projection,
                                std::span<const ClipPair> pairs, const GitdlConfig& config);

struct PretrainResult {
    std::vector<double> loss_curve;  // mean loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Trains f_A and g on unlabeled raw videos. Only signals are passed in, so
/// labels cannot leak into this stage.
PretrainResult pretrain(AlignEncoderParams& encoder, ProjectionParams& projection, std::span<const Matrix> unlabeled,
                        const GitdlConfig& config, int warmup_epochs, Rng& rng, const EpochCallback& on_epoch = {});

}  // namespace fp
