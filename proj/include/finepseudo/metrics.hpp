#pragma once

#include "finepseudo/seqcore.hpp"

#include <span>
#include <string>
#include <vector>

namespace fp {

/// Step-wise average precision of a ranking by descending score. Tied
/// scores form one threshold step. `same` holds 1 for positive pairs.
/// Needs at least one positive and one negative.
double verification_ap(std::span<const double> scores, std::span<const int> same);

// Baseline pair distances between embedding sequences of equal length.
/// Cosine distance of the temporal means.
double cosine_mean_distance(const Matrix& a, const Matrix& b);
/// Mean per-timestamp cosine distance (no alignment).
double cosine_full_distance(const Matrix& a, const Matrix& b);
/// Sum of cosine distances between the means of four equal temporal segments.
double cosine_4seg_distance(const Matrix& a, const Matrix& b);

/// Index of the nearest frame of b (cosine similarity) for every frame of a.
std::vector<Index> nearest_frames(const Matrix& a, const Matrix& b);

/// (concordant - discordant) / (n (n - 1) / 2) over all pairs of the
/// sequence; equal values count as neither.
double kendalls_tau(std::span<const Index> matches);
double kendalls_tau(const Matrix& emb_a, const Matrix& emb_b);

struct ProbeConfig {
    int epochs = 50;
    double lr = 1e-2;
    std::size_t batch_size = 64;
    double train_fraction = 0.5;
};

/// Linear softmax probe predicting per-frame phase ids from L2-normalized
/// frame embeddings. An interleaved `train_fraction` of the videos trains
/// the probe, the rest are scored. Returns frame accuracy on the held-out
/// videos.
double phase_probe_accuracy(std::span<const Matrix> embeddings, std::span<const std::vector<int>> phases,
                            const ProbeConfig& config, Rng& rng);

}  // namespace fp
