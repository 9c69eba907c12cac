#pragma once

#include "finepseudo/encoders.hpp"
#include "finepseudo/optim.hpp"
#include "finepseudo/softdtw.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fp {

enum class MiningStrategy {
    AllNegatives,     // every (anchor, positive, negative) combination
    HardNegatives,    // negatives with an active hinge: d_neg - d_pos < margin
    HardestNegative,  // per (anchor, positive), the negative with minimal d_neg
    // Negatives with d_neg - d_pos > margin. Kept for experiments only: these
    // triplets never contribute to the hinge loss.
    InactiveHingeNegatives,
};

MiningStrategy parse_mining_strategy(const std::string& name);
std::string to_string(MiningStrategy s);

struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    double d_pos = 0.0;
    double d_neg = 0.0;
};

struct MetricLearnConfig {
    double margin = 0.1;
    double score_weight = 1.0;  // omega
    std::size_t batch_size = 32;
    std::size_t instances_per_class = 4;
    MiningStrategy strategy = MiningStrategy::HardNegatives;
    double gamma = 1e-3;
    int epochs = 20;
    double lr = 3e-3;
    double score_lr_scale = 30.0;  // f_S learning rate = score_lr_scale * lr
    bool freeze_input_layer = true;

    void validate() const;
};

/// Symmetric matrix of soft-DTW distances between every pair of sequences
/// (zero diagonal).
Matrix pairwise_softdtw(std::span<const FrameSequence> seqs, double gamma, unsigned threads = 0);

/// Mines triplets from a precomputed distance matrix. Every label present
/// must occur at least twice, otherwise ContractError.
std::vector<Triplet> mine_triplets(const Matrix& distances, std::span<const int> labels, MiningStrategy strategy,
                                   double margin);
std::vector<Triplet> mine_triplets(std::span<const FrameSequence> embeddings, std::span<const int> labels,
                                   double gamma, MiningStrategy strategy, double margin);

struct TripletLoss {
    double loss = 0.0;              // mean hinge over triplets
    std::vector<double> grad_pos;   // dL/d d_pos per triplet
    std::vector<double> grad_neg;   // dL/d d_neg per triplet
};

/// Mean over triplets of max(0, d_pos - d_neg + margin). Subgradient 0 at
/// the kink.
TripletLoss loss_at(std::span<const Triplet> triplets, double margin);

struct ScoreLoss {
    double loss = 0.0;
    std::vector<double> grad_scores;  // dL/dS per pair
};

/// Mean binary cross-entropy of alignability scores against same-class
/// targets (1 = same class).
ScoreLoss loss_score(std::span<const double> scores, std::span<const int> targets);

inline double loss_av(double l_at, double l_score, double score_weight) { return l_at + score_weight * l_score; }

/// f_A, f_S and a version stamp bumped on every encoder update.
struct AlignabilityModel {
    AlignEncoderParams encoder;
    ScoreNetParams score;
    std::uint64_t version = 0;
};

double pair_alignability(const ScoreNetParams& score, const FrameSequence& u, const FrameSequence& v, double gamma);

struct BatchLoss {
    double loss_at = 0.0;
    double loss_score = 0.0;
    double total = 0.0;
    std::size_t triplets = 0;
    std::size_t pairs = 0;
    AlignEncoderParams grad_encoder;
    ScoreNetParams grad_score;
};

/// L_AV on one batch of clips with analytic gradients for f_A and f_S.
BatchLoss alignability_batch_loss(const AlignabilityModel& model, std::span<const Matrix> clips,
                                  std::span<const int> labels, const MetricLearnConfig& config);

/// Groups sample indices into batches of at most `batch_size` where every
/// class present contributes at least two samples and every batch holds at
/// least two classes. Classes with a single sample are left out.
std::vector<std::vector<std::size_t>> class_balanced_batches(std::span<const int> labels, std::size_t batch_size,
                                                             std::size_t instances_per_class, Rng& rng);

struct MetricOptimizer {
    Adam<AlignEncoderParams> encoder;
    Adam<ScoreNetParams> score;

    explicit MetricOptimizer(const AlignabilityModel& m) : encoder(m.encoder), score(m.score) {}
};

struct MetricEpochStats {
    double loss_at = 0.0;
    double loss_score = 0.0;
    std::size_t batches = 0;
    std::size_t triplets = 0;
};

/// One pass over class-balanced batches of the labeled clips.
MetricEpochStats train_metric_epoch(AlignabilityModel& model, MetricOptimizer& opt, std::span<const Matrix> clips,
                                    std::span<const int> labels, const MetricLearnConfig& config, double lr, Rng& rng);

}  // namespace fp
