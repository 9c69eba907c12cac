#pragma once

#include "finepseudo/metriclearn.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fp {

enum class PlMode { ConfidenceOnly, Verification, Collaborative };

PlMode parse_pl_mode(const std::string& name);  // "confidence", "verification", "collaborative"
std::string to_string(PlMode m);

/// Per-class labeled embeddings scored against unlabeled samples, stamped
/// with the encoder version that produced them.
struct Gallery {
    std::vector<std::vector<FrameSequence>> per_class;
    std::uint64_t version = 0;

    int num_classes() const { return static_cast<int>(per_class.size()); }
};

/// Embeds min(rho_cap, class size) labeled clips per class, sampled without
/// replacement. Every class in [0, num_classes) must have a sample.
Gallery build_gallery(std::span<const Matrix> clips, std::span<const int> labels, int num_classes,
                      const AlignabilityModel& model, std::size_t rho_cap, Rng& rng);

/// Mean alignability score of u against every class's gallery entries.
Vector classwise_alignability(const FrameSequence& u, const Gallery& gallery, const ScoreNetParams& score,
                              double gamma);

/// Softmax of class-wise alignability divided by tau.
Vector nonparametric_predict(const Vector& class_scores, double tau);

/// (p_a + p_e) / 2.
Vector fuse_predictions(const Vector& p_a, const Vector& p_e);

struct SelfTrainConfig {
    double confidence_threshold = 0.6;  // theta
    double tau = 0.1;
    double align_threshold = 0.6;
    int max_iter = 5;
    int epochs_per_iter = 5;
    PlMode mode = PlMode::Collaborative;
    bool open_world = false;
    std::size_t rho_cap = 15;

    void validate() const;
};

struct PoolSample {
    std::string id;
    Matrix clip;         // T x F_in
    int true_class = -1; // evaluation only; -1 when unknown
};

struct PseudoLabelRecord {
    std::string sample_id;
    Vector p_a;
    Vector p_e;
    Vector p;
    int predicted = 0;
    double confidence = 0.0;
    double max_alignability = 0.0;
    bool accepted = false;
    int true_class = -1;
};

struct PlStats {
    std::size_t count = 0;
    double accuracy = 0.0;  // over accepted records with a known true class
    std::vector<std::size_t> per_class;
};

PlStats pl_stats(std::span<const PseudoLabelRecord> records, int num_classes);

struct PseudoLabels {
    std::vector<PseudoLabelRecord> records;
    PlStats stats;
};

/// Scores every pool sample. Records follow pool order. Throws
/// ConsistencyError if the gallery was built from an older encoder.
PseudoLabels generate_pseudolabels(std::span<const PoolSample> pool, const ActionEncoderParams& action,
                                   const AlignabilityModel& align, const Gallery& gallery,
                                   const SelfTrainConfig& config, double gamma, unsigned threads = 0);

/// Argmax of p_E per clip, ties to the lowest class index.
int predict_class(const ActionEncoderParams& action, const Matrix& clip);
double evaluate_top1(const ActionEncoderParams& action, std::span<const Matrix> clips, std::span<const int> labels);

/// One cross-entropy pass over shuffled mini-batches; returns the mean loss.
double train_action_epoch(ActionEncoderParams& action, Adam<ActionEncoderParams>& opt, std::span<const Matrix> clips,
                          std::span<const int> labels, std::size_t batch_size, double lr, Rng& rng);

struct SelfTrainModels {
    ActionEncoderParams action;
    AlignabilityModel align;
};

struct IterationMetrics {
    int iter = 0;
    PlStats stats;
    double test_top1 = 0.0;
    std::vector<std::string> warnings;
};

struct SelfTrainData {
    std::span<const Matrix> labeled_clips;
    std::span<const int> labeled_labels;
    std::span<const PoolSample> pool;
    std::span<const Matrix> test_clips;
    std::span<const int> test_labels;
};

struct SelfTrainOptions {
    MetricLearnConfig metric;
    double action_lr = 1e-2;
    std::size_t action_batch = 8;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

using IterationCallback = std::function<void(const IterationMetrics&)>;

/// Each iteration rebuilds the gallery, relabels the full original pool,
/// trains f_E (cross-entropy) and f_A / f_S (alignability loss) on the
/// labeled set plus accepted pseudo-labels.
std::vector<IterationMetrics> self_train(SelfTrainModels& models, const SelfTrainData& data,
                                         const SelfTrainConfig& config, const SelfTrainOptions& options,
                                         const IterationCallback& on_iter = {});

}  // namespace fp
