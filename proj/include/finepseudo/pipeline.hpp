#pragma once

#include "finepseudo/checkpoint.hpp"
#include "finepseudo/dataset.hpp"
#include "finepseudo/gitdl.hpp"
#include "finepseudo/metriclearn.hpp"
#include "finepseudo/pseudolabel.hpp"
#include "finepseudo/synthgen.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fp {

/// Every stage's settings. Defaults are the desk-scale preset; the "full"
/// preset raises epoch counts and iterations and lowers the learning rates.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string preset = "desk";
    unsigned threads = 0;  // 0 = hardware count
    SynthConfig synth;
    EncoderDims model;
    GitdlConfig gitdl;
    int warmup_epochs = 5;
    MetricLearnConfig metric;
    int labeled_epochs = 20;  // f_E cross-entropy epochs on the labeled split
    double action_lr = 1e-2;
    std::size_t action_batch = 8;
    SelfTrainConfig selftrain;

    void validate() const;
};

RunConfig preset_config(const std::string& name);

/// Applies a JSON document on top of `cfg`. Sections: "seed", "preset",
/// "threads", "synth", "model", "gitdl", "metric", "labeled", "selftrain".
/// A "preset" key resets to that preset before the other keys apply.
/// Unknown keys and wrong types raise ConfigError.
void apply_config_json(RunConfig& cfg, const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Command-line values that take precedence over any config file.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<PlMode> mode;
    bool open_world = false;
};

/// Defaults, then `file` (or `fallback` when no file is given and it
/// exists), then the overrides.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::optional<std::filesystem::path>& fallback, const ConfigOverrides& overrides);

/// JSON-lines metrics plus one CSV per phase ("<stem>_<phase>.csv").
/// A default-constructed log only keeps lines in memory.
class MetricsLog {
public:
    MetricsLog() = default;
    MetricsLog(const std::filesystem::path& dir, const std::string& stem, bool echo_stdout);

    void emit(const nlohmann::json& line);
    const std::vector<nlohmann::json>& lines() const { return lines_; }

private:
    std::filesystem::path dir_;
    std::string stem_;
    bool echo_ = false;
    std::unique_ptr<std::ofstream> jsonl_;
    std::map<std::string, std::unique_ptr<std::ofstream>> csv_;
    std::map<std::string, std::vector<std::string>> columns_;
    std::vector<nlohmann::json> lines_;
};

/// Splits resampled to T frames for the model stages.
struct StageData {
    int num_classes = 0;
    std::vector<Matrix> labeled_clips;
    std::vector<int> labeled_labels;
    std::vector<PoolSample> pool;  // unlabeled split, true class kept for statistics
    std::vector<Matrix> test_clips;
    std::vector<int> test_labels;
    std::vector<Matrix> unlabeled_raw;
    std::vector<const SyntheticVideo*> test_videos;
};

StageData prepare_stage_data(const Dataset& data, Index frames);

struct Models {
    AlignEncoderParams fa;
    AlignEncoderParams fa_pretrained;
    ProjectionParams g;
    ScoreNetParams fs;
    ActionEncoderParams fe;
    std::uint64_t version = 0;
};

struct PhaseMetrics {
    double kendall_tau = 0.0;
    double phase_probe = 0.0;
};

/// Kendall's tau averaged over same-class pairs and phase-probe accuracy,
/// both on full-length held-out videos.
PhaseMetrics evaluate_phase_metrics(const AlignEncoderParams& encoder, std::span<const SyntheticVideo* const> videos,
                                    std::uint64_t seed);

enum class DistanceKind { CosineMean, CosineFull, Cosine4Seg, SoftDtw, Alignability };
DistanceKind parse_distance(const std::string& name);
std::string to_string(DistanceKind d);

/// Pair verification AP over every pair of test clips. Baseline distances
/// use the pretrained encoder; Alignability uses the metric-learned f_A and
/// f_S.
double verification_ap_for(const Models& models, const StageData& data, DistanceKind kind, double gamma);

// In-memory stages. Each logs into `log`.
void pretrain_stage(const RunConfig& cfg, const StageData& data, Models& models, MetricsLog& log);
void labeled_stage(const RunConfig& cfg, const StageData& data, Models& models, MetricsLog& log);
std::vector<IterationMetrics> selftrain_stage(const RunConfig& cfg, const StageData& data, Models& models,
                                              MetricsLog& log);

// Checkpoint directory: manifest.json plus one <group>.bin per group.
void record_group(const std::filesystem::path& dir, const std::string& group, const std::string& file);
std::filesystem::path group_path(const std::filesystem::path& dir, const std::string& group);

template <class P>
void save_group(const std::filesystem::path& dir, const std::string& group, const P& params) {
    std::filesystem::create_directories(dir);
    save_params(params, group, dir / (group + ".bin"));
    record_group(dir, group, group + ".bin");
}

template <class P>
P load_group(const std::filesystem::path& dir, const std::string& group) {
    return load_params<P>(group_path(dir, group));
}

// File-based stages used by the command-line tool.
void run_synth(const RunConfig& cfg, const std::filesystem::path& out);
void run_pretrain(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& ckpt);
void run_train_labeled(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& ckpt);
void run_selftrain(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& ckpt);
double run_eval(const std::filesystem::path& data, const std::filesystem::path& ckpt);
double run_verify(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& ckpt,
                  DistanceKind kind);

}  // namespace fp
