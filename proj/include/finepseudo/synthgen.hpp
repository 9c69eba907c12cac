#pragma once

#include "finepseudo/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fp {

struct SynthConfig {
    int num_known = 8;
    int num_novel = 2;
    int phases_per_class = 4;  // K
    int vocab_size = 10;       // P
    Index feature_dim = 12;    // F_in
    Index min_frames = 40;
    Index max_frames = 64;
    Index min_phase_frames = 3;
    double noise_std = 0.1;
    int samples_per_class = 60;
    double labeled_fraction = 0.1;
    double test_fraction = 0.2;
    bool open_world = false;  // emit novel classes into the unlabeled split
    double min_angle_deg = 30.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// P unit-norm prototypes (rows), pairwise angle >= min_angle_deg.
struct PhaseVocabulary {
    Matrix prototypes;
};

PhaseVocabulary make_vocabulary(int size, Index dim, double min_angle_deg, Rng& rng);

struct ClassSpec {
    std::vector<int> phases;  // vocabulary ids, in temporal order
    bool novel = false;
};

/// Known classes come in sibling pairs that differ in exactly one phase
/// slot (the replacement is the vocabulary entry closest to the original).
/// All known classes use distinct phase multisets. Novel classes are
/// reorderings of a known class's phases.
std::vector<ClassSpec> make_class_specs(const SynthConfig& config, const PhaseVocabulary& vocab, Rng& rng);

/// Per-instance phase durations (each >= min_phase_frames) summing to frames.
std::vector<Index> draw_durations(Index frames, int phases, Index min_phase_frames, Rng& rng);

SyntheticVideo render_video(const ClassSpec& spec, const PhaseVocabulary& vocab, Index frames, double noise_std,
                            Index min_phase_frames, Rng& rng);

struct GeneratedData {
    Dataset dataset;
    PhaseVocabulary vocabulary;
    std::vector<ClassSpec> classes;
};

GeneratedData generate(const SynthConfig& config);
void generate_dataset(const SynthConfig& config, const std::filesystem::path& dir);

}  // namespace fp
