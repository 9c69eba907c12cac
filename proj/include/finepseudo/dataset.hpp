#pragma once

#include "finepseudo/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fp {

enum class Split { Labeled, Unlabeled, Test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One raw phase-structured sequence. `phases` holds the vocabulary id of
/// the phase active at each frame; `progress` rises strictly from 0 to 1.
struct SyntheticVideo {
    std::string id;
    Matrix signal;  // T_raw x F_in
    int label = 0;
    Split split = Split::Unlabeled;
    bool novel = false;
    std::vector<int> phases;
    std::vector<double> progress;
};

struct Dataset {
    Index feature_dim = 0;
    int num_classes = 0;  // known classes; novel classes use ids >= num_classes
    std::vector<SyntheticVideo> samples;

    std::vector<const SyntheticVideo*> split(Split s) const;
};

/// Directory layout: index.json plus one <id>.fpsq per sample.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace fp
