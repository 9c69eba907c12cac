#pragma once

#include "finepseudo/encoders.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fp {

struct GradSuiteResult {
    std::string name;
    int seeds = 0;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    bool passed = true;
};

struct GradSuiteOptions {
    int seeds = 10;
    double step = 1e-4;
    double tol = 1e-4;
    std::uint64_t base_seed = 0;
};

/// softdtw-cost, softdtw-embed, fa, fe, fs, g, loss-at, loss-score,
/// loss-ce, loss-gitdl, loss-av.
const std::vector<std::string>& gradcheck_suite_names();

/// Throws ConfigError for an unknown suite name.
GradSuiteResult run_gradcheck_suite(const std::string& name, const GradSuiteOptions& options = {});

}  // namespace fp
