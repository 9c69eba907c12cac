#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fp {

// Frame-major storage: row t is frame t.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& m) : Error("domain", m) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct SamplingError : Error {
    explicit SamplingError(const std::string& m) : Error("sampling", m) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& m) : Error("contract", m) {}
};
struct ConsistencyError : Error {
    explicit ConsistencyError(const std::string& m) : Error("consistency", m) {}
};
struct DeterminismError : Error {
    explicit DeterminismError(const std::string& m) : Error("determinism", m) {}
};
struct GenerationError : Error {
    explicit GenerationError(const std::string& m) : Error("generation", m) {}
};

class FormatError : public Error {
public:
    FormatError(const std::string& m, std::uint64_t offset)
        : Error("format", m + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

using Rng = std::mt19937_64;

/// Child stream of a root seed, keyed by name ("synth", "init", "batch",
/// "gallery", "triplet", ...). Streams are independent of each other, so
/// adding draws to one stage never perturbs another.
Rng make_stream(std::uint64_t root_seed, std::string_view name);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results into per-index slots so the
/// outcome does not depend on the thread count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Process-wide default for parallel_for callers that do not pass a count.
unsigned default_threads();
void set_default_threads(unsigned threads);

}  // namespace fp
