#pragma once

#include "finepseudo/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fp {

/// T x F matrix of per-frame embeddings (T >= 2, F >= 1, all entries finite).
class FrameSequence {
public:
    explicit FrameSequence(Matrix frames);

    Index length() const noexcept { return frames_.rows(); }
    Index dim() const noexcept { return frames_.cols(); }
    const Matrix& frames() const noexcept { return frames_; }
    std::span<const double> frame(Index t) const {
        return {frames_.data() + t * frames_.cols(), static_cast<std::size_t>(frames_.cols())};
    }

    friend bool operator==(const FrameSequence& a, const FrameSequence& b) {
        return a.frames_.rows() == b.frames_.rows() && a.frames_.cols() == b.frames_.cols() &&
               a.frames_ == b.frames_;
    }

private:
    Matrix frames_;
};

/// T_u x T_v matrix of pairwise frame costs, each in [0, 2].
using CostMatrix = Matrix;

/// 1 - <x,y> / (|x| |y|). Throws DomainError on a zero-norm input.
double cosine_distance(std::span<const double> x, std::span<const double> y);

/// Accumulates scale * d(cosine_distance)/dx into grad_x and likewise for y.
void cosine_distance_grad(std::span<const double> x, std::span<const double> y, double scale,
                          std::span<double> grad_x, std::span<double> grad_y);

CostMatrix cost_matrix(const FrameSequence& u, const FrameSequence& v);

/// Linear interpolation along time. Returns the input unchanged when
/// t_out equals the input length.
FrameSequence resample_to_length(const FrameSequence& seq, Index t_out);
Matrix resample_rows(const Matrix& rows, Index t_out);

// Binary sequence file: "FPSQ", u32 version (1), u32 T, u32 F, then T*F
// little-endian f32 values, frame-major. Values are stored as f32, so a
// round trip is bit-exact for sequences whose entries are f32-representable.
inline constexpr std::uint32_t kSequenceFormatVersion = 1;

std::vector<std::uint8_t> encode_sequence(const FrameSequence& seq);
FrameSequence decode_sequence(std::span<const std::uint8_t> bytes);

void save_sequence(const FrameSequence& seq, const std::filesystem::path& path);
FrameSequence load_sequence(const std::filesystem::path& path);

/// Rounds every entry to the nearest f32, i.e. what a save/load cycle yields.
Matrix quantize_f32(const Matrix& m);

}  // namespace fp
