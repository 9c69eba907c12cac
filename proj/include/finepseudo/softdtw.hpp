#pragma once

#include "finepseudo/seqcore.hpp"

#include <span>

namespace fp {

/// Finite encoding of the +infinity border of the DP table. Backward passes
/// skip border cells instead of exponentiating through them.
inline constexpr double kBorder = 1e30;

/// Forward DP of soft-DTW. `r_table` is (T_u + 2) x (T_v + 2); cell (i, j)
/// for 1 <= i <= T_u, 1 <= j <= T_v holds the soft-min cost of aligning the
/// first i frames of u with the first j frames of v. Row 0 and column 0
/// are the boundary (r(0,0) = 0, the rest kBorder); the trailing row and
/// column are kBorder padding.
struct AlignmentResult {
    double distance = 0.0;
    Matrix r_table;
    double gamma = 0.0;
};

/// dD/dC, shape T_u x T_v.
using CostGradient = Matrix;

/// -gamma * log(sum exp(-v / gamma)), evaluated around min(v).
double softmin(std::span<const double> values, double gamma);

AlignmentResult softdtw_forward(const CostMatrix& cost, double gamma);

/// Classic DTW with the same three moves (down, right, diagonal).
double hard_dtw(const CostMatrix& cost);

CostGradient softdtw_grad_cost(const AlignmentResult& result, const CostMatrix& cost);

struct EmbeddingGradient {
    double distance = 0.0;
    Matrix grad_u;
    Matrix grad_v;
};

/// Soft-DTW distance of the cosine cost matrix and its gradient with
/// respect to every entry of u and v.
EmbeddingGradient softdtw_grad_embeddings(const FrameSequence& u, const FrameSequence& v, double gamma);

/// Convenience: soft-DTW distance over the cosine cost matrix.
double softdtw_distance(const FrameSequence& u, const FrameSequence& v, double gamma);

/// Adds upstream * dD/du and upstream * dD/dv into grad_u / grad_v.
double softdtw_backprop(const FrameSequence& u, const FrameSequence& v, double gamma, double upstream,
                        Matrix& grad_u, Matrix& grad_v);

}  // namespace fp
