#pragma once

#include "finepseudo/params.hpp"
#include "finepseudo/seqcore.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fp {

struct EncoderDims {
    Index input_dim = 12;    // F_in
    Index hidden = 32;       // H
    Index embed_dim = 16;    // F_out
    Index score_hidden = 16; // H_s
    Index frames = 16;       // T
};

/// Frame-wise alignability encoder: affine + tanh, width-3 depthwise
/// temporal mixing (zero padded), affine.
struct AlignEncoderParams {
    Matrix w1;      // F_in x H
    Matrix b1;      // 1 x H
    Matrix kernel;  // 3 x H, rows are taps at t-1, t, t+1
    Matrix w2;      // H x F_out
    Matrix b2;      // 1 x F_out

    static AlignEncoderParams init(const EncoderDims& dims, Rng& rng);

    template <class F> void visit(F&& f) { f("w1", w1); f("b1", b1); f("kernel", kernel); f("w2", w2); f("b2", b2); }
    template <class F> void visit(F&& f) const { f("w1", w1); f("b1", b1); f("kernel", kernel); f("w2", w2); f("b2", b2); }
};

struct AlignEncoderCache {
    Matrix input;
    Matrix hidden;  // tanh output, T x H
    Matrix mixed;   // after temporal mixing, T x H
};

Matrix fa_forward(const AlignEncoderParams& p, const Matrix& video, AlignEncoderCache* cache = nullptr);
FrameSequence fa_embed(const AlignEncoderParams& p, const Matrix& video);
AlignEncoderParams fa_backward(const AlignEncoderParams& p, const AlignEncoderCache& cache, const Matrix& grad_out);

/// Pooled action encoder with a linear classification head.
struct ActionEncoderParams {
    Matrix w;   // F_in x H
    Matrix b;   // 1 x H
    Matrix wc;  // H x N_c
    Matrix bc;  // 1 x N_c

    static ActionEncoderParams init(const EncoderDims& dims, Index num_classes, Rng& rng);
    Index num_classes() const { return wc.cols(); }

    template <class F> void visit(F&& f) { f("w", w); f("b", b); f("wc", wc); f("bc", bc); }
    template <class F> void visit(F&& f) const { f("w", w); f("b", b); f("wc", wc); f("bc", bc); }
};

struct ActionEncoderCache {
    Matrix input;
    Matrix hidden;  // T x H
    Vector pooled;  // H
};

Vector fe_logits(const ActionEncoderParams& p, const Matrix& video, ActionEncoderCache* cache = nullptr);
/// Class distribution p_E.
Vector fe_forward(const ActionEncoderParams& p, const Matrix& video);
ActionEncoderParams fe_backward(const ActionEncoderParams& p, const ActionEncoderCache& cache, const Vector& grad_logits);

/// Scalar score network f_S: 1 -> H_s (tanh) -> 1.
struct ScoreNetParams {
    Matrix w1;  // 1 x H_s
    Matrix b1;  // 1 x H_s
    Matrix w2;  // H_s x 1
    Matrix b2;  // 1 x 1

    static ScoreNetParams init(const EncoderDims& dims, Rng& rng);

    template <class F> void visit(F&& f) { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
    template <class F> void visit(F&& f) const { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
};

double score_logit(const ScoreNetParams& p, double distance);

struct ScoreGradient {
    ScoreNetParams params;
    double d_distance = 0.0;
};

/// Gradient of upstream * f_S(distance).
ScoreGradient score_backward(const ScoreNetParams& p, double distance, double upstream);

double sigmoid(double x);

/// S = sigmoid(f_S(D)), in (0, 1).
double alignability_score(const ScoreNetParams& p, double distance);

/// Two-layer projection head g used only by the contrastive pretraining loss.
struct ProjectionParams {
    Matrix w1;  // F_out x F_out
    Matrix b1;
    Matrix w2;
    Matrix b2;

    static ProjectionParams init(const EncoderDims& dims, Rng& rng);

    template <class F> void visit(F&& f) { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
    template <class F> void visit(F&& f) const { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
};

struct ProjectionCache {
    Matrix input;
    Matrix hidden;
};

Matrix project(const ProjectionParams& p, const Matrix& emb, ProjectionCache* cache = nullptr);

struct ProjectionGradient {
    ProjectionParams params;
    Matrix d_input;
};

ProjectionGradient project_backward(const ProjectionParams& p, const ProjectionCache& cache, const Matrix& grad_out);

Vector softmax(const Vector& logits);

/// -sum_c y_c log p_c for a one-hot y.
double cross_entropy(const Vector& probs, const Vector& one_hot);

struct CrossEntropyResult {
    double loss = 0.0;
    Vector probs;
    Vector grad_logits;  // probs - one_hot
};

CrossEntropyResult cross_entropy_logits(const Vector& logits, Index label);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

/// Evaluates the loss at x and writes the analytic gradient into grad
/// (same length as x).
using LossWithGradient = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    bool passed = true;
};

/// Relative error used by every gradient suite: |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-3;
double gradient_rel_error(double analytic, double numeric);

/// Compares the analytic gradient with five-point central differences using step
/// `step * max(1, |x_i|)` for every coordinate. Throws DeterminismError if
/// two evaluations at the same point disagree.
GradCheckReport finite_diff_check(const LossWithGradient& loss_fn, std::vector<double> x, double step, double tol);

}  // namespace fp
