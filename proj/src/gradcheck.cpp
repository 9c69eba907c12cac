#include "finepseudo/gradcheck.hpp"

#include "finepseudo/gitdl.hpp"
#include "finepseudo/metriclearn.hpp"
#include "finepseudo/softdtw.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fp {

namespace {

// Soft-DTW is checked at a moderate smoothing: at gamma = 1e-3 the soft-min
// is nearly piecewise linear and central differences straddle its kinks.
constexpr double kGamma = 0.1;

const EncoderDims kDims{4, 5, 3, 4, 5};

Matrix random_matrix(Index rows, Index cols, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

Matrix matrix_from(std::span<const double> x, std::size_t offset, Index rows, Index cols) {
    Matrix m(rows, cols);
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(offset),
              x.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(rows * cols)), m.data());
    return m;
}

void write_to(std::span<double> g, std::size_t offset, const Matrix& m) {
    std::copy(m.data(), m.data() + m.size(), g.begin() + static_cast<std::ptrdiff_t>(offset));
}

template <class P>
void write_params(std::span<double> g, std::size_t offset, const P& p) {
    const auto flat = flatten(p);
    std::copy(flat.begin(), flat.end(), g.begin() + static_cast<std::ptrdiff_t>(offset));
}

template <class P>
P params_from(const P& like, std::span<const double> x, std::size_t offset) {
    P p = like;
    unflatten(p, x.subspan(offset, param_count(like)));
    return p;
}

template <class P>
std::vector<double> concat(const std::vector<double>& a, const P& p) {
    std::vector<double> out = a;
    const auto f = flatten(p);
    out.insert(out.end(), f.begin(), f.end());
    return out;
}

std::vector<double> flat_matrix(const Matrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); }

using SeedCheck = GradCheckReport (*)(Rng& rng, const GradSuiteOptions& o);

GradCheckReport check_softdtw_cost(Rng& rng, const GradSuiteOptions& o) {
    std::uniform_int_distribution<Index> len(2, 5);
    const Index tu = len(rng), tv = len(rng);
    const Matrix c = random_matrix(tu, tv, 0.0, 2.0, rng);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const Matrix cost = matrix_from(x, 0, tu, tv);
            const AlignmentResult r = softdtw_forward(cost, kGamma);
            write_to(g, 0, softdtw_grad_cost(r, cost));
            return r.distance;
        },
        flat_matrix(c), o.step, o.tol);
}

GradCheckReport check_softdtw_embed(Rng& rng, const GradSuiteOptions& o) {
    std::uniform_int_distribution<Index> len(2, 5);
    const Index tu = len(rng), tv = len(rng), f = 3;
    std::vector<double> x0 = flat_matrix(random_matrix(tu, f, -1.0, 1.0, rng));
    const auto v0 = flat_matrix(random_matrix(tv, f, -1.0, 1.0, rng));
    x0.insert(x0.end(), v0.begin(), v0.end());
    const std::size_t off = static_cast<std::size_t>(tu * f);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const FrameSequence u(matrix_from(x, 0, tu, f)), v(matrix_from(x, off, tv, f));
            const EmbeddingGradient eg = softdtw_grad_embeddings(u, v, kGamma);
            write_to(g, 0, eg.grad_u);
            write_to(g, off, eg.grad_v);
            return eg.distance;
        },
        x0, o.step, o.tol);
}

GradCheckReport check_fa(Rng& rng, const GradSuiteOptions& o) {
    const AlignEncoderParams p0 = AlignEncoderParams::init(kDims, rng);
    const Matrix video = random_matrix(kDims.frames, kDims.input_dim, -1.0, 1.0, rng);
    const Matrix r = random_matrix(kDims.frames, kDims.embed_dim, -1.0, 1.0, rng);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const AlignEncoderParams p = params_from(p0, x, 0);
            AlignEncoderCache cache;
            const Matrix out = fa_forward(p, video, &cache);
            write_params(g, 0, fa_backward(p, cache, r));
            return (out.array() * r.array()).sum();
        },
        flatten(p0), o.step, o.tol);
}

GradCheckReport check_fe(Rng& rng, const GradSuiteOptions& o) {
    const ActionEncoderParams p0 = ActionEncoderParams::init(kDims, 3, rng);
    const Matrix video = random_matrix(kDims.frames, kDims.input_dim, -1.0, 1.0, rng);
    const Vector r = random_matrix(3, 1, -1.0, 1.0, rng);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const ActionEncoderParams p = params_from(p0, x, 0);
            ActionEncoderCache cache;
            const Vector logits = fe_logits(p, video, &cache);
            write_params(g, 0, fe_backward(p, cache, r));
            return logits.dot(r);
        },
        flatten(p0), o.step, o.tol);
}

GradCheckReport check_fs(Rng& rng, const GradSuiteOptions& o) {
    const ScoreNetParams p0 = ScoreNetParams::init(kDims, rng);
    std::uniform_real_distribution<double> ud(-2.0, 6.0), ur(-1.0, 1.0);
    const double d0 = ud(rng), r = ur(rng);
    std::vector<double> x0 = flatten(p0);
    x0.push_back(d0);
    const std::size_t off = param_count(p0);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const ScoreNetParams p = params_from(p0, x, 0);
            const ScoreGradient sg = score_backward(p, x[off], r);
            write_params(g, 0, sg.params);
            g[off] = sg.d_distance;
            return r * score_logit(p, x[off]);
        },
        x0, o.step, o.tol);
}

GradCheckReport check_g(Rng& rng, const GradSuiteOptions& o) {
    const ProjectionParams p0 = ProjectionParams::init(kDims, rng);
    const Matrix emb = random_matrix(kDims.frames, kDims.embed_dim, -1.0, 1.0, rng);
    const Matrix r = random_matrix(kDims.frames, kDims.embed_dim, -1.0, 1.0, rng);
    std::vector<double> x0 = flatten(p0);
    const auto ef = flat_matrix(emb);
    x0.insert(x0.end(), ef.begin(), ef.end());
    const std::size_t off = param_count(p0);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const ProjectionParams p = params_from(p0, x, 0);
            const Matrix in = matrix_from(x, off, kDims.frames, kDims.embed_dim);
            ProjectionCache cache;
            const Matrix out = project(p, in, &cache);
            const ProjectionGradient pg = project_backward(p, cache, r);
            write_params(g, 0, pg.params);
            write_to(g, off, pg.d_input);
            return (out.array() * r.array()).sum();
        },
        x0, o.step, o.tol);
}

// Two classes x two instances of random embeddings; triplets fixed at the
// base point so the loss is smooth around it.
GradCheckReport check_loss_at(Rng& rng, const GradSuiteOptions& o) {
    const Index t = 4, f = 3;
    const std::vector<int> labels{0, 0, 1, 1};
    std::vector<double> x0;
    for (int i = 0; i < 4; ++i) {
        const auto m = flat_matrix(random_matrix(t, f, -1.0, 1.0, rng));
        x0.insert(x0.end(), m.begin(), m.end());
    }
    const double margin = 0.5;
    auto embed = [&](std::span<const double> x) {
        std::vector<FrameSequence> e;
        for (std::size_t i = 0; i < 4; ++i) e.emplace_back(matrix_from(x, i * static_cast<std::size_t>(t * f), t, f));
        return e;
    };
    const auto base = embed(x0);
    const auto triplets = mine_triplets(pairwise_softdtw(base, kGamma, 1), labels, MiningStrategy::AllNegatives, margin);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const auto e = embed(x);
            std::vector<Triplet> tr = triplets;
            for (auto& tt : tr) {
                tt.d_pos = softdtw_distance(e[tt.anchor], e[tt.positive], kGamma);
                tt.d_neg = softdtw_distance(e[tt.anchor], e[tt.negative], kGamma);
            }
            const TripletLoss tl = loss_at(tr, margin);
            std::vector<Matrix> grads(4, Matrix::Zero(t, f));
            for (std::size_t k = 0; k < tr.size(); ++k) {
                softdtw_backprop(e[tr[k].anchor], e[tr[k].positive], kGamma, tl.grad_pos[k], grads[tr[k].anchor], grads[tr[k].positive]);
                softdtw_backprop(e[tr[k].anchor], e[tr[k].negative], kGamma, tl.grad_neg[k], grads[tr[k].anchor], grads[tr[k].negative]);
            }
            for (std::size_t i = 0; i < 4; ++i) write_to(g, i * static_cast<std::size_t>(t * f), grads[i]);
            return tl.loss;
        },
        x0, o.step, o.tol);
}

GradCheckReport check_loss_score(Rng& rng, const GradSuiteOptions& o) {
    const ScoreNetParams p0 = ScoreNetParams::init(kDims, rng);
    const std::size_t pairs = 5;
    std::uniform_real_distribution<double> ud(-1.0, 4.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<int> targets(pairs);
    std::vector<double> x0 = flatten(p0);
    const std::size_t off = x0.size();
    for (std::size_t k = 0; k < pairs; ++k) {
        x0.push_back(ud(rng));
        targets[k] = coin(rng) ? 1 : 0;
    }
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const ScoreNetParams p = params_from(p0, x, 0);
            std::vector<double> scores(pairs);
            for (std::size_t k = 0; k < pairs; ++k) scores[k] = alignability_score(p, x[off + k]);
            const ScoreLoss sl = loss_score(scores, targets);
            ScoreNetParams gp = zeros_like(p);
            for (std::size_t k = 0; k < pairs; ++k) {
                const double up = sl.grad_scores[k] * scores[k] * (1.0 - scores[k]);
                const ScoreGradient sg = score_backward(p, x[off + k], up);
                add_scaled(gp, sg.params, 1.0);
                g[off + k] = sg.d_distance;
            }
            write_params(g, 0, gp);
            return sl.loss;
        },
        x0, o.step, o.tol);
}

GradCheckReport check_loss_ce(Rng& rng, const GradSuiteOptions& o) {
    const Index classes = 4;
    const ActionEncoderParams p0 = ActionEncoderParams::init(kDims, classes, rng);
    const Matrix video = random_matrix(kDims.frames, kDims.input_dim, -1.0, 1.0, rng);
    std::uniform_int_distribution<Index> lab(0, classes - 1);
    const Index label = lab(rng);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const ActionEncoderParams p = params_from(p0, x, 0);
            ActionEncoderCache cache;
            const CrossEntropyResult ce = cross_entropy_logits(fe_logits(p, video, &cache), label);
            write_params(g, 0, fe_backward(p, cache, ce.grad_logits));
            return ce.loss;
        },
        flatten(p0), o.step, o.tol);
}

GradCheckReport merge(GradCheckReport a, const GradCheckReport& b) {
    if (std::isnan(b.max_rel_error) || b.max_rel_error > a.max_rel_error) {
        a.max_rel_error = b.max_rel_error;
        a.worst_index = b.worst_index;
        a.worst_analytic = b.worst_analytic;
        a.worst_numeric = b.worst_numeric;
    }
    a.checked += b.checked;
    a.passed = a.passed && b.passed;
    return a;
}

// Checks the loss on raw embeddings and the full clip-pair path through f_A
// and g.
GradCheckReport check_loss_gitdl(Rng& rng, const GradSuiteOptions& o) {
    GitdlConfig cfg;
    const Index n = 4, f = 3;
    std::vector<double> x0 = flat_matrix(random_matrix(n, f, -1.0, 1.0, rng));
    const auto l0 = flat_matrix(random_matrix(n, f, -1.0, 1.0, rng));
    x0.insert(x0.end(), l0.begin(), l0.end());
    const std::size_t off = static_cast<std::size_t>(n * f);
    const GradCheckReport direct = finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const GitdlLoss l = gitdl_loss(matrix_from(x, 0, n, f), matrix_from(x, off, n, f), cfg);
            write_to(g, 0, l.grad_global);
            write_to(g, off, l.grad_local);
            return l.loss;
        },
        x0, o.step, o.tol);

    cfg.frames = kDims.frames;
    const AlignEncoderParams e0 = AlignEncoderParams::init(kDims, rng);
    const ProjectionParams g0 = ProjectionParams::init(kDims, rng);
    const Matrix video = random_matrix(2 * kDims.frames + 2, kDims.input_dim, -1.0, 1.0, rng);
    const std::vector<ClipPair> pairs{sample_global_local(video, kDims.frames, rng), sample_global_local(video, kDims.frames, rng)};
    const std::size_t eoff = param_count(e0);
    const GradCheckReport full = finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            const AlignEncoderParams e = params_from(e0, x, 0);
            const ProjectionParams pr = params_from(g0, x, eoff);
            const GitdlBatchLoss bl = gitdl_batch_loss(e, pr, pairs, cfg);
            write_params(g, 0, bl.grad_encoder);
            write_params(g, eoff, bl.grad_projection);
            return bl.loss;
        },
        concat(flatten(e0), g0), o.step, o.tol);
    return merge(direct, full);
}

GradCheckReport check_loss_av(Rng& rng, const GradSuiteOptions& o) {
    AlignabilityModel m0{AlignEncoderParams::init(kDims, rng), ScoreNetParams::init(kDims, rng), 0};
    std::vector<Matrix> clips;
    for (int i = 0; i < 4; ++i) clips.push_back(random_matrix(kDims.frames, kDims.input_dim, -1.0, 1.0, rng));
    const std::vector<int> labels{0, 1, 0, 1};
    MetricLearnConfig cfg;
    cfg.gamma = kGamma;
    cfg.margin = 0.5;
    cfg.strategy = MiningStrategy::AllNegatives;
    const std::size_t eoff = param_count(m0.encoder);
    return finite_diff_check(
        [&](std::span<const double> x, std::span<double> g) {
            AlignabilityModel m = m0;
            m.encoder = params_from(m0.encoder, x, 0);
            m.score = params_from(m0.score, x, eoff);
            const BatchLoss bl = alignability_batch_loss(m, clips, labels, cfg);
            write_params(g, 0, bl.grad_encoder);
            write_params(g, eoff, bl.grad_score);
            return bl.total;
        },
        concat(flatten(m0.encoder), m0.score), o.step, o.tol);
}

const std::map<std::string, SeedCheck>& registry() {
    static const std::map<std::string, SeedCheck> r{
        {"softdtw-cost", check_softdtw_cost}, {"softdtw-embed", check_softdtw_embed},
        {"fa", check_fa},                     {"fe", check_fe},
        {"fs", check_fs},                     {"g", check_g},
        {"loss-at", check_loss_at},           {"loss-score", check_loss_score},
        {"loss-ce", check_loss_ce},           {"loss-gitdl", check_loss_gitdl},
        {"loss-av", check_loss_av},
    };
    return r;
}

}  // namespace

const std::vector<std::string>& gradcheck_suite_names() {
    static const std::vector<std::string> names{"softdtw-cost", "softdtw-embed", "fa",       "fe",
                                                "fs",           "g",             "loss-at",  "loss-score",
                                                "loss-ce",      "loss-gitdl",    "loss-av"};
    return names;
}

GradSuiteResult run_gradcheck_suite(const std::string& name, const GradSuiteOptions& options) {
    const auto it = registry().find(name);
    if (it == registry().end()) throw ConfigError("unknown gradcheck suite '" + name + "'");
    GradSuiteResult res;
    res.name = name;
    res.seeds = options.seeds;
    for (int s = 0; s < options.seeds; ++s) {
        Rng rng = make_stream(options.base_seed + static_cast<std::uint64_t>(s), "gradcheck/" + name);
        const GradCheckReport r = it->second(rng, options);
        if (std::isnan(r.max_rel_error) || r.max_rel_error > res.max_rel_error) res.max_rel_error = r.max_rel_error;
        res.checked += r.checked;
        res.passed = res.passed && r.passed;
    }
    return res;
}

}  // namespace fp
