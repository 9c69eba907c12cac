// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include "finepseudo/gradcheck.hpp"
#include "finepseudo/pipeline.hpp"
#include "finepseudo/softdtw.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace fp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Swallows stage chatter on stdout / stderr while alive.
class Quiet {
public:
    Quiet() : out_(std::cout.rdbuf(sink_.rdbuf())), err_(std::cerr.rdbuf(sink_.rdbuf())) {}
    ~Quiet() {
        std::cout.rdbuf(out_);
        std::cerr.rdbuf(err_);
    }

private:
    std::ostringstream sink_;
    std::streambuf* out_;
    std::streambuf* err_;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

RunConfig default_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.synth.seed = seed;
    return cfg;
}

struct Trained {
    GeneratedData gen;
    StageData data;
    Models models;
    double baseline_top1 = 0.0;
};

// Pretraining and labeled-stage training on the synthetic dataset of `cfg`.
Trained train_to_labeled(const RunConfig& cfg) {
    Trained t;
    t.gen = generate(cfg.synth);
    t.data = prepare_stage_data(t.gen.dataset, cfg.model.frames);
    MetricsLog log;
    Quiet q;
    pretrain_stage(cfg, t.data, t.models, log);
    labeled_stage(cfg, t.data, t.models, log);
    t.baseline_top1 = evaluate_top1(t.models.fe, t.data.test_clips, t.data.test_labels);
    return t;
}

struct SelfTrainSummary {
    double pooled_pl_accuracy = 0.0;
    std::size_t accepted = 0;
    double final_top1 = 0.0;
};

SelfTrainSummary run_selftrain(const RunConfig& cfg, const Trained& t) {
    Models m = t.models;
    MetricsLog log;
    std::vector<IterationMetrics> hist;
    {
        Quiet q;
        hist = selftrain_stage(cfg, t.data, m, log);
    }
    SelfTrainSummary s;
    double correct = 0.0;
    for (const auto& it : hist) {
        s.accepted += it.stats.count;
        correct += it.stats.accuracy * static_cast<double>(it.stats.count);
    }
    s.pooled_pl_accuracy = s.accepted ? correct / static_cast<double>(s.accepted) : 0.0;
    s.final_top1 = hist.empty() ? t.baseline_top1 : hist.back().test_top1;
    return s;
}

CostMatrix random_cost(Rng& rng) {
    std::uniform_int_distribution<Index> len(1, 6);
    std::uniform_real_distribution<double> val(0.0, 2.0);
    CostMatrix c(len(rng), len(rng));
    for (Index i = 0; i < c.rows(); ++i)
        for (Index j = 0; j < c.cols(); ++j) c(i, j) = val(rng);
    return c;
}

constexpr double kGammas[] = {0.001, 0.1, 1.0};

Outcome softdtw_oracle() {
    Rng rng = make_stream(1, "acceptance/softdtw");
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const CostMatrix c = random_cost(rng);
        for (double g : kGammas) {
            const double dp = softdtw_forward(c, g).distance;
            const double ref = oracle::softdtw_by_enumeration(c, g);
            worst = std::max(worst, std::abs(dp - ref) / std::max(std::abs(ref), 1e-300));
        }
    }
    return {worst <= 1e-9, fmt("max relative error %.3g over 600 cases", worst)};
}

Outcome hard_limit_bound() {
    Rng rng = make_stream(1, "acceptance/softdtw");
    double worst_ratio = 0.0;
    bool ok = true;
    for (int k = 0; k < 200; ++k) {
        const CostMatrix c = random_cost(rng);
        const double hard = hard_dtw(c);
        for (double g : kGammas) {
            const double bound = g * static_cast<double>(c.rows() + c.cols() - 1) * std::log(3.0);
            const double gap = std::abs(softdtw_forward(c, g).distance - hard);
            ok = ok && gap <= bound;
            worst_ratio = std::max(worst_ratio, gap / bound);
        }
    }
    return {ok, fmt("max gap / bound = %.3f", worst_ratio)};
}

Outcome gradient_suites() {
    const char* suites[] = {"softdtw-cost", "softdtw-embed", "loss-at", "loss-score", "loss-ce", "loss-gitdl"};
    bool ok = true;
    std::string detail;
    for (const char* s : suites) {
        const GradSuiteResult r = run_gradcheck_suite(s, GradSuiteOptions{});
        ok = ok && r.passed && r.max_rel_error <= 1e-4;
        detail += fmt("%s %.2g; ", s, r.max_rel_error);
    }
    return {ok, detail};
}

Outcome verification_ordering() {
    int ordered = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RunConfig cfg = default_config(seed);
        cfg.synth.labeled_fraction = 0.1;
        const Trained t = train_to_labeled(cfg);
        const double align = verification_ap_for(t.models, t.data, DistanceKind::Alignability, cfg.metric.gamma);
        const double sdtw = verification_ap_for(t.models, t.data, DistanceKind::SoftDtw, cfg.metric.gamma);
        const double cos = verification_ap_for(t.models, t.data, DistanceKind::CosineMean, cfg.metric.gamma);
        if (align > sdtw && sdtw > cos) ++ordered;
        detail += fmt("[%.3f %.3f %.3f] ", align, sdtw, cos);
    }
    return {ordered >= 4, fmt("%d/5 seeds ordered, AP align/softdtw/cosine-mean ", ordered) + detail};
}

Outcome collaborative_ordering() {
    int pl_wins = 0, top1_wins = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RunConfig base = default_config(seed);
        const Trained t = train_to_labeled(base);
        RunConfig conf = base, collab = base;
        conf.selftrain.mode = PlMode::ConfidenceOnly;
        collab.selftrain.mode = PlMode::Collaborative;
        const SelfTrainSummary a = run_selftrain(conf, t);
        const SelfTrainSummary b = run_selftrain(collab, t);
        pl_wins += b.pooled_pl_accuracy > a.pooled_pl_accuracy ? 1 : 0;
        top1_wins += b.final_top1 > a.final_top1 ? 1 : 0;
        detail += fmt("[pl %.3f vs %.3f, top1 %.3f vs %.3f] ", b.pooled_pl_accuracy, a.pooled_pl_accuracy,
                      b.final_top1, a.final_top1);
    }
    return {pl_wins >= 4 && top1_wins >= 4,
            fmt("collaborative ahead on PL accuracy %d/5, on top-1 %d/5 ", pl_wins, top1_wins) + detail};
}

Outcome selftrain_gain() {
    double gain = 0.0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const RunConfig cfg = default_config(seed);
        const Trained t = train_to_labeled(cfg);
        const SelfTrainSummary s = run_selftrain(cfg, t);
        gain += (s.final_top1 - t.baseline_top1) / 3.0;
        detail += fmt("[%.3f -> %.3f] ", t.baseline_top1, s.final_top1);
    }
    return {gain >= 0.03, fmt("mean gain %.1f points ", 100.0 * gain) + detail};
}

Outcome gitdl_ablation() {
    int tau_wins = 0, probe_wins = 0, both = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RunConfig cfg = default_config(seed);
        const GeneratedData gen = generate(cfg.synth);
        const StageData data = prepare_stage_data(gen.dataset, cfg.model.frames);
        PhaseMetrics pm[2];
        const double kappas[2] = {0.99, 0.0};
        for (int k = 0; k < 2; ++k) {
            cfg.gitdl.kappa = kappas[k];
            Models m;
            MetricsLog log;
            {
                Quiet q;
                pretrain_stage(cfg, data, m, log);
            }
            pm[k] = evaluate_phase_metrics(m.fa_pretrained, data.test_videos, seed);
        }
        const bool t = pm[0].kendall_tau > pm[1].kendall_tau;
        const bool p = pm[0].phase_probe > pm[1].phase_probe;
        tau_wins += t;
        probe_wins += p;
        both += t && p;
        detail += fmt("[tau %.4f vs %.4f, probe %.4f vs %.4f] ", pm[0].kendall_tau, pm[1].kendall_tau,
                      pm[0].phase_probe, pm[1].phase_probe);
    }
    return {both >= 4, fmt("prior ahead on tau %d/5, probe %d/5, both %d/5 ", tau_wins, probe_wins, both) + detail};
}

Outcome open_world_rejection() {
    int lower = 0, improved = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RunConfig cfg = default_config(seed);
        cfg.synth.open_world = true;
        const Trained t = train_to_labeled(cfg);

        Rng grng = make_stream(seed, "gallery");
        const AlignabilityModel am{t.models.fa, t.models.fs, 0};
        const Gallery gallery = build_gallery(t.data.labeled_clips, t.data.labeled_labels, t.data.num_classes, am,
                                              cfg.selftrain.rho_cap, grng);
        double novel = 0.0, known = 0.0;
        int n_novel = 0, n_known = 0;
        for (const auto& s : t.data.pool) {
            const double top = classwise_alignability(fa_embed(t.models.fa, s.clip), gallery, t.models.fs,
                                                      cfg.metric.gamma).maxCoeff();
            if (s.true_class >= t.data.num_classes) {
                novel += top;
                ++n_novel;
            } else {
                known += top;
                ++n_known;
            }
        }
        novel /= std::max(n_novel, 1);
        known /= std::max(n_known, 1);
        lower += n_novel > 0 && novel < known;

        RunConfig off = cfg, on = cfg;
        off.selftrain.open_world = false;
        on.selftrain.open_world = true;
        const SelfTrainSummary a = run_selftrain(off, t);
        const SelfTrainSummary b = run_selftrain(on, t);
        improved += b.pooled_pl_accuracy > a.pooled_pl_accuracy;
        detail += fmt("[max S novel %.3f known %.3f; PL acc %.4f (%zu) filtered vs %.4f (%zu)] ", novel, known,
                      b.pooled_pl_accuracy, b.accepted, a.pooled_pl_accuracy, a.accepted);
    }
    return {lower >= 4 && improved >= 4,
            fmt("novel below known %d/5, filter raises PL accuracy %d/5 ", lower, improved) + detail};
}

bool same_bytes(const fs::path& a, const fs::path& b) { return read_bytes(a) == read_bytes(b); }

double worst_sum_error(const Vector& p) { return std::abs(p.sum() - 1.0); }

Outcome determinism_and_formats() {
    const fs::path root = fs::temp_directory_path() / fmt("finepseudo_acceptance_%d", static_cast<int>(::getpid()));
    fs::remove_all(root);
    RunConfig cfg = default_config(7);
    cfg.gitdl.epochs = 2;
    cfg.metric.epochs = 3;
    cfg.labeled_epochs = 3;
    cfg.selftrain.max_iter = 2;
    cfg.selftrain.epochs_per_iter = 1;

    std::vector<std::string> problems;
    for (const char* run : {"a", "b"}) {
        Quiet q;
        run_synth(cfg, root / run / "data");
        run_pretrain(cfg, root / run / "data", root / run / "ckpt");
        run_train_labeled(cfg, root / run / "data", root / run / "ckpt");
        run_selftrain(cfg, root / run / "data", root / run / "ckpt");
    }
    std::size_t metric_files = 0, seq_files = 0, ckpt_files = 0;
    for (const auto& e : fs::directory_iterator(root / "a" / "ckpt")) {
        const auto ext = e.path().extension();
        if (ext != ".jsonl" && ext != ".csv") continue;
        ++metric_files;
        const fs::path other = root / "b" / "ckpt" / e.path().filename();
        if (!fs::exists(other) || !same_bytes(e.path(), other)) problems.push_back("metrics differ: " + e.path().filename().string());
    }
    if (metric_files == 0) problems.push_back("no metric files written");

    for (const auto& e : fs::recursive_directory_iterator(root / "a" / "data")) {
        if (e.path().extension() != ".fpsq") continue;
        ++seq_files;
        const auto bytes = read_bytes(e.path());
        if (encode_sequence(decode_sequence(bytes)) != bytes) problems.push_back("sequence round trip: " + e.path().string());
    }
    for (const auto& e : fs::directory_iterator(root / "a" / "ckpt")) {
        if (e.path().extension() != ".bin") continue;
        ++ckpt_files;
        const auto bytes = read_bytes(e.path());
        if (encode_tensor_group(decode_tensor_group(bytes)) != bytes) problems.push_back("checkpoint round trip: " + e.path().string());
        if (!same_bytes(e.path(), root / "b" / "ckpt" / e.path().filename()))
            problems.push_back("checkpoints differ: " + e.path().filename().string());
    }
    const AlignEncoderParams fa = load_group<AlignEncoderParams>(root / "a" / "ckpt", "fa");
    save_group(root / "a" / "resaved", "fa", fa);
    if (!same_bytes(group_path(root / "a" / "ckpt", "fa"), group_path(root / "a" / "resaved", "fa")))
        problems.push_back("checkpoint load/save is not bit-exact");

    // Probability vectors at each stage: f_E after labeled training, the
    // pseudo-label distributions in every mode, f_E after self-training.
    double worst = 0.0;
    const Trained t = train_to_labeled(cfg);
    for (const auto& c : t.data.test_clips) worst = std::max(worst, worst_sum_error(fe_forward(t.models.fe, c)));
    Rng grng = make_stream(cfg.seed, "gallery");
    const AlignabilityModel am{t.models.fa, t.models.fs, 0};
    const Gallery gallery = build_gallery(t.data.labeled_clips, t.data.labeled_labels, t.data.num_classes, am,
                                          cfg.selftrain.rho_cap, grng);
    for (PlMode mode : {PlMode::ConfidenceOnly, PlMode::Verification, PlMode::Collaborative}) {
        SelfTrainConfig sc = cfg.selftrain;
        sc.mode = mode;
        const PseudoLabels pl = generate_pseudolabels(t.data.pool, t.models.fe, am, gallery, sc, cfg.metric.gamma);
        for (const auto& r : pl.records)
            worst = std::max({worst, worst_sum_error(r.p_a), worst_sum_error(r.p_e), worst_sum_error(r.p)});
    }
    Models m = t.models;
    {
        MetricsLog log;
        Quiet q;
        selftrain_stage(cfg, t.data, m, log);
    }
    for (const auto& c : t.data.test_clips) worst = std::max(worst, worst_sum_error(fe_forward(m.fe, c)));
    if (worst > 1e-9) problems.push_back(fmt("probability sum off by %.3g", worst));

    fs::remove_all(root);
    std::string detail = fmt("%zu metric files, %zu sequence files, %zu checkpoints, max |sum p - 1| %.2g", metric_files,
                             seq_files, ckpt_files, worst);
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    const Criterion criteria[] = {
        {1, "softdtw matches path enumeration", 10, softdtw_oracle},
        {2, "softdtw hard-limit bound", 5, hard_limit_bound},
        {3, "gradient suites", 60, gradient_suites},
        {4, "verification AP ordering", 300, verification_ordering},
        {5, "collaborative vs confidence pseudo-labels", 600, collaborative_ordering},
        {6, "self-training gain", 600, selftrain_gain},
        {7, "gaussian prior ablation", 300, gitdl_ablation},
        {8, "open-world rejection", 300, open_world_rejection},
        {9, "determinism and formats", 60, determinism_and_formats},
    };
    // Optional criterion ids on the command line select a subset.
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > c.limit_seconds) {
            o.pass = false;
            o.detail += fmt(" (over the %.0f s budget)", c.limit_seconds);
        }
        std::printf("criterion %d %s: %s (%.1f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
