#include "finepseudo/synthgen.hpp"

#include "finepseudo/seqcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace fp {

void SynthConfig::validate() const {
    if (num_known < 2) throw ConfigError("synth: need at least 2 known classes");
    if (num_novel < 0) throw ConfigError("synth: num_novel must be >= 0");
    if (phases_per_class < 2) throw ConfigError("synth: need at least 2 phases per class");
    if (vocab_size < phases_per_class + 1)
        throw ConfigError("synth: vocabulary must exceed the phases per class by at least one");
    if (feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
    if (min_phase_frames < 1) throw ConfigError("synth: min_phase_frames must be >= 1");
    if (min_frames < phases_per_class * min_phase_frames || min_frames < 2)
        throw ConfigError("synth: min_frames cannot hold every phase at its minimum duration");
    if (max_frames < min_frames) throw ConfigError("synth: max_frames < min_frames");
    if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
    if (samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
    if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) throw ConfigError("synth: labeled_fraction outside [0, 1]");
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ConfigError("synth: test_fraction outside [0, 1]");
    if (!(min_angle_deg >= 0.0 && min_angle_deg < 90.0)) throw ConfigError("synth: min_angle_deg outside [0, 90)");
}

PhaseVocabulary make_vocabulary(int size, Index dim, double min_angle_deg, Rng& rng) {
    const double max_cos = std::cos(min_angle_deg * 3.14159265358979323846 / 180.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    PhaseVocabulary vocab;
    vocab.prototypes.resize(size, dim);
    int accepted = 0;
    for (int attempt = 0; accepted < size; ++attempt) {
        if (attempt > 100000) throw GenerationError("could not place prototypes with the requested minimum angle");
        Vector v(dim);
        for (Index k = 0; k < dim; ++k) v(k) = normal(rng);
        const double n = v.norm();
        if (n < 1e-12) continue;
        v /= n;
        bool ok = true;
        for (int j = 0; j < accepted && ok; ++j) ok = vocab.prototypes.row(j).dot(v) <= max_cos;
        if (ok) vocab.prototypes.row(accepted++) = v.transpose();
    }
    return vocab;
}

namespace {

std::vector<int> sorted_copy(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

std::vector<ClassSpec> make_class_specs(const SynthConfig& config, const PhaseVocabulary& vocab, Rng& rng) {
    const int k = config.phases_per_class;
    const int p = static_cast<int>(vocab.prototypes.rows());
    if (p < k + 1) throw GenerationError("vocabulary too small for sibling classes");

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<ClassSpec> specs;
        while (static_cast<int>(specs.size()) < config.num_known) {
            std::vector<int> ids(static_cast<std::size_t>(p));
            std::iota(ids.begin(), ids.end(), 0);
            std::shuffle(ids.begin(), ids.end(), rng);
            ClassSpec base{std::vector<int>(ids.begin(), ids.begin() + k), false};
            specs.push_back(base);
            if (static_cast<int>(specs.size()) == config.num_known) break;

            // Sibling: one slot swapped for the closest prototype not already used.
            std::uniform_int_distribution<int> slot_dist(0, k - 1);
            const int slot = slot_dist(rng);
            const int orig = base.phases[static_cast<std::size_t>(slot)];
            int best = -1;
            double best_cos = -2.0;
            for (int cand = 0; cand < p; ++cand) {
                if (std::find(base.phases.begin(), base.phases.end(), cand) != base.phases.end()) continue;
                const double c = vocab.prototypes.row(orig).dot(vocab.prototypes.row(cand));
                if (c > best_cos) {
                    best_cos = c;
                    best = cand;
                }
            }
            ClassSpec sib = base;
            sib.phases[static_cast<std::size_t>(slot)] = best;
            specs.push_back(sib);
        }
        std::set<std::vector<int>> multisets;
        for (const auto& s : specs) multisets.insert(sorted_copy(s.phases));
        if (static_cast<int>(multisets.size()) != config.num_known) continue;

        std::set<std::vector<int>> sequences;
        for (const auto& s : specs) sequences.insert(s.phases);
        std::vector<int> sources(static_cast<std::size_t>(config.num_known));
        std::iota(sources.begin(), sources.end(), 0);
        std::shuffle(sources.begin(), sources.end(), rng);
        bool ok = true;
        for (int n = 0; n < config.num_novel && ok; ++n) {
            const auto& src = specs[static_cast<std::size_t>(sources[static_cast<std::size_t>(n) % sources.size()])];
            std::vector<int> order(src.phases.rbegin(), src.phases.rend());
            for (int tries = 0; sequences.count(order) && tries < 100; ++tries) std::shuffle(order.begin(), order.end(), rng);
            if (sequences.count(order)) {
                ok = false;
                break;
            }
            sequences.insert(order);
            specs.push_back({order, true});
        }
        if (ok) return specs;
    }
    throw GenerationError("could not build distinct class specifications from the vocabulary");
}

std::vector<Index> draw_durations(Index frames, int phases, Index min_phase_frames, Rng& rng) {
    const Index slack = frames - static_cast<Index>(phases) * min_phase_frames;
    if (slack < 0) throw GenerationError("video too short for the phase count");
    std::uniform_int_distribution<Index> cut(0, slack);
    std::vector<Index> cuts(static_cast<std::size_t>(phases - 1));
    for (auto& c : cuts) c = cut(rng);
    std::sort(cuts.begin(), cuts.end());
    std::vector<Index> out(static_cast<std::size_t>(phases));
    Index prev = 0;
    for (int i = 0; i < phases; ++i) {
        const Index next = i + 1 < phases ? cuts[static_cast<std::size_t>(i)] : slack;
        out[static_cast<std::size_t>(i)] = min_phase_frames + (next - prev);
        prev = next;
    }
    return out;
}

SyntheticVideo render_video(const ClassSpec& spec, const PhaseVocabulary& vocab, Index frames, double noise_std,
                            Index min_phase_frames, Rng& rng) {
    const auto durations = draw_durations(frames, static_cast<int>(spec.phases.size()), min_phase_frames, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    SyntheticVideo v;
    v.signal.resize(frames, vocab.prototypes.cols());
    v.novel = spec.novel;
    Index t = 0;
    for (std::size_t ph = 0; ph < spec.phases.size(); ++ph) {
        for (Index k = 0; k < durations[ph]; ++k, ++t) {
            for (Index f = 0; f < v.signal.cols(); ++f) {
                const double noise = noise_std > 0.0 ? noise_std * normal(rng) : 0.0;
                v.signal(t, f) = vocab.prototypes(spec.phases[ph], f) + noise;
            }
            v.phases.push_back(spec.phases[ph]);
            v.progress.push_back(static_cast<double>(t) / static_cast<double>(frames - 1));
        }
    }
    // Stored as f32 on disk; keep the in-memory copy identical.
    v.signal = quantize_f32(v.signal);
    return v;
}

GeneratedData generate(const SynthConfig& config) {
    config.validate();
    Rng rng = make_stream(config.seed, "synth");
    GeneratedData out;
    out.vocabulary = make_vocabulary(config.vocab_size, config.feature_dim, config.min_angle_deg, rng);
    SynthConfig specs_cfg = config;
    if (!config.open_world) specs_cfg.num_novel = 0;
    out.classes = make_class_specs(specs_cfg, out.vocabulary, rng);

    out.dataset.feature_dim = config.feature_dim;
    out.dataset.num_classes = config.num_known;
    std::uniform_int_distribution<Index> len(config.min_frames, config.max_frames);
    const int n = config.samples_per_class;
    const int n_labeled = static_cast<int>(std::lround(config.labeled_fraction * n));
    const int n_test = std::min(n - n_labeled, static_cast<int>(std::lround(config.test_fraction * n)));
    int counter = 0;
    for (std::size_t c = 0; c < out.classes.size(); ++c) {
        const ClassSpec& spec = out.classes[c];
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<Split> split_of(static_cast<std::size_t>(n), Split::Unlabeled);
        if (!spec.novel) {
            for (int i = 0; i < n; ++i) {
                const int pos = order[static_cast<std::size_t>(i)];
                split_of[static_cast<std::size_t>(pos)] =
                    i < n_labeled ? Split::Labeled : (i < n_labeled + n_test ? Split::Test : Split::Unlabeled);
            }
        }
        for (int i = 0; i < n; ++i) {
            SyntheticVideo v = render_video(spec, out.vocabulary, len(rng), config.noise_std, config.min_phase_frames, rng);
            char id[32];
            std::snprintf(id, sizeof id, "v%05d", counter++);
            v.id = id;
            v.label = static_cast<int>(c);
            v.split = split_of[static_cast<std::size_t>(i)];
            out.dataset.samples.push_back(std::move(v));
        }
    }
    return out;
}

void generate_dataset(const SynthConfig& config, const std::filesystem::path& dir) {
    write_dataset(generate(config).dataset, dir);
}

}  // namespace fp
