#include "finepseudo/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fp {

PlMode parse_pl_mode(const std::string& name) {
    if (name == "confidence") return PlMode::ConfidenceOnly;
    if (name == "verification") return PlMode::Verification;
    if (name == "collaborative") return PlMode::Collaborative;
    throw ConfigError("unknown pseudo-label mode '" + name + "'");
}

std::string to_string(PlMode m) {
    switch (m) {
        case PlMode::ConfidenceOnly: return "confidence";
        case PlMode::Verification: return "verification";
        case PlMode::Collaborative: return "collaborative";
    }
    return "collaborative";
}

void SelfTrainConfig::validate() const {
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) throw ConfigError("selftrain: theta outside [0, 1]");
    if (!(tau > 0.0)) throw ConfigError("selftrain: tau must be > 0");
    if (!(align_threshold >= 0.0 && align_threshold <= 1.0)) throw ConfigError("selftrain: align threshold outside [0, 1]");
    if (max_iter < 0) throw ConfigError("selftrain: max_iter must be >= 0");
    if (epochs_per_iter < 0) throw ConfigError("selftrain: epochs_per_iter must be >= 0");
    if (rho_cap < 1) throw ConfigError("selftrain: rho_cap must be >= 1");
}

Gallery build_gallery(std::span<const Matrix> clips, std::span<const int> labels, int num_classes,
                      const AlignabilityModel& model, std::size_t rho_cap, Rng& rng) {
    if (clips.empty()) throw ConfigError("build_gallery: labeled set is empty");
    if (clips.size() != labels.size()) throw DimensionError("build_gallery: clips vs labels");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) throw DomainError("build_gallery: label outside the known classes");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    Gallery g;
    g.version = model.version;
    g.per_class.resize(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        if (idx.empty()) throw ConfigError("build_gallery: class " + std::to_string(c) + " has no labeled sample");
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t rho = std::min(rho_cap, idx.size());
        for (std::size_t k = 0; k < rho; ++k) g.per_class[static_cast<std::size_t>(c)].push_back(fa_embed(model.encoder, clips[idx[k]]));
    }
    return g;
}

Vector classwise_alignability(const FrameSequence& u, const Gallery& gallery, const ScoreNetParams& score,
                              double gamma) {
    Vector out(gallery.num_classes());
    for (int c = 0; c < gallery.num_classes(); ++c) {
        const auto& entries = gallery.per_class[static_cast<std::size_t>(c)];
        if (entries.empty()) throw ConfigError("classwise_alignability: gallery misses class " + std::to_string(c));
        double s = 0.0;
        for (const auto& a : entries) s += pair_alignability(score, u, a, gamma);
        out(c) = s / static_cast<double>(entries.size());
    }
    return out;
}

Vector nonparametric_predict(const Vector& class_scores, double tau) {
    if (!(tau > 0.0)) throw DomainError("nonparametric_predict: tau must be > 0");
    return softmax(class_scores / tau);
}

Vector fuse_predictions(const Vector& p_a, const Vector& p_e) {
    if (p_a.size() != p_e.size()) throw DimensionError("fuse_predictions: distributions differ in length");
    return 0.5 * (p_a + p_e);
}

PlStats pl_stats(std::span<const PseudoLabelRecord> records, int num_classes) {
    PlStats s;
    s.per_class.assign(static_cast<std::size_t>(num_classes), 0);
    std::size_t known = 0, correct = 0;
    for (const auto& r : records) {
        if (!r.accepted) continue;
        ++s.count;
        ++s.per_class[static_cast<std::size_t>(r.predicted)];
        if (r.true_class >= 0) {
            ++known;
            if (r.true_class == r.predicted) ++correct;
        }
    }
    s.accuracy = known ? static_cast<double>(correct) / static_cast<double>(known) : 0.0;
    return s;
}

namespace {

int argmax(const Vector& v) {
    Index best = 0;
    v.maxCoeff(&best);
    return static_cast<int>(best);
}

}  // namespace

PseudoLabels generate_pseudolabels(std::span<const PoolSample> pool, const ActionEncoderParams& action,
                                   const AlignabilityModel& align, const Gallery& gallery,
                                   const SelfTrainConfig& config, double gamma, unsigned threads) {
    if (gallery.version != align.version)
        throw ConsistencyError("gallery built from encoder version " + std::to_string(gallery.version) +
                               ", current version is " + std::to_string(align.version));
    if (gallery.num_classes() != action.num_classes())
        throw DimensionError("generate_pseudolabels: gallery and classifier disagree on the class count");

    PseudoLabels out;
    out.records.resize(pool.size());
    parallel_for(pool.size(), threads, [&](std::size_t i) {
        const PoolSample& s = pool[i];
        PseudoLabelRecord r;
        r.sample_id = s.id;
        r.true_class = s.true_class;
        const Vector sbar = classwise_alignability(fa_embed(align.encoder, s.clip), gallery, align.score, gamma);
        r.max_alignability = sbar.maxCoeff();
        r.p_a = nonparametric_predict(sbar, config.tau);
        r.p_e = fe_forward(action, s.clip);
        r.p = fuse_predictions(r.p_a, r.p_e);
        const Vector& decision = config.mode == PlMode::Collaborative ? r.p : r.p_e;
        r.predicted = argmax(decision);
        r.confidence = decision(r.predicted);
        r.accepted = r.confidence > config.confidence_threshold;
        if (config.mode == PlMode::Verification) r.accepted = r.accepted && sbar(r.predicted) > config.align_threshold;
        if (config.open_world) r.accepted = r.accepted && r.max_alignability > config.align_threshold;
        out.records[i] = std::move(r);
    });
    out.stats = pl_stats(out.records, action.num_classes());
    return out;
}

int predict_class(const ActionEncoderParams& action, const Matrix& clip) { return argmax(fe_logits(action, clip)); }

double evaluate_top1(const ActionEncoderParams& action, std::span<const Matrix> clips, std::span<const int> labels) {
    if (clips.size() != labels.size()) throw DimensionError("evaluate_top1: clips vs labels");
    if (clips.empty()) throw DomainError("evaluate_top1: empty test set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < clips.size(); ++i)
        if (predict_class(action, clips[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(clips.size());
}

double train_action_epoch(ActionEncoderParams& action, Adam<ActionEncoderParams>& opt, std::span<const Matrix> clips,
                          std::span<const int> labels, std::size_t batch_size, double lr, Rng& rng) {
    if (clips.size() != labels.size()) throw DimensionError("train_action_epoch: clips vs labels");
    if (clips.empty()) throw ConfigError("train_action_epoch: empty training set");
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += batch_size) {
        const std::size_t e = std::min(order.size(), s + batch_size);
        const double inv = 1.0 / static_cast<double>(e - s);
        ActionEncoderParams grad = zeros_like(action);
        for (std::size_t k = s; k < e; ++k) {
            ActionEncoderCache cache;
            const Vector logits = fe_logits(action, clips[order[k]], &cache);
            const CrossEntropyResult ce = cross_entropy_logits(logits, labels[order[k]]);
            total += ce.loss;
            add_scaled(grad, fe_backward(action, cache, ce.grad_logits), inv);
        }
        opt.step(action, grad, lr);
    }
    return total / static_cast<double>(clips.size());
}

std::vector<IterationMetrics> self_train(SelfTrainModels& models, const SelfTrainData& data,
                                         const SelfTrainConfig& config, const SelfTrainOptions& options,
                                         const IterationCallback& on_iter) {
    config.validate();
    options.metric.validate();
    const int num_classes = static_cast<int>(models.action.num_classes());
    Rng gallery_rng = make_stream(options.seed, "gallery");
    Rng batch_rng = make_stream(options.seed, "batch");
    Adam<ActionEncoderParams> action_opt(models.action);
    MetricOptimizer metric_opt(models.align);

    std::vector<IterationMetrics> history;
    for (int iter = 1; iter <= config.max_iter; ++iter) {
        IterationMetrics m;
        m.iter = iter;
        const Gallery gallery = build_gallery(data.labeled_clips, data.labeled_labels, num_classes, models.align,
                                              config.rho_cap, gallery_rng);
        const PseudoLabels pls =
            generate_pseudolabels(data.pool, models.action, models.align, gallery, config, options.metric.gamma, options.threads);
        m.stats = pls.stats;

        std::vector<Matrix> clips(data.labeled_clips.begin(), data.labeled_clips.end());
        std::vector<int> labels(data.labeled_labels.begin(), data.labeled_labels.end());
        for (std::size_t i = 0; i < pls.records.size(); ++i) {
            if (!pls.records[i].accepted) continue;
            clips.push_back(data.pool[i].clip);
            labels.push_back(pls.records[i].predicted);
        }
        if (pls.stats.count == 0)
            m.warnings.push_back("iteration " + std::to_string(iter) + ": no pseudo-label accepted, training on labeled data only");

        for (int e = 0; e < config.epochs_per_iter; ++e) {
            train_action_epoch(models.action, action_opt, clips, labels, options.action_batch, options.action_lr, batch_rng);
            train_metric_epoch(models.align, metric_opt, clips, labels, options.metric, options.metric.lr, batch_rng);
        }
        if (!data.test_clips.empty()) m.test_top1 = evaluate_top1(models.action, data.test_clips, data.test_labels);
        if (on_iter) on_iter(m);
        history.push_back(std::move(m));
    }
    return history;
}

}  // namespace fp
