#include "finepseudo/pipeline.hpp"

#include "finepseudo/metrics.hpp"
#include "finepseudo/softdtw.hpp"

#include <algorithm>
#include <functional>
#include <iostream>

namespace fp {

using nlohmann::json;

void RunConfig::validate() const {
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (labeled_epochs < 0) throw ConfigError("labeled.epochs must be >= 0");
    if (!(action_lr > 0.0)) throw ConfigError("labeled.lr must be > 0");
    if (action_batch < 1) throw ConfigError("labeled.batch_size must be >= 1");
    if (model.input_dim < 1 || model.hidden < 1 || model.embed_dim < 1 || model.score_hidden < 1)
        throw ConfigError("model dimensions must be >= 1");
    if (model.frames < 4) throw ConfigError("model.frames must be >= 4");
    synth.validate();
    GitdlConfig g = gitdl;
    g.frames = model.frames;
    g.validate();
    metric.validate();
    selftrain.validate();
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    if (name == "desk") return cfg;
    if (name == "full") {
        cfg.preset = "full";
        cfg.gitdl.epochs = 100;
        cfg.metric.epochs = 100;
        cfg.labeled_epochs = 100;
        cfg.selftrain.max_iter = 10;
        cfg.selftrain.epochs_per_iter = 5;
        cfg.gitdl.lr = 1e-4;
        cfg.metric.lr = 1e-4;
        cfg.action_lr = 1e-4;
        return cfg;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

namespace {

using Setter = std::function<void(const json&)>;

template <class T>
Setter set(T& field) {
    return [&field](const json& v) { field = v.get<T>(); };
}

void apply_section(const json& section, const std::string& name, const std::map<std::string, Setter>& setters) {
    if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
    for (const auto& [key, value] : section.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown config key '" + name + "." + key + "'");
        try {
            it->second(value);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + name + "." + key + "': " + e.what());
        }
    }
}

}  // namespace

void apply_config_json(RunConfig& cfg, const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (doc.contains("preset")) {
        if (!doc["preset"].is_string()) throw ConfigError("config key 'preset' must be a string");
        cfg = preset_config(doc["preset"].get<std::string>());
    }
    std::string strategy = to_string(cfg.metric.strategy);
    std::string mode = to_string(cfg.selftrain.mode);
    const std::map<std::string, std::map<std::string, Setter>> sections{
        {"synth",
         {{"num_known", set(cfg.synth.num_known)},
          {"num_novel", set(cfg.synth.num_novel)},
          {"phases_per_class", set(cfg.synth.phases_per_class)},
          {"vocab_size", set(cfg.synth.vocab_size)},
          {"feature_dim", set(cfg.synth.feature_dim)},
          {"min_frames", set(cfg.synth.min_frames)},
          {"max_frames", set(cfg.synth.max_frames)},
          {"min_phase_frames", set(cfg.synth.min_phase_frames)},
          {"noise_std", set(cfg.synth.noise_std)},
          {"samples_per_class", set(cfg.synth.samples_per_class)},
          {"labeled_fraction", set(cfg.synth.labeled_fraction)},
          {"test_fraction", set(cfg.synth.test_fraction)},
          {"open_world", set(cfg.synth.open_world)},
          {"min_angle_deg", set(cfg.synth.min_angle_deg)}}},
        {"model",
         {{"input_dim", set(cfg.model.input_dim)},
          {"hidden", set(cfg.model.hidden)},
          {"embed_dim", set(cfg.model.embed_dim)},
          {"score_hidden", set(cfg.model.score_hidden)},
          {"frames", set(cfg.model.frames)}}},
        {"gitdl",
         {{"temperature", set(cfg.gitdl.temperature)},
          {"kappa", set(cfg.gitdl.kappa)},
          {"sigma", set(cfg.gitdl.sigma)},
          {"epochs", set(cfg.gitdl.epochs)},
          {"batch_size", set(cfg.gitdl.batch_size)},
          {"lr", set(cfg.gitdl.lr)}}},
        {"metric",
         {{"margin", set(cfg.metric.margin)},
          {"score_weight", set(cfg.metric.score_weight)},
          {"batch_size", set(cfg.metric.batch_size)},
          {"instances_per_class", set(cfg.metric.instances_per_class)},
          {"strategy", set(strategy)},
          {"gamma", set(cfg.metric.gamma)},
          {"epochs", set(cfg.metric.epochs)},
          {"lr", set(cfg.metric.lr)},
          {"score_lr_scale", set(cfg.metric.score_lr_scale)},
          {"freeze_input_layer", set(cfg.metric.freeze_input_layer)}}},
        {"labeled",
         {{"epochs", set(cfg.labeled_epochs)}, {"lr", set(cfg.action_lr)}, {"batch_size", set(cfg.action_batch)}}},
        {"selftrain",
         {{"confidence_threshold", set(cfg.selftrain.confidence_threshold)},
          {"tau", set(cfg.selftrain.tau)},
          {"align_threshold", set(cfg.selftrain.align_threshold)},
          {"max_iter", set(cfg.selftrain.max_iter)},
          {"epochs_per_iter", set(cfg.selftrain.epochs_per_iter)},
          {"mode", set(mode)},
          {"open_world", set(cfg.selftrain.open_world)},
          {"rho_cap", set(cfg.selftrain.rho_cap)}}},
    };
    const std::map<std::string, Setter> top{
        {"seed", set(cfg.seed)},
        {"threads", set(cfg.threads)},
        {"warmup_epochs", set(cfg.warmup_epochs)},
    };
    for (const auto& [key, value] : doc.items()) {
        if (key == "preset") continue;
        if (const auto s = sections.find(key); s != sections.end()) {
            apply_section(value, key, s->second);
        } else if (const auto t = top.find(key); t != top.end()) {
            try {
                t->second(value);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    try {
        cfg.metric.strategy = parse_mining_strategy(strategy);
    } catch (const Error&) {
        throw ConfigError("unknown mining strategy '" + strategy + "'");
    }
    cfg.selftrain.mode = parse_pl_mode(mode);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    RunConfig cfg;
    apply_config_json(cfg, doc);
    return cfg;
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::optional<std::filesystem::path>& fallback, const ConfigOverrides& overrides) {
    RunConfig cfg;
    if (file) cfg = load_run_config(*file);
    else if (fallback && std::filesystem::exists(*fallback)) cfg = load_run_config(*fallback);
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.threads) cfg.threads = *overrides.threads;
    if (overrides.mode) cfg.selftrain.mode = *overrides.mode;
    if (overrides.open_world) cfg.selftrain.open_world = true;
    return cfg;
}

json config_to_json(const RunConfig& c) {
    return json{
        {"seed", c.seed},
        {"preset", c.preset},
        {"threads", c.threads},
        {"warmup_epochs", c.warmup_epochs},
        {"synth",
         {{"num_known", c.synth.num_known},
          {"num_novel", c.synth.num_novel},
          {"phases_per_class", c.synth.phases_per_class},
          {"vocab_size", c.synth.vocab_size},
          {"feature_dim", c.synth.feature_dim},
          {"min_frames", c.synth.min_frames},
          {"max_frames", c.synth.max_frames},
          {"min_phase_frames", c.synth.min_phase_frames},
          {"noise_std", c.synth.noise_std},
          {"samples_per_class", c.synth.samples_per_class},
          {"labeled_fraction", c.synth.labeled_fraction},
          {"test_fraction", c.synth.test_fraction},
          {"open_world", c.synth.open_world},
          {"min_angle_deg", c.synth.min_angle_deg}}},
        {"model",
         {{"input_dim", c.model.input_dim},
          {"hidden", c.model.hidden},
          {"embed_dim", c.model.embed_dim},
          {"score_hidden", c.model.score_hidden},
          {"frames", c.model.frames}}},
        {"gitdl",
         {{"temperature", c.gitdl.temperature},
          {"kappa", c.gitdl.kappa},
          {"sigma", c.gitdl.sigma},
          {"epochs", c.gitdl.epochs},
          {"batch_size", c.gitdl.batch_size},
          {"lr", c.gitdl.lr}}},
        {"metric",
         {{"margin", c.metric.margin},
          {"score_weight", c.metric.score_weight},
          {"batch_size", c.metric.batch_size},
          {"instances_per_class", c.metric.instances_per_class},
          {"strategy", to_string(c.metric.strategy)},
          {"gamma", c.metric.gamma},
          {"epochs", c.metric.epochs},
          {"lr", c.metric.lr},
          {"score_lr_scale", c.metric.score_lr_scale},
          {"freeze_input_layer", c.metric.freeze_input_layer}}},
        {"labeled", {{"epochs", c.labeled_epochs}, {"lr", c.action_lr}, {"batch_size", c.action_batch}}},
        {"selftrain",
         {{"confidence_threshold", c.selftrain.confidence_threshold},
          {"tau", c.selftrain.tau},
          {"align_threshold", c.selftrain.align_threshold},
          {"max_iter", c.selftrain.max_iter},
          {"epochs_per_iter", c.selftrain.epochs_per_iter},
          {"mode", to_string(c.selftrain.mode)},
          {"open_world", c.selftrain.open_world},
          {"rho_cap", c.selftrain.rho_cap}}},
    };
}

MetricsLog::MetricsLog(const std::filesystem::path& dir, const std::string& stem, bool echo_stdout)
    : dir_(dir), stem_(stem), echo_(echo_stdout) {
    std::filesystem::create_directories(dir);
    jsonl_ = std::make_unique<std::ofstream>(dir / (stem + ".jsonl"), std::ios::trunc);
    if (!*jsonl_) throw Error("io", "cannot write metrics file in " + dir.string());
}

namespace {

std::string csv_cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace

void MetricsLog::emit(const json& line) {
    lines_.push_back(line);
    const std::string text = line.dump();
    if (echo_) std::cout << text << '\n' << std::flush;
    if (!jsonl_) return;
    *jsonl_ << text << '\n' << std::flush;

    const std::string phase = line.value("phase", std::string("misc"));
    auto& out = csv_[phase];
    auto& cols = columns_[phase];
    if (!out) {
        out = std::make_unique<std::ofstream>(dir_ / (stem_ + "_" + phase + ".csv"), std::ios::trunc);
        for (const auto& [key, value] : line.items())
            if (key != "phase") cols.push_back(key);
        for (std::size_t k = 0; k < cols.size(); ++k) *out << (k ? "," : "") << cols[k];
        *out << '\n';
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
        *out << (k ? "," : "");
        if (line.contains(cols[k])) *out << csv_cell(line[cols[k]]);
    }
    *out << '\n' << std::flush;
}

StageData prepare_stage_data(const Dataset& data, Index frames) {
    StageData s;
    s.num_classes = data.num_classes;
    for (const auto& v : data.samples) {
        switch (v.split) {
            case Split::Labeled:
                if (v.label < 0 || v.label >= data.num_classes)
                    throw FormatError("labeled sample '" + v.id + "' has a class outside the known classes", 0);
                s.labeled_clips.push_back(resample_rows(v.signal, frames));
                s.labeled_labels.push_back(v.label);
                break;
            case Split::Unlabeled:
                s.pool.push_back({v.id, resample_rows(v.signal, frames), v.label});
                s.unlabeled_raw.push_back(v.signal);
                break;
            case Split::Test:
                if (v.label < 0 || v.label >= data.num_classes)
                    throw FormatError("test sample '" + v.id + "' has a class outside the known classes", 0);
                s.test_clips.push_back(resample_rows(v.signal, frames));
                s.test_labels.push_back(v.label);
                s.test_videos.push_back(&v);
                break;
        }
    }
    return s;
}

PhaseMetrics evaluate_phase_metrics(const AlignEncoderParams& encoder, std::span<const SyntheticVideo* const> videos,
                                    std::uint64_t seed) {
    PhaseMetrics out;
    std::vector<Matrix> emb;
    std::vector<std::vector<int>> phases;
    for (const auto* v : videos) {
        emb.push_back(fa_forward(encoder, v->signal));
        phases.push_back(v->phases);
    }
    double tau_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < videos.size(); ++i)
        for (std::size_t j = i + 1; j < videos.size(); ++j) {
            if (videos[i]->label != videos[j]->label) continue;
            tau_sum += kendalls_tau(emb[i], emb[j]);
            ++pairs;
        }
    out.kendall_tau = pairs ? tau_sum / static_cast<double>(pairs) : 0.0;
    if (videos.size() >= 2) {
        Rng rng = make_stream(seed, "probe");
        out.phase_probe = phase_probe_accuracy(emb, phases, ProbeConfig{}, rng);
    }
    return out;
}

DistanceKind parse_distance(const std::string& name) {
    if (name == "cosine-mean") return DistanceKind::CosineMean;
    if (name == "cosine-full") return DistanceKind::CosineFull;
    if (name == "cosine-4seg") return DistanceKind::Cosine4Seg;
    if (name == "softdtw") return DistanceKind::SoftDtw;
    if (name == "alignability") return DistanceKind::Alignability;
    throw ConfigError("unknown distance '" + name + "'");
}

std::string to_string(DistanceKind d) {
    switch (d) {
        case DistanceKind::CosineMean: return "cosine-mean";
        case DistanceKind::CosineFull: return "cosine-full";
        case DistanceKind::Cosine4Seg: return "cosine-4seg";
        case DistanceKind::SoftDtw: return "softdtw";
        case DistanceKind::Alignability: return "alignability";
    }
    return "softdtw";
}

namespace {

struct PairScores {
    std::vector<double> scores;
    std::vector<int> same;
};

PairScores alignability_pairs(const AlignEncoderParams& encoder, const ScoreNetParams* score, const StageData& data,
                              double gamma) {
    std::vector<FrameSequence> emb;
    for (const auto& c : data.test_clips) emb.push_back(fa_embed(encoder, c));
    const Matrix d = pairwise_softdtw(emb, gamma);
    PairScores out;
    for (std::size_t i = 0; i < emb.size(); ++i)
        for (std::size_t j = i + 1; j < emb.size(); ++j) {
            const double dij = d(static_cast<Index>(i), static_cast<Index>(j));
            out.scores.push_back(score ? alignability_score(*score, dij) : -dij);
            out.same.push_back(data.test_labels[i] == data.test_labels[j] ? 1 : 0);
        }
    return out;
}

}  // namespace

double verification_ap_for(const Models& models, const StageData& data, DistanceKind kind, double gamma) {
    if (data.test_clips.size() < 2) throw ConfigError("verification needs at least 2 test samples");
    PairScores ps;
    if (kind == DistanceKind::SoftDtw) {
        ps = alignability_pairs(models.fa_pretrained, nullptr, data, gamma);
    } else if (kind == DistanceKind::Alignability) {
        ps = alignability_pairs(models.fa, &models.fs, data, gamma);
    } else {
        std::vector<Matrix> emb;
        for (const auto& c : data.test_clips) emb.push_back(fa_forward(models.fa_pretrained, c));
        for (std::size_t i = 0; i < emb.size(); ++i)
            for (std::size_t j = i + 1; j < emb.size(); ++j) {
                double d = 0.0;
                if (kind == DistanceKind::CosineMean) d = cosine_mean_distance(emb[i], emb[j]);
                else if (kind == DistanceKind::CosineFull) d = cosine_full_distance(emb[i], emb[j]);
                else d = cosine_4seg_distance(emb[i], emb[j]);
                ps.scores.push_back(-d);
                ps.same.push_back(data.test_labels[i] == data.test_labels[j] ? 1 : 0);
            }
    }
    return verification_ap(ps.scores, ps.same);
}

void pretrain_stage(const RunConfig& cfg, const StageData& data, Models& models, MetricsLog& log) {
    EncoderDims dims = cfg.model;
    Rng init = make_stream(cfg.seed, "init");
    models.fa = AlignEncoderParams::init(dims, init);
    models.g = ProjectionParams::init(dims, init);
    GitdlConfig gc = cfg.gitdl;
    gc.frames = cfg.model.frames;
    Rng batch = make_stream(cfg.seed, "batch");
    pretrain(models.fa, models.g, data.unlabeled_raw, gc, cfg.warmup_epochs, batch,
             [&](int epoch, double loss) { log.emit({{"phase", "gitdl"}, {"epoch", epoch}, {"loss", loss}}); });
    models.fa_pretrained = models.fa;
    if (data.test_videos.size() >= 2) {
        const PhaseMetrics pm = evaluate_phase_metrics(models.fa, data.test_videos, cfg.seed);
        log.emit({{"phase", "gitdl_eval"}, {"kendall_tau", pm.kendall_tau}, {"phase_probe", pm.phase_probe}});
    }
}

void labeled_stage(const RunConfig& cfg, const StageData& data, Models& models, MetricsLog& log) {
    Rng init_fs = make_stream(cfg.seed, "init/fs");
    Rng init_fe = make_stream(cfg.seed, "init/fe");
    models.fa = models.fa_pretrained;
    models.fs = ScoreNetParams::init(cfg.model, init_fs);
    models.fe = ActionEncoderParams::init(cfg.model, data.num_classes, init_fe);

    AlignabilityModel am{models.fa, models.fs, models.version};
    MetricOptimizer opt(am);
    Rng triplet = make_stream(cfg.seed, "triplet");
    const bool can_val = data.test_clips.size() >= 2;
    for (int epoch = 0; epoch < cfg.metric.epochs; ++epoch) {
        const double lr = scheduled_lr(cfg.metric.lr, epoch, cfg.metric.epochs, cfg.warmup_epochs);
        const MetricEpochStats st = train_metric_epoch(am, opt, data.labeled_clips, data.labeled_labels, cfg.metric, lr, triplet);
        json line{{"phase", "metric"}, {"epoch", epoch}, {"loss_at", st.loss_at}, {"loss_score", st.loss_score}};
        if (can_val) {
            models.fa = am.encoder;
            models.fs = am.score;
            line["ap_val"] = verification_ap_for(models, data, DistanceKind::Alignability, cfg.metric.gamma);
        }
        log.emit(line);
    }
    models.fa = am.encoder;
    models.fs = am.score;
    models.version = am.version;

    Adam<ActionEncoderParams> aopt(models.fe);
    Rng batch = make_stream(cfg.seed, "batch");
    for (int epoch = 0; epoch < cfg.labeled_epochs; ++epoch) {
        const double lr = scheduled_lr(cfg.action_lr, epoch, cfg.labeled_epochs, cfg.warmup_epochs);
        const double loss = train_action_epoch(models.fe, aopt, data.labeled_clips, data.labeled_labels, cfg.action_batch, lr, batch);
        json line{{"phase", "action"}, {"epoch", epoch}, {"loss_ce", loss}};
        if (!data.test_clips.empty()) line["test_top1"] = evaluate_top1(models.fe, data.test_clips, data.test_labels);
        log.emit(line);
    }
}

std::vector<IterationMetrics> selftrain_stage(const RunConfig& cfg, const StageData& data, Models& models,
                                              MetricsLog& log) {
    SelfTrainModels st{models.fe, {models.fa, models.fs, models.version}};
    SelfTrainData sd{data.labeled_clips, data.labeled_labels, data.pool, data.test_clips, data.test_labels};
    SelfTrainOptions opts;
    opts.metric = cfg.metric;
    opts.action_lr = cfg.action_lr;
    opts.action_batch = cfg.action_batch;
    opts.seed = cfg.seed;
    opts.threads = cfg.threads;
    const std::string mode = to_string(cfg.selftrain.mode);
    auto history = self_train(st, sd, cfg.selftrain, opts, [&](const IterationMetrics& m) {
        for (const auto& w : m.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
        log.emit({{"phase", "selftrain"},
                  {"iter", m.iter},
                  {"pl_count", m.stats.count},
                  {"pl_acc", m.stats.accuracy},
                  {"test_top1", m.test_top1},
                  {"mode", mode}});
    });
    models.fe = st.action;
    models.fa = st.align.encoder;
    models.fs = st.align.score;
    models.version = st.align.version;
    return history;
}

// ---------------------------------------------------------------------------
// Checkpoint directory.

namespace {

json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) return json{{"groups", json::object()}};
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), 0);
    }
}

}  // namespace

void record_group(const std::filesystem::path& dir, const std::string& group, const std::string& file) {
    json m = read_manifest(dir);
    m["groups"][group] = file;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw Error("io", "cannot write checkpoint manifest in " + dir.string());
    out << m.dump(1) << '\n';
}

std::filesystem::path group_path(const std::filesystem::path& dir, const std::string& group) {
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw Error("checkpoint", "no checkpoint manifest in " + dir.string());
    const json m = read_manifest(dir);
    if (!m.contains("groups") || !m["groups"].contains(group))
        throw Error("checkpoint", "checkpoint " + dir.string() + " has no group '" + group + "'");
    return dir / m["groups"][group].get<std::string>();
}

namespace {

RunConfig with_dataset_dims(RunConfig cfg, const Dataset& data) {
    cfg.model.input_dim = data.feature_dim;
    cfg.validate();
    if (cfg.threads) set_default_threads(cfg.threads);
    return cfg;
}

void write_config(const std::filesystem::path& ckpt, const RunConfig& cfg) {
    std::ofstream out(ckpt / "config.json", std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + (ckpt / "config.json").string());
    out << config_to_json(cfg).dump(1) << '\n';
}

}  // namespace

void run_synth(const RunConfig& cfg, const std::filesystem::path& out) {
    SynthConfig s = cfg.synth;
    s.seed = cfg.seed;
    generate_dataset(s, out);
}

void run_pretrain(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& ckpt) {
    const Dataset data = read_dataset(data_dir);
    const RunConfig cfg = with_dataset_dims(config, data);
    const StageData sd = prepare_stage_data(data, cfg.model.frames);
    Models models;
    MetricsLog log(ckpt, "pretrain", true);
    pretrain_stage(cfg, sd, models, log);
    save_group(ckpt, "fa_pretrained", models.fa_pretrained);
    save_group(ckpt, "fa", models.fa);
    save_group(ckpt, "g", models.g);
    write_config(ckpt, cfg);
}

void run_train_labeled(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& ckpt) {
    const Dataset data = read_dataset(data_dir);
    const RunConfig cfg = with_dataset_dims(config, data);
    const StageData sd = prepare_stage_data(data, cfg.model.frames);
    Models models;
    models.fa_pretrained = load_group<AlignEncoderParams>(ckpt, "fa_pretrained");
    MetricsLog log(ckpt, "train_labeled", true);
    labeled_stage(cfg, sd, models, log);
    for (const char* suffix : {"", "_labeled"}) {
        save_group(ckpt, std::string("fa") + suffix, models.fa);
        save_group(ckpt, std::string("fs") + suffix, models.fs);
        save_group(ckpt, std::string("fe") + suffix, models.fe);
    }
}

void run_selftrain(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& ckpt) {
    const Dataset data = read_dataset(data_dir);
    const RunConfig cfg = with_dataset_dims(config, data);
    const StageData sd = prepare_stage_data(data, cfg.model.frames);
    Models models;
    models.fa_pretrained = load_group<AlignEncoderParams>(ckpt, "fa_pretrained");
    models.fa = load_group<AlignEncoderParams>(ckpt, "fa_labeled");
    models.fs = load_group<ScoreNetParams>(ckpt, "fs_labeled");
    models.fe = load_group<ActionEncoderParams>(ckpt, "fe_labeled");
    if (models.fe.num_classes() != sd.num_classes)
        throw DimensionError("checkpoint classifier has " + std::to_string(models.fe.num_classes()) +
                             " classes, dataset has " + std::to_string(sd.num_classes));
    MetricsLog log(ckpt, "selftrain", true);
    selftrain_stage(cfg, sd, models, log);
    save_group(ckpt, "fa", models.fa);
    save_group(ckpt, "fs", models.fs);
    save_group(ckpt, "fe", models.fe);
}

double run_eval(const std::filesystem::path& data_dir, const std::filesystem::path& ckpt) {
    const Dataset data = read_dataset(data_dir);
    const auto fe = load_group<ActionEncoderParams>(ckpt, "fe");
    const Index frames = std::filesystem::exists(ckpt / "config.json") ? load_run_config(ckpt / "config.json").model.frames
                                                                       : EncoderDims{}.frames;
    const StageData sd = prepare_stage_data(data, frames);
    const double top1 = evaluate_top1(fe, sd.test_clips, sd.test_labels);
    std::cout << json{{"phase", "eval"}, {"test_top1", top1}, {"samples", sd.test_clips.size()}}.dump() << '\n';
    return top1;
}

double run_verify(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& ckpt,
                  DistanceKind kind) {
    const Dataset data = read_dataset(data_dir);
    const RunConfig cfg = with_dataset_dims(config, data);
    const StageData sd = prepare_stage_data(data, cfg.model.frames);
    Models models;
    models.fa_pretrained = load_group<AlignEncoderParams>(ckpt, "fa_pretrained");
    if (kind == DistanceKind::Alignability) {
        models.fa = load_group<AlignEncoderParams>(ckpt, "fa_labeled");
        models.fs = load_group<ScoreNetParams>(ckpt, "fs_labeled");
    }
    const double ap = verification_ap_for(models, sd, kind, cfg.metric.gamma);
    std::cout << json{{"phase", "verify"}, {"distance", to_string(kind)}, {"ap", ap}}.dump() << '\n';
    return ap;
}

}  // namespace fp
