#include "finepseudo/gradcheck.hpp"
#include "finepseudo/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

int report_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
    return 1;
}

std::vector<std::string> suites_for(const std::string& module) {
    static const std::map<std::string, std::vector<std::string>> groups{
        {"softdtw", {"softdtw-cost", "softdtw-embed"}},
        {"encoders", {"fa", "fe", "fs", "g", "loss-ce"}},
        {"metriclearn", {"loss-at", "loss-score", "loss-av"}},
        {"gitdl", {"loss-gitdl"}},
    };
    if (module.empty()) return fp::gradcheck_suite_names();
    if (const auto it = groups.find(module); it != groups.end()) return it->second;
    const auto& all = fp::gradcheck_suite_names();
    if (std::find(all.begin(), all.end(), module) != all.end()) return {module};
    throw fp::ConfigError("unknown gradcheck module '" + module + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Alignability-based pseudo-labeling experiments on synthetic sequences", "finepseudo"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> config_path;
    std::string data, out, ckpt, mode, distance, module;
    bool open_world = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Root seed (overrides the config file)");
        sub->add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--config", config_path, "JSON config file");
    synth->add_option("--out", out, "Output dataset directory")->required();
    add_common(synth);

    auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining of the frame encoder");
    pre->add_option("--data", data, "Dataset directory")->required();
    pre->add_option("--config", config_path, "JSON config file");
    pre->add_option("--out", out, "Checkpoint directory")->required();
    add_common(pre);

    auto* lab = app.add_subcommand("train-labeled", "Metric learning and classifier training on labeled data");
    lab->add_option("--data", data, "Dataset directory")->required();
    lab->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    lab->add_option("--config", config_path, "JSON config file");
    add_common(lab);

    auto* st = app.add_subcommand("selftrain", "Pseudo-label self-training");
    st->add_option("--data", data, "Dataset directory")->required();
    st->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    st->add_option("--config", config_path, "JSON config file");
    st->add_option("--mode", mode, "Pseudo-label mode")->check(CLI::IsMember({"confidence", "verification", "collaborative"}));
    st->add_flag("--open-world", open_world, "Reject samples with low alignability to every class");
    add_common(st);

    auto* ev = app.add_subcommand("eval", "Top-1 accuracy of the classifier on the test split");
    ev->add_option("--data", data, "Dataset directory")->required();
    ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();

    auto* ver = app.add_subcommand("verify", "Pair verification AP for one distance");
    ver->add_option("--data", data, "Dataset directory")->required();
    ver->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    ver->add_option("--distance", distance, "Pair distance")
        ->required()
        ->check(CLI::IsMember({"cosine-mean", "cosine-full", "cosine-4seg", "softdtw", "alignability"}));
    add_common(ver);

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
    gc->add_option("--module", module, "Module or suite name (default: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what());
        return 2;
    }

    try {
        fp::ConfigOverrides ov;
        ov.seed = seed;
        ov.threads = threads;
        if (!mode.empty()) ov.mode = fp::parse_pl_mode(mode);
        ov.open_world = open_world;
        std::optional<std::filesystem::path> file;
        if (config_path) file = *config_path;
        if (threads) fp::set_default_threads(*threads);

        if (*synth) {
            fp::run_synth(fp::resolve_config(file, std::nullopt, ov), out);
        } else if (*pre) {
            fp::run_pretrain(fp::resolve_config(file, std::nullopt, ov), data, out);
        } else if (*lab) {
            fp::run_train_labeled(fp::resolve_config(file, std::filesystem::path(ckpt) / "config.json", ov), data, ckpt);
        } else if (*st) {
            fp::run_selftrain(fp::resolve_config(file, std::filesystem::path(ckpt) / "config.json", ov), data, ckpt);
        } else if (*ev) {
            fp::run_eval(data, ckpt);
        } else if (*ver) {
            fp::run_verify(fp::resolve_config(std::nullopt, std::filesystem::path(ckpt) / "config.json", ov), data, ckpt,
                           fp::parse_distance(distance));
        } else if (*gc) {
            bool ok = true;
            for (const auto& name : suites_for(module)) {
                const fp::GradSuiteResult r = fp::run_gradcheck_suite(name);
                std::cout << json{{"phase", "gradcheck"},
                                  {"suite", r.name},
                                  {"seeds", r.seeds},
                                  {"checked", r.checked},
                                  {"max_rel_error", r.max_rel_error},
                                  {"passed", r.passed}}
                                 .dump()
                          << '\n';
                ok = ok && r.passed;
            }
            if (!ok) return report_error("gradcheck", "at least one gradient suite exceeded the tolerance");
        }
    } catch (const fp::Error& e) {
        return report_error(e.kind(), e.what());
    } catch (const std::exception& e) {
        return report_error("internal", e.what());
    }
    return 0;
}
