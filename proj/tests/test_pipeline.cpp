#include "finepseudo/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fp;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config precedence: defaults, then file, then command line") {
    const auto file = temp_file("finepseudo_cfg_a.json", R"({"seed": 11, "metric": {"margin": 0.2}})");
    const auto fallback = temp_file("finepseudo_cfg_b.json", R"({"seed": 22, "labeled": {"epochs": 3}})");

    const RunConfig defaults = resolve_config(std::nullopt, std::nullopt, {});
    CHECK(defaults.seed == 0);
    CHECK(defaults.metric.margin == 0.1);

    const RunConfig from_file = resolve_config(file, fallback, {});
    CHECK(from_file.seed == 11);
    CHECK(from_file.metric.margin == 0.2);
    CHECK(from_file.labeled_epochs == RunConfig{}.labeled_epochs);

    const RunConfig from_fallback = resolve_config(std::nullopt, fallback, {});
    CHECK(from_fallback.seed == 22);
    CHECK(from_fallback.labeled_epochs == 3);

    ConfigOverrides o;
    o.seed = 99;
    o.mode = PlMode::Verification;
    o.open_world = true;
    const RunConfig cli = resolve_config(file, fallback, o);
    CHECK(cli.seed == 99);
    CHECK(cli.metric.margin == 0.2);
    CHECK(cli.selftrain.mode == PlMode::Verification);
    CHECK(cli.selftrain.open_world);

    CHECK(resolve_config(std::nullopt, std::filesystem::path("/nonexistent/cfg.json"), {}).seed == 0);
    std::filesystem::remove(file);
    std::filesystem::remove(fallback);
}

TEST_CASE("config documents are strict") {
    RunConfig cfg;
    CHECK_THROWS_AS(apply_config_json(cfg, json::parse(R"({"sede": 1})")), ConfigError);
    CHECK_THROWS_AS(apply_config_json(cfg, json::parse(R"({"metric": {"margn": 0.1}})")), ConfigError);
    CHECK_THROWS_AS(apply_config_json(cfg, json::parse(R"({"metric": {"margin": "wide"}})")), ConfigError);
    CHECK_THROWS_AS(apply_config_json(cfg, json::parse(R"({"selftrain": {"mode": "oracle"}})")), ConfigError);
    CHECK_THROWS_AS(apply_config_json(cfg, json::parse(R"({"preset": "huge"})")), ConfigError);
}

TEST_CASE("presets and serialization") {
    const RunConfig full = preset_config("full");
    CHECK(full.gitdl.epochs == 100);
    CHECK(full.selftrain.max_iter == 10);

    RunConfig cfg;
    apply_config_json(cfg, json::parse(R"({"preset": "full", "seed": 4})"));
    CHECK(cfg.preset == "full");
    CHECK(cfg.gitdl.epochs == 100);
    CHECK(cfg.seed == 4);

    RunConfig round;
    apply_config_json(round, config_to_json(cfg));
    CHECK(config_to_json(round) == config_to_json(cfg));
}

TEST_CASE("metrics log writes JSON lines and one CSV per phase") {
    const auto dir = std::filesystem::temp_directory_path() / "finepseudo_test_log";
    std::filesystem::remove_all(dir);
    {
        MetricsLog log(dir, "run", false);
        log.emit({{"phase", "gitdl"}, {"epoch", 0}, {"loss", 1.5}});
        log.emit({{"phase", "gitdl"}, {"epoch", 1}, {"loss", 1.25}});
        log.emit({{"phase", "metric"}, {"epoch", 0}, {"loss_at", 0.1}});
        CHECK(log.lines().size() == 3);
    }
    const std::string jsonl = slurp(dir / "run.jsonl");
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 3);
    CHECK(json::parse(jsonl.substr(0, jsonl.find('\n')))["loss"] == 1.5);
    CHECK(slurp(dir / "run_gitdl.csv") == "epoch,loss\n0,1.5\n1,1.25\n");
    CHECK(std::filesystem::exists(dir / "run_metric.csv"));

    MetricsLog memory;
    memory.emit({{"phase", "x"}});
    CHECK(memory.lines().size() == 1);
    std::filesystem::remove_all(dir);
}
