#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "kao/cli.hpp"
#include "kao/config.hpp"
#include "kao/errors.hpp"
#include "kao/image_io.hpp"

using namespace kao;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"kao"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_SUITE("config-cli") {

TEST_CASE("defaults, comments and overrides") {
    const auto cfg = RunConfig::parse_text(
        "# comment line\n"
        "\n"
        "schedule.T = 12   # trailing comment\n"
        "  train.batch_size=4\n"
        "data.kind = fields\n");
    CHECK(cfg.get_int("schedule.T") == 12);
    CHECK(cfg.get_int("train.batch_size") == 4);
    CHECK(cfg.get("data.kind") == "fields");
    CHECK(cfg.was_set("schedule.T"));
    CHECK_FALSE(cfg.was_set("seed"));
    // untouched keys keep their defaults
    CHECK(cfg.get_double("train.lr_peak") == doctest::Approx(5e-5));
    CHECK(cfg.get_int("model.levels") == 3);
    CHECK(cfg.get_bool("sampler.lsc"));
}

TEST_CASE("unknown keys and malformed lines are rejected") {
    CHECK_THROWS_AS(RunConfig::parse_text("no.such.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_text("schedule.T 12\n"), ConfigError);
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("bogus", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.get("bogus"), ConfigError);
}

TEST_CASE("typed accessors validate their formats") {
    const auto cfg = RunConfig::parse_text("data.kind = roads\nschedule.T = twelve\n");
    CHECK_THROWS_AS(cfg.get_int("schedule.T"), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("data.kind"), ConfigError);
    const auto cfg2 = RunConfig::parse_text("train.flip_h = no\n");
    CHECK_FALSE(cfg2.get_bool("train.flip_h"));
}

TEST_CASE("render echoes every key and re-parses to the same text") {
    const auto cfg = RunConfig::parse_text("seed = 9\nmodel.img_size = 16\n");
    const std::string text = cfg.render();
    CHECK(text.find("seed = 9\n") != std::string::npos);
    CHECK(text.find("model.img_size = 16\n") != std::string::npos);
    CHECK(text.find("schedule.T = 100\n") != std::string::npos);
    const auto again = RunConfig::parse_text(text);
    CHECK(again.render() == text);
}

TEST_CASE("embedded schedule arrays are cross-checked on parse") {
    auto cfg = RunConfig::parse_text("schedule.T = 8\n");
    cfg.embed_schedule(cfg.schedule());
    const std::string text = cfg.render();
    CHECK_NOTHROW(RunConfig::parse_text(text));

    // tamper with one alpha_bar entry
    const size_t pos = text.find("schedule.alpha_bar = ");
    std::string bad = text;
    bad.replace(pos + 21, 1, "9");
    CHECK_THROWS_AS(RunConfig::parse_text(bad), ConfigError);
}

TEST_CASE("typed views assemble module configs") {
    const auto cfg = RunConfig::parse_text(
        "model.img_size = 16\nmodel.channels = 4,8,16\nkernel.bandwidth = fixed\n"
        "kernel.sigma = 0.7\nsampler.resample_jumps = 2\ndata.kind = fields\n");
    const auto d = cfg.denoiser();
    CHECK(d.channels == std::vector<int64_t>{4, 8, 16});
    const auto k = cfg.kernel();
    CHECK(k.bandwidth_policy == KernelConfig::Bandwidth::kFixed);
    CHECK(k.sigma == doctest::Approx(0.7));
    CHECK(cfg.sampler().resample_jumps == 2);
    CHECK(cfg.scene(3).kind == SceneSpec::Kind::kFields);
    CHECK(cfg.scene(3).seed == 3);
    CHECK_THROWS_AS(RunConfig::parse_text("kernel.bandwidth = wide\n").kernel(), ConfigError);
}

TEST_CASE("compose_grid inserts mid-gray separators") {
    Grid a({1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f});
    Grid b({1, 2, 2}, {-0.5f, -0.5f, -0.5f, -0.5f});
    const Grid out = compose_grid({a, b});
    REQUIRE(out.shape() == std::vector<int64_t>{1, 2, 6});
    CHECK(out.at(0, 0, 0) == 0.5f);
    CHECK(out.at(0, 0, 2) == 0.0f);
    CHECK(out.at(0, 1, 3) == 0.0f);
    CHECK(out.at(0, 0, 4) == -0.5f);
    CHECK_THROWS_AS(compose_grid({a, Grid({1, 3, 2})}), DomainError);
    CHECK_THROWS_AS(compose_grid({}), DomainError);
}

TEST_CASE("ablation labels are fixed, worst to best") {
    CHECK(ablation_labels() ==
          std::vector<std::string>{"no-conditioning", "lsc-only", "lsc+1xEP", "full"});
}

TEST_CASE("cli exit codes for bad invocations") {
    CHECK(run({"gen-data"}) == 2);                                  // missing --config
    CHECK(run({"gen-data", "--config", "/nonexistent.cfg"}) == 2);  // unreadable config
    const auto dir = fs::temp_directory_path() / "kao_cli_err";
    fs::create_directories(dir);
    std::ofstream((dir / "bad.cfg").string()) << "no.such.key = 1\n";
    CHECK(run({"gen-data", "--config", (dir / "bad.cfg").string()}) == 2);

    std::ofstream((dir / "ok.cfg").string())
        << "paths.out = " << (dir / "out").string() << "\n"
        << "paths.data = " << (dir / "data").string() << "\n"
        << "paths.checkpoint = " << (dir / "none.ckpt").string() << "\n";
    // eval needs a checkpoint and a dataset; both are missing
    CHECK(run({"eval", "--config", (dir / "ok.cfg").string()}) == 3);
    fs::remove_all(dir);
}

TEST_CASE("full pipeline: gen-data, train, eval, figures, inpaint") {
    const auto dir = fs::temp_directory_path() / "kao_cli_e2e";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cfg_path = (dir / "run.cfg").string();
    {
        std::ofstream f(cfg_path);
        f << "seed = 11\n"
          << "paths.out = " << (dir / "out").string() << "\n"
          << "paths.data = " << (dir / "data").string() << "\n"
          << "paths.checkpoint = " << (dir / "model.ckpt").string() << "\n"
          << "schedule.T = 6\n"
          << "schedule.beta_start = 0.02\n"
          << "schedule.beta_end = 0.25\n"
          << "model.img_size = 16\n"
          << "data.size = 16\n"
          << "data.count = 4\n"
          << "train.total_iters = 2\n"
          << "train.batch_size = 2\n"
          << "eval.count = 2\n"
          << "figures.rows = 1\n";
    }

    REQUIRE(run({"gen-data", "--config", cfg_path}) == 0);
    const std::string data = (dir / "data").string();
    CHECK(fs::exists(data + "/manifest.tsv"));
    CHECK(fs::exists(data + "/scene_0000.pgm"));
    CHECK(fs::exists(data + "/mask_0003.pgm"));
    CHECK(fs::exists(data + "/resolved_config.txt"));

    // regenerating produces byte-identical outputs, resolved config included
    const std::string resolved = read_bytes(data + "/resolved_config.txt");
    const std::string scene0 = read_bytes(data + "/scene_0000.pgm");
    REQUIRE(run({"gen-data", "--config", cfg_path}) == 0);
    CHECK(read_bytes(data + "/resolved_config.txt") == resolved);
    CHECK(read_bytes(data + "/scene_0000.pgm") == scene0);

    // the resolved config is itself a valid config for the same run
    const auto echoed = RunConfig::parse_file(data + "/resolved_config.txt");
    CHECK(echoed.get_int("data.count") == 4);
    CHECK(echoed.get_int("seed") == 11);

    REQUIRE(run({"train", "--config", cfg_path}) == 0);
    CHECK(fs::exists((dir / "model.ckpt").string()));
    CHECK(fs::exists((dir / "out" / "loss.tsv").string()));
    // training's echo embeds the schedule arrays and still parses
    const auto train_echo = RunConfig::parse_file((dir / "out" / "resolved_config.txt").string());
    CHECK_FALSE(train_echo.get("schedule.alpha_bar").empty());

    const std::string eval_out = (dir / "eval_out").string();
    REQUIRE(run({"eval", "--config", cfg_path, "--out", eval_out}) == 0);
    const std::string table = read_bytes(eval_out + "/eval_table.tsv");
    CHECK(table.substr(0, 28) == "config\tmasked_mse\tpsnr\tssim\n");
    for (const auto& label : ablation_labels()) {
        CHECK(table.find("\n" + label + "\t") != std::string::npos);
        CHECK(fs::exists(eval_out + "/" + label + "/out_0001.pgm"));
    }
    CHECK(fs::exists(eval_out + "/input_0000.pgm"));
    CHECK(fs::exists(eval_out + "/target_0001.pgm"));

    const std::string fig_out = (dir / "fig_out").string();
    REQUIRE(run({"figures", "--config", cfg_path, "--out", fig_out, eval_out}) == 0);
    const Grid fig = read_image(fig_out + "/figure_0000.pgm");
    // six panels of width 16 with five 2-px separators
    CHECK(fig.shape() == std::vector<int64_t>{1, 16, 6 * 16 + 5 * 2});

    const std::string inp_out = (dir / "inp_out").string();
    REQUIRE(run({"inpaint", "--config", cfg_path, "--out", inp_out,
                 data + "/scene_0000.pgm", data + "/mask_0000.pgm"}) == 0);
    CHECK(fs::exists(inp_out + "/inpainted_0000.pgm"));
    CHECK(fs::exists(inp_out + "/resolved_config.txt"));

    // seed override flows into the echoed config
    REQUIRE(run({"gen-data", "--config", cfg_path, "--seed", "99"}) == 0);
    const auto reseeded = RunConfig::parse_file(data + "/resolved_config.txt");
    CHECK(reseeded.get_int("seed") == 99);

    fs::remove_all(dir);
}

}  // TEST_SUITE
