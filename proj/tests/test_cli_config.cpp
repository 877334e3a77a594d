#include <doctest.h>

#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stitchkit/config.hpp"
#include "stitchkit/errors.hpp"

using namespace stitchkit;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& text) {
        path = (std::filesystem::temp_directory_path() /
                ("stitchkit_cfg_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++) + ".cfg"))
                   .string();
        std::ofstream out(path);
        out << text;
    }
    ~TempFile() { std::remove(path.c_str()); }
    static inline int counter = 0;
};

}  // namespace

TEST_CASE("set parses scalar keys and rejects unknown ones") {
    ExperimentConfig cfg;
    cfg.set("seed", "42");
    CHECK(cfg.seed == 42);
    cfg.set("stitch.accept_threshold", "0.25");
    CHECK(cfg.stitch.accept_threshold == doctest::Approx(0.25));
    cfg.set("dynamics.ensemble_size", "3");
    CHECK(cfg.stitch.dynamics.ensemble_size == 3);
    cfg.set("mixture.expert_fraction_pct", "2.5");
    CHECK(cfg.mixture_expert_fraction_pct == doctest::Approx(2.5));

    CHECK_THROWS_AS(cfg.set("no.such.key", "1"), ConfigError);
    CHECK_THROWS_WITH_AS(cfg.set("bc.lr", "fast"),
                         doctest::Contains("bc.lr"), ConfigError);
}

TEST_CASE("list-valued keys parse comma-separated values") {
    ExperimentConfig cfg;
    cfg.set("pipeline.fractions", "2.5,10,40");
    REQUIRE(cfg.pipeline_fractions.size() == 3);
    CHECK(cfg.pipeline_fractions[0] == doctest::Approx(2.5));
    CHECK(cfg.pipeline_fractions[1] == doctest::Approx(10.0));
    CHECK(cfg.pipeline_fractions[2] == doctest::Approx(40.0));
}

TEST_CASE("presets swap hyperparameter sets and later keys override them") {
    ExperimentConfig paper;
    paper.apply_preset("paper");
    CHECK(paper.stitch.dynamics.lr == doctest::Approx(3e-4));
    CHECK(paper.stitch.dynamics.batch == 256);
    CHECK(paper.stitch.dynamics.ensemble_size == 7);
    CHECK(paper.stitch.dynamics.n_elites == 5);
    CHECK(paper.stitch.cvae.lr == doctest::Approx(1e-4));
    CHECK(paper.stitch.cvae.batch == 100);
    CHECK(paper.stitch.wgan.lr == doctest::Approx(1e-4));
    CHECK(paper.stitch.wgan.clip == doctest::Approx(0.01));
    CHECK(paper.stitch.wgan.n_critic == 5);
    CHECK(paper.stitch.value.lr == doctest::Approx(3e-4));
    CHECK(paper.bc.lr == doctest::Approx(1e-3));
    CHECK(paper.stitch.accept_threshold == doctest::Approx(0.1));
    CHECK(paper.stitch.iterations == 5);

    ExperimentConfig desk;
    desk.apply_preset("desk");
    CHECK(desk.stitch.dynamics.batch < paper.stitch.dynamics.batch);
    CHECK(desk.stitch.cvae.steps < paper.stitch.cvae.steps);
    // The acceptance rule and iteration count are part of the method, not the
    // preset.
    CHECK(desk.stitch.accept_threshold == doctest::Approx(0.1));
    CHECK(desk.stitch.iterations == 5);

    desk.set("dynamics.batch", "999");
    CHECK(desk.stitch.dynamics.batch == 999);
    desk.apply_preset("desk");
    CHECK(desk.stitch.dynamics.batch != 999);

    ExperimentConfig bad;
    CHECK_THROWS_AS(bad.apply_preset("laptop"), ConfigError);
}

TEST_CASE("config files parse comments and report file:line on errors") {
    TempFile good(
        "# experiment\n"
        "seed = 7\n"
        "\n"
        "preset = desk   # shrink everything\n"
        "stitch.epsilon = 0.05\n");
    ExperimentConfig cfg;
    load_config_file(cfg, good.path);
    CHECK(cfg.seed == 7);
    CHECK(cfg.preset == "desk");
    CHECK(cfg.stitch.epsilon == doctest::Approx(0.05));
    // preset key applies the preset when set
    CHECK(cfg.stitch.dynamics.batch == 128);

    TempFile bad("seed = 1\nbogus_key = 2\n");
    ExperimentConfig cfg2;
    CHECK_THROWS_WITH_AS(load_config_file(cfg2, bad.path),
                         doctest::Contains(":2"), ConfigError);

    TempFile noeq("seed 1\n");
    ExperimentConfig cfg3;
    CHECK_THROWS_AS(load_config_file(cfg3, noeq.path), ConfigError);

    ExperimentConfig cfg4;
    CHECK_THROWS_AS(load_config_file(cfg4, "/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("resolved dump round-trips through the file parser") {
    ExperimentConfig cfg;
    cfg.apply_preset("desk");
    cfg.set("seed", "1234");
    cfg.set("stitch.epsilon", "0.037");
    cfg.set("pipeline.fractions", "5,20");
    const std::string dump = cfg.resolved();

    // Every line must itself be a valid `key = value` assignment.
    ExperimentConfig reparsed;
    std::istringstream in(dump);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) apply_config_line(reparsed, line, "dump", ++line_no);

    CHECK(reparsed.seed == 1234);
    CHECK(reparsed.stitch.epsilon == doctest::Approx(0.037));
    REQUIRE(reparsed.pipeline_fractions.size() == 2);
    CHECK(reparsed.pipeline_fractions[1] == doctest::Approx(20.0));
    CHECK(reparsed.resolved() == dump);
}
