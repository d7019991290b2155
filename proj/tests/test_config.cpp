#include <fstream>

#include "doctest.h"
#include "qvl/config.hpp"
#include "qvl/errors.hpp"

using namespace qvl;

TEST_CASE("empty text yields every documented default") {
    RunConfig parsed = parse_config_text("", {});
    RunConfig defaults;
    CHECK(parsed.env_name == defaults.env_name);
    CHECK(parsed.algorithm == defaults.algorithm);
    CHECK(parsed.total_steps == defaults.total_steps);
    CHECK(parsed.eval_period == defaults.eval_period);
    CHECK(parsed.eval_episodes == defaults.eval_episodes);
    CHECK(parsed.checkpoint_period == defaults.checkpoint_period);
    CHECK(parsed.seeds == defaults.seeds);
    CHECK(parsed.gamma == defaults.gamma);
    CHECK(parsed.buffer_capacity == defaults.buffer_capacity);
    CHECK(parsed.epsilon.start == defaults.epsilon.start);
    CHECK(parsed.epsilon.end == defaults.epsilon.end);
    CHECK(parsed.epsilon.anneal_steps == defaults.epsilon.anneal_steps);
    CHECK(parsed.learn.lr == defaults.learn.lr);
    CHECK(parsed.learn.batch_size == defaults.learn.batch_size);
    CHECK(parsed.learn.target_period == defaults.learn.target_period);
    CHECK(parsed.learn.hidden_dim == defaults.learn.hidden_dim);
    CHECK(parsed.combat.width == defaults.combat.width);
    CHECK(parsed.payoff.empty());
    // The formatted defaults double as the documentation table; they must
    // parse back to the same rendering.
    std::string manifest = format_config(defaults);
    CHECK(format_config(parse_config_text(manifest, {})) == manifest);
}

TEST_CASE("sections, comments and lists parse") {
    const char* text = R"(
# training setup
[run]
algorithm = qvmix-max
env = matrix
total_steps = 5000
eval_period = 1000
seeds = 3, 5, 8
gamma = 0.9          # inline comment
epsilon_anneal = 2000

[learn]
lr = 0.001
hidden_dim = 16

[env]
payoff = 8 0 0 6
)";
    RunConfig c = parse_config_text(text, {});
    CHECK(c.algorithm == AlgorithmKind::QVMIX_MAX);
    CHECK(c.env_name == "matrix");
    CHECK(c.total_steps == 5000);
    CHECK(c.eval_period == 1000);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 5, 8});
    CHECK(c.gamma == 0.9);
    CHECK(c.epsilon.anneal_steps == 2000);
    CHECK(c.learn.lr == 0.001);
    CHECK(c.learn.hidden_dim == 16);
    CHECK(c.payoff == std::vector<double>{8, 0, 0, 6});
}

TEST_CASE("overrides apply after the file parse") {
    const char* text = "[run]\ngamma = 0.95\ntotal_steps = 1000\n";
    RunConfig c = parse_config_text(text, {"run.gamma=0.9", "learn.batch_size=8"});
    CHECK(c.gamma == 0.9);
    CHECK(c.total_steps == 1000);
    CHECK(c.learn.batch_size == 8);
}

TEST_CASE("unknown keys and sections are named in the error") {
    CHECK_THROWS_WITH_AS(parse_config_text("[run]\nlearning_rate = 3\n", {}),
                         doctest::Contains("run.learning_rate"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[optim]\nlr = 3\n", {}),
                         doctest::Contains("optim"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("", {"run.warmup=5"}),
                         doctest::Contains("run.warmup"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("gamma = 0.9\n", {}), ConfigError);  // before any section
    CHECK_THROWS_AS(parse_config_text("[run]\ngamma 0.9\n", {}), ConfigError);  // missing =
    CHECK_THROWS_AS(parse_config_text("[run\ngamma = 0.9\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("", {"run.gamma"}), ConfigError);  // override missing =
}

TEST_CASE("type mismatches are rejected") {
    CHECK_THROWS_AS(parse_config_text("[run]\ntotal_steps = soon\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\ntotal_steps = 12x\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\ngamma = high\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[env]\nstochastic_damage = maybe\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\nalgorithm = vdn\n", {}), ConfigError);
}

TEST_CASE("range violations surface as ConfigError at parse time") {
    CHECK_THROWS_AS(parse_config_text("[run]\ngamma = 1.5\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("", {"run.gamma=1.5"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\nseeds =\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[learn]\nbatch_size = 9000\n", {}),
                    ConfigError);  // exceeds default buffer capacity
    CHECK_THROWS_AS(parse_config_text("[env]\nattack_range = 5\nsight_range = 2\n", {}),
                    ConfigError);  // bad combat geometry caught via env construction
    CHECK_THROWS_AS(
        parse_config_text("[run]\nenv = matrix\n\n[env]\npayoff = 1 2 3\n", {}),
        ConfigError);  // not square
}

TEST_CASE("manifest round-trips through the parser") {
    RunConfig c = parse_config_text("[run]\nenv = matrix\nalgorithm = iqv\nseeds = 42\n",
                                    {"run.gamma=0.8", "env.payoff=4 0 0 2"});
    std::string manifest = format_config(c);
    RunConfig back = parse_config_text(manifest, {});
    CHECK(format_config(back) == manifest);
    CHECK(back.gamma == 0.8);
    CHECK(back.payoff == std::vector<double>{4, 0, 0, 2});
    CHECK(back.seeds == std::vector<std::uint64_t>{42});
}

TEST_CASE("parse_config reads from a file") {
    const std::string path = "test_config_tmp.cfg";
    {
        std::ofstream out(path);
        out << "[run]\ntotal_steps = 777\n";
    }
    RunConfig c = parse_config(path, {});
    CHECK(c.total_steps == 777);
    std::remove(path.c_str());
    CHECK_THROWS_AS(parse_config("no_such_file.cfg", {}), ConfigError);
}
