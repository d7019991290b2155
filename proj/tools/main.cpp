#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qvl/analysis.hpp"
#include "qvl/config.hpp"
#include "qvl/errors.hpp"
#include "qvl/runner.hpp"
#include "qvl/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::vector<int>& seeds, const std::string& out) {
    std::vector<std::string> overrides = sets;
    if (!seeds.empty()) {
        std::string joined;
        for (int s : seeds) {
            if (!joined.empty()) joined += ' ';
            joined += std::to_string(s);
        }
        overrides.push_back("run.seeds=" + joined);
    }
    overrides.push_back("run.out_dir=" + out);
    qvl::RunConfig config = qvl::parse_config(config_path, overrides);
    std::vector<qvl::SeedOutcome> outcomes = qvl::train(config);
    bool ok = true;
    for (const qvl::SeedOutcome& o : outcomes) {
        std::cout << "seed " << o.seed << (o.completed ? "  done     " : "  DIVERGED ")
                  << " win_rate=" << fmt(o.final_eval.win_rate) << "  " << o.dir.string()
                  << "\n";
        ok = ok && o.completed;
    }
    return ok ? 0 : 1;
}

int cmd_eval(const std::string& ckpt, int episodes, int seed, const std::string& out) {
    fs::path ckpt_path(ckpt);
    qvl::LoadedRun run = qvl::load_run_checkpoint(ckpt_path.parent_path(), ckpt_path);
    std::unique_ptr<qvl::Env> env = qvl::make_env(run.config);
    qvl::EvalResult r =
        qvl::evaluate(run.learner, *env, episodes, static_cast<std::uint64_t>(seed));
    std::cout << "win_rate=" << fmt(r.win_rate) << "\nmean_return=" << fmt(r.mean_return)
              << "\nmean_length=" << fmt(r.mean_length) << "\n";
    if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream csv(fs::path(out) / "eval.csv");
        csv << "win_rate,mean_return,mean_length\n"
            << fmt(r.win_rate) << ',' << fmt(r.mean_return) << ',' << fmt(r.mean_length) << '\n';
    }
    return 0;
}

int cmd_bias(const std::string& ckpt, const std::string& env_name, int episodes, double gamma,
             int seed, const std::string& out) {
    fs::path ckpt_path(ckpt);
    qvl::LoadedRun run = qvl::load_run_checkpoint(ckpt_path.parent_path(), ckpt_path);
    run.config.env_name = env_name;
    std::unique_ptr<qvl::Env> env = qvl::make_env(run.config);
    qvl::BiasSummary summary =
        qvl::estimate_bias(run.learner, *env, episodes, gamma, static_cast<std::uint64_t>(seed));
    fs::create_directories(out);
    qvl::write_bias_csv(fs::path(out) / "bias.csv", summary);
    std::cout << "samples=" << summary.samples.size() << "\nmean_bias=" << fmt(summary.mean_bias)
              << "\nstd_bias=" << fmt(summary.std_bias) << "\n";
    return 0;
}

int cmd_aggregate(const std::vector<std::string>& runs, double threshold,
                  const std::string& out) {
    std::vector<fs::path> dirs(runs.begin(), runs.end());
    qvl::AggregateResult result = qvl::aggregate_runs(dirs, threshold);
    qvl::write_aggregate_csvs(result, out);
    for (const qvl::ComparisonRow& row : result.table) {
        std::cout << row.algorithm << " on " << row.env << ": seeds=" << row.n_seeds
                  << " final_win_rate=" << fmt(row.final_win_rate);
        if (row.steps_to_threshold >= 0)
            std::cout << " steps_to_threshold=" << row.steps_to_threshold;
        if (row.has_bias) std::cout << " mean_bias=" << fmt(row.mean_bias);
        std::cout << "\n";
    }
    return 0;
}

int cmd_plot(const std::string& in, const std::string& out) {
    for (const fs::path& p : qvl::render_plots(in, out)) std::cout << p.string() << "\n";
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& report_path) {
    qvl::VerifyReport report = qvl::run_verify(suite);
    nlohmann::json j;
    j["suite"] = report.suite;
    j["passed"] = report.passed;
    j["checks"] = nlohmann::json::array();
    for (const qvl::CheckResult& c : report.checks) {
        j["checks"].push_back({{"name", c.name},
                               {"passed", c.passed},
                               {"value", c.value},
                               {"threshold", c.threshold},
                               {"detail", c.detail}});
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << fmt(c.value)
                  << "  threshold=" << fmt(c.threshold) << "\n";
    }
    std::ofstream out(report_path);
    if (!out.good()) throw qvl::IoError("cannot write report to " + report_path);
    out << j.dump(2) << "\n";
    std::cout << "verify " << suite << ": " << (report.passed ? "PASS" : "FAIL") << " ("
              << report.checks.size() << " checks, report " << report_path << ")\n";
    return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale cooperative multi-agent RL: train, evaluate, analyse, verify"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt, env_name, suite, in_dir;
    std::string report_path = "verify_report.json";
    std::vector<std::string> sets, run_dirs;
    std::vector<int> seeds;
    int episodes = 24;
    int seed = 0;
    double gamma = 0.99;
    double threshold = 0.8;

    CLI::App* train = app.add_subcommand("train", "train one algorithm across seeds");
    train->add_option("--config", config_path, "config file path")->required();
    train->add_option("--seed", seeds, "seed list, replaces run.seeds");
    train->add_option("--set", sets, "dotted key=value overrides, applied after the file");
    train->add_option("--out", out_dir, "output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    eval->add_option("--ckpt", ckpt, "checkpoint file inside a run directory")->required();
    eval->add_option("--episodes", episodes, "number of evaluation episodes");
    eval->add_option("--seed", seed, "base seed for episode resets");
    eval->add_option("--out", out_dir, "optional directory for eval.csv");

    CLI::App* bias = app.add_subcommand("bias", "value-bias estimation from greedy rollouts");
    bias->add_option("--ckpt", ckpt, "checkpoint file inside a run directory")->required();
    bias->add_option("--env", env_name, "environment to roll out in")->required();
    bias->add_option("--episodes", episodes, "number of rollout episodes")->required();
    bias->add_option("--gamma", gamma, "discount for the empirical return")->required();
    bias->add_option("--seed", seed, "base seed for episode resets");
    bias->add_option("--out", out_dir, "directory for bias.csv")->required();

    CLI::App* aggregate = app.add_subcommand("aggregate", "cross-seed reduction of run dirs");
    aggregate->add_option("--runs", run_dirs, "run directories or parents of them")->required();
    aggregate->add_option("--threshold", threshold, "win-rate threshold for steps_to_threshold");
    aggregate->add_option("--out", out_dir, "output directory")->required();

    CLI::App* plot = app.add_subcommand("plot", "render SVG plots from aggregate CSVs");
    plot->add_option("--in", in_dir, "directory holding curves.csv and bias_*.csv")->required();
    plot->add_option("--out", out_dir, "output directory")->required();

    CLI::App* verify = app.add_subcommand("verify", "property suites, non-zero exit on failure");
    verify->add_option("suite", suite, "grad|mixer|igm|determinism|all")
        ->required()
        ->check(CLI::IsMember({"grad", "mixer", "igm", "determinism", "all"}));
    verify->add_option("--out", report_path, "report file path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(config_path, sets, seeds, out_dir);
        if (app.got_subcommand(eval)) return cmd_eval(ckpt, episodes, seed, out_dir);
        if (app.got_subcommand(bias))
            return cmd_bias(ckpt, env_name, episodes, gamma, seed, out_dir);
        if (app.got_subcommand(aggregate)) return cmd_aggregate(run_dirs, threshold, out_dir);
        if (app.got_subcommand(plot)) return cmd_plot(in_dir, out_dir);
        if (app.got_subcommand(verify)) return cmd_verify(suite, report_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
