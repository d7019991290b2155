#include "qvl/analysis.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "qvl/errors.hpp"
#include "qvl/networks.hpp"
#include "qvl/runner.hpp"

namespace qvl {

namespace {

std::string fmt_shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt_fixed2(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != expected_header)
        throw ValidationError(path.string() + ": expected header '" + expected_header + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split_cells(line));
    return rows;
}

double to_double(const std::filesystem::path& path, const std::string& cell) {
    try {
        size_t pos = 0;
        double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(path.string() + ": bad numeric cell '" + cell + "'");
    }
}

struct GreedyStep {
    std::vector<int> actions;
    std::vector<double> q;
    std::vector<RecurrentState> next;
};

GreedyStep greedy_step(const LearnerState& learner, const std::vector<Tensor>& obs,
                       const std::vector<ActionMask>& masks,
                       const std::vector<RecurrentState>& hidden) {
    GreedyStep out;
    const int n = learner.q_spec.n_agents;
    const int n_actions = learner.q_spec.n_actions;
    for (int a = 0; a < n; ++a) {
        AgentStepResult r = agent_step(learner.q_net, learner.q_spec, obs[static_cast<size_t>(a)],
                                       hidden[static_cast<size_t>(a)].prev_action, a,
                                       hidden[static_cast<size_t>(a)]);
        int best = -1;
        double best_value = 0.0;
        for (int u = 0; u < n_actions; ++u) {
            if (!masks[static_cast<size_t>(a)][static_cast<size_t>(u)]) continue;
            const double v = r.head_values.data()[u];
            if (best < 0 || v > best_value) {
                best = u;
                best_value = v;
            }
        }
        if (best < 0) throw EmptyReductionError("agent " + std::to_string(a) + " has no action");
        out.actions.push_back(best);
        out.q.push_back(best_value);
        r.next.prev_action = best;
        out.next.push_back(std::move(r.next));
    }
    return out;
}

struct SeedCurve {
    std::vector<std::int64_t> steps;
    std::vector<double> win;
    double bias_mean = 0.0;
    bool has_bias = false;
};

}  // namespace

BiasSummary estimate_bias(const LearnerState& learner, Env& env, int n_episodes, double gamma,
                          std::uint64_t seed) {
    if (n_episodes < 1) throw ValidationError("estimate_bias needs n_episodes >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0,1]");
    const DecPomdpSpec& spec = env.spec();
    if (learner.q_spec.n_agents != spec.n_agents || learner.q_spec.obs_dim != spec.obs_dim ||
        learner.q_spec.n_actions != spec.n_actions)
        throw ValidationError("checkpoint and environment dimensions do not match");
    const bool mixed = is_ctde(learner.kind);
    if (mixed && learner.mixer_spec.state_dim != spec.state_dim)
        throw ValidationError("checkpoint and environment dimensions do not match");

    BiasSummary out;
    for (int ep = 0; ep < n_episodes; ++ep) {
        ResetResult rr = env.reset(seed + static_cast<std::uint64_t>(ep));
        Tensor state = rr.state;
        std::vector<Tensor> obs = rr.obs;
        std::vector<ActionMask> masks = rr.masks;
        std::vector<RecurrentState> hidden;
        for (int a = 0; a < spec.n_agents; ++a) hidden.push_back(initial_state(learner.q_spec));

        std::vector<double> estimated, rewards;
        bool done = false;
        while (!done) {
            GreedyStep g = greedy_step(learner, obs, masks, hidden);
            if (mixed) {
                Tensor values = Tensor::from_data({spec.n_agents}, g.q);
                estimated.push_back(
                    mixer_forward(learner.q_mixer, learner.mixer_spec, values, state));
            } else {
                double sum = 0.0;
                for (double q : g.q) sum += q;
                estimated.push_back(sum / spec.n_agents);
            }
            StepResult sr = env.step(g.actions);
            rewards.push_back(sr.reward);
            done = sr.terminated || sr.truncated;
            state = sr.next_state;
            obs = sr.next_obs;
            masks = sr.next_masks;
            hidden = std::move(g.next);
        }

        // Exact reward tails by reversed accumulation.
        std::vector<double> empirical(rewards.size());
        double tail = 0.0;
        for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
            tail = rewards[static_cast<size_t>(t)] + gamma * tail;
            empirical[static_cast<size_t>(t)] = tail;
        }
        for (size_t t = 0; t < rewards.size(); ++t) {
            BiasSample s;
            s.episode = ep;
            s.step = static_cast<int>(t);
            s.estimated = estimated[t];
            s.empirical = empirical[t];
            out.samples.push_back(s);
        }
    }

    double sum = 0.0;
    for (const BiasSample& s : out.samples) sum += s.estimated - s.empirical;
    out.mean_bias = sum / static_cast<double>(out.samples.size());
    double sq = 0.0;
    for (const BiasSample& s : out.samples) {
        const double d = (s.estimated - s.empirical) - out.mean_bias;
        sq += d * d;
    }
    out.std_bias = std::sqrt(sq / static_cast<double>(out.samples.size()));
    return out;
}

void write_bias_csv(const std::filesystem::path& path, const BiasSummary& summary) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "episode,step,estimated,empirical\n";
    for (const BiasSample& s : summary.samples)
        out << s.episode << ',' << s.step << ',' << fmt_shortest(s.estimated) << ','
            << fmt_shortest(s.empirical) << '\n';
}

LoadedRun load_run_checkpoint(const std::filesystem::path& run_dir,
                              const std::filesystem::path& checkpoint) {
    LoadedRun out{parse_config((run_dir / "manifest.cfg").string(), {}), LearnerState{}};
    std::unique_ptr<Env> env = make_env(out.config);
    Rng init(0);  // placeholder weights; the checkpoint overwrites everything
    out.learner = init_learner(out.config.algorithm, env->spec(), out.config.learn, init);
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + checkpoint.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    load_learner_params(out.learner, deserialize_params(bytes.data(), bytes.size()));
    return out;
}

AggregateResult aggregate_runs(const std::vector<std::filesystem::path>& run_dirs,
                               double threshold) {
    std::vector<std::filesystem::path> runs;
    for (const std::filesystem::path& dir : run_dirs) {
        if (std::filesystem::exists(dir / "metrics.csv")) {
            runs.push_back(dir);
            continue;
        }
        std::vector<std::filesystem::path> children;
        if (std::filesystem::is_directory(dir))
            for (const auto& entry : std::filesystem::directory_iterator(dir))
                if (entry.is_directory() && std::filesystem::exists(entry.path() / "metrics.csv"))
                    children.push_back(entry.path());
        std::sort(children.begin(), children.end());
        runs.insert(runs.end(), children.begin(), children.end());
    }
    if (runs.empty()) throw EmptyInputError("no run directories with metrics.csv found");

    std::map<std::pair<std::string, std::string>, std::vector<SeedCurve>> groups;
    for (const std::filesystem::path& run : runs) {
        RunConfig config = parse_config((run / "manifest.cfg").string(), {});
        SeedCurve curve;
        for (const auto& row : read_csv(run / "metrics.csv", kMetricsHeader)) {
            if (row.size() != 8)
                throw ValidationError((run / "metrics.csv").string() + ": malformed row");
            curve.steps.push_back(
                static_cast<std::int64_t>(to_double(run / "metrics.csv", row[0])));
            curve.win.push_back(to_double(run / "metrics.csv", row[1]));
        }
        if (std::filesystem::exists(run / "bias.csv")) {
            double sum = 0.0;
            std::int64_t n = 0;
            for (const auto& row : read_csv(run / "bias.csv", "episode,step,estimated,empirical")) {
                sum += to_double(run / "bias.csv", row[2]) - to_double(run / "bias.csv", row[3]);
                ++n;
            }
            if (n > 0) {
                curve.bias_mean = sum / static_cast<double>(n);
                curve.has_bias = true;
            }
        }
        groups[{algorithm_name(config.algorithm), config.env_name}].push_back(std::move(curve));
    }

    // Matching grids are required per environment (the curves overlay).
    std::map<std::string, std::vector<std::int64_t>> grid_by_env;
    for (const auto& [key, curves] : groups) {
        for (const SeedCurve& c : curves) {
            auto it = grid_by_env.find(key.second);
            if (it == grid_by_env.end()) {
                grid_by_env.emplace(key.second, c.steps);
            } else if (it->second != c.steps) {
                throw GridMismatchError("run grids for env '" + key.second + "' do not match");
            }
        }
    }

    AggregateResult result;
    for (auto& [key, curves] : groups) {
        // Seed order must not matter, down to the last bit: reduce in a
        // canonical order of the curves themselves.
        std::sort(curves.begin(), curves.end(), [](const SeedCurve& a, const SeedCurve& b) {
            if (a.win != b.win) return a.win < b.win;
            return a.bias_mean < b.bias_mean;
        });
        const std::vector<std::int64_t>& grid = grid_by_env.at(key.second);
        const int n = static_cast<int>(curves.size());
        std::vector<double> mean(grid.size(), 0.0);
        for (const SeedCurve& c : curves)
            for (size_t i = 0; i < grid.size(); ++i) mean[i] += c.win[i];
        for (double& m : mean) m /= n;
        for (size_t i = 0; i < grid.size(); ++i) {
            CurvePoint p;
            p.algorithm = key.first;
            p.env = key.second;
            p.step = grid[i];
            p.mean = mean[i];
            for (const SeedCurve& c : curves) {
                const double d = c.win[i] - mean[i];
                p.variance += d * d;
            }
            p.variance /= n;
            p.stddev = std::sqrt(p.variance);
            p.n_seeds = n;
            result.curves.push_back(std::move(p));
        }

        ComparisonRow row;
        row.algorithm = key.first;
        row.env = key.second;
        row.n_seeds = n;
        row.final_win_rate = mean.back();
        for (size_t i = 0; i < grid.size(); ++i) {
            if (mean[i] >= threshold) {
                row.steps_to_threshold = grid[i];
                break;
            }
        }
        double bias_sum = 0.0;
        int bias_n = 0;
        for (const SeedCurve& c : curves) {
            if (!c.has_bias) continue;
            bias_sum += c.bias_mean;
            ++bias_n;
        }
        if (bias_n > 0) {
            row.mean_bias = bias_sum / bias_n;
            row.has_bias = true;
        }
        result.table.push_back(std::move(row));
    }
    return result;
}

void write_aggregate_csvs(const AggregateResult& result, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream curves(out_dir / "curves.csv");
    if (!curves) throw IoError("cannot open " + (out_dir / "curves.csv").string());
    curves << "algorithm,env,step,mean_win_rate,var_win_rate,std_win_rate,n_seeds\n";
    for (const CurvePoint& p : result.curves)
        curves << p.algorithm << ',' << p.env << ',' << p.step << ',' << fmt_shortest(p.mean)
               << ',' << fmt_shortest(p.variance) << ',' << fmt_shortest(p.stddev) << ','
               << p.n_seeds << '\n';

    std::ofstream table(out_dir / "table.csv");
    if (!table) throw IoError("cannot open " + (out_dir / "table.csv").string());
    table << "algorithm,env,n_seeds,final_win_rate,steps_to_threshold,mean_bias\n";
    for (const ComparisonRow& r : result.table) {
        table << r.algorithm << ',' << r.env << ',' << r.n_seeds << ','
              << fmt_shortest(r.final_win_rate) << ',';
        if (r.steps_to_threshold >= 0) table << r.steps_to_threshold;
        table << ',';
        if (r.has_bias) table << fmt_shortest(r.mean_bias);
        table << '\n';
    }
}

namespace {

const char* algorithm_color(const std::string& name) {
    if (name == "iql") return "#1f77b4";
    if (name == "iqv") return "#ff7f0e";
    if (name == "iqv-max") return "#2ca02c";
    if (name == "qmix") return "#d62728";
    if (name == "qvmix") return "#9467bd";
    if (name == "qvmix-max") return "#8c564b";
    return "#7f7f7f";
}

// Fixed plot geometry; all coordinates printed with two decimals so the
// bytes depend only on the input data.
constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 70, kRight = 690, kTop = 40, kBottom = 420;

struct Scale {
    double lo = 0.0, hi = 1.0;
    double x0 = kLeft, x1 = kRight;
    double at(double v) const { return x0 + (v - lo) / (hi - lo) * (x1 - x0); }
};

void svg_open(std::ostream& out, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << fmt_fixed2((kLeft + kRight) / 2) << "\" y=\"24\" text-anchor=\"middle\""
        << " font-family=\"monospace\" font-size=\"15\">" << title << "</text>\n";
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kRight - kLeft
        << "\" height=\"" << kBottom - kTop << "\" fill=\"none\" stroke=\"#444444\"/>\n";
}

void svg_x_ticks(std::ostream& out, const Scale& x, const std::vector<std::int64_t>& ticks) {
    for (std::int64_t t : ticks) {
        const double px = x.at(static_cast<double>(t));
        out << "<line x1=\"" << fmt_fixed2(px) << "\" y1=\"" << kBottom << "\" x2=\""
            << fmt_fixed2(px) << "\" y2=\"" << kBottom + 5 << "\" stroke=\"#444444\"/>\n";
        out << "<text x=\"" << fmt_fixed2(px) << "\" y=\"" << kBottom + 20
            << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">" << t
            << "</text>\n";
    }
}

void svg_y_ticks(std::ostream& out, const Scale& y, const std::vector<double>& ticks) {
    for (double t : ticks) {
        const double py = y.at(t);
        out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt_fixed2(py) << "\" x2=\"" << kLeft
            << "\" y2=\"" << fmt_fixed2(py) << "\" stroke=\"#444444\"/>\n";
        out << "<text x=\"" << kLeft - 9 << "\" y=\"" << fmt_fixed2(py + 4)
            << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">"
            << fmt_shortest(t) << "</text>\n";
    }
}

std::string polyline_points(const std::vector<std::pair<double, double>>& pts) {
    std::string s;
    for (const auto& [px, py] : pts) {
        if (!s.empty()) s += ' ';
        s += fmt_fixed2(px);
        s += ',';
        s += fmt_fixed2(py);
    }
    return s;
}

std::vector<std::int64_t> pick_x_ticks(const std::vector<std::int64_t>& grid) {
    if (grid.size() <= 8) return grid;
    std::vector<std::int64_t> ticks;
    const size_t stride = (grid.size() + 5) / 6;
    for (size_t i = 0; i < grid.size(); i += stride) ticks.push_back(grid[i]);
    if (ticks.back() != grid.back()) ticks.push_back(grid.back());
    return ticks;
}

}  // namespace

std::vector<std::filesystem::path> render_plots(const std::filesystem::path& in_dir,
                                                const std::filesystem::path& out_dir) {
    const std::filesystem::path curves_path = in_dir / "curves.csv";
    if (!std::filesystem::exists(curves_path))
        throw EmptyInputError("no curves.csv in " + in_dir.string());
    auto rows = read_csv(curves_path, "algorithm,env,step,mean_win_rate,var_win_rate,std_win_rate,n_seeds");
    if (rows.empty()) throw EmptyInputError(curves_path.string() + " has no data rows");

    // env -> algorithm -> (step, mean, std)
    std::map<std::string, std::map<std::string, std::vector<std::array<double, 3>>>> by_env;
    for (const auto& row : rows) {
        if (row.size() != 7) throw ValidationError(curves_path.string() + ": malformed row");
        by_env[row[1]][row[0]].push_back({to_double(curves_path, row[2]),
                                          to_double(curves_path, row[3]),
                                          to_double(curves_path, row[5])});
    }

    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;

    for (const auto& [env_name, algos] : by_env) {
        std::vector<std::int64_t> grid;
        for (const auto& pt : algos.begin()->second)
            grid.push_back(static_cast<std::int64_t>(pt[0]));
        Scale x{static_cast<double>(grid.front()),
                static_cast<double>(std::max(grid.back(), grid.front() + 1)), kLeft, kRight};
        Scale y{1.0, 0.0, kTop, kBottom};  // win rate, axis inverted into screen coords

        const std::filesystem::path path = out_dir / ("winrate_" + env_name + ".svg");
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path.string());
        svg_open(out, "mean win rate, std band (" + env_name + ")");
        svg_x_ticks(out, x, pick_x_ticks(grid));
        svg_y_ticks(out, y, {0.0, 0.25, 0.5, 0.75, 1.0});

        double legend_y = kTop + 16;
        for (const auto& [algo, pts] : algos) {
            const char* color = algorithm_color(algo);
            std::vector<std::pair<double, double>> upper, lower, line;
            for (const auto& pt : pts) {
                const double clamped_hi = std::min(1.0, pt[1] + pt[2]);
                const double clamped_lo = std::max(0.0, pt[1] - pt[2]);
                upper.emplace_back(x.at(pt[0]), y.at(clamped_hi));
                lower.emplace_back(x.at(pt[0]), y.at(clamped_lo));
                line.emplace_back(x.at(pt[0]), y.at(pt[1]));
            }
            std::reverse(lower.begin(), lower.end());
            upper.insert(upper.end(), lower.begin(), lower.end());
            out << "<polygon points=\"" << polyline_points(upper) << "\" fill=\"" << color
                << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
            out << "<polyline points=\"" << polyline_points(line) << "\" fill=\"none\" stroke=\""
                << color << "\" stroke-width=\"1.8\"/>\n";
            out << "<line x1=\"" << kRight - 150 << "\" y1=\"" << fmt_fixed2(legend_y - 4)
                << "\" x2=\"" << kRight - 120 << "\" y2=\"" << fmt_fixed2(legend_y - 4)
                << "\" stroke=\"" << color << "\" stroke-width=\"1.8\"/>\n";
            out << "<text x=\"" << kRight - 114 << "\" y=\"" << fmt_fixed2(legend_y)
                << "\" font-family=\"monospace\" font-size=\"12\">" << algo << "</text>\n";
            legend_y += 16;
        }
        out << "</svg>\n";
        written.push_back(path);
    }

    // Calibration figure from bias_<algorithm>.csv files, when present.
    std::vector<std::filesystem::path> bias_files;
    for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("bias_", 0) == 0 && name.size() > 9 &&
            name.substr(name.size() - 4) == ".csv")
            bias_files.push_back(entry.path());
    }
    std::sort(bias_files.begin(), bias_files.end());
    if (bias_files.empty()) {
        std::fprintf(stderr, "warning: no bias_<algorithm>.csv in %s, skipping the bias plot\n",
                     in_dir.string().c_str());
        return written;
    }

    // algorithm -> step -> (sum est, sum emp, count)
    std::map<std::string, std::map<int, std::array<double, 3>>> series;
    for (const std::filesystem::path& f : bias_files) {
        const std::string stem = f.stem().string().substr(5);
        for (const auto& row : read_csv(f, "episode,step,estimated,empirical")) {
            if (row.size() != 4) throw ValidationError(f.string() + ": malformed row");
            auto& acc = series[stem][static_cast<int>(to_double(f, row[1]))];
            acc[0] += to_double(f, row[2]);
            acc[1] += to_double(f, row[3]);
            acc[2] += 1.0;
        }
    }

    double lo = 0.0, hi = 0.0;
    bool first = true;
    int max_step = 1;
    for (const auto& [algo, per_step] : series) {
        for (const auto& [t, acc] : per_step) {
            for (int k = 0; k < 2; ++k) {
                const double v = acc[static_cast<size_t>(k)] / acc[2];
                if (first || v < lo) lo = v;
                if (first || v > hi) hi = v;
                first = false;
            }
            max_step = std::max(max_step, t);
        }
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    } else {
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }

    Scale x{0.0, static_cast<double>(max_step), kLeft, kRight};
    Scale y{hi, lo, kTop, kBottom};
    const std::filesystem::path path = out_dir / "bias.svg";
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    svg_open(out, "value estimates: solid = estimated, dash-dotted = empirical");
    std::vector<std::int64_t> grid;
    for (int t = 0; t <= max_step; ++t) grid.push_back(t);
    svg_x_ticks(out, x, pick_x_ticks(grid));
    svg_y_ticks(out, y, {lo, (lo + hi) / 2, hi});

    double legend_y = kTop + 16;
    for (const auto& [algo, per_step] : series) {
        const char* color = algorithm_color(algo);
        std::vector<std::pair<double, double>> est, emp;
        for (const auto& [t, acc] : per_step) {
            est.emplace_back(x.at(t), y.at(acc[0] / acc[2]));
            emp.emplace_back(x.at(t), y.at(acc[1] / acc[2]));
        }
        out << "<polyline points=\"" << polyline_points(est) << "\" fill=\"none\" stroke=\""
            << color << "\" stroke-width=\"1.8\"/>\n";
        out << "<polyline points=\"" << polyline_points(emp) << "\" fill=\"none\" stroke=\""
            << color << "\" stroke-width=\"1.8\" stroke-dasharray=\"10,4,2,4\"/>\n";
        out << "<text x=\"" << kRight - 114 << "\" y=\"" << fmt_fixed2(legend_y)
            << "\" font-family=\"monospace\" font-size=\"12\" fill=\"" << color << "\">" << algo
            << "</text>\n";
        legend_y += 16;
    }
    out << "</svg>\n";
    written.push_back(path);
    return written;
}

}  // namespace qvl
