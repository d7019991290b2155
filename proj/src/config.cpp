#include "qvl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "qvl/errors.hpp"

namespace qvl {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == ',') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

std::int64_t to_i64(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        std::int64_t v = std::stoll(value, &pos);
        if (pos != value.size()) bad_value(key, value, "an integer");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value, "an integer");
    }
}

int to_int(const std::string& key, const std::string& value) {
    return static_cast<int>(to_i64(key, value));
}

double to_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) bad_value(key, value, "a number");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value, "a number");
    }
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "a boolean (true/false)");
}

std::string fmt_g17(double v) {
    char buf[64];  // shortest form that parses back to the same double
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"run.algorithm", [](RunConfig& c, const std::string&, const std::string& v) {
             c.algorithm = parse_algorithm(v);
         }},
        {"run.env", [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "combat" && v != "matrix") bad_value(k, v, "one of combat|matrix");
             c.env_name = v;
         }},
        {"run.total_steps", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.total_steps = to_i64(k, v);
         }},
        {"run.eval_period", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.eval_period = to_i64(k, v);
         }},
        {"run.eval_episodes", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.eval_episodes = to_int(k, v);
         }},
        {"run.checkpoint_period", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.checkpoint_period = to_i64(k, v);
         }},
        {"run.seeds", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seeds.clear();
             for (const std::string& item : split_list(v))
                 c.seeds.push_back(static_cast<std::uint64_t>(to_i64(k, item)));
         }},
        {"run.gamma", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.gamma = to_double(k, v);
         }},
        {"run.buffer_capacity", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.buffer_capacity = to_int(k, v);
         }},
        {"run.out_dir", [](RunConfig& c, const std::string&, const std::string& v) {
             c.out_dir = v;
         }},
        {"run.epsilon_start", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.epsilon.start = to_double(k, v);
         }},
        {"run.epsilon_end", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.epsilon.end = to_double(k, v);
         }},
        {"run.epsilon_anneal", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.epsilon.anneal_steps = to_i64(k, v);
         }},
        {"learn.lr", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.learn.lr = to_double(k, v);
         }},
        {"learn.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.learn.batch_size = to_int(k, v);
         }},
        {"learn.target_period", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.learn.target_period = to_int(k, v);
         }},
        {"learn.hidden_dim", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.learn.hidden_dim = to_int(k, v);
         }},
        {"learn.embed_dim", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.learn.embed_dim = to_int(k, v);
         }},
        {"learn.hypernet_hidden", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.learn.hypernet_hidden = to_int(k, v);
         }},
        {"env.width", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.width = to_int(k, v);
         }},
        {"env.height", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.height = to_int(k, v);
         }},
        {"env.n_allies", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.n_allies = to_int(k, v);
         }},
        {"env.n_enemies", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.n_enemies = to_int(k, v);
         }},
        {"env.health", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.health = to_int(k, v);
         }},
        {"env.damage", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.damage = to_int(k, v);
         }},
        {"env.attack_range", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.attack_range = to_int(k, v);
         }},
        {"env.sight_range", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.sight_range = to_int(k, v);
         }},
        {"env.stochastic_damage", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.stochastic_damage = to_bool(k, v);
         }},
        {"env.win_bonus", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.win_bonus = to_double(k, v);
         }},
        {"env.episode_limit", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.combat.episode_limit = to_int(k, v);
         }},
        {"env.payoff", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.payoff.clear();
             for (const std::string& item : split_list(v))
                 c.payoff.push_back(to_double(k, item));
         }},
    };
    return table;
}

void apply(RunConfig& config, const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, key, value);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    RunConfig config;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "run" && section != "learn" && section != "env")
                throw ConfigError("unknown config section '" + section + "'");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("key '" + key + "' appears before any [section] header");
        apply(config, section + "." + key, value);
    }
    for (const std::string& item : overrides) {
        size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + item + "' is not of the form section.key=value");
        apply(config, trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
    try {
        validate_run_config(config);
        make_env(config);  // surfaces bad env settings at parse time
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return config;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str(), overrides);
}

std::string format_config(const RunConfig& config) {
    std::ostringstream out;
    out << "[run]\n";
    out << "algorithm = " << algorithm_name(config.algorithm) << '\n';
    out << "env = " << config.env_name << '\n';
    out << "total_steps = " << config.total_steps << '\n';
    out << "eval_period = " << config.eval_period << '\n';
    out << "eval_episodes = " << config.eval_episodes << '\n';
    out << "checkpoint_period = " << config.checkpoint_period << '\n';
    out << "seeds =";
    for (std::uint64_t s : config.seeds) out << ' ' << s;
    out << '\n';
    out << "gamma = " << fmt_g17(config.gamma) << '\n';
    out << "buffer_capacity = " << config.buffer_capacity << '\n';
    out << "out_dir = " << config.out_dir << '\n';
    out << "epsilon_start = " << fmt_g17(config.epsilon.start) << '\n';
    out << "epsilon_end = " << fmt_g17(config.epsilon.end) << '\n';
    out << "epsilon_anneal = " << config.epsilon.anneal_steps << '\n';
    out << "\n[learn]\n";
    out << "lr = " << fmt_g17(config.learn.lr) << '\n';
    out << "batch_size = " << config.learn.batch_size << '\n';
    out << "target_period = " << config.learn.target_period << '\n';
    out << "hidden_dim = " << config.learn.hidden_dim << '\n';
    out << "embed_dim = " << config.learn.embed_dim << '\n';
    out << "hypernet_hidden = " << config.learn.hypernet_hidden << '\n';
    out << "\n[env]\n";
    out << "width = " << config.combat.width << '\n';
    out << "height = " << config.combat.height << '\n';
    out << "n_allies = " << config.combat.n_allies << '\n';
    out << "n_enemies = " << config.combat.n_enemies << '\n';
    out << "health = " << config.combat.health << '\n';
    out << "damage = " << config.combat.damage << '\n';
    out << "attack_range = " << config.combat.attack_range << '\n';
    out << "sight_range = " << config.combat.sight_range << '\n';
    out << "stochastic_damage = " << (config.combat.stochastic_damage ? "true" : "false") << '\n';
    out << "win_bonus = " << fmt_g17(config.combat.win_bonus) << '\n';
    out << "episode_limit = " << config.combat.episode_limit << '\n';
    out << "payoff =";
    for (double p : config.payoff) out << ' ' << fmt_g17(p);
    out << '\n';
    return out.str();
}

}  // namespace qvl
