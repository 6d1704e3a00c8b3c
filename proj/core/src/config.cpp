#include "keec/config.hpp"

#include <zlib.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "keec/errors.hpp"

namespace keec {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

// One row per key: how to set it from text and how to dump it canonically.
struct Field {
    Setter set;
    std::function<std::string(const RunConfig&)> get;
    bool hashed = true;  // path fields are excluded from canonical_config
};

const std::map<std::string, Field>& field_table() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto dbl = [&t](const std::string& name, double RunConfig::*mem) {
            t[name] = {[mem](RunConfig& c, const std::string& k, const std::string& v) {
                           c.*mem = parse_double(k, v);
                       },
                       [mem](const RunConfig& c) { return fmt(c.*mem); }};
        };
        auto intf = [&t](const std::string& name, int RunConfig::*mem) {
            t[name] = {[mem](RunConfig& c, const std::string& k, const std::string& v) {
                           long long x = parse_int(k, v);
                           if (x < INT32_MIN || x > INT32_MAX)
                               throw ConfigError("config key '" + k + "': out of range");
                           c.*mem = static_cast<int>(x);
                       },
                       [mem](const RunConfig& c) { return std::to_string(c.*mem); }};
        };
        auto boolf = [&t](const std::string& name, bool RunConfig::*mem) {
            t[name] = {[mem](RunConfig& c, const std::string& k, const std::string& v) {
                           c.*mem = parse_bool(k, v);
                       },
                       [mem](const RunConfig& c) { return (c.*mem) ? "true" : "false"; }};
        };
        auto strf = [&t](const std::string& name, std::string RunConfig::*mem, bool hashed) {
            t[name] = {[mem](RunConfig& c, const std::string&, const std::string& v) {
                           c.*mem = v;
                       },
                       [mem](const RunConfig& c) { return c.*mem; }, hashed};
        };

        strf("env", &RunConfig::env, true);
        dbl("dt", &RunConfig::dt);
        dbl("action_bound", &RunConfig::action_bound);
        dbl("r1_scale", &RunConfig::r1_scale);
        dbl("r2_scale", &RunConfig::r2_scale);
        intf("traj_count", &RunConfig::traj_count);
        intf("traj_steps", &RunConfig::traj_steps);
        intf("window_l", &RunConfig::window_l);
        intf("epochs", &RunConfig::epochs);
        intf("batch", &RunConfig::batch);
        dbl("lr", &RunConfig::lr);
        dbl("lr_decay", &RunConfig::lr_decay);
        dbl("lambda_met", &RunConfig::lambda_met);
        intf("latent_n", &RunConfig::latent_n);
        dbl("eps", &RunConfig::eps);
        dbl("ema", &RunConfig::ema);
        boolf("normalize", &RunConfig::normalize);
        intf("episodes", &RunConfig::episodes);
        intf("horizon", &RunConfig::horizon);
        intf("updates_per_episode", &RunConfig::updates_per_episode);
        intf("value_batch", &RunConfig::value_batch);
        intf("buffer_capacity", &RunConfig::buffer_capacity);
        dbl("gamma", &RunConfig::gamma);
        dbl("value_lr", &RunConfig::value_lr);
        dbl("value_lr_decay", &RunConfig::value_lr_decay);
        dbl("out_scale", &RunConfig::out_scale);
        intf("target_every", &RunConfig::target_every);
        dbl("explore_noise", &RunConfig::explore_noise);
        strf("value_variant", &RunConfig::value_variant, true);
        boolf("use_quadratic_policy", &RunConfig::use_quadratic_policy);
        boolf("corrected_quadratic", &RunConfig::corrected_quadratic);
        intf("eval_episodes", &RunConfig::eval_episodes);
        intf("eval_horizon", &RunConfig::eval_horizon);
        t["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                         long long x = parse_int(k, v);
                         if (x < 0) throw ConfigError("config key 'seed': must be >= 0");
                         c.seed = static_cast<std::uint64_t>(x);
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }};
        strf("data_path", &RunConfig::data_path, false);
        strf("bundle_path", &RunConfig::bundle_path, false);
        strf("out_path", &RunConfig::out_path, false);
        return t;
    }();
    return table;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = field_table().find(key);
        if (it == field_table().end())
            throw ConfigError("unknown config key '" + key + "' (line " +
                              std::to_string(lineno) + ")");
        if (!seen.insert(key).second)
            throw ConfigError("duplicate config key '" + key + "' (line " +
                              std::to_string(lineno) + ")");
        it->second.set(cfg, key, value);
    }
    if (!cfg.env.empty()) env_from_string(cfg.env);  // reject unknown env names early
    if (cfg.value_variant != "mlp" && cfg.value_variant != "quadratic")
        throw ConfigError("config key 'value_variant': expected mlp or quadratic, got '" +
                          cfg.value_variant + "'");
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string canonical_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : field_table()) {
        if (!field.hashed) continue;
        out += name;
        out += " = ";
        out += field.get(cfg);
        out += '\n';
    }
    return out;
}

std::uint32_t config_hash(const RunConfig& cfg) {
    const std::string text = canonical_config(cfg);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(text.data()),
                static_cast<uInt>(text.size()));
    return static_cast<std::uint32_t>(crc);
}

EnvSpec make_env(const RunConfig& cfg) {
    EnvSpec env = EnvSpec::make(cfg.env);
    if (cfg.dt != 0.0) env.dt = cfg.dt;
    if (cfg.action_bound != 0.0) {
        env.action_low = Vector::Constant(env.d, -cfg.action_bound);
        env.action_high = Vector::Constant(env.d, cfg.action_bound);
    }
    env.R1 *= cfg.r1_scale;
    env.R2 *= cfg.r2_scale;
    env.validate();
    return env;
}

}  // namespace keec
