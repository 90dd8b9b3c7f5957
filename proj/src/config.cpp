#include "t2s/config.hpp"

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "t2s/errors.hpp"

namespace t2s {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::int64_t out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean (0/1/true/false), got '" + v + "'");
}

std::vector<int> to_order(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        out.push_back(static_cast<int>(to_int(key, trim(part))));
    }
    return out;
}

}  // namespace

LifelongRunConfig default_run_config() {
    LifelongRunConfig c;
    c.suite.K = 10;
    c.policy.blocks = 2;
    c.policy.width = 48;
    c.policy.j = 32;
    c.policy.mu = 0.5;
    c.policy.window = 4;
    c.policy.capacity = 448;
    c.policy.heads = 1;
    c.demos_per_task = 100;
    c.epochs = 200;
    c.batch = 32;
    c.eval_episodes = 20;
    c.optim.kind = OptKind::Adam;
    c.optim.lr = 5e-3;
    c.mode = RunMode::T2s;
    c.seed = 7;
    return c;
}

void apply_config_kv(LifelongRunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "batch") cfg.batch = static_cast<int>(to_int(key, value));
    else if (key == "demos_per_task") cfg.demos_per_task = static_cast<int>(to_int(key, value));
    else if (key == "divergence_guard") cfg.divergence_guard = to_double(key, value);
    else if (key == "epochs") cfg.epochs = static_cast<int>(to_int(key, value));
    else if (key == "eval_episodes") cfg.eval_episodes = static_cast<int>(to_int(key, value));
    else if (key == "mode") cfg.mode = run_mode_from_string(value);
    else if (key == "nbt_convention") cfg.nbt_convention = nbt_convention_from_string(value);
    else if (key == "order") cfg.order = to_order(key, value);
    else if (key == "opt_beta1") cfg.optim.beta1 = to_double(key, value);
    else if (key == "opt_beta2") cfg.optim.beta2 = to_double(key, value);
    else if (key == "opt_eps") cfg.optim.eps = to_double(key, value);
    else if (key == "opt_kind") cfg.optim.kind = opt_kind_from_string(value);
    else if (key == "opt_lr") cfg.optim.lr = to_double(key, value);
    else if (key == "opt_momentum") cfg.optim.momentum = to_double(key, value);
    else if (key == "policy_blocks") cfg.policy.blocks = to_int(key, value);
    else if (key == "policy_capacity") cfg.policy.capacity = to_int(key, value);
    else if (key == "policy_d_act") cfg.policy.d_act = to_int(key, value);
    else if (key == "policy_heads") cfg.policy.heads = static_cast<int>(to_int(key, value));
    else if (key == "policy_j") cfg.policy.j = to_int(key, value);
    else if (key == "policy_mu") cfg.policy.mu = to_double(key, value);
    else if (key == "policy_obs_dim") cfg.policy.obs_dim = to_int(key, value);
    else if (key == "policy_refill") cfg.policy.refill = to_bool(key, value);
    else if (key == "policy_token_mixing") cfg.policy.token_mixing = to_bool(key, value);
    else if (key == "policy_width") cfg.policy.width = to_int(key, value);
    else if (key == "policy_window") cfg.policy.window = to_int(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "suite_a_max") cfg.suite.a_max = to_double(key, value);
    else if (key == "suite_agent_hi") cfg.suite.agent_hi = to_double(key, value);
    else if (key == "suite_agent_lo") cfg.suite.agent_lo = to_double(key, value);
    else if (key == "suite_eps") cfg.suite.eps = to_double(key, value);
    else if (key == "suite_goal_jitter") cfg.suite.goal_jitter = to_double(key, value);
    else if (key == "suite_horizon") cfg.suite.horizon = to_int(key, value);
    else if (key == "suite_object_hi") cfg.suite.object_hi = to_double(key, value);
    else if (key == "suite_object_lo") cfg.suite.object_lo = to_double(key, value);
    else if (key == "suite_r_contact") cfg.suite.r_contact = to_double(key, value);
    else if (key == "suite_tasks") cfg.suite.K = static_cast<int>(to_int(key, value));
    else throw ConfigError("unknown config key: " + key);
}

LifelongRunConfig parse_config_text(const std::string& text, const LifelongRunConfig& base) {
    LifelongRunConfig cfg = base;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + line);
        }
        apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

LifelongRunConfig load_config_file(const std::string& path, const LifelongRunConfig& base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), base);
}

}  // namespace t2s
