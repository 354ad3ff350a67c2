#ifndef ONCOBANDIT_CONFIG_HPP
#define ONCOBANDIT_CONFIG_HPP

#include "oncobandit/runner.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace oncobandit {

/* Grid config files
 * -----------------
 * Line-oriented `key = value`, `#` starts a comment.
 *
 *   responses  = data/responses.csv     # or: synthetic = n,k,dim,seed
 *   features   = data/features.csv
 *   biomarkers = data/biomarkers.csv
 *   rules      = data/rules.txt
 *   out        = results
 *   states     = genomic,guideline,both
 *   rewards    = diff,rank,percentile
 *   agents     = uniform,linear,dropout
 *   seeds      = 1,2,3,4,5
 *   horizon    = 0                       # 0: one pass over the cohort
 *   window     = 50
 *   dropout.keep = 0.8                   # <agent>.<parameter> overrides
 *
 * Relative paths are resolved against the config file's directory.
 */

struct GridConfig {
    std::string responses, features, biomarkers, rules;
    std::optional<std::array<std::uint64_t, 4>> synthetic;  // n, k, dim, seed
    std::string out = "results";
    std::size_t window = 50;
    GridSpec grid;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) throw Error(what + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

} // namespace detail

inline GridConfig parse_grid_config(std::istream& in, const std::string& file = "grid", const std::filesystem::path& base = {}) {
    GridConfig cfg;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::vector<std::string> agent_names;
    std::string text;
    std::size_t line = 0;
    auto where = [&]() { return file + ":" + std::to_string(line); };
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return (path.is_relative() && !base.empty() ? base / path : path).string();
    };
    while (std::getline(in, text)) {
        ++line;
        if (auto h = text.find('#'); h != std::string::npos) text.erase(h);
        text = detail::trim(text);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw Error(where() + ": expected key = value");
        const std::string key = detail::trim(text.substr(0, eq));
        const std::string value = detail::trim(text.substr(eq + 1));
        try {
            if (key == "responses") cfg.responses = resolve(value);
            else if (key == "features") cfg.features = resolve(value);
            else if (key == "biomarkers") cfg.biomarkers = resolve(value);
            else if (key == "rules") cfg.rules = resolve(value);
            else if (key == "out") cfg.out = resolve(value);
            else if (key == "horizon") cfg.grid.horizon = detail::parse_u64(value, key);
            else if (key == "window") cfg.window = detail::parse_u64(value, key);
            else if (key == "synthetic") {
                const auto parts = detail::split_list(value);
                if (parts.size() != 4) throw Error("synthetic expects n,k,dim,seed");
                std::array<std::uint64_t, 4> s{};
                for (std::size_t i = 0; i < 4; ++i) s[i] = detail::parse_u64(parts[i], key);
                cfg.synthetic = s;
            } else if (key == "states") {
                for (const auto& s : detail::split_list(value)) cfg.grid.states.push_back(parse_state_mode(s));
            } else if (key == "rewards") {
                for (const auto& s : detail::split_list(value)) cfg.grid.rewards.push_back(parse_reward_kind(s));
            } else if (key == "agents") {
                for (const auto& s : detail::split_list(value)) {
                    parse_agent_family(s);
                    agent_names.push_back(s);
                }
            } else if (key == "seeds") {
                for (const auto& s : detail::split_list(value)) cfg.grid.seeds.push_back(detail::parse_u64(s, key));
            } else if (key.find('.') != std::string::npos) {
                overrides.emplace_back(key, value);
            } else {
                throw Error("unknown key '" + key + "'");
            }
        } catch (const Error& e) {
            const std::string msg = e.what();
            throw Error(msg.rfind(file, 0) == 0 ? msg : where() + ": " + msg);
        }
    }
    for (const auto& name : agent_names) cfg.grid.agents.push_back(AgentSpec::defaults(name));
    for (const auto& [key, value] : overrides) {
        const auto dot = key.find('.');
        const std::string agent = key.substr(0, dot);
        const std::string param = key.substr(dot + 1);
        bool applied = false;
        for (auto& a : cfg.grid.agents)
            if (to_string(a.family) == agent) {
                a.set(param, value);
                applied = true;
            }
        if (!applied) throw Error(file + ": override '" + key + "' names an agent not in 'agents'");
    }
    if (cfg.grid.states.empty()) throw Error(file + ": 'states' is required");
    if (cfg.grid.rewards.empty()) throw Error(file + ": 'rewards' is required");
    if (cfg.grid.agents.empty()) throw Error(file + ": 'agents' is required");
    if (cfg.grid.seeds.empty()) throw Error(file + ": 'seeds' is required");
    if (!cfg.synthetic && (cfg.responses.empty() || cfg.features.empty() || cfg.biomarkers.empty()))
        throw Error(file + ": give responses, features and biomarkers, or synthetic");
    return cfg;
}

inline GridConfig read_grid_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(path + ": cannot open for reading");
    return parse_grid_config(in, path, std::filesystem::path(path).parent_path());
}

} // namespace oncobandit

#endif // ONCOBANDIT_CONFIG_HPP
