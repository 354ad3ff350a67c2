#ifndef ONCOBANDIT_RUNNER_HPP
#define ONCOBANDIT_RUNNER_HPP

#include "oncobandit/agents.hpp"
#include "oncobandit/guidelines.hpp"
#include "oncobandit/rewards.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <tuple>
#include <vector>

namespace oncobandit {

/// Embedding, recommendations, or both (embedding first).
inline Context build_context(const Dataset& ds, const BoundRules* rules, UnitId unit, StateMode mode) {
    std::vector<double> v;
    if (mode != StateMode::Guideline) {
        if (ds.feature_width() == 0) throw Error("state mode '" + std::string(to_string(mode)) + "' needs embeddings");
        v = ds.embedding(unit);
    }
    if (mode != StateMode::Genomic) {
        if (!rules) throw Error("state mode '" + std::string(to_string(mode)) + "' needs a rule file");
        const auto rec = rules->recommendation_vector(ds, unit);
        v.insert(v.end(), rec.begin(), rec.end());
    }
    return Context(mode, std::move(v), mode == StateMode::Genomic ? 0 : ds.num_drugs());
}

inline Context build_context(const Dataset& ds, const RuleSet* rules, UnitId unit, StateMode mode) {
    std::optional<BoundRules> bound;
    if (rules && mode != StateMode::Genomic) bound.emplace(*rules, ds);
    return build_context(ds, bound ? &*bound : nullptr, unit, mode);
}

struct RunConfig {
    StateMode state = StateMode::Genomic;
    RewardKind reward = RewardKind::DiffBest;
    AgentSpec agent = AgentSpec::defaults(AgentFamily::Uniform);
    RngSeed seed = 0;
    std::size_t horizon = 0;  // 0 means one pass over all units
};

struct StepRecord {
    std::size_t t = 0;
    UnitId unit;
    DrugId action;
    double reward = 0.0;
    double regret = 0.0;
    double cumulative_reward = 0.0;
    double cumulative_regret = 0.0;
};

struct RunResult {
    RunConfig config;
    std::size_t horizon = 0;
    double cumulative_reward = 0.0;  // r
    double oracle_reward = 0.0;      // r*
    double cumulative_regret = 0.0;  // r* - r
    std::vector<std::size_t> action_counts;
    std::vector<StepRecord> log;
};

/// Seeded unit sequence of the given length; a fresh permutation on every wraparound.
inline std::vector<UnitId> unit_sequence(std::size_t n, std::size_t horizon, RngStream rng) {
    std::vector<UnitId> seq;
    seq.reserve(horizon);
    while (seq.size() < horizon) {
        for (auto i : rng.permutation(n)) {
            if (seq.size() == horizon) break;
            seq.push_back(UnitId{i});
        }
    }
    return seq;
}

/// One experiment cell. Deterministic in (dataset, rules, config).
inline RunResult run_single(const Dataset& ds, const RuleSet* rules, const RunConfig& cfg) {
    const std::size_t n = ds.num_units();
    const std::size_t k = ds.num_drugs();
    const std::size_t horizon = cfg.horizon ? cfg.horizon : n;
    if (cfg.state != StateMode::Genomic && !rules) throw Error("state mode '" + std::string(to_string(cfg.state)) + "' needs a rule file");

    std::optional<BoundRules> bound;
    if (rules) bound.emplace(*rules, ds);

    std::vector<Context> contexts;
    contexts.reserve(n);
    for (std::size_t u = 0; u < n; ++u) contexts.push_back(build_context(ds, bound ? &*bound : nullptr, UnitId{u}, cfg.state));

    AgentContext actx{ds, rules, cfg.reward, context_width(cfg.state, ds.feature_width(), k), derive_stream(cfg.seed, "agent")};
    auto agent = make_agent(cfg.agent, actx);

    RunResult res;
    res.config = cfg;
    res.horizon = horizon;
    res.action_counts.assign(k, 0);
    res.log.reserve(horizon);
    const auto seq = unit_sequence(n, horizon, derive_stream(cfg.seed, "shuffle"));
    for (std::size_t t = 0; t < horizon; ++t) {
        const UnitId unit = seq[t];
        const Decision d{contexts[unit.index], unit};
        const DrugId a = agent->act(d);
        if (a.index >= k) throw Error("agent returned an out-of-range action");
        const double r = compute_reward(ds, unit, a, cfg.reward);
        const double best = compute_reward(ds, unit, optimal_action(ds, unit, cfg.reward), cfg.reward);
        const double regret = best - r;
        agent->update(d, a, r);

        res.cumulative_reward += r;
        res.oracle_reward += best;
        ++res.action_counts[a.index];
        const double prev_regret = res.log.empty() ? 0.0 : res.log.back().cumulative_regret;
        res.log.push_back({t, unit, a, r, regret, res.cumulative_reward, prev_regret + regret});
    }
    res.cumulative_regret = res.oracle_reward - res.cumulative_reward;
    return res;
}

/* Grids
 * ----- */

struct GridSpec {
    std::vector<StateMode> states;
    std::vector<RewardKind> rewards;
    std::vector<AgentSpec> agents;
    std::vector<RngSeed> seeds;
    std::size_t horizon = 0;
};

struct CellOutcome {
    RunConfig config;
    std::optional<RunResult> result;
    std::string error;
    double normalized_score = std::numeric_limits<double>::quiet_NaN();
};

/// Cells in canonical order: state, reward, agent, seed.
inline std::vector<RunConfig> expand_grid(const GridSpec& g) {
    std::vector<RunConfig> cells;
    for (auto s : g.states)
        for (auto r : g.rewards)
            for (const auto& a : g.agents)
                for (auto seed : g.seeds) cells.push_back({s, r, a, seed, g.horizon});
    return cells;
}

/// (r - r_uniform) / (r* - r_uniform); NaN when the oracle and uniform tie.
inline double normalized_score(double reward, double oracle, double uniform) {
    const double span = oracle - uniform;
    if (span == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (reward - uniform) / span;
}

/// Runs every cell (up to `jobs` at once) plus a uniform baseline per
/// (state, reward, seed) for the normalized score. A failing cell records
/// its error and does not stop the others. Output order is canonical and
/// independent of `jobs`.
inline std::vector<CellOutcome> run_grid(const Dataset& ds, const RuleSet* rules, const GridSpec& grid, std::size_t jobs = 1) {
    const auto cells = expand_grid(grid);
    std::vector<CellOutcome> out(cells.size());

    using BaselineKey = std::tuple<StateMode, RewardKind, RngSeed>;
    std::map<BaselineKey, std::size_t> baseline_index;
    std::vector<RunConfig> baselines;
    for (const auto& c : cells) {
        BaselineKey key{c.state, c.reward, c.seed};
        if (!baseline_index.count(key)) {
            baseline_index[key] = baselines.size();
            baselines.push_back({c.state, c.reward, AgentSpec::defaults(AgentFamily::Uniform), c.seed, c.horizon});
        }
    }
    std::vector<std::optional<RunResult>> baseline_results(baselines.size());
    std::vector<std::string> baseline_errors(baselines.size());

    const std::size_t total = cells.size() + baselines.size();
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < total; i = next++) {
            const bool is_cell = i < cells.size();
            const RunConfig& cfg = is_cell ? cells[i] : baselines[i - cells.size()];
            std::optional<RunResult> r;
            std::string err;
            try {
                r = run_single(ds, rules, cfg);
            } catch (const std::exception& e) {
                err = e.what();
            }
            if (is_cell) {
                out[i].config = cfg;
                out[i].result = std::move(r);
                out[i].error = std::move(err);
            } else {
                baseline_results[i - cells.size()] = std::move(r);
                baseline_errors[i - cells.size()] = std::move(err);
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, total));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (auto& c : out) {
        if (!c.result) continue;
        const auto b = baseline_index.at({c.config.state, c.config.reward, c.config.seed});
        if (baseline_results[b])
            c.normalized_score = normalized_score(c.result->cumulative_reward, c.result->oracle_reward,
                                                  baseline_results[b]->cumulative_reward);
    }
    return out;
}

struct Aggregate {
    StateMode state;
    RewardKind reward;
    std::string agent;
    std::size_t runs = 0;
    double mean_reward = 0, sd_reward = 0;
    double mean_regret = 0, sd_regret = 0;
    double mean_score = 0, sd_score = 0;
};

/// Mean and sample standard deviation over seeds, per (state, reward, agent).
inline std::vector<Aggregate> aggregate(const std::vector<CellOutcome>& cells) {
    std::vector<Aggregate> out;
    std::map<std::tuple<StateMode, RewardKind, std::string>, std::vector<const CellOutcome*>> groups;
    std::vector<std::tuple<StateMode, RewardKind, std::string>> order;
    for (const auto& c : cells) {
        if (!c.result) continue;
        auto key = std::make_tuple(c.config.state, c.config.reward, std::string(to_string(c.config.agent.family)));
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&c);
    }
    auto stats = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
    };
    for (const auto& key : order) {
        const auto& g = groups[key];
        std::vector<double> rw, rg, sc;
        for (auto* c : g) {
            rw.push_back(c->result->cumulative_reward);
            rg.push_back(c->result->cumulative_regret);
            sc.push_back(c->normalized_score);
        }
        Aggregate a{std::get<0>(key), std::get<1>(key), std::get<2>(key), g.size()};
        std::tie(a.mean_reward, a.sd_reward) = stats(rw);
        std::tie(a.mean_regret, a.sd_regret) = stats(rg);
        std::tie(a.mean_score, a.sd_score) = stats(sc);
        out.push_back(a);
    }
    return out;
}

} // namespace oncobandit

#endif // ONCOBANDIT_RUNNER_HPP
