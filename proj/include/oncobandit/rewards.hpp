#ifndef ONCOBANDIT_REWARDS_HPP
#define ONCOBANDIT_REWARDS_HPP

#include "oncobandit/core.hpp"
#include "oncobandit/ingest.hpp"

namespace oncobandit {

/// Reward for giving `drug` to `unit`. All kinds are maximized:
///   diff        -(s(u,d) - min_d' s(u,d')), 0 for the best drug
///   rank        k + 1 - ascending rank of s(u,d), ties share their mean rank
///   percentile  fraction of the cohort responding no better to `drug`
inline RewardValue compute_reward(const Dataset& ds, UnitId unit, DrugId drug, RewardKind kind) {
    const std::size_t k = ds.num_drugs();
    const double s = ds.score(unit, drug);
    switch (kind) {
    case RewardKind::DiffBest: {
        double best = s;
        for (std::size_t j = 0; j < k; ++j) best = std::min(best, ds.score(unit, DrugId{j}));
        return {kind, 0.0 - (s - best), k};
    }
    case RewardKind::Rank: {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double o = ds.score(unit, DrugId{j});
            if (o < s)
                ++less;
            else if (o == s)
                ++equal;
        }
        const double ascending = static_cast<double>(less) + 0.5 * static_cast<double>(equal + 1);
        return {kind, static_cast<double>(k) + 1.0 - ascending, k};
    }
    case RewardKind::Percentile:
        return {kind, percentile_of(ds, drug, s), k};
    }
    throw Error("unreachable reward kind");
}

/// Drug with the highest reward for this unit; ties go to the lowest index.
inline DrugId optimal_action(const Dataset& ds, UnitId unit, RewardKind kind) {
    DrugId best{0};
    double best_r = compute_reward(ds, unit, best, kind);
    for (std::size_t j = 1; j < ds.num_drugs(); ++j) {
        const double r = compute_reward(ds, unit, DrugId{j}, kind);
        if (r > best_r) {
            best_r = r;
            best = DrugId{j};
        }
    }
    return best;
}

inline double instant_regret(const Dataset& ds, UnitId unit, DrugId chosen, RewardKind kind) {
    const double best = compute_reward(ds, unit, optimal_action(ds, unit, kind), kind);
    return best - compute_reward(ds, unit, chosen, kind);
}

} // namespace oncobandit

#endif // ONCOBANDIT_REWARDS_HPP
