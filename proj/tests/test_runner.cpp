#include "oncobandit/config.hpp"
#include "oncobandit/reports.hpp"
#include "oncobandit/runner.hpp"
#include "oncobandit/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace oncobandit;

namespace {

struct Fixture {
    RuleSet rules = synthetic_rules(4);
    SyntheticCohort cohort = synthesize_dataset(80, 4, 5, rules, 3);
};

RunConfig config(AgentFamily f, StateMode s = StateMode::Genomic, RewardKind r = RewardKind::DiffBest, RngSeed seed = 1) {
    return {s, r, AgentSpec::defaults(f), seed, 0};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(Context, BuiltFromEmbeddingAndRules) {
    Fixture f;
    const auto& ds = f.cohort.dataset;
    for (std::size_t u = 0; u < 10; ++u) {
        const auto both = build_context(ds, &f.rules, UnitId{u}, StateMode::Both);
        ASSERT_EQ(both.values().size(), 9u);
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(both.values()[j], ds.features()(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j)));
        const auto rec = recommendation_vector(f.rules, ds, UnitId{u});
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(both.values()[5 + j], rec[j]);
        EXPECT_EQ(build_context(ds, &f.rules, UnitId{u}, StateMode::Guideline).values().size(), 4u);
        EXPECT_EQ(build_context(ds, &f.rules, UnitId{u}, StateMode::Genomic).values().size(), 5u);
    }
}

TEST(Sequence, OnePassIsPermutationAndWrapsWithFreshOrder) {
    const auto seq = unit_sequence(10, 25, derive_stream(1, "shuffle"));
    ASSERT_EQ(seq.size(), 25u);
    std::set<std::size_t> first, second;
    for (std::size_t t = 0; t < 10; ++t) first.insert(seq[t].index);
    for (std::size_t t = 10; t < 20; ++t) second.insert(seq[t].index);
    EXPECT_EQ(first.size(), 10u);
    EXPECT_EQ(second.size(), 10u);
    bool differs = false;
    for (std::size_t t = 0; t < 10; ++t) differs = differs || seq[t] != seq[t + 10];
    EXPECT_TRUE(differs);
}

TEST(Run, OracleHasZeroRegretUniformDoesNot) {
    Fixture f;
    for (auto kind : {RewardKind::DiffBest, RewardKind::Rank, RewardKind::Percentile}) {
        const auto o = run_single(f.cohort.dataset, &f.rules, config(AgentFamily::Oracle, StateMode::Genomic, kind));
        EXPECT_EQ(o.cumulative_regret, 0.0);
        const auto u = run_single(f.cohort.dataset, &f.rules, config(AgentFamily::Uniform, StateMode::Genomic, kind));
        EXPECT_GT(u.cumulative_regret, 0.0);
    }
}

TEST(Run, LogIsConsistent) {
    Fixture f;
    const auto r = run_single(f.cohort.dataset, &f.rules, config(AgentFamily::LinearTS));
    ASSERT_EQ(r.log.size(), 80u);
    double reward = 0, regret = 0;
    for (const auto& s : r.log) {
        reward += s.reward;
        regret += s.regret;
        EXPECT_GE(s.regret, 0.0);
        EXPECT_EQ(s.reward, compute_reward(f.cohort.dataset, s.unit, s.action, RewardKind::DiffBest));
    }
    EXPECT_NEAR(reward, r.cumulative_reward, 1e-9);
    EXPECT_NEAR(regret, r.cumulative_regret, 1e-9);
    std::size_t counted = 0;
    for (auto c : r.action_counts) counted += c;
    EXPECT_EQ(counted, 80u);
}

TEST(Run, HorizonBeyondCohortWraps) {
    Fixture f;
    auto cfg = config(AgentFamily::Uniform);
    cfg.horizon = 200;
    EXPECT_EQ(run_single(f.cohort.dataset, &f.rules, cfg).log.size(), 200u);
}

TEST(Run, GuidelineIdenticalAcrossStateModes) {
    Fixture f;
    const auto g = run_single(f.cohort.dataset, &f.rules, config(AgentFamily::Guideline, StateMode::Genomic));
    for (auto s : {StateMode::Guideline, StateMode::Both}) {
        const auto h = run_single(f.cohort.dataset, &f.rules, config(AgentFamily::Guideline, s));
        EXPECT_EQ(h.cumulative_reward, g.cumulative_reward);
        for (std::size_t t = 0; t < g.log.size(); ++t) EXPECT_EQ(h.log[t].action, g.log[t].action);
    }
}

TEST(Run, NonGenomicModesNeedRules) {
    Fixture f;
    EXPECT_THROW(run_single(f.cohort.dataset, nullptr, config(AgentFamily::Uniform, StateMode::Both)), Error);
}

TEST(Grid, CanonicalOrder) {
    GridSpec g{{StateMode::Genomic, StateMode::Both},
               {RewardKind::Rank},
               {AgentSpec::defaults(AgentFamily::Uniform), AgentSpec::defaults(AgentFamily::Oracle)},
               {1, 2}};
    const auto cells = expand_grid(g);
    ASSERT_EQ(cells.size(), 8u);
    EXPECT_EQ(cells[0].state, StateMode::Genomic);
    EXPECT_EQ(cells[1].seed, 2u);
    EXPECT_EQ(cells[2].agent.family, AgentFamily::Oracle);
    EXPECT_EQ(cells[4].state, StateMode::Both);
}

TEST(Grid, ScoresOracleOneUniformZero) {
    Fixture f;
    GridSpec g{{StateMode::Both}, {RewardKind::DiffBest, RewardKind::Percentile},
               {AgentSpec::defaults(AgentFamily::Oracle), AgentSpec::defaults(AgentFamily::Uniform),
                AgentSpec::defaults(AgentFamily::Guideline)},
               {1, 2}};
    for (const auto& c : run_grid(f.cohort.dataset, &f.rules, g)) {
        ASSERT_TRUE(c.result) << c.error;
        if (c.config.agent.family == AgentFamily::Oracle) EXPECT_EQ(c.normalized_score, 1.0);
        if (c.config.agent.family == AgentFamily::Uniform) EXPECT_EQ(c.normalized_score, 0.0);
    }
}

TEST(Grid, InvariantToConcurrency) {
    Fixture f;
    GridSpec g{{StateMode::Genomic, StateMode::Guideline}, {RewardKind::Rank},
               {AgentSpec::defaults(AgentFamily::LinearTS), AgentSpec::defaults(AgentFamily::Uniform),
                AgentSpec::defaults(AgentFamily::Guideline)},
               {1, 2, 3}};
    const auto serial = run_grid(f.cohort.dataset, &f.rules, g, 1);
    const auto parallel = run_grid(f.cohort.dataset, &f.rules, g, 4);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        EXPECT_EQ(serial[i].result->cumulative_reward, parallel[i].result->cumulative_reward);
        EXPECT_EQ(serial[i].normalized_score, parallel[i].normalized_score);
    }
    // A cell run alone gives the same result as inside the grid.
    const auto alone = run_single(f.cohort.dataset, &f.rules, serial[4].config);
    EXPECT_EQ(alone.cumulative_reward, serial[4].result->cumulative_reward);
}

TEST(Grid, FailingCellDoesNotStopOthers) {
    Fixture f;
    GridSpec g{{StateMode::Genomic}, {RewardKind::Rank},
               {AgentSpec::defaults(AgentFamily::Guideline), AgentSpec::defaults(AgentFamily::Oracle)},
               {1}};
    const auto cells = run_grid(f.cohort.dataset, nullptr, g, 2);
    EXPECT_FALSE(cells[0].result);
    EXPECT_FALSE(cells[0].error.empty());
    EXPECT_TRUE(cells[1].result);
}

TEST(Grid, NormalizedScoreNanWhenSpanVanishes) {
    EXPECT_TRUE(std::isnan(normalized_score(1.0, 2.0, 2.0)));
    EXPECT_DOUBLE_EQ(normalized_score(1.5, 2.0, 1.0), 0.5);
}

TEST(Reports, FilesAndWindows) {
    Fixture f;
    GridSpec g{{StateMode::Genomic}, {RewardKind::Rank},
               {AgentSpec::defaults(AgentFamily::Guideline), AgentSpec::defaults(AgentFamily::LinearTS)},
               {7}};
    const auto cells = run_grid(f.cohort.dataset, &f.rules, g);
    const auto dir = std::filesystem::temp_directory_path() / "oncobandit_reports_test";
    std::filesystem::remove_all(dir);
    emit_reports(dir, f.cohort.dataset, cells, 30);

    const auto log = read_file(dir / "logs" / "genomic_rank_linear_seed7.jsonl");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 80);
    EXPECT_EQ(log.rfind("{\"t\":0,\"unit\":\"", 0), 0u);

    const auto summary = read_file(dir / "summary.csv");
    EXPECT_EQ(summary[0], '#');
    EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 4);

    const auto activity = read_file(dir / "activity.csv");
    EXPECT_EQ(std::count(activity.begin(), activity.end(), '\n'), 1 + 2 * 3);

    for (const auto& w : activity_windows(*cells[1].result, 4, 30)) {
        std::size_t sum = 0;
        for (auto c : w.counts) sum += c;
        EXPECT_EQ(sum, w.size);
    }
    std::filesystem::remove_all(dir);
}

TEST(Reports, UnwritableOutputIsError) {
    Fixture f;
    GridSpec g{{StateMode::Genomic}, {RewardKind::Rank}, {AgentSpec::defaults(AgentFamily::Oracle)}, {1}};
    const auto cells = run_grid(f.cohort.dataset, &f.rules, g);
    EXPECT_THROW(emit_reports("/proc/oncobandit-cannot-write", f.cohort.dataset, cells), std::exception);
}

TEST(Config, ParsesGridFile) {
    std::istringstream in(R"(# demo
synthetic = 100, 4, 5, 9
states = genomic, both
rewards = rank
agents = linear, dropout
seeds = 1,2,3
horizon = 50
dropout.keep = 0.5
rules = rules.txt
)");
    const auto cfg = parse_grid_config(in, "grid.cfg", "/data");
    EXPECT_EQ((*cfg.synthetic)[0], 100u);
    EXPECT_EQ(cfg.grid.states.size(), 2u);
    EXPECT_EQ(cfg.grid.agents[1].keep_probability, 0.5);
    EXPECT_EQ(cfg.grid.seeds, (std::vector<RngSeed>{1, 2, 3}));
    EXPECT_EQ(cfg.grid.horizon, 50u);
    EXPECT_EQ(cfg.rules, "/data/rules.txt");
}

TEST(Config, ErrorsNameTheLine) {
    auto message = [](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_grid_config(in, "g");
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_EQ(message("states = genomic\nrewards = regret\n").rfind("g:2:", 0), 0u);
    EXPECT_EQ(message("bogus = 1\n").rfind("g:1:", 0), 0u);
    EXPECT_NE(message("synthetic=10,2,2,1\nstates=genomic\nrewards=rank\nagents=linear\nseeds=1\ndropout.keep=0.5\n").find("dropout.keep"),
              std::string::npos);
    EXPECT_NE(message("synthetic=10,2,2,1\nstates=genomic\nrewards=rank\nagents=linear\n").find("seeds"), std::string::npos);
}
