// Command-line front end: run one experiment cell, a full grid, or emit a
// synthetic cohort.

#include "oncobandit/oncobandit.hpp"

#ifdef ONCOBANDIT_CLI11_PACKAGE
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include <filesystem>
#include <fstream>
#include <iostream>

namespace ob = oncobandit;
namespace fs = std::filesystem;

namespace {

struct Cohort {
    ob::Dataset dataset;
    std::optional<ob::RuleSet> rules;
};

Cohort load_cohort(const std::string& responses, const std::string& features, const std::string& biomarkers,
                   const std::string& rules) {
    Cohort c;
    c.dataset = ob::assemble_dataset(ob::read_responses(responses), ob::read_features(features),
                                     ob::read_biomarkers(biomarkers));
    if (!rules.empty()) c.rules = ob::read_rules(rules);
    return c;
}

int report_failures(const std::vector<ob::CellOutcome>& cells) {
    int failed = 0;
    for (const auto& c : cells)
        if (!c.result) {
            std::cerr << "cell " << ob::run_label(c.config) << " failed: " << c.error << '\n';
            ++failed;
        }
    return failed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contextual-bandit treatment assignment benchmark"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run one (state, reward, agent, seed) cell");
    std::string responses, features, biomarkers, rules, state = "genomic", reward = "diff", agent = "linear", out = "results";
    std::uint64_t seed = 0;
    std::size_t horizon = 0, window = 50;
    std::vector<std::string> params;
    run->add_option("--responses", responses, "responses.csv (unit,drug,ic50)")->required();
    run->add_option("--features", features, "features.csv (unit,f0,f1,...)")->required();
    run->add_option("--biomarkers", biomarkers, "biomarkers.csv (unit,<flag>,...)")->required();
    run->add_option("--rules", rules, "protocol rule file");
    run->add_option("--state", state, "genomic|guideline|both")->capture_default_str();
    run->add_option("--reward", reward, "diff|rank|percentile")->capture_default_str();
    run->add_option("--agent", agent, "agent name")->capture_default_str();
    run->add_option("--seed", seed, "experiment seed")->capture_default_str();
    run->add_option("--horizon", horizon, "steps (0 = one pass over the cohort)")->capture_default_str();
    run->add_option("--window", window, "activity window")->capture_default_str();
    run->add_option("--param", params, "agent parameter override key=value (repeatable)");
    run->add_option("--out", out, "output directory")->capture_default_str();

    // grid
    auto* grid = app.add_subcommand("grid", "Run a grid of cells from a config file");
    std::string config;
    std::size_t jobs = 1;
    grid->add_option("--config", config, "grid config (key = value lines)")->required();
    grid->add_option("--jobs", jobs, "cells run concurrently")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic planted-signal cohort as CSV");
    ob::SynthSpec sspec;
    std::string synth_out = "synthetic";
    bool no_rules = false;
    synth->add_option("--n", sspec.n, "units")->capture_default_str();
    synth->add_option("--k", sspec.k, "drugs")->capture_default_str();
    synth->add_option("--dim", sspec.dim, "embedding width")->capture_default_str();
    synth->add_option("--seed", sspec.seed, "seed")->capture_default_str();
    synth->add_option("--noise", sspec.noise, "per-cell ln IC50 noise sd")->capture_default_str();
    synth->add_option("--signal", sspec.signal, "sd of the linear feature effect")->capture_default_str();
    synth->add_option("--bonus", sspec.bonus, "ln IC50 drop when a planted rule fires")->capture_default_str();
    synth->add_flag("--no-rules", no_rules, "do not plant biomarker rules");
    synth->add_option("--out", synth_out, "output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            Cohort c = load_cohort(responses, features, biomarkers, rules);
            ob::RunConfig cfg;
            cfg.state = ob::parse_state_mode(state);
            cfg.reward = ob::parse_reward_kind(reward);
            cfg.agent = ob::AgentSpec::defaults(agent);
            for (const auto& p : params) {
                const auto eq = p.find('=');
                if (eq == std::string::npos) throw ob::Error("--param expects key=value, got '" + p + "'");
                cfg.agent.set(p.substr(0, eq), p.substr(eq + 1));
            }
            cfg.seed = seed;
            cfg.horizon = horizon;
            ob::GridSpec g{{cfg.state}, {cfg.reward}, {cfg.agent}, {cfg.seed}, cfg.horizon};
            const auto cells = ob::run_grid(c.dataset, c.rules ? &*c.rules : nullptr, g, 1);
            ob::emit_reports(out, c.dataset, cells, window);
            if (report_failures(cells)) return 1;
            const auto& r = *cells.front().result;
            std::cout << ob::run_label(r.config) << ": r=" << ob::format_real(r.cumulative_reward)
                      << " r*=" << ob::format_real(r.oracle_reward) << " regret=" << ob::format_real(r.cumulative_regret)
                      << '\n';
            return 0;
        }
        if (*grid) {
            const auto gc = ob::read_grid_config(config);
            Cohort c;
            if (gc.synthetic) {
                const auto& s = *gc.synthetic;
                c.rules = gc.rules.empty() ? ob::synthetic_rules(s[1]) : ob::read_rules(gc.rules);
                c.dataset = ob::synthesize_dataset(s[0], s[1], s[2], c.rules, s[3]).dataset;
            } else {
                c = load_cohort(gc.responses, gc.features, gc.biomarkers, gc.rules);
            }
            const auto cells = ob::run_grid(c.dataset, c.rules ? &*c.rules : nullptr, gc.grid, jobs);
            ob::emit_reports(gc.out, c.dataset, cells, gc.window);
            const int failed = report_failures(cells);
            std::cout << cells.size() - static_cast<std::size_t>(failed) << " of " << cells.size()
                      << " cells completed; reports in " << gc.out << '\n';
            return failed ? 1 : 0;
        }
        if (*synth) {
            if (!no_rules) sspec.rules = ob::synthetic_rules(sspec.k);
            const auto cohort = ob::synthesize_dataset(sspec);
            fs::create_directories(synth_out);
            auto open = [&](const char* name) {
                std::ofstream f(fs::path(synth_out) / name, std::ios::binary);
                if (!f) throw ob::Error((fs::path(synth_out) / name).string() + ": cannot open for writing");
                return f;
            };
            {
                auto f = open("responses.csv");
                ob::write_responses(f, cohort.responses);
            }
            {
                auto f = open("features.csv");
                ob::write_features(f, cohort.features);
            }
            {
                auto f = open("biomarkers.csv");
                ob::write_biomarkers(f, cohort.biomarkers);
            }
            if (sspec.rules) {
                auto f = open("rules.txt");
                ob::write_rules(f, *sspec.rules);
            }
            std::cout << "wrote " << sspec.n << " units x " << sspec.k << " drugs to " << synth_out << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
