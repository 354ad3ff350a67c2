#ifndef ONCOBANDIT_REPORTS_HPP
#define ONCOBANDIT_REPORTS_HPP

#include "oncobandit/runner.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

namespace oncobandit {

/* Report files
 * ------------
 *   logs/<state>_<reward>_<agent>_seed<seed>.jsonl  one JSON object per step
 *   summary.csv    one row per cell
 *   aggregate.csv  mean and sd over seeds
 *   activity.csv   per-window action counts for each run
 */

inline const char* summary_caveat =
    "# caveat: no held-out split; embeddings are computed on the full cohort, so scores are optimistic";

namespace detail {

inline std::string json_string(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_real(double v) { return std::isnan(v) ? "nan" : format_real(v); }

inline std::ofstream open_output(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(p.string() + ": cannot open for writing");
    return out;
}

} // namespace detail

inline std::string run_label(const RunConfig& c) {
    return std::string(to_string(c.state)) + "_" + std::string(to_string(c.reward)) + "_" +
           std::string(to_string(c.agent.family)) + "_seed" + std::to_string(c.seed);
}

inline void write_step_log(std::ostream& out, const Dataset& ds, const RunResult& r) {
    for (const auto& s : r.log) {
        out << "{\"t\":" << s.t << ",\"unit\":" << detail::json_string(ds.unit_name(s.unit))
            << ",\"action\":" << detail::json_string(ds.drug_name(s.action)) << ",\"reward\":" << format_real(s.reward)
            << ",\"regret\":" << format_real(s.regret) << ",\"cumulative_reward\":" << format_real(s.cumulative_reward)
            << ",\"cumulative_regret\":" << format_real(s.cumulative_regret) << "}\n";
    }
}

inline void write_summary(std::ostream& out, const std::vector<CellOutcome>& cells) {
    out << summary_caveat << '\n';
    out << "state,reward,agent,seed,horizon,r,r_star,regret,normalized_score\n";
    for (const auto& c : cells) {
        if (!c.result) continue;
        const auto& r = *c.result;
        out << to_string(c.config.state) << ',' << to_string(c.config.reward) << ',' << to_string(c.config.agent.family)
            << ',' << c.config.seed << ',' << r.horizon << ',' << format_real(r.cumulative_reward) << ','
            << format_real(r.oracle_reward) << ',' << format_real(r.cumulative_regret) << ','
            << detail::csv_real(c.normalized_score) << '\n';
    }
}

inline void write_aggregate(std::ostream& out, const std::vector<Aggregate>& rows) {
    out << summary_caveat << '\n';
    out << "state,reward,agent,runs,mean_r,sd_r,mean_regret,sd_regret,mean_score,sd_score\n";
    for (const auto& a : rows)
        out << to_string(a.state) << ',' << to_string(a.reward) << ',' << a.agent << ',' << a.runs << ','
            << detail::csv_real(a.mean_reward) << ',' << detail::csv_real(a.sd_reward) << ','
            << detail::csv_real(a.mean_regret) << ',' << detail::csv_real(a.sd_regret) << ','
            << detail::csv_real(a.mean_score) << ',' << detail::csv_real(a.sd_score) << '\n';
}

struct ActivityWindow {
    std::size_t start = 0;  // first step, inclusive
    std::size_t size = 0;
    std::vector<std::size_t> counts;  // per drug
};

/// Action counts over consecutive windows; the last window may be short.
inline std::vector<ActivityWindow> activity_windows(const RunResult& r, std::size_t k, std::size_t window) {
    if (window == 0) throw Error("activity window must be >= 1");
    std::vector<ActivityWindow> out;
    for (std::size_t start = 0; start < r.log.size(); start += window) {
        ActivityWindow w{start, std::min(window, r.log.size() - start), std::vector<std::size_t>(k, 0)};
        for (std::size_t t = start; t < start + w.size; ++t) ++w.counts[r.log[t].action.index];
        out.push_back(std::move(w));
    }
    return out;
}

inline void write_activity_header(std::ostream& out, const Dataset& ds) {
    out << "state,reward,agent,seed,window,start,size";
    for (const auto& d : ds.drugs()) out << ',' << d;
    out << '\n';
}

inline void write_activity(std::ostream& out, const Dataset& ds, const RunResult& r, std::size_t window) {
    const auto ws = activity_windows(r, ds.num_drugs(), window);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        out << to_string(r.config.state) << ',' << to_string(r.config.reward) << ',' << to_string(r.config.agent.family)
            << ',' << r.config.seed << ',' << i << ',' << ws[i].start << ',' << ws[i].size;
        for (auto c : ws[i].counts) out << ',' << c;
        out << '\n';
    }
}

/// Writes every report for a set of finished cells under `dir`.
inline void emit_reports(const std::filesystem::path& dir, const Dataset& ds, const std::vector<CellOutcome>& cells,
                         std::size_t window = 50) {
    std::filesystem::create_directories(dir);
    for (const auto& c : cells) {
        if (!c.result) continue;
        auto f = detail::open_output(dir / "logs" / (run_label(c.config) + ".jsonl"));
        write_step_log(f, ds, *c.result);
    }
    {
        auto f = detail::open_output(dir / "summary.csv");
        write_summary(f, cells);
    }
    {
        auto f = detail::open_output(dir / "aggregate.csv");
        write_aggregate(f, aggregate(cells));
    }
    {
        auto f = detail::open_output(dir / "activity.csv");
        write_activity_header(f, ds);
        for (const auto& c : cells)
            if (c.result) write_activity(f, ds, *c.result, window);
    }
}

} // namespace oncobandit

#endif // ONCOBANDIT_REPORTS_HPP
