#ifndef ONCOBANDIT_GUIDELINES_HPP
#define ONCOBANDIT_GUIDELINES_HPP

#include "oncobandit/core.hpp"
#include "oncobandit/ingest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oncobandit {

/* Protocol rules
 * --------------
 *
 *   # comment
 *   RULE braf WHEN MUT:BRAF_V600E THEN Dabrafenib PRIORITY 1
 *   RULE her2 WHEN CNA:ERBB2_AMP AND MUT:PIK3CA_H1047R THEN Lapatinib PRIORITY 2
 *   DEFAULT Cisplatin
 *
 * Predicates are conjunctions of biomarker flags. Among firing rules the
 * lowest PRIORITY wins, file order breaking ties; if nothing fires the
 * DEFAULT drug is given.
 */

struct Rule {
    std::string name;
    std::vector<std::string> predicate;  // all flags must be 1
    std::string drug;
    int priority = 1;
    std::size_t line = 0;
};

struct RuleSet {
    std::vector<Rule> rules;
    std::string default_drug;
};

inline RuleSet parse_rules(std::istream& in, const std::string& file = "rules") {
    RuleSet rs;
    std::set<std::string> names;
    std::size_t default_line = 0;
    std::string text;
    std::size_t line = 0;
    auto fail = [&](const std::string& what) {
        return Error(file + ":" + std::to_string(line) + ": " + what);
    };
    while (std::getline(in, text)) {
        ++line;
        if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
        std::istringstream words(text);
        std::vector<std::string> tok;
        for (std::string w; words >> w;) tok.push_back(w);
        if (tok.empty()) continue;

        if (tok[0] == "DEFAULT") {
            if (tok.size() != 2) throw fail("expected 'DEFAULT <drug>'");
            if (default_line) throw fail("second DEFAULT (first on line " + std::to_string(default_line) + ")");
            rs.default_drug = tok[1];
            default_line = line;
            continue;
        }
        if (tok[0] != "RULE") throw fail("expected RULE or DEFAULT, got '" + tok[0] + "'");

        // RULE name WHEN f1 [AND f2 ...] THEN drug PRIORITY n
        if (tok.size() < 8 || tok[2] != "WHEN") throw fail("expected 'RULE <name> WHEN <flag> ... THEN <drug> PRIORITY <n>'");
        Rule r;
        r.name = tok[1];
        r.line = line;
        std::size_t i = 3;
        for (;;) {
            if (i >= tok.size() || tok[i] == "THEN" || tok[i] == "AND") throw fail("malformed predicate in rule '" + r.name + "'");
            if (!is_biomarker_key(tok[i])) throw fail("malformed biomarker '" + tok[i] + "' in rule '" + r.name + "'");
            r.predicate.push_back(tok[i++]);
            if (i < tok.size() && tok[i] == "AND") {
                ++i;
                continue;
            }
            break;
        }
        if (i + 4 != tok.size() || tok[i] != "THEN" || tok[i + 2] != "PRIORITY")
            throw fail("malformed predicate in rule '" + r.name + "'");
        r.drug = tok[i + 1];
        const std::string& p = tok[i + 3];
        int prio = 0;
        const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), prio);
        if (ec != std::errc() || ptr != p.data() + p.size() || prio < 1)
            throw fail("PRIORITY must be a positive integer, got '" + p + "'");
        r.priority = prio;
        if (!names.insert(r.name).second) throw fail("duplicate rule name '" + r.name + "'");
        rs.rules.push_back(std::move(r));
    }
    if (!default_line) throw Error(file + ":" + std::to_string(line) + ": missing DEFAULT");
    return rs;
}

inline RuleSet parse_rules(const std::string& text, const std::string& file) {
    std::istringstream in(text);
    return parse_rules(in, file);
}

inline RuleSet read_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(path + ": cannot open for reading");
    return parse_rules(in, path);
}

inline void write_rules(std::ostream& out, const RuleSet& rs) {
    for (const auto& r : rs.rules) {
        out << "RULE " << r.name << " WHEN ";
        for (std::size_t i = 0; i < r.predicate.size(); ++i) out << (i ? " AND " : "") << r.predicate[i];
        out << " THEN " << r.drug << " PRIORITY " << r.priority << '\n';
    }
    out << "DEFAULT " << rs.default_drug << '\n';
}

/// A RuleSet resolved against one dataset's drug and flag indices.
class BoundRules {
public:
    BoundRules(const RuleSet& rs, const Dataset& ds) : k_(ds.num_drugs()) {
        auto d = ds.find_drug(rs.default_drug);
        if (!d) throw Error("default drug '" + rs.default_drug + "' is not in the dataset");
        default_ = *d;
        for (const auto& r : rs.rules) {
            Bound b;
            auto drug = ds.find_drug(r.drug);
            if (!drug) throw Error("rule '" + r.name + "' names unknown drug '" + r.drug + "'");
            b.drug = *drug;
            b.priority = r.priority;
            for (const auto& f : r.predicate) {
                auto idx = ds.find_flag(f);
                if (!idx) throw Error("rule '" + r.name + "' names unknown biomarker '" + f + "'");
                b.flags.push_back(*idx);
            }
            rules_.push_back(std::move(b));
        }
    }

    std::size_t num_drugs() const { return k_; }
    DrugId default_drug() const { return default_; }

    /// Multi-hot eligibility: 1 for each drug with a firing rule, else
    /// one-hot at the default drug.
    std::vector<double> recommendation_vector(const Dataset& ds, UnitId unit) const {
        std::vector<double> v(k_, 0.0);
        bool any = false;
        for (const auto& r : rules_)
            if (fires(r, ds, unit)) {
                v[r.drug.index] = 1.0;
                any = true;
            }
        if (!any) v[default_.index] = 1.0;
        return v;
    }

    DrugId act(const Dataset& ds, UnitId unit) const {
        const Bound* chosen = nullptr;
        for (const auto& r : rules_)
            if (fires(r, ds, unit) && (!chosen || r.priority < chosen->priority)) chosen = &r;
        return chosen ? chosen->drug : default_;
    }

private:
    struct Bound {
        std::vector<std::size_t> flags;
        DrugId drug;
        int priority = 1;
    };

    static bool fires(const Bound& r, const Dataset& ds, UnitId unit) {
        for (auto f : r.flags)
            if (!ds.flag(unit, f)) return false;
        return true;
    }

    std::size_t k_;
    DrugId default_;
    std::vector<Bound> rules_;
};

inline std::vector<double> recommendation_vector(const RuleSet& rs, const Dataset& ds, UnitId unit) {
    return BoundRules(rs, ds).recommendation_vector(ds, unit);
}

inline DrugId guideline_act(const RuleSet& rs, const Dataset& ds, UnitId unit) {
    return BoundRules(rs, ds).act(ds, unit);
}

} // namespace oncobandit

#endif // ONCOBANDIT_GUIDELINES_HPP
