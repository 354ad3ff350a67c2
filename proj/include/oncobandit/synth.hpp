#ifndef ONCOBANDIT_SYNTH_HPP
#define ONCOBANDIT_SYNTH_HPP

#include "oncobandit/guidelines.hpp"
#include "oncobandit/ingest.hpp"

#include <optional>

namespace oncobandit {

/* Synthetic cohorts
 * -----------------
 * ln IC50(u, d) = base_d + w_d . x_u - bonus * [a rule for d fires on u] + noise * N(0, 1)
 *
 * with x_u ~ N(0, I). Each biomarker named by the rules is tied to one
 * feature coordinate and is set when that coordinate exceeds
 * `flag_threshold`, so the rules carry real but partial information.
 */

struct SynthSpec {
    std::size_t n = 1000;
    std::size_t k = 7;
    std::size_t dim = 20;
    double signal = 1.0;   // sd of w_d . x_u
    double noise = 0.1;    // sd of the per-cell noise
    double bonus = 1.0;    // ln IC50 drop when a rule for the drug fires
    double flag_threshold = 1.0;
    std::optional<RuleSet> rules;
    RngSeed seed = 0;
};

struct PlantedTruth {
    Eigen::MatrixXd coefficients;           // k x dim
    Eigen::VectorXd base;                   // k
    std::vector<std::string> flag_names;
    std::vector<std::size_t> flag_dims;     // feature coordinate behind each flag
    Eigen::MatrixXd expected_scores;        // n x k, noiseless, in dataset order
    std::vector<DrugId> best_arm;           // argmin of expected_scores per unit
};

struct SyntheticCohort {
    RawResponseTable responses;
    FeatureTable features;
    BiomarkerTable biomarkers;
    Dataset dataset;
    PlantedTruth truth;
};

inline std::string synthetic_drug_name(std::size_t d, std::size_t k) {
    std::string digits = std::to_string(d);
    const std::size_t width = std::to_string(k - 1).size();
    return "drug" + std::string(width - digits.size(), '0') + digits;
}

inline std::string synthetic_unit_name(std::size_t u, std::size_t n) {
    std::string digits = std::to_string(u);
    const std::size_t width = std::to_string(n - 1).size();
    return "unit" + std::string(width - digits.size(), '0') + digits;
}

/// One single-biomarker rule per non-default drug; the first drug is the default.
inline RuleSet synthetic_rules(std::size_t k) {
    RuleSet rs;
    for (std::size_t d = 1; d < k; ++d) {
        Rule r;
        r.name = "r" + std::to_string(d);
        r.predicate = {"MUT:GENE" + std::to_string(d)};
        r.drug = synthetic_drug_name(d, k);
        r.priority = static_cast<int>(d);
        rs.rules.push_back(std::move(r));
    }
    rs.default_drug = synthetic_drug_name(0, k);
    return rs;
}

inline SyntheticCohort synthesize_dataset(const SynthSpec& spec) {
    if (spec.k < 2 || spec.n < spec.k) throw Error("synthesize_dataset needs n >= k >= 2");
    if (spec.dim < 1) throw Error("synthesize_dataset needs dim >= 1");
    if (!(spec.noise >= 0.0) || !(spec.signal >= 0.0)) throw Error("synthesize_dataset: negative scale");

    RngStream root = root_stream(spec.seed).derive("synth");
    RngStream feat_rng = root.derive("features");
    RngStream coef_rng = root.derive("coefficients");
    RngStream noise_rng = root.derive("noise");

    const auto n = static_cast<Eigen::Index>(spec.n);
    const auto k = static_cast<Eigen::Index>(spec.k);
    const auto dim = static_cast<Eigen::Index>(spec.dim);

    SyntheticCohort out;
    std::vector<std::string> drugs(spec.k), units(spec.n);
    for (std::size_t d = 0; d < spec.k; ++d) drugs[d] = synthetic_drug_name(d, spec.k);
    for (std::size_t u = 0; u < spec.n; ++u) units[u] = synthetic_unit_name(u, spec.n);

    Eigen::MatrixXd x(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = feat_rng.normal();

    PlantedTruth& truth = out.truth;
    truth.coefficients.resize(k, dim);
    const double coef_sd = spec.signal / std::sqrt(static_cast<double>(spec.dim));
    for (Eigen::Index d = 0; d < k; ++d)
        for (Eigen::Index j = 0; j < dim; ++j) truth.coefficients(d, j) = coef_sd * coef_rng.normal();
    truth.base.resize(k);
    for (Eigen::Index d = 0; d < k; ++d) truth.base(d) = 1.0 + 0.5 * coef_rng.normal();

    // Biomarkers and the per-(unit, drug) planted bonus.
    Eigen::MatrixXd bonus = Eigen::MatrixXd::Zero(n, k);
    out.biomarkers.units = units;
    out.biomarkers.values.assign(spec.n, {});
    if (spec.rules) {
        for (const auto& r : spec.rules->rules)
            for (const auto& f : r.predicate)
                if (std::find(truth.flag_names.begin(), truth.flag_names.end(), f) == truth.flag_names.end()) {
                    truth.flag_dims.push_back(truth.flag_names.size() % spec.dim);
                    truth.flag_names.push_back(f);
                }
        out.biomarkers.flags = truth.flag_names;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& row = out.biomarkers.values[static_cast<std::size_t>(i)];
            for (auto j : truth.flag_dims) row.push_back(x(i, static_cast<Eigen::Index>(j)) > spec.flag_threshold ? 1 : 0);
            for (const auto& r : spec.rules->rules) {
                const auto drug = std::find(drugs.begin(), drugs.end(), r.drug);
                if (drug == drugs.end()) throw Error("rule '" + r.name + "' names drug '" + r.drug + "' absent from the synthetic cohort");
                bool fires = true;
                for (const auto& f : r.predicate) {
                    const auto fi = std::find(truth.flag_names.begin(), truth.flag_names.end(), f) - truth.flag_names.begin();
                    fires = fires && row[static_cast<std::size_t>(fi)];
                }
                if (fires) bonus(i, drug - drugs.begin()) = spec.bonus;
            }
        }
        if (std::find(drugs.begin(), drugs.end(), spec.rules->default_drug) == drugs.end())
            throw Error("default drug '" + spec.rules->default_drug + "' absent from the synthetic cohort");
    }

    const Eigen::MatrixXd clean_log = (x * truth.coefficients.transpose()).rowwise() + truth.base.transpose() - bonus;
    Eigen::MatrixXd clean_ic50 = clean_log.array().exp();
    Eigen::MatrixXd noisy_log(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index d = 0; d < k; ++d) {
            const double e = noise_rng.normal();
            const double ic50 = spec.noise > 0.0 ? std::exp(clean_log(i, d) + spec.noise * e) : clean_ic50(i, d);
            out.responses.rows.push_back({units[static_cast<std::size_t>(i)], drugs[static_cast<std::size_t>(d)], ic50, 0});
            noisy_log(i, d) = std::log(ic50);
        }

    out.features.units = units;
    out.features.values = x;

    out.dataset = assemble_dataset(out.responses, out.features, out.biomarkers);

    // Units are already in sorted order, so dataset rows align with i.
    truth.expected_scores.resize(n, k);
    for (Eigen::Index d = 0; d < k; ++d) {
        std::vector<double> col(noisy_log.col(d).data(), noisy_log.col(d).data() + n);
        const double m = median(col);
        for (Eigen::Index i = 0; i < n; ++i) truth.expected_scores(i, d) = std::log(clean_ic50(i, d)) - m;
    }
    truth.best_arm.resize(spec.n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg;
        truth.expected_scores.row(i).minCoeff(&arg);
        truth.best_arm[static_cast<std::size_t>(i)] = DrugId{static_cast<std::size_t>(arg)};
    }
    return out;
}

inline SyntheticCohort synthesize_dataset(std::size_t n, std::size_t k, std::size_t dim,
                                          std::optional<RuleSet> rules, RngSeed seed) {
    SynthSpec s;
    s.n = n;
    s.k = k;
    s.dim = dim;
    s.rules = std::move(rules);
    s.seed = seed;
    return synthesize_dataset(s);
}

} // namespace oncobandit

#endif // ONCOBANDIT_SYNTH_HPP
