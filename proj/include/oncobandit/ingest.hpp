#ifndef ONCOBANDIT_INGEST_HPP
#define ONCOBANDIT_INGEST_HPP

#include "oncobandit/core.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace oncobandit {

/* Tables
 * ------ */

struct ResponseRow {
    std::string unit;
    std::string drug;
    double ic50 = 0.0;  // linear concentration scale
    std::size_t line = 0;  // source line, 0 if built in memory
};

struct RawResponseTable {
    std::vector<ResponseRow> rows;
};

/// Per-unit embedding rows; all rows share one width.
struct FeatureTable {
    std::vector<std::string> units;
    Eigen::MatrixXd values;  // units.size() x width

    std::size_t width() const { return static_cast<std::size_t>(values.cols()); }
};

/// Per-unit binary biomarker flags, e.g. MUT:BRAF_V600E.
struct BiomarkerTable {
    std::vector<std::string> units;
    std::vector<std::string> flags;
    std::vector<std::vector<std::uint8_t>> values;  // [unit][flag]
};

/// ln-IC50 minus the per-drug median ln-IC50. Lower is more sensitive.
struct ResponseMatrix {
    std::vector<std::string> units;
    std::vector<std::string> drugs;
    Eigen::MatrixXd scores;  // units x drugs
};

inline bool is_biomarker_key(std::string_view key) {
    static const std::regex grammar("[A-Z]+:[A-Za-z0-9_]+");
    return std::regex_match(key.begin(), key.end(), grammar);
}

/* Normalization
 * ------------- */

/// Requires a complete table: every unit has exactly one IC50 per drug.
/// Units and drugs are sorted by name.
inline ResponseMatrix normalize_scores(const RawResponseTable& raw) {
    std::set<std::string> unit_set, drug_set;
    for (const auto& r : raw.rows) {
        if (!(r.ic50 > 0.0) || !std::isfinite(r.ic50)) {
            std::string where = r.line ? " (line " + std::to_string(r.line) + ")" : "";
            throw Error("non-positive IC50 " + std::to_string(r.ic50) + " for unit '" + r.unit +
                        "', drug '" + r.drug + "'" + where);
        }
        unit_set.insert(r.unit);
        drug_set.insert(r.drug);
    }
    ResponseMatrix out;
    out.units.assign(unit_set.begin(), unit_set.end());
    out.drugs.assign(drug_set.begin(), drug_set.end());
    if (out.units.empty()) throw Error("response table is empty");

    std::unordered_map<std::string, std::size_t> ui, di;
    for (std::size_t i = 0; i < out.units.size(); ++i) ui[out.units[i]] = i;
    for (std::size_t j = 0; j < out.drugs.size(); ++j) di[out.drugs[j]] = j;

    const auto n = static_cast<Eigen::Index>(out.units.size());
    const auto k = static_cast<Eigen::Index>(out.drugs.size());
    Eigen::MatrixXd logs = Eigen::MatrixXd::Constant(n, k, std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : raw.rows) {
        double& cell = logs(static_cast<Eigen::Index>(ui[r.unit]), static_cast<Eigen::Index>(di[r.drug]));
        if (!std::isnan(cell))
            throw Error("duplicate response for unit '" + r.unit + "', drug '" + r.drug + "'");
        cell = std::log(r.ic50);
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
            if (std::isnan(logs(i, j)))
                throw Error("unit '" + out.units[static_cast<std::size_t>(i)] + "' lacks a response for drug '" +
                            out.drugs[static_cast<std::size_t>(j)] + "'");

    out.scores.resize(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        std::vector<double> col(logs.col(j).data(), logs.col(j).data() + n);
        const double m = median(col);
        out.scores.col(j) = logs.col(j).array() - m;
    }
    return out;
}

/* Dataset
 * ------- */

/// Immutable cohort: scores, embeddings and biomarker flags over one sorted unit set.
class Dataset {
public:
    Dataset() = default;

    Dataset(ResponseMatrix responses, Eigen::MatrixXd features, std::vector<std::string> flag_names,
            std::vector<std::vector<std::uint8_t>> flags)
        : units_(std::move(responses.units)),
          drugs_(std::move(responses.drugs)),
          scores_(std::move(responses.scores)),
          features_(std::move(features)),
          flag_names_(std::move(flag_names)),
          flags_(std::move(flags)) {
        if (drugs_.size() < 2) throw Error("a dataset needs at least 2 drugs");
        if (units_.empty()) throw Error("a dataset needs at least 1 unit");
        const auto n = units_.size();
        if (static_cast<std::size_t>(scores_.rows()) != n || static_cast<std::size_t>(scores_.cols()) != drugs_.size())
            throw Error("score matrix shape does not match unit/drug lists");
        if (static_cast<std::size_t>(features_.rows()) != n) throw Error("feature rows do not match units");
        if (flags_.size() != n) throw Error("biomarker rows do not match units");
        if (!features_.allFinite()) throw Error("non-finite feature entry");
        for (const auto& row : flags_)
            if (row.size() != flag_names_.size()) throw Error("biomarker row width mismatch");
        std::set<std::string> seen(drugs_.begin(), drugs_.end());
        if (seen.size() != drugs_.size()) throw Error("duplicate drug names");
        for (std::size_t i = 0; i < drugs_.size(); ++i) drug_index_[drugs_[i]] = i;
        for (std::size_t i = 0; i < flag_names_.size(); ++i) flag_index_[flag_names_[i]] = i;

        sorted_.resize(drugs_.size());
        for (std::size_t d = 0; d < drugs_.size(); ++d) {
            auto& s = sorted_[d];
            s.assign(scores_.col(static_cast<Eigen::Index>(d)).data(),
                     scores_.col(static_cast<Eigen::Index>(d)).data() + n);
            std::sort(s.begin(), s.end());
        }
    }

    std::size_t num_units() const { return units_.size(); }
    std::size_t num_drugs() const { return drugs_.size(); }
    std::size_t feature_width() const { return static_cast<std::size_t>(features_.cols()); }

    const std::vector<std::string>& units() const { return units_; }
    const std::vector<std::string>& drugs() const { return drugs_; }
    const std::vector<std::string>& flag_names() const { return flag_names_; }
    const std::string& unit_name(UnitId u) const { return units_.at(u.index); }
    const std::string& drug_name(DrugId d) const { return drugs_.at(d.index); }

    const Eigen::MatrixXd& scores() const { return scores_; }
    const Eigen::MatrixXd& features() const { return features_; }

    double score(UnitId u, DrugId d) const {
        return scores_(static_cast<Eigen::Index>(u.index), static_cast<Eigen::Index>(d.index));
    }

    std::span<const double> sorted_scores(DrugId d) const { return sorted_.at(d.index); }

    std::optional<DrugId> find_drug(std::string_view name) const {
        auto it = drug_index_.find(std::string(name));
        if (it == drug_index_.end()) return std::nullopt;
        return DrugId{it->second};
    }

    std::optional<std::size_t> find_flag(std::string_view name) const {
        auto it = flag_index_.find(std::string(name));
        if (it == flag_index_.end()) return std::nullopt;
        return it->second;
    }

    bool flag(UnitId u, std::size_t flag_idx) const { return flags_.at(u.index).at(flag_idx) != 0; }
    const std::vector<std::uint8_t>& flag_row(UnitId u) const { return flags_.at(u.index); }

    std::vector<double> embedding(UnitId u) const {
        std::vector<double> v(feature_width());
        for (std::size_t c = 0; c < v.size(); ++c)
            v[c] = features_(static_cast<Eigen::Index>(u.index), static_cast<Eigen::Index>(c));
        return v;
    }

private:
    std::vector<std::string> units_;
    std::vector<std::string> drugs_;
    Eigen::MatrixXd scores_;
    Eigen::MatrixXd features_;
    std::vector<std::string> flag_names_;
    std::vector<std::vector<std::uint8_t>> flags_;
    std::vector<std::vector<double>> sorted_;
    std::map<std::string, std::size_t> drug_index_;
    std::map<std::string, std::size_t> flag_index_;
};

/// Fraction of units whose score for `drug` is >= `score`. Strong
/// responses (low scores) map to high values.
inline double percentile_of(const Dataset& ds, DrugId drug, double score) {
    const auto s = ds.sorted_scores(drug);
    const auto first_ge = std::lower_bound(s.begin(), s.end(), score);
    const auto count = static_cast<std::size_t>(s.end() - first_ge);
    return static_cast<double>(count) / static_cast<double>(s.size());
}

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_clog(const std::string& msg) { std::clog << "warning: " << msg << '\n'; }

/// Joins responses, embeddings and flags. Units lacking any drug response
/// are dropped with a warning; units with responses but no features or
/// flags are an error.
inline Dataset assemble_dataset(const RawResponseTable& raw, const FeatureTable& feats,
                                const BiomarkerTable& flags, const WarningSink& warn = warn_to_clog) {
    std::set<std::string> drugs;
    std::map<std::string, std::set<std::string>> per_unit;
    for (const auto& r : raw.rows) {
        drugs.insert(r.drug);
        per_unit[r.unit].insert(r.drug);
    }
    RawResponseTable complete;
    std::set<std::string> kept;
    for (const auto& [unit, ds] : per_unit) {
        if (ds.size() == drugs.size())
            kept.insert(unit);
        else
            warn("dropping unit '" + unit + "': responses for " + std::to_string(ds.size()) + " of " +
                 std::to_string(drugs.size()) + " drugs");
    }
    for (const auto& r : raw.rows)
        if (kept.count(r.unit)) complete.rows.push_back(r);
    if (kept.empty()) throw Error("no unit has a complete set of drug responses");

    std::unordered_map<std::string, std::size_t> feat_row, flag_row;
    for (std::size_t i = 0; i < feats.units.size(); ++i)
        if (!feat_row.emplace(feats.units[i], i).second)
            throw Error("duplicate unit '" + feats.units[i] + "' in feature table");
    for (std::size_t i = 0; i < flags.units.size(); ++i)
        if (!flag_row.emplace(flags.units[i], i).second)
            throw Error("duplicate unit '" + flags.units[i] + "' in biomarker table");

    bool any_covered = false;
    for (const auto& u : kept)
        if (feat_row.count(u) && flag_row.count(u)) any_covered = true;
    if (!any_covered) throw Error("no unit is shared by the response, feature and biomarker tables");
    for (const auto& u : kept) {
        if (!feat_row.count(u)) throw Error("unit '" + u + "' has responses but no feature row");
        if (!flag_row.count(u)) throw Error("unit '" + u + "' has responses but no biomarker row");
    }
    for (const auto& f : flags.flags)
        if (!is_biomarker_key(f)) throw Error("malformed biomarker key '" + f + "'");

    ResponseMatrix rm = normalize_scores(complete);
    const auto n = static_cast<Eigen::Index>(rm.units.size());
    Eigen::MatrixXd fx(n, feats.values.cols());
    std::vector<std::vector<std::uint8_t>> fl(rm.units.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& name = rm.units[static_cast<std::size_t>(i)];
        fx.row(i) = feats.values.row(static_cast<Eigen::Index>(feat_row.at(name)));
        fl[static_cast<std::size_t>(i)] = flags.values.at(flag_row.at(name));
    }
    return Dataset(std::move(rm), std::move(fx), flags.flags, std::move(fl));
}

/* CSV files
 * ---------
 * Plain comma-separated text, no quoting, header row required. Errors
 * carry file:line:column.
 */

namespace detail {

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> cells;
    std::vector<std::size_t> columns;  // 1-based column of each cell's first character
};

inline Error csv_error(const std::string& file, std::size_t line, std::size_t column, const std::string& what) {
    return Error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what);
}

inline std::vector<CsvRow> read_csv(std::istream& in, const std::string& file) {
    std::vector<CsvRow> rows;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (line == 1 && text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
        if (text.empty()) continue;
        CsvRow row;
        row.line = line;
        std::size_t start = 0;
        for (;;) {
            const auto comma = text.find(',', start);
            const auto end = comma == std::string::npos ? text.size() : comma;
            std::string cell = text.substr(start, end - start);
            std::size_t lead = 0;
            while (lead < cell.size() && (cell[lead] == ' ' || cell[lead] == '\t')) ++lead;
            while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.pop_back();
            row.cells.push_back(cell.substr(std::min(lead, cell.size())));
            row.columns.push_back(start + lead + 1);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw csv_error(file, 1, 1, "empty file (header expected)");
    return rows;
}

inline double parse_real(const CsvRow& row, std::size_t i, const std::string& file) {
    const std::string& s = row.cells[i];
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw csv_error(file, row.line, row.columns[i], "expected a finite number, got '" + s + "'");
    return v;
}

inline void check_width(const CsvRow& row, std::size_t width, const std::string& file) {
    if (row.cells.size() != width)
        throw csv_error(file, row.line, row.cells.size() < width ? row.columns.back() : row.columns[width],
                        "expected " + std::to_string(width) + " fields, found " + std::to_string(row.cells.size()));
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(path + ": cannot open for reading");
    return in;
}

} // namespace detail

/// responses.csv: header `unit,drug,ic50`.
inline RawResponseTable read_responses(std::istream& in, const std::string& file = "responses.csv") {
    const auto rows = detail::read_csv(in, file);
    const auto& h = rows.front();
    if (h.cells != std::vector<std::string>{"unit", "drug", "ic50"})
        throw detail::csv_error(file, h.line, 1, "header must be 'unit,drug,ic50'");
    RawResponseTable t;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        detail::check_width(row, 3, file);
        if (row.cells[0].empty()) throw detail::csv_error(file, row.line, row.columns[0], "empty unit name");
        if (row.cells[1].empty()) throw detail::csv_error(file, row.line, row.columns[1], "empty drug name");
        const double ic50 = detail::parse_real(row, 2, file);
        if (!(ic50 > 0.0)) throw detail::csv_error(file, row.line, row.columns[2], "IC50 must be positive");
        if (!seen.emplace(row.cells[0], row.cells[1]).second)
            throw detail::csv_error(file, row.line, row.columns[0],
                                    "duplicate (unit, drug) pair '" + row.cells[0] + "," + row.cells[1] + "'");
        t.rows.push_back({row.cells[0], row.cells[1], ic50, row.line});
    }
    return t;
}

/// features.csv: header `unit,f0,f1,...`.
inline FeatureTable read_features(std::istream& in, const std::string& file = "features.csv") {
    const auto rows = detail::read_csv(in, file);
    const auto& h = rows.front();
    if (h.cells.empty() || h.cells[0] != "unit")
        throw detail::csv_error(file, h.line, 1, "first header field must be 'unit'");
    const std::size_t width = h.cells.size() - 1;
    FeatureTable t;
    t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(width));
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        detail::check_width(row, width + 1, file);
        if (!seen.insert(row.cells[0]).second)
            throw detail::csv_error(file, row.line, row.columns[0], "duplicate unit '" + row.cells[0] + "'");
        t.units.push_back(row.cells[0]);
        for (std::size_t c = 0; c < width; ++c)
            t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
                detail::parse_real(row, c + 1, file);
    }
    return t;
}

/// biomarkers.csv: header `unit,<flag>,...` with 0/1 cells.
inline BiomarkerTable read_biomarkers(std::istream& in, const std::string& file = "biomarkers.csv") {
    const auto rows = detail::read_csv(in, file);
    const auto& h = rows.front();
    if (h.cells.empty() || h.cells[0] != "unit")
        throw detail::csv_error(file, h.line, 1, "first header field must be 'unit'");
    BiomarkerTable t;
    for (std::size_t c = 1; c < h.cells.size(); ++c) {
        if (!is_biomarker_key(h.cells[c]))
            throw detail::csv_error(file, h.line, h.columns[c], "malformed biomarker key '" + h.cells[c] + "'");
        t.flags.push_back(h.cells[c]);
    }
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        detail::check_width(row, t.flags.size() + 1, file);
        if (!seen.insert(row.cells[0]).second)
            throw detail::csv_error(file, row.line, row.columns[0], "duplicate unit '" + row.cells[0] + "'");
        t.units.push_back(row.cells[0]);
        std::vector<std::uint8_t> v;
        for (std::size_t c = 1; c < row.cells.size(); ++c) {
            if (row.cells[c] == "0")
                v.push_back(0);
            else if (row.cells[c] == "1")
                v.push_back(1);
            else
                throw detail::csv_error(file, row.line, row.columns[c], "flag must be 0 or 1, got '" + row.cells[c] + "'");
        }
        t.values.push_back(std::move(v));
    }
    return t;
}

inline RawResponseTable read_responses(const std::string& path) {
    auto in = detail::open_input(path);
    return read_responses(in, path);
}
inline FeatureTable read_features(const std::string& path) {
    auto in = detail::open_input(path);
    return read_features(in, path);
}
inline BiomarkerTable read_biomarkers(const std::string& path) {
    auto in = detail::open_input(path);
    return read_biomarkers(in, path);
}

inline void write_responses(std::ostream& out, const RawResponseTable& t) {
    out << "unit,drug,ic50\n";
    for (const auto& r : t.rows) out << r.unit << ',' << r.drug << ',' << format_real(r.ic50) << '\n';
}

inline void write_features(std::ostream& out, const FeatureTable& t) {
    out << "unit";
    for (std::size_t c = 0; c < t.width(); ++c) out << ",f" << c;
    out << '\n';
    for (std::size_t i = 0; i < t.units.size(); ++i) {
        out << t.units[i];
        for (std::size_t c = 0; c < t.width(); ++c)
            out << ',' << format_real(t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
        out << '\n';
    }
}

inline void write_biomarkers(std::ostream& out, const BiomarkerTable& t) {
    out << "unit";
    for (const auto& f : t.flags) out << ',' << f;
    out << '\n';
    for (std::size_t i = 0; i < t.units.size(); ++i) {
        out << t.units[i];
        for (auto v : t.values[i]) out << ',' << static_cast<int>(v);
        out << '\n';
    }
}

/* Principal components
 * --------------------
 * Fallback reducer for synthetic data; real embeddings are computed upstream.
 */

struct PcaResult {
    FeatureTable table;
    Eigen::VectorXd explained_variance;  // non-increasing
    Eigen::MatrixXd components;          // width x dim, orthonormal columns
    Eigen::RowVectorXd mean;
};

inline PcaResult pca_reduce(const FeatureTable& feats, std::size_t dim) {
    const auto width = feats.width();
    if (dim > width) throw Error("pca_reduce: dim " + std::to_string(dim) + " exceeds width " + std::to_string(width));
    if (feats.values.rows() < 1) throw Error("pca_reduce: no rows");
    PcaResult out;
    out.mean = feats.values.colwise().mean();
    const Eigen::MatrixXd centered = feats.values.rowwise() - out.mean;
    const double denom = std::max<double>(1.0, static_cast<double>(feats.values.rows() - 1));
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca_reduce: eigen decomposition failed");

    // Eigen returns ascending eigenvalues; take them from the back.
    const auto w = static_cast<Eigen::Index>(width);
    const auto d = static_cast<Eigen::Index>(dim);
    out.components.resize(w, d);
    out.explained_variance.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::VectorXd v = eig.eigenvectors().col(w - 1 - j);
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;  // sign convention: largest-magnitude loading positive
        out.components.col(j) = v;
        out.explained_variance(j) = std::max(0.0, eig.eigenvalues()(w - 1 - j));
    }
    out.table.units = feats.units;
    out.table.values = centered * out.components;
    return out;
}

} // namespace oncobandit

#endif // ONCOBANDIT_INGEST_HPP
