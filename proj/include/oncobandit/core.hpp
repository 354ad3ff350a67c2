#ifndef ONCOBANDIT_CORE_HPP
#define ONCOBANDIT_CORE_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oncobandit {

/// Raised for malformed inputs and violated preconditions.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/* Identifiers
 * -----------
 * Small-integer indices into a dataset's drug and unit lists. Kept as
 * distinct types so a unit can never be passed where a drug is expected.
 */

struct DrugId {
    std::size_t index = 0;
    friend constexpr bool operator==(DrugId, DrugId) = default;
    friend constexpr auto operator<=>(DrugId, DrugId) = default;
};

struct UnitId {
    std::size_t index = 0;
    friend constexpr bool operator==(UnitId, UnitId) = default;
    friend constexpr auto operator<=>(UnitId, UnitId) = default;
};

/* State modes
 * ----------- */

enum class StateMode { Genomic, Guideline, Both };

inline std::string_view to_string(StateMode m) {
    switch (m) {
    case StateMode::Genomic: return "genomic";
    case StateMode::Guideline: return "guideline";
    case StateMode::Both: return "both";
    }
    return "?";
}

inline StateMode parse_state_mode(std::string_view s) {
    if (s == "genomic") return StateMode::Genomic;
    if (s == "guideline") return StateMode::Guideline;
    if (s == "both") return StateMode::Both;
    throw Error("unknown state mode '" + std::string(s) + "' (expected genomic|guideline|both)");
}

/// Expected context width for a mode, given embedding width and drug count.
inline std::size_t context_width(StateMode m, std::size_t embedding_width, std::size_t k) {
    switch (m) {
    case StateMode::Genomic: return embedding_width;
    case StateMode::Guideline: return k;
    case StateMode::Both: return embedding_width + k;
    }
    return 0;
}

/// Feature vector presented to an agent. Layout is embedding block first,
/// then the recommendation block (if any).
class Context {
public:
    Context(StateMode mode, std::vector<double> values, std::size_t recommendation_width)
        : mode_(mode), values_(std::move(values)) {
        std::size_t rec_begin = 0;
        switch (mode_) {
        case StateMode::Genomic: rec_begin = values_.size(); break;
        case StateMode::Guideline: rec_begin = 0; break;
        case StateMode::Both: rec_begin = values_.size() - recommendation_width; break;
        }
        if (mode_ != StateMode::Genomic) {
            if (recommendation_width > values_.size())
                throw Error("context shorter than its recommendation block");
            for (std::size_t i = rec_begin; i < values_.size(); ++i)
                if (values_[i] != 0.0 && values_[i] != 1.0)
                    throw Error("recommendation entries must be 0 or 1");
        }
        for (double v : values_)
            if (!std::isfinite(v)) throw Error("context entries must be finite");
    }

    StateMode mode() const { return mode_; }
    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    StateMode mode_;
    std::vector<double> values_;
};

/* Rewards
 * ------- */

enum class RewardKind { DiffBest, Rank, Percentile };

inline std::string_view to_string(RewardKind k) {
    switch (k) {
    case RewardKind::DiffBest: return "diff";
    case RewardKind::Rank: return "rank";
    case RewardKind::Percentile: return "percentile";
    }
    return "?";
}

inline RewardKind parse_reward_kind(std::string_view s) {
    if (s == "diff") return RewardKind::DiffBest;
    if (s == "rank") return RewardKind::Rank;
    if (s == "percentile") return RewardKind::Percentile;
    throw Error("unknown reward kind '" + std::string(s) + "' (expected diff|rank|percentile)");
}

/// A reward tagged with its kind; construction checks the kind's range.
/// diff <= 0, rank in [1, k], percentile in (0, 1].
class RewardValue {
public:
    RewardValue(RewardKind kind, double value, std::size_t k) : kind_(kind), value_(value) {
        bool ok = std::isfinite(value);
        switch (kind) {
        case RewardKind::DiffBest: ok = ok && value <= 0.0; break;
        case RewardKind::Rank: ok = ok && value >= 1.0 && value <= static_cast<double>(k); break;
        case RewardKind::Percentile: ok = ok && value > 0.0 && value <= 1.0; break;
        }
        if (!ok)
            throw Error("reward " + std::to_string(value) + " out of range for kind " +
                        std::string(to_string(kind)));
    }

    RewardKind kind() const { return kind_; }
    double value() const { return value_; }
    operator double() const { return value_; }

private:
    RewardKind kind_;
    double value_;
};

/* Random numbers
 * --------------
 * A counter-based generator: draw i of a stream with key K is
 * mix64(K + (i + 1) * 0x9E3779B97F4A7C15), where mix64 is the SplitMix64
 * finalizer. Keys are derived from (seed, label) by FNV-1a over the label
 * followed by mixing with the parent key. Distributions are implemented
 * here rather than taken from <random>, whose distribution algorithms are
 * implementation-defined.
 */

namespace detail {

constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

using RngSeed = std::uint64_t;

class RngStream {
public:
    RngStream() = default;

    static RngStream from_key(std::uint64_t key) {
        RngStream s;
        s.key_ = key;
        return s;
    }

    /// Child stream; depends only on this stream's key and the label,
    /// never on how many draws were already taken.
    RngStream derive(std::string_view label) const {
        if (label.empty()) throw Error("stream label must be non-empty");
        return from_key(detail::mix64(key_ ^ detail::mix64(detail::fnv1a(label))));
    }

    RngStream derive(std::string_view label, std::size_t index) const {
        return derive(std::string(label) + "/" + std::to_string(index));
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t position() const { return counter_; }

    std::uint64_t next_u64() {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::golden_gamma);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open0() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform integer on [0, n) by rejection, so no modulo bias.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw Error("uniform_index over an empty range");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do r = next_u64();
        while (r >= limit);
        return static_cast<std::size_t>(r % bound);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller; both variates are used.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Gamma(shape, 1), Marsaglia-Tsang; shape < 1 handled by boosting.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw Error("gamma shape must be positive");
        if (shape < 1.0) {
            const double u = uniform_open0();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open0();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Inverse-gamma(shape, scale): scale / Gamma(shape, 1).
    double inverse_gamma(double shape, double scale) { return scale / gamma(shape); }

    /// Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(i)]);
        return p;
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Root stream for an experiment seed.
inline RngStream root_stream(RngSeed seed) {
    return RngStream::from_key(detail::mix64(seed ^ 0x6A09E667F3BCC908ULL));
}

/// Named stream for (seed, label).
inline RngStream derive_stream(RngSeed seed, std::string_view label) {
    return root_stream(seed).derive(label);
}

/// Shortest round-trip decimal form.
inline std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Median of a copy of the values; even counts average the two central order statistics.
inline double median(std::vector<double> v) {
    if (v.empty()) throw Error("median of an empty set");
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace oncobandit

#endif // ONCOBANDIT_CORE_HPP
