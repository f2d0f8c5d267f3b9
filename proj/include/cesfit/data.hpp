#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cesfit/ces.hpp"
#include "cesfit/detail/text.hpp"
#include "cesfit/errors.hpp"

namespace cesfit {

/// Observations plus optional per-row tags, stored as parallel columns so a
/// file may carry any subset of them.
struct Dataset {
    std::vector<Observation> observations;
    std::optional<std::vector<std::string>> industry;
    std::optional<std::vector<std::string>> state;
    std::optional<std::vector<int>> year;

    std::size_t size() const { return observations.size(); }
};

/// Parses `output,capital,labor[,industry][,state][,year]` CSV text. Columns
/// may appear in any order; unrecognized columns are ignored. Rows with
/// non-numeric or non-positive required fields are rejected with their
/// 1-based data-row index. Comma separator only.
inline Dataset load_csv(const std::string& text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty()) throw EmptyDataset("no header line");

    const auto header = detail::split(lines[0], ',');
    int col_output = -1, col_capital = -1, col_labor = -1;
    int col_industry = -1, col_state = -1, col_year = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto name = detail::trim(header[c]);
        if (name == "output") col_output = static_cast<int>(c);
        else if (name == "capital") col_capital = static_cast<int>(c);
        else if (name == "labor") col_labor = static_cast<int>(c);
        else if (name == "industry") col_industry = static_cast<int>(c);
        else if (name == "state") col_state = static_cast<int>(c);
        else if (name == "year") col_year = static_cast<int>(c);
    }
    if (col_output < 0) throw MissingColumn("missing column: output");
    if (col_capital < 0) throw MissingColumn("missing column: capital");
    if (col_labor < 0) throw MissingColumn("missing column: labor");

    Dataset data;
    if (col_industry >= 0) data.industry.emplace();
    if (col_state >= 0) data.state.emplace();
    if (col_year >= 0) data.year.emplace();

    std::size_t row = 0;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        if (detail::trim(lines[k]).empty()) continue;
        ++row;
        const auto fields = detail::split(lines[k], ',');
        if (fields.size() < header.size()) throw BadRow(row, "too few fields");

        const auto numeric = [&](int col, const char* name) {
            const auto value = detail::parse_double(detail::trim(fields[col]));
            if (!value) throw BadRow(row, std::string(name) + " is not a number");
            if (!(*value > 0.0)) throw BadRow(row, std::string(name) + " must be > 0");
            return *value;
        };
        Observation obs;
        obs.output = numeric(col_output, "output");
        obs.capital = numeric(col_capital, "capital");
        obs.labor = numeric(col_labor, "labor");
        data.observations.push_back(obs);

        if (data.industry)
            data.industry->emplace_back(detail::trim(fields[col_industry]));
        if (data.state) data.state->emplace_back(detail::trim(fields[col_state]));
        if (data.year) {
            const auto text_value = detail::trim(fields[col_year]);
            const auto value = detail::parse_long(text_value);
            if (!value && !text_value.empty()) throw BadRow(row, "year is not an integer");
            data.year->push_back(value ? static_cast<int>(*value) : 0);
        }
    }
    if (data.observations.empty()) throw EmptyDataset("no data rows");
    return data;
}

/// CSV text that load_csv maps back to the identical dataset; numeric values
/// use the shortest round-trip decimal form.
inline std::string render_csv(const Dataset& data) {
    std::string out = "output,capital,labor";
    if (data.industry) out += ",industry";
    if (data.state) out += ",state";
    if (data.year) out += ",year";
    out += '\n';
    for (std::size_t i = 0; i < data.observations.size(); ++i) {
        const auto& obs = data.observations[i];
        out += detail::format_double(obs.output);
        out += ',';
        out += detail::format_double(obs.capital);
        out += ',';
        out += detail::format_double(obs.labor);
        if (data.industry) {
            out += ',';
            out += (*data.industry)[i];
        }
        if (data.state) {
            out += ',';
            out += (*data.state)[i];
        }
        if (data.year) {
            out += ',';
            out += std::to_string((*data.year)[i]);
        }
        out += '\n';
    }
    return out;
}

enum class NoiseKind { LogNormal, Additive };

/// Recipe for a deterministic synthetic dataset. Identical specs produce
/// byte-identical datasets on every platform; see the generator notes on
/// `generate`.
struct SynthSpec {
    CesParams true_params;
    std::size_t n = 1;
    std::pair<double, double> k_range{0.5, 50.0};  // log-uniform sampling bounds
    std::pair<double, double> l_range{0.5, 50.0};
    double noise_sigma = 0.0;  // std dev of the noise term
    NoiseKind noise_kind = NoiseKind::LogNormal;
    std::uint64_t seed = 0;
};

namespace detail {

/// Uniform in [0, 1) from the top 53 bits of one mt19937_64 draw.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform in (0, 1], usable under a logarithm.
inline double uniform01_positive(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    const double u = uniform01(rng);
    return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
}

/// Standard normal via the Box-Muller cosine branch (two draws, one value).
inline double standard_normal(std::mt19937_64& rng) {
    const double u1 = uniform01_positive(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Draws (K_i, L_i) log-uniformly from the configured ranges and sets
/// V_i = eval_ces(true_params, K_i, L_i) with multiplicative log-normal (or
/// additive Gaussian) noise.
///
/// Generator: std::mt19937_64 seeded with spec.seed. Per row the draw order
/// is K, then L, then (only when noise_sigma > 0) the two uniforms of one
/// Box-Muller cosine normal. Uniforms take the top 53 bits of a single
/// 64-bit output; no std::*_distribution is involved, so output is stable
/// across standard libraries. This layout is load-bearing: golden fixtures
/// freeze its byte-level behavior.
inline Dataset generate(const SynthSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("n must be >= 1");
    if (!(spec.k_range.first < spec.k_range.second) ||
        !(spec.l_range.first < spec.l_range.second) || !(spec.k_range.first > 0.0) ||
        !(spec.l_range.first > 0.0))
        throw std::invalid_argument("ranges must satisfy 0 < low < high");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");

    std::mt19937_64 rng(spec.seed);
    Dataset data;
    data.observations.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        Observation obs;
        obs.capital = detail::log_uniform(rng, spec.k_range.first, spec.k_range.second);
        obs.labor = detail::log_uniform(rng, spec.l_range.first, spec.l_range.second);
        const auto value = try_eval_ces(spec.true_params, obs.capital, obs.labor);
        if (!value)
            throw InadmissibleParams("true parameters are inadmissible at a drawn point");
        obs.output = *value;
        if (spec.noise_sigma > 0.0) {
            const double eps = spec.noise_sigma * detail::standard_normal(rng);
            obs.output = spec.noise_kind == NoiseKind::LogNormal ? obs.output * std::exp(eps)
                                                                 : obs.output + eps;
            if (!(obs.output > 0.0))
                throw InadmissibleParams("additive noise produced non-positive output");
        }
        data.observations.push_back(obs);
    }
    return data;
}

enum class GroupBy { State, Industry, StateAndIndustry };

/// One aggregation row; the key fields not selected by the grouping stay
/// empty.
struct GroupTotal {
    std::string state;
    std::string industry;
    double total_output;
};

/// Sums output per group in deterministic lexicographic key order. Requires
/// the grouping tag(s) on every row.
inline std::vector<GroupTotal> aggregate_output(const Dataset& data, GroupBy by) {
    const bool need_state = by == GroupBy::State || by == GroupBy::StateAndIndustry;
    const bool need_industry = by == GroupBy::Industry || by == GroupBy::StateAndIndustry;
    if (need_state && !data.state) throw MissingTag("dataset has no state column");
    if (need_industry && !data.industry) throw MissingTag("dataset has no industry column");

    std::map<std::pair<std::string, std::string>, double> totals;
    for (std::size_t i = 0; i < data.observations.size(); ++i) {
        std::pair<std::string, std::string> key;
        if (need_state) {
            key.first = (*data.state)[i];
            if (key.first.empty()) throw MissingTag("row has empty state tag");
        }
        if (need_industry) {
            key.second = (*data.industry)[i];
            if (key.second.empty()) throw MissingTag("row has empty industry tag");
        }
        totals[key] += data.observations[i].output;
    }

    std::vector<GroupTotal> result;
    result.reserve(totals.size());
    for (const auto& [key, total] : totals)
        result.push_back({key.first, key.second, total});
    return result;
}

}  // namespace cesfit
