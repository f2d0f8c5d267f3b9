#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cesfit/detail/text.hpp"
#include "cesfit/lm.hpp"

namespace cesfit {

struct FitStats {
    double r_squared;
    double std_error;  // sqrt(rss / (n - p))
    double rss;
    double sigma_outer;  // 1/(1+rho)
    double sigma_inner;  // 1/(1+rho1)
    double delta;
    double delta1;
    double efficiency_a;
    std::string convergence;
    IntensityClass intensity;
};

/// Table label for a solver status: any converged status reads "Achieved".
inline std::string convergence_label(LmStatus status) {
    return is_converged(status) ? "Achieved" : to_string(status);
}

/// Fit statistics in the fitting scale: R-squared against the scale's total
/// sum of squares, residual standard error sqrt(rss/(n-p)), both elasticities
/// and the intensity classification at the given tolerance.
inline FitStats compute_stats(std::span<const Observation> data, const LmOutcome& outcome,
                              Scale scale, std::size_t n, std::size_t p,
                              double intensity_tolerance) {
    if (p < 1 || n <= p) throw std::invalid_argument("require n > p >= 1");

    double mean = 0.0;
    for (const auto& obs : data)
        mean += scale == Scale::Levels ? obs.output : std::log(obs.output);
    mean /= static_cast<double>(data.size());
    double tss = 0.0;
    for (const auto& obs : data) {
        const double y = scale == Scale::Levels ? obs.output : std::log(obs.output);
        tss += (y - mean) * (y - mean);
    }
    if (!(tss > 0.0)) throw DegenerateData("constant output: total sum of squares is zero");

    FitStats stats;
    stats.rss = outcome.rss;
    stats.r_squared = 1.0 - outcome.rss / tss;
    stats.std_error = std::sqrt(outcome.rss / static_cast<double>(n - p));
    stats.sigma_outer = sigma_from_rho(outcome.params.rho);
    stats.sigma_inner = sigma_from_rho(outcome.params.rho1);
    stats.delta = outcome.params.share_delta;
    stats.delta1 = outcome.params.share_delta1;
    stats.efficiency_a = outcome.params.efficiency_a;
    stats.convergence = convergence_label(outcome.status);
    stats.intensity = classify_intensity(outcome.params, intensity_tolerance);
    return stats;
}

struct ReportMeta {
    std::string industry_code = "-";
    std::string rho_set_label = "-";
};

enum class ReportFormat { Text, Csv, Json };

inline const char* to_string(Intensity label) {
    return label == Intensity::PurelyCapitalIntensive ? "PurelyCapitalIntensive"
                                                      : "LaborIntensive";
}

namespace detail {

/// Two-decimal sigma with the nearest-integer annotation, e.g. "1.40 ≈ 1".
/// Half-way values round to even so 0.5 annotates as 0.
inline std::string sigma_text(double sigma) {
    if (!std::isfinite(sigma)) return format_double(sigma);
    std::string out = format_fixed2(sigma);
    const double nearest = std::nearbyint(sigma);
    if (std::fabs(sigma - nearest) <= 0.5) {
        out += " ≈ ";
        out += format_double(nearest);
    }
    return out;
}

}  // namespace detail

inline const std::string kReportCsvHeader =
    "industry,rho_set,r2,std_error,sigma_outer,sigma_inner,delta,delta1,A,rss,convergence,"
    "intensity";

/// One fit rendered as a self-contained document. Text uses two decimals and
/// annotates sigma_outer with its nearest integer; Csv and Json carry full
/// precision. Byte-deterministic, locale-independent.
inline std::string render_report(const FitStats& stats, const ReportMeta& meta,
                                 ReportFormat format) {
    using detail::pad;
    switch (format) {
        case ReportFormat::Text: {
            std::string out;
            out += pad("industry", 10) + pad("rho_set", 10) + pad("r2", 7) +
                   pad("std_error", 11) + pad("sigma_outer", 13) + pad("sigma_inner", 13) +
                   pad("delta", 8) + pad("delta1", 8) + pad("rss", 9) + "convergence\n";
            out += pad(meta.industry_code, 10) + pad(meta.rho_set_label, 10) +
                   pad(detail::format_fixed2(stats.r_squared), 7) +
                   pad(detail::format_fixed2(stats.std_error), 11) +
                   pad(detail::sigma_text(stats.sigma_outer), 13) +
                   pad(detail::format_fixed2(stats.sigma_inner), 13) +
                   pad(detail::format_fixed2(stats.delta), 8) +
                   pad(detail::format_fixed2(stats.delta1), 8) +
                   pad(detail::format_fixed2(stats.rss), 9) + stats.convergence + "\n";
            return out;
        }
        case ReportFormat::Csv: {
            std::string out = kReportCsvHeader + "\n";
            out += meta.industry_code + ',' + meta.rho_set_label + ',';
            out += detail::format_double(stats.r_squared) + ',';
            out += detail::format_double(stats.std_error) + ',';
            out += detail::format_double(stats.sigma_outer) + ',';
            out += detail::format_double(stats.sigma_inner) + ',';
            out += detail::format_double(stats.delta) + ',';
            out += detail::format_double(stats.delta1) + ',';
            out += detail::format_double(stats.efficiency_a) + ',';
            out += detail::format_double(stats.rss) + ',';
            out += stats.convergence + ',';
            out += to_string(stats.intensity.label);
            out += '\n';
            return out;
        }
        case ReportFormat::Json: {
            nlohmann::ordered_json j;
            j["industry"] = meta.industry_code;
            j["rho_set"] = meta.rho_set_label;
            j["r2"] = stats.r_squared;
            j["std_error"] = stats.std_error;
            j["sigma_outer"] = stats.sigma_outer;
            j["sigma_inner"] = stats.sigma_inner;
            j["delta"] = stats.delta;
            j["delta1"] = stats.delta1;
            j["A"] = stats.efficiency_a;
            j["rss"] = stats.rss;
            j["convergence"] = stats.convergence;
            j["intensity"] = {{"label", to_string(stats.intensity.label)},
                              {"tolerance", stats.intensity.tolerance_used}};
            return j.dump(2) + "\n";
        }
    }
    throw std::logic_error("unreachable");
}

/// Inverse of the Json report; the meta fields are returned alongside.
inline std::pair<FitStats, ReportMeta> stats_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    FitStats stats;
    ReportMeta meta;
    meta.industry_code = j.at("industry").get<std::string>();
    meta.rho_set_label = j.at("rho_set").get<std::string>();
    stats.r_squared = j.at("r2").get<double>();
    stats.std_error = j.at("std_error").get<double>();
    stats.sigma_outer = j.at("sigma_outer").get<double>();
    stats.sigma_inner = j.at("sigma_inner").get<double>();
    stats.delta = j.at("delta").get<double>();
    stats.delta1 = j.at("delta1").get<double>();
    stats.efficiency_a = j.at("A").get<double>();
    stats.rss = j.at("rss").get<double>();
    stats.convergence = j.at("convergence").get<std::string>();
    const auto& label = j.at("intensity").at("label").get_ref<const std::string&>();
    stats.intensity.label = label == "PurelyCapitalIntensive"
                                ? Intensity::PurelyCapitalIntensive
                                : Intensity::LaborIntensive;
    stats.intensity.tolerance_used = j.at("intensity").at("tolerance").get<double>();
    return {stats, meta};
}

}  // namespace cesfit
