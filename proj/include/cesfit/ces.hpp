#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "cesfit/errors.hpp"

namespace cesfit {

/// Substitution parameters with magnitude below this are treated as zero and
/// evaluated through the matching limit form; the direct power expression is
/// 0/0 at zero and cancels catastrophically nearby.
inline constexpr double kEpsilonRho = 1e-8;

/// One plant/industry record. All fields strictly positive; labor is
/// real-valued so that survey averages stay representable.
struct Observation {
    double output;   // V, currency units
    double capital;  // K, currency units
    double labor;    // L, person count
};

/// Parameters of the nested CES technology
///
///   V = A * [ d*(d1*K^-r1 + (1-d1)*L^-r1)^(r/r1) + (1-d)*(K/L)^-r ]^(-1/r)
///
/// share_delta and share_delta1 are deliberately not confined to [0,1]:
/// admissibility is a per-observation positivity check on the bracketed
/// aggregates, performed at evaluation time.
struct CesParams {
    double efficiency_a = 1.0;  // A > 0, technology level
    double share_delta = 0.5;   // weight of the (K, L) nest vs the K/L term
    double share_delta1 = 0.5;  // weight of capital inside the nest
    double rho = 0.5;           // outer substitution parameter
    double rho1 = 0.5;          // nest substitution parameter
};

enum class Intensity { PurelyCapitalIntensive, LaborIntensive };

struct IntensityClass {
    Intensity label;
    double tolerance_used;
};

namespace detail {

enum class EvalPath { Direct, InnerLimit, OuterLimit, CobbDouglas };

inline EvalPath select_path(double rho, double rho1) {
    const bool rho_small = std::fabs(rho) < kEpsilonRho;
    const bool rho1_small = std::fabs(rho1) < kEpsilonRho;
    if (rho_small) return rho1_small ? EvalPath::CobbDouglas : EvalPath::OuterLimit;
    return rho1_small ? EvalPath::InnerLimit : EvalPath::Direct;
}

/// Intermediates of one model evaluation, shared by the value, the marginal
/// products and the parameter Jacobian. Fields not touched by a path keep
/// their neutral defaults.
struct EvalCore {
    EvalPath path;
    double log_k, log_l, log_ratio;       // ln K, ln L, ln(K/L)
    double pow_k = 1.0, pow_l = 1.0;      // K^-rho1, L^-rho1
    double inner = 1.0, log_inner = 0.0;  // nest aggregate I
    double log_nest_gm = 0.0;             // ln(K^d1 * L^(1-d1)), InnerLimit
    double inner_pow = 1.0;               // P = I^(rho/rho1) or its limit
    double ratio_pow = 1.0;               // Q = (K/L)^-rho
    double outer = 1.0, log_outer = 0.0;  // outer bracket B
    double value;                         // V
};

/// nullopt when a bracketed aggregate is non-positive or the value does not
/// come out finite. Throws DomainError on non-positive capital/labor.
inline std::optional<EvalCore> try_eval_core(const CesParams& p, double capital, double labor) {
    if (!(capital > 0.0) || !(labor > 0.0))
        throw DomainError("capital and labor must be > 0");
    if (!(p.efficiency_a > 0.0)) throw DomainError("efficiency A must be > 0");

    EvalCore e;
    e.path = select_path(p.rho, p.rho1);
    e.log_k = std::log(capital);
    e.log_l = std::log(labor);
    e.log_ratio = e.log_k - e.log_l;

    const double d = p.share_delta;
    const double d1 = p.share_delta1;

    switch (e.path) {
        case EvalPath::Direct:
            e.pow_k = std::exp(-p.rho1 * e.log_k);
            e.pow_l = std::exp(-p.rho1 * e.log_l);
            e.inner = d1 * e.pow_k + (1.0 - d1) * e.pow_l;
            if (!(e.inner > 0.0)) return std::nullopt;
            e.log_inner = std::log(e.inner);
            e.inner_pow = std::exp((p.rho / p.rho1) * e.log_inner);
            e.ratio_pow = std::exp(-p.rho * e.log_ratio);
            e.outer = d * e.inner_pow + (1.0 - d) * e.ratio_pow;
            if (!(e.outer > 0.0)) return std::nullopt;
            e.log_outer = std::log(e.outer);
            e.value = p.efficiency_a * std::exp(-e.log_outer / p.rho);
            break;

        case EvalPath::InnerLimit:
            // rho1 -> 0: the nest collapses to the geometric mean K^d1 * L^(1-d1).
            e.log_nest_gm = d1 * e.log_k + (1.0 - d1) * e.log_l;
            e.inner_pow = std::exp(-p.rho * e.log_nest_gm);
            e.ratio_pow = std::exp(-p.rho * e.log_ratio);
            e.outer = d * e.inner_pow + (1.0 - d) * e.ratio_pow;
            if (!(e.outer > 0.0)) return std::nullopt;
            e.log_outer = std::log(e.outer);
            e.value = p.efficiency_a * std::exp(-e.log_outer / p.rho);
            break;

        case EvalPath::OuterLimit:
            // rho -> 0: V = A * I^(-d/rho1) * (K/L)^(1-d).
            e.pow_k = std::exp(-p.rho1 * e.log_k);
            e.pow_l = std::exp(-p.rho1 * e.log_l);
            e.inner = d1 * e.pow_k + (1.0 - d1) * e.pow_l;
            if (!(e.inner > 0.0)) return std::nullopt;
            e.log_inner = std::log(e.inner);
            e.value = p.efficiency_a *
                      std::exp(-(d / p.rho1) * e.log_inner + (1.0 - d) * e.log_ratio);
            break;

        case EvalPath::CobbDouglas: {
            // joint rho = rho1 -> 0: A * K^(d*d1 + 1 - d) * L^(d*(1-d1) - (1-d)).
            const double ek = d * d1 + 1.0 - d;
            const double el = d * (1.0 - d1) - (1.0 - d);
            e.value = p.efficiency_a * std::exp(ek * e.log_k + el * e.log_l);
            break;
        }
    }

    // Boundary shares collapse the model exactly; the power chain would
    // round these results, so compute them directly.
    if (d == 0.0)
        e.value = p.efficiency_a * (capital / labor);
    else if (d == 1.0 && d1 == 1.0)
        e.value = p.efficiency_a * capital;
    else if (d == 1.0 && d1 == 0.0)
        e.value = p.efficiency_a * labor;

    if (!std::isfinite(e.value)) return std::nullopt;
    return e;
}

}  // namespace detail

/// Model value, or nullopt when the share parameters are inadmissible for
/// this (K, L). Throws DomainError on non-positive inputs.
inline std::optional<double> try_eval_ces(const CesParams& p, double capital, double labor) {
    const auto core = detail::try_eval_core(p, capital, labor);
    if (!core) return std::nullopt;
    return core->value;
}

/// Nested CES output for one input point.
inline double eval_ces(const CesParams& p, double capital, double labor) {
    const auto v = try_eval_ces(p, capital, labor);
    if (!v) throw NonPositiveAggregate("non-positive CES aggregate");
    return *v;
}

/// Joint rho = rho1 -> 0 limit, computed in log space:
/// V = A * K^(d*d1 + 1 - d) * L^(d*(1-d1) - (1-d)).
inline double eval_cobb_douglas_limit(const CesParams& p, double capital, double labor) {
    if (!(capital > 0.0) || !(labor > 0.0))
        throw DomainError("capital and labor must be > 0");
    if (!(p.efficiency_a > 0.0)) throw DomainError("efficiency A must be > 0");
    const double ek = p.share_delta * p.share_delta1 + 1.0 - p.share_delta;
    const double el = p.share_delta * (1.0 - p.share_delta1) - (1.0 - p.share_delta);
    return p.efficiency_a * std::exp(ek * std::log(capital) + el * std::log(labor));
}

/// Flat three-input CES, the rho1 == rho special case written out directly:
/// A * [d*d1*K^-r + d*(1-d1)*L^-r + (1-d)*(K/L)^-r]^(-1/r).
/// The caller asserts rho1 == rho.
inline double eval_plain_ces3(const CesParams& p, double capital, double labor) {
    if (p.rho1 != p.rho)
        throw std::invalid_argument("eval_plain_ces3 requires rho1 == rho");
    if (!(capital > 0.0) || !(labor > 0.0))
        throw DomainError("capital and labor must be > 0");
    if (!(p.efficiency_a > 0.0)) throw DomainError("efficiency A must be > 0");
    const double d = p.share_delta;
    const double d1 = p.share_delta1;
    if (d == 0.0) return p.efficiency_a * (capital / labor);
    if (d == 1.0 && d1 == 1.0) return p.efficiency_a * capital;
    if (d == 1.0 && d1 == 0.0) return p.efficiency_a * labor;
    if (std::fabs(p.rho) < kEpsilonRho) return eval_cobb_douglas_limit(p, capital, labor);

    const double lk = std::log(capital);
    const double ll = std::log(labor);
    const double sum = d * d1 * std::exp(-p.rho * lk) +
                       d * (1.0 - d1) * std::exp(-p.rho * ll) +
                       (1.0 - d) * std::exp(-p.rho * (lk - ll));
    if (!(sum > 0.0)) throw NonPositiveAggregate("non-positive CES aggregate");
    return p.efficiency_a * std::exp(-std::log(sum) / p.rho);
}

struct MarginalProducts {
    double mpk;  // dV/dK
    double mpl;  // dV/dL
};

/// Analytic marginal products via the chain rule through the nested form,
/// with the K/L composite contributing to both partials.
inline MarginalProducts marginal_products(const CesParams& p, double capital, double labor) {
    const auto core = detail::try_eval_core(p, capital, labor);
    if (!core) throw NonPositiveAggregate("non-positive CES aggregate");
    const auto& e = *core;
    const double d = p.share_delta;
    const double d1 = p.share_delta1;
    const double v = e.value;

    // Derivatives of the exact boundary-share collapses.
    if (d == 0.0) return {p.efficiency_a / labor, -p.efficiency_a * capital / (labor * labor)};
    if (d == 1.0 && d1 == 1.0) return {p.efficiency_a, 0.0};
    if (d == 1.0 && d1 == 0.0) return {0.0, p.efficiency_a};

    switch (e.path) {
        case detail::EvalPath::Direct: {
            const double nest_k = e.inner_pow * e.pow_k / e.inner;
            const double nest_l = e.inner_pow * e.pow_l / e.inner;
            return {v / (e.outer * capital) * (d * d1 * nest_k + (1.0 - d) * e.ratio_pow),
                    v / (e.outer * labor) * (d * (1.0 - d1) * nest_l - (1.0 - d) * e.ratio_pow)};
        }
        case detail::EvalPath::InnerLimit:
            return {v / (e.outer * capital) * (d * d1 * e.inner_pow + (1.0 - d) * e.ratio_pow),
                    v / (e.outer * labor) *
                        (d * (1.0 - d1) * e.inner_pow - (1.0 - d) * e.ratio_pow)};
        case detail::EvalPath::OuterLimit:
            return {v / capital * (d * d1 * e.pow_k / e.inner + (1.0 - d)),
                    v / labor * (d * (1.0 - d1) * e.pow_l / e.inner - (1.0 - d))};
        case detail::EvalPath::CobbDouglas: {
            const double ek = d * d1 + 1.0 - d;
            const double el = d * (1.0 - d1) - (1.0 - d);
            return {ek * v / capital, el * v / labor};
        }
    }
    throw std::logic_error("unreachable");
}

/// Purely capital intensive iff both shares sit within `tolerance` of 1;
/// any other combination is labor intensive.
inline IntensityClass classify_intensity(const CesParams& p, double tolerance) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
    const bool capital = std::fabs(p.share_delta - 1.0) <= tolerance &&
                         std::fabs(p.share_delta1 - 1.0) <= tolerance;
    return {capital ? Intensity::PurelyCapitalIntensive : Intensity::LaborIntensive, tolerance};
}

/// Elasticity of substitution, sigma = 1/(1+rho). rho = -1 yields the
/// +infinity sentinel through IEEE division.
inline double sigma_from_rho(double rho) { return 1.0 / (1.0 + rho); }

struct ConcavityProbe {
    double v_kk;  // central second difference of V in K
    double v_ll;  // central second difference of V in L
    bool diagonal_nonpositive;
};

/// Local concavity diagnostic. The K/L composite admits non-concave regions,
/// so callers report violations rather than assert on them.
inline ConcavityProbe concavity_probe(const CesParams& p, double capital, double labor) {
    const double hk = 1e-5 * std::max(1.0, std::fabs(capital));
    const double hl = 1e-5 * std::max(1.0, std::fabs(labor));
    const double v0 = eval_ces(p, capital, labor);
    const double vkk =
        (eval_ces(p, capital + hk, labor) - 2.0 * v0 + eval_ces(p, capital - hk, labor)) /
        (hk * hk);
    const double vll =
        (eval_ces(p, capital, labor + hl) - 2.0 * v0 + eval_ces(p, capital, labor - hl)) /
        (hl * hl);
    const double slack = 1e-7 * std::max(1.0, std::fabs(v0));
    return {vkk, vll, vkk <= slack && vll <= slack};
}

}  // namespace cesfit
