#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <stdexcept>

#include "cesfit/ces.hpp"
#include "cesfit/errors.hpp"

namespace cesfit {

/// Residual scale. Levels: r_i = V_i - Vhat_i. Logs: r_i = ln V_i - ln Vhat_i.
enum class Scale { Levels, Logs };

/// Which of the five parameters are estimated; the rest stay at their initial
/// values. Parameter order is fixed as (A, delta, delta1, rho, rho1)
/// everywhere a packed vector or Jacobian column appears.
struct FreeMask {
    bool efficiency_a = true;
    bool share_delta = true;
    bool share_delta1 = true;
    bool rho = false;
    bool rho1 = false;

    int count() const {
        return int(efficiency_a) + int(share_delta) + int(share_delta1) + int(rho) + int(rho1);
    }
    std::array<bool, 5> flags() const {
        return {efficiency_a, share_delta, share_delta1, rho, rho1};
    }

    static FreeMask all() { return {true, true, true, true, true}; }
    static FreeMask only(int index) {
        FreeMask m{false, false, false, false, false};
        switch (index) {
            case 0: m.efficiency_a = true; break;
            case 1: m.share_delta = true; break;
            case 2: m.share_delta1 = true; break;
            case 3: m.rho = true; break;
            case 4: m.rho1 = true; break;
            default: throw std::out_of_range("parameter index");
        }
        return m;
    }
};

/// Free entries of `p` in fixed parameter order.
inline Eigen::VectorXd pack_free(const CesParams& p, const FreeMask& mask) {
    const std::array<double, 5> values{p.efficiency_a, p.share_delta, p.share_delta1, p.rho,
                                       p.rho1};
    const auto flags = mask.flags();
    Eigen::VectorXd theta(mask.count());
    Eigen::Index j = 0;
    for (int i = 0; i < 5; ++i)
        if (flags[i]) theta[j++] = values[i];
    return theta;
}

/// `base` with its free entries replaced from `theta`.
inline CesParams unpack_free(const Eigen::VectorXd& theta, const FreeMask& mask,
                             const CesParams& base) {
    CesParams p = base;
    std::array<double*, 5> slots{&p.efficiency_a, &p.share_delta, &p.share_delta1, &p.rho,
                                 &p.rho1};
    const auto flags = mask.flags();
    Eigen::Index j = 0;
    for (int i = 0; i < 5; ++i)
        if (flags[i]) *slots[i] = theta[j++];
    return p;
}

/// Model predictions for every observation, in input order. Throws
/// NonPositiveAggregate carrying the first offending observation index.
inline Eigen::VectorXd model_values(const CesParams& p, std::span<const Observation> data) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto value = try_eval_ces(p, data[i].capital, data[i].labor);
        if (!value) throw NonPositiveAggregate("non-positive CES aggregate", i);
        v[static_cast<Eigen::Index>(i)] = *value;
    }
    return v;
}

inline Eigen::VectorXd residuals(const CesParams& p, std::span<const Observation> data,
                                 Scale scale) {
    Eigen::VectorXd r = model_values(p, data);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        r[k] = scale == Scale::Levels ? data[i].output - r[k]
                                      : std::log(data[i].output) - std::log(r[k]);
    }
    return r;
}

/// Sum of squared residuals, accumulated left to right over input order so
/// repeated runs are bitwise identical.
inline double rss(const CesParams& p, std::span<const Observation> data, Scale scale) {
    const Eigen::VectorXd r = residuals(p, data, scale);
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) total += r[i] * r[i];
    return total;
}

namespace detail {

/// Central finite difference of the model value in one substitution
/// parameter, used where the analytic expression degenerates (|rho| or
/// |rho1| below kEpsilonRho).
inline double fd_rho_derivative(const CesParams& p, double capital, double labor,
                                bool wrt_rho1, std::size_t observation_index) {
    const double x = wrt_rho1 ? p.rho1 : p.rho;
    const double h = 1e-6 * std::max(1.0, std::fabs(x));
    CesParams lo = p;
    CesParams hi = p;
    (wrt_rho1 ? lo.rho1 : lo.rho) = x - h;
    (wrt_rho1 ? hi.rho1 : hi.rho) = x + h;
    const auto vlo = try_eval_ces(lo, capital, labor);
    const auto vhi = try_eval_ces(hi, capital, labor);
    if (!vlo || !vhi)
        throw NonPositiveAggregate("non-positive CES aggregate", observation_index);
    return (*vhi - *vlo) / (2.0 * h);
}

/// dV/d(A, delta, delta1, rho, rho1) at one observation.
inline std::array<double, 5> param_gradient(const CesParams& p, const EvalCore& e,
                                            double capital, double labor,
                                            std::size_t observation_index) {
    const double d = p.share_delta;
    const double d1 = p.share_delta1;
    const double v = e.value;
    std::array<double, 5> g{};
    g[0] = v / p.efficiency_a;

    switch (e.path) {
        case EvalPath::Direct: {
            g[1] = -(v / (p.rho * e.outer)) * (e.inner_pow - e.ratio_pow);
            g[2] = -(v * d / (p.rho1 * e.outer)) * (e.inner_pow / e.inner) *
                   (e.pow_k - e.pow_l);
            const double db_drho = d * e.inner_pow * (e.log_inner / p.rho1) -
                                   (1.0 - d) * e.ratio_pow * e.log_ratio;
            g[3] = v * (e.log_outer / (p.rho * p.rho) - db_drho / (p.rho * e.outer));
            const double di_drho1 =
                -d1 * e.log_k * e.pow_k - (1.0 - d1) * e.log_l * e.pow_l;
            g[4] = -(v * d * e.inner_pow / (p.rho1 * e.outer)) *
                   (di_drho1 / e.inner - e.log_inner / p.rho1);
            break;
        }
        case EvalPath::InnerLimit: {
            g[1] = -(v / (p.rho * e.outer)) * (e.inner_pow - e.ratio_pow);
            g[2] = v * d * e.inner_pow * e.log_ratio / e.outer;
            const double db_drho = -d * e.inner_pow * e.log_nest_gm -
                                   (1.0 - d) * e.ratio_pow * e.log_ratio;
            g[3] = v * (e.log_outer / (p.rho * p.rho) - db_drho / (p.rho * e.outer));
            g[4] = fd_rho_derivative(p, capital, labor, true, observation_index);
            break;
        }
        case EvalPath::OuterLimit: {
            g[1] = -v * (e.log_inner / p.rho1 + e.log_ratio);
            g[2] = -(v * d / p.rho1) * (e.pow_k - e.pow_l) / e.inner;
            g[3] = fd_rho_derivative(p, capital, labor, false, observation_index);
            const double di_drho1 =
                -d1 * e.log_k * e.pow_k - (1.0 - d1) * e.log_l * e.pow_l;
            g[4] = -v * d *
                   (di_drho1 / (e.inner * p.rho1) - e.log_inner / (p.rho1 * p.rho1));
            break;
        }
        case EvalPath::CobbDouglas:
            g[1] = v * ((d1 - 1.0) * e.log_k + (2.0 - d1) * e.log_l);
            g[2] = v * d * e.log_ratio;
            g[3] = fd_rho_derivative(p, capital, labor, false, observation_index);
            g[4] = fd_rho_derivative(p, capital, labor, true, observation_index);
            break;
    }
    return g;
}

}  // namespace detail

/// n x p Jacobian of predictions with respect to the free parameters, column
/// order following the fixed parameter order restricted to free entries.
/// Levels entries are dVhat_i/dtheta_j; Logs entries divide by Vhat_i.
inline Eigen::MatrixXd jacobian(const CesParams& p, std::span<const Observation> data,
                                const FreeMask& mask, Scale scale) {
    const int cols = mask.count();
    if (cols == 0) throw std::invalid_argument("mask frees no parameters");
    const auto flags = mask.flags();
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(data.size()), cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto core = detail::try_eval_core(p, data[i].capital, data[i].labor);
        if (!core) throw NonPositiveAggregate("non-positive CES aggregate", i);
        const auto g = detail::param_gradient(p, *core, data[i].capital, data[i].labor, i);
        const double denom = scale == Scale::Levels ? 1.0 : core->value;
        Eigen::Index j = 0;
        for (int k = 0; k < 5; ++k)
            if (flags[k]) jac(static_cast<Eigen::Index>(i), j++) = g[k] / denom;
    }
    return jac;
}

}  // namespace cesfit
