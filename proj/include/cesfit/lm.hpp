#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cesfit/objective.hpp"

namespace cesfit {

struct LmOptions {
    int max_iterations = 200;
    double lambda_init = 1e-3;
    double lambda_factor = 10.0;  // > 1; divides on accept, multiplies on reject
    double rss_rel_tol = 1e-10;
    double grad_tol = 1e-8;
    double step_tol = 1e-12;
    double lambda_max = 1e12;
};

enum class LmStatus {
    ConvergedRss,
    ConvergedGradient,
    ConvergedStep,
    MaxIterations,
    DampingOverflow,
    InadmissibleStart,
};

inline bool is_converged(LmStatus s) {
    return s == LmStatus::ConvergedRss || s == LmStatus::ConvergedGradient ||
           s == LmStatus::ConvergedStep;
}

inline const char* to_string(LmStatus s) {
    switch (s) {
        case LmStatus::ConvergedRss: return "ConvergedRss";
        case LmStatus::ConvergedGradient: return "ConvergedGradient";
        case LmStatus::ConvergedStep: return "ConvergedStep";
        case LmStatus::MaxIterations: return "MaxIterations";
        case LmStatus::DampingOverflow: return "DampingOverflow";
        case LmStatus::InadmissibleStart: return "InadmissibleStart";
    }
    return "unknown";
}

inline LmStatus lm_status_from_string(const std::string& s) {
    for (auto status : {LmStatus::ConvergedRss, LmStatus::ConvergedGradient,
                        LmStatus::ConvergedStep, LmStatus::MaxIterations,
                        LmStatus::DampingOverflow, LmStatus::InadmissibleStart})
        if (s == to_string(status)) return status;
    throw std::invalid_argument("unknown LM status: " + s);
}

struct LmOutcome {
    CesParams params;  // best accepted point
    double rss = std::numeric_limits<double>::infinity();
    int iterations = 0;
    LmStatus status = LmStatus::InadmissibleStart;
    std::vector<double> rss_trace;  // RSS at init, then after each accepted step
};

namespace detail {

inline void validate_lm_options(const LmOptions& o) {
    const bool ok = o.max_iterations > 0 && o.lambda_init > 0.0 && o.lambda_factor > 1.0 &&
                    o.rss_rel_tol > 0.0 && o.grad_tol > 0.0 && o.step_tol > 0.0 &&
                    o.lambda_max > 0.0;
    if (!ok) throw std::invalid_argument("invalid LM options");
}

inline double sum_of_squares(const Eigen::VectorXd& r) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) total += r[i] * r[i];
    return total;
}

}  // namespace detail

/// Damped least squares over the free parameters. Each iteration solves
///
///   (J'J + lambda * diag(J'J)) s = J'r
///
/// and accepts the step only if the RSS strictly decreases, shrinking lambda
/// on acceptance and inflating it on rejection (rejections count toward the
/// iteration cap). Singular factorizations and steps that make an observation
/// inadmissible, or push a free A to <= 0, are rejected the same way. The
/// accepted-RSS trace is non-increasing by construction and the whole run is
/// deterministic.
inline LmOutcome lm_fit(std::span<const Observation> data, const CesParams& init,
                        const FreeMask& mask, Scale scale, const LmOptions& options = {}) {
    detail::validate_lm_options(options);
    const int p = mask.count();
    if (p < 1) throw std::invalid_argument("mask frees no parameters");
    if (static_cast<std::size_t>(p) + 1 > data.size())
        throw std::invalid_argument("need at least one more observation than free parameters");

    LmOutcome out;
    out.params = init;

    Eigen::VectorXd r;
    try {
        r = residuals(init, data, scale);
    } catch (const NonPositiveAggregate&) {
        out.status = LmStatus::InadmissibleStart;
        return out;
    }

    CesParams current = init;
    double current_rss = detail::sum_of_squares(r);
    out.rss_trace.push_back(current_rss);

    double lambda = options.lambda_init;
    LmStatus status = LmStatus::MaxIterations;
    int iterations = options.max_iterations;

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        Eigen::MatrixXd jac;
        bool have_jacobian = true;
        try {
            jac = jacobian(current, data, mask, scale);
        } catch (const NonPositiveAggregate&) {
            have_jacobian = false;  // finite-difference probe left the admissible set
        }

        bool accepted = false;
        if (have_jacobian) {
            const Eigen::VectorXd gradient = jac.transpose() * r;
            if (gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) {
                status = LmStatus::ConvergedGradient;
                iterations = iter;
                break;
            }

            const Eigen::MatrixXd jtj = jac.transpose() * jac;
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal();

            const Eigen::LDLT<Eigen::MatrixXd> factor(damped);
            if (factor.info() == Eigen::Success) {
                const Eigen::VectorXd step = factor.solve(gradient);
                if (step.allFinite()) {
                    const Eigen::VectorXd theta = pack_free(current, mask) + step;
                    const CesParams candidate = unpack_free(theta, mask, current);
                    if (!mask.efficiency_a || candidate.efficiency_a > 0.0) {
                        try {
                            const Eigen::VectorXd r_new = residuals(candidate, data, scale);
                            const double rss_new = detail::sum_of_squares(r_new);
                            if (rss_new < current_rss) {
                                const double rel_drop = (current_rss - rss_new) / current_rss;
                                double step_rel = 0.0;
                                for (Eigen::Index j = 0; j < step.size(); ++j)
                                    step_rel = std::max(
                                        step_rel,
                                        std::fabs(step[j]) / std::max(1.0, std::fabs(theta[j])));

                                current = candidate;
                                current_rss = rss_new;
                                r = r_new;
                                out.rss_trace.push_back(current_rss);
                                lambda /= options.lambda_factor;
                                accepted = true;

                                if (rel_drop < options.rss_rel_tol) {
                                    status = LmStatus::ConvergedRss;
                                    iterations = iter;
                                    break;
                                }
                                if (step_rel < options.step_tol) {
                                    status = LmStatus::ConvergedStep;
                                    iterations = iter;
                                    break;
                                }
                            }
                        } catch (const NonPositiveAggregate&) {
                            // step left the admissible set; reject
                        }
                    }
                }
            }
        }

        if (!accepted) {
            lambda *= options.lambda_factor;
            if (lambda > options.lambda_max) {
                status = LmStatus::DampingOverflow;
                iterations = iter;
                break;
            }
        }
    }

    out.params = current;
    out.rss = current_rss;
    out.iterations = iterations;
    out.status = status;
    return out;
}

}  // namespace cesfit
