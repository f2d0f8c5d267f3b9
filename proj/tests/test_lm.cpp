#include <catch2/catch.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "cesfit/data.hpp"
#include "cesfit/lm.hpp"
#include "oracles.hpp"

using namespace cesfit;

namespace {

const CesParams kTruth{2.0, 0.6, 0.4, 0.5, 1.2};

Dataset seed7_fixture(double noise_sigma = 0.0) {
    SynthSpec spec;
    spec.true_params = kTruth;
    spec.n = 200;
    spec.k_range = {0.5, 50.0};
    spec.l_range = {0.5, 50.0};
    spec.noise_sigma = noise_sigma;
    spec.seed = 7;
    return generate(spec);
}

bool outcomes_identical(const LmOutcome& a, const LmOutcome& b) {
    if (std::memcmp(&a.params, &b.params, sizeof(CesParams)) != 0) return false;
    if (std::memcmp(&a.rss, &b.rss, sizeof(double)) != 0) return false;
    if (a.iterations != b.iterations || a.status != b.status) return false;
    if (a.rss_trace.size() != b.rss_trace.size()) return false;
    return std::memcmp(a.rss_trace.data(), b.rss_trace.data(),
                       a.rss_trace.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("recovers shares and efficiency on noiseless data", "[lm]") {
    const Dataset data = seed7_fixture();
    CesParams init{1.0, 0.5, 0.5, kTruth.rho, kTruth.rho1};
    const FreeMask mask{true, true, true, false, false};
    const LmOutcome out = lm_fit(data.observations, init, mask, Scale::Levels);

    REQUIRE(is_converged(out.status));
    CHECK(out.params.efficiency_a == Approx(kTruth.efficiency_a).epsilon(1e-4));
    CHECK(out.params.share_delta == Approx(kTruth.share_delta).epsilon(1e-4));
    CHECK(out.params.share_delta1 == Approx(kTruth.share_delta1).epsilon(1e-4));
    CHECK(out.params.rho == kTruth.rho);
    CHECK(out.params.rho1 == kTruth.rho1);
}

TEST_CASE("single free A matches the closed form", "[lm]") {
    const Dataset data = seed7_fixture(0.05);
    CesParams init{0.7, 0.55, 0.45, 0.6, 1.1};
    const FreeMask mask{true, false, false, false, false};
    const LmOutcome out = lm_fit(data.observations, init, mask, Scale::Levels);
    const double expected = oracles::closed_form_a(data.observations, init);

    REQUIRE(is_converged(out.status));
    CHECK(out.params.efficiency_a == Approx(expected).epsilon(1e-8));
}

TEST_CASE("init at the optimum of perfect-fit data", "[lm]") {
    const Dataset data = seed7_fixture();
    const FreeMask mask{true, true, true, false, false};
    const LmOutcome out = lm_fit(data.observations, kTruth, mask, Scale::Levels);

    CHECK((out.status == LmStatus::ConvergedRss || out.status == LmStatus::ConvergedGradient));
    CHECK(out.iterations <= 2);
    CHECK(out.rss <= 1e-18);
}

TEST_CASE("accepted-step trace is non-increasing and bounded by init", "[lm]") {
    const Dataset data = seed7_fixture(0.1);
    CesParams init{0.5, 0.3, 0.7, kTruth.rho, kTruth.rho1};
    const FreeMask mask{true, true, true, false, false};
    const LmOutcome out = lm_fit(data.observations, init, mask, Scale::Levels);

    REQUIRE(out.rss_trace.size() >= 2);
    for (std::size_t i = 1; i < out.rss_trace.size(); ++i)
        REQUIRE(out.rss_trace[i] <= out.rss_trace[i - 1]);
    CHECK(out.rss <= rss(init, data.observations, Scale::Levels));
    CHECK(out.rss == out.rss_trace.back());
}

TEST_CASE("identical runs are bitwise identical", "[lm]") {
    const Dataset data = seed7_fixture(0.03);
    CesParams init{1.4, 0.45, 0.55, kTruth.rho, kTruth.rho1};
    const FreeMask mask{true, true, true, false, false};
    const LmOutcome a = lm_fit(data.observations, init, mask, Scale::Logs);
    const LmOutcome b = lm_fit(data.observations, init, mask, Scale::Logs);
    REQUIRE(outcomes_identical(a, b));
}

TEST_CASE("extreme damping follows scaled steepest descent", "[lm]") {
    const Dataset data = seed7_fixture();
    CesParams init{1.3, 0.45, kTruth.share_delta1, kTruth.rho, kTruth.rho1};
    const FreeMask mask{true, true, false, false, false};

    LmOptions options;
    options.lambda_init = 1e9;
    options.max_iterations = 1;

    const LmOutcome out = lm_fit(data.observations, init, mask, Scale::Levels, options);
    REQUIRE(out.rss_trace.size() == 2);  // the tiny damped step is still a descent step
    const Eigen::VectorXd step = pack_free(out.params, mask) - pack_free(init, mask);

    const Eigen::MatrixXd jac = jacobian(init, data.observations, mask, Scale::Levels);
    const Eigen::VectorXd r = residuals(init, data.observations, Scale::Levels);
    const Eigen::VectorXd descent =
        (jac.transpose() * jac).diagonal().cwiseInverse().asDiagonal() * (jac.transpose() * r);

    const double cosine = step.dot(descent) / (step.norm() * descent.norm());
    CHECK(cosine > 0.99);
}

TEST_CASE("inadmissible start is reported, not thrown", "[lm]") {
    const std::vector<Observation> data{
        {1.0, 1.0, 1.0}, {1.0, 1.0, 2.0}, {1.0, 9.0, 1.0}, {1.0, 1.0, 3.0}};
    const CesParams bad{1.0, 0.5, 2.0, 0.5, 1.0};
    const LmOutcome out =
        lm_fit(data, bad, FreeMask{true, true, true, false, false}, Scale::Levels);
    CHECK(out.status == LmStatus::InadmissibleStart);
    CHECK(out.iterations == 0);
    CHECK(out.rss_trace.empty());
}

TEST_CASE("argument validation", "[lm]") {
    const Dataset data = seed7_fixture();
    const std::vector<Observation> three(data.observations.begin(),
                                         data.observations.begin() + 3);
    CHECK_THROWS_AS(
        lm_fit(three, kTruth, FreeMask{true, true, true, false, false}, Scale::Levels),
        std::invalid_argument);
    CHECK_THROWS_AS(lm_fit(data.observations, kTruth,
                           FreeMask{false, false, false, false, false}, Scale::Levels),
                    std::invalid_argument);
    LmOptions bad;
    bad.lambda_factor = 0.5;
    CHECK_THROWS_AS(lm_fit(data.observations, kTruth,
                           FreeMask{true, true, true, false, false}, Scale::Levels, bad),
                    std::invalid_argument);
}

TEST_CASE("unconverged caps report MaxIterations", "[lm]") {
    const Dataset data = seed7_fixture(0.2);
    CesParams init{0.4, 0.2, 0.8, kTruth.rho, kTruth.rho1};
    LmOptions options;
    options.max_iterations = 2;
    options.rss_rel_tol = 1e-300;
    options.grad_tol = 1e-300;
    options.step_tol = 1e-300;
    const LmOutcome out = lm_fit(data.observations, init,
                                 FreeMask{true, true, true, false, false}, Scale::Levels,
                                 options);
    CHECK(out.status == LmStatus::MaxIterations);
    CHECK(out.iterations == 2);
}
