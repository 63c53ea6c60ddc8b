#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tsr/curves.hpp"
#include "tsr/rng.hpp"

using namespace tsr;

namespace {

std::vector<double> exp_curve(double a, double b, double c, std::size_t n) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = a * std::exp(-b * static_cast<double>(i + 1)) + c;
    }
    return y;
}

std::vector<double> poly_curve(const std::vector<double>& coeffs, std::size_t n) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        double v = 0.0, p = 1.0;
        for (double c : coeffs) {
            v += c * p;
            p *= t;
        }
        y[i] = v;
    }
    return y;
}

}  // namespace

TEST_CASE("fit_exponential recovers known parameters from noiseless data") {
    const FitOutcome fit = fit_exponential(exp_curve(2.0, 0.5, 1.0, 50));
    REQUIRE(fit.ok());
    CHECK(std::abs(fit.params[0] - 2.0) < 1e-3);
    CHECK(std::abs(fit.params[1] - 0.5) < 1e-3);
    CHECK(std::abs(fit.params[2] - 1.0) < 1e-3);
    CHECK(fit.residual_sse < 1e-10);
}

TEST_CASE("fit_exponential recovers random parameter draws") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = rng.uniform(0.1, 5.0);
        const double b = rng.uniform(0.05, 2.0);
        const double c = rng.uniform(0.0, 3.0);
        const FitOutcome fit = fit_exponential(exp_curve(a, b, c, 50));
        REQUIRE_MESSAGE(fit.ok(), "a=", a, " b=", b, " c=", c);
        CHECK(std::abs(fit.params[0] - a) < 1e-3);
        CHECK(std::abs(fit.params[1] - b) < 1e-3);
        CHECK(std::abs(fit.params[2] - c) < 1e-3);
    }
}

TEST_CASE("fit_exponential rejects a strictly increasing curve as non-positive decay") {
    std::vector<double> y(20);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(0.5 * static_cast<double>(i + 1));
    const FitOutcome fit = fit_exponential(y);
    CHECK_FALSE(fit.ok());
    CHECK(fit.status == FitStatus::non_positive_decay);
}

TEST_CASE("fit_exponential fails typed on short or degenerate input") {
    CHECK(fit_exponential(std::vector<double>{3.0, 2.0, 1.0}).status == FitStatus::too_few_points);

    // A constant curve leaves b unidentifiable.
    const FitOutcome flat = fit_exponential(std::vector<double>(30, 4.0));
    CHECK_FALSE(flat.ok());
    CHECK(flat.status == FitStatus::non_convergence);

    std::vector<double> with_nan(10, 1.0);
    with_nan[4] = std::nan("");
    CHECK(fit_exponential(with_nan).status == FitStatus::non_finite);
}

TEST_CASE("fit_poly5 reproduces exact degree-5 data") {
    const std::vector<double> coeffs{1.0, 0.0, 0.0, -2.0, 0.0, 1.0};  // 1 - 2t^3 + t^5
    const std::vector<double> y = poly_curve(coeffs, 20);
    const FitOutcome fit = fit_poly5(y);
    REQUIRE(fit.ok());
    double sum_sq = 0.0;
    for (double v : y) sum_sq += v * v;
    CHECK(fit.residual_sse < 1e-16 * std::max(sum_sq, 1.0));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(fit.params[i] - coeffs[i]) < 1e-8);
}

TEST_CASE("fit_poly5 on a constant curve returns the constant") {
    const FitOutcome fit = fit_poly5(std::vector<double>(12, 4.0));
    REQUIRE(fit.ok());
    CHECK(std::abs(fit.params[0] - 4.0) < 1e-10);
    for (std::size_t i = 1; i < 6; ++i) CHECK(std::abs(fit.params[i]) < 1e-10);
}

TEST_CASE("fit_poly5 interpolates exactly six points") {
    Rng rng(4);
    std::vector<double> y(6);
    for (double& v : y) v = rng.uniform(-2.0, 2.0);
    const FitOutcome fit = fit_poly5(y);
    REQUIRE(fit.ok());
    CHECK(fit.residual_sse < 1e-18);
    CHECK(fit_poly5(std::vector<double>(5, 1.0)).status == FitStatus::too_few_points);
}

TEST_CASE("fit_poly5 reproduces random low-degree polynomials") {
    Rng rng(9);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> coeffs(6, 0.0);
        const std::size_t degree = rng.below(6);
        for (std::size_t i = 0; i <= degree; ++i) coeffs[i] = rng.uniform(-3.0, 3.0);
        const std::size_t n = 7 + rng.below(60);
        const std::vector<double> y = poly_curve(coeffs, n);
        const FitOutcome fit = fit_poly5(y);
        REQUIRE(fit.ok());
        double sum_sq = 0.0;
        for (double v : y) sum_sq += v * v;
        CHECK(fit.residual_sse <= 1e-12 * std::max(sum_sq, 1e-12));
    }
}

TEST_CASE("similarity is the mean squared parameter difference") {
    FitOutcome ref{FitModel::exponential, FitStatus::success, {1.0, 2.0, 3.0}, 0.0};
    FitOutcome cand{FitModel::exponential, FitStatus::success, {1.0, 2.0, 6.0}, 0.0};
    const auto same = similarity(ref, ref);
    REQUIRE(same.has_value());
    CHECK(same->value == 0.0);

    const auto score = similarity(ref, cand);
    REQUIRE(score.has_value());
    CHECK(score->value == doctest::Approx(3.0));  // 9/3

    SUBCASE("a failed operand makes the score undefined") {
        const FitOutcome bad = FitOutcome::failure(FitModel::exponential, FitStatus::non_convergence);
        CHECK_FALSE(similarity(ref, bad).has_value());
        CHECK_FALSE(similarity(bad, ref).has_value());
    }
    SUBCASE("mixing model families is an error") {
        FitOutcome poly{FitModel::poly5, FitStatus::success, {1, 0, 0, 0, 0, 0}, 0.0};
        CHECK_THROWS_AS(similarity(ref, poly), ModelFamilyMismatch);
    }
}

TEST_CASE("similarity is symmetric and non-negative on random parameters") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        FitOutcome a{FitModel::poly5, FitStatus::success, {}, 0.0};
        FitOutcome b{FitModel::poly5, FitStatus::success, {}, 0.0};
        for (int i = 0; i < 6; ++i) {
            a.params.push_back(rng.uniform(-5.0, 5.0));
            b.params.push_back(rng.uniform(-5.0, 5.0));
        }
        const auto ab = similarity(a, b);
        const auto ba = similarity(b, a);
        REQUIRE(ab.has_value());
        CHECK(ab->value == ba->value);
        CHECK(ab->value >= 0.0);
        if (a.params == b.params) CHECK(ab->value == 0.0);
        if (ab->value == 0.0) CHECK(a.params == b.params);
    }
}

TEST_CASE("mean_curve averages elementwise") {
    LossCurve a, b;
    a.train_loss = {1.0, 2.0};
    a.val_loss = {10.0, 20.0};
    b.train_loss = {3.0, 4.0};
    b.val_loss = {30.0, 40.0};

    const std::vector<LossCurve> single{a};
    CHECK(mean_curve(single) == a);

    const std::vector<LossCurve> both{a, b};
    const LossCurve m = mean_curve(both);
    CHECK(m.train_loss == std::vector<double>{2.0, 3.0});
    CHECK(m.val_loss == std::vector<double>{20.0, 30.0});

    const std::vector<LossCurve> copies{a, a, a, a, a};
    const LossCurve idem = mean_curve(copies);
    for (std::size_t e = 0; e < a.epochs(); ++e) {
        CHECK(idem.train_loss[e] == doctest::Approx(a.train_loss[e]).epsilon(1e-15));
    }

    LossCurve shorter;
    shorter.train_loss = {1.0};
    shorter.val_loss = {1.0};
    const std::vector<LossCurve> bad{a, shorter};
    CHECK_THROWS_AS(mean_curve(bad), LengthMismatch);
    CHECK_THROWS_AS(mean_curve(std::vector<LossCurve>{}), LengthMismatch);
}

TEST_CASE("fit csv round-trips success and failure rows") {
    const FitOutcome fit = fit_exponential(exp_curve(1.5, 0.3, 0.2, 40));
    REQUIRE(fit.ok());
    const std::string path = "/tmp/tsr_test_fit.csv";
    write_fit_csv(fit, path);
    const FitOutcome back = read_fit_csv(path);
    CHECK(back.model == fit.model);
    CHECK(back.status == fit.status);
    CHECK(back.params == fit.params);
    CHECK(back.residual_sse == fit.residual_sse);

    const FitOutcome fail = FitOutcome::failure(FitModel::poly5, FitStatus::non_finite);
    write_fit_csv(fail, path);
    const FitOutcome fail_back = read_fit_csv(path);
    CHECK(fail_back.model == FitModel::poly5);
    CHECK(fail_back.status == FitStatus::non_finite);
    CHECK(fail_back.params.empty());
}
