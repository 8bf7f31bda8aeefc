#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "morbo/surrogate.hpp"
#include "stats.hpp"

using namespace morbo;
using namespace morbo::surrogate;

namespace {

Matrix uniform_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < d; ++k) x(i, k) = u(rng);
    return x;
}

Vector sine(const Matrix& x) {
    return x.col(0).unaryExpr([](double a) { return std::sin(2.0 * std::numbers::pi * a); });
}

GPHyperparams fixed_hp(Eigen::Index d, double ls, double signal = 1.0) {
    GPHyperparams hp;
    hp.lengthscales = Vector::Constant(d, ls);
    hp.signal_variance = signal;
    hp.noise_variance = 1e-6;
    hp.constant_mean = 0.0;
    return hp;
}

}  // namespace

TEST_CASE("matern52 closed form") {
    Matrix a(1, 2), b(1, 2);
    a << 0.1, 0.2;
    b << 0.4, 0.6;
    GPHyperparams hp = fixed_hp(2, 0.5, 2.0);
    hp.lengthscales << 0.5, 0.25;
    const double r = std::sqrt(std::pow(0.3 / 0.5, 2) + std::pow(0.4 / 0.25, 2));
    const double expected =
        2.0 * (1 + std::sqrt(5.0) * r + 5.0 / 3.0 * r * r) * std::exp(-std::sqrt(5.0) * r);
    CHECK(matern52(a, b, hp)(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(matern52(a, a, hp)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("log marginal likelihood gradient matches finite differences") {
    const Matrix x = uniform_points(15, 3, 4);
    Vector y = sine(x) + 0.3 * x.col(1);
    y = (y.array() - y.mean()) / std::sqrt((y.array() - y.mean()).square().mean());
    GPHyperparams hp = fixed_hp(3, 0.4, 1.3);
    hp.lengthscales << 0.3, 0.7, 1.1;
    hp.noise_variance = 1e-3;
    hp.constant_mean = 0.2;

    Vector grad;
    log_marginal_likelihood(x, y, hp, &grad);
    const double h = 1e-6;
    for (int k = 0; k < 5; ++k) {
        auto shifted = [&](double delta) {
            GPHyperparams p = hp;
            if (k < 3) p.lengthscales(k) *= std::exp(delta);
            if (k == 3) p.signal_variance *= std::exp(delta);
            if (k == 4) p.constant_mean += delta;
            return log_marginal_likelihood(x, y, p);
        };
        const double fd = (shifted(h) - shifted(-h)) / (2 * h);
        CHECK(grad(k) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("fit_gp edge cases") {
    SUBCASE("single observation is interpolated") {
        Matrix x(1, 2);
        x << 0.3, 0.7;
        Vector y(1);
        y << 2.5;
        const auto model = fit_gp(x, y);
        const auto p = posterior(model, x);
        CHECK(p.mean(0) == doctest::Approx(2.5).epsilon(1e-6));
        Matrix far(1, 2);
        far << 0.9, 0.1;
        CHECK(posterior(model, far).cov(0, 0) > 0.0);
    }
    SUBCASE("constant targets recover the constant") {
        const Matrix x = uniform_points(8, 3, 1);
        const Vector y = Vector::Constant(8, 4.2);
        const auto model = fit_gp(x, y);
        CHECK(model.target_std() == 1.0);
        const auto p = posterior(model, uniform_points(5, 3, 99));
        for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(p.mean(i) - 4.2) < 1e-3);
    }
    SUBCASE("invalid data") {
        Matrix x = uniform_points(4, 2, 1);
        Vector y = Vector::Ones(4);
        y(2) = std::nan("");
        CHECK_THROWS_AS(fit_gp(x, y), InvalidData);
        x(0, 0) = 1.5;
        CHECK_THROWS_AS(fit_gp(x, Vector::Ones(4)), InvalidData);
        CHECK_THROWS_AS(fit_gp(Matrix(0, 2), Vector(0)), PreconditionError);
    }
}

TEST_CASE("fit_gp learns sin(2 pi x1) on d = 2") {
    const Matrix x = uniform_points(20, 2, 7);
    const auto model = fit_gp(x, sine(x));
    const Matrix test = uniform_points(10, 2, 123);
    const Vector truth = sine(test);
    const Vector pred = posterior(model, test).mean;
    const double rmse = std::sqrt((pred - truth).squaredNorm() / 10.0);
    CHECK(rmse < 0.1);
}

TEST_CASE("fitted likelihood is at least every restart's starting likelihood") {
    const Matrix x = uniform_points(25, 4, 17);
    const Vector y = sine(x) + x.col(2).array().square().matrix();
    FitReport report;
    FitOptions opts;
    opts.seed = 3;
    fit_gp(x, y, opts, &report);
    REQUIRE(report.initial_mll.size() == 5);
    for (double init : report.initial_mll) CHECK(report.final_mll >= init - 1e-6);
}

TEST_CASE("standardization commutes with affine target maps") {
    const Matrix x = uniform_points(15, 2, 5);
    const Vector y = sine(x) + 0.5 * x.col(1);
    const Vector y2 = (3.0 * y.array() + 2.0).matrix();
    FitOptions opts;
    opts.seed = 9;
    const auto m1 = fit_gp(x, y, opts);
    const auto m2 = fit_gp(x, y2, opts);
    const Matrix q = uniform_points(6, 2, 77);
    const Vector p1 = posterior(m1, q).mean;
    const Vector p2 = posterior(m2, q).mean;
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(p2(i) - (3.0 * p1(i) + 2.0)) < 1e-6);
}

TEST_CASE("posterior properties") {
    const Matrix x = uniform_points(10, 2, 2);
    const Vector y = sine(x);
    SUBCASE("near interpolation at a training input") {
        const GPModel model(x, y, fixed_hp(2, 0.3));
        const auto p = posterior(model, x.topRows(1));
        CHECK(std::abs(p.mean(0) - y(0)) < 1e-3);
    }
    SUBCASE("reverts to the prior far from data") {
        Matrix xl(3, 2);
        xl << 0.05, 0.05, 0.1, 0.05, 0.05, 0.1;
        Vector yl(3);
        yl << 1.0, 2.0, 3.0;
        GPHyperparams hp = fixed_hp(2, 0.01, 1.5);
        hp.constant_mean = 0.4;
        const GPModel model(xl, yl, hp);
        Matrix far(1, 2);
        far << 0.9, 0.9;
        const auto p = posterior(model, far);
        const double sd = model.target_std();
        CHECK(p.mean(0) == doctest::Approx(model.target_mean() + sd * 0.4).epsilon(1e-9));
        CHECK(p.cov(0, 0) == doctest::Approx(1.5 * sd * sd).epsilon(1e-9));
    }
    SUBCASE("joint covariance diagonal equals pointwise variances") {
        const GPModel model(x, y, fixed_hp(2, 0.4));
        const Matrix q = uniform_points(7, 2, 31);
        const auto joint = posterior(model, q);
        for (Eigen::Index i = 0; i < 7; ++i) {
            const auto single = posterior(model, q.row(i));
            CHECK(std::abs(joint.cov(i, i) - single.cov(0, 0)) < 1e-8);
            CHECK(joint.cov(i, i) >= 0.0);
        }
        CHECK((joint.cov - joint.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sample_joint reproduces posterior moments") {
    const Matrix x = uniform_points(8, 2, 12);
    const GPModel model(x, sine(x), fixed_hp(2, 0.3));
    // Nearby query points keep every covariance entry well above the
    // sampling error of a 10^4-draw estimate.
    Matrix q(3, 2);
    q << 0.50, 0.50, 0.55, 0.52, 0.47, 0.56;
    const auto post = posterior(model, q);
    std::mt19937_64 rng(2024);
    const Matrix s = sample_joint(model, q, rng, 10000);
    const auto moments = test_stats::column_moments(s);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const double se = std::sqrt(post.cov(j, j) / 10000.0);
        CHECK(std::abs(moments.mean(j) - post.mean(j)) < 4.0 * se);
    }
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            if (std::abs(post.cov(i, j)) > 1e-3) {
                CHECK(std::abs(moments.cov(i, j) - post.cov(i, j)) <
                      0.1 * std::abs(post.cov(i, j)));
            }
        }
    }
    std::mt19937_64 a(5), b(5);
    CHECK(sample_joint(model, q, a, 4) == sample_joint(model, q, b, 4));
}

TEST_CASE("sample_joint with one point passes a KS test") {
    const Matrix x = uniform_points(6, 1, 3);
    const GPModel model(x, sine(x), fixed_hp(1, 0.2));
    Matrix q(1, 1);
    q << 0.5;
    const auto post = posterior(model, q);
    std::mt19937_64 rng(77);
    const Matrix s = sample_joint(model, q, rng, 10000);
    std::vector<double> draws(s.data(), s.data() + s.size());
    const double stat = test_stats::ks_statistic_normal(draws, post.mean(0),
                                                        std::sqrt(post.cov(0, 0)));
    CHECK(stat < test_stats::ks_critical(10000, 0.001));
}

TEST_CASE("RFF approximates the Matern kernel and improves with more features") {
    const GPHyperparams hp = fixed_hp(3, 0.4, 1.0);
    const auto prior = GPModel::prior(hp);
    const Matrix a = uniform_points(100, 3, 1);
    const Matrix b = uniform_points(100, 3, 2);
    Vector exact(100);
    for (Eigen::Index i = 0; i < 100; ++i) exact(i) = matern52(a.row(i), b.row(i), hp)(0, 0);

    auto mse = [&](std::size_t features, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const auto s = draw_rff(prior, features, rng);
        const Matrix fa = rff_features(s, a);
        const Matrix fb = rff_features(s, b);
        const Vector approx = (fa.array() * fb.array()).rowwise().sum();
        return (approx - exact).squaredNorm() / 100.0;
    };
    const double m256 = mse(256, 10);
    const double m4096 = mse(4096, 10);
    CHECK(m4096 < m256);
    CHECK(m4096 < 1e-3);
}

TEST_CASE("RFF sample evaluation") {
    const Matrix x = uniform_points(10, 2, 4);
    const GPModel model(x, sine(x), fixed_hp(2, 0.3));
    std::mt19937_64 rng(1);
    const auto s = draw_rff(model, 512, rng);
    const Matrix q = uniform_points(5, 2, 8);
    CHECK(eval_rff(s, q) == eval_rff(s, q));
    CHECK(eval_rff(s, Matrix(0, 2)).size() == 0);

    auto zero = s;
    zero.weights.setZero();
    const Vector flat = eval_rff(zero, q);
    const double expected = s.target_mean + s.target_std * s.hyperparams.constant_mean;
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(flat(i) == doctest::Approx(expected));
}

TEST_CASE("RFF prior draws have the prior variance") {
    const GPHyperparams hp = fixed_hp(2, 0.3, 1.7);
    const auto prior = GPModel::prior(hp);
    Matrix q(1, 2);
    q << 0.4, 0.6;
    std::mt19937_64 rng(9);
    std::vector<double> vals;
    for (int i = 0; i < 1000; ++i) vals.push_back(eval_rff(draw_rff(prior, 256, rng), q)(0));
    const double var = test_stats::variance(vals);
    CHECK(std::abs(var - 1.7) < 0.15 * 1.7);
}

TEST_CASE("RFF posterior draws agree with the exact posterior mean") {
    const Matrix x = uniform_points(12, 2, 41);
    const GPModel model(x, sine(x), fixed_hp(2, 0.35));
    const Matrix q = uniform_points(5, 2, 42);
    const auto post = posterior(model, q);
    std::mt19937_64 rng(3);
    Matrix draws(1000, 5);
    for (int i = 0; i < 1000; ++i) draws.row(i) = eval_rff(draw_rff(model, 2048, rng), q);
    const auto moments = test_stats::column_moments(draws);
    for (Eigen::Index j = 0; j < 5; ++j) {
        const double se = std::sqrt(moments.cov(j, j) / 1000.0);
        CHECK(std::abs(moments.mean(j) - post.mean(j)) < 4.0 * se);
    }
}
