#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "morbo/candidates.hpp"
#include "morbo/problems.hpp"
#include "mw7_oracle.hpp"

using morbo::Matrix;
using morbo::Vector;
using namespace morbo::problems;

namespace {

// Independent codings of the published formulas, raw minimization values.
std::vector<double> dtlz2_ref(const Vector& x) {
    double g = 0.0;
    for (Eigen::Index i = 1; i < x.size(); ++i) g += std::pow(x(i) - 0.5, 2);
    const double th = x(0) * std::numbers::pi / 2.0;
    return {(1 + g) * std::cos(th), (1 + g) * std::sin(th)};
}

std::vector<double> vehicle_ref(const Vector& x) {
    // Each term is (coefficient, power of x1..x5).
    struct Term {
        double c;
        int p[5];
    };
    const std::vector<std::vector<Term>> polys = {
        {{1640.2823, {0, 0, 0, 0, 0}}, {2.3573285, {1, 0, 0, 0, 0}}, {2.3220035, {0, 1, 0, 0, 0}},
         {4.5688768, {0, 0, 1, 0, 0}}, {7.7213633, {0, 0, 0, 1, 0}}, {4.4559504, {0, 0, 0, 0, 1}}},
        {{6.5856, {0, 0, 0, 0, 0}}, {1.15, {1, 0, 0, 0, 0}}, {-1.0427, {0, 1, 0, 0, 0}},
         {0.9738, {0, 0, 1, 0, 0}}, {0.8364, {0, 0, 0, 1, 0}}, {-0.3695, {1, 0, 0, 1, 0}},
         {0.0861, {1, 0, 0, 0, 1}}, {0.3628, {0, 1, 0, 1, 0}}, {-0.1106, {2, 0, 0, 0, 0}},
         {-0.3437, {0, 0, 2, 0, 0}}, {0.1764, {0, 0, 0, 2, 0}}},
        {{-0.0551, {0, 0, 0, 0, 0}}, {0.0181, {1, 0, 0, 0, 0}}, {0.1024, {0, 1, 0, 0, 0}},
         {0.0421, {0, 0, 1, 0, 0}}, {-0.0073, {1, 1, 0, 0, 0}}, {0.024, {0, 1, 1, 0, 0}},
         {-0.0118, {0, 1, 0, 1, 0}}, {-0.0204, {0, 0, 1, 1, 0}}, {-0.008, {0, 0, 1, 0, 1}},
         {-0.0241, {0, 2, 0, 0, 0}}, {0.0109, {0, 0, 0, 2, 0}}},
    };
    std::vector<double> out;
    for (const auto& poly : polys) {
        double acc = 0.0;
        for (const auto& t : poly) {
            double term = t.c;
            for (int k = 0; k < 5; ++k) term *= std::pow(x(k), t.p[k]);
            acc += term;
        }
        out.push_back(acc);
    }
    return out;
}

// Objectives then constraints.
std::vector<double> welded_ref(const Vector& x) {
    const double h = x(0), l = x(1), t = x(2), b = x(3);
    const double P = 6000, L = 14;
    const double tau_p = P / (std::sqrt(2.0) * h * l);
    const double M = P * (L + l / 2);
    const double R = std::sqrt(l * l / 4 + std::pow((h + t) / 2, 2));
    const double J = std::sqrt(2.0) * h * l * (l * l / 12 + std::pow((h + t) / 2, 2));
    const double tau_pp = M * R / J;
    const double tau = std::sqrt(tau_p * tau_p + 2 * tau_p * tau_pp * l / (2 * R) + tau_pp * tau_pp);
    const double sigma = 6 * P * L / (b * t * t);
    const double pc = 64746.022 * (1 - 0.0282346 * t) * t * std::pow(b, 3);
    return {1.10471 * h * h * l + 0.04811 * t * b * (14 + l), 2.1952 / (b * std::pow(t, 3)),
            tau / 13600 - 1, sigma / 30000 - 1, (h - b) / 4.875, 1 - pc / P};
}

std::vector<double> mw7_ref(const Vector& x) {
    double g = 1.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
        g += 2 * std::pow(x(i + 1) + std::pow(x(i) - 0.5, 2) - 1, 2);
    }
    const double f0 = g * x(0);
    const double f1 = g * std::sqrt(1 - x(0) * x(0));
    const double th = f0 > 0 ? std::atan(f1 / f0) : std::numbers::pi / 2;
    const double rr = f0 * f0 + f1 * f1;
    return {f0, f1, rr - std::pow(mw7_oracle::r_out(th), 2), std::pow(mw7_oracle::r_in(th), 2) - rr};
}

void check_against(const Problem& p, std::vector<double> (*ref)(const Vector&), int count) {
    const auto& s = p.spec();
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < count; ++i) {
        Vector unit(s.d);
        for (Eigen::Index j = 0; j < s.d; ++j) unit(j) = u(rng);
        const Vector x = s.to_raw(unit);
        const auto out = p.evaluate(x);
        const auto want = ref(x);
        REQUIRE(want.size() == static_cast<std::size_t>(s.num_objectives + s.num_constraints));
        for (Eigen::Index k = 0; k < s.num_objectives; ++k) {
            CHECK(out.objectives(k) == doctest::Approx(-want[k]).epsilon(1e-12));
        }
        for (Eigen::Index k = 0; k < s.num_constraints; ++k) {
            CHECK(out.constraints(k) ==
                  doctest::Approx(want[s.num_objectives + k]).epsilon(1e-10).scale(1.0));
        }
    }
}

}  // namespace

TEST_CASE("dtlz2 fixtures") {
    auto p = dtlz2(10);
    Vector x = Vector::Constant(10, 0.5);
    x(0) = 0.0;
    auto out = p->evaluate(x);
    CHECK(out.objectives(0) == doctest::Approx(-1.0));
    CHECK(std::abs(out.objectives(1)) < 1e-15);
    CHECK(out.constraints.size() == 0);

    x = Vector::Ones(10);
    x(0) = 0.0;
    CHECK(p->evaluate(x).objectives(0) == doctest::Approx(-3.25));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Vector y = Vector::Constant(10, 0.5);
        y(0) = u(rng);
        const auto f = p->evaluate(y).objectives;
        CHECK(std::abs(f.squaredNorm() - 1.0) < 1e-9);
    }
}

TEST_CASE("problems agree with independent formulas") {
    check_against(*dtlz2(30), dtlz2_ref, 200);
    check_against(*vehicle_safety(), vehicle_ref, 200);
    check_against(*welded_beam(), welded_ref, 200);
    check_against(*mw7(), mw7_ref, 200);
}

TEST_CASE("registry and reference points") {
    for (const auto& name : builtin_names()) {
        auto p = make_problem(name);
        CHECK(p->spec().name == name);
        CHECK(p->spec().ref_point.size() == p->spec().num_objectives);
        CHECK(p->spec().default_candidates == 4096);
    }
    CHECK(make_problem("dtlz2-100")->spec().d == 100);
    CHECK(make_problem("dtlz2-10")->spec().ref_point.isApprox(Vector::Constant(2, -6.0)));
    CHECK(make_problem("mw7")->spec().ref_point.isApprox(Vector::Constant(2, -1.2)));
    Vector vs(3), wb(2);
    vs << -1698.55, -11.21, -0.29;
    wb << -40, -0.015;
    CHECK(make_problem("vehicle-safety")->spec().ref_point.isApprox(vs));
    CHECK(make_problem("welded-beam")->spec().ref_point.isApprox(wb));
    CHECK(make_problem("welded-beam")->spec().num_constraints == 4);
    CHECK_THROWS_AS(make_problem("zdt1"), morbo::InvalidConfig);
}

TEST_CASE("evaluate rejects out-of-bounds input") {
    auto p = welded_beam();
    Vector x(4);
    x << 0.1, 1, 1, 1;
    CHECK_THROWS_AS(p->evaluate(x), morbo::InvalidArgument);
    CHECK_THROWS_AS(p->evaluate(Vector::Ones(3)), morbo::InvalidArgument);
    x << 1, 1, 1, std::nan("");
    CHECK_THROWS_AS(p->evaluate(x), morbo::InvalidArgument);
}

TEST_CASE("mw7 has feasible points and they match the radial description") {
    auto p = mw7();
    const Matrix scan = morbo::candidates::sobol(100000, 10, 5);
    long feasible = 0;
    for (Eigen::Index i = 0; i < scan.rows(); ++i) {
        const auto out = p->evaluate(scan.row(i).transpose());
        const bool ok = (out.constraints.array() <= 0).all();
        const double f0 = -out.objectives(0), f1 = -out.objectives(1);
        const double t = std::atan2(f1, f0), rho = std::hypot(f0, f1);
        const bool radial = rho >= mw7_oracle::r_in(t) && rho <= mw7_oracle::r_out(t);
        if (ok != radial) {
            // Only boundary rounding may disagree.
            CHECK(std::min(std::abs(rho - mw7_oracle::r_in(t)), std::abs(rho - mw7_oracle::r_out(t))) < 1e-12);
        }
        feasible += ok;
    }
    CHECK(feasible > 0);
    CHECK(mw7_oracle::components().size() >= 2);
}

TEST_CASE("engineering problems stay finite") {
    for (auto* make : {&welded_beam, &vehicle_safety}) {
        auto p = make();
        const auto& s = p->spec();
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        bool finite = true;
        for (int i = 0; i < 100000; ++i) {
            Vector unit(s.d);
            for (Eigen::Index j = 0; j < s.d; ++j) unit(j) = u(rng);
            const auto out = p->evaluate(s.to_raw(unit));
            finite = finite && out.objectives.allFinite() && out.constraints.allFinite();
        }
        CHECK(finite);
    }
}

TEST_CASE("initial design") {
    auto p = dtlz2(10);
    const Matrix one = initial_design(p->spec(), 1, 7);
    CHECK(one == morbo::candidates::sobol(1, 10, 7));

    auto w = welded_beam();
    const Matrix a = initial_design(w->spec(), 64, 3);
    CHECK(a == initial_design(w->spec(), 64, 3));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        CHECK((a.row(i).transpose().array() >= w->spec().lower.array()).all());
        CHECK((a.row(i).transpose().array() <= w->spec().upper.array()).all());
        CHECK_NOTHROW(w->evaluate(a.row(i).transpose()));
    }
}

TEST_CASE("subprocess plugin") {
    ProblemSpec spec{"child", 2, 2, 1, Vector::Constant(2, -5), Vector::Constant(2, 100),
                     Vector::Constant(2, -10)};
    SubprocessProblem p(spec, {FAKE_CHILD});
    Vector x(2);
    x << 0.25, 2.0;
    auto out = p.evaluate(x);
    CHECK(out.objectives(0) == doctest::Approx(2.25));
    CHECK(out.objectives(1) == doctest::Approx(-2.25));
    CHECK(out.constraints(0) == doctest::Approx(-0.75));

    SubprocessProblem neg(spec, {FAKE_CHILD}, true);
    CHECK(neg.evaluate(x).objectives(0) == doctest::Approx(-2.25));

    x << -1.0, 0.0;
    CHECK_THROWS_AS(p.evaluate(x), morbo::EvaluationError);
    x << 99.0, 0.0;
    CHECK_THROWS_AS(p.evaluate(x), morbo::EvaluationError);
    x << 1.0, 0.0;
    CHECK_THROWS_AS(p.evaluate(x), morbo::EvaluationError);

    ProblemSpec wrong = spec;
    wrong.num_constraints = 2;
    SubprocessProblem bad(wrong, {FAKE_CHILD});
    CHECK_THROWS_AS(bad.evaluate(Vector::Ones(2)), morbo::EvaluationError);

    SubprocessProblem missing(spec, {"/nonexistent/child"});
    CHECK_THROWS_AS(missing.evaluate(Vector::Ones(2)), morbo::EvaluationError);
}
