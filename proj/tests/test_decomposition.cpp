#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "qfe/axioms/comparison.hpp"
#include "qfe/bsde/solver.hpp"
#include "qfe/core/errors.hpp"
#include "qfe/core/statistics.hpp"
#include "qfe/decomposition/doob_meyer.hpp"

using Catch::Approx;
using namespace qfe;

namespace {

const PathEnsemble& ensemble_1d() {
    static const PathEnsemble ens = simulate_brownian(make_grid(1.0, 64), 1, 2048, 17);
    return ens;
}

const Regressor& regressor() {
    static const Regressor reg(ensemble_1d(), RegressionBasis::piecewise_local(16));
    return reg;
}

std::vector<double> cos_terminal(const PathEnsemble& ens) {
    std::vector<double> v(ens.paths());
    for (std::size_t m = 0; m < v.size(); ++m) {
        v[m] = std::cos(ens.value(ens.steps(), m)[0]);
    }
    return v;
}

double sup_diff(const Field& a, const Field& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) {
        s = std::max(s, std::abs(a.data()[k] - b.data()[k]));
    }
    return s;
}

}  // namespace

TEST_CASE("patches are narrower than 1/(2 kappa)", "[decomposition]") {
    for (double kappa : {0.1, 1.0, 2.0, 7.5}) {
        const auto edges = patch_boundaries(100, 1.0, kappa, 0);
        CHECK(edges.front() == 0);
        CHECK(edges.back() == 100);
        for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
            CHECK(static_cast<double>(edges[p + 1] - edges[p]) / 100.0 < 1.0 / (2.0 * kappa) + 0.01);
        }
    }
    CHECK(patch_boundaries(40, 1.0, 2.0, 4) == std::vector<std::size_t>{0, 10, 20, 30, 40});
    CHECK(patch_boundaries(8, 1.0, 100.0, 0).size() == 9);
    CHECK_THROWS_AS(patch_boundaries(8, 1.0, 1.0, 9), std::invalid_argument);
}

TEST_CASE("zero driver reaches the fixed point in one map", "[decomposition]") {
    const auto& ens = ensemble_1d();
    const auto& reg = regressor();
    const auto op = make_operator("entropic:1");
    FixedPointProblem p;
    p.driver = Driver{[](double, double) { return 0.0; }, 0.0};
    p.xi = cos_terminal(ens);
    p.z = {0.5};
    p.op = op;
    const auto sol = solve_fixed_point(p, reg);
    REQUIRE(sol.residuals.size() == 1);
    CHECK(sol.residuals[0].size() == 2);
    CHECK(sol.residuals[0][1] == 0.0);

    TerminalCondition xi = bounded_terminal(p.xi, 1.0, 1);
    xi.z = {0.5};
    xi.end.assign(ens.paths(), ens.steps());
    const Field direct = op->evaluate_all(xi, reg);
    double worst = 0.0;
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            worst = std::max(worst, std::abs(sol.Y(i, m) + 0.5 * ens.value(i, m)[0] - direct(i, m)));
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("linear decay ODE: contraction and terminal value", "[decomposition]") {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 40), 1, 512, 3);
    const Regressor reg(ens, RegressionBasis::piecewise_local(8));
    const double lambda = 2.0;
    const double c = 1.5;
    FixedPointProblem p;
    p.driver = Driver{[lambda](double, double y) { return -lambda * y; }, lambda};
    p.xi.assign(ens.paths(), c);
    p.op = make_operator("linear");
    FixedPointOptions o;
    o.patches = 4;
    o.tol = 1e-13;
    const auto sol = solve_fixed_point(p, reg, o);
    CHECK(sol.Y(0, 0) == Approx(c * std::exp(-lambda)).epsilon(0.01));
    for (const auto& h : sol.residuals) {
        for (std::size_t k = 0; k + 1 < h.size(); ++k) {
            if (h[k] > 1e-12) {
                CHECK(h[k + 1] <= 0.55 * h[k]);
            }
        }
    }
}

TEST_CASE("different Picard starts reach the same fixed point", "[decomposition]") {
    const auto& ens = ensemble_1d();
    FixedPointProblem p;
    p.driver = Driver{[](double, double y) { return -y; }, 1.0};
    p.xi = cos_terminal(ens);
    p.op = make_operator("entropic:1");
    FixedPointOptions a;
    a.initial = 0.0;
    a.tol = 1e-11;
    FixedPointOptions b = a;
    b.initial = 1.0;
    const auto ya = solve_fixed_point(p, regressor(), a).Y;
    const auto yb = solve_fixed_point(p, regressor(), b).Y;
    CHECK(sup_diff(ya, yb) <= 2.0 * a.tol);
}

TEST_CASE("solving in two halves matches the full solve", "[decomposition]") {
    const auto& ens = ensemble_1d();
    FixedPointProblem p;
    p.driver = Driver{[](double, double y) { return -0.5 * y + 0.1; }, 0.5};
    p.xi = cos_terminal(ens);
    p.op = make_operator("entropic:1");
    FixedPointOptions o;
    o.tol = 1e-12;
    const auto full = solve_fixed_point(p, regressor(), o).Y;

    const std::size_t half = ens.steps() / 2;
    const PathEnsemble head = ens.truncated(half);
    const Regressor head_reg(head, regressor().basis());
    FixedPointProblem q = p;
    q.xi.assign(full.row(half).begin(), full.row(half).end());
    const auto part = solve_fixed_point(q, head_reg, o).Y;
    double worst = 0.0;
    for (std::size_t i = 0; i <= half; ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            worst = std::max(worst, std::abs(full(i, m) - part(i, m)));
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("non-stepwise operators use frozen payoffs", "[decomposition]") {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 16), 1, 1024, 8);
    const Regressor reg(ens, RegressionBasis::piecewise_local(8));
    const auto inner = make_operator("entropic:1");
    const auto wrapped = std::make_shared<CallableExpectation>(
        [inner](const TerminalCondition& xi, const Regressor& r) { return inner->evaluate_all(xi, r); }, "wrapped",
        OperatorDomain::affine_extended);
    FixedPointProblem p;
    p.driver = Driver{[](double, double y) { return -y; }, 1.0};
    p.xi = cos_terminal(ens);
    p.z = {0.3};
    p.op = inner;
    const auto a = solve_fixed_point(p, reg).Y;
    p.op = wrapped;
    const auto b = solve_fixed_point(p, reg).Y;
    CHECK(sup_diff(a, b) < 1e-9);
}

TEST_CASE("iteration cap reports the last residual", "[decomposition]") {
    FixedPointProblem p;
    p.driver = Driver{[](double, double y) { return -y; }, 1.0};
    p.xi = cos_terminal(ensemble_1d());
    p.op = make_operator("linear");
    FixedPointOptions o;
    o.max_iter = 2;
    o.tol = 0.0;
    try {
        solve_fixed_point(p, regressor(), o);
        FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& e) {
        CHECK(e.last_residual() > 0.0);
    }
    p.xi.pop_back();
    CHECK_THROWS_AS(solve_fixed_point(p, regressor()), std::invalid_argument);
}

TEST_CASE("penalizing a martingale leaves it unchanged", "[decomposition]") {
    const auto& ens = ensemble_1d();
    const auto op = make_operator("entropic:1");
    const Field Y = op->evaluate_all(bounded_terminal(cos_terminal(ens), 1.0, 1), regressor());
    const auto run = penalize(Y, {}, op, 8.0, regressor());
    CHECK(run.sup_gap < 1e-8);
    CHECK(std::abs(run.mean_A_T) < 1e-8);
}

TEST_CASE("drifted martingale: compensator and ordering", "[decomposition]") {
    const auto& ens = ensemble_1d();
    const auto op = make_operator("entropic:1");
    const double eps = 0.5;
    Field Y = op->evaluate_all(bounded_terminal(cos_terminal(ens), 1.0, 1), regressor());
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            Y(i, m) += eps * ens.grid().time(i);
        }
    }
    const auto res = doob_meyer_decompose(Y, {}, op, regressor());
    CHECK(res.direction == Compensator::increasing);
    CHECK(res.order_fraction >= 0.99);
    double worst = 0.0;
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            worst = std::max(worst, std::abs(res.A(i, m) - eps * ens.grid().time(i)));
        }
    }
    CHECK(worst <= 0.05 * eps);
    CHECK(res.martingale_residual < 1e-3);
    for (std::size_t k = 0; k + 1 < res.runs.size(); ++k) {
        CHECK(res.runs[k].mean_A_T < res.runs[k + 1].mean_A_T);
    }
}

TEST_CASE("canonical process compensator", "[decomposition]") {
    const auto& ens = ensemble_1d();
    const auto op = make_operator("entropic:1");
    const double ell = 1.0;
    const double z = 1.0;
    const double c = ell * (z + z * z);
    Field Y(ens.steps() + 1, ens.paths());
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            Y(i, m) = c * ens.grid().time(i);
        }
    }
    const auto res = doob_meyer_decompose(Y, {z}, op, regressor());
    const double rate = 0.5 * z * z + c;
    double worst = 0.0;
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        worst = std::max(worst, std::abs(res.A(i, 0) - rate * ens.grid().time(i)));
    }
    CHECK(worst <= 0.05 * rate);
    for (const auto& run : res.runs) {
        for (double a : run.A.row(ens.steps())) {
            CHECK(a <= 2.0 * c + 1e-9);
        }
    }
}

TEST_CASE("isotonic projection", "[decomposition]") {
    Field A(5, 2);
    const double inc[] = {0.0, 1.0, 0.5, 2.0, 1.9};
    const double neg[] = {0.0, -0.2, 0.1, 0.3, 0.2};
    for (std::size_t i = 0; i < 5; ++i) {
        A(i, 0) = inc[i];
        A(i, 1) = neg[i];
    }
    isotonic_project(A, Compensator::increasing);
    CHECK(A(1, 0) == Approx(0.75));
    CHECK(A(2, 0) == Approx(0.75));
    CHECK(A(3, 0) == Approx(1.95));
    CHECK(A(4, 0) == Approx(1.95));
    CHECK(A(1, 1) == 0.0);
    CHECK(A(2, 1) == Approx(0.1));
    Field D(3, 1);
    D(1, 0) = -1.0;
    D(2, 0) = -0.5;
    isotonic_project(D, Compensator::decreasing);
    CHECK(D(1, 0) == Approx(-0.75));
    CHECK(D(2, 0) == Approx(-0.75));
}

TEST_CASE("generator extraction", "[decomposition]") {
    const auto& ens = ensemble_1d();
    const auto& reg = regressor();
    Field X(ens.steps() + 1, ens.paths());
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            X(i, m) = 0.7 * ens.value(i, m)[0];
        }
    }
    const auto lin = extract_generator_pair(X, reg);
    CHECK(std::abs(mean(lin.h.data())) < 0.05);
    CHECK(mean(lin.Z.data()) == Approx(0.7).margin(0.02));

    const Generator g = entropic_generator(1.0);
    const Field Y = GExpectation(g).evaluate_all(bounded_terminal(cos_terminal(ens), 1.0, 1), reg);
    const auto est = extract_generator_pair(Y, reg);
    std::size_t checked = 0;
    std::size_t close = 0;
    for (std::size_t i = 0; i < est.h.rows(); ++i) {
        for (std::size_t m = 0; m < est.h.paths(); ++m) {
            const double z = est.Z(i, m);
            if (std::abs(z) > 0.1) {
                ++checked;
                close += std::abs(est.h(i, m) - 0.5 * z * z) <= 0.1 * 0.5 * z * z;
            }
        }
    }
    CHECK(checked > 0);
    CHECK(close == checked);
    CHECK(sandwich_fraction(est, GeneratorPair{g, g}, ens.grid(), 1e-9) >= 0.99);
    CHECK(sandwich_fraction(est, GeneratorPair{zero_generator(), zero_generator()}, ens.grid(), 1e-9) < 0.5);
}

TEST_CASE("comparison of fixed-point solutions", "[decomposition]") {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 16), 1, 1024, 4);
    const Regressor reg(ens, RegressionBasis::piecewise_local(8));
    BootstrapOptions bo;
    bo.resamples = 20;
    const Payoff cos_b = terminal_payoff([](double b) { return std::cos(b); }, 1.0);
    const Payoff cos_up = terminal_payoff([](double b) { return std::cos(b) + 1.0; }, 2.0);
    const Driver none{[](double, double) { return 0.0; }, 0.0};
    const Driver decay{[](double, double y) { return -y; }, 1.0};

    const auto same = check_comparison(make_operator("entropic:1"), cos_b, cos_b, none, {}, reg, bo);
    CHECK(same.pass);
    CHECK(same.max_discrepancy == 0.0);

    const auto shifted = check_comparison(make_operator("linear"), cos_b, cos_up, none, {}, reg, bo);
    CHECK(shifted.pass);
    CHECK(shifted.max_discrepancy == 0.0);

    const PathField half = [](const PathEnsemble& e) { return Field(e.steps() + 1, e.paths(), 1, 0.5); };
    const auto forced = check_comparison(make_operator("entropic:1"), cos_b, cos_b, decay, half, reg, bo);
    INFO(summary(forced));
    CHECK(forced.pass);

    CHECK_THROWS_AS(check_comparison(make_operator("linear"), cos_up, cos_b, none, {}, reg, bo),
                    std::invalid_argument);
}

TEST_CASE("decomposition table", "[decomposition]") {
    DecompositionResult r;
    r.runs.resize(2);
    r.runs[0].n = 1;
    r.runs[1].n = 2;
    r.A = Field(3, 2, 1, 0.25);
    r.martingale_residual = 0.5;
    std::ostringstream os;
    write_decomposition_csv(os, r);
    const std::string text = os.str();
    CHECK(text.rfind("n,sup_gap,mean_A_T,martingale_residual,iterations,patches\n", 0) == 0);
    CHECK(text.find("\nlimit,,0.25,0.5,,\n") != std::string::npos);
}
