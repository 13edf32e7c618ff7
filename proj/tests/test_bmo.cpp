#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qfe/axioms/operator.hpp"
#include "qfe/bmo/domination.hpp"
#include "qfe/core/statistics.hpp"

using Catch::Approx;
using namespace qfe;

namespace {

// Direct evaluation in the x parametrization, extended precision.
long double phi_reference(long double alpha, long double x) {
    const long double arg = (1.0L - 2.0L * std::pow(alpha, -x)) * (2.0L * x - 1.0L) / (2.0L * x - 2.0L);
    return std::sqrt(1.0L + std::log(arg) / (x * x)) - 1.0L;
}

const PathEnsemble& ensemble() {
    static const PathEnsemble ens = simulate_brownian(make_grid(1.0, 32), 1, 1 << 13, 5);
    return ens;
}

const Regressor& regressor() {
    static const Regressor reg(ensemble(), RegressionBasis::piecewise_local(16));
    return reg;
}

Field constant_z(const PathEnsemble& ens, double z) {
    Field Z(ens.steps(), ens.paths(), ens.dim());
    for (double& v : Z.data()) {
        v = z;
    }
    return Z;
}

StoppingRule at_horizon() {
    return [](const PathEnsemble& e) { return StoppingTime::constant(e.paths(), e.steps()); };
}

BootstrapOptions quick(double floor = 1e-6) {
    BootstrapOptions o;
    o.resamples = 20;
    o.relative_floor = floor;
    return o;
}

std::vector<double> terminal(const PathEnsemble& ens, double (*f)(double), double scale) {
    std::vector<double> out(ens.paths());
    for (std::size_t m = 0; m < ens.paths(); ++m) {
        out[m] = scale * f(ens.value(ens.steps(), m)[0]);
    }
    return out;
}

double tanh_fn(double x) { return std::tanh(x); }

}  // namespace

TEST_CASE("phi_alpha matches a direct evaluation", "[bmo]") {
    CHECK(phi_alpha(3.0, 2.0) == Approx(0.019087).margin(1e-6));
    CHECK(phi_alpha(3.0, 2.0) == Approx(static_cast<double>(phi_reference(3.0L, 2.0L))).epsilon(1e-13));
    for (double alpha : {2.5, 3.0, 8.0}) {
        for (double x : {1.05, 1.5, 3.0, 10.0}) {
            CHECK(phi_alpha(alpha, x) == Approx(static_cast<double>(phi_reference(alpha, x))).epsilon(1e-12));
        }
    }
    CHECK(phi_alpha(3.0, 50.0) < 1e-3);
    CHECK(phi_alpha(3.0, 1.001) > 1.0);
    CHECK(phi_alpha_u(3.0, 1.0) == phi_alpha(3.0, 2.0));
    CHECK_THROWS_AS(phi_alpha(2.0, 2.0), std::domain_error);
    CHECK_THROWS_AS(phi_alpha(3.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(phi_alpha_u(3.0, -0.5), std::domain_error);
}

TEST_CASE("phi_alpha is strictly decreasing", "[bmo]") {
    for (double alpha : {3.0, 4.0, 8.0}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double x = 1.01; x <= 50.0; x += 0.01) {
            const double v = phi_alpha(alpha, x);
            CHECK(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("solve_p_for_bmo inverts phi_3", "[bmo]") {
    for (double J : {1e-3, 1e-2, 0.1, 1.0, 10.0}) {
        const HolderExponent h = solve_p_for_bmo(3.0, J);
        CHECK(h.residual <= 1e-10);
        CHECK(std::abs(phi_alpha_u(3.0, h.u) - J) <= 1e-10);
        CHECK(h.p == Approx((1.0 + h.u) / h.u).epsilon(1e-12));
        CHECK(h.q == 1.0 + h.u);
    }
    const HolderExponent h = solve_p_for_bmo(3.0, 0.019087);
    CHECK(h.q == Approx(2.0).epsilon(1e-4));
    CHECK(h.p == Approx(2.0).epsilon(1e-4));
    CHECK(solve_p_for_bmo(3.0, 1e-3).q > solve_p_for_bmo(3.0, 1e-2).q);
    CHECK(solve_p_for_bmo(3.0, 10.0).p > 1e3);
    CHECK_THROWS_AS(solve_p_for_bmo(3.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(solve_p_for_bmo(3.0, -1.0), std::domain_error);
}

TEST_CASE("BMO norm of deterministic integrands", "[bmo]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    const BmoEstimate zero = bmo_norm(constant_z(ens, 0.0), reg, default_bmo_hitting(ens));
    CHECK(zero.value == 0.0);
    const BmoEstimate c = bmo_norm(constant_z(ens, 0.7), reg, default_bmo_hitting(ens));
    // Remaining variation is largest at t = 0.
    CHECK(c.value == Approx(0.49 * ens.grid().horizon()).epsilon(1e-9));
    CHECK(c.terms.size() == ens.steps() + 4);
    CHECK_THROWS_AS(bmo_norm(Field(ens.steps() + 1, ens.paths(), 1), reg), std::invalid_argument);
}

TEST_CASE("BMO family enlargement and never-hitting times", "[bmo]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    auto xi = functional_terminal(ens, [](auto b) { return std::cos(b[0]); }, 1.0);
    const auto sol = solve_bsde(xi, entropic_generator(1.0), reg);
    const BmoEstimate grid_only = bmo_norm(sol.Z, reg);
    const BmoEstimate family = bmo_norm(sol.Z, reg, default_bmo_hitting(ens));
    CHECK(family.value >= grid_only.value);
    CHECK(family.q999 >= grid_only.q999);
    const BmoEstimate padded =
        bmo_norm(sol.Z, reg, {first_hitting_time(ens, 0, std::numeric_limits<double>::infinity())});
    CHECK(padded.value == grid_only.value);
    CHECK(grid_only.value > 0.0);
    CHECK(grid_only.q999 <= grid_only.value);
}

TEST_CASE("energy inequality on the entropic benchmark", "[bmo]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    auto xi = functional_terminal(ens, [](auto b) { return std::cos(b[0]); }, 1.0);
    const auto sol = solve_bsde(xi, entropic_generator(1.0), reg);
    const BmoEstimate bmo = bmo_norm(sol.Z, reg, default_bmo_hitting(ens));
    for (unsigned n = 1; n <= 3; ++n) {
        const auto r = check_energy_inequality(sol.Z, ens.grid(), n, bmo);
        CHECK(r.pass);
        CHECK(r.lhs > 0.0);
        CHECK(r.lhs <= r.rhs);
    }
    // Deterministic Z: (z^2 T)^n <= n! (z^2 T)^n, equality at n = 1.
    const Field Z = constant_z(ens, 0.5);
    const BmoEstimate c = bmo_norm(Z, reg);
    const auto r1 = check_energy_inequality(Z, ens.grid(), 1, c);
    CHECK(r1.lhs == Approx(r1.rhs).epsilon(1e-12));
    CHECK(r1.pass);
    const auto r3 = check_energy_inequality(Z, ens.grid(), 3, c);
    CHECK(r3.rhs == Approx(6.0 * r3.lhs).epsilon(1e-9));
    CHECK_THROWS_AS(check_energy_inequality(Z, ens.grid(), 0, c), std::invalid_argument);
}

TEST_CASE("stochastic exponential", "[bmo]") {
    const auto& ens = ensemble();
    const std::size_t N = ens.steps();
    const GirsanovKernel one = stochastic_exponential(constant_z(ens, 0.0), ens);
    for (double v : one.exponential.data()) {
        CHECK(v == 1.0);
    }
    const double c = 0.8;
    const GirsanovKernel k = stochastic_exponential(constant_z(ens, c), ens);
    std::vector<double> last(k.exponential.row(N).begin(), k.exponential.row(N).end());
    CHECK(std::abs(mean(last) - 1.0) <= 3.0 * standard_error(last));
    const double T = ens.grid().horizon();
    for (std::size_t m = 0; m < ens.paths(); m += 97) {
        CHECK(std::log(k.exponential(N, m)) == Approx(c * ens.value(N, m)[0] - 0.5 * c * c * T).margin(1e-12));
    }
    CHECK_THROWS_AS(stochastic_exponential(Field(N + 1, ens.paths(), 1), ens), std::invalid_argument);
}

TEST_CASE("reverse Holder gate and small kernels", "[bmo]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    const auto zero = stochastic_exponential(constant_z(ens, 0.0), ens);
    const auto r0 = check_reverse_holder(zero, 2.0, 3.0, reg, bmo_norm(zero.gamma, reg));
    CHECK(r0.hypothesis_met);
    CHECK(r0.pass);
    CHECK(r0.lhs == Approx(1.0).margin(1e-12));
    CHECK(r0.rhs == Approx(9.0));

    const auto small = stochastic_exponential(constant_z(ens, 0.01), ens);
    const auto bmo_small = bmo_norm(small.gamma, reg);
    REQUIRE(std::sqrt(bmo_small.value) <= phi_alpha(3.0, 2.0));
    const auto r1 = check_reverse_holder(small, 2.0, 3.0, reg, bmo_small);
    CHECK(r1.hypothesis_met);
    CHECK(r1.pass);
    CHECK(r1.lhs >= 1.0);
    CHECK(r1.lhs <= 1.1);

    const auto large = stochastic_exponential(constant_z(ens, 1.0), ens);
    const auto r2 = check_reverse_holder(large, 2.0, 3.0, reg, bmo_norm(large.gamma, reg));
    CHECK_FALSE(r2.hypothesis_met);
    CHECK(r2.pass);
    CHECK(r2.note.find("hypothesis not satisfied") != std::string::npos);
}

TEST_CASE("BMO bound from a solution", "[bmo]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    const auto flat = solve_bsde(constant_terminal(ens, 0.5), entropic_generator(1.0), reg);
    const auto r0 = bmo_bound_from_solution(flat, 1.0, reg);
    CHECK(r0.pass);
    CHECK(r0.lhs == 0.0);
    CHECK(r0.rhs == Approx(2.0 * std::exp(4.0)));

    auto xi = functional_terminal(ens, [](auto b) { return std::cos(b[0]); }, 1.0);
    const auto sol = solve_bsde(xi, entropic_generator(1.0), reg);
    const auto r = bmo_bound_from_solution(sol, 1.0, reg);
    CHECK(r.pass);
    CHECK(r.lhs > 0.0);

    // The norm is quadratic in Z; inflation by 1000 exceeds the bound.
    for (double factor : {100.0, 1000.0}) {
        Field Z = sol.Z;
        for (double& v : Z.data()) {
            v *= factor;
        }
        const auto inflated = bmo_bound_from_solution(sol.Y, Z, 1.0, reg);
        CHECK(inflated.lhs == Approx(factor * factor * r.lhs).epsilon(1e-9));
        if (factor == 1000.0) {
            CHECK_FALSE(inflated.pass);
            CHECK(inflated.violation > 0.0);
        }
    }
}

TEST_CASE("domination constants", "[bmo]") {
    const auto c = domination_constants(1.0, 2.0, 0.5, 0.019087, 1.0);
    CHECK(c.C_R == Approx(3.0 * 0.5 * 5.0));
    CHECK(c.alpha == Approx(0.5));
    CHECK(c.p == Approx(2.0).epsilon(1e-4));
    CHECK_THROWS_AS(domination_constants(-1.0, 1.0, 1.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(domination_constants(1.0, 1.0, 1.0, 0.0, 1.0), std::domain_error);
}

TEST_CASE("Lp domination", "[bmo]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    const std::size_t M = ens.paths();
    const auto c = domination_constants(1.0, 1.0, 1.0, 0.019087, 1.0);
    const auto T = StoppingTime::constant(M, ens.steps());
    const auto ent = make_operator("entropic:1");
    const auto base = terminal(ens, tanh_fn, 0.5);

    const auto same = check_lp_domination(*ent, base, T, base, T, {1.0}, c, reg);
    CHECK(same.pass);
    CHECK(same.lhs == 0.0);
    CHECK(same.rhs == 0.0);

    // Translation invariance: the difference is exactly the shift.
    auto up = base;
    for (double& v : up) {
        v += 0.1;
    }
    const auto shifted = check_lp_domination(*ent, up, T, base, T, {1.0}, c, reg);
    CHECK(shifted.pass);
    CHECK(shifted.lhs == Approx(0.1).epsilon(1e-9));
    CHECK(shifted.rhs == Approx(0.3).epsilon(1e-9));

    const auto hit = first_hitting_time(ens, 0, 0.5);
    std::vector<double> at_hit(M);
    std::vector<double> at_end(M);
    for (std::size_t m = 0; m < M; ++m) {
        at_hit[m] = 0.5 * std::sin(ens.value(hit[m], m)[0]);
        at_end[m] = 0.5 * std::sin(ens.value(ens.steps(), m)[0]);
    }
    const auto can = check_lp_domination(*make_operator("canonical:1"), at_end, T, at_hit, hit, {1.0}, c, reg);
    CHECK(can.pass);
    CHECK(can.lhs > 0.0);

    CHECK_THROWS_AS(check_lp_domination(*ent, at_hit, hit, at_end, T, {1.0}, c, reg), std::invalid_argument);
    CHECK_THROWS_AS(check_lp_domination(*ent, terminal(ens, tanh_fn, 2.0), T, base, T, {1.0}, c, reg),
                    std::invalid_argument);
    CHECK_THROWS_AS(check_lp_domination(*ent, base, T, base, T, {2.0}, c, reg), std::invalid_argument);
}

TEST_CASE("Linf domination and the state-scale fault", "[bmo]") {
    const auto& reg = regressor();
    const auto ent = make_operator("entropic:1");
    const auto tanh_b = terminal_payoff([](double b) { return std::tanh(b); }, 1.0);
    const auto zero = terminal_payoff([](double) { return 0.0; }, 0.0);

    const auto r = check_linf_domination(*ent, tanh_b, zero, at_horizon(), {1.0}, reg, quick());
    CHECK(r.pass);
    CHECK(r.rhs <= 1.0);
    CHECK(r.lhs_q999 <= r.rhs);

    const auto shifted = terminal_payoff([](double b) { return std::tanh(b) + 0.25; }, 1.25);
    const auto c = check_linf_domination(*ent, shifted, tanh_b, at_horizon(), {1.0}, reg, quick());
    CHECK(c.pass);
    CHECK(c.lhs == Approx(0.25).epsilon(1e-9));
    CHECK(c.rhs == Approx(0.25).epsilon(1e-12));

    const auto faulty = std::make_shared<FaultyExpectation>(ent, FaultyExpectation::Kind::state_scale, 0.1);
    const auto f = check_linf_domination(*faulty, tanh_b, zero, at_horizon(), {1.0}, reg, quick());
    CHECK_FALSE(f.pass);
    CHECK(f.lhs > 1.05);
}

TEST_CASE("one-sided domination for the entropic operator", "[bmo]") {
    const auto& reg = regressor();
    const auto ent = make_operator("entropic:1");
    // gamma = Z of the xi + B_T solve is close to 1, so its squared BMO norm is near 1.7.
    auto c = domination_constants(1.0, 1.0, 1.0, 10.0, 1.0);
    const auto xi = terminal_payoff([](double b) { return 0.5 * std::tanh(b); }, 0.5);

    const auto none = terminal_payoff([](double) { return 0.0; }, 0.0);
    const auto r0 = check_one_sided_domination(*ent, xi, none, {1.0}, at_horizon(), c, reg, quick());
    CHECK(r0.pass);
    CHECK(r0.lhs <= 1e-12);

    const auto constant = terminal_payoff([](double) { return 0.3; }, 0.3);
    const auto rc = check_one_sided_domination(*ent, xi, constant, {1.0}, at_horizon(), c, reg, quick());
    CHECK(rc.pass);
    CHECK(rc.lhs <= 1e-9);

    // Equality case: the difference is the alpha = gamma / 2 expectation under P^gamma.
    const auto eta = terminal_payoff([](double b) { return 0.5 * std::tanh(b); }, 0.5);
    const auto r = check_one_sided_domination(*ent, xi, eta, {1.0}, at_horizon(), c, reg, quick(1e-2));
    CHECK(r.pass);
    CHECK(r.note.find("exceeds J") == std::string::npos);

    c.alpha = 0.25;
    const auto weak = check_one_sided_domination(*ent, xi, eta, {1.0}, at_horizon(), c, reg, quick(1e-2));
    CHECK_FALSE(weak.pass);

    c.J = 1e-3;
    c.alpha = 0.5;
    const auto warned = check_one_sided_domination(*ent, xi, eta, {1.0}, at_horizon(), c, reg, quick(1e-2));
    CHECK(warned.note.find("exceeds J") != std::string::npos);

    const CallableExpectation opaque(
        [&](const TerminalCondition& x, const Regressor& r) { return ent->evaluate_all(x, r); }, "opaque");
    CHECK_THROWS_AS(check_one_sided_domination(opaque, xi, eta, {1.0}, at_horizon(), c, reg), std::invalid_argument);
}

TEST_CASE("one-sided domination with a supplied kernel", "[bmo]") {
    const auto& reg = regressor();
    const auto lin = make_operator("linear");
    auto c = domination_constants(1.0, 1.0, 1.0, 1.0, 0.0);
    const auto xi = terminal_payoff([](double b) { return std::tanh(b); }, 1.0);
    const auto eta = terminal_payoff([](double b) { return 0.5 * std::cos(b); }, 0.5);
    // Linear operator, zero kernel, alpha = 0: both sides are E[eta | F_t].
    const KernelRule zero = [](const Regressor& r) {
        return Field(r.ensemble().steps(), r.ensemble().paths(), r.ensemble().dim());
    };
    const auto r = check_one_sided_domination(*lin, xi, eta, {0.5}, at_horizon(), c, reg, quick(), zero);
    CHECK(r.pass);
    CHECK(r.lhs <= 1e-9);
}

TEST_CASE("self-domination failure of the entropic expectation", "[bmo]") {
    const auto& ens = ensemble();
    const auto r = domination_failure_demo(1.0, 1.0, ens);
    CHECK(r.pass);
    CHECK(r.lhs - r.rhs > 3.0 * r.standard_error);
    const auto flat = domination_failure_demo(1.0, 0.0, ens);
    CHECK(flat.lhs - flat.rhs == Approx(0.0).margin(1e-14));
    CHECK_FALSE(flat.pass);
    double prev = 0.0;
    for (double a : {0.25, 0.5, 1.0, 2.0}) {
        const auto d = domination_failure_demo(a, 1.0, ens);
        CHECK(d.lhs - d.rhs > prev);
        prev = d.lhs - d.rhs;
    }
    CHECK_THROWS_AS(domination_failure_demo(-1.0, 1.0, ens), std::invalid_argument);
}

TEST_CASE("inequality CSV", "[bmo]") {
    InequalityReport r;
    r.check = "a \"quoted\" check";
    r.pass = true;
    r.lhs = 0.5;
    r.rhs = 1.0;
    r.note = "x, y";
    std::ostringstream os;
    write_inequality_csv(os, {r, r});
    const std::string s = os.str();
    CHECK(s.rfind(inequality_csv_header() + "\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 3);
    CHECK(to_csv_row(r) == "\"a \"\"quoted\"\" check\",1,1,0.5,1,0,0,0,0,\"x, y\"");
}
