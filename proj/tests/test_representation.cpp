#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qfe/representation/representation.hpp"

using Catch::Approx;
using namespace qfe;

namespace {

const PathEnsemble& ensemble() {
    static const PathEnsemble ens = simulate_brownian(make_grid(1.0, 32), 1, 1 << 13, 3);
    return ens;
}

const Regressor& regressor() {
    static const Regressor reg(ensemble(), RegressionBasis::piecewise_local(16));
    return reg;
}

double canonical_value(double mu, double z) { return mu * (1.0 + std::abs(z)) * std::abs(z); }

// Surface g(t, z) on a 1-d grid with zero standard errors.
RecoveredGenerator synthetic(const std::vector<double>& times, const std::vector<double>& zs,
                             const std::function<double(double, double)>& g) {
    RecoveredGenerator rec;
    rec.times = times;
    for (double z : zs) {
        rec.zs.push_back({z});
    }
    rec.h_schedule = {0.125};
    for (double t : times) {
        for (double z : zs) {
            rec.value.push_back(g(t, z));
            rec.se.push_back(0.0);
            rec.quotients.push_back({g(t, z)});
            rec.spread.push_back(0.0);
            rec.converged.push_back(true);
        }
    }
    return rec;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
    }
    return out;
}

BootstrapOptions quick() {
    BootstrapOptions o;
    o.resamples = 20;
    return o;
}

}  // namespace

TEST_CASE("canonical process paths", "[representation]") {
    const auto& ens = ensemble();
    const auto flat = canonical_process({0.0}, 1.0, ens);
    CHECK(std::all_of(flat.Y.data().begin(), flat.Y.data().end(), [](double v) { return v == 0.0; }));
    const auto cp = canonical_process({-1.0}, 1.0, ens);
    CHECK(cp.drift() == 2.0);
    for (std::size_t m = 0; m < ens.paths(); m += 101) {
        CHECK(cp.Y(0, m) == 0.0);
        CHECK(cp.Y(ens.steps(), m) == Approx(2.0 - ens.value(ens.steps(), m)[0]).margin(1e-14));
    }
    CHECK_THROWS_AS(canonical_process({1.0, 0.0}, 1.0, ens), std::invalid_argument);
}

TEST_CASE("canonical process is an entropic submartingale", "[representation]") {
    const auto& reg = regressor();
    const auto op = make_operator("entropic:1");
    const std::vector<double> z{1.0};
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const auto cp = canonical_process(z, 1.0, ens);
        const std::size_t N = ens.steps();
        const auto xi = affine_terminal(std::vector<double>(ens.paths(), cp.drift() * ens.grid().horizon()),
                                        cp.drift() * ens.grid().horizon(), z,
                                        StoppingTime::constant(ens.paths(), N));
        const Field E = op->evaluate_all(xi, r);
        Discrepancy d{Field(N + 1, ens.paths()), 1.0};
        for (std::size_t i = 0; i <= N; ++i) {
            for (std::size_t m = 0; m < ens.paths(); ++m) {
                d.d(i, m) = cp.Y(i, m) - E(i, m);
                d.scale = std::max(d.scale, std::abs(E(i, m)));
            }
        }
        return d;
    };
    const auto r = assess("submartingale", op->describe(), fn, reg, Sidedness::one_sided, quick());
    CHECK(r.pass);
}

TEST_CASE("recovery of time-independent generators", "[representation]") {
    const auto& reg = regressor();
    const auto times = recovery_times(1.0);
    const auto zs = recovery_zgrid(1);
    REQUIRE(zs.size() == 9);

    const auto lin = recover_generator(*make_operator("linear"), reg, times, zs);
    for (double v : lin.value) {
        CHECK(v == Approx(0.0).margin(1e-12));
    }

    // E^g[z (B_{t+h} - B_t)] = g(z) h, exact at every finite h.
    const auto numeric = recover_generator(*make_operator("canonical:1.5"), reg, times, zs);
    const AffineFormulaExpectation formula(canonical_generator(1.5));
    const auto exact = recover_generator(formula, reg, times, zs);
    CHECK_FALSE(numeric.extrapolated);
    CHECK(exact.extrapolated);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        for (std::size_t zi = 0; zi < zs.size(); ++zi) {
            const double g = canonical_value(1.5, zs[zi][0]);
            for (double q : exact.quotients[exact.index(ti, zi)]) {
                CHECK(q == Approx(g).margin(1e-6));
            }
            for (double q : numeric.quotients[numeric.index(ti, zi)]) {
                CHECK(q == Approx(g).margin(1e-6));
            }
            CHECK(exact.at(ti, zi) == Approx(g).margin(1e-6));
        }
    }
    CHECK(numeric.unconverged() == 0);

    const auto ent = recover_generator(*make_operator("entropic:1"), reg, times, zs);
    for (std::size_t c = 0; c < ent.cells(); ++c) {
        const double z = zs[c % zs.size()][0];
        CHECK(std::abs(ent.value[c] - 0.5 * z * z) <= 3.0 * ent.se[c] + 1e-9);
        if (z == 0.0) {
            CHECK(ent.value[c] == Approx(0.0).margin(1e-12));
        }
    }
}

TEST_CASE("time-dependent generators are extrapolated and flagged", "[representation]") {
    const auto& ens = ensemble();
    const auto& reg = regressor();
    const auto gen = custom_generator([](double t, std::span<const double> z) { return (1.0 + t) * z[0] * z[0]; },
                                      2.0, "(1 + t) z^2", true);
    const GExpectation op(gen);
    const std::vector<Point> zs{{-1.0}, {0.0}, {2.0}};
    const auto rec = recover_generator(op, reg, recovery_times(1.0), zs);
    CHECK(rec.extrapolated);
    const double dt = ens.grid().dt();
    for (std::size_t ti = 0; ti < rec.times.size(); ++ti) {
        for (std::size_t zi = 0; zi < zs.size(); ++zi) {
            const double z2 = zs[zi][0] * zs[zi][0];
            // The explicit scheme samples g at left endpoints: bias dt / 2 per unit z^2.
            CHECK(rec.at(ti, zi) == Approx((1.0 + rec.times[ti]) * z2).margin(z2 * dt));
        }
    }
    CHECK(rec.unconverged() == 2 * rec.times.size());
    const auto fit = fit_canonical_mu(rec);
    CHECK_FALSE(fit.time_stable);
    CHECK_FALSE(fit.canonical);

    CHECK_THROWS_AS(recover_generator(op, reg, {0.9}, zs), std::invalid_argument);
    RecoveryOptions odd;
    odd.h_fractions = {0.1};
    CHECK_THROWS_AS(recover_generator(op, reg, {0.0}, zs, odd), std::invalid_argument);
}

TEST_CASE("H6 independence", "[representation]") {
    const auto& reg = regressor();
    const auto lin = check_h6_independence(*make_operator("linear"), reg, 8, 16, {1.0});
    CHECK(lin.pass);
    CHECK(lin.lhs == Approx(0.0).margin(1e-12));
    const auto canon = make_operator("canonical:1.5");
    const auto ok = check_h6_independence(*canon, reg, 8, 16, {1.0});
    CHECK(ok.pass);
    const auto faulty = std::make_shared<FaultyExpectation>(canon, FaultyExpectation::Kind::state_bias, 0.1);
    const auto bad = check_h6_independence(*faulty, reg, 8, 16, {1.0});
    CHECK_FALSE(bad.pass);
    CHECK(bad.lhs == Approx(0.1).margin(0.02));
    CHECK_THROWS_AS(check_h6_independence(*canon, reg, 16, 8, {1.0}), std::invalid_argument);
}

TEST_CASE("H4 domination", "[representation]") {
    const auto& reg = regressor();
    const auto canon = make_operator("canonical:1.5");
    const auto same = check_h4_domination(*canon, reg, {1.0}, {1.0}, 1.5, quick());
    CHECK(same.pass);
    CHECK(same.lhs == 0.0);
    CHECK(check_h4_domination(*make_operator("linear"), reg, {2.0}, {-1.0}, 0.1, quick()).pass);
    CHECK(check_h4_domination(*canon, reg, {1.0}, {-0.5}, 3.0, quick()).pass);
    CHECK(check_h4_domination(*canon, reg, {2.0}, {0.5}, 3.0, quick()).pass);
    // g(2) - g(1) = 6 exceeds 0.5 (1 + 2 + 1) 1 = 2.
    const auto tight = check_h4_domination(*canon, reg, {2.0}, {1.0}, 0.5, quick());
    CHECK_FALSE(tight.pass);
    CHECK(tight.lhs == Approx(4.0).epsilon(1e-9));
}

TEST_CASE("canonical mu fit", "[representation]") {
    const auto zs = linspace(-3.0, 3.0, 9);
    const auto times = recovery_times(1.0);
    const auto exact = fit_canonical_mu(synthetic(times, zs, [](double, double z) { return canonical_value(1.5, z); }));
    CHECK(exact.mu == Approx(1.5).epsilon(1e-14));
    CHECK(exact.residual == Approx(0.0).margin(1e-12));
    CHECK(exact.canonical);
    CHECK(exact.z_norms.size() == 8 * times.size());

    const auto zero = fit_canonical_mu(synthetic(times, zs, [](double, double) { return 0.0; }));
    CHECK(zero.mu == 0.0);
    CHECK(zero.residual == 0.0);

    const auto ent = fit_canonical_mu(synthetic(times, zs, [](double, double z) { return 0.5 * z * z; }));
    CHECK_FALSE(ent.canonical);
    CHECK(ent.note.find("operator is quadratic but not of canonical form") != std::string::npos);
    CHECK(ent.residual > 0.1 * ent.mu);

    CHECK_THROWS_AS(fit_canonical_mu(synthetic(times, {0.0, 0.01}, [](double, double) { return 0.0; })),
                    std::invalid_argument);
}

TEST_CASE("recovered Lipschitz check", "[representation]") {
    const auto zs = linspace(-3.0, 3.0, 41);
    const double mu = 1.5;
    auto rec = synthetic({0.0}, zs, [mu](double, double z) { return canonical_value(mu, z); });
    const auto ok = check_recovered_lipschitz(rec, 2.0 * mu);
    CHECK(ok.report.pass);
    CHECK_FALSE(ok.worst_cell);

    const std::size_t corrupt = 20;
    REQUIRE(zs[corrupt] == Approx(0.0).margin(1e-12));
    rec.value[corrupt] += 1.0;
    const auto bad = check_recovered_lipschitz(rec, 2.0 * mu);
    CHECK_FALSE(bad.report.pass);
    REQUIRE(bad.worst_cell);
    CHECK(*bad.worst_cell == corrupt);
    std::size_t total = 0;
    for (std::size_t c = 0; c < rec.cells(); ++c) {
        total += bad.cell_violations[c];
    }
    // Every failing pair involves the corrupted cell.
    CHECK(total == 2 * bad.cell_violations[corrupt]);

    const auto single = check_recovered_lipschitz(synthetic({0.0}, {1.0}, [](double, double) { return 7.0; }), 1.0);
    CHECK(single.report.pass);
    CHECK(single.report.note.find("vacuous") != std::string::npos);
}

TEST_CASE("representation verification", "[representation]") {
    const auto& reg = regressor();
    const std::vector<std::size_t> probes{0, 8, 16, 24};
    const auto canon = make_operator("canonical:1.5");
    const auto self = verify_representation(*canon, canonical_generator(1.5), reg, representation_payoffs(), probes);
    CHECK(self.pass);
    CHECK(self.lhs <= 1e-12);
    const auto lin = verify_representation(*make_operator("linear"), zero_generator(), reg, representation_payoffs(),
                                           probes);
    CHECK(lin.lhs <= 1e-12);

    const auto rec = recover_generator(*canon, reg, recovery_times(1.0), recovery_zgrid(1));
    const auto fit = fit_canonical_mu(rec);
    CHECK(fit.mu == Approx(1.5).epsilon(0.05));
    CHECK(check_recovered_lipschitz(rec, 2.0 * fit.mu).report.pass);
    const auto end_to_end =
        verify_representation(*canon, canonical_generator(fit.mu), reg, representation_payoffs(), probes);
    CHECK(end_to_end.pass);

    // Entropic data are not reproduced by the best canonical generator.
    const auto ent = make_operator("entropic:1");
    const auto ent_fit = fit_canonical_mu(recover_generator(*ent, reg, recovery_times(1.0), recovery_zgrid(1)));
    CHECK_FALSE(
        verify_representation(*ent, canonical_generator(ent_fit.mu), reg, representation_payoffs(), probes).pass);
    CHECK_THROWS_AS(verify_representation(*canon, canonical_generator(1.5), reg, {}, probes), std::invalid_argument);
}

TEST_CASE("recover, fit, rebuild, recover is stable", "[representation]") {
    const auto& reg = regressor();
    const auto times = recovery_times(1.0);
    const auto zs = recovery_zgrid(1);
    const auto first = fit_canonical_mu(recover_generator(*make_operator("canonical:0.8"), reg, times, zs));
    const GExpectation rebuilt(canonical_generator(first.mu));
    const auto second = fit_canonical_mu(recover_generator(rebuilt, reg, times, zs));
    CHECK(second.mu == Approx(first.mu).epsilon(0.01));
}

TEST_CASE("compensator of the canonical process reproduces the generator", "[representation]") {
    static const PathEnsemble ens = simulate_brownian(make_grid(1.0, 64), 1, 1 << 13, 3);
    const Regressor reg(ens, RegressionBasis::piecewise_local(16));
    auto cp = canonical_process({1.0}, 1.0, ens);
    const auto res = decompose_canonical(cp, make_operator("entropic:1"), reg);
    REQUIRE(cp.h.rows() == ens.steps());
    double sum = 0.0;
    for (double v : cp.h.data()) {
        sum += v;
    }
    const double g = sum / static_cast<double>(cp.h.data().size());
    const double rate = g + cp.drift();
    CHECK(rate == Approx(0.5 + cp.drift()).epsilon(0.1));
    CHECK(g == Approx(0.5).epsilon(0.1));
    for (const auto& run : res.runs) {
        for (double a : run.A.row(ens.steps())) {
            CHECK(a <= 2.0 * cp.drift() + 1e-9);
        }
    }
    CHECK(res.runs.size() == 7);
}

TEST_CASE("recovery CSV output", "[representation]") {
    const auto rec = synthetic({0.0, 0.5}, {-1.0, 1.0}, [](double, double z) { return std::abs(z); });
    std::ostringstream os;
    write_recovery_csv(os, rec);
    const std::string s = os.str();
    CHECK(s.rfind("t,z1,g,se,spread,converged,q_h0.125\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 5);
    std::ostringstream fit;
    write_mu_fit_csv(fit, fit_canonical_mu(rec));
    CHECK(fit.str().rfind("mu,residual,standard_error,cells,time_stable,canonical,note\n", 0) == 0);
}
