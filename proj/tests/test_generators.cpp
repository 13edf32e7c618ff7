#include <catch_amalgamated.hpp>

#include <cmath>

#include "qfe/generators/checks.hpp"
#include "qfe/generators/expression.hpp"
#include "qfe/generators/generator.hpp"

using Catch::Approx;
using namespace qfe;

namespace {

double at(const Generator& g, std::vector<double> z, double t = 0.0) { return g(t, z); }

}  // namespace

TEST_CASE("canonical generator values", "[generators]") {
    CHECK(at(canonical_generator(1.0), {0.0}) == 0.0);
    CHECK(at(canonical_generator(2.0), {1.0}) == Approx(4.0));
    CHECK(at(canonical_generator(0.5), {2.0}) == Approx(3.0));
    CHECK(at(canonical_generator(0.5), {0.0, -2.0}) == Approx(3.0));
    CHECK(canonical_generator(1.5).growth() == 3.0);
    CHECK_THROWS_AS(canonical_generator(0.0), std::invalid_argument);
    CHECK_THROWS_AS(canonical_generator(-1.0), std::invalid_argument);
}

TEST_CASE("entropic generator values", "[generators]") {
    CHECK(at(entropic_generator(1.0), {2.0}) == Approx(2.0));
    CHECK(at(entropic_generator(0.5), {0.0}) == 0.0);
    auto g = entropic_generator(0.7);
    std::vector<double> z{1.0};
    CHECK(norm(gradient(g, 0.0, z)) == Approx(0.7).epsilon(1e-8));
    CHECK(norm(gradient(g, 0.0, z)) <= 0.7 * 2.0);
    CHECK_THROWS_AS(entropic_generator(0.0), std::invalid_argument);
}

TEST_CASE("lipschitz dominator values", "[generators]") {
    std::vector<double> zero{0.0};
    std::vector<double> one{1.0};
    CHECK(at(lipschitz_dominator(1.0, zero, zero), {1.0}) == Approx(1.0));
    CHECK(at(lipschitz_dominator(2.0, one, std::vector<double>{-1.0}), {0.5}) == Approx(3.0));
    CHECK(at(lipschitz_dominator(2.0, one, one), {0.0}) == 0.0);
}

TEST_CASE("shipped generators satisfy the growth bounds on the default grid", "[generators][h2]") {
    const auto grid1 = default_zgrid(1);
    const auto grid2 = default_zgrid(2);
    for (double mu : {0.25, 1.0, 1.5}) {
        auto g = canonical_generator(mu);
        auto r = check_h2(g, 2.0 * mu, grid1);
        CHECK(r.pass);
        CHECK(r.worst_ratio <= 1.0);
        CHECK(check_h2(g, 2.0 * mu, grid2).pass);
    }
    for (double gamma : {0.5, 1.0, 3.0}) {
        CHECK(check_h2(entropic_generator(gamma), gamma, grid1).pass);
        CHECK(check_h2(entropic_generator(gamma), gamma, grid2).pass);
    }
    CHECK(check_h2(zero_generator(), 0.0, grid1).pass);
    std::vector<double> z{0.5};
    auto dom = lipschitz_dominator(1.0, z, z);
    CHECK(check_h2(dom, dom.growth(), grid1).pass);
    CHECK(default_zgrid(1).size() == 200);
}

TEST_CASE("a cubic driver breaks the quadratic bound", "[generators][h2]") {
    const double ell = 2.0;
    auto cubic = custom_generator("absz^3", 1, ell);
    // The grid reaches |z| = l + 1.
    auto grid = tensor_grid(1, ell + 1.0, 31);
    auto r = check_h2(cubic, ell, grid);
    CHECK_FALSE(r.pass);
    CHECK(r.worst_ratio > 1.0);
    CHECK_THROWS_AS(require_h2(cubic, 1), std::invalid_argument);
    CHECK_NOTHROW(require_h2(canonical_generator(1.0), 1));
}

TEST_CASE("check_h2 rejects non-finite evaluations", "[generators][h2]") {
    auto bad = custom_generator("log(absz - 1)", 1, 1.0);
    auto grid = tensor_grid(1, 0.5, 5);
    CHECK_THROWS_AS(check_h2(bad, 1.0, grid), std::domain_error);
    CHECK_THROWS_AS(check_h2(canonical_generator(1.0), 2.0, std::vector<Point>{}), std::invalid_argument);
}

TEST_CASE("local Lipschitz property", "[generators][lipschitz]") {
    auto g = canonical_generator(1.25);
    std::vector<std::pair<Point, Point>> same{{{0.3}, {0.3}}, {{-2.0}, {-2.0}}};
    auto r0 = check_local_lipschitz(g, 2.5, same);
    CHECK(r0.pass);
    CHECK(r0.worst_ratio == 0.0);

    auto pairs = sample_pairs(1, 5.0, 2000, 17);
    CHECK(check_local_lipschitz(g, 2.5, pairs).pass);
    auto pairs2 = sample_pairs(2, 5.0, 2000, 18);
    CHECK(check_local_lipschitz(canonical_generator(1.25), 2.5, pairs2).pass);

    auto step = custom_generator("absz > 1", 1, 1.0);
    std::vector<std::pair<Point, Point>> straddle{{{0.5}, {0.6}}, {{1.0 - 5e-7}, {1.0 + 5e-7}}};
    auto r = check_local_lipschitz(step, 1.0, straddle);
    CHECK_FALSE(r.pass);
    CHECK(r.worst_pair == 1);
}

TEST_CASE("dominator bounds the canonical form at matching arguments", "[generators]") {
    const double mu = 0.8;
    auto g = canonical_generator(mu);
    std::vector<double> zero{0.0};
    for (const auto& z : tensor_grid(1, 10.0, 41)) {
        auto dom = lipschitz_dominator(mu, z, zero);
        CHECK(dom(0.0, z) >= g(0.0, z) - 1e-12);
    }
}

TEST_CASE("radial kinds are even", "[generators]") {
    auto grid = tensor_grid(2, 4.0, 9);
    for (const auto& g : {canonical_generator(1.0), entropic_generator(2.0), zero_generator()}) {
        CHECK(g.radial());
        CHECK(is_even(g, grid));
    }
    CHECK_FALSE(is_even(custom_generator("z1 + absz^2", 2, 1.0), grid));
}

TEST_CASE("second-derivative probe", "[generators]") {
    auto grid = tensor_grid(1, 3.0, 13);
    CHECK(second_derivative_probe(entropic_generator(2.0), grid) == Approx(2.0).epsilon(1e-4));
    // The canonical form has a kink at zero.
    CHECK(second_derivative_probe(canonical_generator(1.0), grid) > 100.0);
}

TEST_CASE("generator sandwich", "[generators]") {
    auto grid = tensor_grid(1, 5.0, 51);
    GeneratorPair ok{entropic_generator(0.5), canonical_generator(1.0)};
    CHECK(check_sandwich(ok, grid));
    GeneratorPair reversed{canonical_generator(1.0), entropic_generator(0.5)};
    CHECK_FALSE(check_sandwich(reversed, grid));
}

TEST_CASE("expression grammar", "[generators][expression]") {
    Expression e("1 + 2*z1^2 - max(t, 0.5) + (absz >= 1)", 2);
    std::vector<double> z{1.0, 0.0};
    CHECK(e(0.25, z) == Approx(1.0 + 2.0 - 0.5 + 1.0));
    Expression alias("tanh(z) * cos(t) + sqrt(abs(-4)) / exp(0) + log(1) + min(1, 2) - sin(0)", 1);
    std::vector<double> w{0.3};
    CHECK(alias(0.0, w) == Approx(std::tanh(0.3) + 2.0 + 1.0));
    CHECK(Expression("-2^2", 1)(0.0, w) == Approx(-4.0));

    CHECK_THROWS_AS(Expression("z3", 2), std::invalid_argument);
    CHECK_THROWS_AS(Expression("foo(1)", 1), std::invalid_argument);
    CHECK_THROWS_AS(Expression("1 +", 1), std::invalid_argument);
    CHECK_THROWS_AS(Expression("(1", 1), std::invalid_argument);
    CHECK_THROWS_AS(Expression("y", 1), std::invalid_argument);
}

TEST_CASE("generator specs round-trip through the factory", "[generators]") {
    auto g = make_generator(GeneratorSpec{"canonical", {{"mu", 1.5}}, {}}, 1);
    CHECK(g.kind() == Generator::Kind::canonical);
    CHECK(make_generator(g.spec(), 1).spec() == g.spec());
    auto c = make_generator(GeneratorSpec{"custom", {{"ell", 1.0}}, "0.5*absz^2"}, 1);
    CHECK(at(c, {2.0}) == Approx(2.0));
    CHECK(make_generator(GeneratorSpec{"zero", {}, {}}, 3).kind() == Generator::Kind::zero);
    CHECK_THROWS_AS(make_generator(GeneratorSpec{"cubic", {}, {}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_generator(GeneratorSpec{"entropic", {}, {}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_generator(GeneratorSpec{"custom", {{"ell", 1.0}}, ""}, 1), std::invalid_argument);
}
