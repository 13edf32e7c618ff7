#include "qfe/generators/checks.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace qfe {

namespace {

double eval_checked(const Generator& gen, double t, std::span<const double> z) {
    const double v = gen(t, z);
    if (!std::isfinite(v)) {
        throw std::domain_error("generator " + gen.describe() + " returned a non-finite value");
    }
    return v;
}

double fd_step(std::span<const double> z) { return 1e-5 * (1.0 + norm(z)); }

// Relative slack absorbing finite-difference truncation error.
constexpr double kGradientSlack = 1e-6;
constexpr double kValueSlack = 1e-9;

}  // namespace

std::vector<Point> tensor_grid(std::size_t dim, double radius, std::size_t per_dim) {
    if (dim == 0 || per_dim == 0) {
        throw std::invalid_argument("tensor_grid: empty grid requested");
    }
    std::vector<double> axis(per_dim);
    for (std::size_t j = 0; j < per_dim; ++j) {
        axis[j] = per_dim == 1 ? 0.0
                               : -radius + 2.0 * radius * static_cast<double>(j) / static_cast<double>(per_dim - 1);
    }
    std::size_t total = 1;
    for (std::size_t k = 0; k < dim; ++k) {
        total *= per_dim;
    }
    std::vector<Point> out;
    out.reserve(total);
    for (std::size_t n = 0; n < total; ++n) {
        Point p(dim);
        std::size_t rest = n;
        for (std::size_t k = 0; k < dim; ++k) {
            p[k] = axis[rest % per_dim];
            rest /= per_dim;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Point> default_zgrid(std::size_t dim) {
    const std::size_t per_dim = dim == 1 ? 200 : dim == 2 ? 60 : dim == 3 ? 20 : 8;
    return tensor_grid(dim, 10.0, per_dim);
}

Point gradient(const Generator& gen, double t, std::span<const double> z) {
    const double h = fd_step(z);
    Point x(z.begin(), z.end());
    Point grad(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        x[k] = z[k] + h;
        const double up = eval_checked(gen, t, x);
        x[k] = z[k] - h;
        const double down = eval_checked(gen, t, x);
        x[k] = z[k];
        grad[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

double second_derivative_bound(const Generator& gen, double t, std::span<const double> z) {
    const double h = 1e-4 * (1.0 + norm(z));
    const std::size_t d = z.size();
    Point x(z.begin(), z.end());
    const double centre = eval_checked(gen, t, z);
    double worst = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            double v;
            if (a == b) {
                x[a] = z[a] + h;
                const double up = eval_checked(gen, t, x);
                x[a] = z[a] - h;
                const double down = eval_checked(gen, t, x);
                x[a] = z[a];
                v = (up - 2.0 * centre + down) / (h * h);
            } else {
                auto at = [&](double sa, double sb) {
                    x[a] = z[a] + sa * h;
                    x[b] = z[b] + sb * h;
                    const double r = eval_checked(gen, t, x);
                    x[a] = z[a];
                    x[b] = z[b];
                    return r;
                };
                v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
            }
            worst = std::max(worst, std::abs(v));
        }
    }
    return worst;
}

H2Report check_h2(const Generator& gen, double ell, std::span<const Point> zgrid,
                  std::span<const double> times) {
    if (zgrid.empty()) {
        throw std::invalid_argument("check_h2: empty z grid");
    }
    const double default_time = 0.0;
    if (times.empty()) {
        times = std::span<const double>(&default_time, 1);
    }
    H2Report report;
    const double inf = std::numeric_limits<double>::infinity();
    for (double t : times) {
        for (const Point& z : zgrid) {
            const double r = norm(z);
            const double g = std::abs(eval_checked(gen, t, z));
            const double bound = ell * (r + r * r);
            const double ratio = bound > 0.0 ? g / bound : (g > 1e-12 ? inf : 0.0);
            const Point grad = gradient(gen, t, z);
            const double gnorm = norm(grad);
            const double gbound = ell * (1.0 + r);
            const double gratio = gbound > 0.0 ? gnorm / gbound : (gnorm > 1e-9 ? inf : 0.0);
            if (ratio > report.worst_ratio || gratio > report.worst_gradient_ratio) {
                report.worst_point = z;
            }
            report.worst_ratio = std::max(report.worst_ratio, ratio);
            report.worst_gradient_ratio = std::max(report.worst_gradient_ratio, gratio);
            ++report.points;
        }
    }
    report.pass = report.worst_ratio <= 1.0 + kValueSlack &&
                  report.worst_gradient_ratio <= 1.0 + kGradientSlack;
    return report;
}

LipschitzReport check_local_lipschitz(const Generator& gen, double ell,
                                      std::span<const std::pair<Point, Point>> pairs, double t) {
    LipschitzReport report;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto& [z, w] = pairs[n];
        if (z.size() != w.size()) {
            throw std::invalid_argument("check_local_lipschitz: pair dimension mismatch");
        }
        Point diff(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) {
            diff[k] = z[k] - w[k];
        }
        const double gap = std::abs(eval_checked(gen, t, z) - eval_checked(gen, t, w));
        const double bound = ell * (1.0 + norm(z) + norm(w)) * norm(diff);
        const double ratio = bound > 0.0 ? gap / bound : (gap > 0.0 ? inf : 0.0);
        if (ratio > report.worst_ratio) {
            report.worst_ratio = ratio;
            report.worst_pair = n;
        }
        ++report.pairs;
    }
    report.pass = report.worst_ratio <= 1.0 + kValueSlack;
    return report;
}

std::vector<std::pair<Point, Point>> sample_pairs(std::size_t dim, double radius, std::size_t count,
                                                  std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;
    auto draw = [&] {
        Point p(dim);
        for (auto& v : p) {
            v = normal(engine);
        }
        const double n = norm(p);
        const double r = radius * std::pow(unit(engine), 1.0 / static_cast<double>(dim));
        for (auto& v : p) {
            v = n > 0.0 ? v / n * r : 0.0;
        }
        return p;
    };
    std::vector<std::pair<Point, Point>> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        Point a = draw();
        Point b = draw();
        out.emplace_back(std::move(a), std::move(b));
    }
    return out;
}

double second_derivative_probe(const Generator& gen, std::span<const Point> zgrid, double t) {
    double worst = 0.0;
    for (const Point& z : zgrid) {
        worst = std::max(worst, second_derivative_bound(gen, t, z));
    }
    return worst;
}

bool check_sandwich(const GeneratorPair& pair, std::span<const Point> zgrid, double t, double tol) {
    for (const Point& z : zgrid) {
        if (pair.lower(t, z) > pair.upper(t, z) + tol) {
            return false;
        }
    }
    return true;
}

bool is_even(const Generator& gen, std::span<const Point> zgrid, double t, double tol) {
    for (const Point& z : zgrid) {
        Point neg(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) {
            neg[k] = -z[k];
        }
        if (std::abs(gen(t, z) - gen(t, neg)) > tol * (1.0 + std::abs(gen(t, z)))) {
            return false;
        }
    }
    return true;
}

void require_h2(const Generator& gen, std::size_t dim) {
    const auto grid = default_zgrid(dim);
    const auto report = check_h2(gen, gen.growth(), grid);
    if (!report.pass) {
        std::ostringstream os;
        os << "generator " << gen.describe() << " violates the quadratic growth assumption with l = "
           << gen.growth() << " (value ratio " << report.worst_ratio << ", gradient ratio "
           << report.worst_gradient_ratio << ")";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace qfe
