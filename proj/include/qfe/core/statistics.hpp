#pragma once

#include <cstddef>
#include <span>

namespace qfe {

double mean(std::span<const double> xs);

// Unbiased sample variance; zero for fewer than two values.
double variance(std::span<const double> xs);

// Standard error of the sample mean.
double standard_error(std::span<const double> xs);

double max_abs(std::span<const double> xs);

// Empirical quantile with linear interpolation, q in [0, 1].
double quantile(std::span<const double> xs, double q);

// Running mean / variance accumulator (Welford), mergeable.
class RunningStats {
public:
    void add(double x) noexcept;
    void merge(const RunningStats& other) noexcept;

    std::size_t count() const noexcept { return count_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept;
    double stddev() const noexcept;

private:
    std::size_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace qfe
