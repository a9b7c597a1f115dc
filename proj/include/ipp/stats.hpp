#pragma once

#include <cmath>
#include <limits>

#include "ipp/common.hpp"

namespace ipp {

// Running (count, mean, M2) accumulator.
struct WelfordStats {
    long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / count;
        m2 += delta * (x - mean);
    }
    double variance() const { return count > 1 ? m2 / (count - 1) : 0.0; }
};

namespace detail {

// Continued fraction for the regularized incomplete beta (Numerical Recipes
// style, modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-14;
    constexpr double fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
        b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// CDF of Student's t with `df` degrees of freedom.
inline double student_t_cdf(double t, double df) {
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

// Two-sided Welch t-test on two Welford accumulators.
inline double welch_p_value(const WelfordStats& a, const WelfordStats& b) {
    if (a.count < 2 || b.count < 2)
        throw InsufficientSamples("welch_p_value: both samples need count >= 2");
    const double va = a.variance() / a.count;
    const double vb = b.variance() / b.count;
    const double se2 = va + vb;
    if (se2 <= 0.0) {
        // degenerate zero variance: certain when the means differ
        return a.mean == b.mean ? 1.0 : std::numeric_limits<double>::min();
    }
    const double t = (a.mean - b.mean) / std::sqrt(se2);
    const double df =
        se2 * se2 / (va * va / (a.count - 1) + vb * vb / (b.count - 1));
    const double p = 2.0 * (1.0 - student_t_cdf(std::fabs(t), df));
    return std::max(p, std::numeric_limits<double>::min());
}

}  // namespace ipp
