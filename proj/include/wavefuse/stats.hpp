#pragma once

// Paired t-test with p-values from the regularized incomplete beta function.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wavefuse/error.hpp"

namespace wavefuse {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1) standard deviation; 0 when n == 1
};

inline MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorKind::sample_size, "mean of an empty sample");
    double sum = 0.0;
    for (double v : values) sum += v;
    MeanStd out;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

namespace detail {

// Modified Lentz evaluation of the incomplete beta continued fraction.
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iter = 10000;
    constexpr double eps = 1e-10;
    constexpr double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    throw Error(ErrorKind::degenerate_test, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

// I_x(a, b), the regularized incomplete beta function.
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw Error(ErrorKind::config, "incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw Error(ErrorKind::sample_size, "degrees of freedom must be > 0");
    if (std::isinf(t)) return 0.0;
    return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t df = 0;
    double mean_difference = 0.0;
};

// Paired two-sided t-test on a - b.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::length_mismatch, "paired samples differ in length (" + std::to_string(a.size()) + " vs " +
                                                    std::to_string(b.size()) + ")");
    }
    if (a.size() < 2) throw Error(ErrorKind::sample_size, "paired t-test needs n >= 2");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const auto summary = mean_std(diff);
    TTestResult out;
    out.df = a.size() - 1;
    out.mean_difference = summary.mean;
    if (summary.mean == 0.0) return out;
    if (summary.std == 0.0) {
        throw Error(ErrorKind::degenerate_test, "differences have zero variance and nonzero mean");
    }
    out.t = summary.mean / (summary.std / std::sqrt(static_cast<double>(a.size())));
    out.p = student_t_two_sided_p(out.t, static_cast<double>(out.df));
    return out;
}

}  // namespace wavefuse
