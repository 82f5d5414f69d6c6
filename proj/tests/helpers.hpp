#pragma once

// Shared test utilities: chi-square tail probability, exact binomial sign
// test, and small stat helpers. Kept independent of the library's own math
// so they can serve as oracles for it.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace testutil {

// Regularized upper incomplete gamma Q(a, x) via series / continued fraction.
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    double gln = std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) by series, return 1 - P.
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
    }
    // Q(a,x) by Lentz continued fraction.
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

// Chi-square upper-tail p-value.
inline double chi2_pvalue(double statistic, int dof) {
    return gamma_q(double(dof) / 2.0, statistic / 2.0);
}

// Pearson statistic of observed counts against expected probabilities.
inline double chi2_statistic(const std::vector<uint64_t>& observed, const std::vector<double>& expected_p,
                             uint64_t total) {
    double stat = 0.0;
    for (size_t i = 0; i < observed.size(); ++i) {
        double e = expected_p[i] * double(total);
        if (e <= 0.0) continue;
        double d = double(observed[i]) - e;
        stat += d * d / e;
    }
    return stat;
}

// One-sided sign test: P(Bin(n, 1/2) >= wins). Ties must be excluded by the
// caller.
inline double sign_test_pvalue(int wins, int n) {
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    return p;
}

inline double total_variation(const std::vector<uint64_t>& observed, const std::vector<double>& p,
                              uint64_t total) {
    double tv = 0.0;
    for (size_t i = 0; i < observed.size(); ++i) {
        tv += std::abs(double(observed[i]) / double(total) - p[i]);
    }
    return 0.5 * tv;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

}  // namespace testutil
