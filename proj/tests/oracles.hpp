#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library routine it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

// Plain bisection for w e^w = x on the lower branch, w in [lo, -1].
inline double lambert_w_minus1_bisect(double x, double lo = -800.0)
{
    double a = lo, b = -1.0;
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (a + b);
        // w e^w is decreasing on (-inf, -1].
        if (mid * std::exp(mid) > x) a = mid;
        else b = mid;
    }
    return 0.5 * (a + b);
}

inline double phi(double x)
{
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double Phi(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Textbook Gauss-Legendre by Golub-Welsch-free Newton, kept separate from the library.
struct Rule {
    std::vector<double> x, w;
};

inline Rule legendre(int n, double a, double b)
{
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 200; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) < 1e-15) break;
        }
        r.x[i] = 0.5 * (a + b) - 0.5 * (b - a) * z;
        r.w[i] = (b - a) / ((1.0 - z * z) * pp * pp);
    }
    return r;
}

// Integral over the square [0,T]^2 of a symmetric kernel that is smooth off
// the diagonal: 2 * integral over the triangle s < t, GL in both directions.
inline double symmetric_square_integral(const std::function<double(double, double)>& k, double T, int n)
{
    const Rule outer = legendre(n, 0.0, T);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = outer.x[i];
        const Rule inner = legendre(n, 0.0, t);
        double in = 0.0;
        for (int j = 0; j < n; ++j) in += inner.w[j] * k(inner.x[j], t);
        acc += outer.w[i] * in;
    }
    return 2.0 * acc;
}

// Composite Gauss-Legendre on [a, b] with `panels` panels of order 10.
inline double composite(const std::function<double(double)>& f, double a, double b, int panels)
{
    static const Rule base = legendre(10, 0.0, 1.0);
    const double h = (b - a) / panels;
    double acc = 0.0;
    for (int p = 0; p < panels; ++p)
        for (int j = 0; j < 10; ++j) acc += h * base.w[j] * f(a + h * (p + base.x[j]));
    return acc;
}

// Composite Gauss-Legendre on dyadic panels refined geometrically towards both
// endpoints, for integrands with algebraic endpoint singularities.
inline double graded(const std::function<double(double)>& f, double a, double b, int levels = 40)
{
    static const Rule base = legendre(10, 0.0, 1.0);
    auto panel = [&](double lo, double hi) {
        double acc = 0.0;
        for (int j = 0; j < 10; ++j) acc += (hi - lo) * base.w[j] * f(lo + (hi - lo) * base.x[j]);
        return acc;
    };
    const double mid = 0.5 * (a + b);
    double acc = 0.0;
    double h = mid - a;
    for (int k = 0; k < levels; ++k) {
        acc += panel(a + 0.5 * h, a + h) + panel(b - h, b - 0.5 * h);
        h *= 0.5;
    }
    return acc;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;
    double se_mean = 0.0;
    std::size_t n = 0;
};

inline Moments moments(std::span<const double> v)
{
    Moments m;
    m.n = v.size();
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(m.n);
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(m.n - 1);
    m.se_mean = std::sqrt(m.var / static_cast<double>(m.n));
    return m;
}

// Standard error of the sample variance of centred data: sd of (x - mean)^2 / sqrt(n).
inline double se_of_variance(std::span<const double> v)
{
    const Moments m = moments(v);
    double acc = 0.0;
    for (double x : v) {
        const double d = (x - m.mean) * (x - m.mean) - m.var;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(m.n - 1) / static_cast<double>(m.n));
}

// Sample covariance of paired samples and the standard error of that estimate.
inline std::pair<double, double> covariance_with_se(std::span<const double> a, std::span<const double> b)
{
    const Moments ma = moments(a), mb = moments(b);
    const auto n = a.size();
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += (a[i] - ma.mean) * (b[i] - mb.mean);
    c /= static_cast<double>(n - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - ma.mean) * (b[i] - mb.mean) - c;
        acc += d * d;
    }
    return {c, std::sqrt(acc / static_cast<double>(n - 1) / static_cast<double>(n))};
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic Kolmogorov distribution).
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    const double ne = na * nb / (na + nb);
    const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    // The series needs many terms near 0, where Q(lam) is within 3e-8 of 1.
    if (lam < 0.25) return 1.0;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lam * lam);
    return std::clamp(p, 0.0, 1.0);
}

} // namespace oracle
