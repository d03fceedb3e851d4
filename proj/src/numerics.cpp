#include "pfq/numerics.hpp"

#include "pfq/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace pfq {

QuadratureRule gauss_legendre(std::size_t n, double a, double b)
{
    if (n == 0) throw DomainError("gauss_legendre: need at least one node");
    if (!(b > a)) throw DomainError("gauss_legendre: empty interval");

    QuadratureRule rule;
    rule.a = a;
    rule.b = b;
    rule.nodes.resize(n);
    rule.weights.resize(n);

    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);
    const std::size_t m = (n + 1) / 2;
    for (std::size_t i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // Recompute the derivative at the converged root.
        double p0 = 1.0;
        double p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
            p0 = p1;
            p1 = pk;
        }
        dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);

        // x is the i-th largest root; store ascending.
        rule.nodes[n - 1 - i] = mid + half * x;
        rule.nodes[i] = mid - half * x;
        rule.weights[n - 1 - i] = half * w;
        rule.weights[i] = half * w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = mid;
    return rule;
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double rel_tol)
{
    double err = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, rel_tol, &err);
    if (!std::isfinite(value) || err > std::max(1e3 * rel_tol * std::abs(value), 1e-300)) {
        std::ostringstream os;
        os << "adaptive quadrature did not converge (estimate " << value << ", error " << err << ")";
        throw ConvergenceError(os.str());
    }
    return value;
}

double normal_pdf(double x)
{
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_sf(double x)
{
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double lambert_w_minus1(double x)
{
    constexpr double inv_e = 0.36787944117144233;
    if (!(x < 0.0) || x < -inv_e * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())) {
        std::ostringstream os;
        os << "lambert_w_minus1: argument " << x << " outside [-1/e, 0)";
        throw DomainError(os.str());
    }
    const double gap = 1.0 + std::numbers::e * x;
    if (gap <= 4.0 * std::numeric_limits<double>::epsilon()) return -1.0;

    double w;
    if (x < -0.25) {
        // Branch-point series in p = -sqrt(2(1 + e x)).
        const double p = -std::sqrt(2.0 * gap);
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    } else {
        const double l1 = std::log(-x);
        w = l1 - std::log(-l1);
    }

    for (int it = 0; it < 50; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double wp1 = w + 1.0;
        if (wp1 == 0.0) break;
        const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        const double dw = f / denom;
        w -= dw;
        if (std::abs(dw) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(w)) break;
    }
    return std::min(w, -1.0);
}

double gaussian_tail_ratio(double p, double M)
{
    if (!(p > 0.0)) throw DomainError("gaussian_tail_ratio: p must be positive");
    if (!(M > 0.0)) throw DomainError("gaussian_tail_ratio: M must be positive");
    // With x = M + u: x^2 - M^2 = 2Mu + u^2.
    auto integrand = [p, M](double u) {
        return std::pow(1.0 + u / M, p) * std::exp(-M * u - 0.5 * u * u);
    };
    const double integral = integrate_adaptive(integrand, 0.0, std::numeric_limits<double>::infinity());
    return 2.0 / std::sqrt(2.0 * std::numbers::pi) * M * integral;
}

double gaussian_tail_moment(double p, double M)
{
    return gaussian_tail_ratio(p, M) * std::pow(M, p - 1.0) * std::exp(-0.5 * M * M);
}

double gaussian_tail_lower_bound(double p, double M)
{
    return std::sqrt(2.0 / std::numbers::pi) * std::pow(M, p - 1.0) * std::exp(-0.5 * M * M);
}

double fit_Cp(double p)
{
    if (!(p > 0.0)) throw DomainError("fit_Cp: p must be positive");
    constexpr int grid = 1560;
    double best = 0.0;
    for (int j = 0; j <= grid; ++j) {
        const double M = 1.0 + 39.0 * static_cast<double>(j) / grid;
        best = std::max(best, gaussian_tail_ratio(p, M));
    }
    return best;
}

namespace {

double conjugate(double p)
{
    if (!(p > 1.0)) throw DomainError("conjugate exponent needs p > 1");
    return p / (p - 1.0);
}

} // namespace

double eta_M(double sigma, double p, double M, double Cp)
{
    if (!(sigma > 0.0)) throw DomainError("eta_M: sigma must be positive");
    if (!(M > 1.0)) throw DomainError("eta_M: M must exceed 1");
    if (!(Cp > 0.0)) throw DomainError("eta_M: Cp must be positive");
    const double q = conjugate(p);
    return std::pow(sigma, 1.0 / p) * std::pow(Cp, 1.0 / p) * std::pow(M, 1.0 / q) *
           std::exp(-M * M / (2.0 * p * sigma * sigma));
}

double eta_M(double sigma, double p, double M)
{
    return eta_M(sigma, p, M, fit_Cp(p));
}

double M_eta(double sigma, double p, double eta, double Cp)
{
    if (!(sigma > 0.0)) throw DomainError("M_eta: sigma must be positive");
    if (!(eta > 0.0)) throw DomainError("M_eta: eta must be positive");
    if (!(Cp > 0.0)) throw DomainError("M_eta: Cp must be positive");
    const double q = conjugate(p);
    const double x = -q * std::pow(eta, 2.0 * q) /
                     (p * sigma * sigma * std::pow(Cp, 2.0 * q / p) * std::pow(sigma, 2.0 * q / p));
    if (!(x > -1.0 / std::numbers::e && x < 0.0)) {
        std::ostringstream os;
        os << "M_eta: W_{-1} argument " << x << " outside (-1/e, 0); eta too large for the bound";
        throw BoundVacuousError(os.str());
    }
    return std::sqrt(-sigma * sigma * (p - 1.0) * lambert_w_minus1(x));
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw DomainError("fit_line: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("fit_line: degenerate fit (fewer than two points)");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("fit_line: degenerate fit (constant abscissa)");
    LinearFit fit;
    fit.n = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            ssr += r * r;
        }
        fit.slope_se = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

double kahan_sum(std::span<const double> values)
{
    double sum = 0.0;
    double c = 0.0;
    for (double v : values) {
        const double y = v - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum;
}

} // namespace pfq
