#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pfq {

struct QuadratureRule {
    double a = 0.0;
    double b = 1.0;
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }

    template <class F>
    double integrate(F&& f) const
    {
        double acc = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) acc += weights[k] * f(nodes[k]);
        return acc;
    }
};

// n-point Gauss-Legendre rule on [a, b], nodes ascending.
QuadratureRule gauss_legendre(std::size_t n, double a, double b);

// Adaptive Gauss-Kronrod on [a, b]; b may be +infinity.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol = 1e-13);

double normal_pdf(double x);
double normal_cdf(double x);
// Upper tail 1 - Phi(x) without cancellation.
double normal_sf(double x);
double normal_quantile(double p);

// Secondary real branch of the Lambert W function on [-1/e, 0).
double lambert_w_minus1(double x);

// E[|G|^p 1{|G| > M}] for G ~ N(0,1).
double gaussian_tail_moment(double p, double M);

// gaussian_tail_moment(p, M) / (M^{p-1} exp(-M^2/2)), evaluated without
// forming exp(-M^2/2) so that it stays finite for large M.
double gaussian_tail_ratio(double p, double M);

// sqrt(2/pi) M^{p-1} exp(-M^2/2).
double gaussian_tail_lower_bound(double p, double M);

// sup over a dense grid of M in (1, 40] of gaussian_tail_ratio(p, M).
double fit_Cp(double p);

double eta_M(double sigma, double p, double M, double Cp);
double eta_M(double sigma, double p, double M);
double M_eta(double sigma, double p, double eta, double Cp);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    std::size_t n = 0;
};

// Ordinary least squares y = intercept + slope * x.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

// Sum with Kahan compensation.
double kahan_sum(std::span<const double> values);

} // namespace pfq
