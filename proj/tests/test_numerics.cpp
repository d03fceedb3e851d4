#include "pfq/errors.hpp"
#include "pfq/numerics.hpp"
#include "pfq/random.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace pfq;

// ---------------------------------------------------------------- quadrature

TEST(GaussLegendre, WeightsSumToIntervalLength)
{
    for (std::size_t n : {1u, 2u, 7u, 64u, 400u}) {
        const auto rule = gauss_legendre(n, -0.5, 2.0);
        double s = 0.0;
        for (double w : rule.weights) s += w;
        EXPECT_NEAR(s, 2.5, 1e-12) << "n=" << n;
    }
}

TEST(GaussLegendre, ExactForPolynomialsUpToDegree2nMinus1)
{
    for (std::size_t n : {3u, 8u, 20u}) {
        const auto rule = gauss_legendre(n, 0.0, 1.0);
        for (std::size_t deg = 0; deg <= 2 * n - 1; ++deg) {
            const double got = rule.integrate([deg](double x) { return std::pow(x, static_cast<double>(deg)); });
            EXPECT_NEAR(got, 1.0 / static_cast<double>(deg + 1), 1e-10) << "n=" << n << " deg=" << deg;
        }
    }
}

TEST(GaussLegendre, NodesAscendingInsideInterval)
{
    const auto rule = gauss_legendre(401, 0.0, 3.0);
    for (std::size_t k = 0; k < rule.size(); ++k) {
        EXPECT_GT(rule.nodes[k], 0.0);
        EXPECT_LT(rule.nodes[k], 3.0);
        if (k > 0) EXPECT_GT(rule.nodes[k], rule.nodes[k - 1]);
    }
    EXPECT_DOUBLE_EQ(rule.nodes[200], 1.5);
}

TEST(GaussLegendre, MatchesIndependentRule)
{
    const auto rule = gauss_legendre(50, 0.0, 1.0);
    const auto ref = oracle::legendre(50, 0.0, 1.0);
    for (std::size_t k = 0; k < 50; ++k) {
        EXPECT_NEAR(rule.nodes[k], ref.x[k], 1e-14);
        EXPECT_NEAR(rule.weights[k], ref.w[k], 1e-14);
    }
}

// ---------------------------------------------------------------- Lambert W_{-1}

TEST(LambertWm1, BranchPoint)
{
    EXPECT_DOUBLE_EQ(lambert_w_minus1(-1.0 / std::numbers::e), -1.0);
}

TEST(LambertWm1, GoldenValueAgainstBisection)
{
    const double ref = oracle::lambert_w_minus1_bisect(-0.1);
    EXPECT_NEAR(ref, -3.577152064, 1e-9);
    EXPECT_NEAR(lambert_w_minus1(-0.1), ref, 1e-12);
}

TEST(LambertWm1, RoundTripOnRandomArguments)
{
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        // Mix uniform and log-uniform draws to cover both ends of the branch.
        const double u = rng.uniform();
        const double x = (i % 2 == 0) ? -u / std::numbers::e : -std::exp(-1.0 - 40.0 * u);
        if (x == 0.0) continue;
        const double w = lambert_w_minus1(x);
        EXPECT_LE(w, -1.0);
        EXPECT_LE(std::abs(w * std::exp(w) - x), 1e-12) << "x=" << x;
    }
}

TEST(LambertWm1, NearBranchPointMatchesBisection)
{
    for (double d : {1e-3, 1e-6, 1e-9}) {
        const double x = -1.0 / std::numbers::e + d;
        EXPECT_NEAR(lambert_w_minus1(x), oracle::lambert_w_minus1_bisect(x), 1e-6);
    }
}

TEST(LambertWm1, DomainErrors)
{
    EXPECT_THROW(lambert_w_minus1(0.0), DomainError);
    EXPECT_THROW(lambert_w_minus1(0.5), DomainError);
    EXPECT_THROW(lambert_w_minus1(-0.5), DomainError);
}

// ---------------------------------------------------------------- Gaussian tails

TEST(GaussianTail, IntegrationByPartsOracle)
{
    const double oracle_value = 2.0 * (oracle::phi(1.0) + 1.0 - oracle::Phi(1.0));
    EXPECT_NEAR(oracle_value, 0.801252, 1e-6);
    EXPECT_NEAR(gaussian_tail_moment(2.0, 1.0), oracle_value, 1e-10);
}

TEST(GaussianTail, ClosedFormForP1)
{
    // E|G| 1{|G|>M} = 2 phi(M).
    for (double M : {1.5, 3.0, 7.0})
        EXPECT_NEAR(gaussian_tail_moment(1.0, M) / (2.0 * oracle::phi(M)), 1.0, 1e-11);
}

TEST(GaussianTail, LowerBoundNeverViolated)
{
    for (double p : {1.5, 2.0, 3.0})
        for (double M = 1.05; M <= 30.0; M += 0.35) {
            EXPECT_GE(gaussian_tail_ratio(p, M), std::sqrt(2.0 / std::numbers::pi)) << p << " " << M;
            EXPECT_GE(gaussian_tail_moment(p, M), gaussian_tail_lower_bound(p, M));
        }
}

TEST(GaussianTail, DecreasingInM)
{
    double prev = gaussian_tail_moment(2.0, 2.0);
    for (double M : {4.0, 6.0}) {
        const double cur = gaussian_tail_moment(2.0, M);
        EXPECT_LT(cur, prev);
        EXPECT_GT(cur, 0.0);
        prev = cur;
    }
    EXPECT_LT(prev, 1e-6);
}

TEST(FitCp, DominatesRatioAtOne)
{
    const double ratio1 = 0.801252 / std::exp(-0.5);
    EXPECT_NEAR(gaussian_tail_ratio(2.0, 1.0), 1.3210, 1e-3);
    EXPECT_GE(fit_Cp(2.0), gaussian_tail_ratio(2.0, 1.0));
    EXPECT_NEAR(ratio1, 1.3210, 1e-3);
}

TEST(FitCp, AboveLowerBracketAndFinite)
{
    for (double p : {1.5, 2.0, 3.0}) {
        const double c = fit_Cp(p);
        EXPECT_TRUE(std::isfinite(c));
        EXPECT_GE(c, std::sqrt(2.0 / std::numbers::pi));
    }
    for (double M = 1.0; M <= 40.0; M += 0.5) EXPECT_TRUE(std::isfinite(gaussian_tail_ratio(3.0, M)));
}

// ---------------------------------------------------------------- eta_M / M_eta

TEST(EtaM, RoundTrip)
{
    const double cp = fit_Cp(2.0);
    const double M = M_eta(1.0, 2.0, 0.01, cp);
    EXPECT_TRUE(std::isfinite(M));
    EXPECT_LE(eta_M(1.0, 2.0, M, cp), 0.01 * (1.0 + 1e-12));
    EXPECT_NEAR(eta_M(1.0, 2.0, M, cp), 0.01, 1e-10);
}

TEST(EtaM, RoundTripOverParameterGrid)
{
    for (double p : {1.5, 2.0, 3.0}) {
        const double cp = fit_Cp(p);
        for (double sigma : {0.5, 1.0, 2.0}) {
            for (double eta : {1e-2, 1e-4, 1e-8}) {
                double M = 0.0;
                try {
                    M = M_eta(sigma, p, eta, cp);
                } catch (const BoundVacuousError&) {
                    continue;
                }
                if (M <= 1.0) continue;
                EXPECT_LE(eta_M(sigma, p, M, cp), eta * (1.0 + 1e-9)) << p << " " << sigma << " " << eta;
            }
        }
    }
}

TEST(EtaM, HalvingEtaIncreasesM)
{
    const double cp = fit_Cp(2.0);
    double prev = M_eta(1.0, 2.0, 0.02, cp);
    for (double eta : {0.01, 0.005, 0.0025}) {
        const double M = M_eta(1.0, 2.0, eta, cp);
        EXPECT_GT(M, prev);
        prev = M;
    }
}

TEST(EtaM, DecreasingBeyondCriticalM)
{
    for (double p : {1.5, 2.0, 3.0}) {
        const double q = p / (p - 1.0);
        for (double sigma : {0.5, 1.0, 2.0}) {
            const double start = std::max(1.0, sigma * std::sqrt(p / q)) + 1e-6;
            double prev = eta_M(sigma, p, start + 1e-6, 1.3);
            for (double M = start + 0.05; M < start + 10.0; M += 0.05) {
                const double cur = eta_M(sigma, p, M, 1.3);
                EXPECT_LT(cur, prev);
                prev = cur;
            }
        }
    }
}

TEST(EtaM, VacuousBoundRejected)
{
    EXPECT_THROW(M_eta(1.0, 2.0, 10.0, 1.3), BoundVacuousError);
}

// ---------------------------------------------------------------- helpers

TEST(FitLine, RecoversExactLine)
{
    const std::vector<double> x{0, 1, 2, 3};
    const std::vector<double> y{1, -1, -3, -5};
    const auto fit = fit_line(x, y);
    EXPECT_NEAR(fit.slope, -2.0, 1e-14);
    EXPECT_NEAR(fit.intercept, 1.0, 1e-14);
    EXPECT_NEAR(fit.slope_se, 0.0, 1e-12);
    const std::vector<double> flat{1, 1};
    EXPECT_THROW(fit_line(flat, flat), DomainError);
}

TEST(NormalQuantile, InvertsCdf)
{
    for (double p : {1e-10, 0.01, 0.3, 0.5, 0.9, 1 - 1e-9})
        EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12 * std::max(1.0, p / (1 - p)));
}
