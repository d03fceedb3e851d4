#include "oracles.hpp"

#include "pfq/errors.hpp"
#include "pfq/partial_quant.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace pfq;

namespace {

const KLBasis& bm_basis()
{
    static const KLBasis b = kl_basis(ProcessSpec::brownian_motion(), 8);
    return b;
}

SdeSpec driver_copy() { return SdeSpec::make(Coefficient::constant(0.0), Coefficient::constant(1.0), 0.0); }

Codebook singleton(std::vector<double> point, std::vector<double> lambdas)
{
    Codebook cb;
    cb.d = point.size();
    cb.lambdas = std::move(lambdas);
    cb.points = std::move(point);
    cb.weights = {1.0};
    return cb;
}

PartialQuantizer bm_pq(std::size_t N, IndexSet I = {1})
{
    Rng rng(500 + N);
    return make_partial_quantizer(bm_basis(), I, N, rng, 100000);
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST(Coefficient, ParseAndConstants)
{
    const auto c = parse_coefficient("affine_clamped(0,-1,10)");
    EXPECT_EQ(c.kind, Coefficient::Kind::AffineClamped);
    EXPECT_EQ(c(0.3, 2.0), -2.0);
    EXPECT_EQ(c(0.3, 50.0), -10.0);
    EXPECT_EQ(c.lipschitz(), 1.0);
    EXPECT_EQ(c.sup_norm(), 10.0);
    EXPECT_EQ(parse_coefficient(c.to_string()).params, c.params);

    const auto s = parse_coefficient("sin_scaled(0.5, 2)");
    EXPECT_NEAR(s(0.0, 0.25), 0.5 * std::sin(0.5), 1e-15);
    EXPECT_EQ(s.lipschitz(), 1.0);
    EXPECT_EQ(s.sup_norm(), 0.5);
    EXPECT_EQ(s.at_zero(), 0.0);
    EXPECT_EQ(parse_coefficient("const(-3)").sup_norm(), 3.0);
}

TEST(Coefficient, Errors)
{
    EXPECT_THROW(parse_coefficient("const"), DomainError);
    EXPECT_THROW(parse_coefficient("cubic(1)"), DomainError);
    EXPECT_THROW(parse_coefficient("const(1,2)"), DomainError);
    EXPECT_THROW(parse_coefficient("const(x)"), DomainError);
    EXPECT_THROW(parse_coefficient("affine_clamped(0,1,0)"), DomainError);
}

TEST(SdeSpec, DeclaredConstantsMustCoverTheCoefficients)
{
    auto sde = SdeSpec::make(Coefficient::sin_scaled(2.0, 3.0), Coefficient::affine_clamped(1.0, 0.5, 4.0), 0.0);
    EXPECT_EQ(sde.b_lip, 6.0);
    EXPECT_EQ(sde.sigma_lip, 0.5);
    EXPECT_EQ(sde.sigma_max, 4.0);
    sde.sigma_max = 3.0;
    EXPECT_THROW(sde.validate(), DomainError);
    sde.sigma_max = 4.0;
    sde.b_lip = 1.0;
    EXPECT_THROW(sde.validate(), DomainError);
    sde.b_lip = 7.0;
    EXPECT_NO_THROW(sde.validate());
    sde.x0 = std::nan("");
    EXPECT_THROW(sde.validate(), DomainError);
}

TEST(EulerSolve, UnitDiffusionReproducesTheDriver)
{
    Rng rng(1);
    const auto driver = sample_path(ProcessSpec::brownian_motion(), TimeGrid::uniform(1.0, 257), rng);
    const auto s = euler_solve(driver_copy(), driver);
    for (std::size_t k = 0; k < s.values.size(); ++k) EXPECT_NEAR(s.values[k], driver.values[k], 1e-13);
}

TEST(EulerSolve, PureDriftIsLinear)
{
    const auto sde = SdeSpec::make(Coefficient::constant(1.0), Coefficient::constant(0.0), 0.7);
    Rng rng(2);
    const auto driver = sample_path(ProcessSpec::brownian_motion(), TimeGrid::uniform(1.0, 1001), rng);
    const auto s = euler_solve(sde, driver);
    for (std::size_t k = 0; k < s.values.size(); ++k) EXPECT_NEAR(s.values[k], 0.7 + driver.grid[k], 1e-12);
}

TEST(EulerSolve, LinearMeanReversion)
{
    // dS = -S dt + dW has E S_1 = x0 / e; Euler on 512 steps is biased by x0 e^{-1} / 1024.
    const auto sde = SdeSpec::make(Coefficient::affine_clamped(0.0, -1.0, 10.0), Coefficient::constant(1.0), 1.0);
    const auto grid = TimeGrid::uniform(1.0, 513);
    const PathSampler sampler(ProcessSpec::brownian_motion(), grid);
    Rng rng(3);
    std::vector<double> end(100000), x(grid.size()), s(grid.size());
    for (auto& v : end) {
        sampler.sample_into(x, rng);
        euler_solve_into(sde, grid.points(), x, s);
        v = s.back();
    }
    const auto m = oracle::moments(end);
    EXPECT_NEAR(m.mean, std::exp(-1.0), 5.0 * m.se_mean + 1e-3);
}

TEST(EulerSolve, BlowUpIsReported)
{
    const auto sde = SdeSpec::make(Coefficient::constant(1e308), Coefficient::constant(0.0), 1e308);
    const Path driver{TimeGrid::uniform(1.0, 2), {0.0, 0.0}};
    try {
        euler_solve(sde, driver);
        FAIL() << "expected a blow-up";
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.kind(), "blow_up");
    }
}

TEST(PartialQuantize, ZeroCorrectionLeavesThePath)
{
    Rng rng(4);
    const auto grid = TimeGrid::uniform(1.0, 513);
    const auto path = sample_path(ProcessSpec::brownian_motion(), grid, rng);
    const IndexSet I{1, 3};
    const auto y = kl_coordinates(path, bm_basis(), I);
    const PartialQuantizer pq{bm_basis(), I, singleton(y, {bm_basis().eigenvalue(1), bm_basis().eigenvalue(3)})};
    const auto r = partial_quantize_path(pq, path);
    EXPECT_EQ(r.index, 0u);
    EXPECT_EQ(r.path.values, path.values);
}

TEST(PartialQuantize, CoordinatesOnAndOffI)
{
    const auto pq = bm_pq(8, {2});
    const auto grid = TimeGrid::uniform(1.0, 1025);
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto path = sample_path(ProcessSpec::brownian_motion(), grid, rng);
        const auto r = partial_quantize_path(pq, path);
        const auto all = IndexSet::first(8);
        const auto before = kl_coordinates(path, bm_basis(), all);
        const auto after = kl_coordinates(r.path, bm_basis(), all);
        EXPECT_NEAR(after[1], pq.codebook.point(r.index)[0], 1e-3);
        for (std::size_t j = 0; j < 8; ++j)
            if (j != 1) EXPECT_NEAR(after[j], before[j], 1e-6) << j;
    }
}

TEST(PartialQuantize, Validation)
{
    Rng rng(6);
    auto pq = bm_pq(4);
    pq.I = IndexSet{2};
    EXPECT_THROW(pq.validate(), DomainError);
    EXPECT_THROW(make_partial_quantizer(bm_basis(), IndexSet{}, 4, rng), PreconditionError);
    EXPECT_THROW(make_partial_quantizer(bm_basis(), IndexSet{9}, 4, rng), Error);
    EXPECT_THROW(make_partial_quantizer(bm_basis(), IndexSet{1}, 0, rng), DomainError);
}

TEST(StrataSample, AcceptedPathsRequantizeToTheirCell)
{
    const auto pq = bm_pq(4);
    const auto grid = TimeGrid::uniform(1.0, 257);
    StrataSampler s(pq, grid);
    const GridPartialQuantizer gq(pq, grid);
    Rng rng(7);
    for (std::size_t k = 0; k < 4; ++k)
        for (int rep = 0; rep < 50; ++rep) EXPECT_EQ(gq.cell(s.sample(k, rng).values), k);
}

TEST(StrataSample, SinglePointAcceptsEverything)
{
    const auto pq = bm_pq(1);
    StrataSampler s(pq, TimeGrid::uniform(1.0, 129));
    Rng rng(8);
    for (int rep = 0; rep < 100; ++rep) s.sample(0, rng);
    EXPECT_EQ(s.acceptance(0), 1.0);
    EXPECT_EQ(s.draws(0), 100u);
}

TEST(StrataSample, RawCellFrequenciesMatchWeights)
{
    const auto pq = bm_pq(6);
    const auto grid = TimeGrid::uniform(1.0, 257);
    const GridPartialQuantizer gq(pq, grid);
    const PathSampler sampler(ProcessSpec::brownian_motion(), grid);
    Rng rng(9);
    const std::size_t n = 100000;
    std::vector<double> counts(pq.size(), 0.0), x(grid.size());
    for (std::size_t i = 0; i < n; ++i) {
        sampler.sample_into(x, rng);
        counts[gq.cell(x)] += 1.0;
    }
    for (std::size_t k = 0; k < pq.size(); ++k) {
        const double p = pq.codebook.weights[k];
        EXPECT_NEAR(counts[k] / static_cast<double>(n), p, 5.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)))
            << k;
    }
}

TEST(StrataSample, MixtureOverCellsRecoversTheMarginal)
{
    // Drawing the cell from the codebook weights, then the path given the
    // cell, must give back the unconditional law: Var X_{1/2} = 1/2.
    const auto pq = bm_pq(4);
    const auto grid = TimeGrid::uniform(1.0, 257);
    StrataSampler s(pq, grid);
    Rng rng(10);
    std::vector<double> mid(40000), x(grid.size());
    for (auto& v : mid) {
        double u = rng.uniform();
        std::size_t k = 0;
        while (k + 1 < pq.size() && u >= pq.codebook.weights[k]) u -= pq.codebook.weights[k++];
        s.sample_into(k, x, rng);
        v = x[128];
    }
    const auto m = oracle::moments(mid);
    EXPECT_NEAR(m.mean, 0.0, 5.0 * m.se_mean);
    EXPECT_NEAR(m.var, 0.5, 5.0 * oracle::se_of_variance(mid));
}

TEST(StrataSample, TinyCellIsRejected)
{
    // Second cell is Y_1 > 4 sd, probability 3.2e-5.
    const double lam = bm_basis().eigenvalue(1);
    Codebook cb;
    cb.d = 1;
    cb.lambdas = {lam};
    cb.points = {0.0, 8.0 * std::sqrt(lam)};
    cb.weights = {1.0 - oracle::Phi(-4.0), oracle::Phi(-4.0)};
    const PartialQuantizer pq{bm_basis(), {1}, cb};
    StrataSampler s(pq, TimeGrid::uniform(1.0, 65));
    Rng rng(11);
    // A lucky draw may be accepted early; the online estimate catches up by 1e5 draws.
    bool rejected = false;
    for (int call = 0; call < 50 && !rejected; ++call) {
        try {
            s.sample(1, rng);
        } catch (const CellTooSmallError&) {
            rejected = true;
        }
    }
    EXPECT_TRUE(rejected);
    EXPECT_GE(s.draws(1), StrataSampler::kMinDraws);
    EXPECT_LT(s.acceptance(1), StrataSampler::kMinAcceptance);
}

TEST(PairedSolve, ZeroCorrectionGivesIdenticalPaths)
{
    const auto sde = SdeSpec::make(Coefficient::sin_scaled(1.0, 2.0), Coefficient::affine_clamped(1.0, 0.3, 2.0), 0.2);
    const auto grid = solve_grid(1.0, 0.99);
    const auto probe = bm_pq(1);
    const PairedSolver base(sde, probe, grid);
    Rng rng(12);
    std::vector<double> x(base.full_grid().size());
    base.sample_driver(x, rng);

    const IndexSet I{1, 2};
    const auto y = CoordinateProjector(bm_basis(), I, base.full_grid()).project(x);
    const PartialQuantizer pq{bm_basis(), I, singleton(y, {bm_basis().eigenvalue(1), bm_basis().eigenvalue(2)})};
    const auto pp = PairedSolver(sde, pq, grid).solve(x);
    EXPECT_EQ(pp.S.values, pp.S_tilde.values);
    EXPECT_EQ(pp.S.grid.back(), 0.99);
}

TEST(PairedSolve, GridMustStopBeforeT)
{
    Rng rng(13);
    EXPECT_THROW(paired_solve(driver_copy(), bm_pq(2), TimeGrid::uniform(1.0, 65), rng), DomainError);
    EXPECT_THROW(solve_grid(1.0, 1.0), DomainError);
    const auto fbm = kl_basis(ProcessSpec::fractional_brownian_motion(0.3), 4, 100);
    const PartialQuantizer pq{fbm, {1}, lloyd_1d(fbm.eigenvalue(1), 2)};
    EXPECT_THROW(paired_solve(driver_copy(), pq, solve_grid(1.0, 0.5), rng), UnsupportedFamilyError);
}

TEST(PairedSolve, DriverGridExtendsToT)
{
    const auto g = driver_grid(solve_grid(1.0, 0.99, 512), 1.0);
    EXPECT_EQ(g.back(), 1.0);
    EXPECT_EQ(g[507], solve_grid(1.0, 0.99, 512).back());
    for (std::size_t k = 0; k + 1 < g.size(); ++k) EXPECT_LE(g[k + 1] - g[k], 1.0 / 512 + 1e-15);
}

TEST(PairedSolve, ErrorShrinksWithTheCodebook)
{
    const auto sde = SdeSpec::make(Coefficient::affine_clamped(0.0, -1.0, 5.0), Coefficient::sin_scaled(1.0, 1.0), 1.0);
    const auto grid = solve_grid(1.0, 0.99);
    std::vector<double> med;
    for (std::size_t N : {1u, 4u, 16u}) {
        const PairedSolver solver(sde, bm_pq(N), grid);
        Rng rng(14);
        std::vector<double> err(1000), x(solver.full_grid().size());
        for (auto& e : err) {
            solver.sample_driver(x, rng);
            e = solver.sup_error(x);
            EXPECT_GE(e, 0.0);
        }
        med.push_back(median(err));
    }
    EXPECT_GT(med[0], med[1]);
    EXPECT_GT(med[1], med[2]);
}

TEST(SupErrorLp, VanishesWithoutDiffusion)
{
    const auto sde = SdeSpec::make(Coefficient::affine_clamped(0.5, -1.0, 5.0), Coefficient::constant(0.0), 1.0);
    Rng rng(15);
    const auto e = sup_error_lp(sde, bm_pq(4), 2.0, 0.9, 1000, rng);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.se, 0.0);
}

TEST(SupErrorLp, NondecreasingInTime)
{
    const auto sde = SdeSpec::make(Coefficient::sin_scaled(1.0, 1.0), Coefficient::affine_clamped(1.0, 0.5, 3.0), 0.0);
    const auto pq = bm_pq(4, {1, 2});
    double prev = 0.0;
    for (double t : {0.25, 0.5, 0.75}) {
        Rng rng(16);
        const double e = sup_error_lp(sde, pq, 2.0, t, 1000, rng).value;
        EXPECT_GE(e, prev) << t;
        prev = e;
    }
}

TEST(SupErrorLp, UnitDiffusionMatchesTheCoordinateError)
{
    // With b = 0 and sigma = 1, S - S~ = (Y_1 - Y^_1) e_1 and sup_{v<=t} e_1(v)
    // = sqrt 2 sin(pi t / 2), so the L^p error is that factor times ||Y_1 - Y^_1||_p.
    const double p = 2.0, t = 0.8;
    for (std::size_t N : {2u, 8u}) {
        const auto pq = bm_pq(N);
        Rng rng(17);
        const auto e = sup_error_lp(driver_copy(), pq, p, t, 20000, rng);
        const double lam = bm_basis().eigenvalue(1);
        double moment = 0.0;
        const auto& x = pq.codebook.points;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double lo = k == 0 ? -40.0 * std::sqrt(lam) : 0.5 * (x[k - 1] + x[k]);
            const double hi = k + 1 == x.size() ? 40.0 * std::sqrt(lam) : 0.5 * (x[k] + x[k + 1]);
            moment += oracle::composite(
                [&](double y) {
                    return std::pow(std::abs(y - x[k]), p) * oracle::phi(y / std::sqrt(lam)) / std::sqrt(lam);
                },
                lo, hi, 200);
        }
        const double expect = std::numbers::sqrt2 * std::sin(std::numbers::pi * t / 2.0) * std::pow(moment, 1.0 / p);
        EXPECT_NEAR(e.value, expect, 5.0 * e.se + 1e-3 * expect) << N;
    }
}

TEST(SupErrorLp, Preconditions)
{
    Rng rng(18);
    EXPECT_THROW(sup_error_lp(driver_copy(), bm_pq(2), 2.0, 0.5, 999, rng), DomainError);
    EXPECT_THROW(sup_error_lp(driver_copy(), bm_pq(2), 2.0, 1.0, 1000, rng), DomainError);
    EXPECT_THROW(sup_error_lp(driver_copy(), bm_pq(2), 0.5, 0.5, 1000, rng), DomainError);
}

TEST(CoordinateError, OneDimensionalClosedForms)
{
    Rng rng(19);
    // Single point at 0: ||Z||_r = sd (2^{r/2} Gamma((r+1)/2) / sqrt(pi))^{1/r}.
    const auto one = lloyd_1d(2.0, 1);
    for (double r : {1.0, 2.0, 2.5, 4.0}) {
        const double m = std::pow(2.0, r / 2.0) * std::tgamma((r + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
        EXPECT_NEAR(coordinate_error_lr(one, r, rng).value, std::sqrt(2.0) * std::pow(m, 1.0 / r), 1e-10) << r;
    }
    const auto two = lloyd_1d(1.0, 2);
    EXPECT_NEAR(coordinate_error_lr(two, 2.0, rng).value, std::sqrt(1.0 - 2.0 / std::numbers::pi), 1e-10);
}

TEST(CoordinateError, MonteCarloAgreesWithProductFactors)
{
    // Product codebook of 1-D pieces: squared L^2 errors add up.
    const std::vector<double> lam{1.0, 0.25};
    const auto cb = product_quantizer(lam, 8);
    Rng rng(20);
    const auto e = coordinate_error_lr(cb, 2.0, rng, 400000);
    EXPECT_NEAR(e.value * e.value, cb.distortion, 5.0 * 2.0 * e.value * e.se);
}

TEST(RateFit, OneQuantizedCoordinate)
{
    Rng rng(21);
    const std::vector<std::size_t> Ns{1, 2, 4, 8, 16, 32, 64};
    const auto fit = rate_fit(driver_copy(), bm_basis(), {1}, 2.0, 0.99, Ns, rng);
    EXPECT_NEAR(fit.slope, -1.0, 0.3);
    EXPECT_LT(fit.ci_low, fit.slope);
    EXPECT_GT(fit.ci_high, fit.slope);
    ASSERT_EQ(fit.rows.size(), Ns.size());
    for (const auto& r : fit.rows) {
        EXPECT_GT(r.error.value, 0.0);
        EXPECT_GT(r.quant_err.value, 0.0);
    }
}

TEST(RateFit, TwoQuantizedCoordinates)
{
    Rng rng(22);
    const std::vector<std::size_t> Ns{1, 2, 4, 8, 16};
    const auto fit = rate_fit(driver_copy(), bm_basis(), {1, 2}, 2.0, 0.99, Ns, rng);
    EXPECT_NEAR(fit.slope, -0.5, 0.3);
}

TEST(RateFit, NeedsADecade)
{
    Rng rng(23);
    const std::vector<std::size_t> Ns{2, 4, 8};
    EXPECT_THROW(rate_fit(driver_copy(), bm_basis(), {1}, 2.0, 0.99, Ns, rng), DomainError);
}

TEST(TheoremBound, DecreasesToZero)
{
    const TheoremConstants k{1.0, 1.0, 1.0};
    double prev = std::numeric_limits<double>::infinity();
    for (double e : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        const double b = theorem_bound(2.0, 0.5, e, k);
        EXPECT_LT(b, prev) << e;
        EXPECT_GE(b, e);
        prev = b;
    }
    EXPECT_LT(prev, 3e-3);
    EXPECT_LT(theorem_bound(2.0, 0.5, 1e-100, k), 1e-85);
}

TEST(TheoremBound, MatchesTheBisectionOracle)
{
    const TheoremConstants k{1.5, 0.7, 2.0};
    for (double e : {0.3, 1e-2, 1e-5}) {
        for (double p : {1.5, 2.0, 4.0}) {
            const double q = p / (p - 1.0);
            const double w = oracle::lambert_w_minus1_bisect(-std::pow(e, 2.0 * q) / k.B);
            EXPECT_NEAR(theorem_bound(p, 0.1, e, k), k.C * std::exp(k.A * std::sqrt(-w)) * e,
                        1e-12 * theorem_bound(p, 0.1, e, k))
                << e << " " << p;
        }
    }
}

TEST(TheoremBound, BelowTheSmallestNormalArgument)
{
    // e^4 falls below the smallest normal double near e = 1.2213e-77. The
    // oracle itself loses digits once exp(w) is deep in the subnormal range.
    const TheoremConstants k{1.0, 1.0, 1.0};
    for (double e : {1.2214e-77, 1.2212e-77, 1e-78}) {
        const double w = oracle::lambert_w_minus1_bisect(-std::pow(e, 4.0));
        EXPECT_NEAR(theorem_bound(2.0, 0.5, e, k) / e, std::exp(std::sqrt(-w)), 1e-9 * std::exp(std::sqrt(-w)))
            << e;
    }
}

TEST(TheoremBound, IncreasingAwayFromTheBranchPoint)
{
    const TheoremConstants k{1.0, 1.0, 1.0};
    double prev = 0.0;
    for (double e = 1e-8; e < 1e-2; e *= 1.5) {
        const double b = theorem_bound(2.0, 0.5, e, k);
        EXPECT_GT(b, prev) << e;
        prev = b;
    }
}

TEST(TheoremBound, VacuousAndInvalidInputs)
{
    const TheoremConstants k{1.0, 1.0, 1.0};
    EXPECT_THROW(theorem_bound(2.0, 0.5, 0.9, k), BoundVacuousError);
    EXPECT_THROW(theorem_bound(2.0, 0.5, 1.0, k), BoundVacuousError);
    EXPECT_THROW(theorem_bound(1.0, 0.5, 0.1, k), DomainError);
    EXPECT_THROW(theorem_bound(2.0, 0.0, 0.1, k), DomainError);
    EXPECT_THROW(theorem_bound(2.0, 0.5, 0.0, k), DomainError);
    EXPECT_THROW(theorem_bound(2.0, 0.5, 0.1, {1.0, 0.0, 1.0}), DomainError);
}

TEST(TheoremConstants, FitCoversTheCalibrationRun)
{
    const std::vector<double> q_err{0.3, 0.1, 0.03, 0.01};
    std::vector<LpEstimate> est;
    for (double e : q_err) est.push_back({2.0 * e * (1.0 + 0.5 * std::log(1.0 / e)), 0.01 * e, 1000});
    const auto k = fit_theorem_constants(2.0, q_err, est);
    EXPECT_GT(k.A, 0.0);
    EXPECT_GT(k.C, 0.0);
    EXPECT_NEAR(k.B, 2.0 * std::numbers::e * std::pow(0.3, 4.0), 1e-12);
    double slack = 1e300;
    for (std::size_t i = 0; i < q_err.size(); ++i) {
        const double b = theorem_bound(2.0, 0.5, q_err[i], k);
        EXPECT_GE(b, est[i].value + 4.0 * est[i].se * (1.0 - 1e-12));
        slack = std::min(slack, b / (est[i].value + 4.0 * est[i].se));
    }
    EXPECT_NEAR(slack, 1.0, 1e-12);
}

TEST(AlmostSureProxy, ErrorsEventuallyDecrease)
{
    std::vector<PartialQuantizer> pqs;
    for (std::size_t N = 1; N <= 64; N *= 2) pqs.push_back(bm_pq(N));
    const auto sde = SdeSpec::make(Coefficient::affine_clamped(0.0, -1.0, 5.0), Coefficient::sin_scaled(1.0, 1.0), 1.0);
    const double frac = eventual_monotone_fraction(sde, pqs, 0.99, 100, 100, 24);
    EXPECT_GE(frac, 0.9);
}

TEST(TheoremConstants, HeldOutRunsAreDominated)
{
    std::vector<PartialQuantizer> pqs;
    for (std::size_t N = 1; N <= 64; N *= 4) pqs.push_back(bm_pq(N));
    const auto sde = SdeSpec::make(Coefficient::sin_scaled(1.0, 1.0), Coefficient::affine_clamped(1.0, 0.5, 3.0), 0.0);
    Rng rng(25);
    const auto chk = theorem_bound_check(sde, pqs, 2.0, 0.5, 0.99, 1000, 10, rng);
    EXPECT_EQ(chk.quant_errs.size(), pqs.size());
    EXPECT_EQ(chk.worst_ratio.size(), 10u);
    EXPECT_GE(chk.dominated, 9u);
    for (std::size_t k = 0; k + 1 < pqs.size(); ++k) EXPECT_GT(chk.quant_errs[k], chk.quant_errs[k + 1]);
}
