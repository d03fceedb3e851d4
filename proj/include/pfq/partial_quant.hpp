#pragma once

#include "pfq/kl_basis.hpp"
#include "pfq/process.hpp"
#include "pfq/quantizer.hpp"
#include "pfq/random.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pfq {

// SDE coefficients (t, x) -> value from a fixed family, so that the
// Lipschitz and sup-norm constants are known exactly.
//   const(c)                 c
//   affine_clamped(a, b, cap) clamp(a + b x, -cap, cap)
//   sin_scaled(a, w)          a sin(w x)
struct Coefficient {
    enum class Kind { Constant, AffineClamped, SinScaled };

    Kind kind = Kind::Constant;
    std::vector<double> params{0.0};

    static Coefficient constant(double c);
    static Coefficient affine_clamped(double a, double b, double cap);
    static Coefficient sin_scaled(double a, double omega);

    double operator()(double t, double x) const;
    // Lipschitz constant in x.
    double lipschitz() const;
    // sup over (t, x) of |value|.
    double sup_norm() const;
    // sup over t of |value(t, 0)|.
    double at_zero() const;

    std::string to_string() const;
    void validate() const;
};

// Parses "const(1)", "affine_clamped(0,-1,10)" or "sin_scaled(0.5,2)".
Coefficient parse_coefficient(const std::string& text);

struct SdeSpec {
    Coefficient b;
    Coefficient sigma;
    double x0 = 0.0;
    double b_lip = 0.0;
    double sigma_lip = 0.0;
    double sigma_max = 0.0;

    // Declares the certified constants of the coefficients.
    static SdeSpec make(Coefficient b, Coefficient sigma, double x0);

    // Throws DomainError if a declared constant is below the certified one or
    // x0 is not finite.
    void validate() const;
};

// Euler scheme in the Ito sense on the driver's own grid.
Path euler_solve(const SdeSpec& sde, const Path& driver);
void euler_solve_into(const SdeSpec& sde, std::span<const double> times, std::span<const double> driver,
                      std::span<double> out);

struct PartialQuantizer {
    KLBasis basis;
    IndexSet I;
    Codebook codebook;

    std::size_t size() const noexcept { return codebook.size(); }
    // Codebook dimension |I| and variances (lambda_i), i in I, in index order.
    void validate() const;
};

// |I| = 1: lloyd_1d; N = 1: the origin; otherwise lloyd_md on `samples`
// draws (0 picks max(2e4 N, 2e5)).
PartialQuantizer make_partial_quantizer(const KLBasis& basis, const IndexSet& I, std::size_t N, Rng& rng,
                                        std::size_t samples = 0, std::size_t workers = 1);

struct PartialQuantization {
    std::size_t index = 0;
    Path path;
};

// Y_I by trapezoid projection, k = nearest codeword, path + sum_i (gamma_{k,i} - Y_i) e_i.
PartialQuantization partial_quantize_path(const PartialQuantizer& pq, const Path& path);

// Partial quantization on a fixed grid with the projection precomputed.
class GridPartialQuantizer {
public:
    GridPartialQuantizer(const PartialQuantizer& pq, const TimeGrid& grid);

    // Replaces values by their partial quantization and returns the cell.
    std::size_t apply(std::span<double> values) const;
    std::size_t cell(std::span<const double> values) const;

    const TimeGrid& grid() const noexcept { return proj_.grid(); }

private:
    Codebook codebook_;
    CoordinateProjector proj_;
};

// Rejection sampler for L(X | nearest codeword of Y_I = k).
class StrataSampler {
public:
    StrataSampler(const PartialQuantizer& pq, const TimeGrid& grid);

    // Throws CellTooSmallError once 1e5 draws have been made for cell k and
    // fewer than one in 1e4 was accepted.
    void sample_into(std::size_t k, std::span<double> out, Rng& rng);
    Path sample(std::size_t k, Rng& rng);

    std::uint64_t draws(std::size_t k) const { return draws_.at(k); }
    std::uint64_t accepted(std::size_t k) const { return accepted_.at(k); }
    double acceptance(std::size_t k) const;

    static constexpr std::uint64_t kMinDraws = 100000;
    static constexpr double kMinAcceptance = 1e-4;

private:
    PathSampler sampler_;
    GridPartialQuantizer quant_;
    std::vector<std::uint64_t> draws_;
    std::vector<std::uint64_t> accepted_;
};

Path strata_sample(const PartialQuantizer& pq, std::size_t k, const TimeGrid& grid, Rng& rng);

// The solve grid extended to T by equal steps no longer than its largest one,
// so that the driver can be projected on [0, T].
TimeGrid driver_grid(const TimeGrid& solve_grid, double T);

// Uniform grid of step T / steps on [0, t], with t appended when it is off the lattice.
TimeGrid solve_grid(double T, double t, std::size_t steps = 512);

struct PairedPaths {
    Path S;
    Path S_tilde;
    std::size_t index = 0;
};

// S driven by X and S~ driven by the partial quantization of the same X.
class PairedSolver {
public:
    // The solve grid must start at 0 and end before T.
    PairedSolver(const SdeSpec& sde, const PartialQuantizer& pq, const TimeGrid& grid);

    // Draws X on full_grid().
    void sample_driver(std::span<double> out, Rng& rng) const;
    PairedPaths solve(std::span<const double> driver) const;
    PairedPaths solve(Rng& rng) const;
    // sup over the solve grid of |S - S~|.
    double sup_error(std::span<const double> driver) const;

    const TimeGrid& grid() const noexcept { return grid_; }
    const TimeGrid& full_grid() const noexcept { return full_; }

private:
    SdeSpec sde_;
    TimeGrid grid_;
    TimeGrid full_;
    PathSampler sampler_;
    GridPartialQuantizer quant_;
};

// grid defaults to solve_grid(T, 0.99 T).
PairedPaths paired_solve(const SdeSpec& sde, const PartialQuantizer& pq, const TimeGrid& grid, Rng& rng);

struct LpEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

// (E sup_{v <= t} |S_v - S~_v|^p)^{1/p} over n_paths paired solves on
// solve_grid(T, t, steps); the standard error comes from the delta method.
LpEstimate sup_error_lp(const SdeSpec& sde, const PartialQuantizer& pq, double p, double t, std::size_t n_paths,
                        Rng& rng, std::size_t steps = 512, std::size_t workers = 1);

// ||Y_I - Y^_I||_r: Gauss-Legendre cell integrals in 1-D, Monte Carlo otherwise.
LpEstimate coordinate_error_lr(const Codebook& cb, double r, Rng& rng, std::size_t samples = 200000,
                               std::size_t workers = 1);

struct RateRow {
    std::size_t N = 0;
    LpEstimate error;
    // ||Y_I - Y^_I||_{p + epsilon}
    LpEstimate quant_err;
};

struct RateFit {
    double slope = 0.0;
    double slope_se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<RateRow> rows;
};

struct RateOptions {
    std::size_t paths = 1000;
    std::size_t steps = 512;
    // Training cloud for |I| >= 2 (0: make_partial_quantizer default).
    std::size_t samples = 0;
    double epsilon = 0.5;
    std::size_t workers = 1;
};

// Least squares of log sup_error_lp against log N with a 95% interval.
// Ns must span at least a decade.
RateFit rate_fit(const SdeSpec& sde, const KLBasis& basis, const IndexSet& I, double p, double t,
                 std::span<const std::size_t> Ns, Rng& rng, const RateOptions& opts = {});

struct TheoremConstants {
    double C = 1.0;
    double A = 1.0;
    double B = 1.0;
};

// C exp(A sqrt(-W_{-1}(-e^{2q} / B))) e with q = p / (p - 1) and e the
// L^{p+epsilon} coordinate error. Throws BoundVacuousError when the W_{-1}
// argument leaves (-1/e, 0).
double theorem_bound(double p, double epsilon, double quant_err, const TheoremConstants& k);

// Constants from a calibration run: B = 2e max e^{2q} keeps every argument
// inside the domain, A is the regression slope of log(estimate / e) on
// sqrt(-W_{-1}(-e^{2q} / B)) (floored at 1e-6), and C is the smallest value
// for which the bound covers every estimate plus 4 standard errors.
TheoremConstants fit_theorem_constants(double p, std::span<const double> quant_errs,
                                       std::span<const LpEstimate> estimates);

struct BoundCheck {
    TheoremConstants constants;
    // ||Y_I - Y^_I||_{p+epsilon} per codebook, and the calibration estimates.
    std::vector<double> quant_errs;
    std::vector<LpEstimate> calibration;
    // Per held-out run: max over the codebooks of estimate / bound.
    std::vector<double> worst_ratio;
    std::size_t dominated = 0;
};

// Two-run check: constants fitted on one sup_error_lp estimate per codebook,
// then `held_out` fresh runs counted as dominated when every estimate is at
// most the bound.
BoundCheck theorem_bound_check(const SdeSpec& sde, std::span<const PartialQuantizer> quantizers, double p,
                               double epsilon, double t, std::size_t paths, std::size_t held_out, Rng& rng,
                               std::size_t workers = 1);

// For each seed, per-N sup errors over `paths` paired solves with common
// drivers; returns the fraction of seeds whose sequence is non-increasing
// over its second half.
double eventual_monotone_fraction(const SdeSpec& sde, std::span<const PartialQuantizer> quantizers, double t,
                                  std::size_t seeds, std::size_t paths, std::uint64_t base_seed,
                                  std::size_t workers = 1);

} // namespace pfq
