#include "pfq/partial_quant.hpp"

#include "pfq/errors.hpp"
#include "pfq/numerics.hpp"
#include "pfq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace pfq {

namespace {

std::string format_number(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void require_finite(double v, const char* what)
{
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

// (mean of v)^{1/p} with the delta-method standard error.
LpEstimate lp_from_powers(std::span<const double> v, double p)
{
    const double n = static_cast<double>(v.size());
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
        s += x;
        s2 += x * x;
    }
    const double m = s / n;
    const double var = std::max(0.0, (s2 / n - m * m) * n / (n - 1.0));
    LpEstimate e;
    e.n = v.size();
    if (m > 0.0) {
        e.value = std::pow(m, 1.0 / p);
        e.se = e.value / (p * m) * std::sqrt(var / n);
    }
    return e;
}

// -W_{-1}(-x) for 0 < x < 1/e. Below the smallest normal double, L solves
// L - log L = -log x by fixed-point iteration.
double minus_w_minus1(double log_x)
{
    if (log_x > std::log(std::numeric_limits<double>::min())) return -lambert_w_minus1(-std::exp(log_x));
    const double l = -log_x;
    double L = l + std::log(l);
    for (int it = 0; it < 100; ++it) {
        const double next = l + std::log(L);
        if (std::abs(next - L) <= 1e-15 * L) return next;
        L = next;
    }
    return L;
}

double conjugate(double p) { return p / (p - 1.0); }

} // namespace

Coefficient Coefficient::constant(double c) { return {Kind::Constant, {c}}; }

Coefficient Coefficient::affine_clamped(double a, double b, double cap) { return {Kind::AffineClamped, {a, b, cap}}; }

Coefficient Coefficient::sin_scaled(double a, double omega) { return {Kind::SinScaled, {a, omega}}; }

double Coefficient::operator()(double, double x) const
{
    switch (kind) {
    case Kind::Constant: return params[0];
    case Kind::AffineClamped: return std::clamp(params[0] + params[1] * x, -params[2], params[2]);
    case Kind::SinScaled: return params[0] * std::sin(params[1] * x);
    }
    return 0.0;
}

double Coefficient::lipschitz() const
{
    switch (kind) {
    case Kind::Constant: return 0.0;
    case Kind::AffineClamped: return std::abs(params[1]);
    case Kind::SinScaled: return std::abs(params[0] * params[1]);
    }
    return 0.0;
}

double Coefficient::sup_norm() const
{
    switch (kind) {
    case Kind::Constant: return std::abs(params[0]);
    case Kind::AffineClamped: return params[1] == 0.0 ? std::min(std::abs(params[0]), params[2]) : params[2];
    case Kind::SinScaled: return params[1] == 0.0 ? 0.0 : std::abs(params[0]);
    }
    return 0.0;
}

double Coefficient::at_zero() const { return std::abs((*this)(0.0, 0.0)); }

std::string Coefficient::to_string() const
{
    std::string s;
    switch (kind) {
    case Kind::Constant: s = "const("; break;
    case Kind::AffineClamped: s = "affine_clamped("; break;
    case Kind::SinScaled: s = "sin_scaled("; break;
    }
    for (std::size_t k = 0; k < params.size(); ++k) s += (k ? "," : "") + format_number(params[k]);
    return s + ")";
}

void Coefficient::validate() const
{
    const std::size_t want = kind == Kind::Constant ? 1 : kind == Kind::AffineClamped ? 3 : 2;
    if (params.size() != want) throw DomainError("coefficient " + to_string() + " has the wrong parameter count");
    for (double v : params) require_finite(v, "coefficient parameter");
    if (kind == Kind::AffineClamped && !(params[2] > 0.0)) throw DomainError("affine_clamped cap must be positive");
}

Coefficient parse_coefficient(const std::string& text)
{
    const auto open = text.find('(');
    if (open == std::string::npos || text.back() != ')')
        throw DomainError("coefficient '" + text + "' is not of the form name(args)");
    const std::string name = text.substr(0, open);
    std::vector<double> args;
    std::stringstream in(text.substr(open + 1, text.size() - open - 2));
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw DomainError("coefficient '" + text + "': bad number '" + item + "'");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos)
            throw DomainError("coefficient '" + text + "': bad number '" + item + "'");
        args.push_back(v);
    }
    Coefficient c;
    if (name == "const") c.kind = Coefficient::Kind::Constant;
    else if (name == "affine_clamped") c.kind = Coefficient::Kind::AffineClamped;
    else if (name == "sin_scaled") c.kind = Coefficient::Kind::SinScaled;
    else throw DomainError("unknown coefficient '" + name + "'");
    c.params = std::move(args);
    c.validate();
    return c;
}

SdeSpec SdeSpec::make(Coefficient b, Coefficient sigma, double x0)
{
    b.validate();
    sigma.validate();
    SdeSpec s{b, sigma, x0, b.lipschitz(), sigma.lipschitz(), sigma.sup_norm()};
    s.validate();
    return s;
}

void SdeSpec::validate() const
{
    b.validate();
    sigma.validate();
    require_finite(x0, "x0");
    const auto below = [](double declared, double certified) {
        return !(declared >= certified * (1.0 - 1e-12));
    };
    if (below(b_lip, b.lipschitz())) throw DomainError("declared [b]_Lip is below the Lipschitz constant of b");
    if (below(sigma_lip, sigma.lipschitz()))
        throw DomainError("declared [sigma]_Lip is below the Lipschitz constant of sigma");
    if (below(sigma_max, sigma.sup_norm())) throw DomainError("declared [sigma]_max is below sup |sigma|");
}

void euler_solve_into(const SdeSpec& sde, std::span<const double> times, std::span<const double> driver,
                      std::span<double> out)
{
    if (driver.size() != times.size() || out.size() != times.size())
        throw DomainError("driver, grid and output sizes differ");
    if (times.empty()) return;
    double s = sde.x0;
    out[0] = s;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double t = times[k];
        s += sde.b(t, s) * (times[k + 1] - t) + sde.sigma(t, s) * (driver[k + 1] - driver[k]);
        if (!std::isfinite(s)) {
            std::ostringstream os;
            os << "Euler state is not finite at t = " << times[k + 1];
            throw NumericalError("blow_up", os.str());
        }
        out[k + 1] = s;
    }
}

Path euler_solve(const SdeSpec& sde, const Path& driver)
{
    Path out{driver.grid, std::vector<double>(driver.grid.size())};
    euler_solve_into(sde, driver.grid.points(), driver.values, out.values);
    return out;
}

void PartialQuantizer::validate() const
{
    if (I.size() == 0) throw PreconditionError("index set must be non-empty");
    I.check_within(basis.m());
    codebook.validate();
    if (codebook.d != I.size()) throw DomainError("codebook dimension must equal |I|");
    for (std::size_t j = 0; j < I.size(); ++j)
        if (std::abs(codebook.lambdas[j] - basis.eigenvalue(I[j])) > 1e-9 * basis.eigenvalue(I[j]))
            throw DomainError("codebook variances do not match the eigenvalues of I");
}

PartialQuantizer make_partial_quantizer(const KLBasis& basis, const IndexSet& I, std::size_t N, Rng& rng,
                                        std::size_t samples, std::size_t workers)
{
    if (I.size() == 0) throw PreconditionError("index set must be non-empty");
    I.check_within(basis.m());
    if (N == 0) throw DomainError("codebook size must be at least 1");
    std::vector<double> lam;
    for (std::size_t i : I) lam.push_back(basis.eigenvalue(i));
    PartialQuantizer pq{basis, I, {}};
    if (lam.size() == 1) pq.codebook = lloyd_1d(lam[0], N);
    else if (N == 1) pq.codebook = product_quantizer(lam, 1);
    else {
        LloydOptions lo;
        lo.workers = workers;
        pq.codebook = lloyd_md(lam, N, samples ? samples : std::max<std::size_t>(20000 * N, 200000), rng, lo);
    }
    return pq;
}

PartialQuantization partial_quantize_path(const PartialQuantizer& pq, const Path& path)
{
    if (path.values.size() != path.grid.size()) throw DomainError("path values do not match its grid");
    PartialQuantization out{0, path};
    out.index = GridPartialQuantizer(pq, path.grid).apply(out.path.values);
    return out;
}

GridPartialQuantizer::GridPartialQuantizer(const PartialQuantizer& pq, const TimeGrid& grid)
    : codebook_(pq.codebook), proj_(pq.basis, pq.I, grid)
{
    pq.validate();
}

std::size_t GridPartialQuantizer::cell(std::span<const double> values) const
{
    std::vector<double> y(codebook_.d);
    proj_.project_into(values, y);
    return nearest_neighbor(codebook_, y);
}

std::size_t GridPartialQuantizer::apply(std::span<double> values) const
{
    std::vector<double> y(codebook_.d);
    proj_.project_into(values, y);
    const std::size_t k = nearest_neighbor(codebook_, y);
    const auto g = codebook_.point(k);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = g[j] - y[j];
    proj_.add_combination(y, values);
    return k;
}

StrataSampler::StrataSampler(const PartialQuantizer& pq, const TimeGrid& grid)
    : sampler_(pq.basis.spec(), grid), quant_(pq, grid), draws_(pq.size(), 0), accepted_(pq.size(), 0)
{
}

double StrataSampler::acceptance(std::size_t k) const
{
    const auto n = draws_.at(k);
    return n ? static_cast<double>(accepted_[k]) / static_cast<double>(n) : 0.0;
}

void StrataSampler::sample_into(std::size_t k, std::span<double> out, Rng& rng)
{
    if (k >= draws_.size()) throw DomainError("cell index out of range");
    for (;;) {
        sampler_.sample_into(out, rng);
        ++draws_[k];
        if (quant_.cell(out) == k) {
            ++accepted_[k];
            return;
        }
        if (draws_[k] >= kMinDraws && acceptance(k) < kMinAcceptance) {
            std::ostringstream os;
            os << "cell " << k << " accepted " << accepted_[k] << " of " << draws_[k]
               << " draws; sample the cell-conditioned Gaussian coordinates directly";
            throw CellTooSmallError(os.str());
        }
    }
}

Path StrataSampler::sample(std::size_t k, Rng& rng)
{
    Path p{sampler_.grid(), std::vector<double>(sampler_.grid().size())};
    sample_into(k, p.values, rng);
    return p;
}

Path strata_sample(const PartialQuantizer& pq, std::size_t k, const TimeGrid& grid, Rng& rng)
{
    return StrataSampler(pq, grid).sample(k, rng);
}

TimeGrid driver_grid(const TimeGrid& solve, double T)
{
    if (!(solve.back() < T)) throw DomainError("solve grid must end before T");
    double h = 0.0;
    for (std::size_t k = 0; k + 1 < solve.size(); ++k) h = std::max(h, solve[k + 1] - solve[k]);
    std::vector<double> pts(solve.points().begin(), solve.points().end());
    const double t0 = solve.back();
    const auto steps = static_cast<std::size_t>(std::ceil((T - t0) / h * (1.0 - 1e-12)));
    for (std::size_t j = 1; j < steps; ++j)
        pts.push_back(t0 + (T - t0) * static_cast<double>(j) / static_cast<double>(steps));
    pts.push_back(T);
    return TimeGrid(std::move(pts));
}

TimeGrid solve_grid(double T, double t, std::size_t steps)
{
    if (!(t > 0.0) || !(t < T)) throw DomainError("solve horizon must lie in (0, T)");
    if (steps < 2) throw DomainError("solve grid needs at least 2 steps");
    std::vector<double> pts;
    for (std::size_t k = 0;; ++k) {
        const double v = T * static_cast<double>(k) / static_cast<double>(steps);
        if (!(v < t - 1e-12 * T)) break;
        pts.push_back(v);
    }
    pts.push_back(t);
    return TimeGrid(std::move(pts));
}

PairedSolver::PairedSolver(const SdeSpec& sde, const PartialQuantizer& pq, const TimeGrid& grid)
    : sde_(sde), grid_(grid), full_(driver_grid(grid, pq.basis.spec().T)), sampler_(pq.basis.spec(), full_),
      quant_(pq, full_)
{
    sde_.validate();
    if (!pq.basis.spec().is_semimartingale())
        throw UnsupportedFamilyError("SDE drivers must be semimartingales");
}

void PairedSolver::sample_driver(std::span<double> out, Rng& rng) const { sampler_.sample_into(out, rng); }

PairedPaths PairedSolver::solve(std::span<const double> driver) const
{
    if (driver.size() != full_.size()) throw DomainError("driver does not match the driver grid");
    const std::size_t n = grid_.size();
    std::vector<double> tilde(driver.begin(), driver.end());
    PairedPaths out{{grid_, std::vector<double>(n)}, {grid_, std::vector<double>(n)}, quant_.apply(tilde)};
    euler_solve_into(sde_, grid_.points(), driver.first(n), out.S.values);
    euler_solve_into(sde_, grid_.points(), std::span<const double>(tilde).first(n), out.S_tilde.values);
    return out;
}

PairedPaths PairedSolver::solve(Rng& rng) const
{
    std::vector<double> x(full_.size());
    sample_driver(x, rng);
    return solve(x);
}

double PairedSolver::sup_error(std::span<const double> driver) const
{
    const auto pp = solve(driver);
    double m = 0.0;
    for (std::size_t k = 0; k < grid_.size(); ++k) m = std::max(m, std::abs(pp.S.values[k] - pp.S_tilde.values[k]));
    return m;
}

PairedPaths paired_solve(const SdeSpec& sde, const PartialQuantizer& pq, const TimeGrid& grid, Rng& rng)
{
    return PairedSolver(sde, pq, grid).solve(rng);
}

LpEstimate sup_error_lp(const SdeSpec& sde, const PartialQuantizer& pq, double p, double t, std::size_t n_paths,
                        Rng& rng, std::size_t steps, std::size_t workers)
{
    if (!(p >= 1.0)) throw DomainError("exponent p must be at least 1");
    if (n_paths < 1000) throw DomainError("sup_error_lp needs at least 1000 paths");
    const PairedSolver solver(sde, pq, solve_grid(pq.basis.spec().T, t, steps));
    std::vector<double> powers(n_paths);
    for_each_chunk(n_paths, rng.next_u64(), workers, [&](std::size_t, Rng& r, std::size_t b, std::size_t e) {
        std::vector<double> x(solver.full_grid().size());
        for (std::size_t i = b; i < e; ++i) {
            solver.sample_driver(x, r);
            powers[i] = std::pow(solver.sup_error(x), p);
        }
    });
    return lp_from_powers(powers, p);
}

LpEstimate coordinate_error_lr(const Codebook& cb, double r, Rng& rng, std::size_t samples, std::size_t workers)
{
    if (!(r >= 1.0)) throw DomainError("exponent r must be at least 1");
    cb.validate();
    if (cb.d == 1) {
        std::vector<double> x(cb.points);
        std::sort(x.begin(), x.end());
        const double sd = std::sqrt(cb.lambdas[0]);
        // In units of sd; the Gaussian mass beyond 12 + |x| is below 1e-32.
        double total = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double c = x[k] / sd;
            const double lo = k == 0 ? c - 12.0 - std::abs(c) : 0.5 * (x[k - 1] + x[k]) / sd;
            const double hi = k + 1 == x.size() ? c + 12.0 + std::abs(c) : 0.5 * (x[k] + x[k + 1]) / sd;
            const auto f = [&](double z) { return std::pow(std::abs(z - c), r) * normal_pdf(z); };
            total += integrate_adaptive(f, lo, c) + integrate_adaptive(f, c, hi);
        }
        return {sd * std::pow(total, 1.0 / r), 0.0, 0};
    }
    if (samples < 2) throw DomainError("Monte Carlo error needs at least 2 draws");
    std::vector<double> sd(cb.d);
    for (std::size_t j = 0; j < cb.d; ++j) sd[j] = std::sqrt(cb.lambdas[j]);
    std::vector<double> powers(samples);
    for_each_chunk(samples, rng.next_u64(), workers, [&](std::size_t, Rng& g, std::size_t b, std::size_t e) {
        std::vector<double> z(cb.d);
        for (std::size_t i = b; i < e; ++i) {
            for (std::size_t j = 0; j < cb.d; ++j) z[j] = sd[j] * g.normal();
            double d2 = 0.0;
            nearest_neighbor(cb, z, d2);
            powers[i] = std::pow(d2, 0.5 * r);
        }
    });
    return lp_from_powers(powers, r);
}

RateFit rate_fit(const SdeSpec& sde, const KLBasis& basis, const IndexSet& I, double p, double t,
                 std::span<const std::size_t> Ns, Rng& rng, const RateOptions& opts)
{
    if (Ns.size() < 2) throw DomainError("rate fit needs at least two codebook sizes");
    const auto [lo, hi] = std::minmax_element(Ns.begin(), Ns.end());
    if (*lo == 0) throw DomainError("codebook size must be at least 1");
    if (*hi < 10 * *lo) throw DomainError("codebook sizes must span at least a decade");
    if (!(opts.epsilon > 0.0)) throw DomainError("epsilon must be positive");

    RateFit fit;
    std::vector<double> lx, ly;
    for (std::size_t N : Ns) {
        const auto pq = make_partial_quantizer(basis, I, N, rng, opts.samples, opts.workers);
        RateRow row;
        row.N = N;
        row.error = sup_error_lp(sde, pq, p, t, opts.paths, rng, opts.steps, opts.workers);
        row.quant_err = coordinate_error_lr(pq.codebook, p + opts.epsilon, rng, 200000, opts.workers);
        if (!(row.error.value > 0.0) || !std::isfinite(row.error.value)) {
            std::ostringstream os;
            os << "sup error at N = " << N << " is " << row.error.value << "; the log-log fit is degenerate";
            throw NumericalError("fit_degenerate", os.str());
        }
        lx.push_back(std::log(static_cast<double>(N)));
        ly.push_back(std::log(row.error.value));
        fit.rows.push_back(row);
    }
    const auto lf = fit_line(lx, ly);
    fit.slope = lf.slope;
    fit.slope_se = lf.slope_se;
    fit.ci_low = lf.slope - 1.96 * lf.slope_se;
    fit.ci_high = lf.slope + 1.96 * lf.slope_se;
    return fit;
}

double theorem_bound(double p, double epsilon, double quant_err, const TheoremConstants& k)
{
    if (!(p > 1.0)) throw DomainError("theorem bound needs p > 1");
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (!(quant_err > 0.0) || !std::isfinite(quant_err)) throw DomainError("quantization error must be positive");
    if (!(k.C > 0.0) || !(k.A > 0.0) || !(k.B > 0.0)) throw DomainError("constants C, A, B must be positive");
    const double q = conjugate(p);
    const double log_x = 2.0 * q * std::log(quant_err) - std::log(k.B);
    if (!(log_x < -1.0)) {
        std::ostringstream os;
        os << "W_{-1} argument " << -std::exp(log_x) << " is outside (-1/e, 0)";
        throw BoundVacuousError(os.str());
    }
    return k.C * std::exp(k.A * std::sqrt(minus_w_minus1(log_x))) * quant_err;
}

TheoremConstants fit_theorem_constants(double p, std::span<const double> quant_errs,
                                       std::span<const LpEstimate> estimates)
{
    if (!(p > 1.0)) throw DomainError("theorem bound needs p > 1");
    if (quant_errs.size() != estimates.size() || quant_errs.empty())
        throw DomainError("calibration needs matching, non-empty error lists");
    const double q = conjugate(p);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < quant_errs.size(); ++i) {
        if (!(quant_errs[i] > 0.0) || !(estimates[i].value > 0.0))
            throw DomainError("calibration errors must be positive");
        top = std::max(top, 2.0 * q * std::log(quant_errs[i]));
    }
    TheoremConstants k;
    const double log_B = 1.0 + std::log(2.0) + top;
    k.B = std::exp(log_B);

    std::vector<double> u(quant_errs.size()), y(quant_errs.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = std::sqrt(minus_w_minus1(2.0 * q * std::log(quant_errs[i]) - log_B));
        y[i] = std::log(estimates[i].value / quant_errs[i]);
    }
    k.A = 1e-6;
    const auto [ulo, uhi] = std::minmax_element(u.begin(), u.end());
    if (u.size() >= 2 && *uhi > *ulo) k.A = std::max(k.A, fit_line(u, y).slope);

    k.C = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        k.C = std::max(k.C, (estimates[i].value + 4.0 * estimates[i].se) / (std::exp(k.A * u[i]) * quant_errs[i]));
    return k;
}

BoundCheck theorem_bound_check(const SdeSpec& sde, std::span<const PartialQuantizer> quantizers, double p,
                               double epsilon, double t, std::size_t paths, std::size_t held_out, Rng& rng,
                               std::size_t workers)
{
    if (quantizers.empty()) throw DomainError("need at least one codebook");
    if (held_out == 0) throw DomainError("need at least one held-out run");
    BoundCheck out;
    for (const auto& pq : quantizers) {
        out.quant_errs.push_back(coordinate_error_lr(pq.codebook, p + epsilon, rng, 200000, workers).value);
        out.calibration.push_back(sup_error_lp(sde, pq, p, t, paths, rng, 512, workers));
    }
    out.constants = fit_theorem_constants(p, out.quant_errs, out.calibration);
    for (std::size_t s = 0; s < held_out; ++s) {
        double worst = 0.0;
        for (std::size_t k = 0; k < quantizers.size(); ++k) {
            const double est = sup_error_lp(sde, quantizers[k], p, t, paths, rng, 512, workers).value;
            worst = std::max(worst, est / theorem_bound(p, epsilon, out.quant_errs[k], out.constants));
        }
        out.worst_ratio.push_back(worst);
        if (worst <= 1.0) ++out.dominated;
    }
    return out;
}

double eventual_monotone_fraction(const SdeSpec& sde, std::span<const PartialQuantizer> quantizers, double t,
                                  std::size_t seeds, std::size_t paths, std::uint64_t base_seed,
                                  std::size_t workers)
{
    if (quantizers.size() < 2) throw DomainError("need at least two codebooks");
    if (seeds == 0 || paths == 0) throw DomainError("seed and path counts must be positive");
    const double T = quantizers[0].basis.spec().T;
    const auto grid = solve_grid(T, t);
    std::vector<PairedSolver> solvers;
    for (const auto& pq : quantizers) {
        if (!(pq.basis.spec() == quantizers[0].basis.spec()) || pq.I.indices() != quantizers[0].I.indices())
            throw DomainError("codebooks must share the process and the index set");
        solvers.emplace_back(sde, pq, grid);
    }
    const std::size_t L = solvers.size();
    std::vector<char> monotone(seeds, 0);
    for_each_chunk(
        seeds, base_seed, workers,
        [&](std::size_t, Rng& r, std::size_t b, std::size_t e) {
            std::vector<double> x(solvers[0].full_grid().size());
            for (std::size_t s = b; s < e; ++s) {
                std::vector<double> err(L, 0.0);
                for (std::size_t i = 0; i < paths; ++i) {
                    solvers[0].sample_driver(x, r);
                    for (std::size_t j = 0; j < L; ++j) {
                        const double v = solvers[j].sup_error(x);
                        err[j] += v * v;
                    }
                }
                bool ok = true;
                for (std::size_t j = L / 2; j + 1 < L; ++j) ok = ok && err[j + 1] <= err[j];
                monotone[s] = ok;
            }
        },
        1);
    return static_cast<double>(std::count(monotone.begin(), monotone.end(), 1)) / static_cast<double>(seeds);
}

} // namespace pfq
