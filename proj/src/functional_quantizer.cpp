#include "pfq/functional_quantizer.hpp"

#include "pfq/errors.hpp"
#include "pfq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pfq {

namespace {

double dot(std::span<const double> v, std::span<const double> w)
{
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += v[k] * w[k];
    return s;
}

double integral_eval(std::span<const double> v, std::span<const double> w) { return dot(v, w); }

double l2norm_eval(std::span<const double> v, std::span<const double> w)
{
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += w[k] * v[k] * v[k];
    return std::sqrt(s);
}

double square(double x) { return x * x; }
double exponential(double x) { return std::exp(x); }

double sqrt_T(double T) { return std::sqrt(T); }
double one(double) { return 1.0; }
double zero(double) { return 0.0; }
double two_T(double T) { return 2.0 * T; }

McEstimate mean_and_se(std::span<const double> values)
{
    double s = 0.0, s2 = 0.0;
    for (double v : values) {
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(values.size());
    const double mean = s / n;
    const double var = std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

} // namespace

Eigen::MatrixXd FunctionalQuantizer::paths(std::span<const double> times) const
{
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), std::size_t{1});
    const Eigen::MatrixXd e = basis.evaluate(idx, times);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gamma(
        codebook.points.data(), static_cast<Eigen::Index>(codebook.size()), static_cast<Eigen::Index>(dim));
    return gamma * e;
}

FunctionalQuantizer make_fq(const KLBasis& basis, Codebook codebook)
{
    if (codebook.d == 0 || codebook.d > basis.m()) throw DomainError("codebook dimension exceeds the basis");
    for (std::size_t j = 0; j < codebook.d; ++j)
        if (std::abs(codebook.lambdas[j] - basis.eigenvalue(j + 1)) > 1e-9 * basis.eigenvalue(1))
            throw DomainError("codebook variances do not match the basis eigenvalues");
    FunctionalQuantizer fq;
    fq.basis = basis;
    fq.dim = codebook.d;
    fq.tail = basis.tail_sum(codebook.d);
    fq.total_distortion = fq.tail + codebook.distortion;
    fq.codebook = std::move(codebook);
    return fq;
}

FunctionalQuantizer build_fq(const KLBasis& basis, std::size_t N, std::size_t m_max, Rng& rng,
                             const FqOptions& opts)
{
    if (N == 0) throw DomainError("codebook size must be at least 1");
    if (m_max == 0 || m_max > basis.m()) throw DomainError("m_max must lie in [1, basis.m]");
    if (opts.eval_samples < 2) throw DomainError("evaluation cloud needs at least 2 draws");
    const std::size_t samples = opts.samples ? opts.samples : std::max<std::size_t>(20000 * N, 200000);
    const auto& lam = basis.eigenvalues();

    std::vector<Codebook> books;
    LloydOptions lo;
    lo.workers = opts.workers;
    for (std::size_t m = 1; m <= m_max; ++m) {
        const std::span<const double> block(lam.data(), m);
        if (m == 1) books.push_back(lloyd_1d(lam[0], N));
        else if (N == 1) books.push_back(product_quantizer(block, 1));
        else books.push_back(lloyd_md(block, N, samples, rng, lo));
    }

    // Common random numbers: every rank is scored on the same draws, so the
    // rank comparison sees paired differences.
    const std::size_t n = opts.eval_samples;
    std::vector<double> sd(m_max);
    for (std::size_t j = 0; j < m_max; ++j) sd[j] = std::sqrt(lam[j]);
    std::vector<double> loss(n * m_max);
    for_each_chunk(n, rng.next_u64(), opts.workers, [&](std::size_t, Rng& r, std::size_t b, std::size_t e) {
        std::vector<double> z(m_max);
        for (std::size_t i = b; i < e; ++i) {
            for (std::size_t j = 0; j < m_max; ++j) z[j] = sd[j] * r.normal();
            for (std::size_t m = 1; m <= m_max; ++m) {
                double d2 = 0.0;
                nearest_neighbor(books[m - 1], std::span<const double>(z.data(), m), d2);
                loss[i * m_max + m - 1] = d2;
            }
        }
    });

    std::vector<double> tails(m_max), shared(m_max, 0.0);
    for (std::size_t m = 1; m <= m_max; ++m) {
        tails[m - 1] = basis.tail_sum(m);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += loss[i * m_max + m - 1];
        shared[m - 1] = tails[m - 1] + s / static_cast<double>(n);
    }
    const std::size_t best = static_cast<std::size_t>(std::min_element(shared.begin(), shared.end()) - shared.begin());

    std::vector<double> diff_se(m_max, 0.0);
    std::vector<double> diff(n);
    for (std::size_t m = 0; m < m_max; ++m) {
        for (std::size_t i = 0; i < n; ++i) diff[i] = loss[i * m_max + m] - loss[i * m_max + best];
        diff_se[m] = mean_and_se(diff).se;
    }

    std::size_t chosen = best;
    std::vector<std::size_t> band;
    for (std::size_t m = 0; m < m_max; ++m) {
        const double gap = shared[m] - shared[best];
        if (gap <= 3.0 * diff_se[m] + opts.tie_rel * shared[best]) {
            band.push_back(m + 1);
            chosen = std::min(chosen, m);
        }
    }

    FunctionalQuantizer fq = make_fq(basis, books[chosen]);
    for (std::size_t m = 1; m <= m_max; ++m) {
        const auto& cb = books[m - 1];
        fq.selection.push_back({m, tails[m - 1], cb.distortion, tails[m - 1] + cb.distortion, shared[m - 1],
                                diff_se[m - 1]});
    }
    for (std::size_t m : band)
        if (m != chosen + 1) fq.ties.push_back(m);
    return fq;
}

std::size_t quantize_path(const FunctionalQuantizer& fq, const Path& path)
{
    const auto y = kl_coordinates(path, fq.basis, IndexSet::first(fq.dim));
    return nearest_neighbor(fq.codebook, y);
}

McEstimate mc_total_distortion(const FunctionalQuantizer& fq, std::size_t paths, Rng& rng, std::size_t grid_points,
                               std::size_t workers)
{
    if (paths < 2) throw DomainError("Monte Carlo distortion needs at least 2 paths");
    const auto grid = TimeGrid::uniform(fq.basis.spec().T, grid_points);
    const PathSampler sampler(fq.basis.spec(), grid);
    const auto w = grid.trapezoid_weights();
    const Eigen::MatrixXd x = fq.paths(grid.points());
    std::vector<double> err(paths);
    for_each_chunk(paths, rng.next_u64(), workers, [&](std::size_t, Rng& r, std::size_t b, std::size_t e) {
        std::vector<double> v(grid.size());
        for (std::size_t i = b; i < e; ++i) {
            sampler.sample_into(v, r);
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index k = 0; k < x.rows(); ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < v.size(); ++j) {
                    const double t = v[j] - x(k, static_cast<Eigen::Index>(j));
                    s += w[j] * t * t;
                }
                best = std::min(best, s);
            }
            err[i] = best;
        }
    });
    return mean_and_se(err);
}

double Functional::operator()(std::span<const double> values, std::span<const double> weights) const
{
    const double v = eval(values, weights);
    return outer ? outer(v) : v;
}

const std::vector<Functional>& functional_registry()
{
    static const std::vector<Functional> reg = {
        // DF is constant, so the second-order bound vanishes.
        {"integral", integral_eval, nullptr, sqrt_T, zero, 1.0, true},
        {"l2norm", l2norm_eval, nullptr, one, nullptr, 0.0, true},
        // DF(x)h = 2 (int x)(int h), Lipschitz with constant 2T.
        {"sq_integral", integral_eval, square, nullptr, two_T, 1.0, true},
        {"exp_integral", integral_eval, exponential, nullptr, nullptr, 0.0, true},
    };
    return reg;
}

Functional find_functional(const std::string& id)
{
    const bool squared = id.size() > 2 && id.ends_with("^2");
    const std::string base = squared ? id.substr(0, id.size() - 2) : id;
    for (const auto& f : functional_registry()) {
        if (f.id != base) continue;
        if (!squared) return f;
        if (f.outer) throw DomainError("cannot square composite functional " + base);
        // Squares of a norm or a linear map stay convex; Lipschitz constants are lost.
        return {id, f.eval, square, nullptr, nullptr, 0.0, true};
    }
    throw DomainError("unknown functional '" + id + "'");
}

double cubature(const FunctionalQuantizer& fq, const Functional& F)
{
    const auto grid = TimeGrid::uniform(fq.basis.spec().T, kCubatureGrid);
    const auto w = grid.trapezoid_weights();
    const Eigen::MatrixXd x = fq.paths(grid.points());
    std::vector<double> row(grid.size());
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = x(k, static_cast<Eigen::Index>(j));
        s += fq.codebook.weights[static_cast<std::size_t>(k)] * F(row, w);
    }
    return s;
}

CubatureReport cubature_error_report(const FunctionalQuantizer& fq, const Functional& F, std::size_t mc_samples,
                                     Rng& rng, std::size_t workers)
{
    if (mc_samples < 2) throw DomainError("Monte Carlo estimate needs at least 2 paths");
    CubatureReport rep;
    rep.cubature = cubature(fq, F);

    const auto grid = TimeGrid::uniform(fq.basis.spec().T, kCubatureGrid);
    const PathSampler sampler(fq.basis.spec(), grid);
    const auto w = grid.trapezoid_weights();
    std::vector<double> vals(mc_samples);
    for_each_chunk(mc_samples, rng.next_u64(), workers, [&](std::size_t, Rng& r, std::size_t b, std::size_t e) {
        std::vector<double> v(grid.size());
        for (std::size_t i = b; i < e; ++i) {
            sampler.sample_into(v, r);
            vals[i] = F(v, w);
        }
    });
    const auto st = mean_and_se(vals);
    rep.mc_estimate = st.mean;
    rep.mc_se = st.se;

    const double T = fq.basis.spec().T;
    const double err = std::abs(rep.cubature - rep.mc_estimate);
    const double root = std::sqrt(fq.total_distortion);
    if (F.lipschitz) {
        rep.lip_bound = F.lipschitz(T) * root;
        rep.lip_ok = err <= *rep.lip_bound + 3.0 * rep.mc_se;
    }
    if (F.holder_constant) {
        rep.holder_bound = F.holder_constant(T) * std::pow(root, 1.0 + F.holder_alpha);
        rep.holder_ok = err <= *rep.holder_bound + 3.0 * rep.mc_se;
    }
    if (F.convex) rep.convex_ok = rep.cubature <= rep.mc_estimate + 3.0 * rep.mc_se;
    return rep;
}

} // namespace pfq
