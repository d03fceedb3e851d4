#include "pfq/quantizer.hpp"

#include "pfq/errors.hpp"
#include "pfq/numerics.hpp"
#include "pfq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

namespace pfq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pdf_at(double x)
{
    return std::isinf(x) ? 0.0 : normal_pdf(x);
}

double x_pdf_at(double x)
{
    return std::isinf(x) ? 0.0 : x * normal_pdf(x);
}

// P(a < G < b) without cancellation in either tail.
double cell_probability(double a, double b)
{
    if (a >= 0.0) return normal_sf(a) - normal_sf(b);
    if (b <= 0.0) return normal_cdf(b) - normal_cdf(a);
    return 1.0 - normal_cdf(a) - normal_sf(b);
}

struct Cells {
    std::vector<double> lo, hi;
};

Cells voronoi_1d(const std::vector<double>& x)
{
    const std::size_t n = x.size();
    Cells c{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t k = 0; k < n; ++k) {
        c.lo[k] = k == 0 ? -kInf : 0.5 * (x[k - 1] + x[k]);
        c.hi[k] = k + 1 == n ? kInf : 0.5 * (x[k] + x[k + 1]);
    }
    return c;
}

// Conditional cell means m_k = E[G | cell k] of the standard normal.
std::vector<double> cell_means(const std::vector<double>& x, const Cells& c, std::vector<double>* probs)
{
    std::vector<double> m(x.size());
    if (probs) probs->resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double p = cell_probability(c.lo[k], c.hi[k]);
        if (!(p > 0.0)) throw NumericalError("empty Gaussian cell in lloyd_1d");
        m[k] = (pdf_at(c.lo[k]) - pdf_at(c.hi[k])) / p;
        if (probs) (*probs)[k] = p;
    }
    return m;
}

// Stationarity residuals G_k = x_k - E[G | cell k].
std::vector<double> stationarity_system(const std::vector<double>& x)
{
    const auto m = cell_means(x, voronoi_1d(x), nullptr);
    std::vector<double> G(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) G[k] = x[k] - m[k];
    return G;
}

double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

double sum_sq(const std::vector<double>& v)
{
    double s = 0.0;
    for (double a : v) s += a * a;
    return s;
}

// Solves a tridiagonal system in place (Thomas algorithm); sub[0] and sup[n-1] unused.
std::vector<double> solve_tridiagonal(std::vector<double> sub, std::vector<double> diag, std::vector<double> sup,
                                      std::vector<double> rhs)
{
    const std::size_t n = diag.size();
    for (std::size_t k = 1; k < n; ++k) {
        if (diag[k - 1] == 0.0) throw LinearAlgebraError("singular Newton Jacobian in lloyd_1d");
        const double m = sub[k] / diag[k - 1];
        diag[k] -= m * sup[k - 1];
        rhs[k] -= m * rhs[k - 1];
    }
    if (diag[n - 1] == 0.0) throw LinearAlgebraError("singular Newton Jacobian in lloyd_1d");
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t k = n - 1; k-- > 0;) x[k] = (rhs[k] - sup[k] * x[k + 1]) / diag[k];
    return x;
}

void symmetrize(std::vector<double>& x)
{
    const std::size_t N = x.size();
    for (std::size_t k = 0; k < N / 2; ++k) {
        const double s = 0.5 * (x[N - 1 - k] - x[k]);
        x[k] = -s;
        x[N - 1 - k] = s;
    }
    if (N % 2 == 1) x[N / 2] = 0.0;
}

// Optimal N-point quantizer of N(0,1): damped Newton on G(x) = 0 from the
// companding start, with plain Lloyd sweeps whenever the line search stalls.
std::vector<double> solve_unit_1d(std::size_t N)
{
    std::vector<double> x(N);
    for (std::size_t k = 0; k < N; ++k)
        x[k] = std::sqrt(3.0) * normal_quantile((static_cast<double>(k) + 0.5) / static_cast<double>(N));
    if (N == 1) {
        x[0] = 0.0;
        return x;
    }

    std::vector<double> G = stationarity_system(x);
    for (std::size_t it = 0; it < 2000; ++it) {
        if (max_abs(G) < 1e-14) break;
        const auto c = voronoi_1d(x);
        std::vector<double> P;
        const auto m = cell_means(x, c, &P);
        std::vector<double> sub(N, 0.0), diag(N), sup(N, 0.0), rhs(N);
        for (std::size_t k = 0; k < N; ++k) {
            // dm_k/da = phi(a)(m - a)/P, dm_k/db = phi(b)(b - m)/P, a and b the cell ends.
            const double ja = std::isinf(c.lo[k]) ? 0.0 : pdf_at(c.lo[k]) * (m[k] - c.lo[k]) / P[k];
            const double jb = std::isinf(c.hi[k]) ? 0.0 : pdf_at(c.hi[k]) * (c.hi[k] - m[k]) / P[k];
            diag[k] = 1.0 - 0.5 * (ja + jb);
            if (k > 0) sub[k] = -0.5 * ja;
            if (k + 1 < N) sup[k] = -0.5 * jb;
            rhs[k] = -G[k];
        }
        const auto step = solve_tridiagonal(sub, diag, sup, rhs);
        const double f0 = sum_sq(G);
        double t = 1.0;
        std::vector<double> trial(N), Gt;
        bool accepted = false;
        while (t >= 1e-6) {
            for (std::size_t k = 0; k < N; ++k) trial[k] = x[k] + t * step[k];
            if (std::adjacent_find(trial.begin(), trial.end(), std::greater_equal<>()) == trial.end()) {
                Gt = stationarity_system(trial);
                if (sum_sq(Gt) < f0) {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            // Lloyd sweeps never increase the distortion and keep the order.
            if (max_abs(G) < 1e-12) break;
            for (int sweep = 0; sweep < 100; ++sweep) x = cell_means(x, voronoi_1d(x), nullptr);
            G = stationarity_system(x);
            continue;
        }
        double moved = 0.0;
        for (std::size_t k = 0; k < N; ++k) moved = std::max(moved, std::abs(trial[k] - x[k]));
        x = trial;
        G = Gt;
        if (moved < 1e-14) break;
    }
    if (!(max_abs(G) < 1e-11)) {
        std::ostringstream os;
        os << "lloyd_1d did not converge for N = " << N << " (residual " << max_abs(G) << ")";
        throw ConvergenceError(os.str());
    }
    // The optimum of a symmetric log-concave law is unique and symmetric.
    symmetrize(x);
    return x;
}

// Sum over cells of E[|G - x_k|^r; cell k] by Gauss-Legendre, each cell split
// at its point and truncated at |z| = 12.
double unit_lr_by_quadrature(const std::vector<double>& x, double r, std::size_t quad_nodes)
{
    const auto c = voronoi_1d(x);
    const auto rule = gauss_legendre(quad_nodes, 0.0, 1.0);
    double acc = 0.0;
    auto piece = [&](double a, double b, double xk) {
        a = std::max(a, -12.0);
        b = std::min(b, 12.0);
        if (b <= a) return 0.0;
        double s = 0.0;
        for (std::size_t j = 0; j < rule.size(); ++j) {
            const double z = a + (b - a) * rule.nodes[j];
            s += rule.weights[j] * std::pow(std::abs(z - xk), r) * normal_pdf(z);
        }
        return s * (b - a);
    };
    for (std::size_t k = 0; k < x.size(); ++k) acc += piece(c.lo[k], x[k], x[k]) + piece(x[k], c.hi[k], x[k]);
    return acc;
}

double unit_quadratic_exact(const std::vector<double>& x, std::vector<double>* probs)
{
    const auto c = voronoi_1d(x);
    double acc = 0.0;
    if (probs) probs->resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double P = cell_probability(c.lo[k], c.hi[k]);
        const double M = pdf_at(c.lo[k]) - pdf_at(c.hi[k]);
        const double S = P + x_pdf_at(c.lo[k]) - x_pdf_at(c.hi[k]);
        acc += S - 2.0 * x[k] * M + x[k] * x[k] * P;
        if (probs) (*probs)[k] = P;
    }
    return acc;
}

void check_lambdas(std::span<const double> lambdas)
{
    if (lambdas.empty()) throw DomainError("quantizer dimension must be at least 1");
    for (double l : lambdas)
        if (!(l > 0.0) || !std::isfinite(l)) throw DomainError("coordinate variances must be positive");
}

// Antithetic Monte Carlo cloud of N(0, diag(lambdas)), row-major. Pairs z, -z
// make the cloud mean exactly zero, so Lloyd outputs satisfy sum p_k gamma_k = 0.
std::vector<double> gaussian_cloud(std::span<const double> lambdas, std::size_t samples, std::uint64_t seed,
                                   std::size_t workers)
{
    const std::size_t d = lambdas.size();
    const std::size_t pairs = (samples + 1) / 2;
    std::vector<double> sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(lambdas[j]);
    std::vector<double> z(2 * pairs * d);
    for_each_chunk(pairs, seed, workers, [&](std::size_t, Rng& rng, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double v = sd[j] * rng.normal();
                z[(2 * i) * d + j] = v;
                z[(2 * i + 1) * d + j] = -v;
            }
    });
    return z;
}

struct Assignment {
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    double total = 0.0;
    // Farthest sample from its assigned point, for empty-cell repair.
    std::size_t farthest = 0;
    double farthest_dist = -1.0;
};

std::size_t nearest_raw(const double* pts, std::size_t N, std::size_t d, const double* y, double& best)
{
    std::size_t arg = 0;
    best = kInf;
    for (std::size_t k = 0; k < N; ++k) {
        const double* p = pts + k * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double t = y[j] - p[j];
            s += t * t;
        }
        if (s < best) {
            best = s;
            arg = k;
        }
    }
    return arg;
}

Assignment assign(const std::vector<double>& cloud, std::size_t d, const std::vector<double>& pts,
                  std::size_t workers)
{
    const std::size_t n = cloud.size() / d;
    const std::size_t N = pts.size() / d;
    std::vector<Assignment> parts(chunk_count(n));
    for_each_chunk(n, 0, workers, [&](std::size_t c, Rng&, std::size_t b, std::size_t e) {
        Assignment a{std::vector<double>(N * d, 0.0), std::vector<std::size_t>(N, 0), 0.0, 0, -1.0};
        for (std::size_t i = b; i < e; ++i) {
            double dist = 0.0;
            const std::size_t k = nearest_raw(pts.data(), N, d, &cloud[i * d], dist);
            a.counts[k] += 1;
            for (std::size_t j = 0; j < d; ++j) a.sums[k * d + j] += cloud[i * d + j];
            a.total += dist;
            if (dist > a.farthest_dist) {
                a.farthest_dist = dist;
                a.farthest = i;
            }
        }
        parts[c] = std::move(a);
    });
    Assignment out{std::vector<double>(N * d, 0.0), std::vector<std::size_t>(N, 0), 0.0, 0, -1.0};
    for (const auto& a : parts) {
        for (std::size_t k = 0; k < N; ++k) out.counts[k] += a.counts[k];
        for (std::size_t q = 0; q < N * d; ++q) out.sums[q] += a.sums[q];
        out.total += a.total;
        if (a.farthest_dist > out.farthest_dist) {
            out.farthest_dist = a.farthest_dist;
            out.farthest = a.farthest;
        }
    }
    return out;
}

struct LloydResult {
    std::vector<double> points;
    std::vector<double> weights;
    double train_distortion = 0.0;
};

// Lloyd iterations on a fixed cloud. The returned points are the centroids of
// the last partition and the weights its frequencies.
LloydResult run_lloyd(const std::vector<double>& cloud, std::size_t d, std::vector<double> pts,
                      const LloydOptions& opts)
{
    const std::size_t max_iterations = opts.max_iterations, workers = opts.workers;
    const double rel_tol = opts.rel_tol;
    double scale = 0.0;
    for (double v : cloud) scale = std::max(scale, std::abs(v));
    const std::size_t n = cloud.size() / d;
    const std::size_t N = pts.size() / d;
    double prev = kInf;
    std::size_t repairs = 0;
    for (std::size_t it = 0;; ++it) {
        Assignment a = assign(cloud, d, pts, workers);
        bool repaired = false;
        for (std::size_t k = 0; k < N; ++k) {
            if (a.counts[k] > 0) continue;
            if (++repairs > 100) throw ConvergenceError("Lloyd empty-cell repair looped more than 100 times");
            std::copy_n(&cloud[a.farthest * d], d, &pts[k * d]);
            repaired = true;
            a = assign(cloud, d, pts, workers);
        }
        if (repaired) {
            prev = kInf;
            continue;
        }
        double moved = 0.0;
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = a.sums[k * d + j] / static_cast<double>(a.counts[k]);
                moved = std::max(moved, std::abs(c - pts[k * d + j]));
                pts[k * d + j] = c;
            }
        const double D = a.total / static_cast<double>(n);
        const bool done = prev - D <= rel_tol * D || moved <= opts.move_tol * scale;
        if (done || it + 1 >= max_iterations) {
            if (!done) {
                std::ostringstream os;
                os << "Lloyd iterations did not settle within " << max_iterations << " sweeps";
                throw ConvergenceError(os.str());
            }
            LloydResult r{pts, std::vector<double>(N), 0.0};
            for (std::size_t k = 0; k < N; ++k)
                r.weights[k] = static_cast<double>(a.counts[k]) / static_cast<double>(n);
            // Distortion of the returned centroids on the same cloud.
            r.train_distortion = assign(cloud, d, pts, workers).total / static_cast<double>(n);
            return r;
        }
        prev = D;
    }
}

// k-means++ seeding on the first `pool` rows of the cloud.
std::vector<double> kmeanspp(const std::vector<double>& cloud, std::size_t d, std::size_t N, Rng& rng)
{
    const std::size_t n = std::min<std::size_t>(cloud.size() / d, 20000);
    std::vector<double> pts;
    pts.reserve(N * d);
    const std::size_t first = rng.index(n);
    pts.insert(pts.end(), &cloud[first * d], &cloud[first * d] + d);
    std::vector<double> dist(n, kInf);
    for (std::size_t k = 1; k < N; ++k) {
        const double* last = &pts[(k - 1) * d];
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double t = cloud[i * d + j] - last[j];
                s += t * t;
            }
            dist[i] = std::min(dist[i], s);
            total += dist[i];
        }
        double u = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            u -= dist[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        pts.insert(pts.end(), &cloud[pick * d], &cloud[pick * d] + d);
    }
    return pts;
}

struct HeldOut {
    double mean = 0.0;
    double se = 0.0;
};

HeldOut held_out_distortion(const Codebook& cb, std::size_t samples, std::uint64_t seed, std::size_t workers)
{
    const std::size_t d = cb.d;
    std::vector<double> sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(cb.lambdas[j]);
    std::vector<std::pair<double, double>> parts(chunk_count(samples));
    for_each_chunk(samples, seed, workers, [&](std::size_t c, Rng& rng, std::size_t b, std::size_t e) {
        std::vector<double> y(d);
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            for (std::size_t j = 0; j < d; ++j) y[j] = sd[j] * rng.normal();
            double dist = 0.0;
            nearest_raw(cb.points.data(), cb.size(), d, y.data(), dist);
            s += dist;
            s2 += dist * dist;
        }
        parts[c] = {s, s2};
    });
    double s = 0.0, s2 = 0.0;
    for (const auto& [a, b] : parts) {
        s += a;
        s2 += b;
    }
    const double n = static_cast<double>(samples);
    const double mean = s / n;
    const double var = std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

Codebook finish_md(std::span<const double> lambdas, LloydResult r, std::size_t samples, const char* method,
                   std::uint64_t seed, std::size_t workers)
{
    Codebook cb;
    cb.d = lambdas.size();
    cb.lambdas.assign(lambdas.begin(), lambdas.end());
    cb.points = std::move(r.points);
    cb.weights = std::move(r.weights);
    cb.distortion_alt = r.train_distortion;
    cb.method = method;
    cb.seed = seed;
    const auto h = held_out_distortion(cb, samples, Rng::substream(seed, 1u << 20).next_u64(), workers);
    cb.distortion = h.mean;
    cb.distortion_se = h.se;
    return cb;
}

} // namespace

void Codebook::validate() const
{
    if (d == 0 || lambdas.size() != d) throw DomainError("codebook dimension does not match its variances");
    if (weights.empty() || points.size() != weights.size() * d)
        throw DomainError("codebook points and weights disagree in size");
    double s = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw DomainError("codebook weights must be non-negative");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw DomainError("codebook weights must sum to one");
    for (std::size_t a = 0; a < size(); ++a)
        for (std::size_t b = a + 1; b < size(); ++b)
            if (std::equal(point(a).begin(), point(a).end(), point(b).begin()))
                throw DomainError("codebook points must be distinct");
}

std::size_t nearest_neighbor(const Codebook& cb, std::span<const double> y, double& dist2)
{
    if (y.size() != cb.d) throw DomainError("vector dimension does not match the codebook");
    return nearest_raw(cb.points.data(), cb.size(), cb.d, y.data(), dist2);
}

std::size_t nearest_neighbor(const Codebook& cb, std::span<const double> y)
{
    double d2 = 0.0;
    return nearest_neighbor(cb, y, d2);
}

double unit_distortion(std::size_t N)
{
    static std::mutex mu;
    static std::map<std::size_t, double> cache;
    {
        std::lock_guard lock(mu);
        if (auto it = cache.find(N); it != cache.end()) return it->second;
    }
    const double v = unit_quadratic_exact(solve_unit_1d(N), nullptr);
    std::lock_guard lock(mu);
    cache[N] = v;
    return v;
}

Codebook lloyd_1d(double lambda, std::size_t N, std::size_t quad_nodes)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be positive");
    if (N == 0) throw DomainError("codebook size must be at least 1");
    if (quad_nodes < 2) throw DomainError("quadrature needs at least 2 nodes");
    const auto x = solve_unit_1d(N);
    Codebook cb;
    cb.d = 1;
    cb.lambdas = {lambda};
    const double s = std::sqrt(lambda);
    cb.points.resize(N);
    for (std::size_t k = 0; k < N; ++k) cb.points[k] = s * x[k];
    cb.distortion = lambda * unit_quadratic_exact(x, &cb.weights);
    cb.distortion_alt = lambda * unit_lr_by_quadrature(x, 2.0, quad_nodes);
    cb.method = "lloyd1d";
    return cb;
}

Codebook lloyd_md_from(std::span<const double> lambdas, std::span<const double> initial, std::size_t samples,
                       Rng& rng, const LloydOptions& opts)
{
    check_lambdas(lambdas);
    const std::size_t d = lambdas.size();
    if (initial.empty() || initial.size() % d != 0) throw DomainError("initial codebook has the wrong shape");
    const std::size_t N = initial.size() / d;
    if (samples < 10000 * N) throw PreconditionError("lloyd_md needs at least 1e4 samples per codebook point");
    const std::uint64_t seed = rng.next_u64();
    const auto cloud = gaussian_cloud(lambdas, samples, seed, opts.workers);
    auto r = run_lloyd(cloud, d, std::vector<double>(initial.begin(), initial.end()), opts);
    return finish_md(lambdas, std::move(r), samples, "lloyd_md", seed, opts.workers);
}

Codebook lloyd_md(std::span<const double> lambdas, std::size_t N, std::size_t samples, Rng& rng,
                  const LloydOptions& opts)
{
    check_lambdas(lambdas);
    if (N == 0) throw DomainError("codebook size must be at least 1");
    if (samples < 10000 * N) throw PreconditionError("lloyd_md needs at least 1e4 samples per codebook point");
    const std::size_t d = lambdas.size();
    const std::uint64_t seed = rng.next_u64();
    const auto cloud = gaussian_cloud(lambdas, samples, seed, opts.workers);

    std::vector<std::vector<double>> starts;
    {
        // Product-quantizer start, topped up by D^2 sampling when the best
        // factorization uses fewer than N points.
        const auto pq = product_quantizer(lambdas, N);
        std::vector<double> pts = pq.points;
        Rng fill = Rng::substream(seed, 7);
        while (pts.size() / d < N) {
            double best = -1.0;
            std::size_t pick = 0;
            for (int trial = 0; trial < 64; ++trial) {
                const std::size_t i = fill.index(cloud.size() / d);
                double dist = 0.0;
                nearest_raw(pts.data(), pts.size() / d, d, &cloud[i * d], dist);
                if (dist > best) {
                    best = dist;
                    pick = i;
                }
            }
            pts.insert(pts.end(), &cloud[pick * d], &cloud[pick * d] + d);
        }
        starts.push_back(std::move(pts));
    }
    for (std::size_t r = 0; r < opts.restarts; ++r) {
        Rng init = Rng::substream(seed, 100 + r);
        starts.push_back(kmeanspp(cloud, d, N, init));
    }

    LloydResult best;
    best.train_distortion = kInf;
    for (auto& s : starts) {
        auto r = run_lloyd(cloud, d, std::move(s), opts);
        if (r.train_distortion < best.train_distortion) best = std::move(r);
    }
    return finish_md(lambdas, std::move(best), samples, "lloyd_md", seed, opts.workers);
}

Codebook clvq(std::span<const double> lambdas, std::size_t N, std::size_t steps, Rng& rng, std::size_t workers)
{
    check_lambdas(lambdas);
    if (N == 0) throw DomainError("codebook size must be at least 1");
    if (steps < 100000) throw PreconditionError("clvq needs at least 1e5 steps");
    const std::size_t d = lambdas.size();
    const std::uint64_t seed = rng.next_u64();
    std::vector<double> sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(lambdas[j]);

    Rng stream = Rng::substream(seed, 3);
    const auto seed_cloud = gaussian_cloud(lambdas, std::max<std::size_t>(20 * N, 1000), seed ^ 0x5bd1e995u, 1);
    std::vector<double> pts = kmeanspp(seed_cloud, d, N, stream);

    const double c = 2.0 * static_cast<double>(N);
    std::vector<double> z(d);
    for (std::size_t k = 1; k <= steps; ++k) {
        for (std::size_t j = 0; j < d; ++j) z[j] = sd[j] * stream.normal();
        double dist = 0.0;
        const std::size_t i = nearest_raw(pts.data(), N, d, z.data(), dist);
        const double g = c / (c + static_cast<double>(k));
        for (std::size_t j = 0; j < d; ++j) pts[i * d + j] += g * (z[j] - pts[i * d + j]);
    }

    // Polish: five Lloyd sweeps on a fresh cloud of `steps` draws.
    const auto cloud = gaussian_cloud(lambdas, steps, Rng::substream(seed, 4).next_u64(), workers);
    const std::size_t n = cloud.size() / d;
    Assignment a;
    for (int sweep = 0; sweep < 5; ++sweep) {
        a = assign(cloud, d, pts, workers);
        for (std::size_t k = 0; k < N; ++k) {
            if (a.counts[k] == 0) continue;
            for (std::size_t j = 0; j < d; ++j)
                pts[k * d + j] = a.sums[k * d + j] / static_cast<double>(a.counts[k]);
        }
    }
    // Points that never won a sample are reseeded through full Lloyd repair.
    if (std::find(a.counts.begin(), a.counts.end(), 0u) != a.counts.end()) {
        LloydOptions repair;
        repair.workers = workers;
        auto r = run_lloyd(cloud, d, pts, repair);
        return finish_md(lambdas, std::move(r), steps, "clvq", seed, workers);
    }
    LloydResult r{pts, std::vector<double>(N), 0.0};
    for (std::size_t k = 0; k < N; ++k) r.weights[k] = static_cast<double>(a.counts[k]) / static_cast<double>(n);
    r.train_distortion = assign(cloud, d, pts, workers).total / static_cast<double>(n);
    return finish_md(lambdas, std::move(r), steps, "clvq", seed, workers);
}

std::vector<std::size_t> product_allocation(std::span<const double> lambdas, std::size_t N_budget)
{
    check_lambdas(lambdas);
    if (N_budget == 0) throw DomainError("codebook budget must be at least 1");
    const std::size_t d = lambdas.size();
    std::vector<std::size_t> cur(d, 1), best(d, 1);
    double best_value = kInf;
    // Depth-first over N_1 * ... * N_d <= budget.
    auto search = [&](auto&& self, std::size_t j, std::size_t budget, double acc) -> void {
        if (j == d) {
            if (acc < best_value) {
                best_value = acc;
                best = cur;
            }
            return;
        }
        for (std::size_t n = 1; n <= budget; ++n) {
            cur[j] = n;
            self(self, j + 1, budget / n, acc + lambdas[j] * unit_distortion(n));
        }
    };
    search(search, 0, N_budget, 0.0);
    return best;
}

Codebook product_quantizer(std::span<const double> lambdas, std::size_t N_budget)
{
    const auto alloc = product_allocation(lambdas, N_budget);
    const std::size_t d = lambdas.size();
    std::vector<Codebook> factors;
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) {
        factors.push_back(lloyd_1d(lambdas[j], alloc[j]));
        total *= alloc[j];
    }
    Codebook cb;
    cb.d = d;
    cb.lambdas.assign(lambdas.begin(), lambdas.end());
    cb.points.resize(total * d);
    cb.weights.resize(total);
    // Lexicographic order, first coordinate slowest.
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t k = 0; k < total; ++k) {
        double w = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            cb.points[k * d + j] = factors[j].points[idx[j]];
            w *= factors[j].weights[idx[j]];
        }
        cb.weights[k] = w;
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] < alloc[j]) break;
            idx[j] = 0;
        }
    }
    double exact = 0.0, quad = 0.0;
    for (const auto& f : factors) {
        exact += f.distortion;
        quad += f.distortion_alt;
    }
    cb.distortion = exact;
    cb.distortion_alt = quad;
    cb.method = "product";
    return cb;
}

StationarityReport stationarity_residual(const Codebook& cb, std::size_t samples, Rng& rng, std::size_t workers)
{
    if (samples < 100000) throw PreconditionError("stationarity_residual needs at least 1e5 samples");
    const std::size_t d = cb.d, N = cb.size();
    std::vector<double> sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(cb.lambdas[j]);
    struct Part {
        std::vector<double> s, s2;
        std::vector<std::size_t> n;
    };
    std::vector<Part> parts(chunk_count(samples));
    const std::uint64_t seed = rng.next_u64();
    for_each_chunk(samples, seed, workers, [&](std::size_t c, Rng& r, std::size_t b, std::size_t e) {
        Part p{std::vector<double>(N * d, 0.0), std::vector<double>(N * d, 0.0), std::vector<std::size_t>(N, 0)};
        std::vector<double> y(d);
        for (std::size_t i = b; i < e; ++i) {
            for (std::size_t j = 0; j < d; ++j) y[j] = sd[j] * r.normal();
            double dist = 0.0;
            const std::size_t k = nearest_raw(cb.points.data(), N, d, y.data(), dist);
            p.n[k] += 1;
            for (std::size_t j = 0; j < d; ++j) {
                p.s[k * d + j] += y[j];
                p.s2[k * d + j] += y[j] * y[j];
            }
        }
        parts[c] = std::move(p);
    });
    std::vector<double> s(N * d, 0.0), s2(N * d, 0.0);
    std::vector<std::size_t> n(N, 0);
    for (const auto& p : parts) {
        for (std::size_t q = 0; q < N * d; ++q) {
            s[q] += p.s[q];
            s2[q] += p.s2[q];
        }
        for (std::size_t k = 0; k < N; ++k) n[k] += p.n[k];
    }
    StationarityReport rep;
    for (std::size_t k = 0; k < N; ++k) {
        if (n[k] < 2) {
            rep.missing_cells.push_back(k);
            continue;
        }
        const double nk = static_cast<double>(n[k]);
        double dist2 = 0.0, trace = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double mean = s[k * d + j] / nk;
            const double diff = cb.points[k * d + j] - mean;
            dist2 += diff * diff;
            trace += std::max(0.0, (s2[k * d + j] - nk * mean * mean) / (nk - 1.0));
        }
        rep.residual = std::max(rep.residual, std::sqrt(dist2));
        rep.standard_error = std::max(rep.standard_error, std::sqrt(trace / nk));
    }
    return rep;
}

double zador_constant_1d(double r)
{
    if (!(r > 0.0)) throw DomainError("Zador exponent must be positive");
    return 0.5 * std::pow(r + 1.0, -1.0 / r);
}

double zador_constant_2d_quadratic()
{
    return std::sqrt(5.0 / (18.0 * std::sqrt(2.0)));
}

ZadorReport zador_rate_check(ZadorMode mode, double lambda, double r, std::span<const std::size_t> Ns)
{
    if (!(r > 0.0)) throw DomainError("Zador exponent must be positive");
    if (Ns.size() < 2) throw DomainError("rate check needs at least two codebook sizes");
    const auto [lo, hi] = std::minmax_element(Ns.begin(), Ns.end());
    if (*lo == 0 || static_cast<double>(*hi) < 10.0 * static_cast<double>(*lo))
        throw DomainError("codebook sizes must span at least one decade");
    ZadorReport rep;
    std::vector<double> lx, ly;
    for (std::size_t N : Ns) {
        double err = 0.0;
        if (mode == ZadorMode::Uniform) {
            // Midpoint quantizer of U[0,1]: every cell contributes 2 (1/(2N))^{r+1} / (r+1).
            const double h = 0.5 / static_cast<double>(N);
            err = std::pow(2.0 * static_cast<double>(N) * std::pow(h, r + 1.0) / (r + 1.0), 1.0 / r);
        } else {
            if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
            err = std::sqrt(lambda) * std::pow(unit_lr_by_quadrature(solve_unit_1d(N), r, 64), 1.0 / r);
        }
        rep.errors.push_back(err);
        lx.push_back(std::log(static_cast<double>(N)));
        ly.push_back(std::log(err));
    }
    const auto fit = fit_line(lx, ly);
    rep.slope = fit.slope;
    rep.slope_se = fit.slope_se;
    rep.constant = std::exp(fit.intercept);
    rep.reference = mode == ZadorMode::Uniform ? zador_constant_1d(r) : 0.0;
    return rep;
}

} // namespace pfq
