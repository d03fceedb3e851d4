#include "pfq/cli/commands.hpp"

#include "pfq/bridges.hpp"
#include "pfq/errors.hpp"
#include "pfq/functional_quantizer.hpp"
#include "pfq/parallel.hpp"
#include "pfq/partial_quant.hpp"
#include "pfq/serialize.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace pfq::cli {

namespace {

struct Common {
    std::string family = "bm";
    double T = 1.0;
    double theta = 1.0;
    double sigma = 1.0;
    double sigma0 = 0.0;
    double hurst = 0.5;
    std::uint64_t seed = 1;
    std::string out;
    std::size_t workers = 0;
    bool validate = false;
    std::string config;
};

// A check that failed under --validate.
struct ValidationFailure : Error {
    ValidationFailure(std::string kind, const std::string& what)
        : Error(ErrorClass::Precondition, std::move(kind), what) {}
};

ProcessSpec make_spec(const Common& c)
{
    ProcessSpec s;
    s.family = parse_family(c.family);
    s.T = c.T;
    if (s.family == Family::OrnsteinUhlenbeck) {
        s.theta = c.theta;
        s.sigma = c.sigma;
        s.sigma0 = c.sigma0;
    }
    if (s.family == Family::FractionalBrownianMotion) s.hurst = c.hurst;
    s.validate();
    return s;
}

std::size_t workers_of(const Common& c) { return c.workers ? c.workers : default_workers(); }

std::string out_path(const Common& c, const std::string& fallback)
{
    return c.out.empty() ? fallback : c.out;
}

// "run.json" -> "run_paths.csv"
std::string sibling(const std::string& path, const std::string& suffix)
{
    std::filesystem::path p(path);
    const auto stem = p.stem().string();
    return (p.parent_path() / (stem + suffix)).string();
}

std::string number(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string short_number(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json base_config(const std::string& command, const Common& c, const ProcessSpec& spec)
{
    return Json{{"command", command}, {"spec", to_json(spec)}, {"seed", c.seed}};
}

void write_csv(const std::string& path, const Json& config, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows)
{
    std::ofstream f(path);
    if (!f) throw PreconditionError("cannot write '" + path + "'");
    f << "# config: " << config.dump() << '\n';
    f << "# generated: " << timestamp() << '\n';
    for (std::size_t k = 0; k < header.size(); ++k) f << (k ? "," : "") << header[k];
    f << '\n';
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) f << (k ? "," : "") << number(r[k]);
        f << '\n';
    }
    if (!f) throw PreconditionError("failed writing '" + path + "'");
}

void write_artifact(const std::string& path, const Json& config, const char* key, Json payload)
{
    Json j{{"config", config}};
    j[key] = std::move(payload);
    write_json_file(path, j);
}

IndexSet index_set(const std::vector<std::size_t>& I)
{
    if (I.empty()) throw PreconditionError("index set must be non-empty");
    return IndexSet(std::vector<std::size_t>(I));
}

std::size_t basis_size(std::size_t requested, const std::vector<std::size_t>& I)
{
    const std::size_t top = I.empty() ? 1 : *std::max_element(I.begin(), I.end());
    return std::max(requested, top);
}

// Checks shared by the SDE commands: coefficients, t < T, a driver family
// and a driver grid that resolves e_i for i in I.
void validate_sde_run(const ProcessSpec& spec, const SdeSpec& sde, const KLBasis& basis, const IndexSet& I,
                      double t, std::size_t steps)
{
    sde.validate();
    if (!spec.is_semimartingale()) throw UnsupportedFamilyError("SDE drivers must be semimartingales");
    if (!(t < spec.T)) throw DomainError("SDE horizon t must be below T (the error bound holds on [0, T))");
    const auto grid = driver_grid(solve_grid(spec.T, t, steps), spec.T);
    check_grid_resolution(basis, I, grid, true);
}

// ---------------------------------------------------------------- kl

struct KlOpts {
    std::size_t m = 5;
    std::size_t nodes = 400;
    std::string method = "auto";
};

int cmd_kl(const Common& c, const KlOpts& o, std::ostream& out)
{
    const auto spec = make_spec(c);
    if (o.m == 0) throw DomainError("m must be at least 1");
    if (o.method != "auto" && o.method != "closed_form" && o.method != "nystrom")
        throw DomainError("method must be auto, closed_form or nystrom");
    if (c.validate) {
        out << "validate: kl ok (" << family_name(spec.family) << ", m=" << o.m << ")\n";
        return 0;
    }
    const KLBasis b = o.method == "closed_form" ? kl_closed_form(spec, o.m)
                      : o.method == "nystrom"   ? kl_nystrom(spec, o.m, o.nodes)
                                                : kl_basis(spec, o.m, o.nodes);
    auto config = base_config("kl", c, spec);
    config["m"] = o.m;
    config["nodes"] = o.nodes;
    config["method"] = o.method;
    const auto path = out_path(c, "kl.json");
    write_artifact(path, config, "basis", to_json(b));
    out << "kl: " << family_name(spec.family) << " m=" << o.m << " "
        << (b.representation() == Representation::ClosedForm ? "closed_form" : "nystrom")
        << " lambda_1=" << short_number(b.eigenvalue(1)) << " lambda_m=" << short_number(b.eigenvalue(o.m))
        << " -> " << path << '\n';
    return 0;
}

// ---------------------------------------------------------------- quantize

struct QuantizeOpts {
    std::vector<double> lambdas{1.0};
    std::size_t N = 0;
    std::string method = "auto";
    std::size_t samples = 0;
    std::size_t steps = 0;
};

int cmd_quantize(const Common& c, const QuantizeOpts& o, std::ostream& out)
{
    if (o.N == 0) throw DomainError("--N must be at least 1");
    if (o.lambdas.empty()) throw DomainError("--lambdas must be non-empty");
    for (double l : o.lambdas)
        if (!(l > 0.0)) throw DomainError("variances must be positive");
    const std::string method =
        o.method == "auto" ? (o.lambdas.size() == 1 ? "lloyd1d" : "lloyd_md") : o.method;
    if (method == "lloyd1d" && o.lambdas.size() != 1) throw DomainError("lloyd1d needs exactly one variance");
    if (method != "lloyd1d" && method != "lloyd_md" && method != "clvq" && method != "product")
        throw DomainError("unknown quantizer method '" + o.method + "'");
    if (c.validate) {
        out << "validate: quantize ok (" << method << ", d=" << o.lambdas.size() << ", N=" << o.N << ")\n";
        return 0;
    }
    Rng rng(c.seed);
    const std::size_t samples = o.samples ? o.samples : std::max<std::size_t>(20000 * o.N, 200000);
    Codebook cb;
    if (method == "lloyd1d") cb = lloyd_1d(o.lambdas[0], o.N);
    else if (method == "product") cb = product_quantizer(o.lambdas, o.N);
    else if (method == "clvq") cb = clvq(o.lambdas, o.N, o.steps ? o.steps : samples, rng, workers_of(c));
    else {
        LloydOptions lo;
        lo.workers = workers_of(c);
        cb = lloyd_md(o.lambdas, o.N, samples, rng, lo);
    }
    Json config{{"command", "quantize"}, {"seed", c.seed},   {"lambdas", o.lambdas},
                {"N", o.N},              {"method", method}, {"samples", samples}};
    const auto path = out_path(c, "quantize.json");
    write_artifact(path, config, "codebook", to_json(cb));
    out << "quantize: " << method << " d=" << cb.d << " N=" << cb.size()
        << " distortion=" << short_number(cb.distortion);
    if (cb.distortion_se > 0.0) out << " (se " << short_number(cb.distortion_se) << ")";
    out << " -> " << path << '\n';
    return 0;
}

// ---------------------------------------------------------------- fq

struct FqOpts {
    std::size_t m = 8;
    std::size_t nodes = 400;
    std::size_t N = 0;
    std::size_t m_max = 0;
    std::size_t samples = 0;
    std::size_t eval_samples = 200000;
    double tie_rel = 1e-3;
    std::size_t grid_points = 129;
};

int cmd_fq(const Common& c, const FqOpts& o, std::ostream& out)
{
    const auto spec = make_spec(c);
    if (o.N == 0) throw DomainError("--N must be at least 1");
    const std::size_t m_max = o.m_max ? o.m_max : std::min<std::size_t>(6, o.m);
    if (m_max > o.m) throw DomainError("--m-max cannot exceed the basis size --m");
    if (o.grid_points < 2) throw DomainError("--grid-points must be at least 2");
    if (c.validate) {
        out << "validate: fq ok (" << family_name(spec.family) << ", N=" << o.N << ", m_max=" << m_max << ")\n";
        return 0;
    }
    const auto basis = kl_basis(spec, o.m, o.nodes);
    Rng rng(c.seed);
    FqOptions fo;
    fo.samples = o.samples;
    fo.eval_samples = o.eval_samples;
    fo.tie_rel = o.tie_rel;
    fo.workers = workers_of(c);
    const auto fq = build_fq(basis, o.N, m_max, rng, fo);

    auto config = base_config("fq", c, spec);
    config["m"] = o.m;
    config["nodes"] = o.nodes;
    config["N"] = o.N;
    config["m_max"] = m_max;
    config["samples"] = o.samples;
    config["eval_samples"] = o.eval_samples;
    config["tie_rel"] = o.tie_rel;
    config["grid_points"] = o.grid_points;
    const auto path = out_path(c, "fq.json");
    write_artifact(path, config, "functional_quantizer", to_json(fq));

    // Plot data: t followed by the N quantizer paths.
    const auto grid = TimeGrid::uniform(spec.T, o.grid_points);
    const Eigen::MatrixXd x = fq.paths(grid.points());
    std::vector<std::string> header{"t"};
    for (std::size_t k = 1; k <= fq.size(); ++k) header.push_back("x" + std::to_string(k));
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        std::vector<double> r{grid[j]};
        for (Eigen::Index k = 0; k < x.rows(); ++k) r.push_back(x(k, static_cast<Eigen::Index>(j)));
        rows.push_back(std::move(r));
    }
    const auto csv = sibling(path, "_paths.csv");
    write_csv(csv, config, header, rows);

    out << "fq: " << family_name(spec.family) << " N=" << o.N << " selected dimension " << fq.dim;
    if (!fq.ties.empty()) {
        out << " (tied within noise: ";
        for (std::size_t k = 0; k < fq.ties.size(); ++k) out << (k ? "," : "") << fq.ties[k];
        out << ")";
    }
    out << " total distortion=" << short_number(fq.total_distortion) << " -> " << path << ", " << csv << '\n';
    return 0;
}

// ---------------------------------------------------------------- bridge

struct BridgeOpts {
    std::vector<std::size_t> I{1};
    std::vector<double> s{0.0, 0.25, 0.5, 0.75, 0.9};
    std::size_t m = 0;
    std::size_t nodes = 400;
    std::size_t resolution = 512;
    std::size_t paths = 0;
    std::vector<double> y;
    std::size_t grid_points = 129;
};

int cmd_bridge(const Common& c, const BridgeOpts& o, std::ostream& out)
{
    const auto spec = make_spec(c);
    if (o.I.empty()) throw PreconditionError("--I must be non-empty");
    if (o.s.empty()) throw DomainError("--s must be non-empty");
    if (!spec.is_semimartingale()) throw UnsupportedFamilyError("generalized bridges need a semimartingale family");
    const auto basis = kl_basis(spec, basis_size(o.m, o.I), o.nodes);
    // Functions are taken as listed, repeats included, so that a degenerate
    // family shows up in the (H) check.
    BridgeSpec bridge{spec, {}, std::vector<double>(o.I.size(), 0.0)};
    for (std::size_t i : o.I) bridge.functions.push_back(antiderivative_f(basis, i));
    const auto checks = check_H(bridge, o.s, o.resolution);
    const auto failed = std::count_if(checks.begin(), checks.end(), [](const HCheck& h) { return !h.pass; });
    double worst = 0.0;
    for (const auto& h : checks) worst = std::max(worst, h.condition_number);

    if (c.validate) {
        if (failed) {
            std::ostringstream os;
            os << "(H) fails: Q(s,T) is singular at " << failed << " of " << checks.size()
               << " s values (worst condition number " << short_number(worst) << ")";
            throw ValidationFailure("hypothesis_H", os.str());
        }
        out << "validate: bridge ok, (H) holds at " << checks.size() << "/" << checks.size()
            << " s values, worst condition number " << short_number(worst) << '\n';
        return 0;
    }

    auto config = base_config("bridge", c, spec);
    config["I"] = o.I;
    config["s"] = o.s;
    config["resolution"] = o.resolution;
    config["paths"] = o.paths;
    Json gram = Json::array();
    for (double s : o.s) gram.push_back(to_json(gram_Q(bridge, s, o.resolution)));
    Json report{{"checks", to_json(std::span<const HCheck>(checks))}, {"gram", std::move(gram)}};
    const auto path = out_path(c, "bridge.json");

    std::string csv;
    if (o.paths > 0) {
        const auto I = index_set(o.I);
        std::vector<double> y = o.y.empty() ? std::vector<double>(o.I.size(), 0.0) : o.y;
        if (y.size() != o.I.size()) throw DomainError("--y must have one value per index in --I");
        config["y"] = y;
        config["grid_points"] = o.grid_points;
        const auto grid = TimeGrid::uniform(spec.T, o.grid_points);
        const KLBridgeSampler sampler(basis, I, grid);
        Rng rng(c.seed);
        std::vector<std::string> header;
        for (std::size_t j = 0; j < grid.size(); ++j) header.push_back(number(grid[j]));
        std::vector<std::vector<double>> rows(o.paths, std::vector<double>(grid.size()));
        for (auto& r : rows) sampler.sample_into(y, r, rng);
        csv = sibling(path, "_samples.csv");
        write_csv(csv, config, header, rows);
    }
    write_artifact(path, config, "report", std::move(report));
    out << "bridge: (H) holds at " << checks.size() - static_cast<std::size_t>(failed) << "/" << checks.size()
        << " s values, worst condition number " << short_number(worst) << " -> " << path;
    if (!csv.empty()) out << ", " << csv;
    out << '\n';
    return 0;
}

// ---------------------------------------------------------------- sde, rate, bounds

struct SdeOpts {
    std::string b = "const(0)";
    std::string sigma = "const(1)";
    double x0 = 0.0;
    std::vector<std::size_t> I{1};
    std::size_t m = 0;
    std::size_t nodes = 400;
    double p = 2.0;
    double t = -1.0;
    std::size_t paths = 1000;
    std::size_t steps = 512;
    std::size_t samples = 0;
    // sde
    std::size_t N = 8;
    std::size_t emit_paths = 0;
    // rate and bounds
    std::vector<std::size_t> Ns{1, 2, 4, 8, 16, 32, 64};
    double epsilon = 0.5;
    // bounds
    bool calibrate = false;
    std::vector<double> quant_errs{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    double C = 1.0;
    double A = 1.0;
    double B = 1.0;
    std::size_t held_out = 20;
};

struct SdeSetup {
    ProcessSpec spec;
    SdeSpec sde;
    KLBasis basis;
    IndexSet I;
    double t = 0.0;
};

SdeSetup sde_setup(const Common& c, const SdeOpts& o)
{
    SdeSetup s;
    s.spec = make_spec(c);
    s.sde = SdeSpec::make(parse_coefficient(o.b), parse_coefficient(o.sigma), o.x0);
    s.I = index_set(o.I);
    s.t = o.t < 0.0 ? 0.99 * s.spec.T : o.t;
    if (!(o.p >= 1.0)) throw DomainError("--p must be at least 1");
    if (!s.spec.is_semimartingale()) throw UnsupportedFamilyError("SDE drivers must be semimartingales");
    if (!(s.t < s.spec.T)) throw DomainError("SDE horizon t must be below T (the error bound holds on [0, T))");
    s.basis = kl_basis(s.spec, basis_size(o.m, o.I), o.nodes);
    return s;
}

Json sde_config(const std::string& command, const Common& c, const SdeSetup& s, const SdeOpts& o)
{
    auto config = base_config(command, c, s.spec);
    config["sde"] = to_json(s.sde);
    config["I"] = o.I;
    config["p"] = o.p;
    config["t"] = s.t;
    config["paths"] = o.paths;
    config["steps"] = o.steps;
    config["samples"] = o.samples;
    return config;
}

int cmd_sde(const Common& c, const SdeOpts& o, std::ostream& out)
{
    const auto s = sde_setup(c, o);
    if (c.validate) {
        validate_sde_run(s.spec, s.sde, s.basis, s.I, s.t, o.steps);
        out << "validate: sde ok (t=" << short_number(s.t) << " < T=" << short_number(s.spec.T) << ")\n";
        return 0;
    }
    if (o.N == 0) throw DomainError("--N must be at least 1");
    Rng rng(c.seed);
    const auto pq = make_partial_quantizer(s.basis, s.I, o.N, rng, o.samples, workers_of(c));
    const auto e = sup_error_lp(s.sde, pq, o.p, s.t, o.paths, rng, o.steps, workers_of(c));

    auto config = sde_config("sde", c, s, o);
    config["N"] = o.N;
    config["emit_paths"] = o.emit_paths;
    const auto path = out_path(c, "sde.csv");
    write_csv(path, config, {"N", "p", "t", "estimate", "se", "seed"},
              {{static_cast<double>(o.N), o.p, s.t, e.value, e.se, static_cast<double>(c.seed)}});
    std::string extra;
    if (o.emit_paths > 0) {
        const PairedSolver solver(s.sde, pq, solve_grid(s.spec.T, s.t, o.steps));
        std::vector<std::string> header{"t"};
        std::vector<PairedPaths> pp;
        for (std::size_t k = 0; k < o.emit_paths; ++k) {
            pp.push_back(solver.solve(rng));
            header.push_back("S" + std::to_string(k + 1));
            header.push_back("S_tilde" + std::to_string(k + 1));
        }
        std::vector<std::vector<double>> rows;
        for (std::size_t j = 0; j < solver.grid().size(); ++j) {
            std::vector<double> r{solver.grid()[j]};
            for (const auto& x : pp) {
                r.push_back(x.S.values[j]);
                r.push_back(x.S_tilde.values[j]);
            }
            rows.push_back(std::move(r));
        }
        extra = sibling(path, "_paths.csv");
        write_csv(extra, config, header, rows);
    }
    out << "sde: N=" << o.N << " L^" << short_number(o.p) << " sup error on [0," << short_number(s.t)
        << "] = " << short_number(e.value) << " (se " << short_number(e.se) << ") -> " << path;
    if (!extra.empty()) out << ", " << extra;
    out << '\n';
    return 0;
}

int cmd_rate(const Common& c, const SdeOpts& o, std::ostream& out)
{
    const auto s = sde_setup(c, o);
    if (c.validate) {
        validate_sde_run(s.spec, s.sde, s.basis, s.I, s.t, o.steps);
        const auto [lo, hi] = std::minmax_element(o.Ns.begin(), o.Ns.end());
        if (o.Ns.size() < 2 || *lo == 0 || *hi < 10 * *lo)
            throw DomainError("--Ns must hold positive sizes spanning at least a decade");
        out << "validate: rate ok (" << o.Ns.size() << " codebook sizes)\n";
        return 0;
    }
    Rng rng(c.seed);
    RateOptions ro;
    ro.paths = o.paths;
    ro.steps = o.steps;
    ro.samples = o.samples;
    ro.epsilon = o.epsilon;
    ro.workers = workers_of(c);
    const auto fit = rate_fit(s.sde, s.basis, s.I, o.p, s.t, o.Ns, rng, ro);

    auto config = sde_config("rate", c, s, o);
    config["Ns"] = o.Ns;
    config["epsilon"] = o.epsilon;
    std::vector<std::vector<double>> rows;
    for (const auto& r : fit.rows)
        rows.push_back({static_cast<double>(r.N), o.p, s.t, r.error.value, r.error.se, static_cast<double>(c.seed)});
    const auto path = out_path(c, "rate.csv");
    write_csv(path, config, {"N", "p", "t", "estimate", "se", "seed"}, rows);
    const auto fit_path = sibling(path, "_fit.json");
    write_artifact(fit_path, config, "fit", to_json(fit));
    out << "rate: slope " << short_number(fit.slope) << " (95% CI [" << short_number(fit.ci_low) << ", "
        << short_number(fit.ci_high) << "]) for |I|=" << s.I.size() << " -> " << path << ", " << fit_path
        << '\n';
    return 0;
}

int cmd_bounds(const Common& c, const SdeOpts& o, std::ostream& out)
{
    if (!o.calibrate) {
        const TheoremConstants k{o.C, o.A, o.B};
        if (c.validate) {
            for (double e : o.quant_errs) theorem_bound(o.p, o.epsilon, e, k);
            out << "validate: bounds ok (" << o.quant_errs.size() << " arguments inside the W_{-1} domain)\n";
            return 0;
        }
        Json evals = Json::array();
        std::vector<std::pair<double, double>> pts;
        for (double e : o.quant_errs) {
            const double b = theorem_bound(o.p, o.epsilon, e, k);
            evals.push_back({{"quant_err", e}, {"bound", b}});
            pts.emplace_back(e, b);
        }
        std::sort(pts.begin(), pts.end());
        bool increasing = true;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) increasing = increasing && pts[i].second < pts[i + 1].second;
        Json config{{"command", "bounds"}, {"p", o.p}, {"epsilon", o.epsilon}, {"constants", to_json(k)},
                    {"quant_errs", o.quant_errs}};
        const auto path = out_path(c, "bounds.json");
        write_artifact(path, config, "evaluations", std::move(evals));
        out << "bounds: " << pts.size() << " evaluations, bound "
            << (increasing ? "strictly increasing" : "not monotone") << " in quant_err, smallest "
            << short_number(pts.empty() ? 0.0 : pts.front().second) << " -> " << path << '\n';
        return 0;
    }

    const auto s = sde_setup(c, o);
    if (c.validate) {
        validate_sde_run(s.spec, s.sde, s.basis, s.I, s.t, o.steps);
        out << "validate: bounds calibration ok\n";
        return 0;
    }
    Rng rng(c.seed);
    std::vector<PartialQuantizer> pqs;
    for (std::size_t N : o.Ns) pqs.push_back(make_partial_quantizer(s.basis, s.I, N, rng, o.samples, workers_of(c)));
    const auto chk = theorem_bound_check(s.sde, pqs, o.p, o.epsilon, s.t, o.paths, o.held_out, rng, workers_of(c));

    auto config = sde_config("bounds", c, s, o);
    config["Ns"] = o.Ns;
    config["epsilon"] = o.epsilon;
    config["held_out"] = o.held_out;
    Json cal = Json::array();
    for (std::size_t k = 0; k < pqs.size(); ++k)
        cal.push_back({{"N", o.Ns[k]},
                       {"quant_err", chk.quant_errs[k]},
                       {"estimate", chk.calibration[k].value},
                       {"se", chk.calibration[k].se},
                       {"bound", theorem_bound(o.p, o.epsilon, chk.quant_errs[k], chk.constants)}});
    Json report{{"constants", to_json(chk.constants)},
                {"calibration", std::move(cal)},
                {"held_out_worst_ratio", chk.worst_ratio},
                {"dominated", chk.dominated}};
    const auto path = out_path(c, "bounds.json");
    write_artifact(path, config, "check", std::move(report));
    out << "bounds: fitted C=" << short_number(chk.constants.C) << " A=" << short_number(chk.constants.A)
        << " B=" << short_number(chk.constants.B) << "; bound dominates " << chk.dominated << "/" << o.held_out
        << " held-out runs -> " << path << '\n';
    return 0;
}

// ---------------------------------------------------------------- cubature

struct CubatureOpts {
    std::size_t m = 8;
    std::size_t nodes = 400;
    std::size_t N = 0;
    std::size_t m_max = 4;
    std::vector<std::string> functionals;
    std::size_t mc_samples = 20000;
    std::size_t samples = 0;
    std::size_t eval_samples = 100000;
};

int cmd_cubature(const Common& c, const CubatureOpts& o, std::ostream& out)
{
    const auto spec = make_spec(c);
    if (o.N == 0) throw DomainError("--N must be at least 1");
    std::vector<Functional> fs;
    if (o.functionals.empty()) fs = functional_registry();
    else
        for (const auto& id : o.functionals) fs.push_back(find_functional(id));
    if (c.validate) {
        out << "validate: cubature ok (" << fs.size() << " functionals)\n";
        return 0;
    }
    const auto basis = kl_basis(spec, o.m, o.nodes);
    Rng rng(c.seed);
    FqOptions fo;
    fo.samples = o.samples;
    fo.eval_samples = o.eval_samples;
    fo.workers = workers_of(c);
    const auto fq = build_fq(basis, o.N, std::min(o.m_max, o.m), rng, fo);

    Json reports = Json::array();
    std::size_t ok = 0;
    for (const auto& F : fs) {
        const auto r = cubature_error_report(fq, F, o.mc_samples, rng, workers_of(c));
        Json j{{"functional", F.id},         {"cubature", r.cubature}, {"mc_estimate", r.mc_estimate},
               {"mc_se", r.mc_se},           {"lip_ok", r.lip_ok},     {"holder_ok", r.holder_ok},
               {"convex_ok", r.convex_ok}};
        j["lip_bound"] = r.lip_bound ? Json(*r.lip_bound) : Json(nullptr);
        j["holder_bound"] = r.holder_bound ? Json(*r.holder_bound) : Json(nullptr);
        reports.push_back(std::move(j));
        if (r.lip_ok && r.holder_ok && r.convex_ok) ++ok;
    }
    auto config = base_config("cubature", c, spec);
    config["m"] = o.m;
    config["N"] = o.N;
    config["m_max"] = o.m_max;
    config["mc_samples"] = o.mc_samples;
    const auto path = out_path(c, "cubature.json");
    write_artifact(path, config, "reports", std::move(reports));
    out << "cubature: N=" << o.N << " dimension " << fq.dim << ", error bounds hold for " << ok << "/" << fs.size()
        << " functionals -> " << path << '\n';
    return 0;
}

// ---------------------------------------------------------------- driver

std::string json_scalar(const Json& v)
{
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string s;
        for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + json_scalar(v[k]);
        return s;
    }
    return v.dump();
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag)
{
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
}

// Merges a flat JSON config file into the argument list; flags given on the
// command line win.
std::vector<std::string> merge_config(std::vector<std::string> args, const std::vector<std::string>& commands)
{
    std::string path;
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
        else if (args[k].starts_with("--config=")) path = args[k].substr(9);
    }
    if (path.empty()) return args;
    const auto cfg = parse_json_file(path);
    if (!cfg.is_object()) throw DomainError("config file must hold a flat JSON object");
    const bool has_command = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return std::find(commands.begin(), commands.end(), a) != commands.end();
    });
    for (const auto& [key, value] : cfg.items()) {
        if (key == "command") {
            if (!has_command) args.insert(args.begin(), json_scalar(value));
            continue;
        }
        if (value.is_object()) throw DomainError("config key '" + key + "' must be a scalar or a list");
        const std::string flag = "--" + key;
        if (has_flag(args, flag)) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
            continue;
        }
        args.push_back(flag);
        args.push_back(json_scalar(value));
    }
    return args;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& cls, const std::string& message)
{
    err << Json{{"error", {{"kind", kind}, {"class", cls}, {"message", message}}}}.dump() << '\n';
}

} // namespace

int run(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err)
{
    const std::vector<std::string> commands{"kl", "quantize", "fq", "bridge", "sde", "rate", "cubature", "bounds"};
    CLI::App app{"Functional and partial functional quantization of Gaussian processes", "pfq"};
    app.require_subcommand(1);
    app.fallthrough();

    Common c;
    app.add_option("--family", c.family, "bm, bb, ou or fbm")->capture_default_str();
    app.add_option("--T", c.T, "horizon")->capture_default_str();
    app.add_option("--theta", c.theta, "OU mean reversion")->capture_default_str();
    app.add_option("--sigma", c.sigma, "OU volatility")->capture_default_str();
    app.add_option("--sigma0", c.sigma0, "OU initial standard deviation")->capture_default_str();
    app.add_option("--H", c.hurst, "fBm Hurst index")->capture_default_str();
    app.add_option("--seed", c.seed, "random seed")->capture_default_str();
    app.add_option("--out", c.out, "artifact path");
    app.add_option("--workers", c.workers, "worker threads (default: PFQ_WORKERS, else 1)");
    app.add_flag("--validate", c.validate, "dry-run checks; writes nothing");
    app.add_option("--config", c.config, "flat JSON file of flag values");

    KlOpts kl;
    auto* kl_cmd = app.add_subcommand("kl", "Karhunen-Loeve basis");
    kl_cmd->add_option("--m", kl.m, "number of eigenpairs")->capture_default_str();
    kl_cmd->add_option("--nodes", kl.nodes, "Nystrom quadrature nodes")->capture_default_str();
    kl_cmd->add_option("--method", kl.method, "auto, closed_form or nystrom")->capture_default_str();

    QuantizeOpts qo;
    auto* q_cmd = app.add_subcommand("quantize", "optimal quantizer of a Gaussian vector");
    q_cmd->add_option("--lambdas", qo.lambdas, "coordinate variances")->delimiter(',');
    q_cmd->add_option("--N", qo.N, "codebook size")->required();
    q_cmd->add_option("--method", qo.method, "auto, lloyd1d, lloyd_md, clvq or product")->capture_default_str();
    q_cmd->add_option("--samples", qo.samples, "training cloud size");
    q_cmd->add_option("--steps", qo.steps, "CLVQ steps");

    FqOpts fo;
    auto* fq_cmd = app.add_subcommand("fq", "functional quantizer with rank selection");
    fq_cmd->add_option("--m", fo.m, "basis size")->capture_default_str();
    fq_cmd->add_option("--nodes", fo.nodes, "Nystrom quadrature nodes")->capture_default_str();
    fq_cmd->add_option("--N", fo.N, "codebook size")->required();
    fq_cmd->add_option("--m-max", fo.m_max, "largest rank tried (default min(6, m))");
    fq_cmd->add_option("--samples", fo.samples, "training cloud per rank");
    fq_cmd->add_option("--eval-samples", fo.eval_samples, "shared evaluation cloud")->capture_default_str();
    fq_cmd->add_option("--tie-rel", fo.tie_rel, "relative tie band")->capture_default_str();
    fq_cmd->add_option("--grid-points", fo.grid_points, "plot grid")->capture_default_str();

    BridgeOpts bo;
    auto* br_cmd = app.add_subcommand("bridge", "generalized bridge Gram matrices, (H) check and samples");
    br_cmd->add_option("--I", bo.I, "K-L indices of the conditioning functions")->delimiter(',');
    br_cmd->add_option("--s", bo.s, "times at which Q(s,T) is checked")->delimiter(',');
    br_cmd->add_option("--m", bo.m, "basis size (default max I)");
    br_cmd->add_option("--nodes", bo.nodes, "Nystrom quadrature nodes")->capture_default_str();
    br_cmd->add_option("--resolution", bo.resolution, "Gram matrix resolution")->capture_default_str();
    br_cmd->add_option("--paths", bo.paths, "conditional sample paths to emit")->capture_default_str();
    br_cmd->add_option("--y", bo.y, "conditioning values of the K-L coordinates")->delimiter(',');
    br_cmd->add_option("--grid-points", bo.grid_points, "sample grid")->capture_default_str();

    SdeOpts so;
    const auto sde_options = [&](CLI::App* cmd) {
        cmd->add_option("--b", so.b, "drift coefficient")->capture_default_str();
        cmd->add_option("--sigma-coef", so.sigma, "diffusion coefficient")->capture_default_str();
        cmd->add_option("--x0", so.x0, "initial value")->capture_default_str();
        cmd->add_option("--I", so.I, "quantized K-L indices")->delimiter(',');
        cmd->add_option("--m", so.m, "basis size (default max I)");
        cmd->add_option("--nodes", so.nodes, "Nystrom quadrature nodes")->capture_default_str();
        cmd->add_option("--p", so.p, "error exponent")->capture_default_str();
        cmd->add_option("--t", so.t, "horizon of the sup (default 0.99 T)");
        cmd->add_option("--paths", so.paths, "paired paths per estimate")->capture_default_str();
        cmd->add_option("--steps", so.steps, "Euler steps over [0, T]")->capture_default_str();
        cmd->add_option("--samples", so.samples, "training cloud for |I| >= 2");
    };
    auto* sde_cmd = app.add_subcommand("sde", "L^p sup error of the partially quantized SDE");
    sde_options(sde_cmd);
    sde_cmd->add_option("--N", so.N, "codebook size")->capture_default_str();
    sde_cmd->add_option("--emit-paths", so.emit_paths, "paired trajectories to write")->capture_default_str();

    auto* rate_cmd = app.add_subcommand("rate", "log-log rate of the sup error in N");
    sde_options(rate_cmd);
    rate_cmd->add_option("--Ns", so.Ns, "codebook sizes")->delimiter(',');
    rate_cmd->add_option("--epsilon", so.epsilon, "norm gap for the quantization error")->capture_default_str();

    auto* bounds_cmd = app.add_subcommand("bounds", "error bound evaluation and calibration");
    sde_options(bounds_cmd);
    bounds_cmd->add_option("--epsilon", so.epsilon, "norm gap")->capture_default_str();
    bounds_cmd->add_option("--quant-err", so.quant_errs, "quantization errors to evaluate")->delimiter(',');
    bounds_cmd->add_option("--C", so.C)->capture_default_str();
    bounds_cmd->add_option("--A", so.A)->capture_default_str();
    bounds_cmd->add_option("--B", so.B)->capture_default_str();
    bounds_cmd->add_flag("--calibrate", so.calibrate, "fit constants and check held-out runs");
    bounds_cmd->add_option("--Ns", so.Ns, "codebook sizes for calibration")->delimiter(',');
    bounds_cmd->add_option("--held-out", so.held_out, "held-out runs")->capture_default_str();

    CubatureOpts co;
    auto* cub_cmd = app.add_subcommand("cubature", "quantization cubature and its error bounds");
    cub_cmd->add_option("--m", co.m, "basis size")->capture_default_str();
    cub_cmd->add_option("--nodes", co.nodes, "Nystrom quadrature nodes")->capture_default_str();
    cub_cmd->add_option("--N", co.N, "codebook size")->required();
    cub_cmd->add_option("--m-max", co.m_max, "largest rank tried")->capture_default_str();
    cub_cmd->add_option("--functionals", co.functionals, "registry ids (default all)")->delimiter(',');
    cub_cmd->add_option("--mc-samples", co.mc_samples, "Monte Carlo reference paths")->capture_default_str();
    cub_cmd->add_option("--samples", co.samples, "training cloud per rank");
    cub_cmd->add_option("--eval-samples", co.eval_samples, "rank-selection cloud")->capture_default_str();

    try {
        auto args = merge_config(raw, commands);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (*kl_cmd) return cmd_kl(c, kl, out);
        if (*q_cmd) return cmd_quantize(c, qo, out);
        if (*fq_cmd) return cmd_fq(c, fo, out);
        if (*br_cmd) return cmd_bridge(c, bo, out);
        if (*sde_cmd) return cmd_sde(c, so, out);
        if (*rate_cmd) return cmd_rate(c, so, out);
        if (*bounds_cmd) return cmd_bounds(c, so, out);
        if (*cub_cmd) return cmd_cubature(c, co, out);
        return 1;
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", "precondition", e.what());
        return 1;
    } catch (const Error& e) {
        const bool numerical = e.error_class() == ErrorClass::Numerical;
        report_error(err, e.kind(), numerical ? "numerical" : "precondition", e.what());
        return numerical ? 2 : 1;
    } catch (const std::exception& e) {
        report_error(err, "internal", "numerical", e.what());
        return 2;
    }
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return run(args, out, err);
}

} // namespace pfq::cli
