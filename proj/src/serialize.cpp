#include "pfq/serialize.hpp"

#include "pfq/errors.hpp"

#include <fstream>

namespace pfq {

namespace {

const Json& field(const Json& j, const char* key)
{
    if (!j.is_object()) throw DomainError(std::string("expected a JSON object holding '") + key + "'");
    const auto it = j.find(key);
    if (it == j.end()) throw DomainError(std::string("missing field '") + key + "'");
    return *it;
}

template <class T>
T get(const Json& j, const char* key)
{
    try {
        return field(j, key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("field '") + key + "': " + e.what());
    }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback)
{
    return j.contains(key) ? get<T>(j, key) : fallback;
}

Json rows_of(const Eigen::MatrixXd& m)
{
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace

Json to_json(const ProcessSpec& spec)
{
    Json j{{"family", family_name(spec.family)}, {"T", spec.T}};
    if (spec.family == Family::OrnsteinUhlenbeck) {
        j["theta"] = spec.theta;
        j["sigma"] = spec.sigma;
        j["sigma0"] = spec.sigma0;
    }
    if (spec.family == Family::FractionalBrownianMotion) j["hurst"] = spec.hurst;
    return j;
}

ProcessSpec process_spec_from_json(const Json& j)
{
    ProcessSpec s;
    s.family = parse_family(get<std::string>(j, "family"));
    s.T = get<double>(j, "T");
    if (s.family == Family::OrnsteinUhlenbeck) {
        s.theta = get<double>(j, "theta");
        s.sigma = get<double>(j, "sigma");
        s.sigma0 = get_or<double>(j, "sigma0", 0.0);
    }
    if (s.family == Family::FractionalBrownianMotion) s.hurst = get<double>(j, "hurst");
    s.validate();
    return s;
}

Json to_json(const KLBasis& basis)
{
    const bool closed = basis.representation() == Representation::ClosedForm;
    Json j{{"spec", to_json(basis.spec())},
           {"m", basis.m()},
           {"eigenvalues", basis.eigenvalues()},
           {"representation", closed ? "closed_form" : "nystrom"},
           {"nodes", basis.nodes()}};
    if (!closed) j["weights"] = basis.weights();
    j["values"] = closed ? Json::array() : rows_of(basis.node_values());
    return j;
}

KLBasis kl_basis_from_json(const Json& j)
{
    const auto spec = process_spec_from_json(field(j, "spec"));
    const auto m = get<std::size_t>(j, "m");
    auto eig = get<std::vector<double>>(j, "eigenvalues");
    if (eig.size() != m) throw DomainError("eigenvalue count does not match m");
    const auto repr = get<std::string>(j, "representation");
    if (repr == "closed_form") {
        auto b = kl_closed_form(spec, m);
        for (std::size_t i = 0; i < m; ++i)
            if (std::abs(b.eigenvalues()[i] - eig[i]) > 1e-12 * b.eigenvalues()[0])
                throw DomainError("stored eigenvalues disagree with the closed form");
        return b;
    }
    if (repr != "nystrom") throw DomainError("unknown representation '" + repr + "'");
    auto nodes = get<std::vector<double>>(j, "nodes");
    auto weights = get<std::vector<double>>(j, "weights");
    const auto values = get<std::vector<std::vector<double>>>(j, "values");
    Eigen::MatrixXd v(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t r = 0; r < values.size(); ++r) {
        if (values[r].size() != nodes.size()) throw DomainError("node value row has the wrong length");
        for (std::size_t c = 0; c < nodes.size(); ++c)
            v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r][c];
    }
    return KLBasis::from_nystrom(spec, std::move(eig), std::move(nodes), std::move(weights), std::move(v));
}

Json to_json(const Codebook& cb)
{
    Json pts = Json::array();
    for (std::size_t k = 0; k < cb.size(); ++k) {
        const auto p = cb.point(k);
        pts.push_back(std::vector<double>(p.begin(), p.end()));
    }
    return Json{{"d", cb.d},
                {"lambdas", cb.lambdas},
                {"points", std::move(pts)},
                {"weights", cb.weights},
                {"distortion", cb.distortion},
                {"distortion_se", cb.distortion_se},
                {"distortion_alt", cb.distortion_alt},
                {"method", cb.method},
                {"seed", cb.seed}};
}

Codebook codebook_from_json(const Json& j)
{
    Codebook cb;
    cb.d = get<std::size_t>(j, "d");
    cb.lambdas = get<std::vector<double>>(j, "lambdas");
    for (const auto& p : get<std::vector<std::vector<double>>>(j, "points")) {
        if (p.size() != cb.d) throw DomainError("codebook point has the wrong dimension");
        cb.points.insert(cb.points.end(), p.begin(), p.end());
    }
    cb.weights = get<std::vector<double>>(j, "weights");
    cb.distortion = get<double>(j, "distortion");
    cb.distortion_se = get_or<double>(j, "distortion_se", 0.0);
    cb.distortion_alt = get_or<double>(j, "distortion_alt", cb.distortion);
    cb.method = get<std::string>(j, "method");
    cb.seed = get_or<std::uint64_t>(j, "seed", 0);
    cb.validate();
    return cb;
}

Json to_json(const FunctionalQuantizer& fq)
{
    Json sel = Json::array();
    for (const auto& r : fq.selection)
        sel.push_back({{"m", r.m},
                       {"tail", r.tail},
                       {"block", r.block},
                       {"total", r.total},
                       {"shared_total", r.shared_total},
                       {"paired_se", r.paired_se}});
    return Json{{"basis", to_json(fq.basis)},
                {"dim", fq.dim},
                {"codebook", to_json(fq.codebook)},
                {"tail", fq.tail},
                {"total_distortion", fq.total_distortion},
                {"selection", std::move(sel)},
                {"ties", fq.ties}};
}

FunctionalQuantizer functional_quantizer_from_json(const Json& j)
{
    auto fq = make_fq(kl_basis_from_json(field(j, "basis")), codebook_from_json(field(j, "codebook")));
    if (get<std::size_t>(j, "dim") != fq.dim) throw DomainError("stored dimension disagrees with the codebook");
    for (const auto& r : field(j, "selection"))
        fq.selection.push_back({get<std::size_t>(r, "m"), get<double>(r, "tail"), get<double>(r, "block"),
                                get<double>(r, "total"), get_or<double>(r, "shared_total", 0.0),
                                get_or<double>(r, "paired_se", 0.0)});
    fq.ties = get_or<std::vector<std::size_t>>(j, "ties", {});
    return fq;
}

Json to_json(const SdeSpec& sde)
{
    return Json{{"b", sde.b.to_string()},         {"sigma", sde.sigma.to_string()}, {"x0", sde.x0},
                {"b_lip", sde.b_lip},             {"sigma_lip", sde.sigma_lip},     {"sigma_max", sde.sigma_max}};
}

SdeSpec sde_spec_from_json(const Json& j)
{
    auto s = SdeSpec::make(parse_coefficient(get<std::string>(j, "b")),
                           parse_coefficient(get<std::string>(j, "sigma")), get_or<double>(j, "x0", 0.0));
    s.b_lip = get_or<double>(j, "b_lip", s.b_lip);
    s.sigma_lip = get_or<double>(j, "sigma_lip", s.sigma_lip);
    s.sigma_max = get_or<double>(j, "sigma_max", s.sigma_max);
    s.validate();
    return s;
}

Json to_json(const GramMatrix& q) { return Json{{"s", q.s}, {"T", q.T}, {"entries", rows_of(q.entries)}}; }

Json to_json(std::span<const HCheck> checks)
{
    Json out = Json::array();
    for (const auto& h : checks)
        out.push_back({{"s", h.s},
                       {"min_singular_value", h.min_singular_value},
                       {"condition_number", h.condition_number},
                       {"pass", h.pass}});
    return out;
}

Json to_json(const RateFit& fit)
{
    Json rows = Json::array();
    for (const auto& r : fit.rows)
        rows.push_back({{"N", r.N},
                        {"estimate", r.error.value},
                        {"se", r.error.se},
                        {"quant_err", r.quant_err.value},
                        {"quant_err_se", r.quant_err.se}});
    return Json{{"slope", fit.slope},
                {"slope_se", fit.slope_se},
                {"ci", {fit.ci_low, fit.ci_high}},
                {"rows", std::move(rows)}};
}

Json to_json(const TheoremConstants& k) { return Json{{"C", k.C}, {"A", k.A}, {"B", k.B}}; }

Json parse_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j)
{
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw PreconditionError("failed writing '" + path + "'");
}

} // namespace pfq
