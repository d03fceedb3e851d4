#pragma once

#include "pfq/bridges.hpp"
#include "pfq/functional_quantizer.hpp"
#include "pfq/kl_basis.hpp"
#include "pfq/partial_quant.hpp"
#include "pfq/process.hpp"
#include "pfq/quantizer.hpp"

#include <json.hpp>

#include <span>
#include <string>

namespace pfq {

using Json = nlohmann::ordered_json;

// Every *_from_json throws DomainError on missing or mistyped fields.

Json to_json(const ProcessSpec& spec);
ProcessSpec process_spec_from_json(const Json& j);

// Closed-form bases store eigenvalues only and are rebuilt from the formulas;
// Nyström bases also carry nodes, weights and node values.
Json to_json(const KLBasis& basis);
KLBasis kl_basis_from_json(const Json& j);

Json to_json(const Codebook& cb);
Codebook codebook_from_json(const Json& j);

Json to_json(const FunctionalQuantizer& fq);
FunctionalQuantizer functional_quantizer_from_json(const Json& j);

Json to_json(const SdeSpec& sde);
SdeSpec sde_spec_from_json(const Json& j);

Json to_json(const GramMatrix& q);
Json to_json(std::span<const HCheck> checks);
Json to_json(const RateFit& fit);
Json to_json(const TheoremConstants& k);

Json parse_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

} // namespace pfq
