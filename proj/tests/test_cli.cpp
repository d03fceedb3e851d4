#include "pfq/cli/commands.hpp"
#include "pfq/serialize.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pfq;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result pfq_run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Fresh scratch directory per test.
fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("pfq_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string without_timestamp(const std::string& csv)
{
    std::istringstream in(csv);
    std::string line, kept;
    while (std::getline(in, line))
        if (!line.starts_with("# generated:")) kept += line + '\n';
    return kept;
}

Json error_of(const Result& r)
{
    const auto j = Json::parse(r.err);
    EXPECT_TRUE(j.contains("error"));
    return j["error"];
}

} // namespace

TEST(CliExamples, KlWritesTheBrownianBasis)
{
    const auto dir = scratch("kl");
    const auto path = (dir / "basis.json").string();
    const auto r = pfq_run({"kl", "--family", "bm", "--T", "1", "--m", "5", "--out", path});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("lambda_1=0.405285"), std::string::npos) << r.out;
    const auto j = parse_json_file(path);
    EXPECT_EQ(j["config"]["command"], "kl");
    const auto b = kl_basis_from_json(j["basis"]);
    EXPECT_NEAR(b.eigenvalue(1), 0.405285, 1e-6);
    EXPECT_EQ(b.m(), 5u);
}

TEST(CliExamples, RateSlopeForOneCoordinate)
{
    const auto dir = scratch("rate");
    const auto path = (dir / "rate.csv").string();
    const auto r = pfq_run({"rate", "--family", "bm", "--I", "1", "--p", "2", "--Ns", "1,2,4,8,16,32,64", "--seed",
                            "7", "--out", path});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto fit = parse_json_file((dir / "rate_fit.json").string());
    EXPECT_NEAR(fit["fit"]["slope"].get<double>(), -1.0, 0.3);
    const auto csv = slurp(path);
    EXPECT_TRUE(csv.starts_with("# config: {"));
    EXPECT_NE(csv.find("\nN,p,t,estimate,se,seed\n"), std::string::npos);
    EXPECT_NE(r.out.find("slope"), std::string::npos);
}

TEST(CliExamples, FbmQuantizerSelectsDimensionThree)
{
    const auto dir = scratch("fq");
    const auto path = (dir / "fq.json").string();
    const auto r = pfq_run({"fq", "--family", "fbm", "--H", "0.25", "--N", "20", "--out", path});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("selected dimension 3"), std::string::npos) << r.out;
    // Plot data: t followed by one column per quantizer path.
    const auto csv = slurp(dir / "fq_paths.csv");
    EXPECT_NE(csv.find("\nt,x1,"), std::string::npos);
    EXPECT_NE(csv.find(",x20\n"), std::string::npos);
}

TEST(CliValidate, KlFunctionsSatisfyH)
{
    const auto dir = scratch("validate_h");
    const auto r = pfq_run({"bridge", "--family", "bm", "--I", "1,2,3", "--validate", "--out",
                            (dir / "x.json").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("(H) holds"), std::string::npos);
    EXPECT_TRUE(fs::is_empty(dir));
}

TEST(CliValidate, DuplicatedFunctionsNameH)
{
    const auto r = pfq_run({"bridge", "--family", "bm", "--I", "2,2", "--validate"});
    EXPECT_EQ(r.code, 1);
    const auto e = error_of(r);
    EXPECT_EQ(e["kind"], "hypothesis_H");
    EXPECT_EQ(e["class"], "precondition");
    EXPECT_NE(e["message"].get<std::string>().find("(H)"), std::string::npos);
}

TEST(CliValidate, SdeHorizonAtTIsRejected)
{
    const auto dir = scratch("validate_t");
    const auto r = pfq_run({"sde", "--family", "bm", "--T", "1", "--t", "1", "--validate", "--out",
                            (dir / "x.csv").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(error_of(r)["kind"], "domain");
    EXPECT_TRUE(fs::is_empty(dir));
    EXPECT_EQ(pfq_run({"sde", "--family", "bm", "--t", "0.5", "--validate"}).code, 0);
}

TEST(CliErrors, ExitCodes)
{
    EXPECT_EQ(pfq_run({}).code, 1);
    EXPECT_EQ(error_of(pfq_run({"frobnicate"}))["kind"], "usage");
    EXPECT_EQ(pfq_run({"kl", "--m", "notanumber"}).code, 1);
    EXPECT_EQ(error_of(pfq_run({"kl", "--family", "levy"}))["kind"], "domain");
    EXPECT_EQ(error_of(pfq_run({"sde", "--family", "fbm", "--H", "0.3"}))["kind"], "unsupported_family");
    EXPECT_EQ(pfq_run({"kl", "--out", "/nonexistent-dir/basis.json"}).code, 1);

    const auto blow = pfq_run({"sde", "--b", "const(1e308)", "--x0", "1e308", "--paths", "1000"});
    EXPECT_EQ(blow.code, 2);
    EXPECT_EQ(error_of(blow)["class"], "numerical");
    EXPECT_EQ(error_of(blow)["kind"], "blow_up");
}

TEST(CliErrors, HelpSucceeds)
{
    const auto r = pfq_run({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("Subcommands"), std::string::npos);
}

TEST(CliDeterminism, CsvIsByteIdenticalAcrossRunsAndWorkers)
{
    const auto dir = scratch("determinism");
    std::vector<std::string> csv;
    for (const char* workers : {"1", "1", "3"}) {
        const auto path = (dir / (std::string("r") + std::to_string(csv.size()) + ".csv")).string();
        const auto r = pfq_run({"rate", "--I", "1,2", "--Ns", "1,4,16", "--seed", "5", "--workers", workers,
                                "--out", path});
        ASSERT_EQ(r.code, 0) << r.err;
        csv.push_back(without_timestamp(slurp(path)));
    }
    EXPECT_EQ(csv[0], csv[1]);
    EXPECT_EQ(csv[0], csv[2]);

    const auto other = (dir / "other.csv").string();
    ASSERT_EQ(pfq_run({"rate", "--I", "1,2", "--Ns", "1,4,16", "--seed", "6", "--out", other}).code, 0);
    EXPECT_NE(csv[0], without_timestamp(slurp(other)));
}

TEST(CliConfig, FileFillsFlagsTheCommandLineLeavesOpen)
{
    const auto dir = scratch("config");
    const auto cfg = (dir / "run.json").string();
    write_json_file(cfg, Json{{"command", "sde"}, {"family", "bm"}, {"N", 4}, {"I", {1}}, {"seed", 3},
                              {"out", (dir / "a.csv").string()}});
    ASSERT_EQ(pfq_run({"--config", cfg}).code, 0);
    const auto a = slurp(dir / "a.csv");
    EXPECT_NE(a.find("\"N\":4"), std::string::npos);
    EXPECT_NE(a.find("\"seed\":3"), std::string::npos);

    ASSERT_EQ(pfq_run({"--config", cfg, "--N", "2", "--out", (dir / "b.csv").string()}).code, 0);
    EXPECT_NE(slurp(dir / "b.csv").find("\"N\":2"), std::string::npos);

    write_json_file(cfg, Json{{"command", "kl"}, {"spec", {{"family", "bm"}}}});
    EXPECT_EQ(pfq_run({"--config", cfg}).code, 1);
    EXPECT_EQ(pfq_run({"--config", (dir / "missing.json").string()}).code, 1);
}

TEST(CliArtifacts, EveryArtifactCarriesItsConfig)
{
    const auto dir = scratch("artifacts");
    const auto q = (dir / "q.json").string();
    ASSERT_EQ(pfq_run({"quantize", "--lambdas", "1,0.25", "--N", "4", "--samples", "40000", "--seed", "9", "--out", q})
                  .code,
              0);
    const auto j = parse_json_file(q);
    EXPECT_EQ(j["config"]["seed"], 9);
    EXPECT_EQ(codebook_from_json(j["codebook"]).size(), 4u);

    const auto b = (dir / "bridge.json").string();
    ASSERT_EQ(pfq_run({"bridge", "--family", "bb", "--I", "1,2", "--paths", "3", "--out", b}).code, 0);
    EXPECT_EQ(parse_json_file(b)["config"]["command"], "bridge");
    const auto samples = slurp(dir / "bridge_samples.csv");
    EXPECT_TRUE(samples.starts_with("# config: {\"command\":\"bridge\""));

    const auto bd = (dir / "bounds.json").string();
    ASSERT_EQ(pfq_run({"bounds", "--out", bd}).code, 0);
    const auto ev = parse_json_file(bd)["evaluations"];
    ASSERT_EQ(ev.size(), 6u);
    for (std::size_t k = 0; k + 1 < ev.size(); ++k)
        EXPECT_GT(ev[k]["bound"].get<double>(), ev[k + 1]["bound"].get<double>());
}
