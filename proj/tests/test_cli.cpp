#include "catch_amalgamated.hpp"

#include "gsvie/cli.hpp"
#include "gsvie/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using gsvie::Json;
namespace cli = gsvie::cli;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "gsvie_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text, const std::string& file = "config.yaml") {
    const fs::path p = dir / file;
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "gsvie");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

Json json_at(const fs::path& p) { return Json::parse(slurp(p)); }

const std::string kSmallExample = R"(schema_version: 1
grid: {T: 1.0, N: 96}
band: {sigma_lo: 0.75, sigma_hi: 1.25}
controls: [{strategy: lo}, {strategy: hi}, {strategy: random}]
system: {name: example-4.8}
run: {scenarios: 9, seed: 5, method: separable, samples: 2000, assumption_scenarios: 4, ns: [2, 4, 8], deltas: [0.2, 0.1]}
)";

}  // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(run({}).code == cli::kConfigError);
    CHECK(run({"simulate"}).code == cli::kConfigError);
    CHECK(run({"frobnicate", "--config", "x"}).code == cli::kConfigError);
    CHECK(run({"simulate", "--config", "/nonexistent/config.yaml"}).code == cli::kConfigError);
}

TEST_CASE("schema violations exit 2 and name the field") {
    const auto dir = scratch("schema");
    const auto cfg = write_config(dir, "schema_version: 1\ngrid: {T: 1.0, N: 8}\nsystem: {name: linear-sde}\nrun: {scenarios: -3}\n");
    const auto r = run({"simulate", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("/run/scenarios") != std::string::npos);

    const auto mismatch = write_config(dir, "schema_version: 1\ncommand: compare\ngrid: {T: 1.0, N: 8}\nsystem: {name: linear-sde}\n", "m.yaml");
    CHECK(run({"simulate", "--config", mismatch.string()}).code == cli::kConfigError);
}

TEST_CASE("zero coefficients reproduce the forcing") {
    const auto dir = scratch("zero");
    const auto out = dir / "o";
    const auto r = run({"simulate", "--config", GSVIE_CONFIG_DIR "/simulate_zero.yaml", "--out", out.string()});
    REQUIRE(r.code == cli::kOk);
    std::istringstream is(slurp(out / "solutions.csv"));
    std::string line;
    std::getline(is, line);
    CHECK(line.rfind("# gsvie schema_version 1", 0) == 0);
    std::getline(is, line);
    CHECK(line == "scenario_id,step,t,X");
    int rows = 0;
    while (std::getline(is, line)) {
        CHECK(line.substr(line.rfind(',') + 1) == "2.5");
        ++rows;
    }
    CHECK(rows == 4 * 65);
    const auto meta = json_at(out / "metadata.json");
    CHECK(meta["schema_version"] == 1);
}

TEST_CASE("blowup exits 3 with the scenario") {
    const auto dir = scratch("blowup");
    const auto cfg = write_config(dir, R"(schema_version: 1
grid: {T: 1.0, N: 64}
system: {name: linear-sde, parameters: {mu: 10000}}
run: {scenarios: 3}
)");
    const auto r = run({"simulate", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kBlowup);
    CHECK(r.err.find("scenario 0") != std::string::npos);
}

TEST_CASE("repeated runs and thread counts give identical bytes") {
    const auto dir = scratch("determinism");
    const auto cfg = write_config(dir, kSmallExample);
    for (const std::string cmd : {"simulate", "compare", "convergence"}) {
        std::vector<std::string> files;
        for (const std::string threads : {"1", "1", "3"}) {
            const auto out = dir / (cmd + threads + std::to_string(files.size()));
            const auto r = run({cmd, "--config", cfg.string(), "--out", out.string(), "--threads", threads});
            REQUIRE(r.code == cli::kOk);
            std::string all;
            for (const auto& entry : fs::directory_iterator(out)) all += entry.path().filename().string() + slurp(entry.path());
            files.push_back(all);
        }
        CHECK(files[0] == files[1]);
        CHECK(files[0] == files[2]);
    }
}

TEST_CASE("seed precedence") {
    const auto dir = scratch("seed");
    const auto cfg = write_config(dir, kSmallExample);
    auto seed_of = [&](const std::vector<std::string>& extra) {
        std::vector<std::string> args{"simulate", "--config", cfg.string(), "--out", (dir / "o").string()};
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(run(args).code == cli::kOk);
        const auto meta = json_at(dir / "o" / "metadata.json");
        return std::make_pair(meta["seed"].get<std::uint64_t>(), meta["seed_source"].get<std::string>());
    };
    ::unsetenv("GSVIE_SEED");
    CHECK(seed_of({}) == std::make_pair(std::uint64_t{5}, std::string("config")));
    ::setenv("GSVIE_SEED", "77", 1);
    CHECK(seed_of({}) == std::make_pair(std::uint64_t{77}, std::string("env")));
    CHECK(seed_of({"--seed", "9"}) == std::make_pair(std::uint64_t{9}, std::string("flag")));
    ::setenv("GSVIE_SEED", "banana", 1);
    CHECK(run({"simulate", "--config", cfg.string(), "--out", (dir / "o").string()}).code == cli::kConfigError);
    ::unsetenv("GSVIE_SEED");
}

TEST_CASE("expectation command") {
    const auto dir = scratch("expectation");
    const auto cfg = write_config(dir, R"(schema_version: 1
grid: {T: 1.0, N: 10}
band: {sigma_lo: 1.0, sigma_hi: 2.0}
system: {name: linear-sde}
run: {scenarios: 20000, method: both, functional: {kind: power, power: 2}}
)");
    REQUIRE(run({"expectation", "--config", cfg.string(), "--out", (dir / "o").string()}).code == cli::kOk);
    const auto j = json_at(dir / "o" / "expectation.json");
    CHECK(std::abs(j["lattice"].get<double>() - 4.0) < 1e-12);
    const auto& mc = j["monte_carlo"];
    double best = -1e300, se = 0;
    for (const auto& c : mc["controls"]) {
        if (c["mean"].get<double>() > best) {
            best = c["mean"].get<double>();
            se = c["se"].get<double>();
        }
    }
    CHECK(mc["value"].get<double>() == best);
    CHECK(std::abs(best - 4.0) < 3.0 * se);

    const auto odd = write_config(dir, R"(schema_version: 1
grid: {T: 1.0, N: 10}
band: {sigma_lo: 1.0, sigma_hi: 2.0}
system: {name: linear-sde}
run: {scenarios: 20000, method: monte_carlo, functional: {kind: power, power: 1}}
)", "odd.yaml");
    REQUIRE(run({"expectation", "--config", odd.string(), "--out", (dir / "odd").string()}).code == cli::kOk);
    const auto o = json_at(dir / "odd" / "expectation.json")["monte_carlo"];
    for (const auto& c : o["controls"]) CHECK(std::abs(c["mean"].get<double>()) < 3.0 * c["se"].get<double>());

    const auto degenerate = write_config(dir, R"(schema_version: 1
grid: {T: 1.0, N: 3}
band: {sigma_lo: 1.0, sigma_hi: 1.0}
system: {name: linear-sde}
run: {method: lattice, functional: {kind: power, power: 4}}
)", "deg.yaml");
    REQUIRE(run({"expectation", "--config", degenerate.string(), "--out", (dir / "deg").string()}).code == cli::kOk);
    // binomial oracle: B_T in {+-sqrt(3), +-1/sqrt(3)} with weights 1/8, 3/8
    const double expected = 2.0 * (9.0 / 8.0 + 3.0 / 8.0 / 9.0);
    CHECK(std::abs(json_at(dir / "deg" / "expectation.json")["lattice"].get<double>() - expected) < 1e-12);

    const auto huge = write_config(dir, R"(schema_version: 1
grid: {T: 1.0, N: 20}
band: {sigma_lo: 1.0, sigma_hi: 2.0}
system: {name: linear-sde}
run: {method: lattice, functional: {kind: max}}
)", "huge.yaml");
    const auto r = run({"expectation", "--config", huge.string(), "--out", (dir / "huge").string()});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("/grid/N") != std::string::npos);
}

TEST_CASE("compare command exit codes") {
    const auto dir = scratch("compare");
    const auto ok = write_config(dir, kSmallExample);
    REQUIRE(run({"compare", "--config", ok.string(), "--out", (dir / "ok").string()}).code == cli::kOk);
    const auto rep = json_at(dir / "ok" / "comparison.json");
    CHECK(rep["violations"] == 0);
    CHECK(rep["min_difference"].get<double>() >= -rep["tol"].get<double>());
    CHECK(json_at(dir / "ok" / "assumptions.json")["comparison_applicable"] == true);

    std::string broken_text = kSmallExample;
    broken_text.replace(broken_text.find("example-4.8"), 11, "broken-a4");
    // at N = 96 the default budget 10 sqrt(dt) exceeds the 0.5 gap at t = 0
    broken_text.replace(broken_text.find("samples:"), 0, "tol_factor: 1, ");
    const auto broken = write_config(dir, broken_text, "broken.yaml");
    CHECK(run({"compare", "--config", broken.string(), "--out", (dir / "b").string()}).code ==
          cli::kComparisonViolation);
    CHECK_FALSE(fs::exists(dir / "b" / "comparison.json"));
    CHECK(run({"compare", "--config", broken.string(), "--out", (dir / "bf").string(), "--force"}).code ==
          cli::kComparisonViolation);
    const auto forced = json_at(dir / "bf" / "comparison.json");
    CHECK(forced["violations"].get<int>() > 0);
    CHECK(forced["worst"]["t"].get<double>() < 0.25);
    CHECK(run({"check-assumptions", "--config", broken.string(), "--out", (dir / "bc").string()}).code ==
          cli::kComparisonViolation);

    std::string same_text = kSmallExample;
    same_text.replace(same_text.find("example-4.8"), 11, "identical");
    const auto same = write_config(dir, same_text, "same.yaml");
    REQUIRE(run({"compare", "--config", same.string(), "--out", (dir / "s").string()}).code == cli::kOk);
    CHECK(json_at(dir / "s" / "comparison.json")["min_difference"].get<double>() == 0.0);
    REQUIRE(run({"convergence", "--config", same.string(), "--out", (dir / "sc").string()}).code == cli::kOk);
    std::istringstream is(slurp(dir / "sc" / "convergence.csv"));
    std::string line;
    std::getline(is, line);
    std::getline(is, line);
    CHECK(line == "n,delta,control,estimate,se");
    int rows = 0;
    while (std::getline(is, line)) {
        const auto a = line.find(',', line.find(',', line.find(',') + 1) + 1);
        CHECK(line.substr(a + 1, line.find(',', a + 1) - a - 1) == "0");
        ++rows;
    }
    CHECK(rows == (3 + 3 * 2) * 4);
}

TEST_CASE("shipped configs run") {
    const auto dir = scratch("shipped");
    CHECK(run({"check-assumptions", "--config", GSVIE_CONFIG_DIR "/check_example48.json", "--out",
               (dir / "c").string()})
              .code == cli::kOk);
    CHECK(run({"simulate", "--config", GSVIE_CONFIG_DIR "/picard_exp_kernel.yaml", "--out", (dir / "p").string()})
              .code == cli::kOk);
    CHECK(run({"compare", "--config", GSVIE_CONFIG_DIR "/compare_broken_a4.yaml", "--out", (dir / "b").string()})
              .code == cli::kComparisonViolation);
}
