#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <map>

#include "fplab/cli.hpp"

using namespace fplab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "fplab_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put(const fs::path& p, const std::string& text) { write_text_file(p.string(), text); }

Json load(const fs::path& p) { return parse_config_text(read_text_file(p.string()), p.string()); }

// every artifact except the timestamped manifest, keyed by relative path
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            out[fs::relative(e.path(), root).string()] = read_text_file(e.path().string());
    return out;
}

}  // namespace

TEST_CASE("strict schema rejects unknown and ill-typed keys", "[cli]") {
    RunOverrides ov;
    ov.quiet = true;
    ov.out = fresh_dir("schema").string();

    SECTION("unknown top-level key") {
        const Json cfg = Json::parse(R"({"seeed": 1})");
        CHECK_THROWS_WITH(run_experiment("datagen", cfg, ov),
                          Catch::Matchers::ContainsSubstring("seeed") &&
                              Catch::Matchers::ContainsSubstring("config"));
    }
    SECTION("unknown nested key reports its full path") {
        const Json cfg = Json::parse(R"({"params": {"train": {"widht": 8}}})");
        CHECK_THROWS_WITH(run_experiment("fixedpoint", cfg, ov),
                          Catch::Matchers::ContainsSubstring("widht") &&
                              Catch::Matchers::ContainsSubstring("config.params.train"));
    }
    SECTION("wrong value type") {
        const Json cfg = Json::parse(R"({"params": {"rho": "big"}})");
        CHECK_THROWS_AS(run_experiment("fixedpoint", cfg, ov), ConfigError);
    }
    SECTION("runner-level validation is a config error too") {
        const Json cfg = Json::parse(R"({"params": {"rho": 1.5}})");
        CHECK_THROWS_WITH(run_experiment("fixedpoint", cfg, ov),
                          Catch::Matchers::ContainsSubstring("rho"));
    }
    SECTION("experiment name must match the subcommand") {
        const Json cfg = Json::parse(R"({"experiment": "covers"})");
        CHECK_THROWS_AS(run_experiment("datagen", cfg, ov), ConfigError);
    }
    SECTION("unknown subcommand") {
        CHECK_THROWS_AS(run_experiment("bogus", Json::object(), ov), ConfigError);
    }
    SECTION("config errors leave no artifacts behind") {
        const Json cfg = Json::parse(R"({"params": {"rho": 1.5}})");
        CHECK_THROWS_AS(run_experiment("fixedpoint", cfg, ov), ConfigError);
        CHECK(!fs::exists(fs::path(*ov.out) / "resolved_config.json"));
        CHECK(!fs::exists(fs::path(*ov.out) / "manifest.json"));
    }
}

TEST_CASE("resolved config echoes defaults and honors overrides", "[cli]") {
    const fs::path out = fresh_dir("resolved");
    RunOverrides ov;
    ov.quiet = true;
    ov.out = out.string();
    ov.seed = 42;

    const Json cfg = Json::parse(R"({"params": {"n": 60}})");
    const RunOutcome res = run_experiment("datagen", cfg, ov);
    REQUIRE(res.exit_code == 0);
    CHECK(res.status == "pass");

    const Json resolved = load(out / "resolved_config.json");
    CHECK(resolved.at("seed").get<std::uint64_t>() == 42);
    CHECK(resolved.at("out").get<std::string>() == out.string());
    CHECK(resolved.at("experiment").get<std::string>() == "datagen");
    // defaults the config never mentioned are recorded
    CHECK(resolved.at("params").at("n").get<std::size_t>() == 60);
    CHECK(resolved.at("params").at("class").get<std::string>() == "polynomial");
    CHECK(resolved.at("params").at("fd_step").get<double>() == 1e-4);
    CHECK(resolved.at("params").contains("grid_per_axis"));
    CHECK(resolved.contains("tolerances"));

    const Json manifest = load(out / "manifest.json");
    CHECK(manifest.at("status").get<std::string>() == "pass");
    CHECK(manifest.at("command").get<std::string>() == "datagen");
    const auto outputs = manifest.at("outputs").get<std::vector<std::string>>();
    CHECK(std::is_sorted(outputs.begin(), outputs.end()));
    CHECK(std::find(outputs.begin(), outputs.end(), "dataset.csv") != outputs.end());
    for (const std::string& name : outputs) CHECK(fs::exists(out / name));
}

TEST_CASE("equal config and seed give byte-identical artifacts", "[cli]") {
    const fs::path a = fresh_dir("det_a");
    const fs::path b = fresh_dir("det_b");
    const Json cfg = Json::parse(R"({"params": {"class": "piecewise", "n": 80}})");

    RunOverrides ov;
    ov.quiet = true;
    ov.seed = 9;
    ov.out = a.string();
    REQUIRE(run_experiment("datagen", cfg, ov).exit_code == 0);
    ov.out = b.string();
    REQUIRE(run_experiment("datagen", cfg, ov).exit_code == 0);

    auto ta = tree_bytes(a);
    auto tb = tree_bytes(b);
    REQUIRE(ta.size() >= 4);  // dataset, spec, complexity, resolved config
    // out path differs by construction; drop it from the comparison
    CHECK(ta.at("resolved_config.json") != tb.at("resolved_config.json"));
    ta.erase("resolved_config.json");
    tb.erase("resolved_config.json");
    CHECK(ta == tb);

    const fs::path c = fresh_dir("det_c");
    ov.out = c.string();
    ov.seed = 10;
    REQUIRE(run_experiment("datagen", cfg, ov).exit_code == 0);
    CHECK(tree_bytes(c).at("dataset.csv") != ta.at("dataset.csv"));
}

TEST_CASE("runtime failures still produce a manifest", "[cli]") {
    SECTION("scenario throws after the schema pass") {
        const fs::path out = fresh_dir("rt_error");
        RunOverrides ov;
        ov.quiet = true;
        ov.out = out.string();
        // empty depth list passes the schema and is rejected by the scenario
        const Json cfg = Json::parse(R"({"params": {"depths": []}})");
        const RunOutcome res = run_experiment("stochastic", cfg, ov);
        CHECK(res.exit_code == 1);
        CHECK(res.status == "error");
        CHECK(!res.error.empty());
        const Json manifest = load(out / "manifest.json");
        CHECK(manifest.at("status").get<std::string>() == "error");
        CHECK(!manifest.at("error").get<std::string>().empty());
        CHECK(fs::exists(out / "resolved_config.json"));
    }
    SECTION("failed checks are recorded and exit nonzero") {
        const fs::path out = fresh_dir("rt_fail");
        RunOverrides ov;
        ov.quiet = true;
        ov.out = out.string();
        // no symmetry breaking: the equilibrium score stays at zero, so the
        // strict improvement check cannot pass
        const Json cfg = Json::parse(
            R"({"params": {"clients": 2, "rounds": 2, "perturb_scale": 0.0,
                           "samples_per_client": 4, "hidden": 3}})");
        const RunOutcome res = run_experiment("federation", cfg, ov);
        CHECK(res.exit_code == 1);
        CHECK(res.status == "fail");
        bool saw_failed_check = false;
        for (const CheckResult& c : res.checks) saw_failed_check = saw_failed_check || !c.pass;
        CHECK(saw_failed_check);
        const Json manifest = load(out / "manifest.json");
        CHECK(manifest.at("status").get<std::string>() == "fail");
    }
}

TEST_CASE("suite runs members in order and fail-soft", "[cli]") {
    const fs::path dir = fresh_dir("suite_cfg");
    const fs::path out = fresh_dir("suite_out");
    put(dir / "good.json", R"({"experiment": "datagen", "seed": 3, "params": {"n": 40}})");
    put(dir / "broken.json", R"({"experiment": "stochastic", "params": {"depths": []}})");
    put(dir / "invalid.json", R"({"experiment": "datagen", "params": {"nn": 40}})");
    put(dir / "suite.json", R"({
      "experiment": "suite",
      "members": [
        {"name": "ok", "command": "datagen", "config": "good.json"},
        {"name": "breaks", "command": "stochastic", "config": "broken.json"},
        {"name": "rejected", "command": "datagen", "config": "invalid.json"}
      ]
    })");

    const int code = run_cli({"suite", "--config", (dir / "suite.json").string(), "--out",
                              out.string(), "--quiet"});
    CHECK(code == 1);

    const Json summary = load(out / "summary.json");
    REQUIRE(summary.at("members").size() == 3);
    CHECK(summary.at("members")[0].at("name") == "ok");
    CHECK(summary.at("members")[0].at("status") == "pass");
    CHECK(summary.at("members")[1].at("name") == "breaks");
    CHECK(summary.at("members")[1].at("status") == "error");
    CHECK(summary.at("members")[2].at("name") == "rejected");
    CHECK(summary.at("members")[2].at("status") == "config_error");
    CHECK(summary.at("failed").get<std::size_t>() == 2);

    // members that start leave their artifacts under <out>/<name>
    CHECK(fs::exists(out / "ok" / "dataset.csv"));
    CHECK(fs::exists(out / "ok" / "manifest.json"));
    CHECK(fs::exists(out / "breaks" / "manifest.json"));
    CHECK(!fs::exists(out / "rejected"));

    SECTION("suite seed override reaches every member") {
        const fs::path out2 = fresh_dir("suite_seeded");
        const int c2 = run_cli({"suite", "--config", (dir / "suite.json").string(), "--out",
                                out2.string(), "--seed", "77", "--quiet"});
        CHECK(c2 == 1);
        const Json resolved = load(out2 / "ok" / "resolved_config.json");
        CHECK(resolved.at("seed").get<std::uint64_t>() == 77);
    }
    SECTION("empty suite passes trivially") {
        const fs::path out3 = fresh_dir("suite_empty");
        put(dir / "empty.json", R"({"experiment": "suite", "members": []})");
        CHECK(run_cli({"suite", "--config", (dir / "empty.json").string(), "--out",
                       out3.string(), "--quiet"}) == 0);
        CHECK(load(out3 / "summary.json").at("status") == "pass");
    }
    SECTION("duplicate member names are a config error") {
        put(dir / "dup.json", R"({
          "experiment": "suite",
          "members": [
            {"name": "twin", "command": "datagen", "config": "good.json"},
            {"name": "twin", "command": "datagen", "config": "good.json"}
          ]
        })");
        CHECK(run_cli({"suite", "--config", (dir / "dup.json").string(), "--quiet"}) == 2);
    }
    SECTION("nested suites are rejected") {
        put(dir / "nest.json", R"({
          "experiment": "suite",
          "members": [{"name": "inner", "command": "suite", "config": "suite.json"}]
        })");
        CHECK(run_cli({"suite", "--config", (dir / "nest.json").string(), "--quiet"}) == 2);
    }
}

TEST_CASE("command line maps problems to exit codes", "[cli]") {
    const fs::path dir = fresh_dir("argv");
    put(dir / "ok.json", R"({"experiment": "datagen", "params": {"n": 30}})");

    CHECK(run_cli({"datagen", "--config", (dir / "ok.json").string(), "--out",
                   (dir / "run").string(), "--quiet"}) == 0);
    // a fresh run directory is not required to exist beforehand
    CHECK(fs::exists(dir / "run" / "manifest.json"));

    CHECK(run_cli({}) == 2);                                             // no subcommand
    CHECK(run_cli({"datagen"}) == 2);                                    // missing --config
    CHECK(run_cli({"frobnicate", "--config", "x.json"}) == 2);           // unknown subcommand
    CHECK(run_cli({"datagen", "--config", (dir / "absent.json").string()}) == 2);
    put(dir / "mangled.json", "{\"params\": ");
    CHECK(run_cli({"datagen", "--config", (dir / "mangled.json").string()}) == 2);
}
