#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "attnlab/analysis.hpp"
#include "commands.hpp"
#include "doctest.h"

using namespace attnlab;
using namespace attnlab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kBin = ATTNLAB_CLI;
const fs::path kSrc = ATTNLAB_SOURCE_DIR;

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("attnlab_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int shell(const std::string& args) {
    const int st = std::system((kBin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json smoke() {
    return json::parse(R"({
      "schema_version": 1, "seed": 1,
      "task": {"name": "collision", "N": 8, "R": 1, "L": 6},
      "model": {"variant": "linear_sa"},
      "training": {"batch_size": 200, "eta": 0.01, "max_steps": 500, "log_period": 50},
      "evaluation": {"lengths": [2, 6, 8], "samples": 100}
    })");
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("config parsing fills defaults") {
    auto cfg = parse_config(smoke());
    CHECK(cfg.task.dims == 1);
    CHECK(cfg.embedding.kind == EmbeddingKind::one_hot);
    CHECK(cfg.training.gd.loss_tol == 1e-8);
    CHECK(cfg.evaluation.samples == 100);
    CHECK(task_vocab(cfg.task) == 8);

    auto j = smoke();
    j["evaluation"].erase("lengths");
    CHECK(parse_config(j).evaluation.lengths == std::vector<std::size_t>{6});
}

TEST_CASE("config rejections") {
    auto rejects = [](auto edit) {
        auto j = smoke();
        edit(j);
        CAPTURE(j.dump());
        CHECK_THROWS_AS(parse_config(j), ConfigError);
    };
    rejects([](json& j) { j.erase("schema_version"); });
    rejects([](json& j) { j["schema_version"] = 2; });
    rejects([](json& j) { j["colour"] = 1; });
    rejects([](json& j) { j["task"]["M"] = 3; });
    rejects([](json& j) { j["task"]["N"] = "eight"; });
    rejects([](json& j) { j["task"]["N"] = -8; });
    rejects([](json& j) { j["task"]["name"] = "maze"; });
    rejects([](json& j) { j["task"]["R"] = 5; });  // footprint wider than the ring
    rejects([](json& j) { j["model"]["variant"] = "hfa"; });
    rejects([](json& j) { j["training"]["eta"] = 0; });
    rejects([](json& j) { j["training"]["batch_size"] = 0; });
    rejects([](json& j) { j["evaluation"]["lengths"] = json::array(); });
    rejects([](json& j) {
        j["task"]["N"] = 7;
        j["embedding"] = {{"kind", "sinusoidal"}};
    });
    rejects([](json& j) {
        j["task"] = {{"name", "factorized"}, {"K", 3}, {"L", 4}};
        j["model"] = {{"variant", "hfa"}};
        j["embedding"] = {{"kind", "random_orthonormal"}};
    });

    CHECK_THROWS_AS(load_config((kSrc / "no_such_config.json").string()), ConfigError);
    auto dir = scratch("bad_json");
    std::ofstream(dir / "c.json") << "{ not json";
    CHECK_THROWS_AS(load_config((dir / "c.json").string()), ConfigError);
}

TEST_CASE("shipped configs parse") {
    int n = 0;
    for (const auto& e : fs::directory_iterator(kSrc / "configs")) {
        CAPTURE(e.path().string());
        CHECK_NOTHROW(load_config(e.path().string()));
        ++n;
    }
    CHECK(n >= 5);
}

TEST_CASE("exit codes") {
    auto dir = scratch("exit");
    CHECK(shell("--help") == 0);
    CHECK(shell("") == kUsage);
    CHECK(shell("frobnicate") == kUsage);
    CHECK(shell("run --config " + (dir / "missing.json").string()) == kUsage);
    CHECK(shell("verify no-such-suite") == kUsage);
    CHECK(shell("bench softmax") == kUsage);
    CHECK(shell("run --config x.json --threads 0") == kUsage);

    auto j = smoke();
    j["training"]["eta"] = 5.0;
    write_json(dir / "div.json", j);
    CHECK(shell("run --config " + (dir / "div.json").string() + " --out " + (dir / "div").string()) == kDiverged);

    // no output directory anywhere
    write_json(dir / "noout.json", smoke());
    CHECK(shell("run --config " + (dir / "noout.json").string()) == kUsage);
}

TEST_CASE("error json") {
    auto j = json::parse(error_json("config", "bad \"thing\""));
    CHECK(j["error"]["kind"] == "config");
    CHECK(j["error"]["message"] == "bad \"thing\"");
}

TEST_CASE("run writes the report bundle") {
    auto dir = scratch("run");
    const auto cfg = (kSrc / "configs" / "collision_smoke.json").string();
    const auto t0 = std::chrono::steady_clock::now();
    REQUIRE(shell("run --config " + cfg + " --out " + (dir / "a").string()) == 0);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 10.0);
    for (const char* f : {"report.json", "metadata.json", "trace.csv", "generalization.csv", "C.csv", "Wv.csv"})
        CHECK(fs::exists(dir / "a" / f));
    CHECK(slurp(dir / "a" / "trace.csv").rfind("step,loss,max_conservation_residual,min_w\n", 0) == 0);
    CHECK(slurp(dir / "a" / "generalization.csv").rfind("L,mse\n", 0) == 0);

    // same seed and config, different thread counts: byte-identical report
    REQUIRE(shell("run --config " + cfg + " --out " + (dir / "b").string() + " --threads 3") == 0);
    CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));

    // golden copy
    CHECK(slurp(dir / "a" / "report.json") == slurp(kSrc / "tests" / "golden" / "collision_smoke_report.json"));

    // a different seed changes the data
    REQUIRE(shell("run --config " + cfg + " --out " + (dir / "c").string() + " --seed 2") == 0);
    auto r = json::parse(slurp(dir / "c" / "report.json"));
    CHECK(r["seed"] == 2);
    CHECK(r["config"]["seed"] == 2);
    CHECK(slurp(dir / "a" / "report.json") != slurp(dir / "c" / "report.json"));

    auto rep = report_from_json(json::parse(slurp(dir / "a" / "report.json")));
    REQUIRE(rep.trace);
    CHECK(rep.trace->steps == 500);
    CHECK(rep.metrics.at("final_loss") <= 1e-6);
    CHECK(matrix_from_json(json::parse(slurp(dir / "a" / "report.json"))["params"]["C"]).rows() == 8);
}

TEST_CASE("run_report for the other model families") {
    auto j = json::parse(R"({
      "schema_version": 1, "seed": 2,
      "task": {"name": "factorized", "K": 3, "L": 4},
      "model": {"variant": "hfa", "heads": 2},
      "training": {"batch_size": 50, "steps": 30},
      "evaluation": {"samples": 20}
    })");
    auto r = run_report(parse_config(j));
    CHECK(r["generic_train"]["steps"] == 30);
    CHECK(r["generalization"].size() == 1);
    CHECK(r["train"].is_null());

    j["model"] = {{"variant", "mha"}, {"layers", 1}, {"heads", 2}, {"head_dim", 2}};
    CHECK(run_report(parse_config(j))["metrics"]["parameters"].get<double>() > 0);

    auto t = json::parse(R"({
      "schema_version": 1, "seed": 2,
      "task": {"name": "ternary", "vocab": 4, "L": 4, "task_seed": 1},
      "model": {"variant": "ha3"},
      "training": {"batch_size": 100, "eta": 0.001, "max_steps": 20},
      "evaluation": {"lengths": [3, 5], "samples": 20}
    })");
    auto rt = run_report(parse_config(t));
    CHECK(rt["train"]["steps"] == 20);
    CHECK(rt["generalization"].size() == 2);
}

TEST_CASE("verify suites") {
    for (const auto& s : {"constructions", "gradients", "ha-fast"}) {
        CAPTURE(s);
        auto rows = run_suite(s, {});
        REQUIRE(!rows.empty());
        for (const auto& r : rows) {
            CAPTURE(r.check);
            CHECK(r.pass);
        }
    }
    VerifyOptions bad;
    bad.inject_fault = true;
    bool any_fail = false;
    for (const auto& r : run_suite("constructions", bad)) any_fail |= !r.pass;
    CHECK(any_fail);
    CHECK(shell("verify constructions --inject-fault") == kVerificationFailed);
    CHECK(shell("verify ha-fast") == 0);

    std::ostringstream os;
    print_table(os, "x", {{"a check", 1.0, 2.0, true}, {"b", 3.0, 2.0, false}});
    CHECK(os.str().find("PASS") != std::string::npos);
    CHECK(os.str().find("FAIL") != std::string::npos);
}

TEST_CASE("bench csv") {
    auto rows = bench_ha({8, 16}, 0);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].naive_seconds > 0);
    CHECK(rows[1].fast_seconds > 0);
    std::ostringstream os;
    write_bench_csv(os, rows);
    CHECK(os.str().rfind("L,naive_seconds,fast_seconds\n8,", 0) == 0);
    CHECK_THROWS_AS(bench_ha({0}, 0), ConfigError);
}

TEST_CASE("make-params and gen-data") {
    auto dir = scratch("mp");
    make_params(json{{"builder", "collision"}, {"N", 8}, {"R", 1}, {"embedding", "sinusoidal"}}, (dir / "c").string());
    auto C = load_csv((dir / "c" / "C.csv").string());
    CHECK(max_abs_diff(C, build_collision_sinusoidal(8, 1).C) <= 1e-15);

    make_params(json::parse(R"({"builder": "genotype", "vocab": 5, "L": 4, "activators": {"1": [3], "2": []}})"),
                (dir / "g").string());
    CHECK(load_csv((dir / "g" / "C.csv").string())(1, 3) == 1.0);
    make_params(json::parse(R"({"builder": "vision", "H": 3, "W": 3, "offsets": [[0, 1], [1, 0]]})"),
                (dir / "v").string());
    CHECK(fs::exists(dir / "v" / "params.json"));
    make_params(json::parse(R"({"builder": "exact", "F": [[1, 2], [3, 4]], "W": [[1], [-1]]})"), (dir / "e").string());
    CHECK(load_csv((dir / "e" / "C.csv").string())(1, 0) == 3.0);

    CHECK_THROWS_AS(make_params(json{{"builder", "nope"}}, (dir / "x").string()), ConfigError);
    CHECK_THROWS_AS(make_params(json{{"builder", "collision"}, {"N", 8}}, (dir / "x").string()), ConfigError);
    CHECK_THROWS_AS(make_params(json{{"N", 8}}, (dir / "x").string()), ConfigError);

    auto cfg = parse_config(smoke());
    gen_data(cfg, (dir / "d").string());
    auto b = json::parse(slurp(dir / "d" / "batch.json"));
    CHECK(b["schema_version"] == 1);
    CHECK(b["tuples"].size() == 200);
    CHECK(b["tuples"][0].size() == 6);
    const auto batch = make_batch(cfg, make_base(cfg), 6, 200, 1);
    CHECK(b["tuples"][7].get<Tuple>() == batch.tuples[7]);
    std::istringstream targets(slurp(dir / "d" / "targets.csv"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(targets, line)) ++n;
    CHECK(n == 1 + 200 * 6);
}
