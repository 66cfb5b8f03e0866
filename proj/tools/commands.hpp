#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace attnlab::cli {

enum ExitCode { kOk = 0, kVerificationFailed = 1, kUsage = 2, kDiverged = 3 };

struct RunOptions {
    std::string config_path;
    std::string out_dir;  // overrides the config's output_dir
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
};

// Writes report.json (deterministic), metadata.json (timings), trace and table CSVs and,
// for linear SA, C.csv and Wv.csv. Exceptions propagate; main maps them to exit codes.
void run_experiment(const RunOptions& opt, std::ostream& log);

// the report for an already parsed config, without touching the file system
nlohmann::json run_report(const ExperimentConfig& cfg);

struct CheckRow {
    std::string check;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    bool inject_fault = false;  // corrupt one score entry (constructions suite)
    std::size_t separation_steps = 10000;
};

const std::vector<std::string>& suite_names();
// throws ConfigError for an unknown suite
std::vector<CheckRow> run_suite(const std::string& name, const VerifyOptions& opt);
void print_table(std::ostream& os, const std::string& suite, const std::vector<CheckRow>& rows);

struct BenchRow {
    std::size_t L = 0;
    double naive_seconds = 0.0;
    double fast_seconds = 0.0;
};

// order-3 HyperAttention: ha_naive (no mask) against ha_fast_linear, d = 8, R = 4
std::vector<BenchRow> bench_ha(const std::vector<std::size_t>& lengths, std::uint64_t seed);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

// builder config -> C.csv, Wv.csv and params.json in out_dir
void make_params(const nlohmann::json& j, const std::string& out_dir);
// run config -> batch.json (tuples) and targets.csv in out_dir
void gen_data(const ExperimentConfig& cfg, const std::string& out_dir);

std::string error_json(const std::string& kind, const std::string& message);

}  // namespace attnlab::cli
