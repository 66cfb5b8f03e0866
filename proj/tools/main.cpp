#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "attnlab/analysis.hpp"
#include "commands.hpp"

using namespace attnlab;
using namespace attnlab::cli;

namespace {

int fail(int code, const std::string& kind, const std::string& msg) {
    std::cerr << error_json(kind, msg) << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attnlab: linear self-attention, HyperFeatureAttention and HyperAttention lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kLibraryVersion));

    RunOptions run;
    std::uint64_t seed = 0;
    auto* c_run = app.add_subcommand("run", "train and evaluate one experiment config");
    c_run->add_option("--config", run.config_path, "experiment config (JSON)")->required();
    c_run->add_option("--out", run.out_dir, "output directory (overrides output_dir)");
    auto* seed_opt = c_run->add_option("--seed", seed, "override the config seed");
    c_run->add_option("--threads", run.threads, "worker threads")->check(CLI::Range(1, 256));

    std::string suite;
    VerifyOptions vopt;
    auto* c_verify = app.add_subcommand("verify", "run a verification suite");
    c_verify->add_option("suite", suite, "constructions | gradients | conservation | equivalence | ha-fast | separation")
        ->required();
    c_verify->add_option("--seed", vopt.seed, "seed");
    c_verify->add_option("--steps", vopt.separation_steps, "training steps of the separation suite");
    c_verify->add_flag("--inject-fault", vopt.inject_fault, "corrupt one constructed score entry");
    std::size_t vthreads = 1;
    c_verify->add_option("--threads", vthreads, "worker threads")->check(CLI::Range(1, 256));

    std::string kernel;
    std::vector<std::size_t> lengths{64, 128, 256, 512, 1024};
    std::string bench_out;
    std::uint64_t bench_seed = 0;
    auto* c_bench = app.add_subcommand("bench", "time naive against fast HyperAttention");
    c_bench->add_option("kernel", kernel, "ha")->required();
    c_bench->add_option("--lengths", lengths, "sequence lengths");
    c_bench->add_option("--out", bench_out, "CSV file (default stdout)");
    c_bench->add_option("--seed", bench_seed, "seed");

    std::string mp_config, mp_out;
    auto* c_mp = app.add_subcommand("make-params", "build hand-constructed parameters");
    c_mp->add_option("--config", mp_config, "builder config (JSON)")->required();
    c_mp->add_option("--out", mp_out, "output directory")->required();

    std::string gd_config, gd_out;
    std::uint64_t gd_seed = 0;
    auto* c_gd = app.add_subcommand("gen-data", "write the training batch of a config");
    c_gd->add_option("--config", gd_config, "experiment config (JSON)")->required();
    c_gd->add_option("--out", gd_out, "output directory")->required();
    auto* gd_seed_opt = c_gd->add_option("--seed", gd_seed, "override the config seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kUsage;
    }

    try {
        if (*c_run) {
            if (*seed_opt) run.seed = seed;
            run_experiment(run, std::cout);
            return kOk;
        }
        if (*c_verify) {
            set_thread_count(vthreads);
            const auto rows = run_suite(suite, vopt);
            print_table(std::cout, suite, rows);
            for (const auto& r : rows)
                if (!r.pass) return kVerificationFailed;
            return kOk;
        }
        if (*c_bench) {
            if (kernel != "ha") throw ConfigError("unknown kernel '" + kernel + "'");
            const auto rows = bench_ha(lengths, bench_seed);
            if (bench_out.empty()) {
                write_bench_csv(std::cout, rows);
            } else {
                std::ofstream os(bench_out);
                if (!os) throw std::runtime_error("cannot write " + bench_out);
                write_bench_csv(os, rows);
            }
            return kOk;
        }
        if (*c_mp) {
            std::ifstream is(mp_config);
            if (!is) throw ConfigError("cannot read " + mp_config);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(is);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(mp_config + ": " + e.what());
            }
            make_params(j, mp_out);
            return kOk;
        }
        if (*c_gd) {
            auto cfg = load_config(gd_config);
            if (*gd_seed_opt) cfg.seed = gd_seed;
            gen_data(cfg, gd_out);
            return kOk;
        }
    } catch (const ConfigError& e) {
        return fail(kUsage, "config", e.what());
    } catch (const DivergenceError& e) {
        return fail(kDiverged, "divergence", e.what());
    } catch (const std::exception& e) {
        return fail(kVerificationFailed, "runtime", e.what());
    }
    return kUsage;
}
