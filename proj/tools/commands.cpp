#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "attnlab/analysis.hpp"
#include "attnlab/tasks.hpp"

namespace attnlab::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalSalt = 0x6576616c;

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

template <class F>
std::string to_text(F f) {
    std::ostringstream os;
    f(os);
    return os.str();
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd;
    Matrix m(r, c);
    for (double& v : m.data()) v = scale * nd(rng);
    return m;
}

// the interaction table of a linear SA task, in symbol coordinates
InteractionSpec reference_spec(const TaskSpec& t) {
    if (t.name == "genotype") {
        auto p = build_genotype(t.dict, t.L, t.vocab);
        return {p.C, p.Wv};
    }
    const std::size_t S = task_vocab(t);
    Matrix F(S, S);
    for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = 0; b < S; ++b) {
            if (t.dims == 1) {
                F(a, b) = circ_dist(a, b, t.N) <= 2 * t.R;
            } else {
                F(a, b) = circ_dist(a / t.N, b / t.N, t.N) <= 2 * t.R && circ_dist(a % t.N, b % t.N, t.N) <= 2 * t.R;
            }
        }
    return {F, Matrix(S, 1, -1.0)};
}

double generic_mse(const GenericParams& p, const SequenceBatch& b) { return generic_loss(p, b); }

}  // namespace

json run_report(const ExperimentConfig& cfg) {
    const EmbeddingBase base = make_base(cfg);
    const auto& t = cfg.task;
    const std::size_t S = task_vocab(t);
    const SequenceBatch batch = make_batch(cfg, base, t.L, cfg.training.batch_size, cfg.seed);
    const std::uint64_t eval_seed = splitmix64(cfg.seed ^ kEvalSalt);
    BatchSampler sampler = [&](std::size_t L, std::size_t n, std::uint64_t s) { return make_batch(cfg, base, L, n, s); };

    ExperimentOutputs out;
    out.seed = cfg.seed;
    out.config = cfg.raw;
    out.config["seed"] = cfg.seed;
    const auto& ev = cfg.evaluation;

    if (cfg.model.variant == "linear_sa") {
        auto res = train_linear_sa(batch, base, cfg.training.gd);
        out.trace = res.trace;
        out.generalization = generalization_table(res.params, sampler, ev.lengths, ev.samples, eval_seed);
        const auto ref = build_exact(reference_spec(t), base);
        if (ev.equivalence) out.equivalence = compare_t(res.params, base, ref, base);
        if (ev.length_bias) {
            std::vector<std::size_t> Ls;
            for (auto L : ev.lengths)
                if (L <= S) Ls.push_back(L);
            if (Ls.size() >= 2 && t.L >= 2) out.length_bias = length_bias_probe(res.params, ref, base, Ls, t.L, 100, eval_seed);
        }
        out.metrics["final_loss"] = res.trace.final_loss;
        out.metrics["max_conservation_residual"] = res.trace.max_residual;
        out.metrics["min_w"] = res.trace.min_w;
        out.metrics["steps"] = double(res.trace.steps);
        out.metrics["converged"] = res.trace.converged ? 1.0 : 0.0;
        json params = {{"C", matrix_to_json(res.params.C)}, {"Wv", matrix_to_json(res.params.Wv)}};
        json r = assemble_report(out);
        r["params"] = params;
        if (ev.versatility) {
            for (const auto& e : versatility_check(count_matrix(batch.tuples, {S}), 1e-8))
                r["versatility"].push_back({{"rank", e.rank}, {"full_rank", e.full_rank}, {"sigma_min", e.sigma_min}});
        }
        return r;
    }
    if (cfg.model.variant == "ha3") {
        auto res = train_ha3(batch, base, cfg.training.gd);
        out.trace = res.trace;
        for (std::size_t k = 0; k < ev.lengths.size(); ++k)
            out.generalization.push_back(
                {ev.lengths[k], eval_generalization(res.params, sampler, ev.lengths[k], ev.samples, splitmix64(eval_seed + k))});
        out.metrics["final_loss"] = res.trace.final_loss;
        out.metrics["max_conservation_residual"] = res.trace.max_residual;
        out.metrics["min_w"] = res.trace.min_w;
        out.metrics["steps"] = double(res.trace.steps);
        out.metrics["converged"] = res.trace.converged ? 1.0 : 0.0;
        return assemble_report(out);
    }
    const std::size_t d = batch.X.at(0).cols();
    const auto& m = cfg.model;
    GenericParams init = m.variant == "hfa" ? init_hfa(d, 1, m.heads, m.order, m.init_scale, m.value_init, m.init_seed)
                                            : init_mha_stack(d, 1, m.layers, m.heads, m.head_dim, m.init_scale, m.init_seed);
    auto res = train_generic(init, batch, cfg.training.generic);
    for (std::size_t k = 0; k < ev.lengths.size(); ++k)
        out.generalization.push_back(
            {ev.lengths[k], generic_mse(res.params, sampler(ev.lengths[k], ev.samples, splitmix64(eval_seed + k)))});
    out.metrics["final_loss"] = res.final_loss;
    out.metrics["final_normalized_loss"] = res.final_normalized;
    out.metrics["parameters"] = double(res.parameters);
    out.generic = std::move(res);
    return assemble_report(out);
}

void run_experiment(const RunOptions& opt, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_config(opt.config_path);
    if (opt.seed) cfg.seed = *opt.seed;
    const std::string dir = !opt.out_dir.empty() ? opt.out_dir : cfg.output_dir;
    if (dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
    set_thread_count(opt.threads);

    const json report = run_report(cfg);
    fs::create_directories(dir);
    const fs::path out(dir);
    write_file(out / "report.json", dump_json(report));

    if (!report["train"].is_null()) {
        const auto tr = report_from_json(report).trace;
        write_file(out / "trace.csv", to_text([&](std::ostream& os) { tr->write_csv(os); }));
    }
    if (!report["generic_train"].is_null()) {
        const auto g = report_from_json(report).generic;
        write_file(out / "trace.csv", to_text([&](std::ostream& os) { g->write_csv(os); }));
    }
    write_file(out / "generalization.csv", to_text([&](std::ostream& os) {
                   write_generalization_csv(os, report_from_json(report).generalization);
               }));
    if (report.contains("params")) {
        write_file(out / "C.csv", to_text([&](std::ostream& os) { write_csv(os, matrix_from_json(report["params"]["C"])); }));
        write_file(out / "Wv.csv", to_text([&](std::ostream& os) { write_csv(os, matrix_from_json(report["params"]["Wv"])); }));
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::time_t now = std::time(nullptr);
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    json meta = {{"finished_at", ts.str()},
                 {"wall_seconds", secs},
                 {"threads", opt.threads},
                 {"library_version", kLibraryVersion},
                 {"config_path", opt.config_path}};
    write_file(out / "metadata.json", dump_json(meta));
    log << "wrote " << (out / "report.json").string() << " (final loss " << format_g17(report["metrics"]["final_loss"].get<double>())
        << ")\n";
}

// ---- verify suites

namespace {

CheckRow at_most(std::string name, double value, double threshold) {
    return {std::move(name), value, threshold, value <= threshold};
}
CheckRow at_least(std::string name, double value, double threshold) {
    return {std::move(name), value, threshold, value >= threshold};
}

// out_i = sum_j F(t_i, t_j) W(t_j, :)
Matrix aggregate(const Matrix& F, const Matrix& W, const Tuple& t) {
    Matrix out(t.size(), W.cols());
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j)
            for (std::size_t k = 0; k < W.cols(); ++k) out(i, k) += F(t[i], t[j]) * W(t[j], k);
    return out;
}

std::vector<CheckRow> suite_constructions(const VerifyOptions& opt) {
    std::vector<CheckRow> rows;
    std::mt19937_64 rng(opt.seed);
    double err = 0;
    for (int n = 0; n < 30; ++n) {
        const std::size_t S = 2 + rng() % 11, d2 = 1 + rng() % 3, L = std::vector<std::size_t>{3, 8, 20}[n % 3];
        InteractionSpec spec{random_matrix(S, S, rng), random_matrix(S, d2, rng)};
        auto base = build_random_orthonormal({S}, rng());
        auto p = build_exact(spec, base);
        for (const auto& t : uniform_tuples(S, L, 3, rng()))
            err = std::max(err, max_abs_diff(linear_sa(embed(base, t), p), aggregate(spec.F, spec.W, t)));
    }
    rows.push_back(at_most("exact construction vs pairwise sum", err, 1e-10));

    const std::size_t N = 32, R = 2;
    auto oh = build_collision_onehot(N, R);
    if (opt.inject_fault) oh.C(0, 0) += 1.0;
    auto sn = build_collision_sinusoidal(N, R);
    auto b1 = build_one_hot({N});
    auto b2 = build_sinusoidal(N);
    double e1 = 0, e2 = 0;
    for (std::size_t L : {2, 5, 10, 20, 30, 40}) {
        CollisionConfig cfg{N, R, L, 1};
        for (int n = 0; n < 50; ++n) {
            auto pos = sample_positions(cfg, rng);
            Tuple t;
            for (auto& q : pos) t.push_back(q.y);
            auto v = collision_value_oracle(cfg, pos);
            Matrix o1 = linear_sa(embed(b1, t), oh), o2 = linear_sa(embed(b2, t), sn);
            for (std::size_t i = 0; i < L; ++i) {
                e1 = std::max(e1, std::abs(o1(i, 0) - (v[i] - 1.0)));
                e2 = std::max(e2, std::abs(o2(i, 0) - (v[i] - 1.0)));
            }
        }
    }
    rows.push_back(at_most("collision one-hot vs value oracle", e1, 1e-9));
    rows.push_back(at_most("collision sinusoidal vs value oracle", e2, 1e-9));

    ActivationDict dict{{1, {3}}, {2, {}}, {4, {2}}};
    auto g = build_genotype(dict, 4, 5);
    double ge = std::abs(g.C(1, 3) - 1.0) + std::abs(g.C(2, 0) - 0.25) + std::abs(g.C(4, 2) - 1.0);
    rows.push_back(at_most("genotype example entries", ge, 0.0));
    return rows;
}

template <class Loss>
double fd_rel(std::vector<double>& x, const std::vector<double>& analytic, Loss loss) {
    double e = 0, s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i], h = 1e-6;
        x[i] = x0 + h;
        const double up = loss();
        x[i] = x0 - h;
        const double dn = loss();
        x[i] = x0;
        const double num = (up - dn) / (2 * h);
        e = std::max(e, std::abs(num - analytic[i]));
        s = std::max(s, std::abs(num));
    }
    return s == 0 ? e : e / s;
}

SequenceBatch random_batch(std::size_t d, std::size_t L, std::size_t B, std::mt19937_64& rng) {
    SequenceBatch b;
    for (std::size_t n = 0; n < B; ++n) {
        b.tuples.push_back(Tuple(L, 0));
        b.X.push_back(random_matrix(L, d, rng));
        b.Y.push_back(random_matrix(L, 1, rng));
    }
    b.L = L;
    b.d2 = 1;
    return b;
}

std::vector<CheckRow> suite_gradients(const VerifyOptions& opt) {
    std::mt19937_64 rng(opt.seed + 1);
    double lin = 0, ha = 0;
    for (int n = 0; n < 20; ++n) {
        const std::size_t d = 2 + n % 5, L = 1 + n % 5, B = 1 + n % 4;
        auto b = random_batch(d, L, B, rng);
        LinearSAParams p{random_matrix(d, d, rng), random_matrix(d, 1, rng)};
        auto g = grad_linear_sa(p, b);
        lin = std::max(lin, fd_rel(p.C.data(), g.dC.data(), [&] { return mse_loss(p, b); }));
        lin = std::max(lin, fd_rel(p.Wv.data(), g.dw.data(), [&] { return mse_loss(p, b); }));

        const std::size_t dh = 2 + n % 3;
        auto bh = random_batch(dh, L, B, rng);
        HAParams q = initial_ha3(build_one_hot({dh}), 1.0);
        for (double& v : q.C_dense->data()) v = std::normal_distribution<double>()(rng);
        for (double& v : q.W_dense->data()) v = std::normal_distribution<double>()(rng);
        auto gh = grad_ha3(q, bh);
        ha = std::max(ha, fd_rel(q.C_dense->data(), gh.dC.data(), [&] { return mse_loss(q, bh); }));
        ha = std::max(ha, fd_rel(q.W_dense->data(), gh.dW.data(), [&] { return mse_loss(q, bh); }));
    }
    auto gb = random_batch(4, 4, 3, rng);
    std::vector<CheckRow> rows{at_most("linear SA gradient vs central differences", lin, 1e-5),
                               at_most("order-3 HA gradient vs central differences", ha, 1e-5),
                               at_most("HFA reverse mode vs central differences",
                                       generic_gradient_check(init_hfa(4, 1, 2, 2, 0.5, 0.3, opt.seed), gb), 1e-5),
                               at_most("2-layer multi-head SA reverse mode vs central differences",
                                       generic_gradient_check(init_mha_stack(4, 1, 2, 2, 2, 0.5, opt.seed), gb), 1e-5)};
    return rows;
}

std::vector<CheckRow> suite_conservation(const VerifyOptions& opt) {
    auto base = build_one_hot({32});
    auto batch = sample_collision_batch(CollisionConfig{32, 2, 20, 1}, 5000, opt.seed, base);
    TrainConfig cfg;
    cfg.max_steps = 2000000;
    cfg.log_period = 100000;
    cfg.loss_tol = 9e-9;  // stop on the moment loss with room for the direct recomputation
    cfg.eta = 4e-5;
    auto a = train_linear_sa(batch, base, cfg);
    cfg.eta = 2e-5;
    auto b = train_linear_sa(batch, base, cfg);
    return {at_most("final MSE (eta 4e-5)", a.trace.final_loss, 1e-8),
            at_most("max |conservation residual| (eta 4e-5)", a.trace.max_residual, 1e-3),
            at_least("min w (eta 4e-5)", a.trace.min_w, cfg.init_bias - 1e-3),
            at_most("residual ratio eta/2 : eta", b.trace.max_residual / a.trace.max_residual, 0.5)};
}

std::vector<CheckRow> suite_equivalence(const VerifyOptions& opt) {
    std::vector<CheckRow> rows;
    std::mt19937_64 rng(opt.seed + 2);
    const std::size_t S = 8;
    auto oh = build_one_hot({S});
    LinearSAParams p{random_matrix(S, S, rng), random_matrix(S, 1, rng)};
    LinearSAParams q = p;
    for (std::size_t j = 0; j < S; ++j) {
        const double lam = std::exp(std::normal_distribution<double>()(rng));
        for (std::size_t i = 0; i < S; ++i) q.C(i, j) *= lam;
        q.Wv(j, 0) /= lam;
    }
    double diff = 0;
    for (std::size_t L : {2, 10, 20, 30, 40})
        for (const auto& t : uniform_tuples(S, L, 20, rng()))
            diff = std::max(diff, max_abs_diff(linear_sa(embed(oh, t), p), linear_sa(embed(oh, t), q)));
    rows.push_back(at_most("T distance of the rescaled pair", compare_t(p, oh, q, oh).max_distance, 1e-9));
    rows.push_back(at_most("output distance of the rescaled pair", diff, 1e-9));

    auto base = build_one_hot({32});
    auto batch = sample_collision_batch(CollisionConfig{32, 2, 20, 1}, 5000, opt.seed, base);
    auto res = train_linear_sa(batch, base, TrainConfig{});
    auto rep = compare_t(res.params, base, build_collision_onehot(32, 2), base);
    rows.push_back(at_most("trained vs devised T (mean squared distance)", rep.mse_distance, 1e-3));
    return rows;
}

HAParams random_cp(std::size_t d, std::size_t R, std::mt19937_64& rng) {
    HAParams p;
    p.order = 3;
    p.rank = R;
    p.mask = HAMask::none;
    p.WQ = random_matrix(d, R, rng, 0.5);
    p.keys = {random_matrix(d, R, rng, 0.5), random_matrix(d, R, rng, 0.5)};
    p.values = {random_matrix(d, R, rng, 0.5), random_matrix(d, R, rng, 0.5)};
    p.Vout = random_matrix(2, R, rng, 0.5);
    return p;
}

std::vector<CheckRow> suite_ha_fast(const VerifyOptions& opt) {
    std::mt19937_64 rng(opt.seed + 3);
    double err = 0;
    for (int n = 0; n < 5; ++n) {
        auto p = random_cp(8, 4, rng);
        Matrix X = random_matrix(16, 8, rng);
        const Matrix ref = ha_naive(X, p);
        err = std::max(err, max_abs_diff(ha_fast_linear(X, p), ref) / std::max(1.0, ref.max_abs()));
    }
    return {at_most("fast vs naive order-3 HA (L=16, R=4, d=8)", err, 1e-9)};
}

std::vector<CheckRow> suite_separation(const VerifyOptions& opt) {
    auto task = orthogonal_factor_task(4, opt.seed);
    auto batch = sample_factorized_batch(task, 6, 600, opt.seed + 1);
    GenericConfig gc;
    gc.steps = opt.separation_steps;
    gc.log_period = 1000;
    auto hfa = train_generic(init_hfa(8, 1, 3, 2, 0.01, 0.5, opt.seed), batch, gc);
    auto mha = train_generic(init_mha_stack(8, 1, 2, 4, 4, 0.1, opt.seed), batch, gc);
    return {at_most("HFA normalized MSE", hfa.final_normalized, 1e-6),
            at_least("2-layer 4-head SA normalized MSE", mha.final_normalized, 0.05),
            at_least("parameter ratio SA / HFA", double(mha.parameters) / double(hfa.parameters), 2.0)};
}

}  // namespace

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"constructions", "gradients", "conservation",
                                                "equivalence",   "ha-fast",   "separation"};
    return names;
}

std::vector<CheckRow> run_suite(const std::string& name, const VerifyOptions& opt) {
    if (name == "constructions") return suite_constructions(opt);
    if (name == "gradients") return suite_gradients(opt);
    if (name == "conservation") return suite_conservation(opt);
    if (name == "equivalence") return suite_equivalence(opt);
    if (name == "ha-fast") return suite_ha_fast(opt);
    if (name == "separation") return suite_separation(opt);
    throw ConfigError("unknown suite '" + name + "'");
}

void print_table(std::ostream& os, const std::string& suite, const std::vector<CheckRow>& rows) {
    std::size_t w = 5;
    for (const auto& r : rows) w = std::max(w, r.check.size());
    os << "suite " << suite << '\n';
    os << std::left << std::setw(int(w)) << "check" << "  " << std::setw(24) << "value" << std::setw(24) << "threshold"
       << "status\n";
    for (const auto& r : rows)
        os << std::left << std::setw(int(w)) << r.check << "  " << std::setw(24) << format_g17(r.value) << std::setw(24)
           << format_g17(r.threshold) << (r.pass ? "PASS" : "FAIL") << '\n';
}

// ---- bench

std::vector<BenchRow> bench_ha(const std::vector<std::size_t>& lengths, std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    std::mt19937_64 rng(seed);
    const HAParams p = random_cp(8, 4, rng);
    std::vector<BenchRow> rows;
    for (std::size_t L : lengths) {
        if (L == 0) throw ConfigError("bench lengths must be positive");
        const Matrix X = random_matrix(L, 8, rng, 0.5);
        auto time_of = [&](auto f) {
            // best of 3 batches, each repeated until it takes 20 ms; one batch if a call takes over 1 s
            double best = 1e300;
            for (int rep = 0; rep < 3; ++rep) {
                std::size_t n = 0;
                const auto t0 = clock::now();
                double el = 0;
                do {
                    f();
                    ++n;
                    el = std::chrono::duration<double>(clock::now() - t0).count();
                } while (el < 0.02);
                best = std::min(best, el / double(n));
                if (best > 1.0) break;
            }
            return best;
        };
        volatile double sink = 0;
        BenchRow r{L, 0, 0};
        r.naive_seconds = time_of([&] { sink = sink + ha_naive(X, p)(0, 0); });
        r.fast_seconds = time_of([&] { sink = sink + ha_fast_linear(X, p)(0, 0); });
        rows.push_back(r);
    }
    return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "L,naive_seconds,fast_seconds\n";
    for (const auto& r : rows) os << r.L << ',' << format_g17(r.naive_seconds) << ',' << format_g17(r.fast_seconds) << '\n';
}

// ---- make-params, gen-data

namespace {

std::size_t get_size(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0) throw ConfigError(std::string(key) + ": expected a nonnegative integer");
    return j[key].get<std::size_t>();
}

}  // namespace

void make_params(const json& j, const std::string& out_dir) {
    if (!j.is_object() || !j.contains("builder") || !j["builder"].is_string())
        throw ConfigError("builder config needs a \"builder\" name");
    const std::string b = j["builder"];
    LinearSAParams p;
    try {
        if (b == "collision") {
            const std::size_t N = get_size(j, "N"), R = get_size(j, "R");
            const std::string emb = j.value("embedding", "one_hot");
            if (emb == "one_hot") p = build_collision_onehot(N, R);
            else if (emb == "sinusoidal") p = build_collision_sinusoidal(N, R);
            else throw ConfigError("embedding: expected one_hot or sinusoidal");
        } else if (b == "genotype") {
            ActivationDict dict;
            for (auto it = j.at("activators").begin(); it != j.at("activators").end(); ++it)
                dict[std::stoul(it.key())] = it.value().get<std::vector<std::size_t>>();
            p = build_genotype(dict, get_size(j, "L"), get_size(j, "vocab"));
        } else if (b == "timeseries") {
            std::map<std::size_t, double> delays;
            for (auto it = j.at("delays").begin(); it != j.at("delays").end(); ++it)
                delays[std::stoul(it.key())] = it.value().get<double>();
            p = build_timeseries(delays, matrix_from_json(j.at("A")), get_size(j, "L"));
        } else if (b == "vision") {
            std::vector<Offset> offs;
            for (const auto& o : j.at("offsets")) offs.push_back({o.at(0).get<int>(), o.at(1).get<int>()});
            p = build_vision(offs, get_size(j, "H"), get_size(j, "W"));
        } else if (b == "exact") {
            p = build_exact({matrix_from_json(j.at("F")), matrix_from_json(j.at("W"))},
                            build_one_hot({matrix_from_json(j.at("F")).rows()}));
        } else {
            throw ConfigError("unknown builder '" + b + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("builder config: ") + e.what());
    }
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "C.csv", to_text([&](std::ostream& os) { write_csv(os, p.C); }));
    write_file(fs::path(out_dir) / "Wv.csv", to_text([&](std::ostream& os) { write_csv(os, p.Wv); }));
    json meta = {{"builder", b}, {"d", p.C.rows()}, {"d2", p.Wv.cols()}, {"config", j}};
    write_file(fs::path(out_dir) / "params.json", dump_json(meta));
}

void gen_data(const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto base = make_base(cfg);
    const auto batch = make_batch(cfg, base, cfg.task.L, cfg.training.batch_size, cfg.seed);
    json j = {{"schema_version", 1},
              {"task", cfg.raw.at("task")},
              {"seed", cfg.seed},
              {"L", cfg.task.L},
              {"d2", batch.d2},
              {"vocab", task_vocab(cfg.task)},
              {"tuples", batch.tuples}};
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "batch.json", dump_json(j));
    write_file(fs::path(out_dir) / "targets.csv", to_text([&](std::ostream& os) {
                   os << "sample,position";
                   for (std::size_t k = 0; k < batch.d2; ++k) os << ",y" << k;
                   os << '\n';
                   for (std::size_t n = 0; n < batch.size(); ++n)
                       for (std::size_t i = 0; i < batch.Y[n].rows(); ++i) {
                           os << n << ',' << i;
                           for (std::size_t k = 0; k < batch.Y[n].cols(); ++k) os << ',' << format_g17(batch.Y[n](i, k));
                           os << '\n';
                       }
               }));
}

std::string error_json(const std::string& kind, const std::string& message) {
    return json{{"error", {{"kind", kind}, {"message", message}}}}.dump();
}

}  // namespace attnlab::cli
