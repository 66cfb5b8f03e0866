#include "config.hpp"

#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "attnlab/tasks.hpp"

namespace attnlab::cli {

using nlohmann::json;

namespace {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
        throw ConfigError(path + ": " + msg);
    }

    bool has(const char* key) const { return j_.contains(key); }

    std::uint64_t uint(const char* key, std::uint64_t def, std::uint64_t min = 0, bool required = false) {
        const json* v = get(key, required);
        if (!v) return def;
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0))
            fail(at(key), "expected a nonnegative integer");
        const auto x = v->get<std::uint64_t>();
        if (x < min) fail(at(key), "must be at least " + std::to_string(min));
        return x;
    }

    double num(const char* key, double def, double min, bool exclusive) {
        const json* v = get(key, false);
        if (!v) return def;
        if (!v->is_number()) fail(at(key), "expected a number");
        const double x = v->get<double>();
        if (!std::isfinite(x) || x < min || (exclusive && x == min))
            fail(at(key), std::string("must be ") + (exclusive ? "> " : ">= ") + format_g17(min));
        return x;
    }

    bool boolean(const char* key, bool def) {
        const json* v = get(key, false);
        if (!v) return def;
        if (!v->is_boolean()) fail(at(key), "expected true or false");
        return v->get<bool>();
    }

    std::string str(const char* key, const std::set<std::string>& allowed, bool required, std::string def = "") {
        const json* v = get(key, required);
        if (!v) return def;
        if (!v->is_string()) fail(at(key), "expected a string");
        auto s = v->get<std::string>();
        if (!allowed.empty() && !allowed.count(s)) {
            std::string opts;
            for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
            fail(at(key), "'" + s + "' is not one of " + opts);
        }
        return s;
    }

    const json* raw(const char* key, bool required) { return get(key, required); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
    }

    std::string at(const std::string& key) const { return path_ + "." + key; }

private:
    const json* get(const char* key, bool required) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            if (required) fail(at(key), "required field is missing");
            return nullptr;
        }
        return &*it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

TaskSpec parse_task(const json& j) {
    Reader r(j, "task");
    TaskSpec t;
    t.name = r.str("name", {"collision", "genotype", "factorized", "ternary"}, true);
    if (t.name == "collision") {
        t.N = r.uint("N", 32, 1);
        t.R = r.uint("R", 2);
        t.L = r.uint("L", 20, 2);
        t.dims = r.uint("dims", 1, 1);
        try {
            validate(CollisionConfig{t.N, t.R, t.L, t.dims});
        } catch (const std::exception& e) {
            Reader::fail("task", e.what());
        }
    } else if (t.name == "genotype") {
        t.vocab = r.uint("vocab", 0, 1, true);
        t.L = r.uint("L", 4, 1);
        if (t.L > t.vocab) Reader::fail("task.L", "genotype tuples hold distinct alleles, so L <= vocab");
        const json* d = r.raw("activators", true);
        if (!d->is_object()) Reader::fail("task.activators", "expected an object of allele -> activator list");
        for (auto it = d->begin(); it != d->end(); ++it) {
            const std::string path = "task.activators." + it.key();
            std::size_t key = 0;
            try {
                std::size_t pos = 0;
                key = std::stoul(it.key(), &pos);
                if (pos != it.key().size()) throw std::invalid_argument("");
            } catch (...) {
                Reader::fail(path, "keys must be allele indices");
            }
            if (key >= t.vocab) Reader::fail(path, "allele outside the vocabulary");
            if (!it.value().is_array()) Reader::fail(path, "expected an array");
            std::vector<std::size_t> acts;
            for (const auto& a : it.value()) {
                if (!a.is_number_unsigned() || a.get<std::size_t>() >= t.vocab)
                    Reader::fail(path, "activators must be allele indices below vocab");
                acts.push_back(a.get<std::size_t>());
            }
            t.dict[key] = acts;
        }
    } else if (t.name == "factorized") {
        t.K = r.uint("K", 4, 2);
        t.L = r.uint("L", 6, 1);
        t.task_seed = r.uint("task_seed", 0);
    } else {
        t.vocab = r.uint("vocab", 6, 1);
        t.L = r.uint("L", 8, 1);
        t.task_seed = r.uint("task_seed", 0);
    }
    r.finish();
    return t;
}

EmbeddingSpec parse_embedding(const json* j) {
    EmbeddingSpec e;
    if (!j) return e;
    Reader r(*j, "embedding");
    e.kind = embedding_kind_from_string(r.str("kind", {"one_hot", "sinusoidal", "random_orthonormal"}, false, "one_hot"));
    e.seed = r.uint("seed", 0);
    r.finish();
    return e;
}

ModelSpec parse_model(const json& j) {
    Reader r(j, "model");
    ModelSpec m;
    m.variant = r.str("variant", {"linear_sa", "hfa", "mha", "ha3"}, true);
    m.heads = r.uint("heads", m.variant == "mha" ? 4 : 3, 1);
    m.order = r.uint("order", 2, 1);
    m.layers = r.uint("layers", 2, 1);
    m.head_dim = r.uint("head_dim", 4, 1);
    m.init_scale = r.num("init_scale", m.variant == "mha" ? 0.1 : 0.01, 0.0, true);
    m.value_init = r.num("value_init", 0.5, -std::numeric_limits<double>::max(), false);
    m.init_seed = r.uint("init_seed", 0);
    r.finish();
    return m;
}

TrainingSpec parse_training(const json& j) {
    Reader r(j, "training");
    TrainingSpec t;
    t.batch_size = r.uint("batch_size", 1000, 1);
    t.gd.eta = r.num("eta", t.gd.eta, 0.0, true);
    t.gd.max_steps = r.uint("max_steps", t.gd.max_steps);
    t.gd.loss_tol = r.num("loss_tol", t.gd.loss_tol, 0.0, false);
    t.gd.init_bias = r.num("init_bias", t.gd.init_bias, 0.0, true);
    t.gd.log_period = r.uint("log_period", t.gd.log_period, 1);
    t.generic.log_period = t.gd.log_period;
    t.generic.loss_tol = r.has("loss_tol") ? t.gd.loss_tol : 0.0;
    t.generic.optimizer = optimizer_from_string(r.str("optimizer", {"gd", "adam"}, false, "adam"));
    t.generic.lr = r.num("lr", t.generic.lr, 0.0, true);
    t.generic.cosine = r.boolean("cosine", true);
    t.generic.steps = r.uint("steps", t.generic.steps);
    r.finish();
    return t;
}

EvaluationSpec parse_evaluation(const json* j, std::size_t L_train) {
    EvaluationSpec e;
    e.lengths = {L_train};
    if (!j) return e;
    Reader r(*j, "evaluation");
    if (const json* ls = r.raw("lengths", false)) {
        if (!ls->is_array() || ls->empty()) Reader::fail("evaluation.lengths", "expected a nonempty array of lengths");
        e.lengths.clear();
        for (const auto& v : *ls) {
            if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
                Reader::fail("evaluation.lengths", "lengths must be positive integers");
            e.lengths.push_back(v.get<std::size_t>());
        }
    }
    e.samples = r.uint("samples", e.samples, 1);
    e.equivalence = r.boolean("equivalence", true);
    e.length_bias = r.boolean("length_bias", true);
    e.versatility = r.boolean("versatility", true);
    r.finish();
    return e;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    Reader r(j, "config");
    ExperimentConfig cfg;
    const auto version = r.uint("schema_version", 0, 0, true);
    if (version != kConfigSchemaVersion) Reader::fail("config.schema_version", "unsupported schema version");
    cfg.seed = r.uint("seed", 0);
    cfg.output_dir = r.str("output_dir", {}, false);
    cfg.task = parse_task(*r.raw("task", true));
    cfg.embedding = parse_embedding(r.raw("embedding", false));
    cfg.model = parse_model(*r.raw("model", true));
    cfg.training = parse_training(*r.raw("training", true));
    cfg.evaluation = parse_evaluation(r.raw("evaluation", false), cfg.task.L);
    r.finish();

    const auto& t = cfg.task.name;
    const auto& v = cfg.model.variant;
    const bool ok = (v == "linear_sa" && (t == "collision" || t == "genotype")) ||
                    ((v == "hfa" || v == "mha") && t == "factorized") || (v == "ha3" && t == "ternary");
    if (!ok) Reader::fail("config.model.variant", "model '" + v + "' cannot be trained on task '" + t + "'");
    if (t == "factorized" && cfg.embedding.kind != EmbeddingKind::one_hot)
        Reader::fail("config.embedding.kind", "the factorized task uses its one-hot feature layout");
    if (cfg.embedding.kind == EmbeddingKind::sinusoidal && task_vocab(cfg.task) % 2 != 0)
        Reader::fail("config.embedding.kind", "the sinusoidal base needs an even vocabulary");
    if (cfg.embedding.kind == EmbeddingKind::sinusoidal && t == "collision" && cfg.task.dims == 2 &&
        cfg.task.N % 2 != 0)
        Reader::fail("config.embedding.kind", "the 2-D sinusoidal base needs even N");
    if (v == "hfa" && cfg.model.order < 1) Reader::fail("config.model.order", "order must be at least 1");
    cfg.raw = j;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

std::size_t task_vocab(const TaskSpec& t) {
    if (t.name == "collision") return t.dims == 1 ? t.N : t.N * t.N;
    if (t.name == "factorized") return t.K * t.K;
    return t.vocab;
}

EmbeddingBase make_base(const ExperimentConfig& cfg) {
    const auto& t = cfg.task;
    if (t.name == "factorized") {
        FeatureLayout lay{{t.K, t.K}};
        return {EmbeddingKind::one_hot, Matrix::identity(lay.dim()), 0};
    }
    const std::size_t S = task_vocab(t);
    switch (cfg.embedding.kind) {
        case EmbeddingKind::one_hot: return build_one_hot({S});
        case EmbeddingKind::sinusoidal:
            return t.name == "collision" && t.dims == 2 ? build_sinusoidal_2d(t.N) : build_sinusoidal(S);
        case EmbeddingKind::random_orthonormal: return build_random_orthonormal({S}, cfg.embedding.seed);
    }
    throw ConfigError("unknown embedding kind");
}

namespace {

std::pair<TensorN, Matrix> ternary_tables(const TaskSpec& t) {
    std::mt19937_64 rng(t.task_seed);
    std::normal_distribution<double> nd;
    TensorN f({t.vocab, t.vocab, t.vocab});
    for (double& v : f.data()) v = nd(rng);
    Matrix w(t.vocab, t.vocab);
    for (double& v : w.data()) v = nd(rng);
    for (std::size_t a = 0; a < t.vocab; ++a) w(a, a) = 0.0;
    return {f, w};
}

SequenceBatch reembed(SequenceBatch b, const EmbeddingBase& base, std::size_t S) {
    auto e = embed_batch({S}, base, b.tuples);
    e.Y = std::move(b.Y);
    e.d2 = b.d2;
    return e;
}

}  // namespace

SequenceBatch make_batch(const ExperimentConfig& cfg, const EmbeddingBase& base, std::size_t L, std::size_t B,
                         std::uint64_t seed) {
    const auto& t = cfg.task;
    if (t.name == "collision") return sample_collision_batch(CollisionConfig{t.N, t.R, L, t.dims}, B, seed, base);
    if (t.name == "genotype") return reembed(sample_genotype_batch(t.dict, t.vocab, L, B, seed), base, t.vocab);
    if (t.name == "factorized") return sample_factorized_batch(orthogonal_factor_task(t.K, t.task_seed), L, B, seed);
    auto [f, w] = ternary_tables(t);
    return reembed(sample_ternary_batch(f, w, t.vocab, L, B, seed), base, t.vocab);
}

}  // namespace attnlab::cli
