#include "attnlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace attnlab {

using nlohmann::json;

Matrix t_transform(const LinearSAParams& p, const EmbeddingBase& base) {
    const Matrix& B = base.B;
    if (B.cols() != p.C.rows() || p.C.cols() != p.C.rows() || p.Wv.rows() != p.C.rows())
        throw DimensionError("t_transform: params do not match the base width");
    if (max_abs_diff(matmul(B, B.transpose()), Matrix::identity(B.rows())) > 1e-9)
        throw std::invalid_argument("t_transform: base rows are not orthonormal");
    // scores (|S| x |S|) times projected values (|S| x d2)
    const Matrix scores = matmul(matmul(B, p.C), B.transpose());
    return matmul(scores, matmul(B, p.Wv));
}

EquivalenceReport compare_t(const LinearSAParams& learned, const EmbeddingBase& learned_base,
                            const LinearSAParams& reference, const EmbeddingBase& reference_base) {
    EquivalenceReport r;
    r.T_learned = t_transform(learned, learned_base);
    r.T_reference = t_transform(reference, reference_base);
    r.max_distance = max_abs_diff(r.T_learned, r.T_reference);
    r.mse_distance = (r.T_learned - r.T_reference).frobenius_sq() / double(r.T_learned.size());
    return r;
}

double eval_generalization(const LinearSAParams& p, const BatchSampler& sampler, std::size_t L_test,
                           std::size_t n_samples, std::uint64_t seed) {
    return mse_loss(p, sampler(L_test, n_samples, seed));
}

double eval_generalization(const HAParams& p, const BatchSampler& sampler, std::size_t L_test, std::size_t n_samples,
                           std::uint64_t seed) {
    return mse_loss(p, sampler(L_test, n_samples, seed));
}

std::vector<GeneralizationRow> generalization_table(const LinearSAParams& p, const BatchSampler& sampler,
                                                    const std::vector<std::size_t>& lengths, std::size_t n_samples,
                                                    std::uint64_t seed) {
    std::vector<GeneralizationRow> rows;
    for (std::size_t k = 0; k < lengths.size(); ++k)
        rows.push_back({lengths[k], eval_generalization(p, sampler, lengths[k], n_samples, splitmix64(seed + k))});
    return rows;
}

void write_generalization_csv(std::ostream& os, const std::vector<GeneralizationRow>& rows) {
    os << "L,mse\n";
    for (const auto& r : rows) os << r.L << ',' << format_g17(r.mse) << '\n';
}

LengthBiasReport length_bias_probe(const LinearSAParams& params, const LinearSAParams& reference,
                                   const EmbeddingBase& base, const std::vector<std::size_t>& lengths,
                                   std::size_t L_star, std::size_t samples_per_length, std::uint64_t seed) {
    if (L_star < 2) throw std::invalid_argument("length bias probe needs L* >= 2");
    if (samples_per_length == 0) throw std::invalid_argument("length bias probe needs samples");
    const std::size_t S = base.vocab_size();
    LengthBiasReport rep;
    rep.lengths = lengths;
    std::vector<std::size_t> symbols(S);
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        const std::size_t L = lengths[k];
        if (L == 0 || L > S) throw std::invalid_argument("length bias probe needs 1 <= L <= |S|");
        double sum = 0;
        std::size_t count = 0;
        for (std::size_t n = 0; n < samples_per_length; ++n) {
            auto rng = sample_rng(seed + k, n);
            std::iota(symbols.begin(), symbols.end(), std::size_t{0});
            std::shuffle(symbols.begin(), symbols.end(), rng);
            const Matrix X = embed(base, Tuple(symbols.begin(), symbols.begin() + L));
            const Matrix diff = linear_sa(X, params) - linear_sa(X, reference);
            for (double v : diff.data()) sum += v;
            count += diff.size();
        }
        rep.mean_deviation.push_back(sum / double(count));
    }
    // least squares for dev(L) = a g(L), g(L) = (L* - L) / (L* - 1)
    double gg = 0, gd = 0;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        const double g = (double(L_star) - double(lengths[k])) / (double(L_star) - 1.0);
        gg += g * g;
        gd += g * rep.mean_deviation[k];
    }
    rep.a = gg > 0 ? gd / gg : 0.0;
    double ss = 0;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        const double g = (double(L_star) - double(lengths[k])) / (double(L_star) - 1.0);
        ss += std::pow(rep.mean_deviation[k] - rep.a * g, 2);
    }
    rep.residual = lengths.empty() ? 0.0 : std::sqrt(ss / double(lengths.size()));
    return rep;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row_ptr(i), m.row_ptr(i) + m.cols()));
    return rows;
}

Matrix matrix_from_json(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("matrix must be a JSON array of rows");
    const std::size_t r = j.size(), c = r ? j[0].size() : 0;
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        if (j[i].size() != c) throw DimensionError("ragged matrix in JSON");
        for (std::size_t k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

json assemble_report(const ExperimentOutputs& out) {
    json r;
    r["schema_version"] = kReportSchemaVersion;
    r["library_version"] = kLibraryVersion;
    r["seed"] = out.seed;
    r["config"] = out.config;
    r["metrics"] = json::object();
    for (const auto& [k, v] : out.metrics) r["metrics"][k] = v;

    r["train"] = nullptr;
    if (out.trace) {
        const auto& t = *out.trace;
        json rows = json::array();
        for (const auto& row : t.rows)
            rows.push_back({{"step", row.step}, {"loss", row.loss}, {"max_residual", row.max_residual}, {"min_w", row.min_w}});
        r["train"] = {{"steps", t.steps},         {"converged", t.converged}, {"final_loss", t.final_loss},
                      {"max_residual", t.max_residual}, {"min_w", t.min_w},   {"rows", rows}};
    }
    r["generic_train"] = nullptr;
    if (out.generic) {
        const auto& g = *out.generic;
        json rows = json::array();
        for (const auto& row : g.rows)
            rows.push_back({{"step", row.step}, {"loss", row.loss}, {"normalized", row.normalized}});
        r["generic_train"] = {{"steps", g.steps},
                              {"final_loss", g.final_loss},
                              {"final_normalized", g.final_normalized},
                              {"parameter_count", g.parameters},
                              {"rows", rows}};
    }
    r["generalization"] = json::array();
    for (const auto& g : out.generalization) r["generalization"].push_back({{"L", g.L}, {"mse", g.mse}});

    r["equivalence"] = nullptr;
    if (out.equivalence) {
        const auto& e = *out.equivalence;
        r["equivalence"] = {{"mse_distance", e.mse_distance},
                            {"max_distance", e.max_distance},
                            {"T_learned", matrix_to_json(e.T_learned)},
                            {"T_reference", matrix_to_json(e.T_reference)}};
    }
    r["length_bias"] = nullptr;
    if (out.length_bias) {
        const auto& b = *out.length_bias;
        r["length_bias"] = {
            {"lengths", b.lengths}, {"mean_deviation", b.mean_deviation}, {"a", b.a}, {"residual", b.residual}};
    }
    r["versatility"] = json::array();
    for (const auto& v : out.versatility)
        r["versatility"].push_back({{"rank", v.rank}, {"full_rank", v.full_rank}, {"sigma_min", v.sigma_min}});
    return r;
}

ExperimentOutputs report_from_json(const json& j) {
    if (!j.is_object() || !j.contains("schema_version")) throw std::invalid_argument("not an experiment report");
    if (j.at("schema_version").get<int>() != kReportSchemaVersion)
        throw std::invalid_argument("unsupported report schema version");
    ExperimentOutputs out;
    out.seed = j.at("seed").get<std::uint64_t>();
    out.config = j.at("config");
    for (const auto& [k, v] : j.at("metrics").items()) out.metrics[k] = v.get<double>();
    if (const auto& t = j.at("train"); !t.is_null()) {
        TrainTrace tr;
        tr.steps = t.at("steps");
        tr.converged = t.at("converged");
        tr.final_loss = t.at("final_loss");
        tr.max_residual = t.at("max_residual");
        tr.min_w = t.at("min_w");
        for (const auto& row : t.at("rows"))
            tr.rows.push_back({row.at("step"), row.at("loss"), row.at("max_residual"), row.at("min_w")});
        out.trace = std::move(tr);
    }
    if (const auto& g = j.at("generic_train"); !g.is_null()) {
        GenericResult res;
        res.steps = g.at("steps");
        res.final_loss = g.at("final_loss");
        res.final_normalized = g.at("final_normalized");
        res.parameters = g.at("parameter_count");
        for (const auto& row : g.at("rows")) res.rows.push_back({row.at("step"), row.at("loss"), row.at("normalized")});
        out.generic = std::move(res);
    }
    for (const auto& g : j.at("generalization")) out.generalization.push_back({g.at("L"), g.at("mse")});
    if (const auto& e = j.at("equivalence"); !e.is_null()) {
        out.equivalence = EquivalenceReport{matrix_from_json(e.at("T_learned")), matrix_from_json(e.at("T_reference")),
                                            e.at("mse_distance"), e.at("max_distance")};
    }
    if (const auto& b = j.at("length_bias"); !b.is_null()) {
        out.length_bias = LengthBiasReport{b.at("lengths").get<std::vector<std::size_t>>(),
                                           b.at("mean_deviation").get<std::vector<double>>(), b.at("a"), b.at("residual")};
    }
    for (const auto& v : j.at("versatility")) out.versatility.push_back({v.at("rank"), v.at("full_rank"), v.at("sigma_min")});
    return out;
}

namespace {

void dump_rec(const json& j, std::ostringstream& os, int depth) {
    const std::string pad(2 * (depth + 1), ' '), close(2 * depth, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) os << ",\n";
                first = false;
                os << pad << json(it.key()).dump() << ": ";
                dump_rec(it.value(), os, depth + 1);
            }
            os << '\n' << close << '}';
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            // arrays of scalars stay on one line
            const bool flat = std::none_of(j.begin(), j.end(), [](const json& e) { return e.is_structured(); });
            if (flat) {
                os << '[';
                for (std::size_t k = 0; k < j.size(); ++k) {
                    if (k) os << ", ";
                    dump_rec(j[k], os, depth + 1);
                }
                os << ']';
                return;
            }
            os << "[\n";
            for (std::size_t k = 0; k < j.size(); ++k) {
                if (k) os << ",\n";
                os << pad;
                dump_rec(j[k], os, depth + 1);
            }
            os << '\n' << close << ']';
            return;
        }
        case json::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                os << "null";
                return;
            }
            os << format_g17(v);
            return;
        }
        default:
            os << j.dump();
    }
}

}  // namespace

std::string dump_json(const json& j) {
    std::ostringstream os;
    dump_rec(j, os, 0);
    os << '\n';
    return os.str();
}

}  // namespace attnlab
