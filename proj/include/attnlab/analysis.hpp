#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/domain.hpp"
#include "attnlab/training.hpp"
#include "json.hpp"

namespace attnlab {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr int kReportSchemaVersion = 1;

// T[mu,k] = sum_nu (x(mu)^T C x(nu)) (x(nu)^T W[:,k]); base rows must be orthonormal
Matrix t_transform(const LinearSAParams& p, const EmbeddingBase& base);

struct EquivalenceReport {
    Matrix T_learned;
    Matrix T_reference;
    double mse_distance = 0.0;  // mean of squared entry differences
    double max_distance = 0.0;
};

EquivalenceReport compare_t(const LinearSAParams& learned, const EmbeddingBase& learned_base,
                            const LinearSAParams& reference, const EmbeddingBase& reference_base);

// fresh batch of n samples at length L
using BatchSampler = std::function<SequenceBatch(std::size_t L, std::size_t n, std::uint64_t seed)>;

double eval_generalization(const LinearSAParams& p, const BatchSampler& sampler, std::size_t L_test,
                           std::size_t n_samples, std::uint64_t seed);
double eval_generalization(const HAParams& p, const BatchSampler& sampler, std::size_t L_test, std::size_t n_samples,
                           std::uint64_t seed);

struct GeneralizationRow {
    std::size_t L = 0;
    double mse = 0.0;
};

std::vector<GeneralizationRow> generalization_table(const LinearSAParams& p, const BatchSampler& sampler,
                                                    const std::vector<std::size_t>& lengths, std::size_t n_samples,
                                                    std::uint64_t seed);
void write_generalization_csv(std::ostream& os, const std::vector<GeneralizationRow>& rows);

struct LengthBiasReport {
    std::vector<std::size_t> lengths;
    std::vector<double> mean_deviation;  // mean over tokens and samples of f_params - f_reference
    double a = 0.0;                      // fitted deviation a (L* - L) / (L* - 1)
    double residual = 0.0;               // rms misfit of the affine model
};

// Inputs use L distinct symbols, so L must not exceed the vocabulary size.
LengthBiasReport length_bias_probe(const LinearSAParams& params, const LinearSAParams& reference,
                                   const EmbeddingBase& base, const std::vector<std::size_t>& lengths,
                                   std::size_t L_star, std::size_t samples_per_length = 200, std::uint64_t seed = 0);

struct ExperimentOutputs {
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::optional<TrainTrace> trace;
    std::optional<GenericResult> generic;  // only rows, steps and final losses are reported
    std::vector<GeneralizationRow> generalization;
    std::optional<EquivalenceReport> equivalence;
    std::optional<LengthBiasReport> length_bias;
    std::vector<VersatilityEntry> versatility;
    std::map<std::string, double> metrics;
};

nlohmann::json assemble_report(const ExperimentOutputs& out);
ExperimentOutputs report_from_json(const nlohmann::json& j);

// JSON text with sorted keys, two-space indent and every float as %.17g
std::string dump_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace attnlab
