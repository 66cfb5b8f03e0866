#pragma once

#include <string>
#include <vector>

#include "attnlab/constructions.hpp"
#include "attnlab/domain.hpp"
#include "attnlab/training.hpp"
#include "json.hpp"

namespace attnlab::cli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kConfigSchemaVersion = 1;

struct TaskSpec {
    std::string name;  // collision | genotype | factorized | ternary
    std::size_t L = 20;
    // collision
    std::size_t N = 32, R = 2, dims = 1;
    // genotype, ternary
    std::size_t vocab = 0;
    ActivationDict dict;
    // factorized, ternary
    std::size_t K = 4;
    std::uint64_t task_seed = 0;
};

struct EmbeddingSpec {
    EmbeddingKind kind = EmbeddingKind::one_hot;
    std::uint64_t seed = 0;
};

struct ModelSpec {
    std::string variant;  // linear_sa | hfa | mha | ha3
    std::size_t heads = 3, order = 2, layers = 2, head_dim = 4;
    double init_scale = 0.01, value_init = 0.5;
    std::uint64_t init_seed = 0;
};

struct TrainingSpec {
    std::size_t batch_size = 1000;
    TrainConfig gd;         // linear_sa, ha3
    GenericConfig generic;  // hfa, mha
};

struct EvaluationSpec {
    std::vector<std::size_t> lengths;
    std::size_t samples = 1000;
    bool equivalence = true;
    bool length_bias = true;
    bool versatility = true;
};

struct ExperimentConfig {
    TaskSpec task;
    EmbeddingSpec embedding;
    ModelSpec model;
    TrainingSpec training;
    EvaluationSpec evaluation;
    std::string output_dir;
    std::uint64_t seed = 0;
    nlohmann::json raw;  // as given, with the effective seed written back
};

// Checks everything the published schema checks, plus cross-field rules.
// Throws ConfigError naming the offending path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// vocabulary size and base for a task
std::size_t task_vocab(const TaskSpec& t);
EmbeddingBase make_base(const ExperimentConfig& cfg);

// the batch a config trains on, and fresh batches for evaluation
SequenceBatch make_batch(const ExperimentConfig& cfg, const EmbeddingBase& base, std::size_t L, std::size_t B,
                         std::uint64_t seed);

}  // namespace attnlab::cli
