#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "effuse/encoder.hpp"
#include "effuse/synth.hpp"

namespace effuse {

struct TrainConfig {
    std::uint64_t seed = 4242;
    int steps = 400;
    int batch_size = 8;
    double learning_rate = 0.3;
    double clip_norm = 5.0;
    int log_every = 100;

    void validate() const;
};

struct FusionConfig {
    int common_dim = 32;   // r
    int fused_dim = 100;   // m
    std::vector<std::string> use;  // encoder ids to fuse; empty = all declared
    TrainConfig train;
};

struct PredictionConfig {
    std::string source = "S";
    double lambda = 1.0;
    std::map<std::string, double> lambda_per;  // per-target override by encoder id
    bool predictor_bias = false;
    bool warm_start = false;
    TrainConfig train;
};

struct AnalysisConfig {
    int sample_size = 200;
    double ridge_eps = 1e-8;
    bool held_out = false;
    std::uint64_t seed = 99;
};

struct BenchConfig {
    int reps = 5;
    int warmup = 1;
    std::string split = "dev";
};

struct ExperimentConfig {
    CorpusConfig corpus;
    std::vector<EncoderSpec> encoders;
    FusionConfig fusion;
    PredictionConfig prediction;
    AnalysisConfig analysis;
    BenchConfig bench;

    void validate() const;
    // Encoders selected by fusion.use, in declared order.
    std::vector<EncoderSpec> active_encoders() const;
    const EncoderSpec& encoder_by_id(const std::string& id) const;
};

// Three-encoder default experiment: two half-view encoders plus a full-view
// prediction source.
ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Loads a config file and layers it over the defaults. Unknown keys are
// config errors naming the offending field.
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Applies one "key=value" override with a dotted path (e.g. corpus.seed=7,
// fusion.use=A,B). The key must exist in the resolved config.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Canonical serialization hash; names run directories and checkpoints.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace effuse
