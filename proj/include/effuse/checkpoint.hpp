#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "effuse/config.hpp"
#include "effuse/predict.hpp"

namespace effuse {

struct CheckpointInfo {
    int stage = 1;
    std::string config_hash;
    int step = 0;
    std::string source;  // stage 2 only
    nlohmann::json metrics = nlohmann::json::object();
};

// Checkpoint directory: manifest.json plus one tensor dump per parameter,
// stable names ("logits.A", "unify.A.W", "head.L", ...). Stage 2 adds
// "pred.<id>" tensors and a "source" manifest field.
void save_stage1_checkpoint(const std::filesystem::path& dir, const FusionModel& model,
                            const CheckpointInfo& info);
FusionModel load_stage1_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                   CheckpointInfo* info = nullptr);

void save_stage2_checkpoint(const std::filesystem::path& dir, const PredictionModel& model,
                            const CheckpointInfo& info);
PredictionModel load_stage2_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                       CheckpointInfo* info = nullptr);

// Stage recorded in a checkpoint manifest; checkpoint error when missing.
int checkpoint_stage(const std::filesystem::path& dir);

}  // namespace effuse
