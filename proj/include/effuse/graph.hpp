#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "effuse/predict.hpp"

namespace effuse {

using ParamManifest = std::vector<std::pair<std::string, Tensor>>;

// A runnable frame-classification pipeline assembled from trained state.
// Forward passes are pure; parameters() names exactly the state the graph
// can touch at inference.
class Graph {
public:
    virtual ~Graph() = default;
    virtual const std::string& name() const = 0;
    virtual int vocab() const = 0;
    virtual int max_stride() const = 0;
    virtual Tensor fused_features(const Utterance& u) const = 0;
    virtual Tensor frame_logits(const Utterance& u) const = 0;
    virtual ParamManifest parameters() const = 0;
    // Training-view manifest; includes teacher-only components when present.
    virtual ParamManifest training_parameters() const { return parameters(); }
};

// Stage-1 graph over all fused encoders (n = 1 covers single-encoder runs).
class FusionGraph : public Graph {
public:
    explicit FusionGraph(const FusionModel& model, std::string name = "fusion");
    const std::string& name() const override { return name_; }
    int vocab() const override { return model_.vocab; }
    int max_stride() const override { return model_.max_stride(); }
    Tensor fused_features(const Utterance& u) const override;
    Tensor frame_logits(const Utterance& u) const override;
    ParamManifest parameters() const override;

private:
    const FusionModel& model_;
    std::string name_;
};

// Stage-2 inference graph: source encoder, source unify, predictors, head
// and classifier. Teacher encoders do not appear anywhere in the graph.
class PredictionGraph : public Graph {
public:
    explicit PredictionGraph(const PredictionModel& model, std::string name = "prediction");
    const std::string& name() const override { return name_; }
    int vocab() const override { return model_.base.vocab; }
    int max_stride() const override { return model_.base.max_stride(); }
    Tensor fused_features(const Utterance& u) const override;
    Tensor frame_logits(const Utterance& u) const override;
    ParamManifest parameters() const override;
    ParamManifest training_parameters() const override;

private:
    const PredictionModel& model_;
    std::string name_;
};

// Ablation baseline sharing the stage-2 architecture: the source branch
// alone, teacher slots fed zeros, no predictor matrices.
class SourceOnlyGraph : public Graph {
public:
    explicit SourceOnlyGraph(const PredictionModel& model, std::string name = "baseline");
    const std::string& name() const override { return name_; }
    int vocab() const override { return model_.base.vocab; }
    int max_stride() const override { return model_.base.max_stride(); }
    Tensor fused_features(const Utterance& u) const override;
    Tensor frame_logits(const Utterance& u) const override;
    ParamManifest parameters() const override;

private:
    const PredictionModel& model_;
    std::string name_;
};

// Constructs the stage-2 inference graph, checking that every declared
// non-source encoder has a predictor.
std::unique_ptr<PredictionGraph> inference_graph(const PredictionModel& model);

}  // namespace effuse
