#pragma once

#include <string>
#include <vector>

#include "effuse/config.hpp"
#include "effuse/encoder.hpp"
#include "effuse/synth.hpp"
#include "effuse/tensor.hpp"

namespace effuse {

// Stage-1 trainable state: per-encoder layer-weight logits, per-encoder
// unification projections, the concatenation head L and the frame classifier.
struct FusionModel {
    int common_dim = 0;  // r
    int fused_dim = 0;   // m
    int vocab = 0;       // V

    std::vector<FrozenEncoder> encoders;
    std::vector<Tensor> logits;   // [k_i]
    std::vector<Tensor> unify_w;  // [r_i x r]
    std::vector<Tensor> unify_b;  // [r]
    Tensor head_w;                // [n*r x m]
    Tensor head_b;                // [m]
    Tensor cls_w;                 // [m x V]
    Tensor cls_b;                 // [V]

    std::size_t num_encoders() const { return encoders.size(); }
    int max_stride() const;
    std::size_t encoder_index(const std::string& id) const;
    std::vector<Tensor> trainables() const;

    // Frames at the common rate for an utterance of `frames` input frames:
    // every encoder is pooled to the coarsest stride present, trailing
    // remainders dropped, and the minimum across encoders is kept.
    std::int64_t common_frames(std::int64_t frames) const;
};

// Seeded initialization over the active encoder subset of the config.
FusionModel init_fusion_model(const ExperimentConfig& cfg);

// Effective layer weights softmax(logits) applied to per-layer features.
Tensor weighted_layer_sum(const LayerFeatures& feats, const Tensor& logits);

// Projects each encoder's weighted features to the common dimension and
// aligns frame rates to the coarsest stride; all outputs share one shape.
std::vector<Tensor> unify(const FusionModel& model, const std::vector<Tensor>& weighted);

// Concatenation transform followed by the projection L.
Tensor fuse(const FusionModel& model, const std::vector<Tensor>& unified);

// Per-frame class logits for the fused representation.
Tensor classify(const FusionModel& model, const Tensor& fused);

// Full stage-1 forward pass to fused features / class logits.
Tensor fusion_features(const FusionModel& model, const Utterance& u);
Tensor fusion_frame_logits(const FusionModel& model, const Utterance& u);

struct TrainSummary {
    int steps = 0;
    double final_loss = 0.0;
    double dev_fer = 0.0;
    // Mean per-predictor L1 on the train split (stage 2 only).
    std::vector<double> l1_initial;
    std::vector<double> l1_final;
};

// Mini-batch gradient descent on the frame cross-entropy; encoders stay
// frozen. Aborts with a numeric error if the loss goes non-finite.
TrainSummary train_stage1(FusionModel& model, const Corpus& corpus, const TrainConfig& cfg);

class Graph;

// Gradient-norm-clipped descent update, shared by both stages.
void sgd_step(std::vector<Tensor>& params, double learning_rate, double clip_norm);
double split_fer(const Graph& graph, const std::vector<Utterance>& split);

}  // namespace effuse
