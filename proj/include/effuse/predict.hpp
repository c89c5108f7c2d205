#pragma once

#include <string>
#include <vector>

#include "effuse/fusion.hpp"

namespace effuse {

// Stage-2 state: the stage-1 model with layer-weight logits and teacher
// unification projections frozen, plus one predictor matrix per non-source
// encoder mapping the source's unified features into that encoder's slot.
struct PredictionModel {
    FusionModel base;
    std::size_t source = 0;
    std::vector<std::size_t> targets;    // non-source encoder indices, declared order
    std::vector<Tensor> predictors;      // [r x r] per target
    std::vector<Tensor> predictor_bias;  // [r] per target, only when enabled
    std::vector<double> lambdas;         // loss weight per target

    std::size_t num_predictors() const { return predictors.size(); }
    const std::string& source_id() const { return base.encoders[source].id(); }
    std::vector<Tensor> trainables() const;
};

// Builds stage-2 state from a trained stage-1 model: logits and teacher
// unify projections become frozen copies, the source unify, fusion head and
// classifier continue to train, predictors start near zero.
PredictionModel init_prediction_model(const FusionModel& stage1, const ExperimentConfig& cfg);

// {f_1(S), L_2(f_1(S)), ..., L_n(f_1(S))}: source feature first, then one
// prediction per target in declared order.
std::vector<Tensor> predict_features(const Tensor& source_feature, const PredictionModel& model);

// Applies the stage-1 transform T and head L to predicted features only,
// each prediction placed in its encoder's original concatenation slot.
Tensor fuse_predicted(const PredictionModel& model, const std::vector<Tensor>& predicted);

// Mean absolute error between a predicted feature and its teacher target.
Tensor predictor_loss(const Tensor& predicted, const Tensor& target);

// Unified source feature via the trainable source path.
Tensor source_feature(const PredictionModel& model, const Utterance& u);

// Teacher-path unified features for every target encoder, computed with the
// frozen stage-1 weighted sums and unify projections; constants in the graph.
std::vector<Tensor> teacher_targets(const PredictionModel& model, const Utterance& u);

// Teacher-free forward passes (identical to the training-time forward).
Tensor prediction_features(const PredictionModel& model, const Utterance& u);
Tensor prediction_frame_logits(const PredictionModel& model, const Utterance& u);

// Joint optimization of the task loss plus lambda-weighted predictor L1
// losses; layer-weight logits and teachers stay byte-identical.
TrainSummary train_stage2(PredictionModel& model, const Corpus& corpus, const TrainConfig& cfg);

// Ridge least-squares initialization of each predictor from (source, target)
// unified feature pairs pooled over a calibration batch.
void warm_start_predictors(PredictionModel& model, const std::vector<Utterance>& calibration,
                           double ridge_eps = 1e-6);

// Mean per-predictor L1 over a split (teachers run; reporting only).
std::vector<double> predictor_l1_over_split(const PredictionModel& model,
                                            const std::vector<Utterance>& split);

}  // namespace effuse
