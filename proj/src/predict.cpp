#include "effuse/predict.hpp"

#include <cmath>
#include <iostream>

#include "effuse/downstream.hpp"
#include "effuse/graph.hpp"
#include "effuse/linalg.hpp"

namespace effuse {

std::vector<Tensor> PredictionModel::trainables() const {
    std::vector<Tensor> out = base.trainables();
    for (const auto& p : predictors) out.push_back(p);
    for (const auto& b : predictor_bias) out.push_back(b);
    return out;
}

PredictionModel init_prediction_model(const FusionModel& stage1, const ExperimentConfig& cfg) {
    PredictionModel model;
    model.base.common_dim = stage1.common_dim;
    model.base.fused_dim = stage1.fused_dim;
    model.base.vocab = stage1.vocab;
    model.base.encoders = stage1.encoders;
    model.source = stage1.encoder_index(cfg.prediction.source);

    // Layer weights freeze for everyone; unify projections freeze for
    // teachers only, so their L1 targets stay stationary.
    for (std::size_t i = 0; i < stage1.num_encoders(); ++i) {
        model.base.logits.push_back(stage1.logits[i].detached());
        if (i == model.source) {
            model.base.unify_w.push_back(Tensor::from(stage1.unify_w[i].shape(),
                                                      {stage1.unify_w[i].data().begin(), stage1.unify_w[i].data().end()}, true));
            model.base.unify_b.push_back(Tensor::from(stage1.unify_b[i].shape(),
                                                      {stage1.unify_b[i].data().begin(), stage1.unify_b[i].data().end()}, true));
        } else {
            model.base.unify_w.push_back(stage1.unify_w[i].detached());
            model.base.unify_b.push_back(stage1.unify_b[i].detached());
            model.targets.push_back(i);
        }
    }
    model.base.head_w = Tensor::from(stage1.head_w.shape(), {stage1.head_w.data().begin(), stage1.head_w.data().end()}, true);
    model.base.head_b = Tensor::from(stage1.head_b.shape(), {stage1.head_b.data().begin(), stage1.head_b.data().end()}, true);
    model.base.cls_w = Tensor::from(stage1.cls_w.shape(), {stage1.cls_w.data().begin(), stage1.cls_w.data().end()}, true);
    model.base.cls_b = Tensor::from(stage1.cls_b.shape(), {stage1.cls_b.data().begin(), stage1.cls_b.data().end()}, true);

    const int r = model.base.common_dim;
    for (std::size_t t : model.targets) {
        Rng rng(derive_seed(cfg.prediction.train.seed, "init.pred", fnv1a(model.base.encoders[t].id())));
        model.predictors.push_back(Tensor::randn({r, r}, rng, 0.1 / std::sqrt(static_cast<double>(r)), true));
        if (cfg.prediction.predictor_bias) {
            model.predictor_bias.push_back(Tensor::zeros({r}, true));
        }
        const auto& id = model.base.encoders[t].id();
        const auto it = cfg.prediction.lambda_per.find(id);
        model.lambdas.push_back(it != cfg.prediction.lambda_per.end() ? it->second : cfg.prediction.lambda);
    }
    return model;
}

std::vector<Tensor> predict_features(const Tensor& source_feature, const PredictionModel& model) {
    if (source_feature.rank() != 2 || source_feature.cols() != model.base.common_dim) {
        throw DimensionError("predict_features: source feature " + shape_string(source_feature.shape()) +
                             " does not match common dim " + std::to_string(model.base.common_dim));
    }
    std::vector<Tensor> out;
    out.reserve(model.targets.size() + 1);
    out.push_back(source_feature);
    for (std::size_t j = 0; j < model.predictors.size(); ++j) {
        Tensor p = matmul(source_feature, model.predictors[j]);
        if (!model.predictor_bias.empty()) {
            p = add_row(p, model.predictor_bias[j]);
        }
        out.push_back(std::move(p));
    }
    return out;
}

Tensor fuse_predicted(const PredictionModel& model, const std::vector<Tensor>& predicted) {
    const std::size_t n = model.base.num_encoders();
    if (predicted.size() != n) {
        throw DimensionError("fuse_predicted: " + std::to_string(predicted.size()) + " features for " +
                             std::to_string(n) + " encoders");
    }
    // Each prediction goes back into its encoder's stage-1 concatenation slot.
    std::vector<Tensor> slots(n);
    slots[model.source] = predicted[0];
    for (std::size_t j = 0; j < model.targets.size(); ++j) {
        slots[model.targets[j]] = predicted[j + 1];
    }
    return fuse(model.base, slots);
}

Tensor predictor_loss(const Tensor& predicted, const Tensor& target) {
    return l1_mean(predicted, target);
}

namespace {

// Weighted sum -> unify -> pool -> truncate for one encoder, using the
// model's stored (possibly frozen) parameters.
Tensor unified_single(const FusionModel& base, std::size_t index, const Utterance& u) {
    const auto& enc = base.encoders[index];
    Tensor weighted = weighted_layer_sum(enc.extract(u), base.logits[index]);
    Tensor projected = add_row(matmul(weighted, base.unify_w[index]), base.unify_b[index]);
    Tensor pooled = mean_pool_rows(projected, base.max_stride() / enc.stride());
    const std::int64_t common = base.common_frames(u.frames());
    return pooled.rows() == common ? pooled : slice_rows(pooled, 0, common);
}

}  // namespace

Tensor source_feature(const PredictionModel& model, const Utterance& u) {
    return unified_single(model.base, model.source, u);
}

std::vector<Tensor> teacher_targets(const PredictionModel& model, const Utterance& u) {
    std::vector<Tensor> targets;
    targets.reserve(model.targets.size());
    for (std::size_t t : model.targets) {
        targets.push_back(unified_single(model.base, t, u));
    }
    return targets;
}

Tensor prediction_features(const PredictionModel& model, const Utterance& u) {
    return fuse_predicted(model, predict_features(source_feature(model, u), model));
}

Tensor prediction_frame_logits(const PredictionModel& model, const Utterance& u) {
    return classify(model.base, prediction_features(model, u));
}

std::vector<double> predictor_l1_over_split(const PredictionModel& model,
                                            const std::vector<Utterance>& split) {
    std::vector<double> sums(model.num_predictors(), 0.0);
    if (split.empty() || model.num_predictors() == 0) return sums;
    for (const auto& u : split) {
        const auto predicted = predict_features(source_feature(model, u), model);
        const auto targets = teacher_targets(model, u);
        for (std::size_t j = 0; j < targets.size(); ++j) {
            sums[j] += predictor_loss(predicted[j + 1], targets[j]).value();
        }
    }
    for (auto& s : sums) s /= static_cast<double>(split.size());
    return sums;
}

TrainSummary train_stage2(PredictionModel& model, const Corpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.train.empty()) {
        throw DataError("stage 2: empty train split");
    }
    auto params = model.trainables();
    Rng batches(derive_seed(cfg.seed, "stage2.batches"));
    const int factor = model.base.max_stride();
    TrainSummary summary;
    summary.l1_initial = predictor_l1_over_split(model, corpus.train);
    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& p : params) p.zero_grad();
        Tensor total;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& u = corpus.train[batches.uniform_int(corpus.train.size())];
            const auto predicted = predict_features(source_feature(model, u), model);
            Tensor logits = classify(model.base, fuse_predicted(model, predicted));
            const auto labels = pool_labels(u.labels, factor, logits.rows());
            Tensor sample_loss = task_loss(logits, labels);
            const auto targets = teacher_targets(model, u);
            for (std::size_t j = 0; j < targets.size(); ++j) {
                if (model.lambdas[j] == 0.0) continue;
                sample_loss = add(sample_loss,
                                  scale(predictor_loss(predicted[j + 1], targets[j]), model.lambdas[j]));
            }
            total = total.defined() ? add(total, sample_loss) : sample_loss;
        }
        Tensor loss = scale(total, 1.0 / cfg.batch_size);
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value)) {
            throw NumericError("stage 2: loss became non-finite at step " + std::to_string(step) +
                               " (learning_rate=" + std::to_string(cfg.learning_rate) + ")");
        }
        backward(loss);
        sgd_step(params, cfg.learning_rate, cfg.clip_norm);
        summary.final_loss = loss_value;
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            std::cerr << "[stage2] step " << step << " loss " << loss_value << "\n";
        }
    }
    summary.steps = cfg.steps;
    summary.l1_final = predictor_l1_over_split(model, corpus.train);
    PredictionGraph graph(model);
    summary.dev_fer = split_fer(graph, corpus.dev);
    return summary;
}

void warm_start_predictors(PredictionModel& model, const std::vector<Utterance>& calibration,
                           double ridge_eps) {
    if (calibration.empty()) {
        throw DataError("warm_start_predictors: empty calibration batch");
    }
    const int r = model.base.common_dim;
    // Pool (source, target) unified feature rows over the batch.
    std::vector<double> xrows;
    std::vector<std::vector<double>> yrows(model.num_predictors());
    for (const auto& u : calibration) {
        const Tensor src = source_feature(model, u);
        const auto targets = teacher_targets(model, u);
        xrows.insert(xrows.end(), src.data().begin(), src.data().end());
        for (std::size_t j = 0; j < targets.size(); ++j) {
            yrows[j].insert(yrows[j].end(), targets[j].data().begin(), targets[j].data().end());
        }
    }
    const std::int64_t n = static_cast<std::int64_t>(xrows.size()) / r;
    Tensor x = Tensor::from({n, r}, std::move(xrows));
    Tensor xtx = gram(x);
    {
        auto d = xtx.mutable_data();
        for (std::int64_t i = 0; i < r; ++i) d[static_cast<std::size_t>(i * r + i)] += ridge_eps;
    }
    for (std::size_t j = 0; j < model.num_predictors(); ++j) {
        Tensor y = Tensor::from({n, r}, std::move(yrows[j]));
        Tensor w = spd_solve(xtx, cross_gram(x, y));
        auto dst = model.predictors[j].mutable_data();
        const auto src = w.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

}  // namespace effuse
