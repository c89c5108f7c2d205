#include "effuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "effuse/downstream.hpp"
#include "effuse/graph.hpp"

namespace effuse {

int FusionModel::max_stride() const {
    int d = 1;
    for (const auto& e : encoders) d = std::max(d, e.stride());
    return d;
}

std::size_t FusionModel::encoder_index(const std::string& id) const {
    for (std::size_t i = 0; i < encoders.size(); ++i) {
        if (encoders[i].id() == id) return i;
    }
    throw ConfigError("no encoder with id " + id + " in this model");
}

std::vector<Tensor> FusionModel::trainables() const {
    std::vector<Tensor> out;
    for (const auto& t : logits) {
        if (t.requires_grad()) out.push_back(t);
    }
    for (std::size_t i = 0; i < unify_w.size(); ++i) {
        if (unify_w[i].requires_grad()) out.push_back(unify_w[i]);
        if (unify_b[i].requires_grad()) out.push_back(unify_b[i]);
    }
    for (const auto& t : {head_w, head_b, cls_w, cls_b}) {
        if (t.requires_grad()) out.push_back(t);
    }
    return out;
}

std::int64_t FusionModel::common_frames(std::int64_t frames) const {
    const int d_max = max_stride();
    std::int64_t common = -1;
    for (const auto& e : encoders) {
        if (d_max % e.stride() != 0) {
            throw ConfigError("stride " + std::to_string(e.stride()) + " does not divide the coarsest stride " +
                              std::to_string(d_max));
        }
        const std::int64_t factor = d_max / e.stride();
        const std::int64_t pooled = e.out_frames(frames) / factor;
        common = (common < 0) ? pooled : std::min(common, pooled);
    }
    return common;
}

FusionModel init_fusion_model(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto active = cfg.active_encoders();
    FusionModel model;
    model.common_dim = cfg.fusion.common_dim;
    model.fused_dim = cfg.fusion.fused_dim;
    model.vocab = cfg.corpus.vocab();
    const int r = model.common_dim;
    for (const auto& spec : active) {
        model.encoders.emplace_back(spec);
        model.logits.push_back(Tensor::zeros({spec.num_layers}, true));
        Rng rng(derive_seed(cfg.fusion.train.seed, "init.unify", fnv1a(spec.id)));
        model.unify_w.push_back(Tensor::randn({spec.dim, r}, rng, 1.0 / std::sqrt(static_cast<double>(spec.dim)), true));
        model.unify_b.push_back(Tensor::zeros({r}, true));
    }
    const auto n = static_cast<std::int64_t>(active.size());
    Rng head_rng(derive_seed(cfg.fusion.train.seed, "init.head"));
    model.head_w = Tensor::randn({n * r, model.fused_dim}, head_rng, 1.0 / std::sqrt(static_cast<double>(n * r)), true);
    model.head_b = Tensor::zeros({model.fused_dim}, true);
    Rng cls_rng(derive_seed(cfg.fusion.train.seed, "init.cls"));
    model.cls_w = Tensor::randn({model.fused_dim, model.vocab}, cls_rng,
                                1.0 / std::sqrt(static_cast<double>(model.fused_dim)), true);
    model.cls_b = Tensor::zeros({model.vocab}, true);
    return model;
}

Tensor weighted_layer_sum(const LayerFeatures& feats, const Tensor& logits) {
    return weighted_sum(feats, softmax(logits));
}

std::vector<Tensor> unify(const FusionModel& model, const std::vector<Tensor>& weighted) {
    if (weighted.size() != model.num_encoders()) {
        throw DimensionError("unify: " + std::to_string(weighted.size()) + " features for " +
                             std::to_string(model.num_encoders()) + " encoders");
    }
    const int d_max = model.max_stride();
    std::vector<Tensor> pooled;
    pooled.reserve(weighted.size());
    std::int64_t common = -1;
    for (std::size_t i = 0; i < weighted.size(); ++i) {
        Tensor projected = add_row(matmul(weighted[i], model.unify_w[i]), model.unify_b[i]);
        const int stride = model.encoders[i].stride();
        if (d_max % stride != 0) {
            throw ConfigError("stride " + std::to_string(stride) + " does not divide the coarsest stride " +
                              std::to_string(d_max));
        }
        Tensor p = mean_pool_rows(projected, d_max / stride);
        common = (common < 0) ? p.rows() : std::min(common, p.rows());
        pooled.push_back(std::move(p));
    }
    std::vector<Tensor> unified;
    unified.reserve(pooled.size());
    for (auto& p : pooled) {
        unified.push_back(p.rows() == common ? std::move(p) : slice_rows(p, 0, common));
    }
    return unified;
}

Tensor fuse(const FusionModel& model, const std::vector<Tensor>& unified) {
    if (unified.empty()) {
        throw DimensionError("fuse: no features given");
    }
    return add_row(matmul(concat_cols(unified), model.head_w), model.head_b);
}

Tensor classify(const FusionModel& model, const Tensor& fused) {
    return add_row(matmul(fused, model.cls_w), model.cls_b);
}

Tensor fusion_features(const FusionModel& model, const Utterance& u) {
    std::vector<Tensor> weighted;
    weighted.reserve(model.num_encoders());
    for (std::size_t i = 0; i < model.num_encoders(); ++i) {
        weighted.push_back(weighted_layer_sum(model.encoders[i].extract(u), model.logits[i]));
    }
    return fuse(model, unify(model, weighted));
}

Tensor fusion_frame_logits(const FusionModel& model, const Utterance& u) {
    return classify(model, fusion_features(model, u));
}

// ---- training ---------------------------------------------------------------

namespace {

double grad_norm(const std::vector<Tensor>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

}  // namespace

void sgd_step(std::vector<Tensor>& params, double learning_rate, double clip_norm) {
    double scale = 1.0;
    if (clip_norm > 0.0) {
        const double norm = grad_norm(params);
        if (norm > clip_norm) scale = clip_norm / norm;
    }
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        auto data = p.mutable_data();
        const auto g = p.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] -= learning_rate * scale * g[i];
        }
    }
}

double split_fer(const Graph& graph, const std::vector<Utterance>& split) {
    return evaluate(graph, split).frame_error_rate;
}

TrainSummary train_stage1(FusionModel& model, const Corpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.train.empty()) {
        throw DataError("stage 1: empty train split");
    }
    auto params = model.trainables();
    Rng batches(derive_seed(cfg.seed, "stage1.batches"));
    const int factor = model.max_stride();
    TrainSummary summary;
    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& p : params) p.zero_grad();
        Tensor total;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& u = corpus.train[batches.uniform_int(corpus.train.size())];
            Tensor logits = fusion_frame_logits(model, u);
            const auto labels = pool_labels(u.labels, factor, logits.rows());
            Tensor ce = task_loss(logits, labels);
            total = total.defined() ? add(total, ce) : ce;
        }
        Tensor loss = scale(total, 1.0 / cfg.batch_size);
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value)) {
            throw NumericError("stage 1: loss became non-finite at step " + std::to_string(step) +
                               " (learning_rate=" + std::to_string(cfg.learning_rate) + ")");
        }
        backward(loss);
        sgd_step(params, cfg.learning_rate, cfg.clip_norm);
        summary.final_loss = loss_value;
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            std::cerr << "[stage1] step " << step << " loss " << loss_value << "\n";
        }
    }
    summary.steps = cfg.steps;
    FusionGraph graph(model);
    summary.dev_fer = split_fer(graph, corpus.dev);
    return summary;
}

}  // namespace effuse
