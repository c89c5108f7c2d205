#include "effuse/graph.hpp"

namespace effuse {

namespace {

void append_encoder_params(ParamManifest& out, const FrozenEncoder& enc) {
    for (auto& kv : enc.parameters()) {
        out.push_back(std::move(kv));
    }
}

void append_head_params(ParamManifest& out, const FusionModel& m) {
    out.emplace_back("head.L", m.head_w);
    out.emplace_back("head.b", m.head_b);
    out.emplace_back("cls.W", m.cls_w);
    out.emplace_back("cls.b", m.cls_b);
}

}  // namespace

// ---- FusionGraph -------------------------------------------------------------

FusionGraph::FusionGraph(const FusionModel& model, std::string name)
    : model_(model), name_(std::move(name)) {}

Tensor FusionGraph::fused_features(const Utterance& u) const { return fusion_features(model_, u); }

Tensor FusionGraph::frame_logits(const Utterance& u) const { return fusion_frame_logits(model_, u); }

ParamManifest FusionGraph::parameters() const {
    ParamManifest out;
    for (std::size_t i = 0; i < model_.num_encoders(); ++i) {
        const auto& id = model_.encoders[i].id();
        append_encoder_params(out, model_.encoders[i]);
        out.emplace_back("logits." + id, model_.logits[i]);
        out.emplace_back("unify." + id + ".W", model_.unify_w[i]);
        out.emplace_back("unify." + id + ".b", model_.unify_b[i]);
    }
    append_head_params(out, model_);
    return out;
}

// ---- PredictionGraph ----------------------------------------------------------

PredictionGraph::PredictionGraph(const PredictionModel& model, std::string name)
    : model_(model), name_(std::move(name)) {}

Tensor PredictionGraph::fused_features(const Utterance& u) const {
    return prediction_features(model_, u);
}

Tensor PredictionGraph::frame_logits(const Utterance& u) const {
    return prediction_frame_logits(model_, u);
}

ParamManifest PredictionGraph::parameters() const {
    ParamManifest out;
    const auto& base = model_.base;
    const auto& src_id = model_.source_id();
    append_encoder_params(out, base.encoders[model_.source]);
    out.emplace_back("logits." + src_id, base.logits[model_.source]);
    out.emplace_back("unify." + src_id + ".W", base.unify_w[model_.source]);
    out.emplace_back("unify." + src_id + ".b", base.unify_b[model_.source]);
    for (std::size_t j = 0; j < model_.targets.size(); ++j) {
        const auto& id = base.encoders[model_.targets[j]].id();
        out.emplace_back("pred." + id, model_.predictors[j]);
        if (!model_.predictor_bias.empty()) {
            out.emplace_back("pred." + id + ".b", model_.predictor_bias[j]);
        }
    }
    append_head_params(out, base);
    return out;
}

ParamManifest PredictionGraph::training_parameters() const {
    ParamManifest out = parameters();
    for (std::size_t t : model_.targets) {
        const auto& base = model_.base;
        const auto& id = base.encoders[t].id();
        append_encoder_params(out, base.encoders[t]);
        out.emplace_back("logits." + id, base.logits[t]);
        out.emplace_back("unify." + id + ".W", base.unify_w[t]);
        out.emplace_back("unify." + id + ".b", base.unify_b[t]);
    }
    return out;
}

// ---- SourceOnlyGraph -----------------------------------------------------------

SourceOnlyGraph::SourceOnlyGraph(const PredictionModel& model, std::string name)
    : model_(model), name_(std::move(name)) {}

Tensor SourceOnlyGraph::fused_features(const Utterance& u) const {
    const auto& base = model_.base;
    Tensor src = source_feature(model_, u);
    std::vector<Tensor> slots(base.num_encoders());
    slots[model_.source] = src;
    for (std::size_t t : model_.targets) {
        slots[t] = Tensor::zeros({src.rows(), base.common_dim});
    }
    return fuse(base, slots);
}

Tensor SourceOnlyGraph::frame_logits(const Utterance& u) const {
    return classify(model_.base, fused_features(u));
}

ParamManifest SourceOnlyGraph::parameters() const {
    ParamManifest out;
    const auto& base = model_.base;
    const auto& src_id = model_.source_id();
    append_encoder_params(out, base.encoders[model_.source]);
    out.emplace_back("logits." + src_id, base.logits[model_.source]);
    out.emplace_back("unify." + src_id + ".W", base.unify_w[model_.source]);
    out.emplace_back("unify." + src_id + ".b", base.unify_b[model_.source]);
    append_head_params(out, base);
    return out;
}

std::unique_ptr<PredictionGraph> inference_graph(const PredictionModel& model) {
    if (model.predictors.size() != model.targets.size() ||
        model.targets.size() + 1 != model.base.num_encoders()) {
        throw CheckpointError("inference graph: predictor count " + std::to_string(model.predictors.size()) +
                              " does not cover the " + std::to_string(model.base.num_encoders()) +
                              " declared encoders");
    }
    return std::make_unique<PredictionGraph>(model);
}

}  // namespace effuse
