#include "effuse/checkpoint.hpp"

#include "effuse/io.hpp"

namespace effuse {

using nlohmann::json;

namespace {

json encoder_summary(const FrozenEncoder& e) {
    return json{{"id", e.id()},
                {"num_layers", e.num_layers()},
                {"dim", e.dim()},
                {"stride", e.stride()},
                {"checksum", e.checksum()}};
}

void check_encoders(const json& manifest, const FusionModel& model, const std::filesystem::path& dir) {
    const auto& listed = manifest.at("encoders");
    if (listed.size() != model.num_encoders()) {
        throw CheckpointError(dir.string() + ": checkpoint fuses " + std::to_string(listed.size()) +
                              " encoders but the config declares " + std::to_string(model.num_encoders()));
    }
    for (std::size_t i = 0; i < model.num_encoders(); ++i) {
        const auto& e = listed[i];
        const auto& enc = model.encoders[i];
        if (e.at("id").get<std::string>() != enc.id() || e.at("num_layers").get<int>() != enc.num_layers() ||
            e.at("dim").get<int>() != enc.dim() || e.at("stride").get<int>() != enc.stride()) {
            throw CheckpointError(dir.string() + ": encoder " + std::to_string(i) +
                                  " does not match the configured spec");
        }
    }
}

json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) {
        throw CheckpointError("no checkpoint manifest at " + path.string());
    }
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw CheckpointError("checkpoint manifest " + path.string() + ": " + e.what());
    }
}

struct NamedParams {
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(const std::string& name, const Tensor& t) { entries.emplace_back(name, t); }
};

NamedParams stage1_params(const FusionModel& model) {
    NamedParams p;
    for (std::size_t i = 0; i < model.num_encoders(); ++i) {
        const auto& id = model.encoders[i].id();
        p.add("logits." + id, model.logits[i]);
        p.add("unify." + id + ".W", model.unify_w[i]);
        p.add("unify." + id + ".b", model.unify_b[i]);
    }
    p.add("head.L", model.head_w);
    p.add("head.b", model.head_b);
    p.add("cls.W", model.cls_w);
    p.add("cls.b", model.cls_b);
    return p;
}

void write_checkpoint(const std::filesystem::path& dir, const json& manifest_base,
                      const NamedParams& params) {
    std::filesystem::create_directories(dir);
    json manifest = manifest_base;
    json names = json::array();
    for (const auto& [name, tensor] : params.entries) {
        save_tensor(dir / (name + ".eft"), tensor);
        names.push_back(name);
    }
    manifest["params"] = std::move(names);
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Tensor load_param(const std::filesystem::path& dir, const std::string& name, bool requires_grad) {
    const auto path = dir / (name + ".eft");
    if (!std::filesystem::exists(path)) {
        throw CheckpointError("checkpoint parameter missing: " + path.string());
    }
    return load_tensor(path, requires_grad);
}

json base_manifest(const FusionModel& model, const CheckpointInfo& info, int stage) {
    json manifest;
    manifest["format"] = "effuse-checkpoint-v1";
    manifest["stage"] = stage;
    manifest["config_hash"] = info.config_hash;
    manifest["step"] = info.step;
    manifest["metrics"] = info.metrics;
    manifest["common_dim"] = model.common_dim;
    manifest["fused_dim"] = model.fused_dim;
    manifest["vocab"] = model.vocab;
    json encs = json::array();
    for (const auto& e : model.encoders) encs.push_back(encoder_summary(e));
    manifest["encoders"] = std::move(encs);
    return manifest;
}

}  // namespace

void save_stage1_checkpoint(const std::filesystem::path& dir, const FusionModel& model,
                            const CheckpointInfo& info) {
    write_checkpoint(dir, base_manifest(model, info, 1), stage1_params(model));
}

FusionModel load_stage1_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                   CheckpointInfo* info) {
    const json manifest = read_manifest(dir);
    if (manifest.at("stage").get<int>() != 1) {
        throw CheckpointError(dir.string() + ": expected a stage-1 checkpoint");
    }
    FusionModel model;
    model.common_dim = manifest.at("common_dim").get<int>();
    model.fused_dim = manifest.at("fused_dim").get<int>();
    model.vocab = manifest.at("vocab").get<int>();
    if (model.common_dim != cfg.fusion.common_dim || model.fused_dim != cfg.fusion.fused_dim ||
        model.vocab != cfg.corpus.vocab()) {
        throw CheckpointError(dir.string() + ": checkpoint dimensions do not match the config");
    }
    for (const auto& spec : cfg.active_encoders()) {
        model.encoders.emplace_back(spec);
    }
    check_encoders(manifest, model, dir);
    for (std::size_t i = 0; i < model.num_encoders(); ++i) {
        const auto& id = model.encoders[i].id();
        model.logits.push_back(load_param(dir, "logits." + id, true));
        model.unify_w.push_back(load_param(dir, "unify." + id + ".W", true));
        model.unify_b.push_back(load_param(dir, "unify." + id + ".b", true));
    }
    model.head_w = load_param(dir, "head.L", true);
    model.head_b = load_param(dir, "head.b", true);
    model.cls_w = load_param(dir, "cls.W", true);
    model.cls_b = load_param(dir, "cls.b", true);
    if (info) {
        info->stage = 1;
        info->config_hash = manifest.at("config_hash").get<std::string>();
        info->step = manifest.at("step").get<int>();
        info->metrics = manifest.at("metrics");
    }
    return model;
}

void save_stage2_checkpoint(const std::filesystem::path& dir, const PredictionModel& model,
                            const CheckpointInfo& info) {
    json manifest = base_manifest(model.base, info, 2);
    manifest["source"] = model.source_id();
    NamedParams params = stage1_params(model.base);
    for (std::size_t j = 0; j < model.targets.size(); ++j) {
        const auto& id = model.base.encoders[model.targets[j]].id();
        params.add("pred." + id, model.predictors[j]);
        if (!model.predictor_bias.empty()) {
            params.add("pred." + id + ".b", model.predictor_bias[j]);
        }
    }
    write_checkpoint(dir, manifest, params);
}

PredictionModel load_stage2_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                       CheckpointInfo* info) {
    const json manifest = read_manifest(dir);
    if (manifest.at("stage").get<int>() != 2) {
        throw CheckpointError(dir.string() + ": expected a stage-2 checkpoint");
    }
    PredictionModel model;
    model.base.common_dim = manifest.at("common_dim").get<int>();
    model.base.fused_dim = manifest.at("fused_dim").get<int>();
    model.base.vocab = manifest.at("vocab").get<int>();
    for (const auto& spec : cfg.active_encoders()) {
        model.base.encoders.emplace_back(spec);
    }
    check_encoders(manifest, model.base, dir);
    const std::string source_id = manifest.at("source").get<std::string>();
    model.source = model.base.encoder_index(source_id);
    for (std::size_t i = 0; i < model.base.num_encoders(); ++i) {
        const auto& id = model.base.encoders[i].id();
        const bool is_source = (i == model.source);
        model.base.logits.push_back(load_param(dir, "logits." + id, false));
        model.base.unify_w.push_back(load_param(dir, "unify." + id + ".W", is_source));
        model.base.unify_b.push_back(load_param(dir, "unify." + id + ".b", is_source));
        if (!is_source) model.targets.push_back(i);
    }
    model.base.head_w = load_param(dir, "head.L", true);
    model.base.head_b = load_param(dir, "head.b", true);
    model.base.cls_w = load_param(dir, "cls.W", true);
    model.base.cls_b = load_param(dir, "cls.b", true);
    for (std::size_t t : model.targets) {
        const auto& id = model.base.encoders[t].id();
        model.predictors.push_back(load_param(dir, "pred." + id, true));
        if (cfg.prediction.predictor_bias) {
            model.predictor_bias.push_back(load_param(dir, "pred." + id + ".b", true));
        }
        const auto it = cfg.prediction.lambda_per.find(id);
        model.lambdas.push_back(it != cfg.prediction.lambda_per.end() ? it->second : cfg.prediction.lambda);
    }
    if (info) {
        info->stage = 2;
        info->config_hash = manifest.at("config_hash").get<std::string>();
        info->step = manifest.at("step").get<int>();
        info->source = source_id;
        info->metrics = manifest.at("metrics");
    }
    return model;
}

int checkpoint_stage(const std::filesystem::path& dir) {
    return read_manifest(dir).at("stage").get<int>();
}

}  // namespace effuse
