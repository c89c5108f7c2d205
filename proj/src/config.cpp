#include "effuse/config.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "effuse/io.hpp"

namespace effuse {

using nlohmann::json;

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("train.steps must be nonnegative");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (learning_rate < 0.0) throw ConfigError("train.learning_rate must be nonnegative");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be nonnegative");
}

void ExperimentConfig::validate() const {
    corpus.validate();
    if (encoders.empty()) {
        throw ConfigError("encoders: at least one encoder must be declared");
    }
    std::set<std::string> ids;
    for (const auto& e : encoders) {
        e.validate();
        if (!ids.insert(e.id).second) {
            throw ConfigError("encoders: duplicate id " + e.id);
        }
        for (int c : e.channel_mask) {
            if (c >= corpus.channels) {
                throw ConfigError("encoder " + e.id + ": mask channel " + std::to_string(c) +
                                  " outside the corpus' " + std::to_string(corpus.channels) + " channels");
            }
        }
    }
    if (fusion.common_dim < 1) throw ConfigError("fusion.common_dim must be positive");
    if (fusion.fused_dim < 1) throw ConfigError("fusion.fused_dim must be positive");
    for (const auto& id : fusion.use) {
        if (!ids.count(id)) {
            throw ConfigError("fusion.use: unknown encoder id " + id);
        }
    }
    fusion.train.validate();
    prediction.train.validate();
    if (!ids.count(prediction.source)) {
        throw ConfigError("prediction.source: unknown encoder id " + prediction.source);
    }
    for (const auto& [id, l] : prediction.lambda_per) {
        if (!ids.count(id)) {
            throw ConfigError("prediction.lambda_per: unknown encoder id " + id);
        }
        if (l < 0.0) {
            throw ConfigError("prediction.lambda_per." + id + " must be nonnegative");
        }
    }
    if (prediction.lambda < 0.0) throw ConfigError("prediction.lambda must be nonnegative");
    if (analysis.sample_size < 1) throw ConfigError("analysis.sample_size must be >= 1");
    if (analysis.ridge_eps < 0.0) throw ConfigError("analysis.ridge_eps must be nonnegative");
    if (bench.reps < 1) throw ConfigError("bench.reps must be >= 1");
    if (bench.warmup < 0) throw ConfigError("bench.warmup must be nonnegative");
    if (bench.split != "train" && bench.split != "dev" && bench.split != "test") {
        throw ConfigError("bench.split must be train, dev or test");
    }
}

std::vector<EncoderSpec> ExperimentConfig::active_encoders() const {
    if (fusion.use.empty()) {
        return encoders;
    }
    std::vector<EncoderSpec> out;
    for (const auto& e : encoders) {
        if (std::find(fusion.use.begin(), fusion.use.end(), e.id) != fusion.use.end()) {
            out.push_back(e);
        }
    }
    if (out.size() != fusion.use.size()) {
        throw ConfigError("fusion.use names an undeclared encoder");
    }
    return out;
}

const EncoderSpec& ExperimentConfig::encoder_by_id(const std::string& id) const {
    for (const auto& e : encoders) {
        if (e.id == id) return e;
    }
    throw ConfigError("no declared encoder with id " + id);
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    std::vector<int> all(16), first(8), second(8);
    std::iota(all.begin(), all.end(), 0);
    std::iota(first.begin(), first.end(), 0);
    std::iota(second.begin(), second.end(), 8);
    cfg.encoders = {
        EncoderSpec{"S", 7001, 5, 48, 1, all},
        EncoderSpec{"A", 7002, 4, 24, 1, first},
        EncoderSpec{"B", 7003, 6, 32, 2, second},
    };
    cfg.prediction.source = "S";
    cfg.prediction.train.seed = 5151;
    return cfg;
}

// ---- JSON -------------------------------------------------------------------

namespace {

json train_to_json(const TrainConfig& t) {
    return json{{"seed", t.seed},          {"steps", t.steps},
                {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
                {"clip_norm", t.clip_norm},   {"log_every", t.log_every}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.seed = j.at("seed").get<std::uint64_t>();
    t.steps = j.at("steps").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.learning_rate = j.at("learning_rate").get<double>();
    t.clip_norm = j.at("clip_norm").get<double>();
    t.log_every = j.at("log_every").get<int>();
    return t;
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["corpus"] = {{"seed", cfg.corpus.seed},
                   {"num_train", cfg.corpus.num_train},
                   {"num_dev", cfg.corpus.num_dev},
                   {"num_test", cfg.corpus.num_test},
                   {"frames_min", cfg.corpus.frames_min},
                   {"frames_max", cfg.corpus.frames_max},
                   {"q_a", cfg.corpus.q_a},
                   {"q_b", cfg.corpus.q_b},
                   {"channels", cfg.corpus.channels},
                   {"noise_std", cfg.corpus.noise_std},
                   {"nominal_frame_rate", cfg.corpus.nominal_frame_rate}};
    j["encoders"] = json::array();
    for (const auto& e : cfg.encoders) {
        j["encoders"].push_back(json{{"id", e.id},
                                     {"seed", e.seed},
                                     {"num_layers", e.num_layers},
                                     {"dim", e.dim},
                                     {"stride", e.stride},
                                     {"channel_mask", e.channel_mask}});
    }
    j["fusion"] = {{"common_dim", cfg.fusion.common_dim},
                   {"fused_dim", cfg.fusion.fused_dim},
                   {"use", cfg.fusion.use},
                   {"train", train_to_json(cfg.fusion.train)}};
    j["prediction"] = {{"source", cfg.prediction.source},
                       {"lambda", cfg.prediction.lambda},
                       {"lambda_per", cfg.prediction.lambda_per},
                       {"predictor_bias", cfg.prediction.predictor_bias},
                       {"warm_start", cfg.prediction.warm_start},
                       {"train", train_to_json(cfg.prediction.train)}};
    j["analysis"] = {{"sample_size", cfg.analysis.sample_size},
                     {"ridge_eps", cfg.analysis.ridge_eps},
                     {"held_out", cfg.analysis.held_out},
                     {"seed", cfg.analysis.seed}};
    j["bench"] = {{"reps", cfg.bench.reps}, {"warmup", cfg.bench.warmup}, {"split", cfg.bench.split}};
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    try {
        const auto& c = j.at("corpus");
        cfg.corpus.seed = c.at("seed").get<std::uint64_t>();
        cfg.corpus.num_train = c.at("num_train").get<int>();
        cfg.corpus.num_dev = c.at("num_dev").get<int>();
        cfg.corpus.num_test = c.at("num_test").get<int>();
        cfg.corpus.frames_min = c.at("frames_min").get<int>();
        cfg.corpus.frames_max = c.at("frames_max").get<int>();
        cfg.corpus.q_a = c.at("q_a").get<int>();
        cfg.corpus.q_b = c.at("q_b").get<int>();
        cfg.corpus.channels = c.at("channels").get<int>();
        cfg.corpus.noise_std = c.at("noise_std").get<double>();
        cfg.corpus.nominal_frame_rate = c.at("nominal_frame_rate").get<double>();
        cfg.encoders.clear();
        for (const auto& e : j.at("encoders")) {
            EncoderSpec spec;
            spec.id = e.at("id").get<std::string>();
            spec.seed = e.at("seed").get<std::uint64_t>();
            spec.num_layers = e.at("num_layers").get<int>();
            spec.dim = e.at("dim").get<int>();
            spec.stride = e.at("stride").get<int>();
            spec.channel_mask = e.at("channel_mask").get<std::vector<int>>();
            cfg.encoders.push_back(std::move(spec));
        }
        const auto& f = j.at("fusion");
        cfg.fusion.common_dim = f.at("common_dim").get<int>();
        cfg.fusion.fused_dim = f.at("fused_dim").get<int>();
        cfg.fusion.use = f.at("use").get<std::vector<std::string>>();
        cfg.fusion.train = train_from_json(f.at("train"));
        const auto& p = j.at("prediction");
        cfg.prediction.source = p.at("source").get<std::string>();
        cfg.prediction.lambda = p.at("lambda").get<double>();
        cfg.prediction.lambda_per = p.at("lambda_per").get<std::map<std::string, double>>();
        cfg.prediction.predictor_bias = p.at("predictor_bias").get<bool>();
        cfg.prediction.warm_start = p.at("warm_start").get<bool>();
        cfg.prediction.train = train_from_json(p.at("train"));
        const auto& a = j.at("analysis");
        cfg.analysis.sample_size = a.at("sample_size").get<int>();
        cfg.analysis.ridge_eps = a.at("ridge_eps").get<double>();
        cfg.analysis.held_out = a.at("held_out").get<bool>();
        cfg.analysis.seed = a.at("seed").get<std::uint64_t>();
        const auto& b = j.at("bench");
        cfg.bench.reps = b.at("reps").get<int>();
        cfg.bench.warmup = b.at("warmup").get<int>();
        cfg.bench.split = b.at("split").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

namespace {

// Recursive overlay of `patch` onto `base`; unknown keys are errors except
// under prediction.lambda_per (keyed by encoder id) and the encoders array,
// which is replaced wholesale.
void merge_config(json& base, const json& patch, const std::string& prefix) {
    if (!patch.is_object() || !base.is_object()) {
        base = patch;
        return;
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key()) && prefix != "prediction.lambda_per") {
            throw ConfigError("unknown config key: " + path);
        }
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object()) {
            merge_config(base[it.key()], it.value(), path);
        } else {
            base[it.key()] = it.value();
        }
    }
}

}  // namespace

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    json patch;
    try {
        patch = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    json base = config_to_json(default_config());
    merge_config(base, patch, "");
    return config_from_json(base);
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key=value, got: " + assignment);
    }
    std::string key = assignment.substr(0, eq);
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    const std::string value = assignment.substr(eq + 1);

    json* node = &config;
    std::string parent_path;
    std::istringstream segs(key);
    std::string seg;
    std::vector<std::string> parts;
    while (std::getline(segs, seg, '.')) parts.push_back(seg);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i])) {
            throw ConfigError("unknown config key: " + key + " (no field '" + parts[i] + "')");
        }
        node = &(*node)[parts[i]];
        parent_path = parent_path.empty() ? parts[i] : parent_path + "." + parts[i];
    }
    const std::string& leaf = parts.back();
    const bool creatable = parent_path == "prediction.lambda_per";
    if (!node->is_object() || (!node->contains(leaf) && !creatable)) {
        throw ConfigError("unknown config key: " + key + " (no field '" + leaf + "')");
    }

    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare strings stay strings
    }
    if (node->contains(leaf)) {
        const json& old = (*node)[leaf];
        if (old.is_array() && parsed.is_string()) {
            // Comma-separated shorthand for string arrays: fusion.use=A,B
            json arr = json::array();
            std::istringstream items(parsed.get<std::string>());
            std::string item;
            while (std::getline(items, item, ',')) {
                if (!item.empty()) arr.push_back(item);
            }
            parsed = std::move(arr);
        }
        const bool both_numeric = old.is_number() && parsed.is_number();
        if (!both_numeric && old.type() != parsed.type() && !old.is_null()) {
            throw ConfigError("override " + key + ": expected " + std::string(old.type_name()) +
                              ", got " + std::string(parsed.type_name()));
        }
    }
    (*node)[leaf] = parsed;
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canonical = config_to_json(cfg).dump();
    const std::uint64_t h = fnv1a(canonical);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace effuse
