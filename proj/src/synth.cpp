#include "effuse/synth.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "effuse/io.hpp"

namespace effuse {

using nlohmann::json;

void CorpusConfig::validate() const {
    if (q_a < 2 || q_b < 2) {
        throw ConfigError("corpus: vocabulary must factor as q_a*q_b with q_a,q_b >= 2 (got " +
                          std::to_string(q_a) + "x" + std::to_string(q_b) + ")");
    }
    if (channels < 2 || channels % 2 != 0) {
        throw ConfigError("corpus: channels must be even and >= 2, got " + std::to_string(channels));
    }
    if (frames_min < 1 || frames_max < frames_min) {
        throw ConfigError("corpus: invalid frame range [" + std::to_string(frames_min) + ", " +
                          std::to_string(frames_max) + "]");
    }
    if (num_train < 1 || num_dev < 1 || num_test < 1) {
        throw ConfigError("corpus: every split needs at least one utterance");
    }
    if (noise_std < 0.0) {
        throw ConfigError("corpus: noise_std must be nonnegative");
    }
    if (nominal_frame_rate <= 0.0) {
        throw ConfigError("corpus: nominal_frame_rate must be positive");
    }
}

const std::vector<Utterance>& Corpus::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw ConfigError("unknown split: " + name);
}

namespace {

// One pattern vector per factor value, drawn once per corpus.
std::vector<std::vector<double>> factor_patterns(const CorpusConfig& cfg, const char* tag, int q) {
    Rng rng(derive_seed(cfg.seed, tag));
    const int half = cfg.channels / 2;
    std::vector<std::vector<double>> patterns(static_cast<std::size_t>(q));
    for (auto& p : patterns) {
        p.resize(static_cast<std::size_t>(half));
        for (auto& v : p) v = rng.normal();
    }
    return patterns;
}

Utterance make_utterance(const CorpusConfig& cfg, const std::string& split, int index,
                         const std::vector<std::vector<double>>& pat_a,
                         const std::vector<std::vector<double>>& pat_b) {
    Rng rng(derive_seed(cfg.seed, split.c_str(), static_cast<std::uint64_t>(index)));
    const int span = cfg.frames_max - cfg.frames_min + 1;
    const int frames = cfg.frames_min + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
    const int half = cfg.channels / 2;

    Utterance u;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s-%04d", split.c_str(), index);
    u.id = buf;
    u.labels.resize(static_cast<std::size_t>(frames));
    std::vector<double> signal(static_cast<std::size_t>(frames) * cfg.channels);
    for (int t = 0; t < frames; ++t) {
        const int a = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.q_a)));
        const int b = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.q_b)));
        u.labels[static_cast<std::size_t>(t)] = a * cfg.q_b + b;
        double* row = signal.data() + static_cast<std::size_t>(t) * cfg.channels;
        for (int c = 0; c < half; ++c) {
            row[c] = pat_a[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] + cfg.noise_std * rng.normal();
        }
        for (int c = 0; c < half; ++c) {
            row[half + c] = pat_b[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)] + cfg.noise_std * rng.normal();
        }
    }
    u.signal = Tensor::from({frames, cfg.channels}, std::move(signal));
    u.nominal_duration_s = static_cast<double>(frames) / cfg.nominal_frame_rate;
    return u;
}

}  // namespace

Corpus generate_corpus(const CorpusConfig& cfg) {
    cfg.validate();
    const auto pat_a = factor_patterns(cfg, "pattern.a", cfg.q_a);
    const auto pat_b = factor_patterns(cfg, "pattern.b", cfg.q_b);
    Corpus corpus;
    corpus.config = cfg;
    corpus.train.reserve(static_cast<std::size_t>(cfg.num_train));
    for (int i = 0; i < cfg.num_train; ++i) corpus.train.push_back(make_utterance(cfg, "train", i, pat_a, pat_b));
    corpus.dev.reserve(static_cast<std::size_t>(cfg.num_dev));
    for (int i = 0; i < cfg.num_dev; ++i) corpus.dev.push_back(make_utterance(cfg, "dev", i, pat_a, pat_b));
    corpus.test.reserve(static_cast<std::size_t>(cfg.num_test));
    for (int i = 0; i < cfg.num_test; ++i) corpus.test.push_back(make_utterance(cfg, "test", i, pat_a, pat_b));
    return corpus;
}

double oracle_best_single_fer(const CorpusConfig& cfg, Visibility visible) {
    cfg.validate();
    switch (visible) {
        case Visibility::FirstHalf:
            return 1.0 - 1.0 / static_cast<double>(cfg.q_b);
        case Visibility::SecondHalf:
            return 1.0 - 1.0 / static_cast<double>(cfg.q_a);
        case Visibility::Full:
            return 0.0;
    }
    throw ConfigError("oracle_best_single_fer: bad visibility");
}

namespace {

json corpus_config_to_json(const CorpusConfig& c) {
    return json{{"seed", c.seed},
                {"num_train", c.num_train},
                {"num_dev", c.num_dev},
                {"num_test", c.num_test},
                {"frames_min", c.frames_min},
                {"frames_max", c.frames_max},
                {"q_a", c.q_a},
                {"q_b", c.q_b},
                {"channels", c.channels},
                {"noise_std", c.noise_std},
                {"nominal_frame_rate", c.nominal_frame_rate}};
}

CorpusConfig corpus_config_from_json(const json& j) {
    CorpusConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.num_train = j.at("num_train").get<int>();
    c.num_dev = j.at("num_dev").get<int>();
    c.num_test = j.at("num_test").get<int>();
    c.frames_min = j.at("frames_min").get<int>();
    c.frames_max = j.at("frames_max").get<int>();
    c.q_a = j.at("q_a").get<int>();
    c.q_b = j.at("q_b").get<int>();
    c.channels = j.at("channels").get<int>();
    c.noise_std = j.at("noise_std").get<double>();
    c.nominal_frame_rate = j.at("nominal_frame_rate").get<double>();
    return c;
}

void save_split(const Corpus& corpus, const std::vector<Utterance>& utts, const std::string& split,
                const std::filesystem::path& dir, json& manifest_utts) {
    for (const auto& u : utts) {
        const std::string signal_rel = "signals/" + u.id + ".eft";
        const std::string labels_rel = "labels/" + u.id + ".txt";
        save_tensor(dir / signal_rel, u.signal);
        std::ostringstream ls;
        for (std::size_t i = 0; i < u.labels.size(); ++i) {
            if (i) ls << ' ';
            ls << u.labels[i];
        }
        ls << '\n';
        write_text_file(dir / labels_rel, ls.str());
        manifest_utts.push_back(json{{"id", u.id},
                                     {"signal", signal_rel},
                                     {"labels", labels_rel},
                                     {"frames", u.frames()},
                                     {"split", split}});
    }
    (void)corpus;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "signals");
    std::filesystem::create_directories(dir / "labels");
    json manifest;
    manifest["format"] = "effuse-corpus-v1";
    manifest["config"] = corpus_config_to_json(corpus.config);
    json utts = json::array();
    save_split(corpus, corpus.train, "train", dir, utts);
    save_split(corpus, corpus.dev, "dev", dir, utts);
    save_split(corpus, corpus.test, "test", dir, utts);
    manifest["utterances"] = std::move(utts);
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw DataError("corpus manifest " + (dir / "manifest.json").string() + ": " + e.what());
    }
    Corpus corpus;
    corpus.config = corpus_config_from_json(manifest.at("config"));
    for (const auto& entry : manifest.at("utterances")) {
        Utterance u;
        u.id = entry.at("id").get<std::string>();
        u.signal = load_tensor(dir / entry.at("signal").get<std::string>());
        const std::string labels_text = read_text_file(dir / entry.at("labels").get<std::string>());
        std::istringstream ls(labels_text);
        int y = 0;
        while (ls >> y) u.labels.push_back(y);
        const auto frames = entry.at("frames").get<std::int64_t>();
        if (u.signal.rows() != frames || static_cast<std::int64_t>(u.labels.size()) != frames) {
            throw DataError("corpus entry " + u.id + ": frame count mismatch");
        }
        for (int label : u.labels) {
            if (label < 0 || label >= corpus.config.vocab()) {
                throw DataError("corpus entry " + u.id + ": label out of range");
            }
        }
        u.nominal_duration_s = static_cast<double>(frames) / corpus.config.nominal_frame_rate;
        const std::string split = entry.at("split").get<std::string>();
        if (split == "train") {
            corpus.train.push_back(std::move(u));
        } else if (split == "dev") {
            corpus.dev.push_back(std::move(u));
        } else if (split == "test") {
            corpus.test.push_back(std::move(u));
        } else {
            throw DataError("corpus entry " + u.id + ": unknown split " + split);
        }
    }
    return corpus;
}

}  // namespace effuse
