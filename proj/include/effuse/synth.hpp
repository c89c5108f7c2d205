#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "effuse/tensor.hpp"

namespace effuse {

// A frame-labelled signal. Labels carry two latent factors: the label y of a
// frame decomposes as y = a * q_b + b, factor a rendered only into channels
// [0, C/2) and factor b only into channels [C/2, C).
struct Utterance {
    std::string id;
    Tensor signal;            // [frames x channels]
    std::vector<int> labels;  // per frame, in [0, V)
    double nominal_duration_s = 0.0;

    std::int64_t frames() const { return signal.rows(); }
};

struct CorpusConfig {
    std::uint64_t seed = 1234;
    int num_train = 600;
    int num_dev = 100;
    int num_test = 100;
    int frames_min = 80;
    int frames_max = 200;
    int q_a = 3;
    int q_b = 3;
    int channels = 16;
    double noise_std = 0.1;
    double nominal_frame_rate = 100.0;

    int vocab() const { return q_a * q_b; }
    void validate() const;
};

struct Corpus {
    CorpusConfig config;
    std::vector<Utterance> train;
    std::vector<Utterance> dev;
    std::vector<Utterance> test;

    const std::vector<Utterance>& split(const std::string& name) const;
};

// Deterministic given config.seed; splits are disjoint by id.
Corpus generate_corpus(const CorpusConfig& cfg);

enum class Visibility { FirstHalf, SecondHalf, Full };

// Bayes frame-error-rate achievable from the given channel view at zero
// noise: the unseen factor is uniform and unrecoverable.
double oracle_best_single_fer(const CorpusConfig& cfg, Visibility visible);

// Directory layout: manifest.json (id, paths, frame count, split) plus one
// tensor dump per signal and one text label file per utterance.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace effuse
