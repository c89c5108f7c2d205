#pragma once

#include <span>
#include <string>
#include <vector>

#include "effuse/synth.hpp"
#include "effuse/tensor.hpp"

namespace effuse {

class Graph;

struct Metrics {
    double frame_error_rate = 0.0;
    double mean_cross_entropy = 0.0;
    std::int64_t frames = 0;
    std::int64_t errors = 0;
    std::vector<std::int64_t> confusion;  // V x V, row = true class
    int vocab = 0;

    std::int64_t confusion_at(int truth, int predicted) const {
        return confusion[static_cast<std::size_t>(truth * vocab + predicted)];
    }
};

// Mean softmax cross-entropy over frames; the downstream training objective.
Tensor task_loss(const Tensor& frame_logits, std::span<const int> labels);

// Majority-vote pooling of per-frame labels to the common rate. Groups cover
// windows of `factor` frames (final window may be shorter); ties break toward
// the smaller class index; the result is truncated to `out_frames`.
std::vector<int> pool_labels(std::span<const int> labels, int factor, std::int64_t out_frames);

// Argmax decoding over a split; deterministic given graph and split.
Metrics evaluate(const Graph& graph, const std::vector<Utterance>& split);

}  // namespace effuse
