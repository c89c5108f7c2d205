#include "effuse/downstream.hpp"

#include <cmath>

#include "effuse/graph.hpp"

namespace effuse {

Tensor task_loss(const Tensor& frame_logits, std::span<const int> labels) {
    return cross_entropy_mean(frame_logits, labels);
}

std::vector<int> pool_labels(std::span<const int> labels, int factor, std::int64_t out_frames) {
    if (factor < 1) {
        throw ConfigError("pool_labels: factor must be >= 1");
    }
    const std::int64_t t = static_cast<std::int64_t>(labels.size());
    const std::int64_t groups = (t + factor - 1) / factor;
    if (out_frames > groups) {
        throw DimensionError("pool_labels: " + std::to_string(out_frames) + " frames requested from " +
                             std::to_string(groups) + " groups");
    }
    std::vector<int> pooled;
    pooled.reserve(static_cast<std::size_t>(out_frames));
    std::vector<int> counts;
    for (std::int64_t g = 0; g < out_frames; ++g) {
        const std::int64_t begin = g * factor;
        const std::int64_t end = std::min<std::int64_t>(begin + factor, t);
        int best = labels[static_cast<std::size_t>(begin)];
        if (factor > 1) {
            int max_label = 0;
            for (std::int64_t i = begin; i < end; ++i) max_label = std::max(max_label, labels[static_cast<std::size_t>(i)]);
            counts.assign(static_cast<std::size_t>(max_label) + 1, 0);
            for (std::int64_t i = begin; i < end; ++i) counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])]++;
            int best_count = 0;
            best = 0;
            for (std::size_t c = 0; c < counts.size(); ++c) {
                if (counts[c] > best_count) {  // ties keep the smaller class
                    best_count = counts[c];
                    best = static_cast<int>(c);
                }
            }
        }
        pooled.push_back(best);
    }
    return pooled;
}

Metrics evaluate(const Graph& graph, const std::vector<Utterance>& split) {
    Metrics m;
    m.vocab = graph.vocab();
    m.confusion.assign(static_cast<std::size_t>(m.vocab) * m.vocab, 0);
    double ce_total = 0.0;
    for (const auto& u : split) {
        Tensor logits = graph.frame_logits(u);
        const std::int64_t frames = logits.rows();
        const int v = static_cast<int>(logits.cols());
        const auto labels = pool_labels(u.labels, graph.max_stride(), frames);
        ce_total += task_loss(logits, labels).value() * static_cast<double>(frames);
        const auto z = logits.data();
        for (std::int64_t t = 0; t < frames; ++t) {
            const std::size_t row = static_cast<std::size_t>(t * v);
            int arg = 0;
            for (int j = 1; j < v; ++j) {
                if (z[row + static_cast<std::size_t>(j)] > z[row + static_cast<std::size_t>(arg)]) arg = j;
            }
            const int truth = labels[static_cast<std::size_t>(t)];
            m.confusion[static_cast<std::size_t>(truth * m.vocab + arg)]++;
            if (arg != truth) ++m.errors;
        }
        m.frames += frames;
    }
    if (m.frames > 0) {
        m.frame_error_rate = static_cast<double>(m.errors) / static_cast<double>(m.frames);
        m.mean_cross_entropy = ce_total / static_cast<double>(m.frames);
    }
    return m;
}

}  // namespace effuse
