#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effuse/synth.hpp"
#include "effuse/tensor.hpp"

namespace effuse {

struct EncoderSpec {
    std::string id;
    std::uint64_t seed = 0;
    int num_layers = 2;        // k_i >= 2
    int dim = 16;              // r_i
    int stride = 1;            // d_i in {1, 2, 4}
    std::vector<int> channel_mask;  // input channels visible to this encoder

    void validate() const;
};

// Per-layer features of one utterance: num_layers tensors, each
// [ceil(frames / stride) x dim].
using LayerFeatures = std::vector<Tensor>;

// Immutable multi-layer feature extractor. Weights are derived from the spec
// seed and never change; extraction records no gradients.
class FrozenEncoder {
public:
    explicit FrozenEncoder(EncoderSpec spec);

    const EncoderSpec& spec() const { return spec_; }
    const std::string& id() const { return spec_.id; }
    int num_layers() const { return spec_.num_layers; }
    int dim() const { return spec_.dim; }
    int stride() const { return spec_.stride; }

    // Output frame count for a given input frame count.
    std::int64_t out_frames(std::int64_t in_frames) const {
        return (in_frames - 1) / spec_.stride + 1;
    }

    LayerFeatures extract(const Utterance& u) const;

    std::int64_t param_count() const;
    // FNV-1a over all parameter bit patterns; frozen-ness witness.
    std::uint64_t checksum() const;
    // Named parameter tensors ("enc.<id>.***"), for graph manifests.
    std::vector<std::pair<std::string, Tensor>> parameters() const;

private:
    struct Block {
        Tensor conv_kernel;  // [3 x dim x dim]
        Tensor conv_bias;    // [dim]
        Tensor mix;          // [dim x dim]
    };

    EncoderSpec spec_;
    Tensor input_proj_;  // [mask x dim], no bias
    std::vector<Block> blocks_;
};

FrozenEncoder build_encoder(const EncoderSpec& spec);

}  // namespace effuse
