#include "effuse/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace effuse {

void EncoderSpec::validate() const {
    if (id.empty()) {
        throw ConfigError("encoder: id must not be empty");
    }
    if (channel_mask.empty()) {
        throw ConfigError("encoder " + id + ": channel mask must not be empty");
    }
    for (int c : channel_mask) {
        if (c < 0) {
            throw ConfigError("encoder " + id + ": negative channel in mask");
        }
    }
    if (num_layers < 2) {
        throw ConfigError("encoder " + id + ": num_layers must be >= 2");
    }
    if (dim < 1) {
        throw ConfigError("encoder " + id + ": dim must be positive");
    }
    if (stride != 1 && stride != 2 && stride != 4) {
        throw ConfigError("encoder " + id + ": stride must be one of {1, 2, 4}");
    }
}

FrozenEncoder::FrozenEncoder(EncoderSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(derive_seed(spec_.seed, "encoder", fnv1a(spec_.id)));
    const int m = static_cast<int>(spec_.channel_mask.size());
    const int r = spec_.dim;
    // No bias on the input projection: a zero signal stays zero until the
    // first convolution's bias, which keeps layer outputs frame-constant.
    input_proj_ = Tensor::randn({m, r}, rng, 1.0 / std::sqrt(static_cast<double>(m)));
    blocks_.resize(static_cast<std::size_t>(spec_.num_layers));
    for (auto& b : blocks_) {
        b.conv_kernel = Tensor::randn({3, r, r}, rng, 1.0 / std::sqrt(3.0 * r));
        b.conv_bias = Tensor::randn({r}, rng, 0.5);
        b.mix = Tensor::randn({r, r}, rng, 0.5 / std::sqrt(static_cast<double>(r)));
    }
}

FrozenEncoder build_encoder(const EncoderSpec& spec) { return FrozenEncoder(spec); }

LayerFeatures FrozenEncoder::extract(const Utterance& u) const {
    const std::int64_t channels = u.signal.cols();
    for (int c : spec_.channel_mask) {
        if (c >= channels) {
            throw DimensionError("encoder " + spec_.id + ": mask channel " + std::to_string(c) +
                                 " outside signal with " + std::to_string(channels) + " channels");
        }
    }
    const std::int64_t frames = u.signal.rows();
    const int m = static_cast<int>(spec_.channel_mask.size());
    std::vector<double> masked(static_cast<std::size_t>(frames) * m);
    const auto sig = u.signal.data();
    for (std::int64_t t = 0; t < frames; ++t) {
        for (int c = 0; c < m; ++c) {
            masked[static_cast<std::size_t>(t * m + c)] =
                sig[static_cast<std::size_t>(t * channels + spec_.channel_mask[static_cast<std::size_t>(c)])];
        }
    }
    Tensor h = matmul(Tensor::from({frames, m}, std::move(masked)), input_proj_);
    LayerFeatures features;
    features.reserve(blocks_.size());
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        const std::int64_t s = (k == 0) ? spec_.stride : 1;
        Tensor a = tanh(conv1d_w3(h, blocks_[k].conv_kernel, blocks_[k].conv_bias, s));
        h = add(a, matmul(a, blocks_[k].mix));
        features.push_back(h);
    }
    return features;
}

std::int64_t FrozenEncoder::param_count() const {
    std::int64_t n = input_proj_.size();
    for (const auto& b : blocks_) {
        n += b.conv_kernel.size() + b.conv_bias.size() + b.mix.size();
    }
    return n;
}

std::vector<std::pair<std::string, Tensor>> FrozenEncoder::parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    const std::string prefix = "enc." + spec_.id + ".";
    out.emplace_back(prefix + "input_proj", input_proj_);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        const std::string bp = prefix + "block" + std::to_string(k + 1) + ".";
        out.emplace_back(bp + "conv.K", blocks_[k].conv_kernel);
        out.emplace_back(bp + "conv.b", blocks_[k].conv_bias);
        out.emplace_back(bp + "mix", blocks_[k].mix);
    }
    return out;
}

std::uint64_t FrozenEncoder::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Tensor& t) {
        const auto d = t.data();
        h = fnv1a(d.data(), d.size() * sizeof(double), h);
    };
    mix(input_proj_);
    for (const auto& b : blocks_) {
        mix(b.conv_kernel);
        mix(b.conv_bias);
        mix(b.mix);
    }
    return h;
}

}  // namespace effuse
