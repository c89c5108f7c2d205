#include "effuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace effuse {

namespace {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e <= 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
        }
        n *= e;
    }
    return n;
}

void ensure_grad(detail::TensorNode& n) {
    if (n.grad.empty()) {
        n.grad.assign(n.data.size(), 0.0);
    }
}

}  // namespace

std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// Builds a result node, keeping history only when a parent requires grad.
struct OpAccess {
    static Tensor make(std::vector<std::int64_t> shape, std::vector<double> data,
                       std::vector<Tensor> parents,
                       std::function<void(detail::TensorNode&)> backprop) {
        auto node = std::make_shared<detail::TensorNode>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        bool rg = false;
        for (const auto& p : parents) {
            rg = rg || p.requires_grad();
        }
        node->requires_grad = rg;
        if (rg) {
            for (auto& p : parents) {
                node->parents.push_back(p.node_);
            }
            node->backprop = std::move(backprop);
        }
        return Tensor(std::move(node));
    }

    static detail::TensorNode& node(const Tensor& t) { return t.node(); }
    static std::shared_ptr<detail::TensorNode> ptr(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<detail::TensorNode> n) { return Tensor(std::move(n)); }
};

detail::TensorNode& Tensor::node() const {
    if (!node_) {
        throw Error("use of undefined tensor");
    }
    return *node_;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    auto n = shape_product(shape);
    return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value, bool requires_grad) {
    auto n = shape_product(shape);
    return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> data, bool requires_grad) {
    auto n = shape_product(shape);
    if (static_cast<std::size_t>(n) != data.size()) {
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_string(shape));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<std::int64_t> shape, Rng& rng, double stddev, bool requires_grad) {
    auto n = shape_product(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) {
        v = rng.normal() * stddev;
    }
    return from(std::move(shape), std::move(data), requires_grad);
}

const std::vector<std::int64_t>& Tensor::shape() const { return node().shape; }

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(node().data.size()); }

std::int64_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_string(shape()));
    return shape()[0];
}

std::int64_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_string(shape()));
    return shape()[1];
}

std::span<const double> Tensor::data() const { return node().data; }

std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::value() const {
    if (size() != 1) {
        throw DimensionError("value() on non-scalar tensor of shape " + shape_string(shape()));
    }
    return node().data[0];
}

double Tensor::at(std::int64_t i, std::int64_t j) const {
    if (rank() != 2) throw DimensionError("at(i,j) on tensor of shape " + shape_string(shape()));
    return node().data[static_cast<std::size_t>(i * cols() + j)];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

bool Tensor::has_grad() const { return defined() && !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) {
        throw Error("grad() called but no gradient is present");
    }
    return node().grad;
}

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::detached() const {
    return from(shape(), std::vector<double>(node().data.begin(), node().data.end()), false);
}

// ---- ops --------------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    const std::int64_t p = a.rows(), q = a.cols(), s = b.cols();
    std::vector<double> out(static_cast<std::size_t>(p * s), 0.0);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::int64_t i = 0; i < p; ++i) {
        for (std::int64_t k = 0; k < q; ++k) {
            const double av = ad[static_cast<std::size_t>(i * q + k)];
            if (av == 0.0) continue;
            const std::size_t brow = static_cast<std::size_t>(k * s);
            const std::size_t orow = static_cast<std::size_t>(i * s);
            for (std::int64_t j = 0; j < s; ++j) {
                out[orow + j] += av * bd[brow + j];
            }
        }
    }
    auto an = OpAccess::ptr(a);
    auto bn = OpAccess::ptr(b);
    return OpAccess::make(
        {p, s}, std::move(out), {a, b},
        [an, bn, p, q, s](detail::TensorNode& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                ensure_grad(*an);
                // dA = g . B^T
                for (std::int64_t i = 0; i < p; ++i) {
                    for (std::int64_t k = 0; k < q; ++k) {
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < s; ++j) {
                            acc += g[static_cast<std::size_t>(i * s + j)] *
                                   bn->data[static_cast<std::size_t>(k * s + j)];
                        }
                        an->grad[static_cast<std::size_t>(i * q + k)] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                // dB = A^T . g
                for (std::int64_t k = 0; k < q; ++k) {
                    for (std::int64_t j = 0; j < s; ++j) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < p; ++i) {
                            acc += an->data[static_cast<std::size_t>(i * q + k)] *
                                   g[static_cast<std::size_t>(i * s + j)];
                        }
                        bn->grad[static_cast<std::size_t>(k * s + j)] += acc;
                    }
                }
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    auto an = OpAccess::ptr(a);
    auto bn = OpAccess::ptr(b);
    return OpAccess::make(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
        if (an->requires_grad) {
            ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            ensure_grad(*bn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    auto an = OpAccess::ptr(a);
    auto bn = OpAccess::ptr(b);
    return OpAccess::make(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
        if (an->requires_grad) {
            ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            ensure_grad(*bn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    auto an = OpAccess::ptr(a);
    auto bn = OpAccess::ptr(b);
    return OpAccess::make(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
        if (an->requires_grad) {
            ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += bn->data[i] * self.grad[i];
        }
        if (bn->requires_grad) {
            ensure_grad(*bn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += an->data[i] * self.grad[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    auto an = OpAccess::ptr(a);
    return OpAccess::make(a.shape(), std::move(out), {a}, [an, s](detail::TensorNode& self) {
        if (an->requires_grad) {
            ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
        }
    });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != x.cols()) {
        throw DimensionError("add_row: shapes " + shape_string(x.shape()) + " and " +
                             shape_string(bias.shape()));
    }
    const std::int64_t t = x.rows(), d = x.cols();
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bd = bias.data();
    for (std::int64_t i = 0; i < t; ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
            out[static_cast<std::size_t>(i * d + j)] += bd[static_cast<std::size_t>(j)];
        }
    }
    auto xn = OpAccess::ptr(x);
    auto bn = OpAccess::ptr(bias);
    return OpAccess::make(x.shape(), std::move(out), {x, bias}, [xn, bn, t, d](detail::TensorNode& self) {
        if (xn->requires_grad) {
            ensure_grad(*xn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            ensure_grad(*bn);
            for (std::int64_t i = 0; i < t; ++i) {
                for (std::int64_t j = 0; j < d; ++j) {
                    bn->grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i * d + j)];
                }
            }
        }
    });
}

Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
    auto xn = OpAccess::ptr(x);
    auto y = OpAccess::make(x.shape(), std::move(out), {x}, nullptr);
    auto yn = OpAccess::ptr(y);
    if (y.requires_grad()) {
        OpAccess::node(y).backprop = [xn, yn](detail::TensorNode& self) {
            if (xn->requires_grad) {
                ensure_grad(*xn);
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    const double yv = yn->data[i];
                    xn->grad[i] += (1.0 - yv * yv) * self.grad[i];
                }
            }
        };
    }
    return y;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1) {
        throw DimensionError("softmax: expected rank-1 logits, got " + shape_string(logits.shape()));
    }
    const auto xd = logits.data();
    const double mx = *std::max_element(xd.begin(), xd.end());
    std::vector<double> out(xd.size());
    double z = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(xd[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    auto xn = OpAccess::ptr(logits);
    auto y = OpAccess::make(logits.shape(), std::move(out), {logits}, nullptr);
    auto yn = OpAccess::ptr(y);
    if (y.requires_grad()) {
        OpAccess::node(y).backprop = [xn, yn](detail::TensorNode& self) {
            if (!xn->requires_grad) return;
            ensure_grad(*xn);
            double dot = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * yn->data[i];
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                xn->grad[i] += yn->data[i] * (self.grad[i] - dot);
            }
        };
    }
    return y;
}

Tensor weighted_sum(const std::vector<Tensor>& layers, const Tensor& weights) {
    if (layers.empty()) {
        throw DimensionError("weighted_sum: no layers given");
    }
    if (weights.rank() != 1 || weights.shape()[0] != static_cast<std::int64_t>(layers.size())) {
        throw DimensionError("weighted_sum: " + std::to_string(layers.size()) + " layers but weights " +
                             shape_string(weights.shape()));
    }
    for (const auto& l : layers) {
        check_same_shape(l, layers.front(), "weighted_sum");
    }
    const auto wd = weights.data();
    std::vector<double> out(layers.front().size(), 0.0);
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto ld = layers[k].data();
        const double w = wd[k];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * ld[i];
    }
    std::vector<Tensor> parents = layers;
    parents.push_back(weights);
    std::vector<std::shared_ptr<detail::TensorNode>> lns;
    lns.reserve(layers.size());
    for (const auto& l : layers) lns.push_back(OpAccess::ptr(l));
    auto wn = OpAccess::ptr(weights);
    return OpAccess::make(layers.front().shape(), std::move(out), std::move(parents),
                          [lns, wn](detail::TensorNode& self) {
                              for (std::size_t k = 0; k < lns.size(); ++k) {
                                  if (wn->requires_grad) {
                                      ensure_grad(*wn);
                                      double acc = 0.0;
                                      for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                          acc += self.grad[i] * lns[k]->data[i];
                                      }
                                      wn->grad[k] += acc;
                                  }
                                  if (lns[k]->requires_grad) {
                                      ensure_grad(*lns[k]);
                                      const double w = wn->data[k];
                                      for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                          lns[k]->grad[i] += w * self.grad[i];
                                      }
                                  }
                              }
                          });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no parts given");
    }
    const std::int64_t t = parts.front().rows();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.rows() != t) {
            throw DimensionError("concat_cols: ragged shapes " + shape_string(parts.front().shape()) +
                                 " vs " + shape_string(p.shape()));
        }
        total += p.cols();
    }
    std::vector<double> out(static_cast<std::size_t>(t * total));
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t d = p.cols();
        const auto pd = p.data();
        for (std::int64_t i = 0; i < t; ++i) {
            std::copy_n(pd.begin() + i * d, d, out.begin() + i * total + off);
        }
        off += d;
    }
    std::vector<std::shared_ptr<detail::TensorNode>> pns;
    for (const auto& p : parts) pns.push_back(OpAccess::ptr(p));
    return OpAccess::make({t, total}, std::move(out), parts, [pns, t, total](detail::TensorNode& self) {
        std::int64_t off = 0;
        for (const auto& pn : pns) {
            const std::int64_t d = pn->shape[1];
            if (pn->requires_grad) {
                ensure_grad(*pn);
                for (std::int64_t i = 0; i < t; ++i) {
                    for (std::int64_t j = 0; j < d; ++j) {
                        pn->grad[static_cast<std::size_t>(i * d + j)] +=
                            self.grad[static_cast<std::size_t>(i * total + off + j)];
                    }
                }
            }
            off += d;
        }
    });
}

Tensor slice_rows(const Tensor& x, std::int64_t begin, std::int64_t count) {
    if (x.rank() != 2 || begin < 0 || count <= 0 || begin + count > x.rows()) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of " + shape_string(x.shape()));
    }
    const std::int64_t d = x.cols();
    const auto xd = x.data();
    std::vector<double> out(xd.begin() + begin * d, xd.begin() + (begin + count) * d);
    auto xn = OpAccess::ptr(x);
    return OpAccess::make({count, d}, std::move(out), {x}, [xn, begin, d](detail::TensorNode& self) {
        if (!xn->requires_grad) return;
        ensure_grad(*xn);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            xn->grad[static_cast<std::size_t>(begin * d) + i] += self.grad[i];
        }
    });
}

Tensor mean_pool_rows(const Tensor& x, std::int64_t factor) {
    if (x.rank() != 2 || factor <= 0) {
        throw DimensionError("mean_pool_rows: factor " + std::to_string(factor) + " on " +
                             shape_string(x.shape()));
    }
    if (factor == 1) {
        // Still records an identity hop so the caller may treat it uniformly.
        return slice_rows(x, 0, x.rows());
    }
    const std::int64_t t_out = x.rows() / factor;
    if (t_out == 0) {
        throw DimensionError("mean_pool_rows: " + std::to_string(x.rows()) + " rows cannot pool by " +
                             std::to_string(factor));
    }
    const std::int64_t d = x.cols();
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(t_out * d), 0.0);
    for (std::int64_t g = 0; g < t_out; ++g) {
        for (std::int64_t r = 0; r < factor; ++r) {
            const std::size_t src = static_cast<std::size_t>((g * factor + r) * d);
            for (std::int64_t j = 0; j < d; ++j) {
                out[static_cast<std::size_t>(g * d + j)] += xd[src + j];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(factor);
    for (auto& v : out) v *= inv;
    auto xn = OpAccess::ptr(x);
    return OpAccess::make({t_out, d}, std::move(out), {x},
                          [xn, factor, t_out, d, inv](detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              ensure_grad(*xn);
                              for (std::int64_t g = 0; g < t_out; ++g) {
                                  for (std::int64_t r = 0; r < factor; ++r) {
                                      const std::size_t dst = static_cast<std::size_t>((g * factor + r) * d);
                                      for (std::int64_t j = 0; j < d; ++j) {
                                          xn->grad[dst + j] +=
                                              inv * self.grad[static_cast<std::size_t>(g * d + j)];
                                      }
                                  }
                              }
                          });
}

Tensor conv1d_w3(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::int64_t stride) {
    if (x.rank() != 2 || kernel.rank() != 3 || kernel.shape()[0] != 3 || kernel.shape()[1] != x.cols()) {
        throw DimensionError("conv1d_w3: input " + shape_string(x.shape()) + " kernel " +
                             shape_string(kernel.shape()));
    }
    const std::int64_t din = kernel.shape()[1];
    const std::int64_t dout = kernel.shape()[2];
    if (bias.rank() != 1 || bias.shape()[0] != dout) {
        throw DimensionError("conv1d_w3: bias " + shape_string(bias.shape()) + " for dout " +
                             std::to_string(dout));
    }
    if (stride <= 0) {
        throw DimensionError("conv1d_w3: stride must be positive");
    }
    const std::int64_t t_in = x.rows();
    const std::int64_t t_out = (t_in - 1) / stride + 1;  // = ceil(t_in / stride) with pad 1
    const auto xd = x.data();
    const auto kd = kernel.data();
    const auto bd = bias.data();
    std::vector<double> out(static_cast<std::size_t>(t_out * dout));
    for (std::int64_t to = 0; to < t_out; ++to) {
        for (std::int64_t o = 0; o < dout; ++o) {
            out[static_cast<std::size_t>(to * dout + o)] = bd[static_cast<std::size_t>(o)];
        }
        for (std::int64_t tap = 0; tap < 3; ++tap) {
            const std::int64_t ti = to * stride + tap - 1;
            if (ti < 0 || ti >= t_in) continue;
            for (std::int64_t i = 0; i < din; ++i) {
                const double xv = xd[static_cast<std::size_t>(ti * din + i)];
                if (xv == 0.0) continue;
                const std::size_t krow = static_cast<std::size_t>((tap * din + i) * dout);
                for (std::int64_t o = 0; o < dout; ++o) {
                    out[static_cast<std::size_t>(to * dout + o)] += xv * kd[krow + o];
                }
            }
        }
    }
    auto xn = OpAccess::ptr(x);
    auto kn = OpAccess::ptr(kernel);
    auto bn = OpAccess::ptr(bias);
    return OpAccess::make(
        {t_out, dout}, std::move(out), {x, kernel, bias},
        [xn, kn, bn, stride, t_in, t_out, din, dout](detail::TensorNode& self) {
            const auto& g = self.grad;
            for (std::int64_t to = 0; to < t_out; ++to) {
                const std::size_t grow = static_cast<std::size_t>(to * dout);
                if (bn->requires_grad) {
                    ensure_grad(*bn);
                    for (std::int64_t o = 0; o < dout; ++o) bn->grad[static_cast<std::size_t>(o)] += g[grow + o];
                }
                for (std::int64_t tap = 0; tap < 3; ++tap) {
                    const std::int64_t ti = to * stride + tap - 1;
                    if (ti < 0 || ti >= t_in) continue;
                    for (std::int64_t i = 0; i < din; ++i) {
                        const std::size_t xi = static_cast<std::size_t>(ti * din + i);
                        const std::size_t krow = static_cast<std::size_t>((tap * din + i) * dout);
                        if (kn->requires_grad) {
                            ensure_grad(*kn);
                            const double xv = xn->data[xi];
                            for (std::int64_t o = 0; o < dout; ++o) {
                                kn->grad[krow + o] += xv * g[grow + o];
                            }
                        }
                        if (xn->requires_grad) {
                            ensure_grad(*xn);
                            double acc = 0.0;
                            for (std::int64_t o = 0; o < dout; ++o) {
                                acc += kn->data[krow + o] * g[grow + o];
                            }
                            xn->grad[xi] += acc;
                        }
                    }
                }
            }
        });
}

Tensor cross_entropy_mean(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) {
        throw DimensionError("cross_entropy_mean: logits " + shape_string(logits.shape()));
    }
    const std::int64_t t = logits.rows();
    const std::int64_t v = logits.cols();
    if (static_cast<std::int64_t>(labels.size()) != t) {
        throw DimensionError("cross_entropy_mean: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(t) + " frames");
    }
    for (int y : labels) {
        if (y < 0 || y >= v) {
            throw DataError("label " + std::to_string(y) + " out of range [0, " + std::to_string(v) + ")");
        }
    }
    const auto zd = logits.data();
    double total = 0.0;
    for (std::int64_t i = 0; i < t; ++i) {
        const std::size_t row = static_cast<std::size_t>(i * v);
        double mx = zd[row];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, zd[row + j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < v; ++j) z += std::exp(zd[row + j] - mx);
        total += std::log(z) + mx - zd[row + static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    std::vector<int> labels_copy(labels.begin(), labels.end());
    auto zn = OpAccess::ptr(logits);
    return OpAccess::make(
        {}, {total / static_cast<double>(t)}, {logits},
        [zn, labels_copy = std::move(labels_copy), t, v](detail::TensorNode& self) {
            if (!zn->requires_grad) return;
            ensure_grad(*zn);
            const double gs = self.grad[0] / static_cast<double>(t);
            for (std::int64_t i = 0; i < t; ++i) {
                const std::size_t row = static_cast<std::size_t>(i * v);
                double mx = zn->data[row];
                for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, zn->data[row + j]);
                double z = 0.0;
                for (std::int64_t j = 0; j < v; ++j) z += std::exp(zn->data[row + j] - mx);
                for (std::int64_t j = 0; j < v; ++j) {
                    const double p = std::exp(zn->data[row + j] - mx) / z;
                    const double target = (labels_copy[static_cast<std::size_t>(i)] == j) ? 1.0 : 0.0;
                    zn->grad[row + static_cast<std::size_t>(j)] += gs * (p - target);
                }
            }
        });
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "l1_mean");
    const auto ad = a.data();
    const auto bd = b.data();
    double total = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) total += std::abs(ad[i] - bd[i]);
    const double n = static_cast<double>(ad.size());
    auto an = OpAccess::ptr(a);
    auto bn = OpAccess::ptr(b);
    return OpAccess::make({}, {total / n}, {a, b}, [an, bn, n](detail::TensorNode& self) {
        const double gs = self.grad[0] / n;
        for (std::size_t i = 0; i < an->data.size(); ++i) {
            const double diff = an->data[i] - bn->data[i];
            const double sgn = (diff > 0.0) ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            if (an->requires_grad) {
                ensure_grad(*an);
                an->grad[i] += gs * sgn;
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                bn->grad[i] -= gs * sgn;
            }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    const auto xd = x.data();
    double total = 0.0;
    for (double v : xd) total += v;
    auto xn = OpAccess::ptr(x);
    return OpAccess::make({}, {total}, {x}, [xn](detail::TensorNode& self) {
        if (!xn->requires_grad) return;
        ensure_grad(*xn);
        for (auto& g : xn->grad) g += self.grad[0];
    });
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ConfigError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        return;  // nothing trainable upstream
    }
    auto root = OpAccess::ptr(loss);

    // Iterative post-order DFS; every node visited exactly once.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::TensorNode* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    ensure_grad(*root);
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* n = *it;
        if (n->backprop && !n->grad.empty()) {
            n->backprop(*n);
        }
    }
}

// ---- finite differences -------------------------------------------------------

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& forward, Tensor param, double eps) {
    if (eps <= 0.0) {
        throw ConfigError("finite_diff_check: eps must be positive");
    }
    if (!param.requires_grad()) {
        throw ConfigError("finite_diff_check: parameter does not require grad");
    }
    param.zero_grad();
    Tensor loss = forward();
    const double f0 = loss.value();
    if (!std::isfinite(f0)) {
        throw NumericError("finite_diff_check: non-finite evaluation at base point");
    }
    backward(loss);
    std::vector<double> autograd(param.size(), 0.0);
    if (param.has_grad()) {
        auto g = param.grad();
        autograd.assign(g.begin(), g.end());
    }

    FiniteDiffReport report;
    auto values = param.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double fp = forward().value();
        values[i] = saved - eps;
        const double fm = forward().value();
        values[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_diff_check: non-finite evaluation at perturbed point");
        }
        const double fwd = (fp - f0) / eps;
        const double bwd = (f0 - fm) / eps;
        // One-sided estimates disagreeing badly means the element straddles a
        // subgradient kink (|.| or similar); flag it rather than fail.
        if (std::abs(fwd - bwd) > 0.05 * std::max({std::abs(fwd), std::abs(bwd), 1e-6})) {
            ++report.skipped;
            continue;
        }
        const double central = (fp - fm) / (2.0 * eps);
        const double ref = std::max({std::abs(central), std::abs(autograd[i]), 1e-8});
        const double rel = std::abs(central - autograd[i]) / ref;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.checked;
    }
    return report;
}

}  // namespace effuse
