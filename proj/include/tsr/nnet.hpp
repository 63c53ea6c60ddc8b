#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tsr/dataset.hpp"
#include "tsr/errors.hpp"
#include "tsr/matrix.hpp"
#include "tsr/rng.hpp"

namespace tsr {

enum class ActKind { relu, sigmoid, tanh };

struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
};
struct Conv2D {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
};
struct MaxPool2D {
    std::size_t window = 0;
    std::size_t stride = 0;  // 0 means stride == window
};
struct Act {
    ActKind kind = ActKind::relu;
};
struct SoftmaxHead {};

using Layer = std::variant<Dense, Conv2D, MaxPool2D, Act, SoftmaxHead>;

struct NetworkSpec {
    Shape input_shape;
    std::vector<Layer> layers;
};

enum class LossKind { mse, cross_entropy };

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    LossKind loss = LossKind::cross_entropy;
    std::uint64_t shuffle_seed = 0;
    std::uint64_t init_seed = 0;
};

/// Per-epoch train and validation losses from one training run.
struct LossCurve {
    std::vector<double> train_loss;
    std::vector<double> val_loss;

    std::size_t epochs() const { return train_loss.size(); }
    bool operator==(const LossCurve&) const = default;
};

struct LayerParams {
    std::vector<double> weights;
    std::vector<double> biases;

    bool operator==(const LayerParams&) const = default;
};

/// Trainable state, one entry per spec layer (empty for layers without
/// parameters). Gradients reuse the same layout.
struct Parameters {
    std::vector<LayerParams> layers;

    bool operator==(const Parameters&) const = default;
};

inline std::size_t pool_stride(const MaxPool2D& p) { return p.stride ? p.stride : p.window; }

// Walks the input shape through every layer; result[i] is the input shape of
// layer i, result[layers] the network output shape.
inline std::vector<Shape> layer_shapes(const NetworkSpec& spec) {
    std::vector<Shape> shapes;
    shapes.reserve(spec.layers.size() + 1);
    Shape cur = spec.input_shape;
    if (cur.size() == 0) throw ShapeError("input shape is empty");
    shapes.push_back(cur);

    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const Layer& layer = spec.layers[li];
        if (const auto* d = std::get_if<Dense>(&layer)) {
            if (d->in == 0 || d->out == 0) throw ShapeError("dense layer has zero extent", li);
            if (cur.size() != d->in) {
                throw ShapeError("dense expects " + std::to_string(d->in) + " inputs, previous layer provides " +
                                     std::to_string(cur.size()),
                                 li);
            }
            cur = Shape::flat(d->out);
        } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
            if (!cur.is_chw()) throw ShapeError("conv2d needs a CxHxW input, got " + cur.str(), li);
            if (c->stride == 0 || c->kernel == 0) throw ShapeError("conv2d kernel/stride must be positive", li);
            const auto [ch, h, w] = std::tuple{cur.dims[0], cur.dims[1], cur.dims[2]};
            if (ch != c->in_channels) {
                throw ShapeError("conv2d expects " + std::to_string(c->in_channels) + " channels, got " +
                                     std::to_string(ch),
                                 li);
            }
            if (h < c->kernel || w < c->kernel) throw ShapeError("conv2d kernel larger than input", li);
            cur = Shape::chw(c->out_channels, (h - c->kernel) / c->stride + 1,
                             (w - c->kernel) / c->stride + 1);
        } else if (const auto* p = std::get_if<MaxPool2D>(&layer)) {
            if (!cur.is_chw()) throw ShapeError("maxpool2d needs a CxHxW input, got " + cur.str(), li);
            if (p->window == 0) throw ShapeError("maxpool2d window must be positive", li);
            const std::size_t s = pool_stride(*p);
            const auto [ch, h, w] = std::tuple{cur.dims[0], cur.dims[1], cur.dims[2]};
            if (h < p->window || w < p->window) throw ShapeError("maxpool2d window larger than input", li);
            cur = Shape::chw(ch, (h - p->window) / s + 1, (w - p->window) / s + 1);
        } else if (std::holds_alternative<Act>(layer)) {
            // shape preserved
        } else {
            cur = Shape::flat(cur.size());  // softmax flattens
        }
        shapes.push_back(cur);
    }
    return shapes;
}

inline void validate_spec(const NetworkSpec& spec) { layer_shapes(spec); }

// Glorot-style uniform init: weights from +-sqrt(6/(fan_in+fan_out)), biases
// zero. Layers draw in spec order from a single seeded stream.
inline Parameters init(const NetworkSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    Rng rng(seed);
    Parameters params;
    params.layers.resize(spec.layers.size());
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        LayerParams& lp = params.layers[li];
        if (const auto* d = std::get_if<Dense>(&spec.layers[li])) {
            const double bound = std::sqrt(6.0 / static_cast<double>(d->in + d->out));
            lp.weights.resize(d->in * d->out);
            for (double& w : lp.weights) w = rng.uniform(-bound, bound);
            lp.biases.assign(d->out, 0.0);
        } else if (const auto* c = std::get_if<Conv2D>(&spec.layers[li])) {
            const std::size_t fan_in = c->in_channels * c->kernel * c->kernel;
            const std::size_t fan_out = c->out_channels * c->kernel * c->kernel;
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            lp.weights.resize(c->out_channels * c->in_channels * c->kernel * c->kernel);
            for (double& w : lp.weights) w = rng.uniform(-bound, bound);
            lp.biases.assign(c->out_channels, 0.0);
        }
    }
    return params;
}

namespace detail {

inline Matrix dense_forward(const Matrix& x, const Dense& d, const LayerParams& lp) {
    Matrix y(x.rows(), d.out);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xi = x.row(r);
        auto yi = y.row(r);
        for (std::size_t o = 0; o < d.out; ++o) yi[o] = lp.biases[o];
        for (std::size_t i = 0; i < d.in; ++i) {
            const double xv = xi[i];
            if (xv == 0.0) continue;
            const double* wrow = lp.weights.data() + i * d.out;
            for (std::size_t o = 0; o < d.out; ++o) yi[o] += xv * wrow[o];
        }
    }
    return y;
}

inline Matrix conv_forward(const Matrix& x, const Conv2D& c, const Shape& in_shape,
                           const LayerParams& lp) {
    const std::size_t h = in_shape.dims[1], w = in_shape.dims[2];
    const std::size_t oh = (h - c.kernel) / c.stride + 1;
    const std::size_t ow = (w - c.kernel) / c.stride + 1;
    Matrix y(x.rows(), c.out_channels * oh * ow);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xi = x.row(r);
        auto yi = y.row(r);
        for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = lp.biases[oc];
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                        const double* wbase =
                            lp.weights.data() + ((oc * c.in_channels + ic) * c.kernel) * c.kernel;
                        const double* xbase = xi.data() + ic * h * w;
                        for (std::size_t ki = 0; ki < c.kernel; ++ki) {
                            const double* xrow = xbase + (i * c.stride + ki) * w + j * c.stride;
                            const double* wrow = wbase + ki * c.kernel;
                            for (std::size_t kj = 0; kj < c.kernel; ++kj) acc += xrow[kj] * wrow[kj];
                        }
                    }
                    yi[(oc * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    return y;
}

// Forward max-pool; argmax records, per output cell, the flat input offset of
// the winning element. Ties keep the first element in row-major scan order.
inline Matrix pool_forward(const Matrix& x, const MaxPool2D& p, const Shape& in_shape,
                           std::vector<std::size_t>& argmax) {
    const std::size_t ch = in_shape.dims[0], h = in_shape.dims[1], w = in_shape.dims[2];
    const std::size_t s = pool_stride(p);
    const std::size_t oh = (h - p.window) / s + 1;
    const std::size_t ow = (w - p.window) / s + 1;
    Matrix y(x.rows(), ch * oh * ow);
    argmax.assign(x.rows() * ch * oh * ow, 0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xi = x.row(r);
        auto yi = y.row(r);
        for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    std::size_t best_idx = c * h * w + (i * s) * w + (j * s);
                    double best = xi[best_idx];
                    for (std::size_t ki = 0; ki < p.window; ++ki) {
                        for (std::size_t kj = 0; kj < p.window; ++kj) {
                            const std::size_t idx = c * h * w + (i * s + ki) * w + (j * s + kj);
                            if (xi[idx] > best) {
                                best = xi[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    const std::size_t out_idx = (c * oh + i) * ow + j;
                    yi[out_idx] = best;
                    argmax[r * ch * oh * ow + out_idx] = best_idx;
                }
            }
        }
    }
    return y;
}

inline Matrix act_forward(const Matrix& x, ActKind kind) {
    Matrix y = x;
    for (double& v : y.data()) {
        switch (kind) {
            case ActKind::relu: v = v > 0.0 ? v : 0.0; break;
            case ActKind::sigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
            case ActKind::tanh: v = std::tanh(v); break;
        }
    }
    return y;
}

inline Matrix softmax_forward(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xi = x.row(r);
        auto yi = y.row(r);
        double m = xi[0];
        for (double v : xi) m = std::max(m, v);
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            yi[c] = std::exp(xi[c] - m);
            sum += yi[c];
        }
        for (std::size_t c = 0; c < x.cols(); ++c) yi[c] /= sum;
    }
    return y;
}

// Activations of every layer boundary: acts[0] is the input batch, acts[i+1]
// the output of layer i. pool_argmax is aligned with the layer list.
struct ForwardTrace {
    std::vector<Matrix> acts;
    std::vector<std::vector<std::size_t>> pool_argmax;
};

inline ForwardTrace forward_trace(const Parameters& params, const NetworkSpec& spec,
                                  const Matrix& batch, const std::vector<Shape>& shapes) {
    if (batch.cols() != spec.input_shape.size()) {
        throw ShapeError("batch has " + std::to_string(batch.cols()) + " features, spec expects " +
                         std::to_string(spec.input_shape.size()));
    }
    ForwardTrace trace;
    trace.acts.reserve(spec.layers.size() + 1);
    trace.acts.push_back(batch);
    trace.pool_argmax.resize(spec.layers.size());
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const Matrix& x = trace.acts.back();
        if (const auto* d = std::get_if<Dense>(&spec.layers[li])) {
            trace.acts.push_back(dense_forward(x, *d, params.layers[li]));
        } else if (const auto* c = std::get_if<Conv2D>(&spec.layers[li])) {
            trace.acts.push_back(conv_forward(x, *c, shapes[li], params.layers[li]));
        } else if (const auto* p = std::get_if<MaxPool2D>(&spec.layers[li])) {
            trace.acts.push_back(pool_forward(x, *p, shapes[li], trace.pool_argmax[li]));
        } else if (const auto* a = std::get_if<Act>(&spec.layers[li])) {
            trace.acts.push_back(act_forward(x, a->kind));
        } else {
            trace.acts.push_back(softmax_forward(x));
        }
    }
    return trace;
}

}  // namespace detail

inline Matrix forward(const Parameters& params, const NetworkSpec& spec, const Matrix& batch) {
    const std::vector<Shape> shapes = layer_shapes(spec);
    return detail::forward_trace(params, spec, batch, shapes).acts.back();
}

/// Mean of squared differences over all matrix entries.
inline double loss_mse(const Matrix& predictions, const Matrix& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
        throw ShapeError("mse operands differ in shape");
    }
    if (predictions.size() == 0) throw ShapeError("mse of empty matrices");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.data().size(); ++i) {
        const double d = predictions.data()[i] - targets.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(predictions.size());
}

constexpr double kProbabilityFloor = 1e-12;

/// Mean negative log-probability of the true class. Probabilities are clamped
/// below at 1e-12 before the log.
inline double loss_cross_entropy(const Matrix& probabilities, std::span<const int> labels) {
    if (probabilities.rows() != labels.size()) {
        throw ShapeError("cross-entropy needs one label per prediction row");
    }
    if (probabilities.rows() == 0) throw ShapeError("cross-entropy of an empty batch");
    double sum = 0.0;
    for (std::size_t r = 0; r < probabilities.rows(); ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= probabilities.cols()) {
            throw ShapeError("label " + std::to_string(label) + " outside [0," +
                             std::to_string(probabilities.cols()) + ")");
        }
        sum += -std::log(std::max(probabilities(r, static_cast<std::size_t>(label)), kProbabilityFloor));
    }
    return sum / static_cast<double>(probabilities.rows());
}

inline Matrix one_hot(std::span<const int> labels, std::size_t num_classes) {
    Matrix y(labels.size(), num_classes, 0.0);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes) {
            throw ShapeError("label " + std::to_string(labels[r]) + " outside [0," +
                             std::to_string(num_classes) + ")");
        }
        y(r, static_cast<std::size_t>(labels[r])) = 1.0;
    }
    return y;
}

namespace detail {

inline Matrix dense_backward(const Matrix& x, const Matrix& delta, const Dense& d,
                             const LayerParams& lp, LayerParams& grad) {
    grad.weights.assign(lp.weights.size(), 0.0);
    grad.biases.assign(lp.biases.size(), 0.0);
    Matrix dx(x.rows(), d.in, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xi = x.row(r);
        const auto di = delta.row(r);
        auto dxi = dx.row(r);
        for (std::size_t o = 0; o < d.out; ++o) grad.biases[o] += di[o];
        for (std::size_t i = 0; i < d.in; ++i) {
            double* gw = grad.weights.data() + i * d.out;
            const double* w = lp.weights.data() + i * d.out;
            const double xv = xi[i];
            double acc = 0.0;
            for (std::size_t o = 0; o < d.out; ++o) {
                gw[o] += xv * di[o];
                acc += w[o] * di[o];
            }
            dxi[i] = acc;
        }
    }
    return dx;
}

inline Matrix conv_backward(const Matrix& x, const Matrix& delta, const Conv2D& c,
                            const Shape& in_shape, const LayerParams& lp, LayerParams& grad) {
    const std::size_t h = in_shape.dims[1], w = in_shape.dims[2];
    const std::size_t oh = (h - c.kernel) / c.stride + 1;
    const std::size_t ow = (w - c.kernel) / c.stride + 1;
    grad.weights.assign(lp.weights.size(), 0.0);
    grad.biases.assign(lp.biases.size(), 0.0);
    Matrix dx(x.rows(), x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xi = x.row(r);
        const auto di = delta.row(r);
        auto dxi = dx.row(r);
        for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    const double dv = di[(oc * oh + i) * ow + j];
                    if (dv == 0.0) continue;
                    grad.biases[oc] += dv;
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                        const std::size_t wbase = ((oc * c.in_channels + ic) * c.kernel) * c.kernel;
                        const std::size_t xbase = ic * h * w;
                        for (std::size_t ki = 0; ki < c.kernel; ++ki) {
                            for (std::size_t kj = 0; kj < c.kernel; ++kj) {
                                const std::size_t xidx =
                                    xbase + (i * c.stride + ki) * w + (j * c.stride + kj);
                                grad.weights[wbase + ki * c.kernel + kj] += xi[xidx] * dv;
                                dxi[xidx] += lp.weights[wbase + ki * c.kernel + kj] * dv;
                            }
                        }
                    }
                }
            }
        }
    }
    return dx;
}

inline Matrix pool_backward(const Matrix& x, const Matrix& delta,
                            const std::vector<std::size_t>& argmax) {
    Matrix dx(x.rows(), x.cols(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
        const auto di = delta.row(r);
        auto dxi = dx.row(r);
        for (std::size_t o = 0; o < delta.cols(); ++o) {
            dxi[argmax[r * delta.cols() + o]] += di[o];
        }
    }
    return dx;
}

inline Matrix act_backward(const Matrix& x_in, const Matrix& y_out, const Matrix& delta,
                           ActKind kind) {
    Matrix dx = delta;
    for (std::size_t i = 0; i < dx.data().size(); ++i) {
        switch (kind) {
            case ActKind::relu: dx.data()[i] *= x_in.data()[i] > 0.0 ? 1.0 : 0.0; break;
            case ActKind::sigmoid: {
                const double s = y_out.data()[i];
                dx.data()[i] *= s * (1.0 - s);
                break;
            }
            case ActKind::tanh: {
                const double t = y_out.data()[i];
                dx.data()[i] *= 1.0 - t * t;
                break;
            }
        }
    }
    return dx;
}

// dL/dz for z the softmax input, given dL/dp: dz = p .* (g - sum(g .* p)).
inline Matrix softmax_backward(const Matrix& probs, const Matrix& delta) {
    Matrix dx(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto p = probs.row(r);
        const auto g = delta.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < probs.cols(); ++c) dot += g[c] * p[c];
        for (std::size_t c = 0; c < probs.cols(); ++c) dx(r, c) = p[c] * (g[c] - dot);
    }
    return dx;
}

inline Parameters backward_from_trace(const Parameters& params, const NetworkSpec& spec,
                                      const ForwardTrace& trace, const Matrix& targets,
                                      LossKind loss, const std::vector<Shape>& shapes) {
    const Matrix& out = trace.acts.back();
    if (out.rows() != targets.rows() || out.cols() != targets.cols()) {
        throw ShapeError("targets do not match network output shape");
    }
    const double n_entries = static_cast<double>(out.size());
    const double n_rows = static_cast<double>(out.rows());

    Parameters grads;
    grads.layers.resize(spec.layers.size());

    Matrix delta;
    std::size_t li = spec.layers.size();
    if (loss == LossKind::cross_entropy) {
        if (spec.layers.empty() || !std::holds_alternative<SoftmaxHead>(spec.layers.back())) {
            throw ShapeError("cross-entropy loss requires a softmax head",
                             spec.layers.empty() ? 0 : spec.layers.size() - 1);
        }
        // Softmax+cross-entropy fuse to (p - y)/N at the logits; skip the
        // softmax jacobian.
        delta = Matrix(out.rows(), out.cols());
        for (std::size_t i = 0; i < out.data().size(); ++i) {
            delta.data()[i] = (out.data()[i] - targets.data()[i]) / n_rows;
        }
        li -= 1;
    } else {
        delta = Matrix(out.rows(), out.cols());
        for (std::size_t i = 0; i < out.data().size(); ++i) {
            delta.data()[i] = 2.0 * (out.data()[i] - targets.data()[i]) / n_entries;
        }
    }

    while (li-- > 0) {
        const Matrix& x = trace.acts[li];
        const Matrix& y = trace.acts[li + 1];
        if (const auto* d = std::get_if<Dense>(&spec.layers[li])) {
            delta = dense_backward(x, delta, *d, params.layers[li], grads.layers[li]);
        } else if (const auto* c = std::get_if<Conv2D>(&spec.layers[li])) {
            delta = conv_backward(x, delta, *c, shapes[li], params.layers[li], grads.layers[li]);
        } else if (std::holds_alternative<MaxPool2D>(spec.layers[li])) {
            delta = pool_backward(x, delta, trace.pool_argmax[li]);
        } else if (const auto* a = std::get_if<Act>(&spec.layers[li])) {
            delta = act_backward(x, y, delta, a->kind);
        } else {
            delta = softmax_backward(y, delta);
        }
    }
    return grads;
}

}  // namespace detail

/// Analytic gradients of the mean batch loss with respect to every parameter.
/// For cross-entropy, `targets` is the one-hot label matrix.
inline Parameters backward(const Parameters& params, const NetworkSpec& spec, const Matrix& batch,
                           const Matrix& targets, LossKind loss) {
    const std::vector<Shape> shapes = layer_shapes(spec);
    const detail::ForwardTrace trace = detail::forward_trace(params, spec, batch, shapes);
    return detail::backward_from_trace(params, spec, trace, targets, loss, shapes);
}

inline void sgd_step_inplace(Parameters& params, const Parameters& gradients, double learning_rate) {
    if (params.layers.size() != gradients.layers.size()) {
        throw ShapeError("gradient layout does not match parameters");
    }
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        LayerParams& lp = params.layers[li];
        const LayerParams& g = gradients.layers[li];
        if (lp.weights.size() != g.weights.size() || lp.biases.size() != g.biases.size()) {
            throw ShapeError("gradient layout does not match parameters", li);
        }
        for (std::size_t i = 0; i < lp.weights.size(); ++i) lp.weights[i] -= learning_rate * g.weights[i];
        for (std::size_t i = 0; i < lp.biases.size(); ++i) lp.biases[i] -= learning_rate * g.biases[i];
    }
}

inline Parameters sgd_step(const Parameters& params, const Parameters& gradients,
                           double learning_rate) {
    Parameters next = params;
    sgd_step_inplace(next, gradients, learning_rate);
    return next;
}

namespace detail {

inline Matrix batch_features(const Dataset& ds, std::span<const std::size_t> indices) {
    Matrix x(indices.size(), ds.dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& f = ds.samples[indices[r]].features;
        std::copy(f.begin(), f.end(), x.row(r).begin());
    }
    return x;
}

inline std::vector<int> batch_labels(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<int> labels(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) labels[r] = ds.samples[indices[r]].label;
    return labels;
}

inline double batch_loss(const Matrix& out, const Matrix& targets, std::span<const int> labels,
                         LossKind loss) {
    return loss == LossKind::cross_entropy ? loss_cross_entropy(out, labels)
                                           : loss_mse(out, targets);
}

}  // namespace detail

/// Loss of every sample in isolation; entry i follows sample index i. The
/// vector's mean equals the loss of the whole set taken as one batch.
inline std::vector<double> per_sample_losses(const Parameters& params, const NetworkSpec& spec,
                                             const Dataset& ds, LossKind loss) {
    const std::vector<Shape> shapes = layer_shapes(spec);
    const std::size_t out_width = shapes.back().size();
    std::vector<double> losses(ds.size());

    constexpr std::size_t chunk = 256;
    std::vector<std::size_t> indices(ds.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t count = std::min(chunk, ds.size() - start);
        const std::span<const std::size_t> slice(indices.data() + start, count);
        const Matrix x = detail::batch_features(ds, slice);
        const std::vector<int> labels = detail::batch_labels(ds, slice);
        const Matrix out = detail::forward_trace(params, spec, x, shapes).acts.back();
        for (std::size_t r = 0; r < count; ++r) {
            if (loss == LossKind::cross_entropy) {
                const int label = labels[r];
                if (label < 0 || static_cast<std::size_t>(label) >= out_width) {
                    throw ShapeError("label outside network output range");
                }
                losses[start + r] =
                    -std::log(std::max(out(r, static_cast<std::size_t>(label)), kProbabilityFloor));
            } else {
                double sum = 0.0;
                for (std::size_t c = 0; c < out_width; ++c) {
                    const double d =
                        out(r, c) - (static_cast<std::size_t>(labels[r]) == c ? 1.0 : 0.0);
                    sum += d * d;
                }
                losses[start + r] = sum / static_cast<double>(out_width);
            }
        }
    }
    return losses;
}

/// One training run. Per epoch: shuffle, consume mini-batches (final partial
/// batch included), record the mean of the batch losses, then evaluate the
/// full validation loss once without touching the weights. Deterministic for
/// a fixed config.
inline LossCurve train(const NetworkSpec& spec, const Dataset& train_set, const Dataset& val_set,
                       const TrainConfig& config) {
    if (train_set.empty() || val_set.empty()) throw ShapeError("train/validation sets must be non-empty");
    if (config.batch_size == 0) throw ShapeError("batch size must be positive");
    if (train_set.feature_shape.size() != spec.input_shape.size() ||
        val_set.feature_shape.size() != spec.input_shape.size()) {
        throw ShapeError("dataset feature size does not match network input");
    }
    const std::vector<Shape> shapes = layer_shapes(spec);
    const std::size_t out_width = shapes.back().size();

    Parameters params = init(spec, config.init_seed);
    Rng shuffle_rng(config.shuffle_seed);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<std::size_t> val_indices(val_set.size());
    std::iota(val_indices.begin(), val_indices.end(), std::size_t{0});
    const Matrix val_x = detail::batch_features(val_set, val_indices);
    const std::vector<int> val_labels = detail::batch_labels(val_set, val_indices);
    const Matrix val_targets = one_hot(val_labels, out_width);

    LossCurve curve;
    curve.train_loss.reserve(config.epochs);
    curve.val_loss.reserve(config.epochs);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> slice(order.data() + start, count);
            const Matrix x = detail::batch_features(train_set, slice);
            const std::vector<int> labels = detail::batch_labels(train_set, slice);
            const Matrix targets = one_hot(labels, out_width);

            const detail::ForwardTrace trace = detail::forward_trace(params, spec, x, shapes);
            const double loss =
                detail::batch_loss(trace.acts.back(), targets, labels, config.loss);
            if (!std::isfinite(loss)) throw NonFiniteLoss("training loss diverged", epoch);

            const Parameters grads =
                detail::backward_from_trace(params, spec, trace, targets, config.loss, shapes);
            sgd_step_inplace(params, grads, config.learning_rate);
            loss_sum += loss;
            batches++;
        }
        curve.train_loss.push_back(loss_sum / static_cast<double>(batches));

        const Matrix val_out = detail::forward_trace(params, spec, val_x, shapes).acts.back();
        const double val_loss =
            detail::batch_loss(val_out, val_targets, val_labels, config.loss);
        if (!std::isfinite(val_loss)) throw NonFiniteLoss("validation loss diverged", epoch);
        curve.val_loss.push_back(val_loss);
    }
    return curve;
}

/// Curve export per the file contract: `epoch,train_loss,val_loss`, 1-based
/// epochs.
inline void write_curve_csv(const LossCurve& curve, const std::string& path) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < curve.epochs(); ++e) {
        out += std::to_string(e + 1) + "," + csv::format_double(curve.train_loss[e]) + "," +
               csv::format_double(curve.val_loss[e]) + "\n";
    }
    csv::write_file(path, out);
}

inline LossCurve read_curve_csv(const std::string& path) {
    const std::vector<std::string> lines = csv::read_lines(path);
    if (lines.empty()) throw FormatError("empty curve file: " + path);
    LossCurve curve;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto cells = csv::split_line(lines[li]);
        if (cells.size() != 3) throw FormatError("curve row needs 3 cells", li + 1);
        double train = 0.0, val = 0.0;
        if (!csv::try_parse_double(cells[1], train) || !csv::try_parse_double(cells[2], val)) {
            throw FormatError("non-numeric loss value", li + 1);
        }
        curve.train_loss.push_back(train);
        curve.val_loss.push_back(val);
    }
    return curve;
}

}  // namespace tsr
