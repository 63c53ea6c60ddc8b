#pragma once

// Shared test-side oracles. These deliberately avoid the library's
// backpropagation / clustering code paths so they stay independent checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tsr/nnet.hpp"
#include "tsr/rng.hpp"

namespace testutil {

inline tsr::Dataset make_dataset(const std::vector<std::vector<double>>& features,
                                 const std::vector<int>& labels, int num_classes) {
    tsr::Dataset ds;
    ds.num_classes = num_classes;
    ds.feature_shape = tsr::Shape::flat(features.front().size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        tsr::Sample s;
        s.index = i;
        s.origin = i;
        s.features = features[i];
        s.label = labels[i];
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline double eval_loss(const tsr::Parameters& params, const tsr::NetworkSpec& spec,
                        const tsr::Matrix& batch, const tsr::Matrix& targets,
                        const std::vector<int>& labels, tsr::LossKind loss) {
    const tsr::Matrix out = tsr::forward(params, spec, batch);
    return loss == tsr::LossKind::cross_entropy
               ? tsr::loss_cross_entropy(out, labels)
               : tsr::loss_mse(out, targets);
}

// Central finite differences over every parameter; the independent oracle for
// backward().
inline tsr::Parameters finite_difference_gradients(const tsr::Parameters& params,
                                                   const tsr::NetworkSpec& spec,
                                                   const tsr::Matrix& batch,
                                                   const tsr::Matrix& targets,
                                                   const std::vector<int>& labels,
                                                   tsr::LossKind loss, double step = 1e-5) {
    tsr::Parameters grads = params;
    tsr::Parameters probe = params;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        for (int part = 0; part < 2; ++part) {
            std::vector<double>& pv =
                part == 0 ? probe.layers[li].weights : probe.layers[li].biases;
            std::vector<double>& gv =
                part == 0 ? grads.layers[li].weights : grads.layers[li].biases;
            for (std::size_t i = 0; i < pv.size(); ++i) {
                const double saved = pv[i];
                pv[i] = saved + step;
                const double up = eval_loss(probe, spec, batch, targets, labels, loss);
                pv[i] = saved - step;
                const double down = eval_loss(probe, spec, batch, targets, labels, loss);
                pv[i] = saved;
                gv[i] = (up - down) / (2.0 * step);
            }
        }
    }
    return grads;
}

// Largest relative error between two gradient sets; near-zero pairs compare
// absolutely so finite-difference noise does not blow up the ratio.
inline double max_gradient_error(const tsr::Parameters& analytic, const tsr::Parameters& numeric,
                                 double abs_floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t li = 0; li < analytic.layers.size(); ++li) {
        for (int part = 0; part < 2; ++part) {
            const std::vector<double>& a =
                part == 0 ? analytic.layers[li].weights : analytic.layers[li].biases;
            const std::vector<double>& n =
                part == 0 ? numeric.layers[li].weights : numeric.layers[li].biases;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double diff = std::abs(a[i] - n[i]);
                if (diff < abs_floor) continue;
                worst = std::max(worst, diff / std::max(std::abs(a[i]), std::abs(n[i])));
            }
        }
    }
    return worst;
}

inline std::size_t parameter_count(const tsr::Parameters& params) {
    std::size_t n = 0;
    for (const auto& lp : params.layers) n += lp.weights.size() + lp.biases.size();
    return n;
}

struct GradCheckCase {
    tsr::NetworkSpec spec;
    tsr::Parameters params;
    tsr::Matrix batch;
    tsr::Matrix targets;
    std::vector<int> labels;
    tsr::LossKind loss = tsr::LossKind::cross_entropy;
};

// Random small networks (well under 200 parameters) mixing dense and conv
// stacks with sigmoid/tanh activations and both losses.
inline GradCheckCase random_grad_case(tsr::Rng& rng) {
    GradCheckCase gc;
    const tsr::ActKind act = rng.below(2) == 0 ? tsr::ActKind::sigmoid : tsr::ActKind::tanh;
    const std::size_t variant = rng.below(3);
    std::size_t num_classes = 2 + rng.below(3);

    if (variant == 2) {
        // conv -> act -> pool -> dense -> softmax on a 1x5x5 input
        gc.spec.input_shape = tsr::Shape::chw(1, 5, 5);
        const std::size_t channels = 1 + rng.below(2);
        gc.spec.layers = {tsr::Conv2D{1, channels, 2, 1}, tsr::Act{act}, tsr::MaxPool2D{2, 2},
                          tsr::Dense{channels * 2 * 2, num_classes}, tsr::SoftmaxHead{}};
    } else {
        const std::size_t dim = 2 + rng.below(4);
        const std::size_t hidden = 2 + rng.below(5);
        gc.spec.input_shape = tsr::Shape::flat(dim);
        gc.spec.layers = {tsr::Dense{dim, hidden}, tsr::Act{act},
                          tsr::Dense{hidden, num_classes}};
        if (variant == 0) {
            gc.spec.layers.push_back(tsr::SoftmaxHead{});
        } else {
            gc.loss = tsr::LossKind::mse;
        }
    }

    gc.params = tsr::init(gc.spec, rng.below(1u << 30));
    const std::size_t batch = 2 + rng.below(4);
    gc.batch = tsr::Matrix(batch, gc.spec.input_shape.size());
    for (double& v : gc.batch.data()) v = rng.uniform(-1.5, 1.5);
    gc.labels.resize(batch);
    for (int& l : gc.labels) l = static_cast<int>(rng.below(num_classes));
    gc.targets = tsr::one_hot(gc.labels, num_classes);
    return gc;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> rank(v.size(), 0.0);
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
            i = j + 1;
        }
        return rank;
    };
    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
}

}  // namespace testutil
