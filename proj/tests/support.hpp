#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "feddice/model.hpp"
#include "feddice/netflow.hpp"
#include "feddice/rng.hpp"

namespace testsupport {

// Random batch with raw feature values in [0, 3) and coin-flip labels. Meant
// for models with Transform::kNone so margins are easy to reason about.
inline std::vector<feddice::FeatureVector> random_batch(feddice::Rng& rng, std::size_t n,
                                                        std::size_t dim) {
    std::vector<feddice::FeatureVector> batch(n);
    for (auto& s : batch) {
        s.values.resize(dim);
        for (double& x : s.values) x = rng.uniform(0.0, 3.0);
        const bool clean = rng.next_below(2) == 0;
        s.label = clean ? feddice::Label::kClean : feddice::Label::kRansomware;
        s.family = clean ? feddice::Family::kClean : feddice::Family::kWannaCry;
    }
    return batch;
}

// Linearly separable toy data: clean samples sit delta above ransomware ones
// on every axis. Alternates labels so class balance is exact.
inline feddice::Dataset separable_dataset(feddice::Rng& rng, std::size_t n, std::size_t dim,
                                          double delta = 2.0) {
    feddice::Dataset d;
    d.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        feddice::FeatureVector s;
        s.values.resize(dim);
        const bool clean = i % 2 == 0;
        for (double& x : s.values) x = rng.uniform(0.0, 1.0) + (clean ? delta : 0.0);
        s.label = clean ? feddice::Label::kClean : feddice::Label::kRansomware;
        s.family = clean ? feddice::Family::kClean : feddice::Family::kWannaCry;
        d.samples.push_back(std::move(s));
    }
    return d;
}

inline feddice::LogRegModel random_logreg(feddice::Rng& rng, std::size_t dim) {
    feddice::LogRegModel m;
    m.w.resize(dim);
    for (double& w : m.w) w = rng.normal(0.0, 0.8);
    m.b = rng.normal(0.0, 0.5);
    return m;
}

inline feddice::LinearSvmModel random_svm(feddice::Rng& rng, std::size_t dim) {
    feddice::LinearSvmModel m;
    m.w.resize(dim);
    for (double& w : m.w) w = rng.normal(0.0, 0.8);
    m.b = rng.normal(0.0, 0.5);
    return m;
}

// Small FNN with all parameters (including batch norm scale/shift) jittered
// away from their initial values.
inline feddice::Model random_fnn(feddice::Rng& rng, const std::vector<std::size_t>& layers) {
    feddice::Model m = feddice::make_fnn(layers, rng.next_u64(), feddice::Transform::kNone);
    feddice::ParamVector p = feddice::to_params(m);
    for (double& v : p.values) v += rng.normal(0.0, 0.2);
    feddice::from_params(m, p);
    return m;
}

// Max relative error between the analytic gradient and central differences
// over every coordinate.
inline double grad_check_max_rel(feddice::Model model,
                                 std::span<const feddice::FeatureVector> batch, double h = 1e-5) {
    const feddice::ParamVector base = feddice::to_params(model);
    const auto grad = feddice::loss_and_grad(model, batch).second;
    double worst = 0.0;
    feddice::ParamVector p = base;
    for (std::size_t j = 0; j < base.values.size(); ++j) {
        p.values[j] = base.values[j] + h;
        feddice::from_params(model, p);
        const double up = feddice::loss_and_grad(model, batch).first;
        p.values[j] = base.values[j] - h;
        feddice::from_params(model, p);
        const double down = feddice::loss_and_grad(model, batch).first;
        p.values[j] = base.values[j];
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(grad[j]), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(grad[j] - fd) / denom);
    }
    return worst;
}

// Smallest |y z - 1| over the batch for a Transform::kNone SVM; finite
// differences are only trustworthy away from the hinge.
inline double svm_kink_distance(const feddice::LinearSvmModel& m,
                                std::span<const feddice::FeatureVector> batch) {
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& s : batch) {
        double z = m.b;
        for (std::size_t i = 0; i < m.w.size(); ++i) z += m.w[i] * s.values[i];
        const double y = s.label == feddice::Label::kClean ? 1.0 : -1.0;
        gap = std::min(gap, std::abs(y * z - 1.0));
    }
    return gap;
}

// Smallest |relu input| across a Transform::kNone network and batch. Batch
// norm centers the pre-activations near zero, so random points regularly land
// within finite-difference reach of a relu corner; checks resample until this
// gap is comfortable. The forward pass is recomputed here from the parameter
// vector alone so the check does not lean on the code under test.
inline double fnn_kink_distance(const feddice::Model& model,
                                std::span<const feddice::FeatureVector> batch,
                                const std::vector<std::size_t>& layers) {
    const std::vector<double>& p = feddice::to_params(model).values;
    const std::size_t B = batch.size();
    std::vector<double> cur(B * layers[0]);
    for (std::size_t b = 0; b < B; ++b)
        std::copy(batch[b].values.begin(), batch[b].values.end(), cur.begin() + b * layers[0]);

    double gap = std::numeric_limits<double>::infinity();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 2 < layers.size(); ++l) {
        const std::size_t in = layers[l], out = layers[l + 1];
        const double* W = p.data() + off;
        const double* bias = W + out * in;
        const double* gamma = bias + out;
        const double* beta = gamma + out;
        off += out * in + 5 * out;  // skip running stats too

        std::vector<double> next(B * out);
        for (std::size_t u = 0; u < out; ++u) {
            std::vector<double> z(B);
            double mean = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                double acc = bias[u];
                for (std::size_t i = 0; i < in; ++i) acc += W[u * in + i] * cur[b * in + i];
                z[b] = acc;
                mean += acc;
            }
            mean /= static_cast<double>(B);
            double var = 0.0;
            for (double v : z) var += (v - mean) * (v - mean);
            var /= static_cast<double>(B);
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            for (std::size_t b = 0; b < B; ++b) {
                const double pre = gamma[u] * (z[b] - mean) * inv + beta[u];
                gap = std::min(gap, std::abs(pre));
                next[b * out + u] = pre > 0.0 ? pre : 0.0;
            }
        }
        cur = std::move(next);
    }
    return gap;
}

}  // namespace testsupport
