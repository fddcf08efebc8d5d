#pragma once

// Multinomial logistic regression: p(y | x) = softmax(W x + b), trained with
// (optionally sample-weighted) cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asap/data.hpp"
#include "asap/error.hpp"
#include "asap/linalg.hpp"
#include "asap/random.hpp"
#include "asap/shift.hpp"

namespace asap {

struct ModelParams {
  Matrix weights;  // classes x dim
  Vector biases;   // classes

  ModelParams() = default;
  ModelParams(std::size_t classes, std::size_t dim) : weights(classes, dim), biases(classes, 0.0) {}

  std::size_t classes() const noexcept { return biases.size(); }
  std::size_t dim() const noexcept { return weights.cols(); }

  // this += scale * other
  void add_scaled(const ModelParams& other, double scale) {
    if (other.classes() != classes() || other.dim() != dim()) {
      throw StructuralError("model params: shape mismatch");
    }
    auto w = weights.entries();
    auto ow = other.weights.entries();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * ow[i];
    for (std::size_t c = 0; c < biases.size(); ++c) biases[c] += scale * other.biases[c];
  }

  bool operator==(const ModelParams&) const = default;
};

namespace detail {

inline void softmax_in_place(std::span<double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : z) v /= total;
}

inline void logits_into(const ModelParams& params, std::span<const double> x, std::span<double> out) {
  for (std::size_t c = 0; c < params.classes(); ++c) out[c] = dot(params.weights.row(c), x) + params.biases[c];
}

inline void check_dim(const ModelParams& params, std::size_t dim) {
  if (dim != params.dim()) {
    throw StructuralError("model expects " + std::to_string(params.dim()) +
                          " features, got " + std::to_string(dim));
  }
}

}  // namespace detail

inline Vector logits(const ModelParams& params, std::span<const double> x) {
  detail::check_dim(params, x.size());
  Vector z(params.classes());
  detail::logits_into(params, x, z);
  return z;
}

inline Vector forward(const ModelParams& params, std::span<const double> x) {
  Vector z = logits(params, x);
  detail::softmax_in_place(z);
  return z;
}

// Row i holds softmax(W x_i + b).
inline Matrix predict_proba(const ModelParams& params, const Matrix& inputs) {
  detail::check_dim(params, inputs.cols());
  Matrix probs(inputs.rows(), params.classes());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    detail::logits_into(params, inputs.row(i), probs.row(i));
    detail::softmax_in_place(probs.row(i));
  }
  return probs;
}

inline Vector mean_rows(const Matrix& m) {
  if (m.rows() == 0) throw StructuralError("mean_rows: empty matrix");
  Vector mean(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(i, c);
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

// Mean softmax output over a batch (the ASAP prediction buffer content).
inline LabelDistribution batch_prediction(const ModelParams& params, const StreamBatch& batch) {
  if (batch.size() == 0 || batch.inputs.rows() == 0) throw StructuralError("batch_prediction: empty batch");
  return LabelDistribution(mean_rows(predict_proba(params, batch.inputs)));
}

inline double accuracy_of(const Matrix& probs, std::span<const ClassId> labels) {
  if (probs.rows() != labels.size() || labels.empty()) throw StructuralError("accuracy: size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += argmax(probs.row(i)) == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double accuracy(const ModelParams& params, const Matrix& inputs, std::span<const ClassId> labels) {
  return accuracy_of(predict_proba(params, inputs), labels);
}

inline double accuracy(const ModelParams& params, const LabeledPool& pool) {
  return accuracy(params, pool.inputs(), pool.labels());
}

struct LossGrad {
  double loss = 0.0;
  ModelParams grad;
};

// loss = sum_i w_i CE(softmax(W x_i + b), y_i) / sum_i w_i, with its exact gradient.
inline LossGrad loss_and_grad(const ModelParams& params, const Matrix& inputs,
                              std::span<const ClassId> labels, std::span<const double> weights) {
  detail::check_dim(params, inputs.cols());
  if (inputs.rows() != labels.size() || labels.size() != weights.size()) {
    throw StructuralError("loss_and_grad: inputs, labels and weights differ in length");
  }
  double total_weight = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw DegenerateInputError("loss_and_grad: sample weights must be finite and non-negative");
    }
    total_weight += w;
  }
  if (total_weight <= 0.0) throw DegenerateInputError("loss_and_grad: all sample weights are zero");
  // Equal weights reduce to the plain mean; 1/n avoids the rounding of the summed total.
  const bool uniform = std::ranges::all_of(weights, [&](double w) { return w == weights[0]; });
  const double plain = 1.0 / static_cast<double>(weights.size());

  const std::size_t classes = params.classes();
  LossGrad out{0.0, ModelParams(classes, params.dim())};
  Vector z(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const ClassId y = labels[i];
    if (y >= classes) throw StructuralError("loss_and_grad: label out of range");
    const auto x = inputs.row(i);
    detail::logits_into(params, x, z);
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - peak);
    const double log_norm = peak + std::log(total);
    const double scale = uniform ? plain : weights[i] / total_weight;
    out.loss += scale * (log_norm - z[y]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = scale * (std::exp(z[c] - log_norm) - (c == y ? 1.0 : 0.0));
      auto grow = out.grad.weights.row(c);
      for (std::size_t j = 0; j < x.size(); ++j) grow[j] += g * x[j];
      out.grad.biases[c] += g;
    }
  }
  return out;
}

inline LossGrad loss_and_grad(const ModelParams& params, const Matrix& inputs,
                              std::span<const ClassId> labels) {
  const std::vector<double> ones(labels.size(), 1.0);
  return loss_and_grad(params, inputs, labels, ones);
}

inline ModelParams init_params(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  ModelParams p(classes, dim);
  Rng rng(mix_seed(seed, "init"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& w : p.weights.entries()) w = u(rng);
  return p;
}

struct PretrainConfig {
  std::size_t epochs = 30;
  double lr = 0.1;
  std::size_t batch = 64;
};

struct PretrainResult {
  ModelParams params;
  double train_accuracy = 0.0;
};

// Mini-batch gradient descent on unweighted cross-entropy, reshuffling every epoch.
inline PretrainResult pretrain(const LabeledPool& pool, const PretrainConfig& cfg, std::uint64_t seed) {
  if (pool.size() == 0) throw StructuralError("pretrain: empty pool");
  if (cfg.batch < 1 || !(cfg.lr > 0.0)) throw ConfigError("pretrain: batch and lr must be positive");
  ModelParams params = init_params(pool.num_classes(), pool.dim(), seed);
  Rng rng(mix_seed(seed, "pretrain-shuffle"));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Matrix xb;
  std::vector<ClassId> yb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      xb = Matrix(n, pool.dim());
      yb.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::ranges::copy(pool.input(order[start + i]), xb.row(i).begin());
        yb[i] = pool.label(order[start + i]);
      }
      params.add_scaled(loss_and_grad(params, xb, yb).grad, -cfg.lr);
    }
  }
  const double acc = accuracy(params, pool);
  return {std::move(params), acc};
}

}  // namespace asap
