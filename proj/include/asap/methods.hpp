#pragma once

// Online adaptation runners. All share the predict-then-update protocol: a
// batch is scored with the current model before anything derived from it is
// used, and its true labels are read only for that score.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asap/data.hpp"
#include "asap/error.hpp"
#include "asap/estimator.hpp"
#include "asap/linalg.hpp"
#include "asap/model.hpp"
#include "asap/scheduler.hpp"
#include "asap/shift.hpp"

namespace asap {

enum class MethodKind { asap, uogd, atlas, fth, ftfwh };

inline std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::asap: return "asap";
    case MethodKind::uogd: return "uogd";
    case MethodKind::atlas: return "atlas";
    case MethodKind::fth: return "fth";
    case MethodKind::ftfwh: return "ftfwh";
  }
  return "?";
}

inline MethodKind parse_method_kind(std::string_view name) {
  for (MethodKind k : {MethodKind::asap, MethodKind::uogd, MethodKind::atlas, MethodKind::fth,
                       MethodKind::ftfwh}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected asap, uogd, atlas, fth or ftfwh)");
}

struct MethodConfig {
  std::string label;  // column name in summaries; defaults to the kind
  MethodKind kind = MethodKind::asap;
  LrBounds bounds;                                          // asap
  double eta = 5e-6;                                        // uogd
  std::vector<double> eta_grid{1e-6, 5e-6, 1e-5, 5e-5, 1e-4};  // atlas
  double meta_rate = 1.0;                                   // atlas
  std::size_t window = 10;                                  // ftfwh

  std::string name() const { return label.empty() ? to_string(kind) : label; }

  void validate() const {
    switch (kind) {
      case MethodKind::asap: bounds.validate(); break;
      case MethodKind::uogd:
        if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("uogd: eta must be non-negative");
        break;
      case MethodKind::atlas:
        if (eta_grid.empty()) throw ConfigError("atlas: eta_grid must be non-empty");
        for (double e : eta_grid) {
          if (!(e > 0.0)) throw ConfigError("atlas: grid learning rates must be positive");
        }
        if (!(meta_rate > 0.0)) throw ConfigError("atlas: meta_rate must be positive");
        break;
      case MethodKind::fth: break;
      case MethodKind::ftfwh:
        if (window < 1) throw ConfigError("ftfwh: window must be >= 1");
        break;
    }
  }
};

struct StepRecord {
  std::size_t t = 0;
  double accuracy = 0.0;                // on the batch, before any update at t
  std::optional<double> eta;            // applied learning rate
  std::optional<double> shift_e;        // asap only
  LabelDistribution estimated_dist;     // BBSE estimate of P_t
  std::vector<double> meta_weights;     // atlas only, after the update at t
  std::int64_t wall_nanos = 0;          // update phase only
};

using Trace = std::vector<StepRecord>;

namespace detail {

using Clock = std::chrono::steady_clock;

inline std::int64_t nanos_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
}

inline void check_stream(const ModelParams& params, const LabeledPool& holdout, const Stream& stream) {
  if (holdout.num_classes() != params.classes() || holdout.dim() != params.dim()) {
    throw StructuralError("runner: holdout does not match model shape");
  }
  for (const auto& b : stream.batches) {
    if (b.size() == 0) throw StructuralError("runner: empty batch at t=" + std::to_string(b.timestep));
  }
}

// Shared loop for single-model gradient methods. `pick_lr` sees the batch's
// mean softmax output and returns (eta, optional shift estimate).
template <typename LrPolicy>
Trace run_single_learner(ModelParams params, const LabeledPool& holdout, const Stream& stream,
                         LrPolicy&& pick_lr) {
  check_stream(params, holdout, stream);
  const ShiftEstimator estimate(estimate_confusion(params, holdout));
  Trace trace;
  trace.reserve(stream.batches.size());
  for (const StreamBatch& batch : stream.batches) {
    const auto start = Clock::now();
    const Matrix probs = predict_proba(params, batch.inputs);
    StepRecord rec;
    rec.t = batch.timestep;
    rec.accuracy = accuracy_of(probs, batch.true_labels);
    const auto [eta, shift] = pick_lr(probs);
    rec.estimated_dist = estimate(hard_label_histogram(probs));
    if (eta != 0.0) {
      params.add_scaled(unsupervised_risk_grad(params, holdout, rec.estimated_dist).grad, -eta);
    }
    rec.eta = eta;
    rec.shift_e = shift;
    rec.wall_nanos = nanos_since(start);
    trace.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace detail

// Shift-aware post-training: eta_t from the cosine distance between the mean
// softmax of consecutive batches, then one gradient step on the estimated risk.
inline Trace run_asap(const ModelParams& params, const LabeledPool& holdout, const Stream& stream,
                      const LrBounds& bounds) {
  bounds.validate();
  PredictionBuffer buffer{batch_prediction(params, stream.warmup)};
  return detail::run_single_learner(params, holdout, stream, [&](const Matrix& probs) {
    const LabelDistribution current(mean_rows(probs));
    const SchedulerStep s = step(buffer, current, bounds);
    buffer = s.buffer;
    return std::pair<double, std::optional<double>>{s.eta, s.shift.value()};
  });
}

// Unbiased online gradient descent with a fixed learning rate.
inline Trace run_uogd(const ModelParams& params, const LabeledPool& holdout, const Stream& stream,
                      double eta) {
  if (!(eta >= 0.0)) throw ConfigError("uogd: eta must be non-negative");
  return detail::run_single_learner(params, holdout, stream, [eta](const Matrix&) {
    return std::pair<double, std::optional<double>>{eta, std::nullopt};
  });
}

// One learner per grid learning rate, each updated as in run_uogd; a Hedge
// meta-learner weights them by exp(-meta_rate * estimated risk).
inline Trace run_atlas_lite(const ModelParams& params, const LabeledPool& holdout, const Stream& stream,
                            std::span<const double> eta_grid, double meta_rate) {
  if (eta_grid.empty()) throw ConfigError("atlas: eta_grid must be non-empty");
  detail::check_stream(params, holdout, stream);
  const ShiftEstimator estimate(estimate_confusion(params, holdout));
  const std::size_t k = eta_grid.size();
  std::vector<ModelParams> learners(k, params);
  std::vector<double> meta(k, 1.0 / static_cast<double>(k));
  std::vector<double> log_meta(k, 0.0);
  std::vector<double> risks(k);

  Trace trace;
  trace.reserve(stream.batches.size());
  for (const StreamBatch& batch : stream.batches) {
    const auto start = detail::Clock::now();
    StepRecord rec;
    rec.t = batch.timestep;
    Matrix mixed(batch.size(), params.classes());
    Vector mixed_estimate(params.classes(), 0.0);
    double mixed_eta = 0.0;
    std::vector<Matrix> probs;
    probs.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      probs.push_back(predict_proba(learners[i], batch.inputs));
      auto dst = mixed.entries();
      auto src = probs.back().entries();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += meta[i] * src[j];
    }
    rec.accuracy = accuracy_of(mixed, batch.true_labels);

    for (std::size_t i = 0; i < k; ++i) {
      const LabelDistribution w = estimate(hard_label_histogram(probs[i]));
      const LossGrad lg = unsupervised_risk_grad(learners[i], holdout, w);
      risks[i] = lg.loss;
      learners[i].add_scaled(lg.grad, -eta_grid[i]);
      for (std::size_t c = 0; c < w.size(); ++c) mixed_estimate[c] += meta[i] * w[c];
      mixed_eta += meta[i] * eta_grid[i];
    }
    if (k > 1) {
      for (std::size_t i = 0; i < k; ++i) log_meta[i] -= meta_rate * risks[i];
      const double peak = *std::max_element(log_meta.begin(), log_meta.end());
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) total += meta[i] = std::exp(log_meta[i] - peak);
      for (double& m : meta) m /= total;
    }
    rec.estimated_dist = LabelDistribution(project_simplex(mixed_estimate));
    rec.eta = mixed_eta;
    rec.meta_weights = meta;
    rec.wall_nanos = detail::nanos_since(start);
    trace.push_back(std::move(rec));
  }
  return trace;
}

// p_c * hist_c / prior_c, renormalized.
inline LabelDistribution reweight_predictions(const LabelDistribution& probs, const LabelDistribution& hist,
                                              const LabelDistribution& train_prior) {
  if (probs.size() != hist.size() || probs.size() != train_prior.size()) {
    throw StructuralError("reweight_predictions: length mismatch");
  }
  Vector out(probs.size());
  double total = 0.0;
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (!(train_prior[c] > 0.0)) throw StructuralError("reweight_predictions: zero prior entry");
    out[c] = probs[c] * hist[c] / train_prior[c];
    total += out[c];
  }
  if (!(total > 0.0)) throw DegenerateInputError("reweight_predictions: no mass survives reweighting");
  for (double& v : out) v /= total;
  return LabelDistribution(std::move(out));
}

namespace detail {

// Fixed model; predictions reweighted by the mean of past BBSE estimates
// (all of them, or the last `window`). The estimate from batch t is only
// available from t + 1 on.
inline Trace run_history_tracking(const ModelParams& params, const LabeledPool& holdout,
                                  const Stream& stream, std::optional<std::size_t> window) {
  check_stream(params, holdout, stream);
  const ShiftEstimator estimate(estimate_confusion(params, holdout));
  const LabelDistribution prior(holdout.class_prior());
  std::deque<LabelDistribution> history;

  Trace trace;
  trace.reserve(stream.batches.size());
  for (const StreamBatch& batch : stream.batches) {
    const auto start = Clock::now();
    StepRecord rec;
    rec.t = batch.timestep;
    Matrix probs = predict_proba(params, batch.inputs);
    if (!history.empty()) {
      Vector mean(params.classes(), 0.0);
      for (const auto& h : history)
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += h[c];
      for (double& v : mean) v /= static_cast<double>(history.size());
      const LabelDistribution hist(project_simplex(mean));
      for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto row = probs.row(i);
        const auto adjusted = reweight_predictions(LabelDistribution(Vector(row.begin(), row.end())), hist, prior);
        std::ranges::copy(adjusted.probs(), row.begin());
      }
    }
    rec.accuracy = accuracy_of(probs, batch.true_labels);
    // Pseudo labels come from the unadjusted model, matching the confusion matrix.
    rec.estimated_dist = estimate(pseudo_label_distribution(params, batch));
    history.push_back(rec.estimated_dist);
    if (window && history.size() > *window) history.pop_front();
    rec.wall_nanos = nanos_since(start);
    trace.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace detail

inline Trace run_fth(const ModelParams& params, const LabeledPool& holdout, const Stream& stream) {
  return detail::run_history_tracking(params, holdout, stream, std::nullopt);
}

inline Trace run_ftfwh(const ModelParams& params, const LabeledPool& holdout, const Stream& stream,
                       std::size_t window) {
  if (window < 1) throw ConfigError("ftfwh: window must be >= 1");
  return detail::run_history_tracking(params, holdout, stream, window);
}

inline Trace run_method(const MethodConfig& cfg, const ModelParams& params, const LabeledPool& holdout,
                        const Stream& stream) {
  cfg.validate();
  switch (cfg.kind) {
    case MethodKind::asap: return run_asap(params, holdout, stream, cfg.bounds);
    case MethodKind::uogd: return run_uogd(params, holdout, stream, cfg.eta);
    case MethodKind::atlas: return run_atlas_lite(params, holdout, stream, cfg.eta_grid, cfg.meta_rate);
    case MethodKind::fth: return run_fth(params, holdout, stream);
    case MethodKind::ftfwh: return run_ftfwh(params, holdout, stream, cfg.window);
  }
  throw ConfigError("unknown method kind");
}

inline double mean_accuracy(const Trace& trace) {
  if (trace.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : trace) s += r.accuracy;
  return s / static_cast<double>(trace.size());
}

}  // namespace asap
