#pragma once

// Time-varying label distributions P_t = (1 - alpha(t)) P_0 + alpha(t) P_T and
// the unlabeled stream batches drawn from them.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asap/data.hpp"
#include "asap/error.hpp"
#include "asap/linalg.hpp"
#include "asap/random.hpp"

namespace asap {

class LabelDistribution {
 public:
  static constexpr double kTolerance = 1e-9;

  LabelDistribution() = default;
  explicit LabelDistribution(Vector probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw StructuralError("label distribution: empty");
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw StructuralError("label distribution: entries must be finite and non-negative");
      }
    }
    if (std::abs(sum(probs_) - 1.0) > kTolerance) {
      throw StructuralError("label distribution: entries sum to " + std::to_string(sum(probs_)));
    }
  }

  static LabelDistribution uniform(std::size_t classes) {
    return LabelDistribution(Vector(classes, 1.0 / static_cast<double>(classes)));
  }
  static LabelDistribution one_hot(std::size_t classes, ClassId c) {
    if (c >= classes) throw StructuralError("one_hot: class out of range");
    Vector v(classes, 0.0);
    v[c] = 1.0;
    return LabelDistribution(std::move(v));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  const Vector& probs() const noexcept { return probs_; }
  operator std::span<const double>() const noexcept { return probs_; }

  bool operator==(const LabelDistribution&) const = default;

 private:
  Vector probs_;
};

enum class ShiftKind { lin, sin, squ, ber };

inline constexpr ShiftKind kAllShiftKinds[] = {ShiftKind::lin, ShiftKind::sin, ShiftKind::squ,
                                               ShiftKind::ber};

inline std::string to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::lin: return "lin";
    case ShiftKind::sin: return "sin";
    case ShiftKind::squ: return "squ";
    case ShiftKind::ber: return "ber";
  }
  return "?";
}

inline ShiftKind parse_shift_kind(std::string_view name) {
  std::string lower(name);
  std::ranges::transform(lower, lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (ShiftKind k : kAllShiftKinds) {
    if (lower == to_string(k)) return k;
  }
  throw ConfigError("unknown shift kind '" + std::string(name) + "' (expected lin, sin, squ or ber)");
}

// Two-state process starting at 0 that flips with probability flip_prob per step.
inline std::vector<std::uint8_t> bernoulli_states(std::size_t steps, double flip_prob,
                                                  std::uint64_t seed) {
  Rng rng(mix_seed(seed, "bernoulli-shift"));
  std::vector<std::uint8_t> states(steps, 0);
  std::uint8_t state = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0 && uniform01(rng) < flip_prob) state ^= 1;
    states[t] = state;
  }
  return states;
}

class ShiftSchedule {
 public:
  ShiftSchedule(ShiftKind kind, std::size_t horizon, LabelDistribution p0, LabelDistribution pT,
                std::uint64_t seed = 0)
      : kind_(kind), horizon_(horizon), p0_(std::move(p0)), pT_(std::move(pT)), seed_(seed) {
    if (horizon_ < 1) throw StructuralError("shift schedule: horizon must be >= 1");
    if (p0_.size() != pT_.size()) throw StructuralError("shift schedule: endpoint lengths differ");
    if (kind_ == ShiftKind::ber) {
      ber_states_ = bernoulli_states(horizon_ + 1, 1.0 / std::sqrt(static_cast<double>(horizon_)), seed_);
    }
  }

  ShiftKind kind() const noexcept { return kind_; }
  std::size_t horizon() const noexcept { return horizon_; }
  const LabelDistribution& initial() const noexcept { return p0_; }
  const LabelDistribution& target() const noexcept { return pT_; }

  // Steps per half-period of the square wave: ceil(sqrt(T) / 2).
  std::size_t square_block() const {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(horizon_)) / 2.0)));
  }

  double alpha(std::size_t t) const {
    if (t > horizon_) {
      throw StructuralError("alpha: t=" + std::to_string(t) + " outside [0, " +
                            std::to_string(horizon_) + "]");
    }
    const double T = static_cast<double>(horizon_);
    switch (kind_) {
      case ShiftKind::lin: return static_cast<double>(t) / T;
      case ShiftKind::sin:
        // Rectified so alpha stays in [0, 1].
        return std::min(1.0, std::abs(std::sin(std::numbers::pi * static_cast<double>(t) / std::sqrt(T))));
      case ShiftKind::squ: return static_cast<double>((t / square_block()) % 2);
      case ShiftKind::ber: return static_cast<double>(ber_states_[t]);
    }
    return 0.0;
  }

  LabelDistribution at(std::size_t t) const;

 private:
  ShiftKind kind_;
  std::size_t horizon_;
  LabelDistribution p0_;
  LabelDistribution pT_;
  std::uint64_t seed_;
  std::vector<std::uint8_t> ber_states_;
};

inline LabelDistribution interpolate(const LabelDistribution& p0, const LabelDistribution& pT,
                                     double a) {
  if (p0.size() != pT.size()) throw StructuralError("interpolate: length mismatch");
  if (!(a >= 0.0 && a <= 1.0)) throw StructuralError("interpolate: alpha outside [0, 1]");
  Vector out(p0.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = (1.0 - a) * p0[c] + a * pT[c];
  return LabelDistribution(std::move(out));
}

inline LabelDistribution ShiftSchedule::at(std::size_t t) const {
  return interpolate(p0_, pT_, alpha(t));
}

// Uniform start, Dirac target on a seeded class.
inline std::pair<LabelDistribution, LabelDistribution> default_endpoints(std::size_t num_classes,
                                                                         std::uint64_t seed) {
  if (num_classes < 2) throw StructuralError("default_endpoints: need at least two classes");
  Rng rng(mix_seed(seed, "target-class"));
  std::uniform_int_distribution<std::size_t> pick(0, num_classes - 1);
  return {LabelDistribution::uniform(num_classes), LabelDistribution::one_hot(num_classes, pick(rng))};
}

struct StreamBatch {
  Matrix inputs;
  std::vector<ClassId> true_labels;  // for scoring only; adaptation never reads these
  std::size_t timestep = 0;

  std::size_t size() const noexcept { return true_labels.size(); }
};

// Labels i.i.d. from p, inputs drawn with replacement from the pool's rows of
// that class. The generator is seeded from (seed, t) so any timestep can be
// regenerated on its own.
inline StreamBatch sample_batch(const LabeledPool& pool, const LabelDistribution& p,
                                std::size_t batch_size, std::uint64_t seed, std::size_t t) {
  if (batch_size < 1) throw StructuralError("sample_batch: batch size must be >= 1");
  if (p.size() != pool.num_classes()) throw StructuralError("sample_batch: class count mismatch");
  Rng rng(mix_seed(mix_seed(seed, "batch"), t));

  Vector cdf(p.size());
  std::partial_sum(p.probs().begin(), p.probs().end(), cdf.begin());
  ClassId last_positive = 0;
  for (ClassId c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) last_positive = c;
  }

  StreamBatch batch{Matrix(batch_size, pool.dim()), std::vector<ClassId>(batch_size), t};
  for (std::size_t i = 0; i < batch_size; ++i) {
    const double u = uniform01(rng) * cdf.back();
    ClassId c = 0;
    while (c < last_positive && (cdf[c] <= u || p[c] == 0.0)) ++c;
    const auto& rows = pool.rows_of(c);
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    std::ranges::copy(pool.input(rows[pick(rng)]), batch.inputs.row(i).begin());
    batch.true_labels[i] = c;
  }
  return batch;
}

// A batch of rows drawn uniformly (with replacement) from a pool, ignoring class.
inline StreamBatch sample_rows(const LabeledPool& pool, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw StructuralError("sample_rows: batch size must be >= 1");
  Rng rng(mix_seed(seed, "rows"));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  StreamBatch batch{Matrix(batch_size, pool.dim()), std::vector<ClassId>(batch_size), 0};
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t r = pick(rng);
    std::ranges::copy(pool.input(r), batch.inputs.row(i).begin());
    batch.true_labels[i] = pool.label(r);
  }
  return batch;
}

// A fully materialized stream for t = 1..T, plus the warm-up batch drawn from
// the pretraining holdout that seeds the prediction buffer.
struct Stream {
  ShiftKind kind = ShiftKind::lin;
  StreamBatch warmup;
  std::vector<StreamBatch> batches;              // batches[i].timestep == i + 1
  std::vector<LabelDistribution> distributions;  // P_t for t = 0..T
};

inline Stream make_stream(const LabeledPool& source, const LabeledPool& holdout,
                          const ShiftSchedule& schedule, std::size_t batch_size, std::uint64_t seed) {
  Stream s;
  s.kind = schedule.kind();
  s.warmup = sample_rows(holdout, batch_size, mix_seed(seed, "warmup"));
  s.distributions.reserve(schedule.horizon() + 1);
  for (std::size_t t = 0; t <= schedule.horizon(); ++t) s.distributions.push_back(schedule.at(t));
  s.batches.reserve(schedule.horizon());
  for (std::size_t t = 1; t <= schedule.horizon(); ++t) {
    s.batches.push_back(sample_batch(source, s.distributions[t], batch_size, seed, t));
  }
  return s;
}

}  // namespace asap
