#pragma once

// Shift-aware learning rate: the cosine distance between the mean softmax
// outputs of consecutive batches, mapped linearly onto [eta_min, eta_max].

#include <algorithm>
#include <string>
#include <utility>

#include "asap/error.hpp"
#include "asap/linalg.hpp"
#include "asap/shift.hpp"

namespace asap {

struct LrBounds {
  double eta_min = 5e-6;
  double eta_max = 1e-4;

  void validate() const {
    if (!(eta_min > 0.0) || !(eta_max >= eta_min)) {
      throw ConfigError("learning rate bounds need 0 < eta_min <= eta_max (got " +
                        std::to_string(eta_min) + ", " + std::to_string(eta_max) + ")");
    }
  }
};

// A shift magnitude in [0, 1].
class ShiftEstimate {
 public:
  constexpr ShiftEstimate() = default;
  explicit ShiftEstimate(double v) : value_(std::clamp(v, 0.0, 1.0)) {}

  constexpr double value() const noexcept { return value_; }

 private:
  double value_ = 0.0;
};

// Mean softmax output of the previous batch.
struct PredictionBuffer {
  LabelDistribution mean_probs;
};

inline ShiftEstimate shift_estimate(const PredictionBuffer& prev, const LabelDistribution& cur) {
  if (prev.mean_probs.size() != cur.size()) throw StructuralError("shift_estimate: length mismatch");
  // Clamped: rounding can push the distance a hair below 0.
  return ShiftEstimate(cosine_distance(prev.mean_probs.probs(), cur.probs()));
}

inline double learning_rate(ShiftEstimate e, const LrBounds& bounds) {
  return bounds.eta_min + e.value() * (bounds.eta_max - bounds.eta_min);
}

struct SchedulerStep {
  double eta;
  PredictionBuffer buffer;
  ShiftEstimate shift;
};

inline SchedulerStep step(const PredictionBuffer& state, const LabelDistribution& cur,
                          const LrBounds& bounds) {
  const ShiftEstimate e = shift_estimate(state, cur);
  return {learning_rate(e, bounds), PredictionBuffer{cur}, e};
}

}  // namespace asap
