#pragma once

// Label-free risk estimation: confusion matrix on the pretraining holdout,
// black-box shift estimation of the current label distribution, and the
// class-weighted holdout risk used as the online objective.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asap/data.hpp"
#include "asap/error.hpp"
#include "asap/linalg.hpp"
#include "asap/model.hpp"
#include "asap/shift.hpp"

namespace asap {

// joint(i, j) = P(predicted = i, true = j) on the holdout.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Matrix joint) : joint_(std::move(joint)) {
    if (!joint_.square() || joint_.rows() == 0) throw StructuralError("confusion matrix: must be square");
    double total = 0.0;
    for (double v : joint_.entries()) {
      if (!(v >= 0.0)) throw StructuralError("confusion matrix: negative entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw StructuralError("confusion matrix: entries must sum to 1");
  }

  std::size_t classes() const noexcept { return joint_.rows(); }
  const Matrix& joint() const noexcept { return joint_; }

  // Column sums: the holdout label distribution P(true = j).
  Vector label_prior() const {
    Vector prior(classes(), 0.0);
    for (std::size_t i = 0; i < classes(); ++i)
      for (std::size_t j = 0; j < classes(); ++j) prior[j] += joint_(i, j);
    return prior;
  }

 private:
  Matrix joint_;
};

inline ConfusionMatrix estimate_confusion(const ModelParams& params, const LabeledPool& holdout) {
  const std::size_t classes = params.classes();
  if (holdout.num_classes() != classes) throw StructuralError("estimate_confusion: class count mismatch");
  // LabeledPool already guarantees every class is present.
  const Matrix probs = predict_proba(params, holdout.inputs());
  Matrix joint(classes, classes);
  const double unit = 1.0 / static_cast<double>(holdout.size());
  for (std::size_t i = 0; i < holdout.size(); ++i) joint(argmax(probs.row(i)), holdout.label(i)) += unit;
  return ConfusionMatrix(std::move(joint));
}

// Normalized histogram of hard (argmax) predictions.
inline LabelDistribution hard_label_histogram(const Matrix& probs) {
  if (probs.rows() == 0) throw StructuralError("pseudo-label distribution: empty batch");
  Vector hist(probs.cols(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) hist[argmax(probs.row(i))] += 1.0;
  for (double& h : hist) h /= static_cast<double>(probs.rows());
  return LabelDistribution(std::move(hist));
}

inline LabelDistribution pseudo_label_distribution(const ModelParams& params, const StreamBatch& batch) {
  if (batch.size() == 0) throw StructuralError("pseudo-label distribution: empty batch");
  return hard_label_histogram(predict_proba(params, batch.inputs));
}

namespace detail {

// Inverting the joint matrix yields importance weights P_t(y) / P_0(y); scaling
// row j by the holdout prior P_0(y = j) turns them into label probabilities.
// The product is the inverse of the conditional confusion matrix P(pred | true).
inline Matrix bbse_operator(const ConfusionMatrix& confusion, double lambda) {
  Matrix op = invert_ridge(confusion.joint(), lambda);
  const Vector prior = confusion.label_prior();
  for (std::size_t j = 0; j < op.rows(); ++j)
    for (std::size_t i = 0; i < op.cols(); ++i) op(j, i) *= prior[j];
  return op;
}

}  // namespace detail

// project_simplex(diag(P_0(y)) (M + lambda I)^{-1} pseudo).
inline LabelDistribution bbse(const ConfusionMatrix& confusion, const LabelDistribution& pseudo,
                              double lambda) {
  if (confusion.classes() != pseudo.size()) throw StructuralError("bbse: dimension mismatch");
  const Vector raw = multiply(detail::bbse_operator(confusion, lambda), pseudo.probs());
  return LabelDistribution(project_simplex(raw));
}

inline LabelDistribution bbse(const ConfusionMatrix& confusion, const LabelDistribution& pseudo) {
  return bbse(confusion, pseudo, default_ridge(confusion.joint()));
}

// Precomputed inverse so online loops do not re-invert a frozen matrix.
class ShiftEstimator {
 public:
  explicit ShiftEstimator(const ConfusionMatrix& confusion)
      : ShiftEstimator(confusion, default_ridge(confusion.joint())) {}
  ShiftEstimator(const ConfusionMatrix& confusion, double lambda)
      : inverse_(detail::bbse_operator(confusion, lambda)) {}

  LabelDistribution operator()(const LabelDistribution& pseudo) const {
    if (pseudo.size() != inverse_.rows()) throw StructuralError("bbse: dimension mismatch");
    return LabelDistribution(project_simplex(multiply(inverse_, pseudo.probs())));
  }

 private:
  Matrix inverse_;
};

// Mean cross-entropy on holdout rows of class c, at the current parameters.
inline double class_wise_risk(const ModelParams& params, const LabeledPool& holdout, ClassId c) {
  if (c >= holdout.num_classes()) {
    throw InsufficientDataError("class_wise_risk: class " + std::to_string(c) + " absent from holdout");
  }
  const auto& rows = holdout.rows_of(c);
  double total = 0.0;
  for (std::size_t r : rows) {
    const Vector z = logits(params, holdout.input(r));
    double peak = z[0];
    for (double v : z) peak = std::max(peak, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - peak);
    total += peak + std::log(s) - z[c];
  }
  return total / static_cast<double>(rows.size());
}

// Per-row weights w_{y_i} / n_{y_i}: with these, the weighted holdout loss
// equals sum_c w_c * class_wise_risk(c).
inline std::vector<double> class_balanced_weights(const LabeledPool& holdout, const LabelDistribution& w) {
  if (w.size() != holdout.num_classes()) throw StructuralError("risk weights: class count mismatch");
  std::vector<double> per_row(holdout.size());
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const ClassId y = holdout.label(i);
    per_row[i] = w[y] / static_cast<double>(holdout.rows_of(y).size());
  }
  return per_row;
}

// R(theta) = sum_c w_c R_c(theta) and its gradient.
inline LossGrad unsupervised_risk_grad(const ModelParams& params, const LabeledPool& holdout,
                                       const LabelDistribution& w) {
  const auto per_row = class_balanced_weights(holdout, w);
  return loss_and_grad(params, holdout.inputs(), holdout.labels(), per_row);
}

}  // namespace asap
