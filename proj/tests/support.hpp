#pragma once

// Test-only oracles and generators. Nothing here calls into the library code
// it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "asap.hpp"

namespace testing_support {

using Gen = std::mt19937_64;

inline double uniform(Gen& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }

inline std::size_t pick(Gen& g, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

inline std::vector<double> random_vector(Gen& g, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(g, lo, hi);
  return v;
}

// Uniform on the simplex via normalized exponentials.
inline std::vector<double> random_simplex(Gen& g, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) s += x = e(g);
  for (double& x : v) x /= s;
  return v;
}

inline asap::ModelParams random_params(Gen& g, std::size_t classes, std::size_t dim, double scale = 1.0) {
  asap::ModelParams p(classes, dim);
  for (double& w : p.weights.entries()) w = uniform(g, -scale, scale);
  for (double& b : p.biases) b = uniform(g, -scale, scale);
  return p;
}

inline asap::Matrix random_matrix(Gen& g, std::size_t rows, std::size_t cols, double lo, double hi) {
  return asap::Matrix(rows, cols, random_vector(g, rows * cols, lo, hi));
}

// A pool with `per_class` rows of each class, features uniform in [-2, 2] plus
// a class-dependent offset on coordinate (c mod dim).
inline asap::LabeledPool random_pool(Gen& g, std::size_t classes, std::size_t dim, std::size_t per_class) {
  asap::Matrix x(classes * per_class, dim);
  std::vector<asap::ClassId> y(classes * per_class);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = i % classes;
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = uniform(g, -2.0, 2.0);
    x(i, y[i] % dim) += 3.0;
  }
  return asap::LabeledPool(std::move(x), std::move(y), classes);
}

// Euclidean projection onto the simplex by exhaustive search over supports:
// for each non-empty support S the candidate is max(v - tau_S, 0) with
// tau_S = (sum_S v - 1) / |S|; the feasible candidate closest to v wins.
inline std::vector<double> brute_force_projection(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> best;
  double best_dist = INFINITY;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        s += v[i];
        ++k;
      }
    }
    const double tau = (s - 1.0) / static_cast<double>(k);
    std::vector<double> x(n, 0.0);
    bool feasible = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        x[i] = v[i] - tau;
        feasible = feasible && x[i] >= -1e-15;
      } else {
        feasible = feasible && v[i] - tau <= 1e-12;
      }
    }
    if (!feasible) continue;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += (x[i] - v[i]) * (x[i] - v[i]);
    if (d < best_dist) {
      best_dist = d;
      best = x;
    }
  }
  for (double& x : best) x = std::max(x, 0.0);
  return best;
}

// Cross-entropy of one row computed directly: -log(exp(z_y) / sum exp(z)).
inline double naive_ce(const asap::ModelParams& p, std::span<const double> x, asap::ClassId y) {
  std::vector<long double> z(p.classes());
  for (std::size_t c = 0; c < z.size(); ++c) {
    long double s = p.biases[c];
    for (std::size_t j = 0; j < x.size(); ++j) s += static_cast<long double>(p.weights(c, j)) * x[j];
    z[c] = s;
  }
  long double total = 0.0L;
  for (auto v : z) total += std::exp(v);
  return static_cast<double>(-std::log(std::exp(z[y]) / total));
}

// Central finite differences over every parameter of `p`.
inline asap::ModelParams finite_difference(const asap::ModelParams& p,
                                           const std::function<double(const asap::ModelParams&)>& f,
                                           double h = 1e-5) {
  asap::ModelParams g(p.classes(), p.dim());
  asap::ModelParams q = p;
  for (std::size_t c = 0; c < p.classes(); ++c) {
    for (std::size_t j = 0; j < p.dim(); ++j) {
      const double orig = q.weights(c, j);
      q.weights(c, j) = orig + h;
      const double up = f(q);
      q.weights(c, j) = orig - h;
      const double down = f(q);
      q.weights(c, j) = orig;
      g.weights(c, j) = (up - down) / (2.0 * h);
    }
    const double orig = q.biases[c];
    q.biases[c] = orig + h;
    const double up = f(q);
    q.biases[c] = orig - h;
    const double down = f(q);
    q.biases[c] = orig;
    g.biases[c] = (up - down) / (2.0 * h);
  }
  return g;
}

// Elementwise agreement: relative `rel`, or absolute 1e-8 where both are tiny.
inline bool gradients_agree(const asap::ModelParams& analytic, const asap::ModelParams& numeric, double rel,
                            std::string* where = nullptr) {
  auto close = [&](double a, double n) {
    const double scale = std::max(std::abs(a), std::abs(n));
    if (scale < 1e-8) return std::abs(a - n) <= 1e-8;
    return std::abs(a - n) <= rel * scale;
  };
  const auto a = analytic.weights.entries();
  const auto n = numeric.weights.entries();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!close(a[i], n[i])) {
      if (where) *where = "weight " + std::to_string(i) + ": " + std::to_string(a[i]) + " vs " + std::to_string(n[i]);
      return false;
    }
  }
  for (std::size_t c = 0; c < analytic.biases.size(); ++c) {
    if (!close(analytic.biases[c], numeric.biases[c])) {
      if (where) *where = "bias " + std::to_string(c);
      return false;
    }
  }
  return true;
}

// Ranks with ties replaced by their average rank (1-based).
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Fraction of rows whose argmax matches the label, recomputed from logits.
inline double naive_accuracy(const asap::ModelParams& p, const asap::Matrix& x, const std::vector<asap::ClassId>& y) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::size_t best = 0;
    double best_z = -INFINITY;
    for (std::size_t c = 0; c < p.classes(); ++c) {
      double z = p.biases[c];
      for (std::size_t j = 0; j < p.dim(); ++j) z += p.weights(c, j) * x(i, j);
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    hits += best == y[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

// A small end-to-end setup: pool, split, pretrained model, stream.
struct World {
  asap::LabeledPool train;
  asap::LabeledPool holdout;
  asap::ModelParams params;
  asap::Stream stream;
};

inline World small_world(std::uint64_t seed, asap::ShiftKind kind = asap::ShiftKind::squ, std::size_t horizon = 40,
                         std::size_t batch = 128, std::size_t classes = 4, std::size_t dim = 6) {
  asap::DatasetSpec spec;
  spec.num_classes = classes;
  spec.dim = dim;
  spec.per_class = 60;
  spec.separation = 3.0;
  spec.seed = seed;
  const auto pool = asap::make_gaussian_pool(spec);
  auto split = asap::split_pool(pool, 0.3, seed);
  asap::PretrainConfig pc;
  pc.epochs = 10;
  auto pre = asap::pretrain(split.train, pc, seed);
  const auto [p0, pT] = asap::default_endpoints(classes, seed);
  const asap::ShiftSchedule schedule(kind, horizon, p0, pT, seed);
  auto stream = asap::make_stream(split.train, split.holdout, schedule, batch, seed);
  return {std::move(split.train), std::move(split.holdout), std::move(pre.params), std::move(stream)};
}

}  // namespace testing_support
