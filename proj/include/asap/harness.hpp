#pragma once

// Experiment orchestration: the dataset x shift x method x seed matrix,
// learning-rate sensitivity sweeps, learning-rate traces, and the CSV /
// markdown outputs built from them.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "asap/config.hpp"
#include "asap/data.hpp"
#include "asap/error.hpp"
#include "asap/methods.hpp"
#include "asap/model.hpp"
#include "asap/shift.hpp"

namespace asap {

inline constexpr int kCsvSchemaVersion = 1;

namespace detail {

inline std::string printf_string(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list again;
  va_copy(again, args);
  const int n = std::vsnprintf(nullptr, 0, fmt, args);
  va_end(args);
  std::string out(static_cast<std::size_t>(std::max(n, 0)), '\0');
  std::vsnprintf(out.data(), out.size() + 1, fmt, again);
  va_end(again);
  return out;
}

// Shortest form that reads back to the same double.
inline std::string exact(double v) {
  for (int precision = 6; precision <= 17; ++precision) {
    std::string s = printf_string("%.*g", precision, v);
    if (std::strtod(s.c_str(), nullptr) == v) return s;
  }
  return printf_string("%.17g", v);
}

inline double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(xs.size() - 1));
}

// Runs job(i) for i in [0, n) on up to `workers` threads.
template <typename Job>
void parallel_for(std::size_t n, std::size_t workers, Job&& job) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
}

}  // namespace detail

// Everything that depends only on (dataset, seed): split, pretrained model,
// shift endpoints.
struct SeedContext {
  std::uint64_t seed = 0;
  LabeledPool train;
  LabeledPool holdout;
  ModelParams params;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  LabelDistribution p0;
  LabelDistribution pT;
};

inline SeedContext prepare_seed(const LabeledPool& pool, const RunConfig& cfg, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  auto split = split_pool(pool, cfg.holdout_fraction, seed);
  ctx.train = std::move(split.train);
  ctx.holdout = std::move(split.holdout);
  auto pre = pretrain(ctx.train, cfg.pretrain, seed);
  ctx.params = std::move(pre.params);
  ctx.train_accuracy = pre.train_accuracy;
  ctx.holdout_accuracy = accuracy(ctx.params, ctx.holdout);
  std::tie(ctx.p0, ctx.pT) = default_endpoints(pool.num_classes(), seed);
  return ctx;
}

// Stream batches are drawn from the training split, which shares P(x|y) with
// the pretraining data; the holdout is reserved for risk estimation.
inline Stream stream_for(const SeedContext& ctx, const RunConfig& cfg, ShiftKind kind) {
  const ShiftSchedule schedule(kind, cfg.horizon_T, ctx.p0, ctx.pT, mix_seed(ctx.seed, "shift-process"));
  return make_stream(ctx.train, ctx.holdout, schedule, cfg.batch_size, mix_seed(ctx.seed, to_string(kind)));
}

struct CellResult {
  ShiftKind shift = ShiftKind::lin;
  std::string method;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Trace trace;
  std::int64_t total_nanos = 0;  // whole runner call, for sanity checks on wall_nanos

  double mean_accuracy() const { return asap::mean_accuracy(trace); }
  double wall_seconds() const {
    std::int64_t s = 0;
    for (const auto& r : trace) s += r.wall_nanos;
    return static_cast<double>(s) * 1e-9;
  }
};

struct SummaryRow {
  std::string dataset;
  std::string shift;
  std::string method;
  double mean_acc = 0.0;  // percent
  double std_acc = 0.0;
  std::optional<double> mean_wall_sec;  // only in timing mode
  std::optional<double> std_wall_sec;
  std::size_t runs = 0;
  std::size_t failures = 0;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
};

struct MatrixResult {
  std::vector<CellResult> cells;  // ordered shift-major, then method, then seed
  std::vector<SummaryRow> rows;   // ordered shift-major, then method
  std::vector<SeedSummary> seeds;

  bool any_failure() const {
    return std::ranges::any_of(cells, [](const CellResult& c) { return !c.ok; });
  }

  const CellResult& cell(std::size_t shift, std::size_t method, std::size_t seed, std::size_t n_methods,
                         std::size_t n_seeds) const {
    return cells[(shift * n_methods + method) * n_seeds + seed];
  }
};

struct RunOptions {
  std::size_t parallel = std::max(1u, std::thread::hardware_concurrency());
  bool timing = false;  // forces parallel = 1 and reports wall times
};

inline std::vector<SummaryRow> summarize(const RunConfig& cfg, const std::vector<CellResult>& cells, bool timing) {
  std::vector<SummaryRow> rows;
  const std::size_t n_seeds = cfg.seeds.size();
  for (std::size_t s = 0; s < cfg.shifts.size(); ++s) {
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      SummaryRow row;
      row.dataset = cfg.dataset.name;
      row.shift = to_string(cfg.shifts[s]);
      row.method = cfg.methods[m].name();
      std::vector<double> accs;
      std::vector<double> walls;
      for (std::size_t k = 0; k < n_seeds; ++k) {
        const CellResult& c = cells[(s * cfg.methods.size() + m) * n_seeds + k];
        if (!c.ok) {
          ++row.failures;
          continue;
        }
        accs.push_back(100.0 * c.mean_accuracy());
        walls.push_back(c.wall_seconds());
      }
      row.runs = accs.size();
      row.mean_acc = detail::sample_mean(accs);
      row.std_acc = detail::sample_std(accs);
      if (timing && !walls.empty()) {
        row.mean_wall_sec = detail::sample_mean(walls);
        row.std_wall_sec = detail::sample_std(walls);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// Every (shift, method, seed) cell: pretrained model and stream are shared by
// all methods of a seed, so comparisons are paired. A failing cell is recorded
// and the rest of the matrix continues.
inline MatrixResult run_matrix(const RunConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const LabeledPool pool = make_pool(cfg.dataset);
  const std::size_t workers = opts.timing ? 1 : opts.parallel;
  const std::size_t n_shift = cfg.shifts.size();
  const std::size_t n_method = cfg.methods.size();
  const std::size_t n_seed = cfg.seeds.size();

  std::vector<std::optional<SeedContext>> contexts(n_seed);
  MatrixResult result;
  result.seeds.resize(n_seed);
  detail::parallel_for(n_seed, workers, [&](std::size_t k) {
    SeedSummary& summary = result.seeds[k];
    summary.seed = cfg.seeds[k];
    try {
      contexts[k] = prepare_seed(pool, cfg, cfg.seeds[k]);
      summary.ok = true;
      summary.train_accuracy = contexts[k]->train_accuracy;
      summary.holdout_accuracy = contexts[k]->holdout_accuracy;
    } catch (const std::exception& e) {
      summary.error = e.what();
    }
  });

  result.cells.resize(n_shift * n_method * n_seed);
  detail::parallel_for(n_shift * n_seed, workers, [&](std::size_t job) {
    const std::size_t s = job / n_seed;
    const std::size_t k = job % n_seed;
    std::optional<Stream> stream;
    std::string stream_error = result.seeds[k].error;
    if (contexts[k]) {
      try {
        stream = stream_for(*contexts[k], cfg, cfg.shifts[s]);
      } catch (const std::exception& e) {
        stream_error = e.what();
      }
    }
    for (std::size_t m = 0; m < n_method; ++m) {
      CellResult& cell = result.cells[(s * n_method + m) * n_seed + k];
      cell.shift = cfg.shifts[s];
      cell.method = cfg.methods[m].name();
      cell.seed = cfg.seeds[k];
      if (!stream) {
        cell.error = stream_error;
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        cell.trace = run_method(cfg.methods[m], contexts[k]->params, contexts[k]->holdout, *stream);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cell.total_nanos = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - start).count();
    }
  });
  result.rows = summarize(cfg, result.cells, opts.timing);
  return result;
}

// ---- learning-rate trace ----------------------------------------------------

inline std::string export_lr_trace(const Trace& records, ShiftKind kind) {
  std::string out = "t,shift_e,eta,shift_kind\n";
  for (const auto& r : records) {
    if (!r.shift_e || !r.eta) {
      throw StructuralError("export_lr_trace: record at t=" + std::to_string(r.t) + " has no shift estimate");
    }
    out += std::to_string(r.t) + ',' + detail::exact(*r.shift_e) + ',' + detail::exact(*r.eta) + ',' +
           to_string(kind) + '\n';
  }
  return out;
}

inline const MethodConfig& first_asap(const RunConfig& cfg) {
  for (const auto& m : cfg.methods) {
    if (m.kind == MethodKind::asap) return m;
  }
  throw ConfigError("config has no asap method");
}

// A single ASAP run on one (shift, seed), for learning-rate trace export.
inline Trace run_asap_trace(const RunConfig& cfg, ShiftKind kind, std::uint64_t seed) {
  cfg.validate();
  const LrBounds bounds = first_asap(cfg).bounds;
  const LabeledPool pool = make_pool(cfg.dataset);
  const SeedContext ctx = prepare_seed(pool, cfg, seed);
  return run_asap(ctx.params, ctx.holdout, stream_for(ctx, cfg, kind), bounds);
}

// ---- sensitivity sweep ------------------------------------------------------

enum class SweepBound { eta_min, eta_max };

inline SweepBound parse_sweep_bound(std::string_view s) {
  if (s == "eta_min") return SweepBound::eta_min;
  if (s == "eta_max") return SweepBound::eta_max;
  throw ConfigError("--vary must be eta_min or eta_max");
}

inline std::string to_string(SweepBound b) { return b == SweepBound::eta_min ? "eta_min" : "eta_max"; }

struct SweepRow {
  SweepBound vary = SweepBound::eta_max;
  double value = 0.0;
  bool accepted = false;
  double mean_acc = 0.0;  // percent; per seed averaged over shifts, then over seeds
  double std_acc = 0.0;
  std::size_t failures = 0;
};

// One matrix run per value with only the varied bound of the config's ASAP
// method changed. Values that would give eta_min > eta_max are rejected.
inline std::vector<SweepRow> sensitivity_sweep(const RunConfig& cfg, SweepBound vary,
                                               const std::vector<double>& values, const RunOptions& opts = {}) {
  if (values.empty()) throw ConfigError("sweep: no values");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw ConfigError("sweep: values must be positive");
    if (i > 0 && values[i] < values[i - 1]) throw ConfigError("sweep: values must be sorted ascending");
  }
  const MethodConfig base = first_asap(cfg);
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.vary = vary;
    row.value = v;
    RunConfig cell_cfg = cfg;
    MethodConfig m = base;
    (vary == SweepBound::eta_min ? m.bounds.eta_min : m.bounds.eta_max) = v;
    if (m.bounds.eta_min > m.bounds.eta_max) {
      rows.push_back(row);
      continue;
    }
    row.accepted = true;
    cell_cfg.methods = {m};
    const MatrixResult res = run_matrix(cell_cfg, opts);
    std::vector<double> per_seed;
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
      std::vector<double> accs;
      for (std::size_t s = 0; s < cfg.shifts.size(); ++s) {
        const CellResult& c = res.cell(s, 0, k, 1, cfg.seeds.size());
        if (c.ok) {
          accs.push_back(100.0 * c.mean_accuracy());
        } else {
          ++row.failures;
        }
      }
      if (!accs.empty()) per_seed.push_back(detail::sample_mean(accs));
    }
    row.mean_acc = detail::sample_mean(per_seed);
    row.std_acc = detail::sample_std(per_seed);
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "vary,value,status,mean_acc,std_acc,failures\n";
  for (const auto& r : rows) {
    out += to_string(r.vary) + ',' + detail::exact(r.value) + ',';
    if (r.accepted) {
      out += "ok," + detail::printf_string("%.2f,%.2f", r.mean_acc, r.std_acc);
    } else {
      out += "rejected,,";
    }
    out += ',' + std::to_string(r.failures) + '\n';
  }
  return out;
}

// ---- CSV / markdown ---------------------------------------------------------

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "dataset,shift,method,mean_acc,std_acc,mean_wall_sec,std_wall_sec,runs,failures\n";
  for (const auto& r : rows) {
    out += r.dataset + ',' + r.shift + ',' + r.method + ',' +
           detail::printf_string("%.2f,%.2f,", r.mean_acc, r.std_acc);
    out += r.mean_wall_sec ? detail::printf_string("%.6f", *r.mean_wall_sec) : "";
    out += ',';
    out += r.std_wall_sec ? detail::printf_string("%.6f", *r.std_wall_sec) : "";
    out += ',' + std::to_string(r.runs) + ',' + std::to_string(r.failures) + '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

inline std::vector<SummaryRow> parse_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("dataset,shift,method,mean_acc", 0) != 0) {
    throw ConfigError("summary.csv: missing or unexpected header");
  }
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 9) throw ConfigError("summary.csv: expected 9 columns in '" + line + "'");
    SummaryRow r;
    r.dataset = f[0];
    r.shift = f[1];
    r.method = f[2];
    r.mean_acc = std::stod(f[3]);
    r.std_acc = std::stod(f[4]);
    if (!f[5].empty()) r.mean_wall_sec = std::stod(f[5]);
    if (!f[6].empty()) r.std_wall_sec = std::stod(f[6]);
    r.runs = std::stoul(f[7]);
    r.failures = std::stoul(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// One table per dataset: shifts as rows, methods as columns, "mean±std"
// cells. The best mean in each row is bold; ties at the printed precision are
// all marked. Wall times, when present, get a second table per dataset.
inline std::string render_summary(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> datasets;
  for (const auto& r : rows) {
    if (std::ranges::find(datasets, r.dataset) == datasets.end()) datasets.push_back(r.dataset);
  }
  std::string out;
  for (const auto& ds : datasets) {
    std::vector<std::string> shifts;
    std::vector<std::string> methods;
    std::map<std::pair<std::string, std::string>, const SummaryRow*> at;
    bool has_wall = false;
    for (const auto& r : rows) {
      if (r.dataset != ds) continue;
      if (std::ranges::find(shifts, r.shift) == shifts.end()) shifts.push_back(r.shift);
      if (std::ranges::find(methods, r.method) == methods.end()) methods.push_back(r.method);
      at[{r.shift, r.method}] = &r;
      has_wall = has_wall || r.mean_wall_sec.has_value();
    }
    out += "### " + ds + ": average accuracy (%)\n\n| shift |";
    for (const auto& m : methods) out += ' ' + m + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) out += "---|";
    out += '\n';
    for (const auto& s : shifts) {
      std::string best;
      for (const auto& m : methods) {
        auto it = at.find({s, m});
        if (it == at.end() || it->second->runs == 0) continue;
        const std::string v = detail::printf_string("%.2f", it->second->mean_acc);
        if (best.empty() || std::stod(v) > std::stod(best)) best = v;
      }
      out += "| " + s + " |";
      for (const auto& m : methods) {
        auto it = at.find({s, m});
        if (it == at.end()) {
          out += "  |";
          continue;
        }
        const SummaryRow& r = *it->second;
        if (r.runs == 0) {
          out += " FAILED |";
          continue;
        }
        const std::string mean = detail::printf_string("%.2f", r.mean_acc);
        std::string cell = mean + "±" + detail::printf_string("%.2f", r.std_acc);
        if (r.failures > 0) cell += " (" + std::to_string(r.failures) + " failed)";
        if (mean == best) cell = "**" + cell + "**";
        out += ' ' + cell + " |";
      }
      out += '\n';
    }
    out += '\n';
    if (has_wall) {
      out += "### " + ds + ": wall time per run (sec), averaged over shifts\n\n|";
      for (const auto& m : methods) out += ' ' + m + " |";
      out += "\n|";
      for (std::size_t i = 0; i < methods.size(); ++i) out += "---|";
      out += "\n|";
      for (const auto& m : methods) {
        std::vector<double> walls;
        for (const auto& s : shifts) {
          auto it = at.find({s, m});
          if (it != at.end() && it->second->mean_wall_sec) walls.push_back(*it->second->mean_wall_sec);
        }
        out += walls.empty() ? std::string("  |") : ' ' + detail::printf_string("%.4f", detail::sample_mean(walls)) + " |";
      }
      out += "\n\n";
    }
  }
  return out;
}

inline std::string steps_csv(const Trace& trace, bool timing) {
  std::string out = "t,accuracy,eta,shift_e,wall_nanos,estimated_dist\n";
  for (const auto& r : trace) {
    out += std::to_string(r.t) + ',' + detail::exact(r.accuracy) + ',';
    if (r.eta) out += detail::exact(*r.eta);
    out += ',';
    if (r.shift_e) out += detail::exact(*r.shift_e);
    out += ',';
    if (timing) out += std::to_string(r.wall_nanos);
    out += ',';
    for (std::size_t c = 0; c < r.estimated_dist.size(); ++c) {
      if (c > 0) out += ';';
      out += detail::exact(r.estimated_dist[c]);
    }
    out += '\n';
  }
  return out;
}

inline std::string steps_filename(const std::string& dataset, ShiftKind shift, const std::string& method,
                                  std::uint64_t seed) {
  return dataset + '_' + to_string(shift) + '_' + method + '_' + std::to_string(seed) + ".csv";
}

inline nlohmann::json run_manifest(const RunConfig& cfg, const MatrixResult& res, bool timing) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : res.cells) {
    nlohmann::json j{{"shift", to_string(c.shift)}, {"method", c.method}, {"seed", c.seed},
                     {"status", c.ok ? "ok" : "failed"}};
    if (c.ok) {
      j["steps_file"] = "steps/" + steps_filename(cfg.dataset.name, c.shift, c.method, c.seed);
    } else {
      j["error"] = c.error;
    }
    cells.push_back(std::move(j));
  }
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : res.seeds) {
    nlohmann::json j{{"seed", s.seed}, {"status", s.ok ? "ok" : "failed"}};
    if (s.ok) {
      j["pretrain_train_accuracy"] = s.train_accuracy;
      j["pretrain_holdout_accuracy"] = s.holdout_accuracy;
    } else {
      j["error"] = s.error;
    }
    seeds.push_back(std::move(j));
  }
  return {{"schema_version", kCsvSchemaVersion},
          {"config_hash", config_hash(cfg)},
          {"config", to_json(cfg)},
          {"timing", timing},
          {"seeds", seeds},
          {"cells", cells},
          {"files", {{"summary_csv", "summary.csv"}, {"summary_md", "summary.md"}, {"steps_dir", "steps"}}}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// Rewrites every output file from scratch; nothing is appended.
inline void write_outputs(const RunConfig& cfg, const MatrixResult& res, const std::filesystem::path& dir,
                          bool timing) {
  std::filesystem::create_directories(dir / "steps");
  for (const auto& c : res.cells) {
    if (!c.ok) continue;
    write_text(dir / "steps" / steps_filename(cfg.dataset.name, c.shift, c.method, c.seed), steps_csv(c.trace, timing));
  }
  write_text(dir / "summary.csv", summary_csv(res.rows));
  write_text(dir / "summary.md", render_summary(res.rows));
  write_text(dir / "meta.json", run_manifest(cfg, res, timing).dump(2) + '\n');
}

}  // namespace asap
