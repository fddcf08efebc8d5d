// asap_lab: command-line front end for the label-shift adaptation laboratory.
//
//   asap_lab pretrain --config cfg.json
//   asap_lab run      --config cfg.json [--parallel N] [--timing]
//   asap_lab sweep    --config cfg.json --vary eta_max --values 1e-5,1e-4,1e-3
//   asap_lab trace    --config cfg.json --shift squ --seed 1
//   asap_lab report   --in asap_out
//
// Exit codes: 0 success, 1 configuration error, 2 failed cells or runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asap.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw asap::ConfigError("--values: cannot parse '" + item + "'");
    }
  }
  return out;
}

int cmd_pretrain(const asap::RunConfig& cfg) {
  const asap::LabeledPool pool = asap::make_pool(cfg.dataset);
  const fs::path dir = cfg.output_dir / "checkpoints";
  fs::create_directories(dir);
  for (std::uint64_t seed : cfg.seeds) {
    const asap::SeedContext ctx = asap::prepare_seed(pool, cfg, seed);
    const fs::path path = dir / ("seed_" + std::to_string(seed) + ".json");
    asap::save_checkpoint(path, {ctx.params, seed});
    std::printf("seed %llu: train acc %.4f, holdout acc %.4f -> %s\n", static_cast<unsigned long long>(seed),
                ctx.train_accuracy, ctx.holdout_accuracy, path.string().c_str());
  }
  return kExitOk;
}

int cmd_run(const asap::RunConfig& cfg, std::size_t parallel, bool timing) {
  asap::RunOptions opts;
  if (parallel > 0) opts.parallel = parallel;
  opts.timing = timing;
  const asap::MatrixResult res = asap::run_matrix(cfg, opts);
  asap::write_outputs(cfg, res, cfg.output_dir, timing);
  std::cout << asap::render_summary(res.rows);
  std::size_t failed = 0;
  for (const auto& c : res.cells) {
    if (c.ok) continue;
    ++failed;
    std::cerr << "cell failed: " << to_string(c.shift) << '/' << c.method << '/' << c.seed << ": " << c.error << '\n';
  }
  std::cerr << "wrote " << cfg.output_dir.string() << " (" << res.cells.size() << " cells, " << failed << " failed)\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_sweep(const asap::RunConfig& cfg, const std::string& vary, const std::string& values, std::size_t parallel) {
  const asap::SweepBound bound = asap::parse_sweep_bound(vary);
  asap::RunOptions opts;
  if (parallel > 0) opts.parallel = parallel;
  const auto rows = asap::sensitivity_sweep(cfg, bound, parse_values(values), opts);
  const std::string csv = asap::sweep_csv(rows);
  fs::create_directories(cfg.output_dir);
  asap::write_text(cfg.output_dir / ("sweep_" + vary + ".csv"), csv);
  std::cout << csv;
  for (const auto& r : rows) {
    if (r.failures > 0) return kExitRuntime;
  }
  return kExitOk;
}

int cmd_trace(const asap::RunConfig& cfg, const std::string& shift, std::uint64_t seed, const std::string& out) {
  const asap::ShiftKind kind = asap::parse_shift_kind(shift);
  const std::string csv = asap::export_lr_trace(asap::run_asap_trace(cfg, kind, seed), kind);
  if (out.empty()) {
    std::cout << csv;
  } else {
    asap::write_text(out, csv);
  }
  return kExitOk;
}

int cmd_report(const fs::path& dir) {
  std::ifstream in(dir / "summary.csv");
  if (!in) throw asap::ConfigError("no summary.csv in " + dir.string());
  const auto rows = asap::parse_summary_csv(in);
  if (rows.empty()) throw asap::ConfigError("summary.csv has no rows");
  std::cout << asap::render_summary(rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shift-aware online label-shift adaptation lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t parallel = 0;
  bool timing = false;
  std::string vary, values, shift, trace_out;
  std::uint64_t seed = 1;
  std::string report_dir;

  auto* pretrain = app.add_subcommand("pretrain", "pretrain one model per seed and write checkpoints");
  pretrain->add_option("--config", config_path, "JSON config")->required();

  auto* run = app.add_subcommand("run", "run the shift x method x seed matrix");
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--parallel", parallel, "worker threads (default: hardware concurrency)");
  run->add_flag("--timing", timing, "record wall times; forces one worker");

  auto* sweep = app.add_subcommand("sweep", "learning-rate bound sensitivity sweep");
  sweep->add_option("--config", config_path, "JSON config")->required();
  sweep->add_option("--vary", vary, "eta_min or eta_max")->required();
  sweep->add_option("--values", values, "comma-separated ascending values")->required();
  sweep->add_option("--parallel", parallel, "worker threads");

  auto* trace = app.add_subcommand("trace", "export the per-step shift estimate and learning rate");
  trace->add_option("--config", config_path, "JSON config")->required();
  trace->add_option("--shift", shift, "lin, sin, squ or ber")->required();
  trace->add_option("--seed", seed, "seed")->required();
  trace->add_option("--out", trace_out, "write CSV here instead of stdout");

  auto* report = app.add_subcommand("report", "render summary.csv as markdown");
  report->add_option("--in", report_dir, "output directory of a run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*report) return cmd_report(report_dir);
    const asap::RunConfig cfg = asap::load_config(config_path);
    if (*pretrain) return cmd_pretrain(cfg);
    if (*run) return cmd_run(cfg, parallel, timing);
    if (*sweep) return cmd_sweep(cfg, vary, values, parallel);
    if (*trace) return cmd_trace(cfg, shift, seed, trace_out);
  } catch (const asap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
