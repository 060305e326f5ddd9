// Command-line front end: benchmark, trace, finance, gen-data, selftest.

#include "mgdm/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using mgdm::ExperimentConfig;
using mgdm::Index;

struct FullScaleOptions {
  CLI::Option* dim = nullptr;
  CLI::Option* batch = nullptr;
  CLI::Option* replicas = nullptr;
  CLI::Option* target_paths = nullptr;
  CLI::Option* max_steps = nullptr;
};

FullScaleOptions add_config_options(CLI::App& app, ExperimentConfig& c) {
  FullScaleOptions fs;
  app.add_option("--target", c.target, "target process: ar or cir")->capture_default_str();
  app.add_option("--ar-phi", c.ar_phi, "AR coefficients")->delimiter(',')->capture_default_str();
  app.add_option("--ar-sigma", c.ar_sigma, "AR innovation std (0: unit marginal variance)")->capture_default_str();
  app.add_option("--cir-kappa", c.cir_kappa, "CIR mean reversion")->capture_default_str();
  app.add_option("--cir-theta", c.cir_theta, "CIR long-run mean")->capture_default_str();
  app.add_option("--cir-sigma", c.cir_sigma, "CIR volatility")->capture_default_str();
  app.add_option("--cir-dt", c.cir_dt, "CIR observation step")->capture_default_str();
  app.add_option("--energy", c.energy, "energy for synthetic runs: acf or squared-acf")->capture_default_str();
  app.add_option("--lags", c.lags, "acf lags, in component order")->delimiter(',')->capture_default_str();
  app.add_option("--max-lag", c.max_lag, "squared-acf: largest lag of x^2")->capture_default_str();
  app.add_flag("--center-signal", c.center_signal, "center the signal moments of squared-acf");
  app.add_flag("--center-squared", c.center_squared, "center the x^2 moments of squared-acf");
  fs.dim = app.add_option("--dim", c.dim, "path length d")->capture_default_str();
  fs.batch = app.add_option("--batch-size", c.batch_size, "particles per batch N")->capture_default_str();
  fs.replicas = app.add_option("--replicas", c.replicas, "Monte Carlo replicas M")->capture_default_str();
  fs.target_paths = app.add_option("--target-paths", c.target_paths, "paths used to estimate alpha")->capture_default_str();
  app.add_option("--mode", c.mode, "mgdm, mf-mgdm or both")->capture_default_str();
  app.add_option("--step-size", c.step_size, "fixed gamma (0: calibrate)")->capture_default_str();
  app.add_option("--step-scale", c.step_scale, "gamma = scale / mean ||J J^T||")->capture_default_str();
  fs.max_steps = app.add_option("--max-steps", c.max_steps, "step cap T")->capture_default_str();
  app.add_option("--tolerance", c.tolerance, "energy tolerance (inf: run all T steps)")->capture_default_str();
  app.add_flag("--projected", c.projected, "projected (nonnegative) descent");
  app.add_option("--init", c.init, "auto, gaussian, exponential or truncated-gaussian")->capture_default_str();
  app.add_option("--init-variance", c.init_variance, "gaussian init variance (0: from alpha)")->capture_default_str();
  app.add_option("--logdet-stride", c.logdet_stride, "log-det every k steps (0: automatic)")->capture_default_str();
  app.add_flag("!--no-bound", c.track_bound, "skip the entropy-rate bound");
  app.add_flag("!--no-control-variate", c.control_variate, "plain Monte Carlo E[log p]");
  app.add_option("--sweep-sizes", c.sweep_sizes, "batch sizes for trace --sweep")->delimiter(',')->capture_default_str();
  app.add_option("--data", c.data_file, "price CSV for finance")->capture_default_str();
  app.add_option("--transform", c.transform, "log-returns or differences")->capture_default_str();
  app.add_option("--finance-energy", c.finance_energy, "energy for finance")->capture_default_str();
  app.add_option("--finance-samples", c.finance_samples, "generated paths per mode")->capture_default_str();
  app.add_option("--finance-steps", c.finance_steps, "step cap for finance")->capture_default_str();
  app.add_option("--finance-step-scale", c.finance_step_scale, "step scale for finance")->capture_default_str();
  app.add_option("--epsilon-rel", c.epsilon_rel, "finance tolerance relative to ||alpha||")->capture_default_str();
  app.add_option("--stat-max-lag", c.stat_max_lag, "largest lag in the statistics report")->capture_default_str();
  app.add_option("--seed", c.seed, "root seed")->capture_default_str();
  app.add_option("--threads", c.threads, "worker threads (0: all cores)")->capture_default_str();
  app.add_option("--out", c.out_dir, "output directory")->capture_default_str();
  app.add_flag("--full-scale", c.full_scale, "d=1024, N=M=128, 10000 target paths, 300 steps");
  return fs;
}

void apply_full_scale(ExperimentConfig& c, const FullScaleOptions& fs) {
  if (!c.full_scale) return;
  ExperimentConfig full = c;
  full.apply_full_scale();
  // Explicit sizes on the command line or in the config file win.
  if (fs.dim->count() == 0) c.dim = full.dim;
  if (fs.batch->count() == 0) c.batch_size = full.batch_size;
  if (fs.replicas->count() == 0) c.replicas = full.replicas;
  if (fs.target_paths->count() == 0) c.target_paths = full.target_paths;
  if (fs.max_steps->count() == 0) c.max_steps = full.max_steps;
}

void print_benchmark(const mgdm::BenchmarkSummary& summary) {
  std::printf("%-8s %6s %12s %10s %8s %12s\n", "mode", "N", "min_kl", "se", "argmin", "final_kl");
  for (const auto& r : summary.rows) {
    std::printf("%-8s %6lld %12.5f %10.5f %8lld %12.5f%s\n", mgdm::to_string(r.mode).c_str(),
                static_cast<long long>(r.batch_size), r.min_kl, r.se_at_min, static_cast<long long>(r.argmin_step),
                r.final_kl, r.diverged ? "  (diverged, partial)" : "");
  }
}

void print_traces(const mgdm::ExperimentResult& result) {
  for (const auto& t : result.traces) {
    const auto s = mgdm::summarize(t);
    std::printf("%s N=%lld gamma=%.6g steps=%zu min_kl=%.5f@%lld final_kl=%.5f%s\n", mgdm::to_string(t.mode).c_str(),
                static_cast<long long>(t.batch_size), t.step_size, t.rows.size(), s.min_kl,
                static_cast<long long>(s.argmin_step), s.final_kl, t.diverged ? " (diverged)" : "");
  }
}

void print_finance(const mgdm::FinanceReport& report) {
  std::printf("%s (%s): slice length %lld, tolerance %.6g\n", report.instrument.c_str(),
              mgdm::to_string(report.transform).c_str(), static_cast<long long>(report.slice_length),
              report.tolerance);
  for (const auto& m : report.modes) {
    std::printf("%-8s samples=%lld steps=%lld max ||mean energy - alpha||=%.6g %s  entropy/sample=%.4f\n",
                mgdm::to_string(m.mode).c_str(), static_cast<long long>(m.samples.rows()),
                static_cast<long long>(m.steps_taken), m.max_distance, m.within_tolerance ? "ok" : "NOT CONVERGED",
                m.entropy_per_sample.mean);
  }
}

// Quick internal consistency checks on small problems.
int selftest(std::uint64_t seed) {
  int failures = 0;
  auto report = [&](const char* name, bool ok, double value) {
    std::printf("%-44s %s (%.3g)\n", name, ok ? "PASS" : "FAIL", value);
    failures += ok ? 0 : 1;
  };
  mgdm::Rng rng = mgdm::make_rng(seed, 0x5e1f);
  const auto spec = std::make_shared<mgdm::AcfEnergy>(8);
  const mgdm::RowMatrix batch = mgdm::init_sample_batch(mgdm::InitDistribution::gaussian(1.0), 3, 8, rng);
  const mgdm::Vector alpha = (mgdm::Vector(2) << 0.1, 1.0).finished();
  const double fast = mgdm::step_logdet_mf_fast(batch, alpha, *spec, 0.3).log_abs;
  const double dense = mgdm::step_logdet_mf_dense(batch, alpha, *spec, 0.3).log_abs;
  report("mean-field log-det: lemma vs dense", std::abs(fast - dense) <= 1e-8 * std::max(1.0, std::abs(dense)),
         std::abs(fast - dense));
  const mgdm::FiniteDiffEnergyAdapter fd(spec);
  const mgdm::Vector x = batch.row(0).transpose();
  const double jerr = (spec->jacobian(x) - fd.jacobian(x)).norm() / spec->jacobian(x).norm();
  report("acf Jacobian vs finite differences", jerr <= 1e-5, jerr);
  const auto sq = std::make_shared<mgdm::SquaredAcfEnergy>(16, mgdm::SquaredAcfOptions{4, false, false});
  const mgdm::FiniteDiffEnergyAdapter fd_sq(sq);
  const mgdm::Vector y = mgdm::init_sample(mgdm::InitDistribution::gaussian(1.0), 16, rng);
  const double serr = (sq->jacobian(y) - fd_sq.jacobian(y)).norm() / sq->jacobian(y).norm();
  report("squared-acf Jacobian vs finite differences", serr <= 1e-5, serr);
  const mgdm::Vector single = mgdm::gd_step(x, alpha, *spec, 0.3);
  const mgdm::Vector coupled = mgdm::mf_step(batch.topRows(1), alpha, *spec, 0.3).row(0).transpose();
  report("mean-field step at N=1 equals single step", (single - coupled).norm() <= 1e-12, (single - coupled).norm());
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microcanonical gradient-descent sampling with exact likelihood tracking"};
  app.set_config("--config", "", "key = value configuration file");
  app.require_subcommand(1);
  app.fallthrough();
  ExperimentConfig config;
  const FullScaleOptions fs = add_config_options(app, config);

  auto* benchmark = app.add_subcommand("benchmark", "minimum reverse KL per mode on a synthetic target");
  auto* trace = app.add_subcommand("trace", "per-step metrics for each mode");
  bool sweep = false;
  trace->add_flag("--sweep", sweep, "mean-field traces over --sweep-sizes");
  auto* finance = app.add_subcommand("finance", "statistics report for a price series");
  auto* gen = app.add_subcommand("gen-data", "write a synthetic date,value price CSV");
  mgdm::SyntheticPriceOptions gen_options;
  std::string gen_output = "-";
  gen->add_option("--output", gen_output, "file to write (- for stdout)")->capture_default_str();
  gen->add_option("--model", gen_options.model, "sv or gbm")->capture_default_str();
  gen->add_option("--rows", gen_options.rows, "number of prices")->capture_default_str();
  gen->add_option("--start-price", gen_options.start_price)->capture_default_str();
  gen->add_option("--drift", gen_options.drift, "daily log drift")->capture_default_str();
  gen->add_option("--volatility", gen_options.volatility, "daily return volatility")->capture_default_str();
  gen->add_option("--vol-persistence", gen_options.vol_persistence)->capture_default_str();
  gen->add_option("--vol-of-vol", gen_options.vol_of_vol)->capture_default_str();
  gen->add_option("--start-date", gen_options.start_date)->capture_default_str();
  auto* self = app.add_subcommand("selftest", "fast internal consistency checks");

  CLI11_PARSE(app, argc, argv);
  apply_full_scale(config, fs);

  try {
    if (*benchmark) {
      const auto summary = mgdm::run_synthetic_benchmark(config);
      mgdm::export_benchmark(config.out_dir, summary);
      print_benchmark(summary);
    } else if (*trace) {
      const auto result = sweep ? mgdm::run_batch_size_sweep(config) : mgdm::run_kl_trace(config);
      mgdm::export_result(config.out_dir, result, sweep ? "sweep" : "trace");
      print_traces(result);
    } else if (*finance) {
      const auto report = mgdm::run_financial_pipeline(config);
      mgdm::export_finance(config.out_dir, report);
      print_finance(report);
    } else if (*gen) {
      gen_options.seed = config.seed;
      if (gen_output == "-") {
        mgdm::write_synthetic_prices(std::cout, gen_options);
      } else {
        std::ostringstream text;
        mgdm::write_synthetic_prices(text, gen_options);
        std::ofstream out(gen_output, std::ios::binary);
        if (!out) throw mgdm::Error("cannot open '" + gen_output + "' for writing");
        out << text.str();
      }
    } else if (*self) {
      return selftest(config.seed);
    }
  } catch (const mgdm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
