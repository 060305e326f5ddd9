#pragma once

#include "mgdm/descent.hpp"
#include "mgdm/energy.hpp"
#include "mgdm/likelihood.hpp"
#include "mgdm/models.hpp"
#include "mgdm/types.hpp"

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mgdm {

/// Everything an experiment needs. Defaults are the desk-scale settings;
/// apply_full_scale() switches to the large protocol.
struct ExperimentConfig {
  // Target process.
  std::string target = "ar";          ///< ar | cir
  std::vector<double> ar_phi = {0.1};
  double ar_sigma = 0.0;              ///< innovation std; 0 picks unit marginal variance
  double cir_kappa = 0.5;
  double cir_theta = 1.0;
  double cir_sigma = 1.0;
  double cir_dt = 1.0;

  // Energy.
  std::string energy = "acf";          ///< acf | squared-acf
  std::vector<Index> lags = {1, 0};    ///< acf component order
  Index max_lag = 20;                  ///< squared-acf: lags 1..max_lag of x^2
  bool center_signal = false;
  bool center_squared = false;

  // Sizes.
  Index dim = 128;
  Index batch_size = 32;      ///< N
  Index replicas = 32;        ///< M
  Index target_paths = 512;   ///< paths used to estimate alpha

  // Descent.
  std::string mode = "both";  ///< mgdm | mf-mgdm | both
  double step_size = 0.0;     ///< 0: step_scale / mean ||J J^T||_2 on a pilot batch
  double step_scale = 0.02;
  Index max_steps = 150;
  double tolerance = std::numeric_limits<double>::infinity();
  bool projected = false;
  std::string init = "auto";  ///< auto | gaussian | exponential | truncated-gaussian
  double init_variance = 0.0; ///< gaussian variance; 0 uses the lag-0 (variance) component of alpha
  Index logdet_stride = 0;    ///< 0: every step for d <= 256, every 5th above
  bool track_bound = true;    ///< local beta / eta and the entropy-rate bound
  bool control_variate = true; ///< use the exact E_{q_0}[log p] when it has a closed form
  std::vector<Index> sweep_sizes = {8, 32, 128};

  // Financial pipeline.
  std::string data_file = "data/synthetic_prices.csv";
  std::string transform = "log-returns";  ///< log-returns | differences
  std::string finance_energy = "squared-acf";  ///< acf | squared-acf
  Index finance_samples = 64;   ///< generated paths per mode
  Index finance_steps = 6000;   ///< step cap for the pipeline
  double finance_step_scale = 0.2;
  double epsilon_rel = 1e-2;    ///< pipeline tolerance as a fraction of ||alpha||
  Index stat_max_lag = 20;

  // Run control.
  std::uint64_t seed = 0;
  Index threads = 0;  ///< 0: hardware concurrency
  std::string out_dir = "results";
  bool full_scale = false;

  /// d = 1024, N = M = 128, 10 000 target paths, 300 steps.
  void apply_full_scale();
  void validate() const;

  std::vector<DescentMode> modes() const;
  TargetModel make_target() const;
  EnergyPtr make_energy(Index dim) const;
  EnergyPtr make_energy(Index dim, const std::string& kind) const;
  /// Initial law for a run whose target energy is alpha. The Gaussian
  /// default variance is alpha's mean-square component when the energy has
  /// one, else the data's mean square.
  InitDistribution make_init(const EnergySpec& spec, const Vector& alpha, double data_mean, double data_std) const;
  Index worker_count() const;
};

/// One step of a Monte Carlo experiment, averaged over replicas. KL fields
/// are per sample; kl_joint is the batch-level (N-particle) value.
struct MetricsRow {
  Index step = 0;
  double loss = 0;
  double energy_distance = 0;
  double neg_entropy = 0;
  double se_neg_entropy = 0;
  double expected_log_likelihood = 0;
  double se_log_likelihood = 0;
  double kl = 0;
  double se_kl = 0;
  double kl_joint = 0;
  double entropy_total = 0;
  double entropy_per_sample = 0;
  double entropy_rate = 0;
  double bound_rate = std::numeric_limits<double>::quiet_NaN();
  Index rejected = 0;
};

struct ModeTrace {
  DescentMode mode = DescentMode::mean_field;
  Index batch_size = 1;
  Index replicas = 0;
  double step_size = 0;
  bool control_variate = false;
  bool diverged = false;
  std::string error;
  Index sign_flips = 0;
  std::vector<MetricsRow> rows;

  /// Index into rows of the smallest KL (first one on ties).
  Index argmin_kl() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string target;
  std::string energy;
  Vector alpha;
  Vector alpha_std;
  std::vector<ModeTrace> traces;
};

struct BenchmarkRow {
  DescentMode mode = DescentMode::mean_field;
  Index batch_size = 1;
  double min_kl = 0;
  double se_at_min = 0;
  Index argmin_step = 0;
  double final_kl = 0;
  bool diverged = false;
};

struct BenchmarkSummary {
  ExperimentResult result;
  std::vector<BenchmarkRow> rows;
};

/// Runs one mode over config.replicas independent replicas with a shared
/// step size. Replica m starts from the same initial batch in every mode, so
/// mode comparisons use common random numbers.
ModeTrace run_mode_trace(const ExperimentConfig& config, DescentMode mode, Index batch_size, const Vector& alpha,
                         const EnergySpec& spec, const TargetModel& target, const InitDistribution& init);

/// Per-step metrics for every configured mode.
ExperimentResult run_kl_trace(const ExperimentConfig& config);
/// Mean-field traces for each batch size in config.sweep_sizes.
ExperimentResult run_batch_size_sweep(const ExperimentConfig& config);
/// run_kl_trace plus the minimum KL over steps for each mode.
BenchmarkSummary run_synthetic_benchmark(const ExperimentConfig& config);
BenchmarkRow summarize(const ModeTrace& trace);

// ---------------------------------------------------------------------------
// Financial data

enum class PriceTransform { log_returns, differences };
PriceTransform parse_transform(const std::string& text);
std::string to_string(PriceTransform transform);

struct FinancialDataset {
  std::string instrument;
  std::vector<std::chrono::sys_days> dates;
  Vector prices;
  PriceTransform transform = PriceTransform::log_returns;
  Vector series;              ///< transformed, one shorter than prices
  std::vector<Vector> slices; ///< four equal consecutive slices; [0] trains
  Index dropped = 0;          ///< trailing observations beyond 4 * slice length

  const Vector& training() const { return slices.front(); }
};

/// Reads a `date,value` CSV (header row, ISO dates, strictly increasing).
FinancialDataset ingest_prices(const std::string& path, PriceTransform transform);
FinancialDataset ingest_prices(std::istream& in, PriceTransform transform, const std::string& instrument);

std::chrono::sys_days parse_iso_date(const std::string& text);
std::string format_iso_date(std::chrono::sys_days day);

/// Sample autocorrelation at lags 1..max_lag (mean removed, biased normalization).
Vector autocorrelation(ConstVectorRef x, Index max_lag);
/// Bin edges with Freedman-Diaconis width over the pooled values.
Vector freedman_diaconis_edges(ConstVectorRef pooled);
/// Counts per bin; values outside the edges go to the end bins.
Vector histogram_counts(ConstVectorRef x, const Vector& edges);
/// Q3 - Q1 with linear interpolation between order statistics.
double interquartile_range(std::vector<double> values);

/// Rows are samples, columns named statistics.
struct StatisticsMatrix {
  std::vector<std::string> columns;
  std::vector<std::string> source;
  std::vector<Index> sample;
  Matrix values;
};

struct FinanceModeReport {
  DescentMode mode = DescentMode::mean_field;
  double step_size = 0;
  Index steps_taken = 0;      ///< maximum over batches
  double max_distance = 0;    ///< max over batches of ||mean energy - alpha||
  bool within_tolerance = false;
  EntropyEstimate entropy_total;
  EntropyEstimate entropy_per_sample;
  EntropyEstimate entropy_rate;
  Vector iqr_energy_squared;  ///< per lag, squared-process components of the energy
  Vector iqr_acf;
  Vector iqr_acf_squared;
  RowMatrix samples;          ///< generated paths in data units
};

struct FinanceReport {
  ExperimentConfig config;
  std::string instrument;
  PriceTransform transform = PriceTransform::log_returns;
  Index slice_length = 0;
  double train_mean = 0;
  double train_std = 0;
  Vector alpha;
  double tolerance = 0;
  Vector histogram_edges;
  std::vector<FinanceModeReport> modes;
  StatisticsMatrix statistics;
};

FinanceReport run_financial_pipeline(const ExperimentConfig& config);
FinanceReport run_financial_pipeline(const ExperimentConfig& config, const FinancialDataset& data);

// ---------------------------------------------------------------------------
// Synthetic prices

struct SyntheticPriceOptions {
  std::string model = "sv";   ///< sv (log-volatility AR(1)) | gbm
  Index rows = 2048;
  double start_price = 100.0;
  double drift = 2e-4;        ///< per-day log drift
  double volatility = 0.01;   ///< per-day return std (gbm) or its long-run level (sv)
  double vol_persistence = 0.97;
  double vol_of_vol = 0.2;
  std::string start_date = "2010-01-04";
  std::uint64_t seed = 0;
};

/// Business-day price series written as a `date,value` CSV.
void write_synthetic_prices(std::ostream& out, const SyntheticPriceOptions& options);

// ---------------------------------------------------------------------------
// Export

const std::vector<std::string>& metrics_columns();
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);
void write_statistics_csv(std::ostream& out, const StatisticsMatrix& stats);
void write_paths_csv(std::ostream& out, const RowMatrix& paths);

nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json to_json(const ExperimentResult& result);
nlohmann::json to_json(const BenchmarkSummary& summary);
nlohmann::json to_json(const FinanceReport& report);

/// Writes `text` to dir/name, creating dir. Throws Error when unwritable.
void write_file(const std::string& dir, const std::string& name, const std::string& text);

void export_result(const std::string& dir, const ExperimentResult& result, const std::string& stem);
void export_benchmark(const std::string& dir, const BenchmarkSummary& summary);
void export_finance(const std::string& dir, const FinanceReport& report);

/// "%.17g" formatting used in every CSV.
std::string format_double(double value);

}  // namespace mgdm
