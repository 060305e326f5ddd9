#include "mgdm/harness.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>

namespace mgdm {

PriceTransform parse_transform(const std::string& text) {
  if (text == "log-returns" || text == "log_returns" || text == "logret") return PriceTransform::log_returns;
  if (text == "differences" || text == "diff") return PriceTransform::differences;
  throw ConfigError("unknown transform '" + text + "' (expected log-returns or differences)");
}

std::string to_string(PriceTransform transform) {
  return transform == PriceTransform::log_returns ? "log-returns" : "differences";
}

std::chrono::sys_days parse_iso_date(const std::string& text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || text[4] != '-' ||
      text[7] != '-') {
    throw InputError("invalid ISO date '" + text + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw InputError("invalid calendar date '" + text + "'");
  return std::chrono::sys_days{ymd};
}

std::string format_iso_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double parse_value(const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (text.empty() || end != begin + text.size() || !std::isfinite(v)) {
    throw InputError("invalid number '" + text + "'");
  }
  return v;
}

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

}  // namespace

FinancialDataset ingest_prices(std::istream& in, PriceTransform transform, const std::string& instrument) {
  FinancialDataset data;
  data.instrument = instrument;
  data.transform = transform;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos) {
      throw InputError(line_error(line_no, "expected two comma-separated fields"));
    }
    const std::string first = trim(row.substr(0, comma));
    const std::string second = trim(row.substr(comma + 1));
    if (!header) {
      if (lower(first) != "date" || lower(second) != "value") {
        throw InputError(line_error(line_no, "expected header 'date,value'"));
      }
      header = true;
      continue;
    }
    std::chrono::sys_days date;
    double value = 0;
    try {
      date = parse_iso_date(first);
      value = parse_value(second);
    } catch (const InputError& e) {
      throw InputError(line_error(line_no, e.what()));
    }
    if (!data.dates.empty() && date <= data.dates.back()) {
      throw InputError(line_error(line_no, "dates must be strictly increasing (" + first + " after " +
                                               format_iso_date(data.dates.back()) + ")"));
    }
    if (transform == PriceTransform::log_returns && !(value > 0)) {
      throw InputError(line_error(line_no, "log-returns need positive values"));
    }
    data.dates.push_back(date);
    values.push_back(value);
  }
  if (!header) throw InputError("price file is empty");
  data.prices = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));

  const Index n = data.prices.size();
  const Index slice = n > 1 ? (n - 1) / 4 : 0;
  if (slice < 1) {
    throw InputError("need at least 5 observations to split the transformed series into four slices, got " +
                     std::to_string(n));
  }
  data.series.resize(n - 1);
  for (Index i = 1; i < n; ++i) {
    data.series(i - 1) = transform == PriceTransform::log_returns ? std::log(data.prices(i) / data.prices(i - 1))
                                                                  : data.prices(i) - data.prices(i - 1);
  }
  for (Index s = 0; s < 4; ++s) data.slices.push_back(data.series.segment(s * slice, slice));
  data.dropped = data.series.size() - 4 * slice;
  return data;
}

FinancialDataset ingest_prices(const std::string& path, PriceTransform transform) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open price file '" + path + "'");
  try {
    return ingest_prices(in, transform, std::filesystem::path(path).stem().string());
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Statistics

Vector autocorrelation(ConstVectorRef x, Index max_lag) {
  if (max_lag < 1) throw ConfigError("autocorrelation: max_lag must be >= 1");
  if (max_lag >= x.size()) throw DimensionError("autocorrelation: max_lag must be below the series length");
  const Vector c = x.array() - x.mean();
  const double c0 = c.squaredNorm();
  Vector out(max_lag);
  for (Index l = 1; l <= max_lag; ++l) {
    const double cl = c.tail(x.size() - l).dot(c.head(x.size() - l));
    out(l - 1) = c0 > 0 ? cl / c0 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double interquartile_range(std::vector<double> values) {
  if (values.empty()) throw InputError("interquartile_range: no values");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return quantile(0.75) - quantile(0.25);
}

Vector freedman_diaconis_edges(ConstVectorRef pooled) {
  if (pooled.size() < 1) throw InputError("freedman_diaconis_edges: no values");
  const double lo = pooled.minCoeff();
  const double hi = pooled.maxCoeff();
  if (!(hi > lo)) return (Vector(2) << lo - 0.5, hi + 0.5).finished();
  const double iqr = interquartile_range(std::vector<double>(pooled.data(), pooled.data() + pooled.size()));
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(pooled.size()));
  constexpr Index kMaxBins = 512;
  Index bins = width > 0 ? static_cast<Index>(std::ceil((hi - lo) / width)) : 1;
  bins = std::clamp<Index>(bins, 1, kMaxBins);
  return Vector::LinSpaced(bins + 1, lo, hi);
}

Vector histogram_counts(ConstVectorRef x, const Vector& edges) {
  if (edges.size() < 2) throw InputError("histogram_counts: need at least two edges");
  const Index bins = edges.size() - 1;
  Vector counts = Vector::Zero(bins);
  for (Index i = 0; i < x.size(); ++i) {
    const auto it = std::upper_bound(edges.data(), edges.data() + edges.size(), x(i));
    const Index bin = std::clamp<Index>(static_cast<Index>(it - edges.data()) - 1, 0, bins - 1);
    counts(bin) += 1;
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

constexpr std::uint64_t kFinanceStream = 0xf1a;
constexpr std::uint64_t kFinancePilot = 0xf1b;

// Indices of the energy components that are moments of x^2 at lags >= 1.
std::vector<Index> squared_components(const EnergySpec& spec) {
  std::vector<Index> out;
  if (const auto* moments = dynamic_cast<const MomentEnergy*>(&spec)) {
    const auto& comps = moments->components();
    for (std::size_t k = 0; k < comps.size(); ++k) {
      if (comps[k].transform == SeriesTransform::square && comps[k].lag >= 1) out.push_back(static_cast<Index>(k));
    }
  }
  return out;
}

struct SampleStatistics {
  Vector acf;
  Vector acf_squared;
  Vector energy_squared;
  Vector histogram;
};

SampleStatistics sample_statistics(ConstVectorRef path, double mean, double scale, const EnergySpec& spec,
                                   const std::vector<Index>& squared, Index max_lag, const Vector& edges) {
  SampleStatistics s;
  s.acf = autocorrelation(path, max_lag);
  s.acf_squared = autocorrelation(path.array().square().matrix(), max_lag);
  const Vector phi = spec.value((path.array() - mean) / scale);
  s.energy_squared.resize(static_cast<Index>(squared.size()));
  for (std::size_t j = 0; j < squared.size(); ++j) s.energy_squared(static_cast<Index>(j)) = phi(squared[j]);
  s.histogram = histogram_counts(path, edges);
  return s;
}

Vector column_iqr(const std::vector<SampleStatistics>& stats, Vector SampleStatistics::*field) {
  if (stats.empty()) return {};
  const Index cols = (stats.front().*field).size();
  Vector out(cols);
  for (Index c = 0; c < cols; ++c) {
    std::vector<double> col;
    for (const auto& s : stats) col.push_back((s.*field)(c));
    out(c) = interquartile_range(col);
  }
  return out;
}

}  // namespace

FinanceReport run_financial_pipeline(const ExperimentConfig& config) {
  config.validate();
  return run_financial_pipeline(config, ingest_prices(config.data_file, parse_transform(config.transform)));
}

FinanceReport run_financial_pipeline(const ExperimentConfig& config, const FinancialDataset& data) {
  config.validate();
  const Vector& train = data.training();
  const Index d = train.size();
  const Index max_lag = config.stat_max_lag;
  if (max_lag >= d) throw ConfigError("finance: stat_max_lag must be below the slice length");

  FinanceReport report;
  report.config = config;
  report.instrument = data.instrument;
  report.transform = data.transform;
  report.slice_length = d;
  report.train_mean = train.mean();
  report.train_std = d > 1 ? std::sqrt((train.array() - report.train_mean).square().sum() / static_cast<double>(d - 1)) : 0;
  if (!(report.train_std > 0)) throw InputError("finance: training slice is constant; cannot standardize");
  const double mean = report.train_mean;
  const double scale = report.train_std;

  // The sampler works on the standardized series.
  const EnergyPtr spec = config.make_energy(d, config.finance_energy);
  const Vector z = (train.array() - mean) / scale;
  report.alpha = spec->value(z);
  report.tolerance = config.epsilon_rel * report.alpha.norm();
  const InitDistribution init = config.make_init(*spec, report.alpha, 0.0, 1.0);

  const Index n = config.batch_size;
  const Index batches = (config.finance_samples + n - 1) / n;
  DescentConfig descent;
  descent.max_steps = config.finance_steps;
  descent.tolerance = report.tolerance;
  descent.batch_size = n;
  descent.projected = config.projected;
  descent.init = init;
  descent.logdet_stride = config.logdet_stride;
  if (config.step_size > 0) {
    descent.step_size = config.step_size;
  } else {
    Rng pilot_rng = make_rng(config.seed, kFinancePilot, static_cast<std::uint64_t>(n));
    descent.step_size = default_step_size(init_sample_batch(init, n, d, pilot_rng), *spec, config.finance_step_scale);
  }

  // Validation slices fix the histogram bins for every source.
  Index pooled_size = 0;
  for (std::size_t s = 1; s < data.slices.size(); ++s) pooled_size += data.slices[s].size();
  Vector pooled(pooled_size);
  for (std::size_t s = 1, at = 0; s < data.slices.size(); ++s) {
    pooled.segment(static_cast<Index>(at), data.slices[s].size()) = data.slices[s];
    at += static_cast<std::size_t>(data.slices[s].size());
  }
  report.histogram_edges = freedman_diaconis_edges(pooled);
  const std::vector<Index> squared = squared_components(*spec);

  StatisticsMatrix& table = report.statistics;
  for (Index l = 1; l <= max_lag; ++l) table.columns.push_back("acf_lag" + std::to_string(l));
  for (Index l = 1; l <= max_lag; ++l) table.columns.push_back("acf_sq_lag" + std::to_string(l));
  const auto names = spec->component_names();
  for (Index k : squared) table.columns.push_back("energy_" + names[static_cast<std::size_t>(k)]);
  for (Index b = 0; b + 1 < report.histogram_edges.size(); ++b) table.columns.push_back("hist_bin" + std::to_string(b));
  std::vector<Vector> rows;
  auto add_row = [&](const std::string& source, Index sample, const SampleStatistics& s) {
    Vector row(s.acf.size() + s.acf_squared.size() + s.energy_squared.size() + s.histogram.size());
    row << s.acf, s.acf_squared, s.energy_squared, s.histogram;
    table.source.push_back(source);
    table.sample.push_back(sample);
    rows.push_back(std::move(row));
  };
  for (std::size_t s = 0; s < data.slices.size(); ++s) {
    add_row(s == 0 ? "train" : "validation", static_cast<Index>(s),
            sample_statistics(data.slices[s], mean, scale, *spec, squared, max_lag, report.histogram_edges));
  }

  for (DescentMode mode : config.modes()) {
    DescentConfig local = descent;
    local.mode = mode;
    std::vector<DescentResult> runs(static_cast<std::size_t>(batches));
    detail::parallel_for(batches, config.worker_count(), [&](Index b) {
      DescentConfig c = local;
      c.seed = split_seed(config.seed, kFinanceStream, static_cast<std::uint64_t>(b));
      runs[static_cast<std::size_t>(b)] = run_descent(c, report.alpha, *spec);
    });

    FinanceModeReport mr;
    mr.mode = mode;
    mr.step_size = local.step_size;
    mr.samples.resize(batches * n, d);
    std::vector<FlowTrace> traces;
    for (Index b = 0; b < batches; ++b) {
      const DescentResult& run = runs[static_cast<std::size_t>(b)];
      mr.steps_taken = std::max(mr.steps_taken, run.steps_taken);
      mr.max_distance = std::max(mr.max_distance, (batch_mean_energy(run.batch.paths, *spec) - report.alpha).norm());
      mr.samples.middleRows(b * n, n) = (run.batch.paths.array() * scale + mean).matrix();
      traces.push_back(run.trace);
    }
    mr.within_tolerance = mr.max_distance <= report.tolerance;
    const FlowTrace flow = FlowTrace::concatenate(traces);
    const Index per_replica = mode == DescentMode::mean_field ? n : 1;
    const double h0 = init_entropy(init, per_replica * d);
    mr.entropy_total = entropy_estimate(h0, flow, flow.steps(), EntropyNormalization::total, d);
    mr.entropy_per_sample = entropy_estimate(h0, flow, flow.steps(), EntropyNormalization::per_sample, d);
    mr.entropy_rate = entropy_estimate(h0, flow, flow.steps(), EntropyNormalization::rate, d);

    std::vector<SampleStatistics> stats;
    for (Index i = 0; i < mr.samples.rows(); ++i) {
      stats.push_back(sample_statistics(mr.samples.row(i).transpose(), mean, scale, *spec, squared, max_lag,
                                        report.histogram_edges));
      add_row(to_string(mode), i, stats.back());
    }
    mr.iqr_acf = column_iqr(stats, &SampleStatistics::acf);
    mr.iqr_acf_squared = column_iqr(stats, &SampleStatistics::acf_squared);
    mr.iqr_energy_squared = column_iqr(stats, &SampleStatistics::energy_squared);
    report.modes.push_back(std::move(mr));
  }

  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) table.values.row(static_cast<Index>(r)) = rows[r].transpose();
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic prices

void write_synthetic_prices(std::ostream& out, const SyntheticPriceOptions& options) {
  if (options.model != "sv" && options.model != "gbm") {
    throw ConfigError("gen-data: model must be sv or gbm, got '" + options.model + "'");
  }
  if (options.rows < 1) throw ConfigError("gen-data: rows must be >= 1");
  if (!(options.start_price > 0)) throw ConfigError("gen-data: start price must be positive");
  if (!(options.volatility > 0)) throw ConfigError("gen-data: volatility must be positive");
  if (!(std::abs(options.vol_persistence) < 1)) throw ConfigError("gen-data: |vol persistence| must be < 1");
  if (!(options.vol_of_vol >= 0)) throw ConfigError("gen-data: vol of vol must be >= 0");

  Rng rng = make_rng(options.seed, 0xda7a);
  std::normal_distribution<double> normal;
  const double phi = options.vol_persistence;
  const double s = options.vol_of_vol;
  // Log-variance h is a stationary AR(1) with E[exp(h)] = volatility^2.
  const double h_var = s * s / (1.0 - phi * phi);
  const double h_mean = 2.0 * std::log(options.volatility) - 0.5 * h_var;
  double h = h_mean + std::sqrt(h_var) * normal(rng);

  std::chrono::sys_days day = parse_iso_date(options.start_date);
  auto next_business_day = [](std::chrono::sys_days t) {
    do {
      t += std::chrono::days{1};
    } while (std::chrono::weekday{t} == std::chrono::Saturday || std::chrono::weekday{t} == std::chrono::Sunday);
    return t;
  };
  if (std::chrono::weekday{day} == std::chrono::Saturday || std::chrono::weekday{day} == std::chrono::Sunday) {
    day = next_business_day(day);
  }

  double price = options.start_price;
  char buf[64];
  out << "date,value\n";
  for (Index i = 0; i < options.rows; ++i) {
    if (i > 0) {
      double vol = options.volatility;
      if (options.model == "sv") {
        h = h_mean + phi * (h - h_mean) + s * normal(rng);
        vol = std::exp(0.5 * h);
      }
      price *= std::exp(options.drift + vol * normal(rng));
      day = next_business_day(day);
    }
    std::snprintf(buf, sizeof buf, "%.6f", price);
    out << format_iso_date(day) << ',' << buf << '\n';
  }
}

}  // namespace mgdm
