#include "mgdm/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mgdm {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns = {
      "step", "loss", "energy_distance", "neg_entropy", "se_neg_entropy", "expected_log_likelihood",
      "se_log_likelihood", "kl", "se_kl", "kl_joint", "entropy_total", "entropy_per_sample", "entropy_rate",
      "bound_rate", "rejected"};
  return columns;
}

namespace {

void write_header(std::ostream& out, const std::vector<std::string>& columns) {
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
}

// JSON has no infinities or NaN; they are written as null.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json vector_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

nlohmann::json entropy_json(const EntropyEstimate& e) {
  return {{"mean", number(e.mean)}, {"std_error", number(e.std_error)}, {"replicas", e.replicas}};
}

std::string trace_file_name(const std::string& stem, const ModeTrace& trace, bool with_size) {
  std::string name = stem + "_" + to_string(trace.mode);
  if (with_size) name += "_N" + std::to_string(trace.batch_size);
  return name + ".csv";
}

bool sizes_differ(const ExperimentResult& result) {
  for (const auto& t : result.traces) {
    if (t.batch_size != result.traces.front().batch_size) return true;
  }
  return false;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  write_header(out, metrics_columns());
  for (const auto& r : rows) {
    out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.energy_distance) << ','
        << format_double(r.neg_entropy) << ',' << format_double(r.se_neg_entropy) << ','
        << format_double(r.expected_log_likelihood) << ',' << format_double(r.se_log_likelihood) << ','
        << format_double(r.kl) << ',' << format_double(r.se_kl) << ',' << format_double(r.kl_joint) << ','
        << format_double(r.entropy_total) << ',' << format_double(r.entropy_per_sample) << ','
        << format_double(r.entropy_rate) << ',' << format_double(r.bound_rate) << ',' << r.rejected << '\n';
  }
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  write_header(out, {"mode", "batch_size", "min_kl", "se_at_min", "argmin_step", "final_kl", "diverged"});
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << r.batch_size << ',' << format_double(r.min_kl) << ','
        << format_double(r.se_at_min) << ',' << r.argmin_step << ',' << format_double(r.final_kl) << ','
        << (r.diverged ? 1 : 0) << '\n';
  }
}

void write_statistics_csv(std::ostream& out, const StatisticsMatrix& stats) {
  std::vector<std::string> columns = {"source", "sample"};
  columns.insert(columns.end(), stats.columns.begin(), stats.columns.end());
  write_header(out, columns);
  for (Index r = 0; r < stats.values.rows(); ++r) {
    out << stats.source[static_cast<std::size_t>(r)] << ',' << stats.sample[static_cast<std::size_t>(r)];
    for (Index c = 0; c < stats.values.cols(); ++c) out << ',' << format_double(stats.values(r, c));
    out << '\n';
  }
}

void write_paths_csv(std::ostream& out, const RowMatrix& paths) {
  std::vector<std::string> columns;
  for (Index i = 0; i < paths.cols(); ++i) columns.push_back("x" + std::to_string(i));
  write_header(out, columns);
  for (Index r = 0; r < paths.rows(); ++r) {
    for (Index c = 0; c < paths.cols(); ++c) out << (c ? "," : "") << format_double(paths(r, c));
    out << '\n';
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"target", c.target},
      {"ar_phi", c.ar_phi},
      {"ar_sigma", number(c.ar_sigma)},
      {"cir_kappa", number(c.cir_kappa)},
      {"cir_theta", number(c.cir_theta)},
      {"cir_sigma", number(c.cir_sigma)},
      {"cir_dt", number(c.cir_dt)},
      {"energy", c.energy},
      {"lags", c.lags},
      {"max_lag", c.max_lag},
      {"center_signal", c.center_signal},
      {"center_squared", c.center_squared},
      {"dim", c.dim},
      {"batch_size", c.batch_size},
      {"replicas", c.replicas},
      {"target_paths", c.target_paths},
      {"mode", c.mode},
      {"step_size", number(c.step_size)},
      {"step_scale", number(c.step_scale)},
      {"max_steps", c.max_steps},
      {"tolerance", std::isinf(c.tolerance) ? nlohmann::json("inf") : number(c.tolerance)},
      {"projected", c.projected},
      {"init", c.init},
      {"init_variance", number(c.init_variance)},
      {"logdet_stride", c.logdet_stride},
      {"track_bound", c.track_bound},
      {"control_variate", c.control_variate},
      {"sweep_sizes", c.sweep_sizes},
      {"data_file", c.data_file},
      {"transform", c.transform},
      {"finance_energy", c.finance_energy},
      {"finance_samples", c.finance_samples},
      {"finance_steps", c.finance_steps},
      {"finance_step_scale", number(c.finance_step_scale)},
      {"epsilon_rel", number(c.epsilon_rel)},
      {"stat_max_lag", c.stat_max_lag},
      {"seed", c.seed},
      {"full_scale", c.full_scale},
  };
}

nlohmann::json to_json(const ExperimentResult& result) {
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& t : result.traces) {
    const BenchmarkRow s = summarize(t);
    traces.push_back({{"mode", to_string(t.mode)},
                      {"batch_size", t.batch_size},
                      {"replicas", t.replicas},
                      {"step_size", number(t.step_size)},
                      {"control_variate", t.control_variate},
                      {"steps_recorded", t.rows.size()},
                      {"sign_flips", t.sign_flips},
                      {"diverged", t.diverged},
                      {"error", t.error},
                      {"min_kl", number(s.min_kl)},
                      {"se_at_min", number(s.se_at_min)},
                      {"argmin_step", s.argmin_step},
                      {"final_kl", number(s.final_kl)}});
  }
  return {{"config", to_json(result.config)},
          {"seed", result.config.seed},
          {"target", result.target},
          {"energy", result.energy},
          {"alpha", vector_json(result.alpha)},
          {"alpha_std", vector_json(result.alpha_std)},
          {"traces", traces}};
}

nlohmann::json to_json(const BenchmarkSummary& summary) {
  nlohmann::json out = to_json(summary.result);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"mode", to_string(r.mode)},
                    {"batch_size", r.batch_size},
                    {"min_kl", number(r.min_kl)},
                    {"se_at_min", number(r.se_at_min)},
                    {"argmin_step", r.argmin_step},
                    {"final_kl", number(r.final_kl)},
                    {"diverged", r.diverged}});
  }
  out["benchmark"] = rows;
  return out;
}

nlohmann::json to_json(const FinanceReport& report) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : report.modes) {
    modes.push_back({{"mode", to_string(m.mode)},
                     {"step_size", number(m.step_size)},
                     {"samples", m.samples.rows()},
                     {"steps_taken", m.steps_taken},
                     {"max_distance", number(m.max_distance)},
                     {"within_tolerance", m.within_tolerance},
                     {"entropy_total", entropy_json(m.entropy_total)},
                     {"entropy_per_sample", entropy_json(m.entropy_per_sample)},
                     {"entropy_rate", entropy_json(m.entropy_rate)},
                     {"iqr_energy_squared", vector_json(m.iqr_energy_squared)},
                     {"iqr_acf", vector_json(m.iqr_acf)},
                     {"iqr_acf_squared", vector_json(m.iqr_acf_squared)}});
  }
  return {{"config", to_json(report.config)},
          {"seed", report.config.seed},
          {"instrument", report.instrument},
          {"transform", to_string(report.transform)},
          {"slice_length", report.slice_length},
          {"train_mean", number(report.train_mean)},
          {"train_std", number(report.train_std)},
          {"alpha", vector_json(report.alpha)},
          {"tolerance", number(report.tolerance)},
          {"histogram_edges", vector_json(report.histogram_edges)},
          {"modes", modes}};
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void export_result(const std::string& dir, const ExperimentResult& result, const std::string& stem) {
  const bool with_size = sizes_differ(result);
  for (const auto& trace : result.traces) {
    std::ostringstream csv;
    write_metrics_csv(csv, trace.rows);
    write_file(dir, trace_file_name(stem, trace, with_size), csv.str());
  }
  write_file(dir, stem + "_summary.json", to_json(result).dump(2) + "\n");
}

void export_benchmark(const std::string& dir, const BenchmarkSummary& summary) {
  export_result(dir, summary.result, "benchmark");
  std::ostringstream csv;
  write_benchmark_csv(csv, summary.rows);
  write_file(dir, "benchmark.csv", csv.str());
  write_file(dir, "benchmark_summary.json", to_json(summary).dump(2) + "\n");
}

void export_finance(const std::string& dir, const FinanceReport& report) {
  std::ostringstream stats;
  write_statistics_csv(stats, report.statistics);
  write_file(dir, "finance_statistics.csv", stats.str());
  for (const auto& m : report.modes) {
    std::ostringstream paths;
    write_paths_csv(paths, m.samples);
    write_file(dir, "finance_" + to_string(m.mode) + "_paths.csv", paths.str());
  }
  write_file(dir, "finance_summary.json", to_json(report).dump(2) + "\n");
}

}  // namespace mgdm
