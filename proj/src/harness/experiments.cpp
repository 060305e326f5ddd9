#include "mgdm/harness.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>

namespace mgdm {

Index ModeTrace::argmin_kl() const {
  Index best = 0;
  for (Index t = 1; t < static_cast<Index>(rows.size()); ++t) {
    if (rows[static_cast<std::size_t>(t)].kl < rows[static_cast<std::size_t>(best)].kl) best = t;
  }
  return best;
}

namespace {

constexpr std::uint64_t kReplicaStream = 0x5eed;
constexpr std::uint64_t kPilotStream = 0x9a11;
constexpr std::uint64_t kTargetStream = 0x7a76;

const StepRecord& record_at(const DescentResult& run, Index t) {
  const auto last = static_cast<Index>(run.records.size()) - 1;
  return run.records[static_cast<std::size_t>(std::min(t, last))];
}

struct TargetData {
  TargetEnergy energy;
  double mean = 0;
  double std = 0;
};

TargetData target_data(const ExperimentConfig& config, const TargetModel& target, const EnergySpec& spec) {
  const RowMatrix data = target.sample_paths(config.target_paths, split_seed(config.seed, kTargetStream));
  TargetData out;
  out.energy = estimate_target(data, spec);
  const double n = static_cast<double>(data.size());
  out.mean = data.sum() / n;
  out.std = n > 1 ? std::sqrt((data.array() - out.mean).square().sum() / (n - 1)) : 0.0;
  return out;
}

}  // namespace

ModeTrace run_mode_trace(const ExperimentConfig& config, DescentMode mode, Index batch_size, const Vector& alpha,
                         const EnergySpec& spec, const TargetModel& target, const InitDistribution& init) {
  const Index d = spec.dim();
  const Index replicas = config.replicas;

  DescentConfig descent;
  descent.max_steps = config.max_steps;
  descent.tolerance = config.tolerance;
  descent.batch_size = batch_size;
  descent.mode = mode;
  descent.projected = config.projected;
  descent.init = init;
  descent.logdet_stride = config.logdet_stride;
  descent.track_bound_constants = config.track_bound;
  if (config.step_size > 0) {
    descent.step_size = config.step_size;
  } else {
    Rng pilot_rng = make_rng(config.seed, kPilotStream, static_cast<std::uint64_t>(batch_size));
    const RowMatrix pilot = init_sample_batch(init, batch_size, d, pilot_rng);
    descent.step_size = default_step_size(pilot, spec, config.step_scale);
  }
  descent.validate();

  std::vector<DescentResult> runs(static_cast<std::size_t>(replicas));
  std::vector<std::string> errors(static_cast<std::size_t>(replicas));
  detail::parallel_for(replicas, config.worker_count(), [&](Index m) {
    DescentConfig local = descent;
    local.seed = split_seed(config.seed, kReplicaStream, static_cast<std::uint64_t>(m));
    try {
      runs[static_cast<std::size_t>(m)] = run_descent(local, alpha, spec, &target);
    } catch (const DivergenceError& e) {
      runs[static_cast<std::size_t>(m)] = e.partial();
      errors[static_cast<std::size_t>(m)] = e.what();
    }
  });

  ModeTrace out;
  out.mode = mode;
  out.batch_size = batch_size;
  out.replicas = replicas;
  out.step_size = descent.step_size;
  Index shortest = std::numeric_limits<Index>::max();
  Index longest = 0;
  std::vector<FlowTrace> traces;
  for (std::size_t m = 0; m < runs.size(); ++m) {
    const auto len = static_cast<Index>(runs[m].records.size());
    shortest = std::min(shortest, len);
    longest = std::max(longest, len);
    out.sign_flips += runs[m].sign_flips;
    traces.push_back(runs[m].trace);
    if (!errors[m].empty() && !out.diverged) {
      out.diverged = true;
      out.error = "replica " + std::to_string(m) + ": " + errors[m];
    }
  }
  // A diverged replica has no states past its failure, so only the common
  // prefix is reported. Converged replicas are held at their final state.
  const Index steps = out.diverged ? shortest : longest;
  const FlowTrace flow = FlowTrace::concatenate(traces);

  const bool mean_field = mode == DescentMode::mean_field;
  const Index per_replica = mean_field ? batch_size : 1;
  const double h0 = init_entropy(init, per_replica * d);
  std::optional<double> expected0;
  if (config.control_variate) expected0 = expected_init_log_density(target, init);
  out.control_variate = expected0.has_value();

  std::vector<double> mean_distance(static_cast<std::size_t>(steps));
  std::vector<double> beta(static_cast<std::size_t>(steps));
  std::vector<double> eta(static_cast<std::size_t>(steps));
  std::vector<double> log_p;
  std::vector<double> log_p0;
  for (Index t = 0; t < steps; ++t) {
    MetricsRow row;
    row.step = t;
    log_p.clear();
    log_p0.clear();
    for (const auto& run : runs) {
      const StepRecord& rec = record_at(run, t);
      row.loss += rec.loss;
      row.energy_distance += rec.energy_distance;
      beta[static_cast<std::size_t>(t)] = std::max(beta[static_cast<std::size_t>(t)], rec.beta_local);
      eta[static_cast<std::size_t>(t)] = std::max(eta[static_cast<std::size_t>(t)], rec.eta_local);
      for (Index n = 0; n < rec.log_density.size(); ++n) {
        log_p.push_back(rec.log_density(n));
        log_p0.push_back(run.records.front().log_density(n));
      }
    }
    row.loss /= static_cast<double>(replicas);
    row.energy_distance /= static_cast<double>(replicas);
    mean_distance[static_cast<std::size_t>(t)] = row.energy_distance;

    const Index at = std::min(t, flow.steps());
    const auto total = entropy_estimate(h0, flow, at, EntropyNormalization::total, d);
    const auto per_sample = entropy_estimate(h0, flow, at, EntropyNormalization::per_sample, d);
    const auto rate = entropy_estimate(h0, flow, at, EntropyNormalization::rate, d);
    const KlEstimate kl = expected0 ? reverse_kl_paired(per_sample, log_p, log_p0, *expected0)
                                    : reverse_kl(per_sample, log_p);
    row.neg_entropy = kl.neg_entropy;
    row.se_neg_entropy = kl.se_neg_entropy;
    row.expected_log_likelihood = kl.expected_log_likelihood;
    row.se_log_likelihood = kl.se_log_likelihood;
    row.kl = kl.kl;
    row.se_kl = kl.se_kl;
    row.rejected = kl.rejected;
    row.entropy_total = total.mean;
    row.entropy_per_sample = per_sample.mean;
    row.entropy_rate = rate.mean;
    row.kl_joint = -total.mean - static_cast<double>(per_replica) * kl.expected_log_likelihood;
    out.rows.push_back(row);
  }
  if (config.track_bound && steps > 0) {
    const auto bound = theorem1_diagnostic(h0, per_replica, d, spec.size(), descent.step_size, mean_distance, beta, eta);
    for (Index t = 0; t < steps; ++t) {
      out.rows[static_cast<std::size_t>(t)].bound_rate = bound.bound_rate[static_cast<std::size_t>(t)];
    }
  }
  return out;
}

namespace {

struct Setup {
  TargetModel target;
  EnergyPtr spec;
  InitDistribution init;
  ExperimentResult result;
};

Setup prepare(const ExperimentConfig& config) {
  config.validate();
  Setup s{config.make_target(), config.make_energy(config.dim), {}, {}};
  const TargetData data = target_data(config, s.target, *s.spec);
  s.init = config.make_init(*s.spec, data.energy.alpha, data.mean, data.std);
  s.result.config = config;
  s.result.target = s.target.describe();
  s.result.energy = s.spec->describe();
  s.result.alpha = data.energy.alpha;
  s.result.alpha_std = data.energy.stddev;
  return s;
}

}  // namespace

ExperimentResult run_kl_trace(const ExperimentConfig& config) {
  Setup s = prepare(config);
  for (DescentMode mode : config.modes()) {
    s.result.traces.push_back(
        run_mode_trace(config, mode, config.batch_size, s.result.alpha, *s.spec, s.target, s.init));
  }
  return s.result;
}

ExperimentResult run_batch_size_sweep(const ExperimentConfig& config) {
  Setup s = prepare(config);
  for (Index n : config.sweep_sizes) {
    s.result.traces.push_back(
        run_mode_trace(config, DescentMode::mean_field, n, s.result.alpha, *s.spec, s.target, s.init));
  }
  return s.result;
}

BenchmarkRow summarize(const ModeTrace& trace) {
  BenchmarkRow row;
  row.mode = trace.mode;
  row.batch_size = trace.batch_size;
  row.diverged = trace.diverged;
  if (trace.rows.empty()) {
    row.min_kl = row.final_kl = std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  const auto best = static_cast<std::size_t>(trace.argmin_kl());
  row.min_kl = trace.rows[best].kl;
  row.se_at_min = trace.rows[best].se_kl;
  row.argmin_step = trace.rows[best].step;
  row.final_kl = trace.rows.back().kl;
  return row;
}

BenchmarkSummary run_synthetic_benchmark(const ExperimentConfig& config) {
  BenchmarkSummary summary;
  summary.result = run_kl_trace(config);
  for (const auto& trace : summary.result.traces) summary.rows.push_back(summarize(trace));
  return summary;
}

}  // namespace mgdm
