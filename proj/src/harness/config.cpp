#include "mgdm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace mgdm {

void ExperimentConfig::apply_full_scale() {
  full_scale = true;
  dim = 1024;
  batch_size = 128;
  replicas = 128;
  target_paths = 10000;
  max_steps = 300;
}

void ExperimentConfig::validate() const {
  if (target != "ar" && target != "cir") throw ConfigError("config: target must be ar or cir, got '" + target + "'");
  if (energy != "acf" && energy != "squared-acf") {
    throw ConfigError("config: energy must be acf or squared-acf, got '" + energy + "'");
  }
  if (finance_energy != "acf" && finance_energy != "squared-acf") {
    throw ConfigError("config: finance_energy must be acf or squared-acf, got '" + finance_energy + "'");
  }
  if (dim < 1) throw ConfigError("config: dim must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (replicas < 1) throw ConfigError("config: replicas must be >= 1");
  if (target_paths < 1) throw ConfigError("config: target_paths must be >= 1");
  if (!(step_size >= 0) || !std::isfinite(step_size)) throw ConfigError("config: step_size must be >= 0");
  if (!(step_scale > 0)) throw ConfigError("config: step_scale must be > 0");
  if (!(finance_step_scale > 0)) throw ConfigError("config: finance_step_scale must be > 0");
  if (max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
  if (!(tolerance >= 0)) throw ConfigError("config: tolerance must be >= 0");
  if (!(init_variance >= 0)) throw ConfigError("config: init_variance must be >= 0");
  if (logdet_stride < 0) throw ConfigError("config: logdet_stride must be >= 0");
  if (init != "auto" && init != "gaussian" && init != "exponential" && init != "truncated-gaussian") {
    throw ConfigError("config: unknown init '" + init + "'");
  }
  if (mode != "both") parse_descent_mode(mode);
  if (sweep_sizes.empty()) throw ConfigError("config: sweep_sizes is empty");
  for (Index n : sweep_sizes) {
    if (n < 1) throw ConfigError("config: sweep sizes must be >= 1");
  }
  if (finance_samples < 1) throw ConfigError("config: finance_samples must be >= 1");
  if (finance_steps < 1) throw ConfigError("config: finance_steps must be >= 1");
  if (!(epsilon_rel > 0)) throw ConfigError("config: epsilon_rel must be > 0");
  if (stat_max_lag < 1) throw ConfigError("config: stat_max_lag must be >= 1");
  if (threads < 0) throw ConfigError("config: threads must be >= 0");
  parse_transform(transform);
  if (target == "ar") {
    if (!(ar_sigma >= 0)) throw ConfigError("config: ar_sigma must be >= 0");
  }
  // Model and energy parameters are checked by their constructors.
  make_target();
  make_energy(dim);
}

std::vector<DescentMode> ExperimentConfig::modes() const {
  if (mode == "both") return {DescentMode::mgdm, DescentMode::mean_field};
  return {parse_descent_mode(mode)};
}

TargetModel ExperimentConfig::make_target() const {
  try {
    if (target == "cir") {
      CirProcess proc;
      proc.kappa = cir_kappa;
      proc.theta = cir_theta;
      proc.sigma = cir_sigma;
      proc.dt = cir_dt;
      proc.length = dim;
      return TargetModel(proc);
    }
    ArProcess proc = ArProcess::unit_variance(ar_phi, dim);
    if (ar_sigma > 0) proc.sigma = ar_sigma;
    return TargetModel(proc);
  } catch (const ModelError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

EnergyPtr ExperimentConfig::make_energy(Index d) const { return make_energy(d, energy); }

EnergyPtr ExperimentConfig::make_energy(Index d, const std::string& kind) const {
  if (kind == "squared-acf") {
    return std::make_shared<SquaredAcfEnergy>(d, SquaredAcfOptions{max_lag, center_signal, center_squared});
  }
  return std::make_shared<AcfEnergy>(d, lags);
}

InitDistribution ExperimentConfig::make_init(const EnergySpec& spec, const Vector& alpha, double data_mean,
                                             double data_std) const {
  std::string kind = init;
  if (kind == "auto") kind = projected ? "fit" : "gaussian";
  if (kind == "gaussian") {
    double variance = init_variance;
    if (variance == 0) {
      // Use the uncentered lag-0 moment of x (the mean square) when the
      // energy has one.
      variance = data_std * data_std + data_mean * data_mean;
      if (const auto* moments = dynamic_cast<const MomentEnergy*>(&spec)) {
        const auto& comps = moments->components();
        for (std::size_t k = 0; k < comps.size(); ++k) {
          if (comps[k].transform == SeriesTransform::identity && comps[k].lag == 0 && !comps[k].centered) {
            variance = alpha(static_cast<Index>(k));
            break;
          }
        }
      }
    }
    if (!(variance > 0)) throw ConfigError("config: initial variance must be positive");
    return InitDistribution::gaussian(variance);
  }
  if (kind == "exponential") {
    if (!(data_mean > 0)) throw ConfigError("config: exponential init needs a positive data mean");
    return InitDistribution::exponential_dist(1.0 / data_mean);
  }
  // truncated-gaussian, or auto for projected runs: moment fit, which falls
  // back to the exponential law when the data call for it.
  if (!(data_mean > 0) || !(data_std > 0)) throw ConfigError("config: positive init needs positive mean and std");
  return InitDistribution::fit_positive(data_mean, data_std);
}

Index ExperimentConfig::worker_count() const {
  if (threads > 0) return threads;
  return std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
}

}  // namespace mgdm
