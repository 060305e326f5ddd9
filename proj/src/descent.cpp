#include "mgdm/descent.hpp"

#include <cmath>

namespace mgdm {

std::string to_string(DescentMode mode) { return mode == DescentMode::mgdm ? "mgdm" : "mf-mgdm"; }

DescentMode parse_descent_mode(const std::string& text) {
  if (text == "mgdm" || text == "reg" || text == "regular") return DescentMode::mgdm;
  if (text == "mf" || text == "mf-mgdm" || text == "mean-field") return DescentMode::mean_field;
  throw ConfigError("unknown descent mode '" + text + "' (expected mgdm or mf-mgdm)");
}

ParticleBatch::ParticleBatch(RowMatrix initial)
    : paths(std::move(initial)), active(Mask::Constant(paths.rows(), paths.cols(), true)) {}

void DescentConfig::validate() const {
  if (!(step_size >= 0) || !std::isfinite(step_size)) throw ConfigError("descent: step size must be >= 0");
  if (step_size == 0 && !(step_scale > 0)) throw ConfigError("descent: step scale must be positive");
  if (max_steps < 0) throw ConfigError("descent: max steps must be >= 0");
  if (!(tolerance >= 0)) throw ConfigError("descent: tolerance must be >= 0");
  if (batch_size < 1) throw ConfigError("descent: batch size must be >= 1");
  if (logdet_stride < 0) throw ConfigError("descent: log-det stride must be >= 0");
  if (divergence_patience < 1) throw ConfigError("descent: divergence patience must be >= 1");
  init.validate();
  if (projected && !init.positive_support()) {
    throw ConfigError("descent: projected runs need a positive-support initial distribution");
  }
}

Index DescentConfig::effective_logdet_stride(Index dim) const {
  if (logdet_stride > 0) return logdet_stride;
  return dim <= 256 ? 1 : 5;
}

namespace {

void check_shapes(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec) {
  if (batch.cols() != spec.dim()) throw DimensionError("descent: path length does not match energy dimension");
  if (alpha.size() != spec.size()) throw DimensionError("descent: alpha length does not match K");
}

void check_finite(const RowMatrix& paths) {
  if (!paths.allFinite()) {
    throw Error("descent: non-finite state after gradient step (numerical divergence; try a smaller step size)");
  }
}

}  // namespace

Vector gd_step(ConstVectorRef x, const Vector& alpha, const EnergySpec& spec, double gamma) {
  if (alpha.size() != spec.size()) throw DimensionError("gd_step: alpha length does not match K");
  Vector out = x - gamma * spec.jacobian(x).transpose() * (spec.value(x) - alpha);
  if (!out.allFinite()) {
    throw Error("gd_step: non-finite result (numerical divergence; try a smaller step size)");
  }
  return out;
}

RowMatrix mf_step(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec, double gamma) {
  check_shapes(batch, alpha, spec);
  const Vector residual = batch_mean_energy(batch, spec) - alpha;
  RowMatrix out(batch.rows(), batch.cols());
  for (Index n = 0; n < batch.rows(); ++n) {
    const auto x = batch.row(n).transpose();
    out.row(n) = (x - gamma * spec.jacobian(x).transpose() * residual).transpose();
  }
  check_finite(out);
  return out;
}

ProjectedUpdate projected_step(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec, double gamma,
                               DescentMode mode) {
  check_shapes(batch, alpha, spec);
  if ((batch.array() < 0).any()) throw InputError("projected_step: input has negative components");
  RowMatrix proposal(batch.rows(), batch.cols());
  if (mode == DescentMode::mean_field) {
    proposal = mf_step(batch, alpha, spec, gamma);
  } else {
    for (Index n = 0; n < batch.rows(); ++n) {
      proposal.row(n) = gd_step(batch.row(n).transpose(), alpha, spec, gamma).transpose();
    }
  }
  ProjectedUpdate out;
  out.active = proposal.array() >= 0;
  out.paths = out.active.select(proposal, batch);
  return out;
}

double default_step_size(const RowMatrix& batch, const EnergySpec& spec, double scale) {
  if (batch.rows() < 1) throw InputError("default_step_size: empty batch");
  double total = 0;
  for (Index n = 0; n < batch.rows(); ++n) {
    const double s = spectral_norm(spec.jacobian(batch.row(n).transpose()));
    total += s * s;
  }
  const double mean = total / static_cast<double>(batch.rows());
  return mean > 0 ? scale / mean : scale;
}

DescentResult run_descent(const DescentConfig& config, const Vector& alpha, const EnergySpec& spec,
                          const TargetModel* target) {
  config.validate();
  Rng rng = make_rng(config.seed, 0x1417);
  RowMatrix initial = init_sample_batch(config.init, config.batch_size, spec.dim(), rng);
  if (config.step_size > 0) return run_descent_from(std::move(initial), config, alpha, spec, target);
  // Calibrate on an independent pilot batch so gamma does not depend on the
  // starting point of the flow.
  Rng pilot_rng = make_rng(config.seed, 0x9a11);
  const RowMatrix pilot = init_sample_batch(config.init, config.batch_size, spec.dim(), pilot_rng);
  check_shapes(pilot, alpha, spec);
  DescentConfig fixed = config;
  fixed.step_size = default_step_size(pilot, spec, config.step_scale);
  return run_descent_from(std::move(initial), fixed, alpha, spec, target);
}

DescentResult run_descent_from(RowMatrix initial, const DescentConfig& config, const Vector& alpha,
                               const EnergySpec& spec, const TargetModel* target) {
  config.validate();
  check_shapes(initial, alpha, spec);
  if (initial.rows() < 1) throw InputError("run_descent: empty batch");
  if (config.projected && (initial.array() < 0).any()) {
    throw InputError("run_descent: projected run started from negative components");
  }
  if (target && target->length() != spec.dim()) throw DimensionError("run_descent: target length does not match d");
  check_finite(initial);

  const bool mean_field = config.mode == DescentMode::mean_field;
  const Index n_particles = initial.rows();
  const Index d = spec.dim();
  const Index k = spec.size();
  const bool use_tolerance = std::isfinite(config.tolerance);
  const Index stride = config.effective_logdet_stride(d);

  DescentResult result;
  result.batch = ParticleBatch(std::move(initial));
  result.step_size = config.step_size > 0 ? config.step_size
                                          : default_step_size(result.batch.paths, spec, config.step_scale);
  const double gamma = result.step_size;
  result.trace = mean_field ? FlowTrace(FlowMode::per_batch, 1, n_particles)
                            : FlowTrace(FlowMode::per_sample, n_particles, 1);

  std::vector<bool> frozen(static_cast<std::size_t>(n_particles), false);
  std::vector<Matrix> jacobians(static_cast<std::size_t>(n_particles));
  RowMatrix energies(n_particles, k);
  Vector last_logdets = Vector::Zero(mean_field ? 1 : n_particles);
  int last_sign = 1;
  std::optional<double> cached_eta;
  Index rising = 0;
  Mask mask = Mask::Constant(n_particles, d, true);
  Index updated = n_particles * d;

  RowMatrix& paths = result.batch.paths;
  for (Index t = 0;; ++t) {
    for (Index n = 0; n < n_particles; ++n) {
      const auto x = paths.row(n).transpose();
      energies.row(n) = spec.value(x).transpose();
      jacobians[static_cast<std::size_t>(n)] = spec.jacobian(x);
    }
    const Vector mean_residual = energies.colwise().mean().transpose() - alpha;

    StepRecord rec;
    rec.step = t;
    rec.updated_components = updated;
    rec.particle_distances = (energies.rowwise() - alpha.transpose()).rowwise().norm();
    if (mean_field) {
      rec.energy_distance = mean_residual.norm();
      rec.loss = 0.5 * static_cast<double>(n_particles) * mean_residual.squaredNorm();
    } else {
      rec.energy_distance = rec.particle_distances.mean();
      rec.loss = 0.5 * rec.particle_distances.squaredNorm();
    }
    if (target) {
      rec.log_density.resize(n_particles);
      for (Index n = 0; n < n_particles; ++n) rec.log_density(n) = target->log_density(paths.row(n).transpose());
    }
    if (config.track_bound_constants) {
      for (const auto& jac : jacobians) rec.beta_local = std::max(rec.beta_local, spectral_norm(jac));
      if (!cached_eta || !spec.hessian_is_constant()) cached_eta = local_lipschitz(paths, spec).eta;
      rec.eta_local = *cached_eta;
    }

    if (!result.records.empty()) {
      const double prev = result.records.back().loss;
      const double floor = 1e-20 * std::max(1.0, result.records.front().loss);
      rising = (rec.loss > prev * (1.0 + 1e-12) && rec.loss > floor) ? rising + 1 : 0;
    }
    result.records.push_back(rec);
    result.steps_taken = t;
    if (rising >= config.divergence_patience) {
      throw DivergenceError("descent: loss increased for " + std::to_string(rising) +
                                " consecutive steps (step size too large?)",
                            result);
    }

    if (use_tolerance) {
      if (mean_field) {
        result.converged = rec.energy_distance <= config.tolerance;
      } else {
        bool all = true;
        for (Index n = 0; n < n_particles; ++n) {
          if (!frozen[static_cast<std::size_t>(n)] && rec.particle_distances(n) <= config.tolerance) frozen[static_cast<std::size_t>(n)] = true;
          all = all && frozen[static_cast<std::size_t>(n)];
        }
        result.converged = all;
      }
    }
    if (result.converged || t == config.max_steps) break;

    // Unconstrained proposal.
    RowMatrix proposal = paths;
    for (Index n = 0; n < n_particles; ++n) {
      if (frozen[static_cast<std::size_t>(n)]) continue;
      const Vector residual = mean_field ? mean_residual : Vector(energies.row(n).transpose() - alpha);
      proposal.row(n).noalias() -= (gamma * jacobians[static_cast<std::size_t>(n)].transpose() * residual).transpose();
    }
    mask.setConstant(true);
    for (Index n = 0; n < n_particles; ++n) {
      if (frozen[static_cast<std::size_t>(n)]) mask.row(n).setConstant(false);
    }
    if (config.projected) {
      mask = mask && (proposal.array() >= 0);
      proposal = mask.select(proposal, paths);
    }
    if (!proposal.allFinite()) {
      throw DivergenceError("descent: non-finite state after gradient step (numerical divergence; "
                            "try a smaller step size)",
                            result);
    }
    updated = mask.count();
    const bool masked = config.projected || !mean_field;

    if (config.track_likelihood) {
      if (t % stride == 0) {
        int sign = 1;
        {
          if (mean_field) {
            const auto ld =
                detail::coupled_logdet(paths, jacobians, mean_residual, spec, gamma, config.projected ? &mask : nullptr);
            last_logdets(0) = ld.log_abs;
            sign = ld.sign;
          } else {
            for (Index n = 0; n < n_particles; ++n) {
              if (frozen[static_cast<std::size_t>(n)]) {
                last_logdets(n) = 0;
                continue;
              }
              const Vector residual = energies.row(n).transpose() - alpha;
              LogDet<double> ld;
              if (config.logdet_method == LogDetMethod::dense && !config.projected) {
                ld = step_logdet_single(paths.row(n).transpose(), alpha, spec, gamma);
              } else {
                const RowMatrix single = paths.row(n);
                const Mask mask_row = mask.row(n);
                ld = detail::coupled_logdet(single, {jacobians[static_cast<std::size_t>(n)]}, residual, spec, gamma,
                                            masked ? &mask_row : nullptr);
              }
              last_logdets(n) = ld.log_abs;
              sign *= ld.sign;
            }
          }
        }
        if (t > 0 && sign != last_sign) ++result.sign_flips;
        last_sign = sign;
      }
      result.trace.append(last_logdets);
    }

    paths = std::move(proposal);
    result.batch.active = mask;
    result.batch.step = t + 1;
  }
  return result;
}

}  // namespace mgdm
