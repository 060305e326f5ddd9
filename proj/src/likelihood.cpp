#include "mgdm/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace mgdm {

namespace {

const double kMinLogDet = std::log(1e-300);

void check_batch(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec) {
  if (batch.rows() < 1) throw InputError("log-determinant: empty batch");
  if (batch.cols() != spec.dim()) throw DimensionError("log-determinant: batch width does not match d");
  if (alpha.size() != spec.size()) throw DimensionError("log-determinant: alpha length does not match K");
}

void check_regular(const LogDet<double>& ld, Index particle) {
  if (ld.sign == 0 || !(ld.log_abs >= kMinLogDet)) {
    const std::string who = particle >= 0 ? "particle " + std::to_string(particle) : "coupled K x K factor";
    throw SingularFlowError("singular flow Jacobian (" + who + ")", particle);
  }
}

bool use_sparse(const EnergySpec& spec) {
  const Index bw = spec.hessian_bandwidth();
  return bw >= 0 && 4 * (bw + 1) < spec.dim();
}

std::vector<Index> active_indices(const Mask& mask, Index row) {
  std::vector<Index> idx;
  for (Index j = 0; j < mask.cols(); ++j) {
    if (mask(row, j)) idx.push_back(j);
  }
  return idx;
}

SparseMatrix sparse_identity(Index n) {
  SparseMatrix eye(n, n);
  eye.setIdentity();
  return eye;
}

SparseMatrix selection(const std::vector<Index>& idx, Index d) {
  SparseMatrix s(static_cast<Index>(idx.size()), d);
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < idx.size(); ++r) trip.emplace_back(static_cast<Index>(r), idx[r], 1.0);
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

// A = I - gamma sum_k H_k(x) r_k, optionally restricted to idx x idx.
SquareFactor block_factor(ConstVectorRef x, const Vector& residual, const EnergySpec& spec, double gamma,
                          const std::vector<Index>* idx) {
  const Index d = spec.dim();
  if (use_sparse(spec)) {
    SparseMatrix a = sparse_identity(d) - gamma * spec.weighted_hessian_sparse(x, residual);
    if (idx) {
      const SparseMatrix s = selection(*idx, d);
      SparseMatrix sub = s * a * SparseMatrix(s.transpose());
      return SquareFactor(sub);
    }
    return SquareFactor(a);
  }
  Matrix a = Matrix::Identity(d, d) - gamma * spec.weighted_hessian(x, residual);
  if (idx) {
    Matrix sub = a(*idx, *idx);
    return SquareFactor(sub);
  }
  return SquareFactor(a);
}

}  // namespace

Matrix concatenated_jacobian(const RowMatrix& batch, const EnergySpec& spec) {
  const Index n = batch.rows();
  const Index d = spec.dim();
  Matrix out(spec.size(), n * d);
  for (Index p = 0; p < n; ++p) out.middleCols(p * d, d) = spec.jacobian(batch.row(p).transpose());
  return out;
}

LogDet<double> step_logdet_single(ConstVectorRef x, const Vector& alpha, const EnergySpec& spec, double gamma) {
  if (alpha.size() != spec.size()) throw DimensionError("log-determinant: alpha length does not match K");
  const Vector residual = spec.value(x) - alpha;
  const Matrix jac = spec.jacobian(x);
  const Index d = spec.dim();
  Matrix m = Matrix::Identity(d, d) - gamma * (spec.weighted_hessian(x, residual) + jac.transpose() * jac);
  LogDet<double> ld = log_abs_det(m);
  check_regular(ld, 0);
  return ld;
}

namespace detail {

LogDet<double> coupled_logdet(const RowMatrix& batch, const std::vector<Matrix>& jacobians, const Vector& residual,
                              const EnergySpec& spec, double gamma, const Mask* active) {
  const Index n_particles = batch.rows();
  const Index k = spec.size();
  LogDet<double> total;
  Matrix coupling = Matrix::Identity(k, k);
  const double weight = gamma / static_cast<double>(n_particles);

  std::optional<SquareFactor> shared;
  for (Index n = 0; n < n_particles; ++n) {
    std::vector<Index> idx;
    bool full = true;
    if (active) {
      idx = active_indices(*active, n);
      full = static_cast<Index>(idx.size()) == spec.dim();
      if (idx.empty()) continue;
    }
    const auto x = batch.row(n).transpose();
    std::optional<SquareFactor> own;
    const SquareFactor* factor = nullptr;
    if (full && spec.hessian_is_constant()) {
      if (!shared) shared.emplace(block_factor(x, residual, spec, gamma, nullptr));
      factor = &*shared;
    } else {
      own.emplace(block_factor(x, residual, spec, gamma, full ? nullptr : &idx));
      factor = &*own;
    }
    const LogDet<double> ld = factor->log_det();
    check_regular(ld, n);
    total += ld;
    const Matrix& jac_full = jacobians[static_cast<std::size_t>(n)];
    if (full) {
      coupling.noalias() -= weight * jac_full * factor->solve(jac_full.transpose());
    } else {
      const Matrix jac = jac_full(Eigen::all, idx);
      coupling.noalias() -= weight * jac * factor->solve(jac.transpose());
    }
  }
  const LogDet<double> ldc = log_abs_det(coupling);
  check_regular(ldc, -1);
  total += ldc;
  return total;
}

}  // namespace detail

namespace {

std::vector<Matrix> all_jacobians(const RowMatrix& batch, const EnergySpec& spec) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(batch.rows()));
  for (Index n = 0; n < batch.rows(); ++n) out.push_back(spec.jacobian(batch.row(n).transpose()));
  return out;
}

}  // namespace

LogDet<double> step_logdet_mf_fast(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec,
                                   double gamma) {
  check_batch(batch, alpha, spec);
  const Vector residual = batch_mean_energy(batch, spec) - alpha;
  return detail::coupled_logdet(batch, all_jacobians(batch, spec), residual, spec, gamma, nullptr);
}

Matrix mf_step_jacobian_dense(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec, double gamma,
                              Index cap) {
  check_batch(batch, alpha, spec);
  const Index n_particles = batch.rows();
  const Index d = spec.dim();
  if (n_particles * d > cap) {
    throw OracleScaleError("dense coupled Jacobian: N d = " + std::to_string(n_particles * d) +
                           " exceeds cap " + std::to_string(cap));
  }
  const Vector residual = batch_mean_energy(batch, spec) - alpha;
  const Matrix jj = concatenated_jacobian(batch, spec);
  Matrix out = -(gamma / static_cast<double>(n_particles)) * (jj.transpose() * jj);
  for (Index n = 0; n < n_particles; ++n) {
    out.block(n * d, n * d, d, d) +=
        Matrix::Identity(d, d) - gamma * spec.weighted_hessian(batch.row(n).transpose(), residual);
  }
  return out;
}

LogDet<double> step_logdet_mf_dense(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec,
                                    double gamma, Index cap) {
  LogDet<double> ld = log_abs_det(mf_step_jacobian_dense(batch, alpha, spec, gamma, cap));
  check_regular(ld, -1);
  return ld;
}

LogDet<double> step_logdet_projected(const RowMatrix& batch, const Mask& active, const Vector& alpha,
                                     const EnergySpec& spec, double gamma, bool mean_field) {
  check_batch(batch, alpha, spec);
  if (active.rows() != batch.rows() || active.cols() != batch.cols()) {
    throw DimensionError("projected log-determinant: mask shape does not match batch");
  }
  const auto jacobians = all_jacobians(batch, spec);
  if (mean_field) {
    const Vector residual = batch_mean_energy(batch, spec) - alpha;
    return detail::coupled_logdet(batch, jacobians, residual, spec, gamma, &active);
  }
  LogDet<double> total;
  for (Index n = 0; n < batch.rows(); ++n) {
    const RowMatrix single = batch.row(n);
    const Mask mask_row = active.row(n);
    const Vector residual = spec.value(batch.row(n).transpose()) - alpha;
    try {
      total += detail::coupled_logdet(single, {jacobians[static_cast<std::size_t>(n)]}, residual, spec, gamma,
                                      &mask_row);
    } catch (const SingularFlowError& e) {
      throw SingularFlowError(e.what(), n);
    }
  }
  return total;
}

LogDet<double> step_logdet_projected_dense(const RowMatrix& batch, const Mask& active, const Vector& alpha,
                                           const EnergySpec& spec, double gamma, bool mean_field, Index cap) {
  check_batch(batch, alpha, spec);
  const Index n_particles = batch.rows();
  const Index d = spec.dim();
  Matrix full;
  if (mean_field) {
    full = mf_step_jacobian_dense(batch, alpha, spec, gamma, cap);
  } else {
    if (n_particles * d > cap) throw OracleScaleError("dense projected Jacobian exceeds cap");
    full = Matrix::Zero(n_particles * d, n_particles * d);
    for (Index n = 0; n < n_particles; ++n) {
      const auto x = batch.row(n).transpose();
      const Vector residual = spec.value(x) - alpha;
      const Matrix jac = spec.jacobian(x);
      full.block(n * d, n * d, d, d) =
          Matrix::Identity(d, d) - gamma * (spec.weighted_hessian(x, residual) + jac.transpose() * jac);
    }
  }
  std::vector<Index> idx;
  for (Index n = 0; n < n_particles; ++n) {
    for (Index j = 0; j < d; ++j) {
      if (active(n, j)) idx.push_back(n * d + j);
    }
  }
  const Matrix sub = full(idx, idx);
  return log_abs_det(sub);
}

// ---------------------------------------------------------------------------
// FlowTrace

FlowTrace::FlowTrace(FlowMode mode, Index replicas, Index particles_per_replica)
    : mode_(mode), replicas_(replicas), particles_(particles_per_replica) {
  if (replicas < 1 || particles_per_replica < 1) throw InputError("FlowTrace: replicas and particles must be >= 1");
  accumulated_.push_back(Vector::Zero(replicas));
}

void FlowTrace::append(const Vector& step_logdets) {
  if (step_logdets.size() != replicas_) {
    throw InputError("FlowTrace: step has " + std::to_string(step_logdets.size()) + " values, expected " +
                     std::to_string(replicas_));
  }
  steps_.push_back(step_logdets);
  accumulated_.push_back(accumulated_.back() + step_logdets);
}

const Vector& FlowTrace::step(Index t) const {
  if (t < 0 || t >= steps()) throw InputError("FlowTrace: step index out of range");
  return steps_[static_cast<std::size_t>(t)];
}

const Vector& FlowTrace::accumulated(Index t) const {
  if (t < 0 || t > steps()) throw InputError("FlowTrace: step index out of range");
  return accumulated_[static_cast<std::size_t>(t)];
}

FlowTrace FlowTrace::concatenate(const std::vector<FlowTrace>& parts) {
  if (parts.empty()) throw InputError("FlowTrace::concatenate: nothing to concatenate");
  Index total = 0;
  Index longest = 0;
  for (const auto& p : parts) {
    if (p.mode_ != parts.front().mode_ || p.particles_ != parts.front().particles_) {
      throw InputError("FlowTrace::concatenate: incompatible traces");
    }
    total += p.replicas_;
    longest = std::max(longest, p.steps());
  }
  FlowTrace out(parts.front().mode_, total, parts.front().particles_);
  for (Index t = 0; t < longest; ++t) {
    Vector v(total);
    Index offset = 0;
    for (const auto& p : parts) {
      v.segment(offset, p.replicas_) = t < p.steps() ? p.step(t) : Vector::Zero(p.replicas_);
      offset += p.replicas_;
    }
    out.append(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Entropy and KL

EntropyEstimate entropy_estimate(double init_entropy, const FlowTrace& trace, Index step,
                                 EntropyNormalization normalization, Index dim) {
  if (step < 0 || step > trace.steps()) throw InputError("entropy_estimate: step beyond trace length");
  const Vector values = init_entropy + trace.accumulated(step).array();
  double scale = 1.0;
  if (normalization == EntropyNormalization::per_sample) {
    scale = 1.0 / static_cast<double>(trace.particles_per_replica());
  } else if (normalization == EntropyNormalization::rate) {
    scale = 1.0 / static_cast<double>(trace.particles_per_replica() * dim);
  }
  EntropyEstimate est;
  est.normalization = normalization;
  est.replicas = values.size();
  est.mean = scale * values.mean();
  if (values.size() > 1) {
    const double var = (values.array() - values.mean()).square().sum() / static_cast<double>(values.size() - 1);
    est.std_error = scale * std::sqrt(var / static_cast<double>(values.size()));
  }
  return est;
}

namespace {

// Mean and standard error over the finite entries; count of the rest.
struct FiniteMean {
  double mean = 0;
  double std_error = 0;
  Index count = 0;
  Index rejected = 0;
};

template <class Value>
FiniteMean finite_mean(Index size, Value value) {
  FiniteMean out;
  double sum = 0;
  for (Index i = 0; i < size; ++i) {
    const double v = value(i);
    if (std::isfinite(v)) {
      sum += v;
      ++out.count;
    } else {
      ++out.rejected;
    }
  }
  if (out.count == 0) return out;
  out.mean = sum / static_cast<double>(out.count);
  double ss = 0;
  for (Index i = 0; i < size; ++i) {
    const double v = value(i);
    if (std::isfinite(v)) ss += (v - out.mean) * (v - out.mean);
  }
  if (out.count > 1) {
    out.std_error = std::sqrt(ss / static_cast<double>(out.count - 1) / static_cast<double>(out.count));
  }
  return out;
}

KlEstimate assemble_kl(const EntropyEstimate& entropy, const FiniteMean& loglik, double offset) {
  KlEstimate out;
  out.neg_entropy = -entropy.mean;
  out.se_neg_entropy = entropy.std_error;
  out.rejected = loglik.rejected;
  if (loglik.count == 0) {
    out.expected_log_likelihood = -std::numeric_limits<double>::infinity();
    out.kl = std::numeric_limits<double>::infinity();
    return out;
  }
  out.expected_log_likelihood = offset + loglik.mean;
  out.se_log_likelihood = loglik.std_error;
  out.kl = out.neg_entropy - out.expected_log_likelihood;
  out.se_kl = std::hypot(out.se_neg_entropy, out.se_log_likelihood);
  return out;
}

}  // namespace

KlEstimate reverse_kl(const EntropyEstimate& entropy, std::span<const double> log_densities) {
  const auto stats = finite_mean(static_cast<Index>(log_densities.size()),
                                 [&](Index i) { return log_densities[static_cast<std::size_t>(i)]; });
  return assemble_kl(entropy, stats, 0.0);
}

KlEstimate reverse_kl_paired(const EntropyEstimate& entropy, std::span<const double> log_densities,
                             std::span<const double> initial_log_densities, double initial_expectation) {
  if (log_densities.size() != initial_log_densities.size()) {
    throw InputError("reverse_kl_paired: sample counts differ");
  }
  if (!std::isfinite(initial_expectation)) throw InputError("reverse_kl_paired: initial expectation must be finite");
  const auto stats = finite_mean(static_cast<Index>(log_densities.size()), [&](Index i) {
    const auto s = static_cast<std::size_t>(i);
    return log_densities[s] - initial_log_densities[s];
  });
  return assemble_kl(entropy, stats, initial_expectation);
}

// ---------------------------------------------------------------------------
// Bound diagnostics

LipschitzEstimate local_lipschitz(const RowMatrix& batch, const EnergySpec& spec) {
  LipschitzEstimate est;
  const Index k = spec.size();
  const Index particles_for_hessian = spec.hessian_is_constant() ? std::min<Index>(1, batch.rows()) : batch.rows();
  for (Index n = 0; n < batch.rows(); ++n) {
    const auto x = batch.row(n).transpose();
    est.beta = std::max(est.beta, spectral_norm(spec.jacobian(x)));
    if (n >= particles_for_hessian) continue;
    for (Index c = 0; c < k; ++c) {
      const Vector unit = Vector::Unit(k, c);
      double norm = 0;
      if (spec.dim() <= 256) {
        norm = symmetric_spectral_norm(spec.weighted_hessian(x, unit));
      } else {
        const SparseMatrix h = spec.weighted_hessian_sparse(x, unit);
        Vector row_sums = Vector::Zero(spec.dim());
        for (Index col = 0; col < h.outerSize(); ++col) {
          for (SparseMatrix::InnerIterator it(h, col); it; ++it) row_sums(it.row()) += std::abs(it.value());
        }
        norm = row_sums.maxCoeff();
      }
      est.eta = std::max(est.eta, norm);
    }
  }
  return est;
}

BoundDiagnostics theorem1_diagnostic(double init_entropy_joint, Index particles, Index dim, Index num_stats,
                                     double gamma, std::span<const double> mean_distance,
                                     std::span<const double> beta_local, std::span<const double> eta_local) {
  const std::size_t steps = mean_distance.size();
  auto at = [](std::span<const double> s, std::size_t t) { return s.size() == 1 ? s[0] : s[t]; };
  if ((beta_local.size() != 1 && beta_local.size() != steps) || (eta_local.size() != 1 && eta_local.size() != steps)) {
    throw InputError("theorem1_diagnostic: constant sequences must have one entry or one per step");
  }
  const double nd = static_cast<double>(particles * dim);
  const double k = static_cast<double>(num_stats);
  BoundDiagnostics out;
  double beta = 0;
  double eta = 0;
  double distance_sum = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    beta = std::max(beta, at(beta_local, t));
    eta = std::max(eta, at(eta_local, t));
    out.beta.push_back(beta);
    out.eta.push_back(eta);
    const double penalty = eta * std::sqrt(k) * distance_sum + (k / nd) * beta * beta * static_cast<double>(t);
    out.bound_rate.push_back(init_entropy_joint / nd - 2.0 * gamma * penalty);
    distance_sum += mean_distance[t];
  }
  return out;
}

double logdet_taylor_remainder(const Matrix& a, double gamma) {
  const Matrix m = Matrix::Identity(a.rows(), a.cols()) - gamma * a;
  return std::abs(log_abs_det(m).log_abs + gamma * a.trace());
}

}  // namespace mgdm
