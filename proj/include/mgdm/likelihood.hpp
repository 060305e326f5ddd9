#pragma once

#include "mgdm/energy.hpp"
#include "mgdm/linalg.hpp"
#include "mgdm/types.hpp"

#include <span>
#include <vector>

namespace mgdm {

// ---------------------------------------------------------------------------
// Per-step log-determinants of the update map.
//
// For the single-particle step g(x) = x - gamma J^T (Phi(x) - alpha) the
// Jacobian is I - gamma (sum_k H_k (Phi_k - alpha_k) + J^T J). The coupled
// mean-field step has the N d x N d Jacobian
//   I - gamma blockdiag_n(sum_k H_k(x_n) r_k) - (gamma / N) JJ^T JJ,
// with r = mean energy - alpha and JJ the K x N d concatenation of the
// per-particle Jacobians.

/// Dense log|det| of the single-particle step Jacobian.
LogDet<double> step_logdet_single(ConstVectorRef x, const Vector& alpha, const EnergySpec& spec,
                                  double gamma);

/// Block-diagonal plus rank-K evaluation of the coupled step determinant:
/// sum_n log|det A_n| + log|det(I_K - (gamma/N) sum_n J_n A_n^{-1} J_n^T)|,
/// A_n = I_d - gamma sum_k H_k(x_n) r_k. Never forms the N d x N d matrix.
LogDet<double> step_logdet_mf_fast(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec,
                                   double gamma);

/// The full N d x N d Jacobian of the coupled step. Oracle only.
Matrix mf_step_jacobian_dense(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec,
                              double gamma, Index cap = 4096);
LogDet<double> step_logdet_mf_dense(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec,
                                    double gamma, Index cap = 4096);

/// Log-determinant of a projected step, restricted to the components marked
/// active (the ones that took the gradient value). In per-sample mode each
/// particle contributes its own single-particle term.
LogDet<double> step_logdet_projected(const RowMatrix& batch, const Mask& active, const Vector& alpha,
                                     const EnergySpec& spec, double gamma, bool mean_field);
/// Dense oracle for step_logdet_projected.
LogDet<double> step_logdet_projected_dense(const RowMatrix& batch, const Mask& active, const Vector& alpha,
                                           const EnergySpec& spec, double gamma, bool mean_field,
                                           Index cap = 4096);

/// K x N d concatenation [J(x_1) ... J(x_N)].
Matrix concatenated_jacobian(const RowMatrix& batch, const EnergySpec& spec);

namespace detail {

/// Coupled determinant from precomputed Jacobians and residual r = mean
/// energy - alpha. A null mask means every component is active.
LogDet<double> coupled_logdet(const RowMatrix& batch, const std::vector<Matrix>& jacobians, const Vector& residual,
                              const EnergySpec& spec, double gamma, const Mask* active);

}  // namespace detail

// ---------------------------------------------------------------------------
// Flow bookkeeping

enum class FlowMode { per_sample, per_batch };

/// Running sums of per-step log|det J| for each Monte Carlo replica. A
/// replica is one particle in per-sample (MGDM) mode and one coupled batch
/// in per-batch (mean-field) mode.
class FlowTrace {
 public:
  FlowTrace() = default;
  FlowTrace(FlowMode mode, Index replicas, Index particles_per_replica);

  void append(const Vector& step_logdets);

  FlowMode mode() const { return mode_; }
  Index replicas() const { return replicas_; }
  Index particles_per_replica() const { return particles_; }
  Index steps() const { return static_cast<Index>(steps_.size()); }

  const Vector& step(Index t) const;
  /// Sum of the first t step values; accumulated(0) is zero.
  const Vector& accumulated(Index t) const;

  /// Places traces side by side as additional replicas. Shorter traces are
  /// padded with zero steps (a stopped flow is the identity).
  static FlowTrace concatenate(const std::vector<FlowTrace>& parts);

 private:
  FlowMode mode_ = FlowMode::per_sample;
  Index replicas_ = 0;
  Index particles_ = 1;
  std::vector<Vector> steps_;
  std::vector<Vector> accumulated_{};
};

enum class EntropyNormalization { total, per_sample, rate };

struct EntropyEstimate {
  double mean = 0;
  double std_error = 0;
  EntropyNormalization normalization = EntropyNormalization::total;
  Index replicas = 0;
};

/// H(q_t) = H(q_0) + E[sum_{s<t} log|det J_s|], estimated over replicas.
/// init_entropy is the entropy of one replica (N particles jointly).
EntropyEstimate entropy_estimate(double init_entropy, const FlowTrace& trace, Index step,
                                 EntropyNormalization normalization, Index dim);

struct KlEstimate {
  double neg_entropy = 0;
  double se_neg_entropy = 0;
  double expected_log_likelihood = 0;
  double se_log_likelihood = 0;
  double kl = 0;  ///< exactly neg_entropy - expected_log_likelihood
  double se_kl = 0;
  Index rejected = 0;  ///< samples with log-density -inf, excluded
};

/// Reverse KL -H(q) - E_q[log p] from an entropy estimate and target
/// log-densities evaluated on samples of q. Use a per-sample entropy so the
/// two terms are on the same scale.
KlEstimate reverse_kl(const EntropyEstimate& entropy, std::span<const double> log_densities);

/// Same quantity with the initial law as a control variate: E_q[log p] is
/// estimated as initial_expectation + mean(log p(x_t) - log p(x_0)), where
/// x_t is the image of x_0 and initial_expectation = E_{q_0}[log p] is exact.
/// Pairs with a non-finite entry count as rejected.
KlEstimate reverse_kl_paired(const EntropyEstimate& entropy, std::span<const double> log_densities,
                             std::span<const double> initial_log_densities, double initial_expectation);

// ---------------------------------------------------------------------------
// Entropy-rate lower bound diagnostic

struct LipschitzEstimate {
  double beta = 0;  ///< max over particles of ||J_Phi||_2
  double eta = 0;   ///< max over particles and k of ||H_{Phi_k}||_2 (or an upper bound)
};

/// Batch-local constants. eta is exact for d <= 256 and otherwise bounded
/// by the maximum absolute row sum.
LipschitzEstimate local_lipschitz(const RowMatrix& batch, const EnergySpec& spec);

struct BoundDiagnostics {
  std::vector<double> beta;        ///< running max of local beta
  std::vector<double> eta;         ///< running max of local eta
  std::vector<double> bound_rate;  ///< lower bound on H / (N d), nats
};

/// bound[t] = H_0/(N d) - 2 gamma (eta sqrt(K) sum_{s<t} E||mean energy - alpha||
///                                  + (K / (N d)) beta^2 t)
/// evaluated with running maxima of the local constants.
BoundDiagnostics theorem1_diagnostic(double init_entropy_joint, Index particles, Index dim, Index num_stats,
                                     double gamma, std::span<const double> mean_distance,
                                     std::span<const double> beta_local, std::span<const double> eta_local);

/// |log det(I - gamma A) + gamma tr A|, the second-order Taylor remainder.
double logdet_taylor_remainder(const Matrix& a, double gamma);

}  // namespace mgdm
