#pragma once

#include "mgdm/energy.hpp"
#include "mgdm/likelihood.hpp"
#include "mgdm/models.hpp"
#include "mgdm/types.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mgdm {

enum class DescentMode {
  mgdm,        ///< every particle descends its own loss 0.5 ||Phi(x) - alpha||^2
  mean_field,  ///< particles descend (N/2) ||mean_n Phi(x_n) - alpha||^2 jointly
};

std::string to_string(DescentMode mode);
DescentMode parse_descent_mode(const std::string& text);

enum class LogDetMethod {
  lemma,  ///< block-diagonal plus low-rank evaluation (any N)
  dense,  ///< dense d x d factorization per particle; per-sample mode only
};

/// N sample paths plus the component mask of the last projected update.
struct ParticleBatch {
  RowMatrix paths;
  Mask active;
  Index step = 0;

  ParticleBatch() = default;
  explicit ParticleBatch(RowMatrix initial);

  Index size() const { return paths.rows(); }
  Index dim() const { return paths.cols(); }
};

struct DescentConfig {
  double step_size = 0.0;  ///< gamma; 0 picks default_step_size(initial batch, step_scale)
  double step_scale = 0.02;
  Index max_steps = 100;
  /// Stop once the energy distance is <= tolerance. +inf disables the
  /// tolerance test so the run always takes max_steps.
  double tolerance = std::numeric_limits<double>::infinity();
  Index batch_size = 1;
  DescentMode mode = DescentMode::mean_field;
  bool projected = false;
  InitDistribution init = InitDistribution::gaussian(1.0);
  std::uint64_t seed = 0;

  bool track_likelihood = true;
  LogDetMethod logdet_method = LogDetMethod::lemma;
  /// Evaluate log-determinants every stride steps (value times stride in
  /// between). 0 means every step for d <= 256 and every 5th step above.
  Index logdet_stride = 0;
  bool track_bound_constants = false;
  /// Abort once the loss has grown this many consecutive steps.
  Index divergence_patience = 10;

  void validate() const;
  Index effective_logdet_stride(Index dim) const;
};

struct StepRecord {
  Index step = 0;
  double loss = 0;
  /// ||mean energy - alpha|| in mean-field mode; mean of per-particle
  /// distances in MGDM mode.
  double energy_distance = 0;
  Vector particle_distances;
  Vector log_density;  ///< target log-density per particle (when a target is given)
  double beta_local = 0;
  double eta_local = 0;
  Index updated_components = 0;  ///< components that took the gradient value
};

struct DescentResult {
  ParticleBatch batch;
  std::vector<StepRecord> records;  ///< one per visited state, records[0] is the initial batch
  FlowTrace trace;
  double step_size = 0;
  bool converged = false;
  Index steps_taken = 0;
  Index sign_flips = 0;  ///< steps whose Jacobian determinant changed sign
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, DescentResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const DescentResult& partial() const { return partial_; }

 private:
  DescentResult partial_;
};

/// x - gamma J(x)^T (Phi(x) - alpha).
Vector gd_step(ConstVectorRef x, const Vector& alpha, const EnergySpec& spec, double gamma);

/// x_n - gamma J(x_n)^T (mean_m Phi(x_m) - alpha) for every row.
RowMatrix mf_step(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec, double gamma);

struct ProjectedUpdate {
  RowMatrix paths;
  Mask active;  ///< true where the gradient value was kept
};

/// Gradient step that keeps the previous value of any component whose
/// update would be negative. Input must be nonnegative.
ProjectedUpdate projected_step(const RowMatrix& batch, const Vector& alpha, const EnergySpec& spec, double gamma,
                               DescentMode mode);

/// gamma_0 = scale / mean_n ||J(x_n) J(x_n)^T||_2.
double default_step_size(const RowMatrix& batch, const EnergySpec& spec, double scale);

/// Samples the initial batch from config.init and runs the configured kernel
/// until max_steps or the tolerance is met. A zero step size is calibrated on
/// a separate pilot batch from the same seed.
DescentResult run_descent(const DescentConfig& config, const Vector& alpha, const EnergySpec& spec,
                          const TargetModel* target = nullptr);

/// Same as run_descent, from a given initial batch. A zero step size is
/// calibrated on that batch, which makes gamma a function of the starting
/// point; pass a fixed step size when the likelihood trace matters.
DescentResult run_descent_from(RowMatrix initial, const DescentConfig& config, const Vector& alpha,
                               const EnergySpec& spec, const TargetModel* target = nullptr);

}  // namespace mgdm
