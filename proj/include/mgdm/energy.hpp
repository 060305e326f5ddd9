#pragma once

#include "mgdm/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mgdm {

/// Differentiable statistic map x in R^d -> Phi(x) in R^K.
///
/// Implementations must be pure: the same x always yields the same value,
/// Jacobian and weighted Hessian, so evaluators may be called concurrently.
class EnergySpec {
 public:
  virtual ~EnergySpec() = default;

  /// Number of statistics K.
  virtual Index size() const = 0;
  /// Path length d.
  virtual Index dim() const = 0;

  virtual Vector value(ConstVectorRef x) const = 0;
  /// K x d matrix of first derivatives.
  virtual Matrix jacobian(ConstVectorRef x) const = 0;
  /// Sum_k w_k H_{Phi_k}(x), a symmetric d x d matrix.
  virtual Matrix weighted_hessian(ConstVectorRef x, ConstVectorRef w) const = 0;

  /// Same as weighted_hessian, in compressed form. Implementations with a
  /// banded Hessian override this to avoid the dense d x d intermediate.
  virtual SparseMatrix weighted_hessian_sparse(ConstVectorRef x, ConstVectorRef w) const;

  /// True when the Hessians do not depend on x (quadratic statistics).
  virtual bool hessian_is_constant() const { return false; }
  /// Half-bandwidth of every H_{Phi_k}, or -1 when they are dense.
  virtual Index hessian_bandwidth() const { return -1; }

  virtual std::vector<std::string> component_names() const;
  virtual std::string describe() const = 0;

 protected:
  void check_point(ConstVectorRef x) const;
  void check_weights(ConstVectorRef w) const;
};

using EnergyPtr = std::shared_ptr<const EnergySpec>;

enum class SeriesTransform { identity, square };

/// One statistic (1/d) sum_{i >= lag} z_i z_{i-lag}, where z = f(x) for the
/// elementwise transform f, optionally centered by its own sample mean.
struct LaggedMoment {
  SeriesTransform transform = SeriesTransform::identity;
  Index lag = 0;
  bool centered = false;

  std::string name() const;
};

/// Energy made of lagged second moments of x and of x^2.
///
/// Normalization is 1/d for every lag and sums run over valid indices only
/// (no wrap-around). Components appear in the order they were declared.
class MomentEnergy : public EnergySpec {
 public:
  MomentEnergy(Index dim, std::vector<LaggedMoment> components);

  Index size() const override { return static_cast<Index>(components_.size()); }
  Index dim() const override { return dim_; }

  Vector value(ConstVectorRef x) const override;
  Matrix jacobian(ConstVectorRef x) const override;
  Matrix weighted_hessian(ConstVectorRef x, ConstVectorRef w) const override;
  SparseMatrix weighted_hessian_sparse(ConstVectorRef x, ConstVectorRef w) const override;

  bool hessian_is_constant() const override;
  Index hessian_bandwidth() const override;

  std::vector<std::string> component_names() const override;
  std::string describe() const override;

  const std::vector<LaggedMoment>& components() const { return components_; }

 private:
  Index dim_;
  std::vector<LaggedMoment> components_;
};

/// Autocovariances of x at the given lags. The default lag order {1, 0}
/// gives the AR(1) sufficient statistics (lag-1 product, mean square).
class AcfEnergy : public MomentEnergy {
 public:
  AcfEnergy(Index dim, std::vector<Index> lags = {1, 0});
  const std::vector<Index>& lags() const { return lags_; }

 private:
  std::vector<Index> lags_;
};

struct SquaredAcfOptions {
  Index max_lag = 20;
  bool center_signal = false;
  bool center_squared = false;
};

/// Stylized-facts energy for returns. Component order:
///   0: variance of x (lag-0 moment)
///   1: autocovariance of x at lag 1
///   2..L+1: autocovariance of x^2 at lags 1..L
/// Moments are uncentered unless the corresponding flag is set.
class SquaredAcfEnergy : public MomentEnergy {
 public:
  SquaredAcfEnergy(Index dim, SquaredAcfOptions options = {});
  const SquaredAcfOptions& options() const { return options_; }

 private:
  SquaredAcfOptions options_;
};

/// Derivative evaluators computed by central finite differences of the
/// wrapped value map only. Test and self-check oracle; never used by the
/// sampler itself.
class FiniteDiffEnergyAdapter : public EnergySpec {
 public:
  explicit FiniteDiffEnergyAdapter(EnergyPtr inner, double relative_step = 1e-5,
                                   double hessian_relative_step = 1e-3);

  Index size() const override { return inner_->size(); }
  Index dim() const override { return inner_->dim(); }
  Vector value(ConstVectorRef x) const override { return inner_->value(x); }
  Matrix jacobian(ConstVectorRef x) const override;
  Matrix weighted_hessian(ConstVectorRef x, ConstVectorRef w) const override;
  std::vector<std::string> component_names() const override { return inner_->component_names(); }
  std::string describe() const override { return "finite-difference(" + inner_->describe() + ")"; }

 private:
  double step_for(double xi, double relative) const;

  EnergyPtr inner_;
  double relative_step_;
  double hessian_relative_step_;
};

// Free-function forms of the autocovariance statistics.
Vector acf_value(ConstVectorRef x, const std::vector<Index>& lags);
Matrix acf_jacobian(ConstVectorRef x, const std::vector<Index>& lags);
Matrix acf_weighted_hessian(ConstVectorRef x, const std::vector<Index>& lags, ConstVectorRef w);

/// (1/N) sum_n Phi(x^{(n)}) over the rows of batch.
Vector batch_mean_energy(const RowMatrix& batch, const EnergySpec& spec);
/// Per-particle energies, one row per particle (N x K).
RowMatrix particle_energies(const RowMatrix& batch, const EnergySpec& spec);

struct TargetEnergy {
  Vector alpha;   ///< mean energy over the sample paths
  Vector stddev;  ///< per-component sample standard deviation (0 when M = 1)
  Index paths = 0;

  /// Euclidean tolerance stddev * sqrt(K), in energy units.
  double suggested_tolerance() const;
};

/// Mean and spread of Phi over the rows of data.
TargetEnergy estimate_target(const RowMatrix& data, const EnergySpec& spec);

}  // namespace mgdm
