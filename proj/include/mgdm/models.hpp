#pragma once

#include "mgdm/rng.hpp"
#include "mgdm/types.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mgdm {

/// x_i = sum_j phi_j x_{i-j} + sigma * e_i with standard normal e_i.
struct ArProcess {
  std::vector<double> phi;
  double sigma = 1.0;
  Index length = 0;

  /// Innovation scale chosen so the stationary marginal variance is one.
  static ArProcess unit_variance(std::vector<double> phi, Index length);

  Index order() const { return static_cast<Index>(phi.size()); }
  /// All roots of 1 - sum_j phi_j z^j lie strictly outside the unit circle.
  bool is_stationary() const;
  /// Throws ModelError unless the process is well defined and stationary.
  void validate() const;
  /// Stationary autocovariances gamma_0..gamma_{max_lag}.
  Vector autocovariance(Index max_lag) const;
  /// Entropy rate of the stationary Gaussian process, 0.5 log(2 pi e sigma^2).
  double entropy_rate() const;
};

/// Draws the first p values from the exact stationary joint, the rest by
/// the recursion.
Vector ar_sample(const ArProcess& proc, Rng& rng);
Vector ar_sample(const ArProcess& proc, std::uint64_t seed);

/// Exact Gaussian log-density of a path: the stationary joint of the first
/// min(p, d) values times the conditionals of the recursion.
double ar_log_density(const ArProcess& proc, ConstVectorRef x);

/// Log-density of x_{p+1..d} given x_{1..p} (no initial-block term).
double ar_conditional_log_density(const ArProcess& proc, ConstVectorRef x);

/// E[ar_log_density(proc, x)] for x ~ N(0, variance I_d), in closed form.
double ar_expected_log_density_white(const ArProcess& proc, double variance);

/// dr = kappa (theta - r) dt + sigma sqrt(r) dW, observed every dt.
struct CirProcess {
  double kappa = 0.5;
  double theta = 1.0;
  double sigma = 1.0;
  double dt = 1.0;
  Index length = 0;

  void validate() const;
  /// Gamma stationary law: shape 2 kappa theta / sigma^2, rate 2 kappa / sigma^2.
  double stationary_shape() const;
  double stationary_rate() const;
  /// Moments of r_{t+dt} given r_t.
  double conditional_mean(double r_prev) const;
  double conditional_variance(double r_prev) const;
};

/// log I_nu(z) for nu > -1 and z >= 0, evaluated without overflow.
double log_bessel_i(double nu, double z);

double cir_stationary_log_density(const CirProcess& proc, double r);
double cir_transition_log_density(const CirProcess& proc, double r_next, double r_prev);
/// Stationary gamma term at x_1 plus the transition terms.
double cir_log_density(const CirProcess& proc, ConstVectorRef x);
double cir_sample_transition(const CirProcess& proc, double r_prev, Rng& rng);
Vector cir_sample(const CirProcess& proc, Rng& rng);
Vector cir_sample(const CirProcess& proc, std::uint64_t seed);

/// Closed-form density model the generated samples are scored against.
class TargetModel {
 public:
  TargetModel(ArProcess proc);  // NOLINT(google-explicit-constructor)
  TargetModel(CirProcess proc);  // NOLINT(google-explicit-constructor)

  Index length() const;
  double log_density(ConstVectorRef x) const;
  Vector sample(Rng& rng) const;
  RowMatrix sample_paths(Index count, std::uint64_t seed) const;
  bool positive_support() const { return std::holds_alternative<CirProcess>(model_); }
  std::string describe() const;

  const std::variant<ArProcess, CirProcess>& model() const { return model_; }

 private:
  std::variant<ArProcess, CirProcess> model_;
};

/// High-entropy starting law of the descent, i.i.d. across components.
struct InitDistribution {
  enum class Kind { gaussian_white, exponential, truncated_gaussian };

  Kind kind = Kind::gaussian_white;
  double variance = 1.0;  ///< gaussian_white
  double rate = 1.0;      ///< exponential
  double location = 0.0;  ///< truncated_gaussian: mu of the untruncated normal
  double scale = 1.0;     ///< truncated_gaussian: s of the untruncated normal

  static InitDistribution gaussian(double variance);
  static InitDistribution exponential_dist(double rate);
  static InitDistribution truncated_gaussian(double location, double scale);

  /// Maximum-entropy law on [0, inf) with the given mean and standard
  /// deviation: exponential when they agree to 1e-3 relative (or when
  /// std > mean, where no truncated Gaussian exists), otherwise the
  /// moment-matched Gaussian truncated to [0, inf).
  static InitDistribution fit_positive(double mean, double stddev);

  bool positive_support() const { return kind != Kind::gaussian_white; }
  void validate() const;
  double mean() const;
  double stddev() const;
  std::string describe() const;
};

Vector init_sample(const InitDistribution& dist, Index d, Rng& rng);
RowMatrix init_sample_batch(const InitDistribution& dist, Index count, Index d, Rng& rng);
double init_log_density(const InitDistribution& dist, ConstVectorRef x);
/// Differential entropy of the d-dimensional product law, in nats.
double init_entropy(const InitDistribution& dist, Index d);

/// E[target.log_density(x)] for x drawn from dist, when a closed form is
/// available (AR target with Gaussian white-noise start); otherwise empty.
std::optional<double> expected_init_log_density(const TargetModel& target, const InitDistribution& dist);

}  // namespace mgdm
