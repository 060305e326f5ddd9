#include "mgdm/models.hpp"
#include "mgdm/special.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace mgdm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

// ---------------------------------------------------------------------------
// AR(p)

ArProcess ArProcess::unit_variance(std::vector<double> phi, Index length) {
  ArProcess proc{std::move(phi), 1.0, length};
  proc.validate();
  proc.sigma = 1.0 / std::sqrt(proc.autocovariance(0)(0));
  return proc;
}

bool ArProcess::is_stationary() const {
  const Index p = order();
  if (p == 0) return true;
  Matrix companion = Matrix::Zero(p, p);
  for (Index j = 0; j < p; ++j) companion(0, j) = phi[static_cast<std::size_t>(j)];
  for (Index j = 1; j < p; ++j) companion(j, j - 1) = 1.0;
  Eigen::EigenSolver<Matrix> eig(companion, false);
  // Roots of 1 - sum phi_j z^j are the reciprocals of the companion eigenvalues.
  return eig.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
}

void ArProcess::validate() const {
  for (double c : phi) {
    if (!std::isfinite(c)) throw ModelError("AR: coefficients must be finite");
  }
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw ModelError("AR: sigma must be finite and >= 0");
  if (length < 1) throw ModelError("AR: path length must be positive");
  if (!is_stationary()) throw ModelError("AR: coefficients are not stationary");
}

Vector ArProcess::autocovariance(Index max_lag) const {
  const Index p = order();
  const double s2 = sigma * sigma;
  Vector gamma = Vector::Zero(std::max(max_lag, p) + 1);
  if (p == 0) {
    gamma(0) = s2;
  } else {
    // Yule-Walker system for gamma_0..gamma_p.
    Matrix a = Matrix::Identity(p + 1, p + 1);
    for (Index k = 0; k <= p; ++k) {
      for (Index j = 1; j <= p; ++j) a(k, std::abs(k - j)) -= phi[static_cast<std::size_t>(j - 1)];
    }
    Vector rhs = Vector::Zero(p + 1);
    rhs(0) = s2;
    gamma.head(p + 1) = a.fullPivLu().solve(rhs);
    for (Index k = p + 1; k < gamma.size(); ++k) {
      double acc = 0;
      for (Index j = 1; j <= p; ++j) acc += phi[static_cast<std::size_t>(j - 1)] * gamma(k - j);
      gamma(k) = acc;
    }
  }
  return gamma.head(max_lag + 1);
}

double ArProcess::entropy_rate() const {
  return 0.5 * (kLog2Pi + 1.0 + std::log(sigma * sigma));
}

namespace {

Matrix toeplitz(const Vector& gamma, Index m) {
  Matrix t(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) t(i, j) = gamma(std::abs(i - j));
  }
  return t;
}

double ar_prediction(const ArProcess& proc, ConstVectorRef x, Index i) {
  double mean = 0;
  for (Index j = 1; j <= proc.order(); ++j) mean += proc.phi[static_cast<std::size_t>(j - 1)] * x(i - j);
  return mean;
}

}  // namespace

Vector ar_sample(const ArProcess& proc, Rng& rng) {
  proc.validate();
  const Index d = proc.length;
  Vector x = Vector::Zero(d);
  if (proc.sigma == 0) return x;
  std::normal_distribution<double> normal;
  const Index m = std::min(proc.order(), d);
  if (m > 0) {
    Eigen::LLT<Matrix> llt(toeplitz(proc.autocovariance(m), m));
    if (llt.info() != Eigen::Success) throw ModelError("AR: stationary covariance is not positive definite");
    Vector z(m);
    for (Index i = 0; i < m; ++i) z(i) = normal(rng);
    x.head(m) = llt.matrixL() * z;
  }
  for (Index i = m; i < d; ++i) x(i) = ar_prediction(proc, x, i) + proc.sigma * normal(rng);
  return x;
}

Vector ar_sample(const ArProcess& proc, std::uint64_t seed) {
  Rng rng(seed);
  return ar_sample(proc, rng);
}

double ar_conditional_log_density(const ArProcess& proc, ConstVectorRef x) {
  proc.validate();
  if (x.size() != proc.length) throw DimensionError("AR: path length mismatch");
  if (!(proc.sigma > 0)) throw ModelError("AR: log-density requires sigma > 0");
  const double s2 = proc.sigma * proc.sigma;
  double lp = 0;
  for (Index i = proc.order(); i < x.size(); ++i) {
    const double r = x(i) - ar_prediction(proc, x, i);
    lp += -0.5 * (kLog2Pi + std::log(s2)) - 0.5 * r * r / s2;
  }
  return lp;
}

double ar_log_density(const ArProcess& proc, ConstVectorRef x) {
  double lp = ar_conditional_log_density(proc, x);
  const Index m = std::min(proc.order(), x.size());
  if (m > 0) {
    Eigen::LLT<Matrix> llt(toeplitz(proc.autocovariance(m), m));
    if (llt.info() != Eigen::Success) throw ModelError("AR: stationary covariance is not positive definite");
    const Vector w = llt.matrixL().solve(x.head(m));
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    lp += -0.5 * (static_cast<double>(m) * kLog2Pi + logdet) - 0.5 * w.squaredNorm();
  }
  return lp;
}

double ar_expected_log_density_white(const ArProcess& proc, double variance) {
  proc.validate();
  if (!(proc.sigma > 0)) throw ModelError("AR: log-density requires sigma > 0");
  if (!(variance >= 0)) throw ModelError("AR: white-noise variance must be >= 0");
  const double s2 = proc.sigma * proc.sigma;
  double phi2 = 0;
  for (double c : proc.phi) phi2 += c * c;
  const Index m = std::min(proc.order(), proc.length);
  double lp = static_cast<double>(proc.length - m) * (-0.5 * (kLog2Pi + std::log(s2)) - 0.5 * variance * (1.0 + phi2) / s2);
  if (m > 0) {
    Eigen::LLT<Matrix> llt(toeplitz(proc.autocovariance(m), m));
    if (llt.info() != Eigen::Success) throw ModelError("AR: stationary covariance is not positive definite");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double trace_inv = llt.solve(Matrix::Identity(m, m)).trace();
    lp += -0.5 * (static_cast<double>(m) * kLog2Pi + logdet) - 0.5 * variance * trace_inv;
  }
  return lp;
}

// ---------------------------------------------------------------------------
// CIR

void CirProcess::validate() const {
  if (!(kappa > 0) || !(theta > 0) || !(sigma > 0) || !(dt > 0)) {
    throw ModelError("CIR: kappa, theta, sigma and dt must be positive");
  }
  if (length < 1) throw ModelError("CIR: path length must be positive");
}

double CirProcess::stationary_shape() const { return 2.0 * kappa * theta / (sigma * sigma); }
double CirProcess::stationary_rate() const { return 2.0 * kappa / (sigma * sigma); }

double CirProcess::conditional_mean(double r_prev) const {
  return theta + (r_prev - theta) * std::exp(-kappa * dt);
}

double CirProcess::conditional_variance(double r_prev) const {
  const double e = std::exp(-kappa * dt);
  const double s2 = sigma * sigma;
  return r_prev * s2 * e * (1.0 - e) / kappa + theta * s2 * (1.0 - e) * (1.0 - e) / (2.0 * kappa);
}

double log_bessel_i(double nu, double z) {
  if (!(nu > -1.0)) throw DomainError("log_bessel_i: order must exceed -1");
  if (!(z >= 0)) throw DomainError("log_bessel_i: argument must be nonnegative");
  if (z == 0) {
    if (nu == 0) return 0.0;
    return nu > 0 ? -kInf : kInf;
  }
  if (z >= 1000.0 && z >= 25.0 * nu * nu) return detail::log_bessel_i_asymptotic(nu, z);
  return detail::log_bessel_i_series(nu, z);
}

namespace detail {

double log_bessel_i_series(double nu, double z) {
  // Terms t_k = (z/2)^{2k+nu} / (k! Gamma(k+nu+1)); sum outward from the
  // largest term in the linear domain relative to it.
  const double q = 0.25 * z * z;
  // (k+1)(k+nu+1) = q at the peak.
  const double b = nu + 2.0;
  double kpeak = std::floor(0.5 * (-b + std::sqrt(b * b - 4.0 * (nu + 1.0 - q))));
  if (!(kpeak > 0)) kpeak = 0;
  const double log_half_z = std::log(0.5 * z);
  const double log_peak =
      (2.0 * kpeak + nu) * log_half_z - std::lgamma(kpeak + 1.0) - std::lgamma(kpeak + nu + 1.0);
  double sum = 1.0;
  double term = 1.0;
  for (double k = kpeak; ; k += 1.0) {
    term *= q / ((k + 1.0) * (k + nu + 1.0));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  term = 1.0;
  for (double k = kpeak; k > 0; k -= 1.0) {
    term *= (k * (k + nu)) / q;
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return log_peak + std::log(sum);
}

double log_bessel_i_asymptotic(double nu, double z) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double next = -term * (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * z);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return z - 0.5 * std::log(2.0 * std::numbers::pi * z) + std::log(sum);
}

double log_normal_tail(double a) {
  if (a < 5.0) return std::log(0.5 * std::erfc(a / std::numbers::sqrt2));
  // log Q(a) = log phi(a) - log(inverse Mills ratio).
  return -0.5 * a * a - 0.5 * kLog2Pi - std::log(inverse_mills(a));
}

double inverse_mills(double a) { return a + inverse_mills_excess(a); }

double inverse_mills_excess(double a) {
  if (a < 5.0) {
    const double phi = std::exp(-0.5 * a * a - 0.5 * kLog2Pi);
    return phi / (0.5 * std::erfc(a / std::numbers::sqrt2)) - a;
  }
  // lambda(a) - a = 1 / (a + 2 / (a + 3 / (a + ...))), evaluated backward.
  double tail = a;
  for (int k = 200; k >= 2; --k) tail = a + k / tail;
  return 1.0 / tail;
}

}  // namespace detail

double cir_stationary_log_density(const CirProcess& proc, double r) {
  proc.validate();
  const double a = proc.stationary_shape();
  const double b = proc.stationary_rate();
  if (r < 0) return -kInf;
  if (r == 0) {
    if (a == 1.0) return std::log(b);
    return a > 1.0 ? -kInf : kInf;
  }
  return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(r) - b * r;
}

double cir_transition_log_density(const CirProcess& proc, double r_next, double r_prev) {
  proc.validate();
  if (!(r_prev > 0)) throw DomainError("CIR transition: previous value must be positive");
  if (r_next < 0) return -kInf;
  const double e = std::exp(-proc.kappa * proc.dt);
  const double c = 2.0 * proc.kappa / (proc.sigma * proc.sigma * (1.0 - e));
  const double q = proc.stationary_shape() - 1.0;
  const double u = c * r_prev * e;
  const double v = c * r_next;
  if (v == 0) {
    // (v/u)^{q/2} I_q(2 sqrt(uv)) -> v^q / Gamma(q+1) as v -> 0.
    if (q == 0) return std::log(c) - u;
    return q > 0 ? -kInf : kInf;
  }
  const double z = 2.0 * std::sqrt(u * v);
  return std::log(c) - u - v + 0.5 * q * (std::log(v) - std::log(u)) + log_bessel_i(q, z);
}

double cir_log_density(const CirProcess& proc, ConstVectorRef x) {
  proc.validate();
  if (x.size() != proc.length) throw DimensionError("CIR: path length mismatch");
  for (Index i = 0; i < x.size(); ++i) {
    const bool last = i + 1 == x.size();
    if (x(i) < 0 || (!last && x(i) == 0) || !std::isfinite(x(i))) {
      throw DomainError("CIR: nonpositive value at index " + std::to_string(i));
    }
  }
  double lp = cir_stationary_log_density(proc, x(0));
  for (Index i = 1; i < x.size(); ++i) lp += cir_transition_log_density(proc, x(i), x(i - 1));
  return lp;
}

double cir_sample_transition(const CirProcess& proc, double r_prev, Rng& rng) {
  // 2c r_next ~ noncentral chi^2(df, 2u) = chi^2(df + 2N) with N ~ Poisson(u).
  const double e = std::exp(-proc.kappa * proc.dt);
  const double c = 2.0 * proc.kappa / (proc.sigma * proc.sigma * (1.0 - e));
  const double df = 2.0 * proc.stationary_shape();
  const double u = c * r_prev * e;
  long long n = 0;
  if (u > 0) n = std::poisson_distribution<long long>(u)(rng);
  std::gamma_distribution<double> chi(0.5 * df + static_cast<double>(n), 2.0);
  return chi(rng) / (2.0 * c);
}

Vector cir_sample(const CirProcess& proc, Rng& rng) {
  proc.validate();
  Vector x(proc.length);
  std::gamma_distribution<double> stationary(proc.stationary_shape(), 1.0 / proc.stationary_rate());
  x(0) = stationary(rng);
  for (Index i = 1; i < x.size(); ++i) x(i) = cir_sample_transition(proc, x(i - 1), rng);
  return x;
}

Vector cir_sample(const CirProcess& proc, std::uint64_t seed) {
  Rng rng(seed);
  return cir_sample(proc, rng);
}

// ---------------------------------------------------------------------------
// TargetModel

TargetModel::TargetModel(ArProcess proc) : model_(std::move(proc)) { std::get<ArProcess>(model_).validate(); }
TargetModel::TargetModel(CirProcess proc) : model_(proc) { proc.validate(); }

Index TargetModel::length() const {
  return std::visit([](const auto& m) { return m.length; }, model_);
}

double TargetModel::log_density(ConstVectorRef x) const {
  try {
    if (const auto* ar = std::get_if<ArProcess>(&model_)) return ar_log_density(*ar, x);
    return cir_log_density(std::get<CirProcess>(model_), x);
  } catch (const DomainError&) {
    return -kInf;
  }
}

Vector TargetModel::sample(Rng& rng) const {
  if (const auto* ar = std::get_if<ArProcess>(&model_)) return ar_sample(*ar, rng);
  return cir_sample(std::get<CirProcess>(model_), rng);
}

RowMatrix TargetModel::sample_paths(Index count, std::uint64_t seed) const {
  RowMatrix out(count, length());
  for (Index m = 0; m < count; ++m) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(m));
    out.row(m) = sample(rng).transpose();
  }
  return out;
}

std::string TargetModel::describe() const {
  std::ostringstream os;
  os.precision(6);
  if (const auto* ar = std::get_if<ArProcess>(&model_)) {
    os << "AR(";
    for (std::size_t j = 0; j < ar->phi.size(); ++j) os << (j ? ", " : "") << ar->phi[j];
    os << "; sigma=" << ar->sigma << ")";
  } else {
    const auto& cir = std::get<CirProcess>(model_);
    os << "CIR(" << cir.kappa << ", " << cir.theta << ", " << cir.sigma << "; dt=" << cir.dt << ")";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Initial distributions

InitDistribution InitDistribution::gaussian(double variance) {
  InitDistribution d;
  d.kind = Kind::gaussian_white;
  d.variance = variance;
  d.validate();
  return d;
}

InitDistribution InitDistribution::exponential_dist(double rate) {
  InitDistribution d;
  d.kind = Kind::exponential;
  d.rate = rate;
  d.validate();
  return d;
}

InitDistribution InitDistribution::truncated_gaussian(double location, double scale) {
  InitDistribution d;
  d.kind = Kind::truncated_gaussian;
  d.location = location;
  d.scale = scale;
  d.validate();
  return d;
}

namespace {

// Coefficient of variation of N(mu, s^2) truncated to [0, inf) as a function
// of the standardized truncation point a = -mu / s.
double truncated_cv(double a) {
  const double excess = detail::inverse_mills_excess(a);  // lambda - a
  const double lambda = a + excess;
  const double var_factor = 1.0 - lambda * excess;
  return std::sqrt(std::max(var_factor, 0.0)) / excess;
}

}  // namespace

InitDistribution InitDistribution::fit_positive(double mean, double stddev) {
  if (!(mean > 0) || !(stddev > 0)) throw ModelError("fit_positive: mean and stddev must be positive");
  if (std::abs(mean - stddev) <= 1e-3 * mean || stddev > mean) return exponential_dist(1.0 / mean);
  const double cv = stddev / mean;
  double lo = -(2.0 / cv + 10.0);
  double hi = 1000.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (truncated_cv(mid) < cv ? lo : hi) = mid;
  }
  const double a = 0.5 * (lo + hi);
  const double scale = mean / detail::inverse_mills_excess(a);
  return truncated_gaussian(-a * scale, scale);
}

void InitDistribution::validate() const {
  switch (kind) {
    case Kind::gaussian_white:
      if (!(variance > 0) || !std::isfinite(variance)) throw ModelError("init: Gaussian variance must be positive");
      break;
    case Kind::exponential:
      if (!(rate > 0) || !std::isfinite(rate)) throw ModelError("init: exponential rate must be positive");
      break;
    case Kind::truncated_gaussian:
      if (!(scale > 0) || !std::isfinite(scale) || !std::isfinite(location)) {
        throw ModelError("init: truncated Gaussian needs finite location and positive scale");
      }
      break;
  }
}

double InitDistribution::mean() const {
  switch (kind) {
    case Kind::gaussian_white: return 0.0;
    case Kind::exponential: return 1.0 / rate;
    case Kind::truncated_gaussian: return location + scale * detail::inverse_mills(-location / scale);
  }
  return 0.0;
}

double InitDistribution::stddev() const {
  switch (kind) {
    case Kind::gaussian_white: return std::sqrt(variance);
    case Kind::exponential: return 1.0 / rate;
    case Kind::truncated_gaussian: {
      const double a = -location / scale;
      const double excess = detail::inverse_mills_excess(a);
      return scale * std::sqrt(std::max(0.0, 1.0 - (a + excess) * excess));
    }
  }
  return 0.0;
}

std::string InitDistribution::describe() const {
  std::ostringstream os;
  os.precision(6);
  switch (kind) {
    case Kind::gaussian_white: os << "gaussian(variance=" << variance << ")"; break;
    case Kind::exponential: os << "exponential(rate=" << rate << ")"; break;
    case Kind::truncated_gaussian:
      os << "truncated-gaussian(location=" << location << ", scale=" << scale << ")";
      break;
  }
  return os.str();
}

namespace {

// Robert (1995) sampler for the standard normal restricted to [a, inf).
double standard_normal_tail(double a, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (a <= 0.5) {
    std::normal_distribution<double> normal;
    for (;;) {
      const double z = normal(rng);
      if (z >= a) return z;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  std::exponential_distribution<double> expo(rate);
  for (;;) {
    const double z = a + expo(rng);
    const double diff = z - rate;
    if (uniform(rng) <= std::exp(-0.5 * diff * diff)) return z;
  }
}

}  // namespace

Vector init_sample(const InitDistribution& dist, Index d, Rng& rng) {
  dist.validate();
  Vector x(d);
  switch (dist.kind) {
    case InitDistribution::Kind::gaussian_white: {
      std::normal_distribution<double> normal(0.0, std::sqrt(dist.variance));
      for (Index i = 0; i < d; ++i) x(i) = normal(rng);
      break;
    }
    case InitDistribution::Kind::exponential: {
      std::exponential_distribution<double> expo(dist.rate);
      for (Index i = 0; i < d; ++i) x(i) = expo(rng);
      break;
    }
    case InitDistribution::Kind::truncated_gaussian: {
      const double a = -dist.location / dist.scale;
      for (Index i = 0; i < d; ++i) {
        x(i) = std::max(0.0, dist.location + dist.scale * standard_normal_tail(a, rng));
      }
      break;
    }
  }
  return x;
}

RowMatrix init_sample_batch(const InitDistribution& dist, Index count, Index d, Rng& rng) {
  RowMatrix out(count, d);
  for (Index n = 0; n < count; ++n) out.row(n) = init_sample(dist, d, rng).transpose();
  return out;
}

double init_log_density(const InitDistribution& dist, ConstVectorRef x) {
  dist.validate();
  const auto d = static_cast<double>(x.size());
  switch (dist.kind) {
    case InitDistribution::Kind::gaussian_white:
      return -0.5 * d * (kLog2Pi + std::log(dist.variance)) - 0.5 * x.squaredNorm() / dist.variance;
    case InitDistribution::Kind::exponential:
      if ((x.array() < 0).any()) return -kInf;
      return d * std::log(dist.rate) - dist.rate * x.sum();
    case InitDistribution::Kind::truncated_gaussian: {
      if ((x.array() < 0).any()) return -kInf;
      const double log_z = detail::log_normal_tail(-dist.location / dist.scale);
      const double s2 = dist.scale * dist.scale;
      return -0.5 * d * (kLog2Pi + std::log(s2)) - 0.5 * (x.array() - dist.location).square().sum() / s2 -
             d * log_z;
    }
  }
  return 0.0;
}

double init_entropy(const InitDistribution& dist, Index d) {
  dist.validate();
  const auto dd = static_cast<double>(d);
  switch (dist.kind) {
    case InitDistribution::Kind::gaussian_white:
      return 0.5 * dd * (kLog2Pi + 1.0 + std::log(dist.variance));
    case InitDistribution::Kind::exponential:
      return dd * (1.0 - std::log(dist.rate));
    case InitDistribution::Kind::truncated_gaussian: {
      const double a = -dist.location / dist.scale;
      const double per = 0.5 * (kLog2Pi + 1.0) + std::log(dist.scale) + detail::log_normal_tail(a) +
                         0.5 * a * detail::inverse_mills(a);
      return dd * per;
    }
  }
  return 0.0;
}

std::optional<double> expected_init_log_density(const TargetModel& target, const InitDistribution& dist) {
  const auto* ar = std::get_if<ArProcess>(&target.model());
  if (!ar || dist.kind != InitDistribution::Kind::gaussian_white) return std::nullopt;
  return ar_expected_log_density_white(*ar, dist.variance);
}

}  // namespace mgdm
