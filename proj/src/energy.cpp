#include "mgdm/energy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mgdm {

// ---------------------------------------------------------------------------
// EnergySpec

SparseMatrix EnergySpec::weighted_hessian_sparse(ConstVectorRef x, ConstVectorRef w) const {
  return weighted_hessian(x, w).sparseView();
}

std::vector<std::string> EnergySpec::component_names() const {
  std::vector<std::string> names;
  for (Index k = 0; k < size(); ++k) names.push_back("phi_" + std::to_string(k));
  return names;
}

void EnergySpec::check_point(ConstVectorRef x) const {
  if (x.size() != dim()) {
    throw DimensionError("energy: path length " + std::to_string(x.size()) + " does not match d = " +
                         std::to_string(dim()));
  }
}

void EnergySpec::check_weights(ConstVectorRef w) const {
  if (w.size() != size()) {
    throw DimensionError("energy: weight vector has length " + std::to_string(w.size()) +
                         ", expected K = " + std::to_string(size()));
  }
}

// ---------------------------------------------------------------------------
// MomentEnergy

namespace {

Vector apply_transform(SeriesTransform f, ConstVectorRef x) {
  return f == SeriesTransform::identity ? Vector(x) : Vector(x.array().square());
}

Vector transform_derivative(SeriesTransform f, ConstVectorRef x) {
  return f == SeriesTransform::identity ? Vector::Ones(x.size()) : Vector(2.0 * x.array());
}

// z = f(x), centered if requested.
Vector moment_series(const LaggedMoment& c, ConstVectorRef x) {
  Vector z = apply_transform(c.transform, x);
  if (c.centered) z.array() -= z.mean();
  return z;
}

double lagged_product(const Vector& z, Index lag) {
  const Index d = z.size();
  return z.tail(d - lag).dot(z.head(d - lag)) / static_cast<double>(d);
}

// Gradient of (1/d) sum z_i z_{i-lag} with respect to y = f(x).
Vector series_gradient(const LaggedMoment& c, const Vector& z) {
  const Index d = z.size();
  const Index n = d - c.lag;
  Vector g = Vector::Zero(d);
  g.tail(n) += z.head(n);
  g.head(n) += z.tail(n);
  g /= static_cast<double>(d);
  if (c.centered) g.array() -= g.mean();
  return g;
}

}  // namespace

std::string LaggedMoment::name() const {
  std::string base = transform == SeriesTransform::identity ? "x" : "x2";
  return std::string(centered ? "cov_" : "mom_") + base + "_lag" + std::to_string(lag);
}

MomentEnergy::MomentEnergy(Index dim, std::vector<LaggedMoment> components)
    : dim_(dim), components_(std::move(components)) {
  if (dim_ < 1) throw ConfigError("energy: path length d must be positive");
  if (components_.empty()) throw ConfigError("energy: at least one statistic is required");
  for (const auto& c : components_) {
    if (c.lag < 0) throw ConfigError("energy: lags must be nonnegative");
    if (c.lag >= dim_) {
      throw ConfigError("energy: lag " + std::to_string(c.lag) + " requires d > lag, got d = " +
                        std::to_string(dim_));
    }
  }
}

Vector MomentEnergy::value(ConstVectorRef x) const {
  check_point(x);
  Vector phi(size());
  for (Index k = 0; k < size(); ++k) {
    const auto& c = components_[static_cast<std::size_t>(k)];
    phi(k) = lagged_product(moment_series(c, x), c.lag);
  }
  return phi;
}

Matrix MomentEnergy::jacobian(ConstVectorRef x) const {
  check_point(x);
  Matrix jac(size(), dim_);
  const Vector dsquare = transform_derivative(SeriesTransform::square, x);
  for (Index k = 0; k < size(); ++k) {
    const auto& c = components_[static_cast<std::size_t>(k)];
    Vector g = series_gradient(c, moment_series(c, x));
    if (c.transform == SeriesTransform::square) g.array() *= dsquare.array();
    jac.row(k) = g.transpose();
  }
  return jac;
}

Matrix MomentEnergy::weighted_hessian(ConstVectorRef x, ConstVectorRef w) const {
  check_point(x);
  check_weights(w);
  const Index d = dim_;
  const double inv_d = 1.0 / static_cast<double>(d);
  Matrix hess = Matrix::Zero(d, d);
  Matrix band;
  for (Index k = 0; k < size(); ++k) {
    const double wk = w(k);
    if (wk == 0.0) continue;
    const auto& c = components_[static_cast<std::size_t>(k)];
    const Vector fp = transform_derivative(c.transform, x);
    if (!c.centered) {
      for (Index i = c.lag; i < d; ++i) {
        const Index j = i - c.lag;
        const double v = wk * inv_d * (fp(i) * fp(j));
        hess(i, j) += v;
        hess(j, i) += v;
      }
    } else {
      // P M P with P = I - (1/d) 1 1^T and M the symmetric lag band.
      band.setZero(d, d);
      for (Index i = c.lag; i < d; ++i) {
        band(i, i - c.lag) += inv_d;
        band(i - c.lag, i) += inv_d;
      }
      const Vector r = band.rowwise().sum();
      const double s = r.sum();
      for (Index j = 0; j < d; ++j) {
        for (Index i = 0; i < d; ++i) {
          const double pmp = band(i, j) - (r(i) + r(j)) * inv_d + s * inv_d * inv_d;
          hess(i, j) += wk * pmp * (fp(i) * fp(j));
        }
      }
    }
    if (c.transform == SeriesTransform::square) {
      const Vector g = series_gradient(c, moment_series(c, x));
      hess.diagonal().array() += wk * 2.0 * g.array();
    }
  }
  Matrix sym = 0.5 * (hess + hess.transpose());
  return sym;
}

SparseMatrix MomentEnergy::weighted_hessian_sparse(ConstVectorRef x, ConstVectorRef w) const {
  if (hessian_bandwidth() < 0) return EnergySpec::weighted_hessian_sparse(x, w);
  check_point(x);
  check_weights(w);
  const Index d = dim_;
  const double inv_d = 1.0 / static_cast<double>(d);
  std::vector<Eigen::Triplet<double>> triplets;
  Vector diag = Vector::Zero(d);
  for (Index k = 0; k < size(); ++k) {
    const double wk = w(k);
    if (wk == 0.0) continue;
    const auto& c = components_[static_cast<std::size_t>(k)];
    const Vector fp = transform_derivative(c.transform, x);
    if (c.lag == 0) {
      diag.array() += 2.0 * wk * inv_d * fp.array().square();
    } else {
      for (Index i = c.lag; i < d; ++i) {
        const Index j = i - c.lag;
        const double v = wk * inv_d * (fp(i) * fp(j));
        triplets.emplace_back(i, j, v);
        triplets.emplace_back(j, i, v);
      }
    }
    if (c.transform == SeriesTransform::square) {
      const Vector g = series_gradient(c, moment_series(c, x));
      diag.array() += wk * 2.0 * g.array();
    }
  }
  for (Index i = 0; i < d; ++i) triplets.emplace_back(i, i, diag(i));
  SparseMatrix hess(d, d);
  hess.setFromTriplets(triplets.begin(), triplets.end());
  return hess;
}

bool MomentEnergy::hessian_is_constant() const {
  return std::all_of(components_.begin(), components_.end(),
                     [](const LaggedMoment& c) { return c.transform == SeriesTransform::identity; });
}

Index MomentEnergy::hessian_bandwidth() const {
  Index bw = 0;
  for (const auto& c : components_) {
    if (c.centered) return -1;
    bw = std::max(bw, c.lag);
  }
  return bw;
}

std::vector<std::string> MomentEnergy::component_names() const {
  std::vector<std::string> names;
  for (const auto& c : components_) names.push_back(c.name());
  return names;
}

std::string MomentEnergy::describe() const {
  std::ostringstream os;
  os << "moments(d=" << dim_ << ";";
  for (const auto& c : components_) os << ' ' << c.name();
  os << ")";
  return os.str();
}

namespace {

std::vector<LaggedMoment> acf_components(const std::vector<Index>& lags) {
  std::vector<LaggedMoment> out;
  for (Index lag : lags) out.push_back({SeriesTransform::identity, lag, false});
  return out;
}

std::vector<LaggedMoment> squared_acf_components(const SquaredAcfOptions& opt) {
  if (opt.max_lag < 1) throw ConfigError("squared ACF energy: max lag L must be >= 1");
  std::vector<LaggedMoment> out;
  out.push_back({SeriesTransform::identity, 0, opt.center_signal});
  out.push_back({SeriesTransform::identity, 1, opt.center_signal});
  for (Index lag = 1; lag <= opt.max_lag; ++lag) {
    out.push_back({SeriesTransform::square, lag, opt.center_squared});
  }
  return out;
}

}  // namespace

AcfEnergy::AcfEnergy(Index dim, std::vector<Index> lags)
    : MomentEnergy(dim, acf_components(lags)), lags_(std::move(lags)) {}

SquaredAcfEnergy::SquaredAcfEnergy(Index dim, SquaredAcfOptions options)
    : MomentEnergy(dim, squared_acf_components(options)), options_(options) {
  if (dim <= options.max_lag + 1) {
    throw ConfigError("squared ACF energy: requires d > L + 1");
  }
}

// ---------------------------------------------------------------------------
// FiniteDiffEnergyAdapter

FiniteDiffEnergyAdapter::FiniteDiffEnergyAdapter(EnergyPtr inner, double relative_step,
                                                 double hessian_relative_step)
    : inner_(std::move(inner)),
      relative_step_(relative_step),
      hessian_relative_step_(hessian_relative_step) {
  if (!inner_) throw ConfigError("finite-difference adapter: null energy");
  if (!(relative_step_ > 0) || !(hessian_relative_step_ > 0)) {
    throw ConfigError("finite-difference adapter: steps must be positive");
  }
}

double FiniteDiffEnergyAdapter::step_for(double xi, double relative) const {
  return relative * std::max(std::abs(xi), 1.0);
}

Matrix FiniteDiffEnergyAdapter::jacobian(ConstVectorRef x) const {
  check_point(x);
  Matrix jac(size(), dim());
  Vector probe = x;
  for (Index j = 0; j < dim(); ++j) {
    const double h = step_for(x(j), relative_step_);
    probe(j) = x(j) + h;
    const Vector up = inner_->value(probe);
    probe(j) = x(j) - h;
    const Vector down = inner_->value(probe);
    probe(j) = x(j);
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

Matrix FiniteDiffEnergyAdapter::weighted_hessian(ConstVectorRef x, ConstVectorRef w) const {
  check_point(x);
  check_weights(w);
  const Index d = dim();
  Vector probe = x;
  auto scalar = [&](const Vector& p) { return w.dot(inner_->value(p)); };
  Vector h(d);
  for (Index i = 0; i < d; ++i) h(i) = step_for(x(i), hessian_relative_step_);
  const double f0 = scalar(probe);
  Matrix hess(d, d);
  for (Index i = 0; i < d; ++i) {
    probe(i) = x(i) + h(i);
    const double fp = scalar(probe);
    probe(i) = x(i) - h(i);
    const double fm = scalar(probe);
    probe(i) = x(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    for (Index j = 0; j < i; ++j) {
      double acc = 0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          probe(i) = x(i) + si * h(i);
          probe(j) = x(j) + sj * h(j);
          acc += si * sj * scalar(probe);
        }
      }
      probe(i) = x(i);
      probe(j) = x(j);
      hess(i, j) = hess(j, i) = acc / (4.0 * h(i) * h(j));
    }
  }
  return hess;
}

// ---------------------------------------------------------------------------
// Free functions

Vector acf_value(ConstVectorRef x, const std::vector<Index>& lags) {
  return AcfEnergy(x.size(), lags).value(x);
}

Matrix acf_jacobian(ConstVectorRef x, const std::vector<Index>& lags) {
  return AcfEnergy(x.size(), lags).jacobian(x);
}

Matrix acf_weighted_hessian(ConstVectorRef x, const std::vector<Index>& lags, ConstVectorRef w) {
  return AcfEnergy(x.size(), lags).weighted_hessian(x, w);
}

RowMatrix particle_energies(const RowMatrix& batch, const EnergySpec& spec) {
  if (batch.cols() != spec.dim()) throw DimensionError("batch width does not match energy dimension");
  RowMatrix out(batch.rows(), spec.size());
  for (Index n = 0; n < batch.rows(); ++n) out.row(n) = spec.value(batch.row(n).transpose()).transpose();
  return out;
}

Vector batch_mean_energy(const RowMatrix& batch, const EnergySpec& spec) {
  if (batch.rows() < 1) throw InputError("batch_mean_energy: empty batch");
  return particle_energies(batch, spec).colwise().mean().transpose();
}

double TargetEnergy::suggested_tolerance() const { return stddev.norm(); }

TargetEnergy estimate_target(const RowMatrix& data, const EnergySpec& spec) {
  if (data.rows() < 1) throw InputError("estimate_target: no paths");
  const RowMatrix phi = particle_energies(data, spec);
  TargetEnergy out;
  out.paths = data.rows();
  out.alpha = phi.colwise().mean().transpose();
  out.stddev = Vector::Zero(spec.size());
  if (data.rows() > 1) {
    const RowMatrix centered = phi.rowwise() - out.alpha.transpose();
    out.stddev = (centered.colwise().squaredNorm() / static_cast<double>(data.rows() - 1))
                     .cwiseSqrt()
                     .transpose();
  }
  return out;
}

}  // namespace mgdm
