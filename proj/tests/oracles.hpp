#pragma once

// Reference computations shared by the test binaries. Everything here is
// written directly from definitions and does not call the library's
// derivative or determinant code.

#include "mgdm/energy.hpp"
#include "mgdm/models.hpp"
#include "mgdm/rng.hpp"
#include "mgdm/types.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/non_central_chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using mgdm::Index;
using mgdm::Matrix;
using mgdm::RowMatrix;
using mgdm::Vector;

inline Vector normal_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  mgdm::Rng rng(seed);
  std::normal_distribution<double> z;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = scale * z(rng);
  return v;
}

inline RowMatrix normal_batch(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  mgdm::Rng rng(seed);
  std::normal_distribution<double> z;
  RowMatrix b(rows, cols);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = scale * z(rng);
  return b;
}

/// (1/d) sum_{i >= lag} x_i x_{i-lag}, by explicit loop.
inline double lagged_product(const Vector& x, Index lag) {
  double s = 0;
  for (Index i = lag; i < x.size(); ++i) s += x(i) * x(i - lag);
  return s / static_cast<double>(x.size());
}

inline double fd_step(double xi, double relative) { return relative * std::max(std::abs(xi), 1.0); }

/// Central-difference Jacobian of a vector map.
inline Matrix jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double relative = 1e-5) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x(i), relative);
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return j;
}

/// Central-difference gradient of a scalar map.
inline Vector gradient(const std::function<double(const Vector&)>& f, const Vector& x, double relative = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x(i), relative);
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// Four-point central-difference Hessian of a scalar map.
inline Matrix hessian(const std::function<double(const Vector&)>& f, const Vector& x, double relative = 1e-3) {
  const Index d = x.size();
  Matrix h(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      const double hi = fd_step(x(i), relative);
      const double hj = fd_step(x(j), relative);
      auto at = [&](double si, double sj) {
        Vector y = x;
        y(i) += si * hi;
        y(j) += sj * hj;
        return f(y);
      };
      h(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * hi * hj);
    }
  }
  return h;
}

inline double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

/// log|det| from the eigenvalues of a general matrix; independent of LU.
inline double log_abs_det(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  double s = 0;
  for (Index i = 0; i < a.rows(); ++i) s += std::log(std::abs(es.eigenvalues()(i)));
  return s;
}

/// CIR transition density as a scaled noncentral chi-square.
inline double cir_transition_density(const mgdm::CirProcess& p, double r_next, double r_prev) {
  const double e = std::exp(-p.kappa * p.dt);
  const double c = p.sigma * p.sigma * (1 - e) / (4 * p.kappa);
  const double df = 4 * p.kappa * p.theta / (p.sigma * p.sigma);
  const double nc = r_prev * e / c;
  boost::math::non_central_chi_squared dist(df, nc);
  return boost::math::pdf(dist, r_next / c) / c;
}

struct SampleMoments {
  double mean = 0, var = 0, se_mean = 0, se_var = 0;
};

inline SampleMoments moments(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  SampleMoments m;
  for (double x : v) m.mean += x;
  m.mean /= n;
  double m2 = 0, m4 = 0;
  for (double x : v) {
    const double c = x - m.mean;
    m2 += c * c;
    m4 += c * c * c * c;
  }
  m.var = m2 / (n - 1);
  m4 /= n;
  m.se_mean = std::sqrt(m.var / n);
  m.se_var = std::sqrt(std::max(m4 - m.var * m.var, 0.0) / n);
  return m;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace oracle
