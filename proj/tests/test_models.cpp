#include "doctest.h"
#include "oracles.hpp"

#include "mgdm/models.hpp"
#include "mgdm/special.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <numbers>

using namespace mgdm;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normal_logpdf(double x, double var) { return -0.5 * std::log(kTwoPi * var) - 0.5 * x * x / var; }

// Autocovariances of a stationary AR(2) from the Yule-Walker equations.
std::vector<double> ar2_autocovariance(double p1, double p2, double s2, Index n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  g[0] = s2 * (1 - p2) / ((1 + p2) * ((1 - p2) * (1 - p2) - p1 * p1));
  if (n > 1) g[1] = p1 * g[0] / (1 - p2);
  for (Index k = 2; k < n; ++k) g[static_cast<std::size_t>(k)] = p1 * g[k - 1] + p2 * g[k - 2];
  return g;
}

Matrix toeplitz(const std::vector<double>& g) {
  const auto n = static_cast<Index>(g.size());
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) m(i, j) = g[static_cast<std::size_t>(std::abs(i - j))];
  }
  return m;
}

double dense_gaussian_logpdf(const Matrix& cov, const Vector& x) {
  Eigen::LLT<Matrix> llt(cov);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(kTwoPi) + logdet + x.dot(llt.solve(x)));
}

using oracle::moments;

double cir_transition_oracle(const CirProcess& p, double r_next, double r_prev) {
  return oracle::cir_transition_density(p, r_next, r_prev);
}

}  // namespace

TEST_CASE("AR stationarity") {
  CHECK_FALSE(ArProcess{{1.0}, 1.0, 8}.is_stationary());
  CHECK(ArProcess{{0.2, -0.1}, 1.0, 8}.is_stationary());
  CHECK(ArProcess{{0.1}, 1.0, 8}.is_stationary());
  CHECK_FALSE(ArProcess{{0.5, 0.6}, 1.0, 8}.is_stationary());
  CHECK_THROWS_AS(TargetModel(ArProcess{{1.0}, 1.0, 8}), ModelError);
  CHECK_THROWS_AS(ar_sample(ArProcess{{1.0}, 1.0, 8}, 1), ModelError);
  CHECK_THROWS_AS(ArProcess({{0.1}, -1.0, 8}).validate(), ModelError);
  CHECK_THROWS_AS(ArProcess({{0.1}, 1.0, 0}).validate(), ModelError);
}

TEST_CASE("AR autocovariance and unit-variance scaling") {
  const ArProcess p{{0.2, -0.1}, 1.3, 16};
  const auto g = ar2_autocovariance(0.2, -0.1, 1.69, 6);
  const Vector a = p.autocovariance(5);
  for (Index k = 0; k < 6; ++k) CHECK(a(k) == doctest::Approx(g[static_cast<std::size_t>(k)]).epsilon(1e-12));

  const ArProcess u = ArProcess::unit_variance({0.2, -0.1}, 16);
  CHECK(u.autocovariance(0)(0) == doctest::Approx(1.0).epsilon(1e-12));
  const ArProcess u1 = ArProcess::unit_variance({0.1}, 16);
  CHECK(u1.sigma * u1.sigma == doctest::Approx(0.99).epsilon(1e-14));
  CHECK(p.entropy_rate() == doctest::Approx(0.5 * std::log(kTwoPi * std::exp(1.0) * 1.69)));
}

TEST_CASE("AR sampling") {
  SUBCASE("zero innovation gives the zero path") {
    const Vector x = ar_sample(ArProcess{{0.5}, 0.0, 32}, 7);
    CHECK(x.isZero(0));
  }
  SUBCASE("white noise has unit sample variance") {
    const Vector x = ar_sample(ArProcess{{0.0}, 1.0, 4096}, 8);
    const double var = x.squaredNorm() / 4096.0;
    CHECK(std::abs(var - 1.0) <= 3 * std::sqrt(2.0 / 4096.0));
  }
  SUBCASE("AR(1) lag-1 autocovariance over 10000 paths") {
    TargetModel t(ArProcess{{0.1}, std::sqrt(0.99), 4});
    const RowMatrix paths = t.sample_paths(10000, 99);
    std::vector<double> prod, first;
    for (Index m = 0; m < paths.rows(); ++m) {
      prod.push_back(paths(m, 2) * paths(m, 1));
      first.push_back(paths(m, 0));
    }
    const auto pm = moments(prod);
    CHECK(std::abs(pm.mean - 0.1) <= 3 * pm.se_mean);
    // The first value is drawn from the stationary marginal N(0, 1).
    const auto fm = moments(first);
    CHECK(std::abs(fm.var - 1.0) <= 3 * fm.se_var);
  }
  SUBCASE("AR(2) start is stationary") {
    const ArProcess p = ArProcess::unit_variance({0.2, -0.1}, 3);
    TargetModel t(p);
    const RowMatrix paths = t.sample_paths(10000, 5);
    const auto g = ar2_autocovariance(0.2, -0.1, p.sigma * p.sigma, 3);
    std::vector<double> lag1;
    for (Index m = 0; m < paths.rows(); ++m) lag1.push_back(paths(m, 0) * paths(m, 1));
    const auto lm = moments(lag1);
    CHECK(std::abs(lm.mean - g[1]) <= 3 * lm.se_mean);
  }
  SUBCASE("deterministic given the seed") {
    const ArProcess p{{0.3}, 1.0, 50};
    CHECK(ar_sample(p, 42) == ar_sample(p, 42));
    CHECK(ar_sample(p, 42) != ar_sample(p, 43));
  }
}

TEST_CASE("AR log-density") {
  SUBCASE("zero path, AR(1)") {
    const double phi = 0.1, s2 = 0.99;
    const Index d = 10;
    const double expected = -0.5 * std::log(kTwoPi * s2 / (1 - phi * phi)) - 0.5 * (d - 1) * std::log(kTwoPi * s2);
    CHECK(ar_log_density(ArProcess{{phi}, std::sqrt(s2), d}, Vector::Zero(d)) ==
          doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("phi = 0 is an i.i.d. normal product") {
    const Vector x = oracle::normal_vector(20, 3);
    double expected = 0;
    for (Index i = 0; i < 20; ++i) expected += normal_logpdf(x(i), 2.25);
    CHECK(ar_log_density(ArProcess{{0.0}, 1.5, 20}, x) == doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("AR(2) term-by-term conditional product") {
    const double p1 = 0.2, p2 = -0.1, s = 1.1;
    const Index d = 15;
    const Vector x = oracle::normal_vector(d, 17);
    const auto g = ar2_autocovariance(p1, p2, s * s, 2);
    Matrix c(2, 2);
    c << g[0], g[1], g[1], g[0];
    double expected = dense_gaussian_logpdf(c, x.head(2));
    for (Index i = 2; i < d; ++i) expected += normal_logpdf(x(i) - p1 * x(i - 1) - p2 * x(i - 2), s * s);
    CHECK(ar_log_density(ArProcess{{p1, p2}, s, d}, x) == doctest::Approx(expected).epsilon(1e-12));

    double conditional = 0;
    for (Index i = 2; i < d; ++i) conditional += normal_logpdf(x(i) - p1 * x(i - 1) - p2 * x(i - 2), s * s);
    CHECK(ar_conditional_log_density(ArProcess{{p1, p2}, s, d}, x) == doctest::Approx(conditional).epsilon(1e-12));
  }
  SUBCASE("matches the dense stationary Gaussian") {
    const Index d = 12;
    const ArProcess p{{0.2, -0.1}, 0.8, d};
    const Vector x = oracle::normal_vector(d, 23);
    const Matrix cov = toeplitz(ar2_autocovariance(0.2, -0.1, 0.64, d));
    CHECK(ar_log_density(p, x) == doctest::Approx(dense_gaussian_logpdf(cov, x)).epsilon(1e-11));

    // E over white noise of the dense log-density.
    const double v = 1.7;
    Eigen::LLT<Matrix> llt(cov);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double trace_inv = llt.solve(Matrix::Identity(d, d)).trace();
    const double expected = -0.5 * (d * std::log(kTwoPi) + logdet) - 0.5 * v * trace_inv;
    CHECK(ar_expected_log_density_white(p, v) == doctest::Approx(expected).epsilon(1e-11));
    const auto viaTarget = expected_init_log_density(TargetModel(p), InitDistribution::gaussian(v));
    REQUIRE(viaTarget.has_value());
    CHECK(*viaTarget == doctest::Approx(expected).epsilon(1e-11));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(ar_log_density(ArProcess{{0.1}, 1.0, 5}, Vector::Zero(4)), DimensionError);
  }
  SUBCASE("per-dimension log-density approaches the negative entropy rate") {
    const Index d = 1024;
    const ArProcess p = ArProcess::unit_variance({0.1}, d);
    TargetModel t(p);
    const RowMatrix paths = t.sample_paths(64, 11);
    std::vector<double> rates;
    for (Index m = 0; m < 64; ++m) rates.push_back(-t.log_density(paths.row(m).transpose()) / d);
    const auto rm = moments(rates);
    // Boundary term from the stationary first value, O(1/d).
    const double boundary = 0.5 * std::log(1.0 / (1.0 - 0.01)) / d;
    CHECK(std::abs(rm.mean - p.entropy_rate()) <= 3 * rm.se_mean + boundary);
  }
}

TEST_CASE("log Bessel I against Boost") {
  for (double nu : {-0.5, 0.0, 0.3, 1.0, 2.5, 10.0}) {
    for (double z : {1e-3, 0.5, 3.0, 30.0, 200.0, 600.0}) {
      const double expected = std::log(boost::math::cyl_bessel_i(nu, z));
      CHECK(log_bessel_i(nu, z) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  // Past the overflow point the series and the asymptotic expansion must agree.
  for (double nu : {0.0, 1.0, 3.5}) {
    CHECK(detail::log_bessel_i_series(nu, 2000.0) ==
          doctest::Approx(detail::log_bessel_i_asymptotic(nu, 2000.0)).epsilon(1e-12));
  }
  CHECK(std::isfinite(log_bessel_i(2.0, 1e6)));
  CHECK(log_bessel_i(0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(log_bessel_i(-1.5, 1.0), DomainError);
  CHECK_THROWS_AS(log_bessel_i(1.0, -1.0), DomainError);
}

TEST_CASE("normal tail helpers against Boost") {
  boost::math::normal n;
  for (double a : {-5.0, -1.0, 0.0, 0.7, 4.0, 20.0}) {
    const double tail = boost::math::cdf(boost::math::complement(n, a));
    CHECK(detail::log_normal_tail(a) == doctest::Approx(std::log(tail)).epsilon(1e-11));
    CHECK(detail::inverse_mills(a) == doctest::Approx(boost::math::pdf(n, a) / tail).epsilon(1e-11));
  }
  CHECK(detail::inverse_mills_excess(1e4) == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("CIR transition density matches the noncentral chi-square") {
  const CirProcess p{0.5, 1.0, 1.0, 1.0, 2};
  for (double prev : {0.05, 1.0, 4.0}) {
    for (double next : {0.01, 0.5, 1.0, 3.0, 9.0}) {
      CHECK(cir_transition_log_density(p, next, prev) ==
            doctest::Approx(std::log(cir_transition_oracle(p, next, prev))).epsilon(1e-10));
    }
  }
}

TEST_CASE("CIR transition density integrates to one") {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const std::vector<CirProcess> grid = {
      {0.5, 1.0, 1.0, 1.0, 2},
      {1.0 / std::sqrt(2.0), std::sqrt(2.0), 1.0, 1.0, 2},
      {0.25, 1.0, 1.0, 1.0, 2},
      {2.0, 0.5, 0.3, 0.1, 2},
  };
  for (const auto& p : grid) {
    for (double prev : {0.1, 1.0, 5.0}) {
      const double upper = p.conditional_mean(prev) + 60.0 * std::sqrt(p.conditional_variance(prev));
      auto f = [&](double r) { return std::exp(cir_transition_log_density(p, r, prev)); };
      const double mass = integrator.integrate(f, 0.0, upper);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("CIR transition samples") {
  const std::vector<CirProcess> grid = {{0.5, 1.0, 1.0, 1.0, 2}, {1.0 / std::sqrt(2.0), std::sqrt(2.0), 1.0, 1.0, 2}};
  for (const auto& p : grid) {
    for (double prev : {0.2, 2.0}) {
      Rng rng(static_cast<std::uint64_t>(prev * 1000 + p.kappa * 10));
      std::vector<double> draws;
      for (int i = 0; i < 20000; ++i) draws.push_back(cir_sample_transition(p, prev, rng));
      CHECK(*std::min_element(draws.begin(), draws.end()) > 0.0);
      const auto m = moments(draws);
      CHECK(std::abs(m.mean - p.conditional_mean(prev)) <= 3 * m.se_mean);
      CHECK(std::abs(m.var - p.conditional_variance(prev)) <= 3 * m.se_var);
    }
  }
}

TEST_CASE("CIR transition density shape") {
  const CirProcess p{0.5, 1.0, 1.0, 1.0, 2};
  double prev = std::exp(cir_transition_log_density(p, 1e-3, 1.0));
  for (int i = 1; i <= 400; ++i) {
    const double r = 1e-3 + 0.01 * i;
    const double v = std::exp(cir_transition_log_density(p, r, 1.0));
    CHECK(v >= 0.0);
    CHECK(std::abs(v - prev) < 0.05);
    prev = v;
  }
  CHECK(cir_transition_log_density(p, -1.0, 1.0) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(cir_transition_log_density(p, 1.0, 0.0), DomainError);
}

TEST_CASE("CIR path log-density") {
  const CirProcess one{0.5, 1.0, 1.0, 1.0, 1};
  boost::math::gamma_distribution<double> g(one.stationary_shape(), 1.0 / one.stationary_rate());
  Vector x1(1);
  x1 << 0.7;
  CHECK(cir_log_density(one, x1) == doctest::Approx(std::log(boost::math::pdf(g, 0.7))).epsilon(1e-13));

  const CirProcess p{1.0 / std::sqrt(2.0), std::sqrt(2.0), 1.0, 1.0, 6};
  boost::math::gamma_distribution<double> gp(p.stationary_shape(), 1.0 / p.stationary_rate());
  const Vector flat = Vector::Constant(6, p.theta);
  double expected = std::log(boost::math::pdf(gp, p.theta));
  for (int i = 1; i < 6; ++i) expected += std::log(cir_transition_oracle(p, p.theta, p.theta));
  const double lp = cir_log_density(p, flat);
  CHECK(std::isfinite(lp));
  CHECK(lp == doctest::Approx(expected).epsilon(1e-10));

  Vector hole = flat;
  hole(2) = 0.0;
  CHECK_THROWS_AS(cir_log_density(p, hole), DomainError);
  CHECK(TargetModel(p).log_density(hole) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(CirProcess({0.0, 1.0, 1.0, 1.0, 2}).validate(), ModelError);
}

TEST_CASE("CIR path sampling") {
  const CirProcess p{0.5, 1.0, 1.0, 1.0, 200};
  const Vector x = cir_sample(p, 3);
  CHECK((x.array() > 0).all());
  CHECK(cir_sample(p, 3) == x);
  CHECK(std::isfinite(cir_log_density(p, x)));
}

TEST_CASE("initial distribution entropies") {
  CHECK(init_entropy(InitDistribution::gaussian(1.0), 2) == doctest::Approx(std::log(kTwoPi * std::exp(1.0))));
  CHECK(init_entropy(InitDistribution::gaussian(1.0), 2) == doctest::Approx(2.8379).epsilon(1e-4));
  CHECK(init_entropy(InitDistribution::gaussian(0.3), 128) ==
        doctest::Approx(64.0 * std::log(kTwoPi * std::exp(1.0) * 0.3)).epsilon(1e-13));
  for (double rate : {0.5, 1.0, 3.0}) {
    CHECK(init_entropy(InitDistribution::exponential_dist(rate), 1) == doctest::Approx(1.0 - std::log(rate)));
  }

  // Truncated Gaussian entropy by quadrature of -p log p.
  boost::math::quadrature::tanh_sinh<double> integrator;
  for (auto [loc, scale] : {std::pair{0.5, 1.0}, std::pair{-1.0, 0.7}, std::pair{3.0, 0.5}}) {
    const auto dist = InitDistribution::truncated_gaussian(loc, scale);
    auto logp = [&](double r) {
      Vector v(1);
      v << r;
      return init_log_density(dist, v);
    };
    const double upper = std::max(loc, 0.0) + 40 * scale;
    const double mass = integrator.integrate([&](double r) { return std::exp(logp(r)); }, 0.0, upper);
    const double h = integrator.integrate([&](double r) { return -std::exp(logp(r)) * logp(r); }, 0.0, upper);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(init_entropy(dist, 1) == doctest::Approx(h).epsilon(1e-9));
    CHECK(init_entropy(dist, 5) == doctest::Approx(5 * h).epsilon(1e-9));
  }
}

TEST_CASE("initial distribution samples and densities") {
  Rng rng(4);
  const auto expo = InitDistribution::exponential_dist(2.0);
  const auto trunc = InitDistribution::truncated_gaussian(-0.5, 1.0);
  const RowMatrix a = init_sample_batch(expo, 200, 20, rng);
  const RowMatrix b = init_sample_batch(trunc, 200, 20, rng);
  CHECK((a.array() >= 0).all());
  CHECK((b.array() >= 0).all());
  const double n = static_cast<double>(a.size());
  CHECK(std::abs(a.mean() - expo.mean()) <= 3 * expo.stddev() / std::sqrt(n));
  CHECK(std::abs(b.mean() - trunc.mean()) <= 3 * trunc.stddev() / std::sqrt(n));

  Vector neg = Vector::Ones(3);
  neg(1) = -0.1;
  CHECK(init_log_density(expo, neg) == -std::numeric_limits<double>::infinity());
  const Vector x = oracle::normal_vector(4, 1);
  double expected = 0;
  for (Index i = 0; i < 4; ++i) expected += normal_logpdf(x(i), 0.5);
  CHECK(init_log_density(InitDistribution::gaussian(0.5), x) == doctest::Approx(expected).epsilon(1e-14));

  CHECK_THROWS_AS(InitDistribution::gaussian(0.0), ModelError);
  CHECK_THROWS_AS(InitDistribution::exponential_dist(-1.0), ModelError);
  CHECK_THROWS_AS(InitDistribution::truncated_gaussian(0.0, 0.0), ModelError);
  CHECK_FALSE(expected_init_log_density(TargetModel(CirProcess{0.5, 1, 1, 1, 4}), expo).has_value());
}

TEST_CASE("positive-support fit") {
  boost::math::normal n;
  SUBCASE("moment equations solved by the truncated Gaussian") {
    for (auto [m, s] : {std::pair{1.0, 0.5}, std::pair{2.0, 0.3}, std::pair{1.0, 0.9}}) {
      const auto dist = InitDistribution::fit_positive(m, s);
      REQUIRE(dist.kind == InitDistribution::Kind::truncated_gaussian);
      // Truncated-normal moments recomputed from Boost's normal law.
      const double a = -dist.location / dist.scale;
      const double tail = boost::math::cdf(boost::math::complement(n, a));
      const double lambda = boost::math::pdf(n, a) / tail;
      const double mean = dist.location + dist.scale * lambda;
      const double var = dist.scale * dist.scale * (1 + a * lambda - lambda * lambda);
      CHECK(mean == doctest::Approx(m).epsilon(1e-8));
      CHECK(std::sqrt(var) == doctest::Approx(s).epsilon(1e-8));
    }
  }
  SUBCASE("mean equal to std gives the exponential law") {
    const auto e = InitDistribution::fit_positive(2.0, 2.0);
    CHECK(e.kind == InitDistribution::Kind::exponential);
    CHECK(e.rate == doctest::Approx(0.5));
    CHECK(InitDistribution::fit_positive(2.0, 1.9995).kind == InitDistribution::Kind::exponential);
    CHECK(InitDistribution::fit_positive(1.0, 3.0).kind == InitDistribution::Kind::exponential);
  }
  SUBCASE("the truncated fit tends to the exponential as std approaches mean") {
    const auto near = InitDistribution::fit_positive(1.0, 0.995);
    REQUIRE(near.kind == InitDistribution::Kind::truncated_gaussian);
    CHECK(near.location < 0.0);
    CHECK(init_entropy(near, 1) == doctest::Approx(1.0).epsilon(1e-2));
    const auto nearer = InitDistribution::fit_positive(1.0, 0.9995);
    CHECK(std::abs(init_entropy(nearer, 1) - 1.0) < std::abs(init_entropy(near, 1) - 1.0));
  }
  CHECK_THROWS_AS(InitDistribution::fit_positive(0.0, 1.0), ModelError);
}
