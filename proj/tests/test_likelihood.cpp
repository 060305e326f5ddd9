#include "doctest.h"
#include "oracles.hpp"

#include "mgdm/descent.hpp"
#include "mgdm/likelihood.hpp"
#include "mgdm/models.hpp"

#include <cmath>
#include <memory>

using namespace mgdm;

namespace {

// Phi(x) = c for every x: zero Jacobian and Hessian.
class ConstantEnergy : public EnergySpec {
 public:
  ConstantEnergy(Index d, Index k) : d_(d), k_(k) {}
  Index size() const override { return k_; }
  Index dim() const override { return d_; }
  Vector value(ConstVectorRef) const override { return Vector::Constant(k_, 0.7); }
  Matrix jacobian(ConstVectorRef) const override { return Matrix::Zero(k_, d_); }
  Matrix weighted_hessian(ConstVectorRef, ConstVectorRef) const override { return Matrix::Zero(d_, d_); }
  std::string describe() const override { return "constant"; }

 private:
  Index d_, k_;
};

// K = 2: the AR(1) statistics. K = 5: lags of x and of x^2, valid for d >= 4.
std::shared_ptr<EnergySpec> energy_with(Index k, Index d) {
  if (k == 2) return std::make_shared<AcfEnergy>(d, std::vector<Index>{1, 0});
  using T = SeriesTransform;
  return std::make_shared<MomentEnergy>(
      d, std::vector<LaggedMoment>{{T::identity, 1}, {T::identity, 0}, {T::identity, 2}, {T::square, 0}, {T::square, 1}});
}

// Small random alpha keeps the Jacobian comfortably away from singular.
Vector alpha_for(const EnergySpec& e, std::uint64_t seed) { return oracle::normal_vector(e.size(), seed, 0.3); }

}  // namespace

TEST_CASE("single-particle log-determinant") {
  AcfEnergy e(8, {1, 0});
  const Vector x = oracle::normal_vector(8, 1);
  const Vector alpha = alpha_for(e, 2);
  CHECK(step_logdet_single(x, alpha, e, 0.0).log_abs == 0.0);
  ConstantEnergy flat(8, 3);
  CHECK(step_logdet_single(x, Vector::Zero(3), flat, 0.4).log_abs == 0.0);

  for (double gamma : {0.1, 0.7, 2.0}) {
    auto step = [&](const Vector& y) { return gd_step(y, alpha, e, gamma); };
    const double expected = oracle::log_abs_det(oracle::jacobian(step, x));
    CHECK(std::abs(step_logdet_single(x, alpha, e, gamma).log_abs - expected) <= 1e-6);
  }
  SquaredAcfEnergy sq(8, {3, false, false});
  const Vector asq = alpha_for(sq, 3);
  auto step = [&](const Vector& y) { return gd_step(y, asq, sq, 0.3); };
  CHECK(std::abs(step_logdet_single(x, asq, sq, 0.3).log_abs - oracle::log_abs_det(oracle::jacobian(step, x))) <=
        1e-6);
}

TEST_CASE("singular step Jacobian is reported") {
  AcfEnergy e(4, {0});
  // A = I - gamma (2/d) r I - gamma J^T J vanishes in the directions orthogonal to x
  // when gamma (2/d) r = 1.
  const Vector x = Vector::Unit(4, 0);
  const double r = 1.0;
  Vector alpha(1);
  alpha << e.value(x)(0) - r;
  CHECK_THROWS_AS(step_logdet_single(x, alpha, e, 2.0), SingularFlowError);
  RowMatrix b(1, 4);
  b.row(0) = x.transpose();
  try {
    (void)step_logdet_mf_fast(b, alpha, e, 2.0);
    FAIL("expected a singular-flow error");
  } catch (const SingularFlowError& err) {
    CHECK(err.particle() == 0);
  }
}

TEST_CASE("fast coupled determinant matches the dense oracle") {
  Index cases = 0;
  for (Index k : {2, 5}) {
    for (Index n : {1, 2, 4}) {
      for (Index d : {4, 8, 16}) {
        const auto spec = energy_with(k, d);
        const EnergySpec& e = *spec;
        REQUIRE(e.size() == k);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
          const RowMatrix batch = oracle::normal_batch(n, d, 1000 * k + 100 * n + 10 * d + seed);
          const Vector alpha = alpha_for(e, seed + 7);
          const double gamma = 0.5 * default_step_size(batch, e, 1.0);
          const double fast = step_logdet_mf_fast(batch, alpha, e, gamma).log_abs;
          const double dense = step_logdet_mf_dense(batch, alpha, e, gamma).log_abs;
          CHECK(std::abs(fast - dense) <= 1e-8 * std::max(1.0, std::abs(dense)));
          ++cases;
        }
      }
    }
  }
  CHECK(cases == 360);
}

TEST_CASE("fast coupled determinant with a state-dependent Hessian") {
  SquaredAcfEnergy e(16, {3, true, false});
  for (Index n : {1, 3}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const RowMatrix batch = oracle::normal_batch(n, 16, 50 + seed);
      const Vector alpha = alpha_for(e, seed);
      const double gamma = 0.2 * default_step_size(batch, e, 1.0);
      const double dense = step_logdet_mf_dense(batch, alpha, e, gamma).log_abs;
      CHECK(std::abs(step_logdet_mf_fast(batch, alpha, e, gamma).log_abs - dense) <=
            1e-8 * std::max(1.0, std::abs(dense)));
    }
  }
}

TEST_CASE("coupled determinant at N = 1 and gamma = 0") {
  AcfEnergy e(12, {1, 0, 2});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RowMatrix one = oracle::normal_batch(1, 12, seed);
    const Vector alpha = alpha_for(e, seed);
    const double single = step_logdet_single(one.row(0).transpose(), alpha, e, 0.4).log_abs;
    CHECK(std::abs(step_logdet_mf_fast(one, alpha, e, 0.4).log_abs - single) <= 1e-10);
    CHECK(std::abs(step_logdet_mf_dense(one, alpha, e, 0.4).log_abs - single) <= 1e-10);
  }
  CHECK(step_logdet_mf_fast(oracle::normal_batch(3, 12, 1), alpha_for(e, 1), e, 0.0).log_abs == 0.0);
}

TEST_CASE("dense coupled Jacobian") {
  AcfEnergy e(4, {1, 0});
  const RowMatrix batch = oracle::normal_batch(2, 4, 9);
  const Vector alpha = alpha_for(e, 9);
  const double gamma = 0.3;
  const Matrix full = mf_step_jacobian_dense(batch, alpha, e, gamma);

  const Matrix j0 = e.jacobian(batch.row(0).transpose());
  const Matrix j1 = e.jacobian(batch.row(1).transpose());
  CHECK((full.block(0, 4, 4, 4) - (-(gamma / 2) * j0.transpose() * j1)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((full.block(4, 0, 4, 4) - (-(gamma / 2) * j1.transpose() * j0)).cwiseAbs().maxCoeff() <= 1e-15);

  auto step = [&](const Vector& flat) {
    RowMatrix b = Eigen::Map<const RowMatrix>(flat.data(), 2, 4);
    const RowMatrix out = mf_step(b, alpha, e, gamma);
    return Vector(Eigen::Map<const Vector>(out.data(), out.size()));
  };
  const Vector flat = Eigen::Map<const Vector>(batch.data(), batch.size());
  CHECK(oracle::relative_error(full, oracle::jacobian(step, flat)) <= 1e-5);

  CHECK_THROWS_AS(mf_step_jacobian_dense(oracle::normal_batch(5, 4, 1), alpha, e, gamma, 16), OracleScaleError);
}

TEST_CASE("trace identity for the concatenated Jacobian") {
  SquaredAcfEnergy e(10, {2, false, false});
  const RowMatrix batch = oracle::normal_batch(3, 10, 4);
  const Matrix jj = concatenated_jacobian(batch, e);
  double sum = 0;
  for (Index n = 0; n < 3; ++n) {
    const Matrix j = e.jacobian(batch.row(n).transpose());
    sum += (j.transpose() * j).trace();
  }
  CHECK((jj.transpose() * jj).trace() == doctest::Approx(sum).epsilon(1e-13));
}

TEST_CASE("projected log-determinant") {
  AcfEnergy e(6, {1, 0});
  const RowMatrix batch = oracle::normal_batch(2, 6, 12).cwiseAbs();
  const Vector alpha = alpha_for(e, 12);
  const double gamma = 0.4;
  const Mask all = Mask::Constant(2, 6, true);
  const Mask none = Mask::Constant(2, 6, false);

  CHECK(std::abs(step_logdet_projected(batch, all, alpha, e, gamma, true).log_abs -
                 step_logdet_mf_fast(batch, alpha, e, gamma).log_abs) <= 1e-12);
  const double per_sample = step_logdet_single(batch.row(0).transpose(), alpha, e, gamma).log_abs +
                            step_logdet_single(batch.row(1).transpose(), alpha, e, gamma).log_abs;
  CHECK(std::abs(step_logdet_projected(batch, all, alpha, e, gamma, false).log_abs - per_sample) <= 1e-12);
  CHECK(step_logdet_projected(batch, none, alpha, e, gamma, true).log_abs == 0.0);
  CHECK(step_logdet_projected(batch, none, alpha, e, gamma, false).log_abs == 0.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Mask partial(2, 6);
    mgdm::Rng rng(seed);
    std::bernoulli_distribution coin(0.6);
    for (Index i = 0; i < partial.size(); ++i) partial.data()[i] = coin(rng);
    for (bool mf : {true, false}) {
      const double fast = step_logdet_projected(batch, partial, alpha, e, gamma, mf).log_abs;
      const double dense = step_logdet_projected_dense(batch, partial, alpha, e, gamma, mf).log_abs;
      CHECK(std::abs(fast - dense) <= 1e-8 * std::max(1.0, std::abs(dense)));
    }
  }

  // Independent check: restrict the finite-difference Jacobian of the coupled map.
  Mask crafted = all;
  crafted(0, 2) = false;
  crafted(1, 0) = false;
  crafted(1, 5) = false;
  auto step = [&](const Vector& flat) {
    RowMatrix b = Eigen::Map<const RowMatrix>(flat.data(), 2, 6);
    const RowMatrix out = mf_step(b, alpha, e, gamma);
    return Vector(Eigen::Map<const Vector>(out.data(), out.size()));
  };
  const Matrix fd = oracle::jacobian(step, Eigen::Map<const Vector>(batch.data(), batch.size()));
  std::vector<Index> idx;
  for (Index i = 0; i < 12; ++i) {
    if (crafted.data()[i]) idx.push_back(i);
  }
  const double expected = oracle::log_abs_det(fd(idx, idx));
  CHECK(std::abs(step_logdet_projected(batch, crafted, alpha, e, gamma, true).log_abs - expected) <= 1e-6);

  CHECK_THROWS_AS(step_logdet_projected(batch, Mask::Constant(2, 5, true), alpha, e, gamma, true), DimensionError);
}

TEST_CASE("flow trace bookkeeping") {
  FlowTrace trace(FlowMode::per_sample, 3, 1);
  CHECK(trace.steps() == 0);
  CHECK(trace.accumulated(0).isZero(0));
  std::vector<Vector> steps;
  for (int t = 0; t < 6; ++t) {
    steps.push_back(oracle::normal_vector(3, 40 + t));
    trace.append(steps.back());
  }
  for (Index t = 0; t <= 6; ++t) {
    Vector sum = Vector::Zero(3);
    for (Index s = 0; s < t; ++s) sum += steps[static_cast<std::size_t>(s)];
    CHECK(trace.accumulated(t) == sum);
  }
  CHECK(trace.step(2) == steps[2]);
  CHECK_THROWS_AS(trace.append(Vector::Zero(2)), InputError);
  CHECK_THROWS_AS(trace.step(6), InputError);
  CHECK_THROWS_AS(trace.accumulated(7), InputError);
  CHECK_THROWS_AS(FlowTrace(FlowMode::per_batch, 0, 1), InputError);

  FlowTrace shorter(FlowMode::per_sample, 2, 1);
  shorter.append(Vector::Ones(2));
  const FlowTrace joined = FlowTrace::concatenate({trace, shorter});
  CHECK(joined.replicas() == 5);
  CHECK(joined.steps() == 6);
  CHECK(joined.accumulated(6).tail(2) == Vector::Ones(2));
  CHECK(joined.accumulated(6).head(3) == trace.accumulated(6));
  CHECK_THROWS_AS(FlowTrace::concatenate({trace, FlowTrace(FlowMode::per_batch, 1, 1)}), InputError);
  CHECK_THROWS_AS(FlowTrace::concatenate({}), InputError);
}

TEST_CASE("entropy estimates") {
  FlowTrace trace(FlowMode::per_batch, 4, 8);
  const double h0 = init_entropy(InitDistribution::gaussian(1.0), 8 * 16);
  auto e0 = entropy_estimate(h0, trace, 0, EntropyNormalization::total, 16);
  CHECK(e0.mean == h0);
  CHECK(e0.std_error == 0.0);
  trace.append(Vector::Zero(4));
  CHECK(entropy_estimate(h0, trace, 1, EntropyNormalization::total, 16).mean == h0);
  CHECK(entropy_estimate(h0, trace, 1, EntropyNormalization::per_sample, 16).mean == doctest::Approx(h0 / 8));
  CHECK(entropy_estimate(h0, trace, 1, EntropyNormalization::rate, 16).mean == doctest::Approx(h0 / 128));
  CHECK_THROWS_AS(entropy_estimate(h0, trace, 2, EntropyNormalization::total, 16), InputError);

  Vector v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  trace.append(v);
  const auto e2 = entropy_estimate(h0, trace, 2, EntropyNormalization::total, 16);
  CHECK(e2.mean == doctest::Approx(h0 + 2.5));
  CHECK(e2.std_error == doctest::Approx(std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0 / 4.0)));
}

TEST_CASE("entropy of a linear contraction") {
  // x -> c x has log|det| = d log c at every step, so
  // H(q_t) = H(q_0) + t d log c exactly.
  const Index d = 10;
  const double c = 0.9;
  const auto init = InitDistribution::gaussian(2.0);
  FlowTrace trace(FlowMode::per_sample, 5, 1);
  RowMatrix x = oracle::normal_batch(5, d, 3, std::sqrt(2.0));
  for (int t = 1; t <= 7; ++t) {
    Vector step(5);
    for (Index n = 0; n < 5; ++n) {
      auto map = [&](const Vector& y) { return Vector(c * y); };
      step(n) = oracle::log_abs_det(oracle::jacobian(map, x.row(n).transpose()));
    }
    trace.append(step);
    x *= c;
    const double expected = init_entropy(init, d) + t * d * std::log(c);
    const auto est = entropy_estimate(init_entropy(init, d), trace, t, EntropyNormalization::total, d);
    CHECK(est.mean == doctest::Approx(expected).epsilon(1e-9));
    // The pushforward of N(0, 2) by c^t is N(0, 2 c^{2t}).
    CHECK(est.mean == doctest::Approx(init_entropy(InitDistribution::gaussian(2.0 * std::pow(c, 2 * t)), d))
                          .epsilon(1e-9));
  }
}

TEST_CASE("reverse KL estimator") {
  EntropyEstimate h;
  h.mean = 3.0;
  h.std_error = 0.1;
  const std::vector<double> lp = {-4.0, -5.0, -6.0};
  const KlEstimate kl = reverse_kl(h, lp);
  CHECK(kl.neg_entropy == -3.0);
  CHECK(kl.expected_log_likelihood == doctest::Approx(-5.0));
  CHECK(kl.kl == kl.neg_entropy - kl.expected_log_likelihood);
  CHECK(kl.se_log_likelihood == doctest::Approx(std::sqrt(1.0 / 3.0)));
  CHECK(kl.se_kl == doctest::Approx(std::hypot(0.1, std::sqrt(1.0 / 3.0))));

  std::vector<double> shifted = lp;
  for (double& v : shifted) v += 1.25;
  CHECK(reverse_kl(h, shifted).kl == doctest::Approx(kl.kl - 1.25).epsilon(1e-15));

  std::vector<double> with_bad = lp;
  with_bad.push_back(-std::numeric_limits<double>::infinity());
  const KlEstimate r = reverse_kl(h, with_bad);
  CHECK(r.rejected == 1);
  CHECK(r.kl == kl.kl);

  const std::vector<double> lp0 = {-4.5, -5.0, -5.0};
  const KlEstimate p = reverse_kl_paired(h, lp, lp0, -4.0);
  CHECK(p.expected_log_likelihood == doctest::Approx(-4.0 + (0.5 + 0.0 - 1.0) / 3.0));
  CHECK(p.kl == p.neg_entropy - p.expected_log_likelihood);
  CHECK_THROWS_AS(reverse_kl_paired(h, lp, std::vector<double>{1.0}, 0.0), InputError);
  CHECK_THROWS_AS(reverse_kl_paired(h, lp, lp0, std::numeric_limits<double>::quiet_NaN()), InputError);
}

TEST_CASE("zero-step KL against a matched white-noise target") {
  const Index d = 32;
  const Index m = 64;
  const auto init = InitDistribution::gaussian(1.0);
  TargetModel target(ArProcess{{0.0}, 1.0, d});
  mgdm::Rng rng(17);
  const RowMatrix x = init_sample_batch(init, m, d, rng);
  std::vector<double> lp;
  for (Index n = 0; n < m; ++n) lp.push_back(target.log_density(x.row(n).transpose()));
  FlowTrace trace(FlowMode::per_sample, m, 1);
  const auto h = entropy_estimate(init_entropy(init, d), trace, 0, EntropyNormalization::per_sample, d);
  const KlEstimate kl = reverse_kl(h, lp);
  CHECK(std::abs(kl.kl) <= 3 * kl.se_kl);
  CHECK(kl.se_kl > 0);
  const auto expected0 = expected_init_log_density(target, init);
  REQUIRE(expected0.has_value());
  CHECK(std::abs(reverse_kl_paired(h, lp, lp, *expected0).kl) <= 1e-12);
}

TEST_CASE("descent traces carry the step log-determinants") {
  AcfEnergy e(10, {1, 0});
  const Vector alpha = (Vector(2) << 0.2, 0.9).finished();
  const RowMatrix start = oracle::normal_batch(3, 10, 31);
  DescentConfig c;
  c.batch_size = 3;
  c.step_size = 0.4;
  c.max_steps = 6;

  const DescentResult mf = run_descent_from(start, c, alpha, e);
  RowMatrix state = start;
  for (Index t = 0; t < 6; ++t) {
    CHECK(mf.trace.step(t)(0) == doctest::Approx(step_logdet_mf_dense(state, alpha, e, 0.4).log_abs).epsilon(1e-10));
    state = mf_step(state, alpha, e, 0.4);
  }

  c.mode = DescentMode::mgdm;
  const DescentResult lemma = run_descent_from(start, c, alpha, e);
  c.logdet_method = LogDetMethod::dense;
  const DescentResult dense = run_descent_from(start, c, alpha, e);
  for (Index t = 0; t < 6; ++t) CHECK((lemma.trace.step(t) - dense.trace.step(t)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(dense.trace.step(0)(1) ==
        doctest::Approx(step_logdet_single(start.row(1).transpose(), alpha, e, 0.4).log_abs).epsilon(1e-12));
}

TEST_CASE("local Lipschitz constants") {
  AcfEnergy e(8, {0});
  const RowMatrix batch = oracle::normal_batch(3, 8, 2);
  const auto est = local_lipschitz(batch, e);
  CHECK(est.eta == doctest::Approx(2.0 / 8.0));
  double beta = 0;
  for (Index n = 0; n < 3; ++n) beta = std::max(beta, 2.0 / 8.0 * batch.row(n).norm());
  CHECK(est.beta == doctest::Approx(beta).epsilon(1e-12));
}

TEST_CASE("entropy-rate bound diagnostic") {
  const std::vector<double> dist = {1.0, 0.5, 0.25, 0.1};
  const std::vector<double> beta = {2.0};
  const std::vector<double> eta = {0.5};
  const double h0 = 100.0;
  const auto b = theorem1_diagnostic(h0, 2, 10, 3, 0.01, dist, beta, eta);
  REQUIRE(b.bound_rate.size() == 4);
  CHECK(b.bound_rate[0] == doctest::Approx(h0 / 20.0));
  const double expected3 = h0 / 20.0 - 2 * 0.01 * (0.5 * std::sqrt(3.0) * 1.75 + (3.0 / 20.0) * 4.0 * 3);
  CHECK(b.bound_rate[3] == doctest::Approx(expected3));
  for (std::size_t t = 1; t < 4; ++t) CHECK(b.bound_rate[t] < b.bound_rate[t - 1]);

  // Larger N with the same per-dimension start shrinks the beta term.
  const std::vector<double> zero = {0.0, 0.0, 0.0, 0.0};
  const auto small = theorem1_diagnostic(20.0 * 5.0, 2, 10, 3, 0.01, zero, beta, eta);
  const auto large = theorem1_diagnostic(80.0 * 5.0, 8, 10, 3, 0.01, zero, beta, eta);
  CHECK(small.bound_rate[0] == large.bound_rate[0]);
  CHECK(large.bound_rate[3] > small.bound_rate[3]);

  const std::vector<double> growing = {1.0, 3.0, 2.0, 4.0};
  const auto run = theorem1_diagnostic(h0, 1, 10, 3, 0.01, dist, growing, growing);
  CHECK(run.beta == std::vector<double>{1.0, 3.0, 3.0, 4.0});
  CHECK_THROWS_AS(theorem1_diagnostic(h0, 1, 10, 3, 0.01, dist, std::vector<double>{1.0, 2.0}, eta), InputError);
}

TEST_CASE("second-order Taylor remainder of the log-determinant") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix g = oracle::normal_batch(6, 6, seed);
    const Matrix a = 0.5 * (g + g.transpose());
    std::vector<double> gammas, rems;
    for (double gamma = 1e-2; gamma >= 1e-5 * 0.99; gamma /= 2) {
      gammas.push_back(gamma);
      rems.push_back(logdet_taylor_remainder(a, gamma));
    }
    CHECK(oracle::loglog_slope(gammas, rems) >= 1.9);
    // Leading coefficient: 0.5 tr(A^2).
    CHECK(logdet_taylor_remainder(a, 1e-4) / 1e-8 == doctest::Approx(0.5 * (a * a).trace()).epsilon(1e-3));
  }
}
