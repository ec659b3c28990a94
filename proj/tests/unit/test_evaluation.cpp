#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace nmfsem;
using testing_support::model_data;
using testing_support::random_params;
using testing_support::uniform;

TEST(ScMap, Examples) {
  std::mt19937_64 rng(1);
  const Matrix a = uniform(4, 3, rng);
  EXPECT_NEAR(sc_map(a, a), 1.0, 1e-15);
  EXPECT_NEAR(sc_map(2.0 * a.array() + 3.0, a), 1.0, 1e-12);
  EXPECT_NEAR(sc_map(-a, a), -1.0, 1e-12);
  EXPECT_THROW(sc_map(Matrix::Constant(4, 3, 0.2), a), DegenerateError);
  EXPECT_THROW(sc_map(a, Matrix::Ones(3, 4)), DimensionError);
  EXPECT_THROW(sc_map(Matrix::Ones(1, 1), Matrix::Ones(1, 1)), DegenerateError);
}

TEST(ScMap, PearsonOracle) {
  // Hand-computed: x = (1,2,3,4), y = (2,1,4,3): r = 0.6.
  Matrix x(2, 2), y(2, 2);
  x << 1, 3, 2, 4;
  y << 2, 4, 1, 3;
  EXPECT_NEAR(sc_map(x, y), 0.6, 1e-15);
}

TEST(ScMap, AffineInvarianceProperty) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coef(0.1, 10.0);
  for (int t = 0; t < 100; ++t) {
    const Matrix a = uniform(3, 3, rng), b = uniform(3, 3, rng);
    const double r = sc_map(a, b);
    const Matrix a2 = coef(rng) * a.array() + coef(rng);
    const Matrix b2 = coef(rng) * b.array() + coef(rng);
    EXPECT_NEAR(sc_map(a2, b2), r, 1e-10);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(ScCov, ExactModelGivesOne) {
  std::mt19937_64 rng(3);
  const auto p = random_params(6, 3, 3, 0.0, rng);
  const auto data = model_data(p, 50, rng);
  EXPECT_NEAR(sc_cov(p.direct_effect(), data), 1.0, 1e-6);
  // Y1 replaced by its prediction.
  const auto q = random_params(6, 3, 3, 0.5, rng);
  const auto eq = equilibrium(q);
  const Dataset hat(NonNegMatrix(predict(eq, data.y2)), data.y2);
  EXPECT_NEAR(sc_cov(*eq.m_model, hat), 1.0, 1e-12);
  EXPECT_THROW(sc_cov(Matrix::Ones(2, 2), data), DimensionError);
}

TEST(Mae, Examples) {
  std::mt19937_64 rng(4);
  const Matrix a = uniform(3, 5, rng);
  EXPECT_EQ(mae(a, a), 0.0);
  EXPECT_NEAR(mae(a, a.array() + 0.1), 0.1, 1e-15);
  EXPECT_THROW(mae(a, a.transpose()), DimensionError);
  for (int t = 0; t < 50; ++t) {
    const Matrix b = uniform(3, 5, rng);
    EXPECT_GT(mae(a, b), 0.0);
    EXPECT_DOUBLE_EQ(mae(a, b), mae(b, a));
  }
}

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> v = {4, 1, 3, 2, 5};
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(percentile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(percentile(v, 0.1), 1.4);  // h = 0.4
  EXPECT_DOUBLE_EQ(percentile({2.0}, 0.3), 2.0);
  EXPECT_THROW(percentile({}, 0.5), DomainError);
  const auto i = percentile_interval({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 0.9);
  EXPECT_DOUBLE_EQ(i.lo, 1.5);
  EXPECT_DOUBLE_EQ(i.hi, 10.5);
}

TEST(Percentile, WideningSampleKeepsOrder) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v;
  for (int k = 0; k < 200; ++k) {
    v.push_back(u(rng));
    const auto i = percentile_interval(v);
    EXPECT_LE(i.lo, i.hi);
  }
}

namespace {

Dataset small_feedback_data(std::uint64_t seed, std::size_t n = 60) {
  SimCondition c;
  c.n = n;
  c.rho_true = 0.2;
  c.seed = seed;
  return generate(c).data;
}

FitConfig small_config() {
  FitConfig cfg;
  cfg.q = 3;
  cfg.max_iter = 300;
  return cfg;
}

}  // namespace

TEST(Bootstrap, IdentityResampleGivesDegenerateInterval) {
  const auto d = small_feedback_data(1);
  BootstrapOptions opt;
  opt.b = 2;
  opt.resample = false;
  const auto r = bootstrap(d, small_config(), opt);
  EXPECT_EQ(r.b, 2u);
  EXPECT_EQ(r.retained(), 2u);
  EXPECT_EQ(r.rho_interval.lo, r.rho_point);
  EXPECT_EQ(r.rho_interval.hi, r.rho_point);
  ASSERT_TRUE(r.ar_point);
  EXPECT_EQ(r.ar_interval.lo, *r.ar_point);
  EXPECT_EQ(r.ar_interval.hi, *r.ar_point);
}

TEST(Bootstrap, ReproducibleAndThreadIndependent) {
  const auto d = small_feedback_data(2);
  BootstrapOptions opt;
  opt.b = 12;
  opt.seed = 77;
  opt.threads = 1;
  const auto a = bootstrap(d, small_config(), opt);
  opt.threads = 4;
  const auto b = bootstrap(d, small_config(), opt);
  EXPECT_EQ(a.rho_values, b.rho_values);
  EXPECT_EQ(a.ar_values, b.ar_values);
  EXPECT_EQ(a.rho_interval, b.rho_interval);
  EXPECT_EQ(a.ar_interval, b.ar_interval);
  EXPECT_LE(a.rho_interval.lo, a.rho_interval.hi);
  EXPECT_LE(a.ar_interval.lo, a.ar_interval.hi);
  EXPECT_EQ(a.retained() + a.n_unstable + a.n_failed, a.b);
  opt.seed = 78;
  const auto c = bootstrap(d, small_config(), opt);
  EXPECT_NE(a.rho_values, c.rho_values);
}

TEST(Bootstrap, Errors) {
  const auto d = small_feedback_data(3);
  BootstrapOptions opt;
  opt.b = 1;
  EXPECT_THROW(bootstrap(d, small_config(), opt), DomainError);
  opt.b = 4;
  opt.level = 1.0;
  EXPECT_THROW(bootstrap(d, small_config(), opt), DomainError);
}

TEST(Bootstrap, InsufficientStableReplicates) {
  // A single exogenous variable that is nonzero in one observation only:
  // resamples that miss it cannot be refitted.
  std::mt19937_64 rng(6);
  Matrix y2 = Matrix::Zero(1, 30);
  y2(0, 7) = 1.0;
  const Dataset d(NonNegMatrix(uniform(3, 30, rng)), NonNegMatrix(y2));
  FitConfig cfg;
  cfg.q = 1;
  cfg.max_iter = 50;
  BootstrapOptions opt;
  opt.b = 3;
  opt.seed = 4;  // two of the three resamples miss observation 7
  try {
    bootstrap(d, cfg, opt);
    ADD_FAILURE() << "expected InsufficientReplicates";
  } catch (const InsufficientReplicates& e) {
    EXPECT_NE(std::string(e.what()).find("only 1 of 3"), std::string::npos) << e.what();
  }
  opt.seed = 1;  // one resample misses it: counted as failed, not fatal
  const auto r = bootstrap(d, cfg, opt);
  EXPECT_EQ(r.retained(), 2u);
  EXPECT_EQ(r.n_failed, 1u);
}
