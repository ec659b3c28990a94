#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace nmfsem;

namespace {

std::map<std::size_t, std::size_t> fold_sizes(const std::vector<std::size_t>& f) {
  std::map<std::size_t, std::size_t> m;
  for (auto x : f) ++m[x];
  return m;
}

CvCell cell(std::size_t q, double l1, double l2, double mae, bool stable = true) {
  CvCell c;
  c.q = q;
  c.lambda1 = l1;
  c.lambda2 = l2;
  c.mean_mae = mae;
  c.stable = stable;
  return c;
}

Dataset sim_data(double rho, std::size_t n, std::uint64_t seed) {
  SimCondition c;
  c.rho_true = rho;
  c.n = n;
  c.seed = seed;
  return generate(c).data;
}

}  // namespace

TEST(KfoldSplit, SizesAndDeterminism) {
  auto s = fold_sizes(kfold_split(10, 5, 1));
  ASSERT_EQ(s.size(), 5u);
  for (auto& [f, n] : s) EXPECT_EQ(n, 2u) << "fold " << f;

  s = fold_sizes(kfold_split(7, 3, 1));
  std::vector<std::size_t> sizes;
  for (auto& [f, n] : s) sizes.push_back(n);
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 3}));

  EXPECT_EQ(kfold_split(50, 5, 9), kfold_split(50, 5, 9));
  EXPECT_NE(kfold_split(50, 5, 9), kfold_split(50, 5, 10));
  EXPECT_THROW(kfold_split(3, 4, 1), DomainError);
  EXPECT_THROW(kfold_split(3, 1, 1), DomainError);
}

TEST(KfoldSplit, BalancedForAllSmallCases) {
  for (std::size_t n = 2; n <= 30; ++n) {
    for (std::size_t k = 2; k <= n; ++k) {
      const auto s = fold_sizes(kfold_split(n, k, n * 31 + k));
      ASSERT_EQ(s.size(), k);
      std::size_t lo = n, hi = 0;
      for (auto& [f, c] : s) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      EXPECT_LE(hi - lo, 1u);
    }
  }
}

TEST(SelectBest, TieBreaksTowardSparsity) {
  EXPECT_EQ(select_best({cell(2, 0.1, 0.0, 0.5), cell(2, 0.2, 0.0, 0.5)}), 1u);
  EXPECT_EQ(select_best({cell(2, 0.2, 0.0, 0.5), cell(2, 0.1, 0.0, 0.5)}), 0u);
  // equal lambda1 + lambda2: larger lambda1 wins
  EXPECT_EQ(select_best({cell(2, 0.1, 0.2, 0.5), cell(2, 0.2, 0.1, 0.5)}), 1u);
  // then smaller q
  EXPECT_EQ(select_best({cell(3, 0.1, 0.1, 0.5), cell(2, 0.1, 0.1, 0.5)}), 1u);
  // strictly lower MAE beats sparsity
  EXPECT_EQ(select_best({cell(2, 0.0, 0.0, 0.4), cell(2, 1.0, 1.0, 0.5)}), 0u);
}

TEST(SelectBest, SkipsUnstableAndFailsWhenNoneStable) {
  EXPECT_EQ(select_best({cell(2, 0, 0, 0.1, false), cell(2, 0, 0, 0.3)}), 1u);
  EXPECT_THROW(select_best({cell(2, 0, 0, 0.1, false)}), NoFeasibleModel);
}

TEST(SelectBest, DominatedCellsNeverChangeWinner) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<CvCell> cells;
    for (int k = 0; k < 5; ++k) cells.push_back(cell(2, u(rng), u(rng), u(rng), u(rng) > 0.3));
    std::size_t winner;
    try {
      winner = select_best(cells);
    } catch (const NoFeasibleModel&) {
      continue;
    }
    const auto w = cells[winner];
    auto bigger = cells;
    bigger.push_back(cell(2, 5.0, 5.0, w.mean_mae * 1.5));
    bigger.push_back(cell(2, 9.0, 9.0, 0.0, false));
    const auto w2 = bigger[select_best(bigger)];
    EXPECT_EQ(w2.lambda1, w.lambda1);
    EXPECT_EQ(w2.lambda2, w.lambda2);
  }
}

TEST(DefaultGrid, ScaledByData) {
  const auto d = sim_data(0.0, 40, 1);
  const auto g = default_grid(d);
  const double s = data_scale(d);
  ASSERT_EQ(g.lambda1_values.size(), 5u);
  EXPECT_EQ(g.lambda1_values.front(), 0.0);
  EXPECT_DOUBLE_EQ(g.lambda1_values.back(), s);
  EXPECT_DOUBLE_EQ(g.lambda2_values[2], 0.01 * s);
  EXPECT_EQ(g.lambda_x, 100.0);
  EXPECT_EQ(g.k_folds, 5u);
}

TEST(CrossValidate, SingleCellOnFeedforwardData) {
  const auto d = sim_data(0.0, 100, 2);
  CvGrid g;
  g.lambda1_values = {0.0};
  g.lambda2_values = {0.0};
  FitConfig base;
  base.q = 3;
  base.seed = 4;
  const auto cv = cross_validate(d, g, base, 1);
  ASSERT_EQ(cv.cells.size(), 1u);
  EXPECT_EQ(cv.best, 0u);
  EXPECT_TRUE(cv.cells[0].stable);
  EXPECT_LE(cv.cells[0].mean_mae, 0.05);
  EXPECT_EQ(cv.fold_assignments.size(), 100u);
}

TEST(CrossValidate, WinnerIsStableAndThreadIndependent) {
  const auto d = sim_data(0.2, 60, 3);
  CvGrid g;
  g.lambda1_values = {0.0, 1.0};
  g.lambda2_values = {0.0, 0.5};
  g.q_values = {2, 3};
  g.k_folds = 3;
  FitConfig base;
  base.max_iter = 300;
  const auto a = cross_validate(d, g, base, 1);
  const auto b = cross_validate(d, g, base, 3);
  ASSERT_EQ(a.cells.size(), 8u);
  EXPECT_EQ(a.best, b.best);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].mean_mae, b.cells[i].mean_mae);
    EXPECT_EQ(a.cells[i].fold_rho, b.cells[i].fold_rho);
  }
  const auto& w = a.best_cell();
  EXPECT_TRUE(w.stable);
  for (double r : w.fold_rho) EXPECT_LT(r, 1.0);
}

TEST(CrossValidate, GridValidation) {
  const auto d = sim_data(0.0, 20, 4);
  CvGrid g;
  g.lambda1_values = {0.0};
  g.lambda2_values = {};
  EXPECT_THROW(cross_validate(d, g, FitConfig{}), DomainError);
  g.lambda2_values = {-1.0};
  EXPECT_THROW(cross_validate(d, g, FitConfig{}), DomainError);
  g.lambda2_values = {0.0};
  g.k_folds = 21;
  EXPECT_THROW(cross_validate(d, g, FitConfig{}), DomainError);
}
