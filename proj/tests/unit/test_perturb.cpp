#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "t2iaudit/error.hpp"
#include "t2iaudit/perturb.hpp"
#include "t2iaudit/seed.hpp"

using namespace t2iaudit;

namespace {

EmbeddingMatrix matrix(std::size_t rows, std::size_t dims, std::vector<double> v, bool specials = false) {
  std::vector<TokenInfo> toks(rows);
  if (specials) {
    toks.front().special = true;
    toks.back().special = true;
  }
  return EmbeddingMatrix(rows, dims, std::move(v), std::move(toks));
}

EmbeddingMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t dims) {
  std::vector<double> v(rows * dims);
  for (double& a : v) a = rng.normal() * rng.uniform(0.1, 3.0);
  return matrix(rows, dims, std::move(v));
}

}  // namespace

TEST(Sigma, GlobalHandComputed) {
  EXPECT_NEAR(sigma_global(matrix(2, 2, {1, 1, 1, 3})), 0.8660254, 1e-7);
  EXPECT_DOUBLE_EQ(sigma_global(matrix(2, 2, {1, 0, 0, 1})), 0.5);
  EXPECT_EQ(sigma_global(matrix(2, 3, std::vector<double>(6, -2.5))), 0.0);
}

TEST(Sigma, LocalHandComputed) {
  EXPECT_DOUBLE_EQ(sigma_local(matrix(2, 2, {0, 9, 1, 3}), 1), 1.0);
  EXPECT_EQ(sigma_local(matrix(1, 3, {5, 5, 5}), 0), 0.0);
  EXPECT_THROW(sigma_local(matrix(2, 2, {0, 9, 1, 3}), 2), AuditError);
  EXPECT_THROW(sigma_local(matrix(3, 2, {0, 9, 1, 3, 4, 4}, true), 0), AuditError);
}

TEST(Apply, StepOneBoundWithDefaultStepSize) {
  Rng rng(1);
  const auto x = random_matrix(rng, 5, 8);
  const PerturbationSpec spec{.scope = Scope::global(), .step_index = 1, .delta_p = 0.05, .seed = 17};
  const double phi = 0.05 * sigma_global(x);
  EXPECT_DOUBLE_EQ(phi_for(x, spec), phi);
  const auto y = apply(x, spec);
  for (std::size_t k = 0; k < x.values().size(); ++k) {
    const double r = y.values()[k] / x.values()[k];
    EXPECT_GE(r, 1.0 - phi - 1e-12);
    EXPECT_LE(r, 1.0 + phi + 1e-12);
  }
  EXPECT_EQ(y.tokens(), x.tokens());
}

TEST(Apply, SameSeedSameMatrix) {
  Rng rng(2);
  const auto x = random_matrix(rng, 4, 6);
  const PerturbationSpec spec{.scope = Scope::global(), .step_index = 3, .delta_p = 0.05, .seed = 5};
  EXPECT_EQ(apply(x, spec), apply(x, spec));
  auto other = spec;
  other.seed = 6;
  EXPECT_NE(apply(x, spec), apply(x, other));
}

TEST(Apply, LocalLeavesOtherRowsBitIdentical) {
  Rng rng(3);
  const auto x = random_matrix(rng, 6, 5);
  for (std::size_t row = 0; row < 6; ++row) {
    const auto y = apply(x, {.scope = Scope::local(row), .step_index = 4, .delta_p = 0.05, .seed = row});
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < 5; ++c) {
        if (r == row) continue;
        EXPECT_EQ(std::memcmp(&y.values()[r * 5 + c], &x.values()[r * 5 + c], sizeof(double)), 0);
      }
    }
    const double phi = 4 * 0.05 * sigma_local(x, row);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_LE(std::abs(y.at(row, c) / x.at(row, c) - 1.0), phi + 1e-12);
  }
}

TEST(Apply, ZeroEntriesStayZero) {
  const auto x = matrix(2, 3, {0, 1, 2, 3, 0, -4});
  const auto y = apply(x, {.scope = Scope::global(), .step_index = 7, .delta_p = 0.05, .seed = 1});
  EXPECT_EQ(y.at(0, 0), 0.0);
  EXPECT_EQ(y.at(1, 1), 0.0);
}

TEST(Apply, EnvelopeIsMonotoneInStep) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_matrix(rng, 3, 7);
    double prev = 0.0;
    for (std::size_t step = 1; step <= 30; ++step) {
      const auto y = apply(x, {.scope = Scope::global(), .step_index = step, .delta_p = 0.05, .seed = 99});
      double worst = 0.0;
      for (std::size_t k = 0; k < x.values().size(); ++k) {
        worst = std::max(worst, std::abs(y.values()[k] / x.values()[k] - 1.0));
      }
      EXPECT_GE(worst, prev - 1e-15);
      prev = worst;
    }
  }
}

TEST(Apply, ZeroSigmaIsDegenerate) {
  const auto x = matrix(2, 2, {3, 3, 3, 3});
  try {
    apply(x, {.scope = Scope::global(), .step_index = 1, .delta_p = 0.05, .seed = 0});
    FAIL();
  } catch (const AuditError& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
  const auto y = matrix(2, 2, {1, 2, 3, 3});
  EXPECT_THROW(apply(y, {.scope = Scope::local(1), .step_index = 1, .delta_p = 0.05, .seed = 0}), AuditError);
  EXPECT_NO_THROW(apply(y, {.scope = Scope::local(0), .step_index = 1, .delta_p = 0.05, .seed = 0}));
}

TEST(Apply, RejectsInvalidSpecAndSpecialRows) {
  Rng rng(5);
  const auto x = random_matrix(rng, 3, 3);
  EXPECT_THROW(apply(x, {.scope = Scope::global(), .step_index = 0, .delta_p = 0.05, .seed = 0}), AuditError);
  EXPECT_THROW(apply(x, {.scope = Scope::global(), .step_index = 1, .delta_p = 0.0, .seed = 0}), AuditError);
  const auto s = matrix(3, 2, {1, 2, 3, 4, 5, 7}, true);
  EXPECT_THROW(apply(s, {.scope = Scope::local(0), .step_index = 1, .delta_p = 0.05, .seed = 0}), AuditError);
  EXPECT_THROW(apply(s, {.scope = Scope::local(3), .step_index = 1, .delta_p = 0.05, .seed = 0}), AuditError);
}

TEST(Apply, LargePhiIsAllowed) {
  const auto x = matrix(1, 4, {1, -1, 2, -2});
  const auto y = apply(x, {.scope = Scope::global(), .step_index = 40, .delta_p = 1.0, .seed = 3});
  EXPECT_EQ(y.rows(), 1u);
}
