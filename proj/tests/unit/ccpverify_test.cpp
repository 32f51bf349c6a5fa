#include <sstream>

#include <gtest/gtest.h>

#include "hsp/ccpverify.hpp"

namespace hsp {
namespace {

// Every asset equals a single factor which is also observed as a driver.
data::SyntheticSpec noise_free(std::size_t n_assets = 6) {
  data::SyntheticSpec s;
  s.n_assets = n_assets;
  s.n_common_factors = 1;
  s.n_idio_drivers_per_asset = 0;
  s.n_noise_drivers = 8;
  s.factor_loadings = Matrix::Ones(static_cast<Eigen::Index>(n_assets), 1);
  s.noise_vol = 0.0;
  s.horizon = 300;
  return s;
}

TEST(Screening, HandCounts) {
  // C splits the sample in two halves; A follows C exactly, B is independent of C.
  const std::vector<double> c{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> b{1, 8, 2, 7, 3, 6, 4, 5};
  const auto s = ccp::screening(a, b, c);
  EXPECT_DOUBLE_EQ(s.margin_a, 1.0);
  EXPECT_DOUBLE_EQ(s.margin_b, 0.0);
  EXPECT_FALSE(s.monotone);
  EXPECT_DOUBLE_EQ(s.residual_c, 0.0);
  EXPECT_DOUBLE_EQ(s.residual_not_c, 0.0);
  EXPECT_THROW(ccp::screening(a, b, std::vector<double>(8, 1.0)), Error);
  EXPECT_THROW(ccp::screening(a, b, std::vector<double>{1, 2}), Error);
}

TEST(Ccp, NoiseFreeConstructionAlwaysPasses) {
  ccp::CcpExperiment ex;
  ex.spec = noise_free();
  ex.n_seeds = 20;
  ex.k = 1;
  ex.weights = ccp::WeightScheme::random;
  ex.weight_draws = 10;
  ex.lead = 0;
  const auto r = ccp::run_ccp(ex);
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_EQ(r.average_pass_fraction, 1.0);
  EXPECT_EQ(r.portfolio_pass_fraction, 1.0);
  EXPECT_EQ(r.recovery_fraction, 1.0);
  for (const auto& s : r.seeds) {
    EXPECT_NEAR(s.avg_common, 1.0, 1e-12);
    EXPECT_NEAR(s.avg_common, s.avg_specific, 1e-12);
    EXPECT_GT(s.avg_common, s.avg_all);
    EXPECT_EQ(s.chosen, (std::vector<std::string>{"C01"}));
    EXPECT_DOUBLE_EQ(s.screening.residual_c, 0.0);
  }
}

TEST(Ccp, SingleSeedDeterministic) {
  ccp::CcpExperiment ex;
  ex.n_seeds = 1;
  ex.spec.horizon = 250;
  const auto a = ccp::run_ccp(ex);
  ex.threads = 2;
  const auto b = ccp::run_ccp(ex);
  ASSERT_EQ(a.seeds.size(), 1u);
  std::ostringstream ca, cb;
  ccp::write_csv(a, ca);
  ccp::write_csv(b, cb);
  const auto csv = ca.str();
  EXPECT_EQ(csv, cb.str());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  ex.master_seed = 1;
  EXPECT_NE(ccp::run_ccp(ex).seeds[0].seed, a.seeds[0].seed);
}

TEST(Ccp, CorrelationsBounded) {
  ccp::CcpExperiment ex;
  ex.n_seeds = 8;
  ex.spec.horizon = 250;
  ex.weights = ccp::WeightScheme::random;
  const auto r = ccp::run_ccp(ex);
  for (const auto& s : r.seeds) {
    if (s.skipped) continue;
    for (double c : {s.avg_common, s.avg_specific, s.avg_all}) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
    for (double c : {s.corr_common, s.corr_specific, s.corr_all}) EXPECT_LE(std::abs(c), 1.0 + 1e-12);
  }
  for (double f : {r.average_pass_fraction, r.portfolio_pass_fraction, r.monotone_pass_fraction}) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
  }
}

TEST(Ccp, ScreeningResidualShrinksWithNoise) {
  std::vector<double> residuals;
  for (double noise : {0.1, 0.01, 0.001}) {
    ccp::CcpExperiment ex;
    ex.spec = noise_free(4);
    ex.spec.factor_vol = 0.2;
    ex.spec.noise_vol = noise;
    ex.spec.compounding = data::ReturnMethod::log;
    ex.k = 1;
    ex.n_seeds = 30;
    const auto r = ccp::run_ccp(ex);
    ASSERT_EQ(r.skipped, 0u);
    residuals.push_back(r.mean_residual_c + r.mean_residual_not_c);
  }
  EXPECT_GT(residuals[0], residuals[1]);
  EXPECT_GT(residuals[1], residuals[2]);
}

TEST(Ccp, NullUniverseIsReportedNotAsserted) {
  ccp::CcpExperiment ex;
  ex.spec.factor_loadings = Matrix::Zero(10, 3);
  ex.spec.horizon = 250;
  ex.n_seeds = 10;
  const auto r = ccp::run_ccp(ex);
  EXPECT_EQ(r.evaluated + r.skipped, 10u);
  EXPECT_GE(r.average_pass_fraction, 0.0);
  EXPECT_LE(r.average_pass_fraction, 1.0);
}

TEST(Ccp, Validation) {
  ccp::CcpExperiment ex;
  ex.n_seeds = 0;
  EXPECT_THROW(ccp::run_ccp(ex), Error);
  EXPECT_EQ(ccp::parse_weight_scheme("random"), ccp::WeightScheme::random);
  EXPECT_THROW(ccp::parse_weight_scheme("skewed"), Error);
}

}  // namespace
}  // namespace hsp
