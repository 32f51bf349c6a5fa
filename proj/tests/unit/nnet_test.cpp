#include <random>

#include <gtest/gtest.h>

#include "hsp/nnet.hpp"
#include "support.hpp"

namespace hsp {
namespace {

using nnet::ArchitectureConfig;

Matrix gaussian(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("D" + std::to_string(i));
  return out;
}

struct Problem {
  std::vector<double> asset;
  Matrix drivers;
  std::vector<std::string> ids;
};

// Asset return: nonlinear function of contemporaneous and lagged drivers.
Problem problem(std::uint64_t seed, std::size_t n = 160, std::size_t d = 3) {
  Problem p;
  p.drivers = gaussian(seed, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), 0.01);
  const Matrix e = gaussian(seed + 1, static_cast<Eigen::Index>(n), 1, 0.002);
  p.asset.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    const double prev = t > 0 ? p.drivers(r - 1, 1) : 0.0;
    p.asset[t] = 0.8 * p.drivers(r, 0) - 0.5 * std::tanh(50.0 * p.drivers(r, 1)) * 0.01 + 0.3 * prev + e(r, 0);
  }
  p.ids = names(d);
  return p;
}

TEST(Architecture, GridAndValidation) {
  const auto grid = nnet::default_grid();
  EXPECT_EQ(grid.size(), 24u);
  std::set<std::string> labels;
  for (const auto& a : grid) labels.insert(a.label());
  EXPECT_EQ(labels.size(), 24u);
  EXPECT_TRUE(nnet::default_grid(true).front().autoregressive);

  ArchitectureConfig bad;
  bad.lag = 2;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.units = 0;
  EXPECT_THROW(bad.validate(), Error);

  ArchitectureConfig a{2, 4, 0, 63, false, 0};
  EXPECT_EQ(a.parameter_count(3), 3u * 4 + 4 + 4 * 4 + 4 + 4 + 1);
}

TEST(Design, ShapesAndLags) {
  const auto p = problem(1, 100);
  ArchitectureConfig arch{1, 4, 1, 63, true, 0};
  const auto d = nnet::build_design(p.asset, p.drivers, p.ids, arch, "A");
  ASSERT_EQ(d.X.rows(), 62);
  ASSERT_EQ(d.X.cols(), 4);
  EXPECT_EQ(d.driver_columns, 3u);
  EXPECT_EQ(d.input_ids.back(), "A@t-1");
  // Last row targets the final asset return; drivers one step earlier.
  EXPECT_EQ(d.y(61), p.asset[99]);
  EXPECT_EQ(d.X(61, 0), p.drivers(98, 0));
  EXPECT_EQ(d.X(61, 3), p.asset[98]);
  EXPECT_EQ(d.y(0), p.asset[100 - 63 + 1]);

  arch = {1, 4, 0, 63, false, 0};
  const auto d0 = nnet::build_design(p.asset, p.drivers, p.ids, arch);
  ASSERT_EQ(d0.X.rows(), 63);
  EXPECT_EQ(d0.X(62, 2), p.drivers(99, 2));

  arch.window = 126;
  try {
    nnet::build_design(p.asset, p.drivers, p.ids, arch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
  }
  EXPECT_THROW(nnet::build_design(p.asset, p.drivers.topRows(50), p.ids, arch), Error);
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  for (std::size_t layers : {1, 2}) {
    for (std::size_t units : {4, 16}) {
      ArchitectureConfig arch{layers, units, 0, 63, false, 42 + layers * units};
      const auto p = problem(arch.seed, 100);
      auto design = nnet::build_design(p.asset, p.drivers, p.ids, arch);
      const auto fit = nnet::train(arch, design, {.epochs = 100});
      EXPECT_LT(testing::gradient_relative_error(fit.net, design.X), 1e-4) << arch.label();
    }
  }
}

TEST(Mlp, LinearNetworkGradientIsWeightProduct) {
  nnet::DenseLayer hidden{Matrix(2, 3), Vector::Zero(2)};
  hidden.weights << 1, 2, 3, -1, 0.5, 0;
  nnet::DenseLayer out{Matrix(1, 2), Vector::Zero(1)};
  out.weights << 2, -3;
  nnet::Mlp net({hidden, out}, nnet::Activation::linear);
  net.set_input_scaling(Vector::Zero(3), Vector::Constant(3, 2.0));
  net.set_output_scaling(1.0, 4.0);
  const Matrix g = net.input_gradients(gaussian(3, 5, 3));
  const Eigen::RowVectorXd expected = 4.0 / 2.0 * (out.weights * hidden.weights);
  for (Eigen::Index i = 0; i < g.rows(); ++i) EXPECT_LT((g.row(i) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mlp, ShapeErrors) {
  nnet::DenseLayer hidden{Matrix::Ones(2, 3), Vector::Zero(2)};
  nnet::DenseLayer wide{Matrix::Ones(2, 2), Vector::Zero(2)};
  EXPECT_THROW(nnet::Mlp({hidden}), Error);
  EXPECT_THROW(nnet::Mlp({hidden, wide}), Error);
  nnet::Mlp net({hidden, nnet::DenseLayer{Matrix::Ones(1, 2), Vector::Zero(1)}});
  EXPECT_THROW(net.predict(Matrix::Ones(4, 2)), Error);
}

TEST(Training, ReducesLossAndIsDeterministic) {
  const auto p = problem(7, 140);
  ArchitectureConfig arch{1, 8, 0, 126, false, 99};
  const auto design = nnet::build_design(p.asset, p.drivers, p.ids, arch);
  const auto a = nnet::train(arch, design);
  const auto b = nnet::train(arch, design);
  EXPECT_LT(a.mse, 0.5 * a.initial_mse);
  EXPECT_EQ(a.mse, b.mse);
  EXPECT_EQ(a.mean_sensitivity, b.mean_sensitivity);
  EXPECT_EQ(a.residuals.size(), 126);
  EXPECT_EQ(a.driver_ids, p.ids);
  // Dominant contemporaneous loading is recovered in sign and rough size.
  EXPECT_GT(a.mean_sensitivity(0), 0.5);
  EXPECT_LT(a.mean_sensitivity(0), 1.1);
}

TEST(Training, ConstantTargetGivesZeroSensitivity) {
  nnet::Design d;
  d.X = gaussian(5, 40, 2);
  d.y = Vector::Constant(40, 0.003);
  d.input_ids = names(2);
  d.driver_columns = 2;
  const auto fit = nnet::train({1, 4, 0, 40, false, 1}, d);
  EXPECT_LT(fit.mse, 1e-30);
  EXPECT_LT(fit.mean_sensitivity.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Training, AutoregressiveColumnSeparated) {
  const auto p = problem(8, 100);
  ArchitectureConfig arch{1, 4, 0, 63, true, 3};
  const auto fit = nnet::train(arch, nnet::build_design(p.asset, p.drivers, p.ids, arch), {.epochs = 50});
  ASSERT_TRUE(fit.sensitivity.autoregressive.has_value());
  EXPECT_EQ(fit.sensitivity.autoregressive->size(), 62);
  EXPECT_EQ(fit.mean_sensitivity.size(), 3);
  EXPECT_TRUE(nnet::to_json(fit).contains("mean_autoregressive_sensitivity"));
}

TEST(GridSearch, DeterministicAndSkipsLongWindows) {
  const auto p = problem(11, 100);
  const nnet::GridData data{p.asset, p.drivers, p.ids};
  const auto grid = nnet::default_grid();
  const nnet::TrainingConfig cfg{.epochs = 30};
  const auto a = nnet::grid_search("A", grid, data, 5, cfg, 1);
  const auto b = nnet::grid_search("A", grid, data, 5, cfg, 3);
  EXPECT_EQ(a.best.mse, b.best.mse);
  EXPECT_EQ(a.best.arch.label(), b.best.arch.label());
  EXPECT_EQ(a.best.arch.window, 63u);
  EXPECT_EQ(a.warnings.size(), 12u);
  for (const auto& c : a.candidates) {
    if (c.mse) EXPECT_GE(*c.mse, a.best.mse);
  }
  // A different asset label reseeds every candidate.
  const auto c = nnet::grid_search("B", grid, data, 5, cfg, 1);
  EXPECT_NE(a.candidates[0].arch.seed, c.candidates[0].arch.seed);
}

TEST(GridSearch, TiesPreferFewerParameters) {
  nnet::GridData data;
  std::vector<double> flat(80, 0.001);
  data.asset = flat;
  data.drivers = gaussian(2, 80, 2);
  data.driver_ids = names(2);
  std::vector<ArchitectureConfig> grid{{2, 16, 0, 63, false, 0}, {1, 4, 0, 63, false, 0}, {1, 8, 0, 63, false, 0}};
  const auto r = nnet::grid_search("A", grid, data, 1);
  EXPECT_EQ(r.best.arch.units, 4u);
  EXPECT_EQ(r.best.arch.layers, 1u);
}

TEST(GridSearch, NothingViable) {
  const auto p = problem(12, 50);
  const nnet::GridData data{p.asset, p.drivers, p.ids};
  try {
    nnet::grid_search("A", nnet::default_grid(), data, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_viable_architecture);
  }
}

TEST(Linear, RecoversPlantedCoefficients) {
  const Matrix d = gaussian(21, 300, 2);
  std::vector<double> a(300, 0.0);
  for (std::size_t t = 1; t < 300; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    a[t] = 0.1 + 0.3 * a[t - 1] + 1.5 * d(r - 1, 0) - 0.7 * d(r - 1, 1);
  }
  const auto fit = nnet::fit_linear(a, d, {1, 1, 1});
  ASSERT_EQ(fit.coefficients.size(), 3);
  EXPECT_NEAR(fit.coefficients(0), 0.3, 1e-9);
  EXPECT_NEAR(fit.coefficients(1), 1.5, 1e-9);
  EXPECT_NEAR(fit.coefficients(2), -0.7, 1e-9);
  EXPECT_NEAR(fit.intercept, 0.1, 1e-9);
  EXPECT_FALSE(fit.ridge_used);
  EXPECT_EQ(fit.labels[1], "driver1@t-1");
}

TEST(Linear, RidgeOnCollinearDesign) {
  Matrix d = gaussian(22, 120, 1);
  Matrix twin(120, 2);
  twin << d, d;
  std::vector<double> a(120);
  for (std::size_t t = 1; t < 120; ++t) a[t] = d(static_cast<Eigen::Index>(t - 1), 0);
  const auto fit = nnet::fit_linear(a, twin, {0, 1, 1});
  EXPECT_TRUE(fit.ridge_used);
  EXPECT_NEAR(fit.coefficients.sum(), 1.0, 1e-6);
  EXPECT_THROW(nnet::fit_linear(std::span<const double>(a).first(3), twin.topRows(3), {0, 1, 1}), Error);
}

}  // namespace
}  // namespace hsp
