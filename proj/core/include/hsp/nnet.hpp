#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/common.hpp"

namespace hsp::nnet {

struct ArchitectureConfig {
  std::size_t layers = 1;
  std::size_t units = 8;
  std::size_t lag = 0;       // 0 or 1, driver input lag relative to the target
  std::size_t window = 126;  // fitting length in trading days
  bool autoregressive = false;
  std::uint64_t seed = 0;

  void validate() const;
  /// Stable text key, independent of the seed.
  std::string label() const;
  std::size_t parameter_count(std::size_t inputs) const;
};

/// layers {1,2} x units {4,8,16} x lag {0,1} x window {63,126}.
std::vector<ArchitectureConfig> default_grid(bool autoregressive = false);

struct TrainingConfig {
  std::size_t epochs = 500;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Regression design: one row per observation.
struct Design {
  Matrix X;
  Vector y;
  std::vector<std::string> input_ids;
  std::size_t driver_columns = 0;  // leading columns; an optional AR column follows
};

/// Uses the trailing `arch.window` returns of the aligned histories. Row t
/// holds driver returns at t - lag (and the asset return at t - 1 when
/// autoregressive); the target is the asset return at t.
Design build_design(std::span<const double> asset, const Matrix& drivers, std::span<const std::string> driver_ids,
                    const ArchitectureConfig& arch, std::string_view asset_id = "asset");

enum class Activation { tanh, linear };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
};

/// Feedforward network with an affine standardization wrapper:
/// y = out_shift + out_scale * net((x - in_shift) / in_scale).
class Mlp {
 public:
  Mlp() = default;
  /// The last layer is the linear output and must have exactly one row.
  explicit Mlp(std::vector<DenseLayer> layers, Activation hidden = Activation::tanh);

  void set_input_scaling(Vector shift, Vector scale);
  void set_output_scaling(double shift, double scale);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t input_width() const;
  std::size_t parameter_count() const;
  const Vector& input_shift() const noexcept { return in_shift_; }
  const Vector& input_scale() const noexcept { return in_scale_; }
  double output_shift() const noexcept { return out_shift_; }
  double output_scale() const noexcept { return out_scale_; }

  /// Standardizes raw rows (T x D) into network space.
  Matrix standardize(const Matrix& X) const;

  Vector predict(const Matrix& X) const;
  /// Network output in standardized units for standardized inputs.
  Vector predict_standardized(const Matrix& Z) const;

  /// Row t = d yhat_t / d x_t in raw units, by one reverse sweep per row.
  Matrix input_gradients(const Matrix& X) const;
  /// Same, in standardized units on both sides.
  Matrix input_gradients_standardized(const Matrix& Z) const;

  bool all_finite() const;

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::tanh;
  Vector in_shift_;
  Vector in_scale_;
  double out_shift_ = 0.0;
  double out_scale_ = 1.0;
};

struct SensitivityRows {
  Matrix drivers;                       // T x D
  std::optional<Vector> autoregressive; // T, when the design carries an AR column
};

/// Splits input gradients into driver columns and the trailing AR column.
SensitivityRows sensitivities(const Mlp& net, const Matrix& X, std::size_t driver_columns);
/// Driver-only variant: every column of X is a driver.
Matrix sensitivities(const Mlp& net, const Matrix& X);

struct FitResult {
  std::string asset_id;
  ArchitectureConfig arch;
  Mlp net;
  std::vector<std::string> driver_ids;
  double mse = 0.0;          // in-sample, original target units
  double initial_mse = 0.0;  // before the first update
  Vector residuals;
  SensitivityRows sensitivity;
  Vector mean_sensitivity;   // column mean of sensitivity.drivers
};

/// Full-batch Adam on the standardized design.
FitResult train(const ArchitectureConfig& arch, const Design& design, const TrainingConfig& config = {});

struct GridData {
  std::span<const double> asset;  // history up to (excluding) the decision date
  Matrix drivers;                 // same rows, one column per driver
  std::vector<std::string> driver_ids;
};

struct CandidateOutcome {
  ArchitectureConfig arch;
  std::optional<double> mse;
  std::string note;  // why the candidate was skipped
};

struct GridSearchResult {
  FitResult best;
  std::vector<CandidateOutcome> candidates;
  std::vector<std::string> warnings;
};

/// Trains every candidate (seeds derived from asset id, architecture and
/// global seed) and keeps the lowest MSE; ties go to fewer parameters, then
/// list order.
GridSearchResult grid_search(std::string_view asset_id, std::span<const ArchitectureConfig> candidates,
                             const GridData& data, std::uint64_t global_seed, const TrainingConfig& config = {},
                             unsigned threads = 1);

struct LinearLagSpec {
  std::size_t asset_lags = 0;
  std::size_t driver_lags = 1;
  std::size_t first_driver_lag = 1;
};

struct LinearFit {
  /// Asset lags 1..m first, then each driver's lags in order.
  Vector coefficients;
  Vector standard_errors;
  double intercept = 0.0;
  Vector residuals;
  std::vector<std::string> labels;
  bool ridge_used = false;
};

/// Ordinary least squares on lagged asset and driver returns, with a ridge
/// fallback (lambda = 1e-8) when the design is rank deficient.
LinearFit fit_linear(std::span<const double> asset, const Matrix& drivers, const LinearLagSpec& spec,
                     std::span<const std::string> driver_ids = {});

nlohmann::json to_json(const ArchitectureConfig& arch);
nlohmann::json to_json(const FitResult& fit);

}  // namespace hsp::nnet
