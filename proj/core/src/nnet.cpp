#include "hsp/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "hsp/parallel.hpp"

namespace hsp::nnet {

// ---------------------------------------------------------------------------
// Architecture

void ArchitectureConfig::validate() const {
  if (layers < 1) throw Error(ErrorCode::validation, "architecture: layers must be >= 1");
  if (units < 1) throw Error(ErrorCode::validation, "architecture: units must be >= 1");
  if (lag > 1) throw Error(ErrorCode::validation, fmt::format("architecture: lag {} not in {{0, 1}}", lag));
  if (window <= units) {
    throw Error(ErrorCode::validation,
                fmt::format("architecture: window {} must exceed units {}", window, units));
  }
}

std::string ArchitectureConfig::label() const {
  return fmt::format("L{}xU{}-lag{}-w{}{}", layers, units, lag, window, autoregressive ? "-ar" : "");
}

std::size_t ArchitectureConfig::parameter_count(std::size_t inputs) const {
  std::size_t count = inputs * units + units;
  count += (layers - 1) * (units * units + units);
  count += units + 1;
  return count;
}

std::vector<ArchitectureConfig> default_grid(bool autoregressive) {
  std::vector<ArchitectureConfig> grid;
  for (std::size_t layers : {1, 2}) {
    for (std::size_t units : {4, 8, 16}) {
      for (std::size_t lag : {0, 1}) {
        for (std::size_t window : {63, 126}) {
          grid.push_back({layers, units, lag, window, autoregressive, 0});
        }
      }
    }
  }
  return grid;
}

Design build_design(std::span<const double> asset, const Matrix& drivers, std::span<const std::string> driver_ids,
                    const ArchitectureConfig& arch, std::string_view asset_id) {
  arch.validate();
  const auto history = asset.size();
  if (static_cast<std::size_t>(drivers.rows()) != history) {
    throw Error(ErrorCode::shape,
                fmt::format("build_design: asset has {} rows, drivers {}", history, drivers.rows()));
  }
  if (static_cast<std::size_t>(drivers.cols()) != driver_ids.size()) {
    throw Error(ErrorCode::shape, "build_design: driver id count does not match driver columns");
  }
  if (history < arch.window) {
    throw Error(ErrorCode::insufficient_data,
                fmt::format("build_design: window {} exceeds {} available observations", arch.window, history));
  }
  const std::size_t shift = std::max<std::size_t>(arch.lag, arch.autoregressive ? 1 : 0);
  const std::size_t rows = arch.window - shift;
  const std::size_t first = history - arch.window + shift;  // first target index
  const auto d = static_cast<Eigen::Index>(drivers.cols());

  Design out;
  out.driver_columns = driver_ids.size();
  out.input_ids.assign(driver_ids.begin(), driver_ids.end());
  if (arch.autoregressive) out.input_ids.push_back(fmt::format("{}@t-1", asset_id));
  out.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out.input_ids.size()));
  out.y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = first + r;
    const auto rr = static_cast<Eigen::Index>(r);
    out.X.row(rr).head(d) = drivers.row(static_cast<Eigen::Index>(t - arch.lag));
    if (arch.autoregressive) out.X(rr, d) = asset[t - 1];
    out.y(rr) = asset[t];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network

Mlp::Mlp(std::vector<DenseLayer> layers, Activation hidden) : layers_(std::move(layers)), activation_(hidden) {
  if (layers_.size() < 2) throw Error(ErrorCode::shape, "mlp: need at least one hidden and one output layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weights.rows()) {
      throw Error(ErrorCode::shape, fmt::format("mlp: layer {} bias/weight mismatch", l));
    }
    if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows()) {
      throw Error(ErrorCode::shape, fmt::format("mlp: layer {} input width does not chain", l));
    }
  }
  if (layers_.back().weights.rows() != 1) throw Error(ErrorCode::shape, "mlp: output layer must be scalar");
  const auto width = layers_.front().weights.cols();
  in_shift_ = Vector::Zero(width);
  in_scale_ = Vector::Ones(width);
}

void Mlp::set_input_scaling(Vector shift, Vector scale) {
  if (shift.size() != layers_.front().weights.cols() || scale.size() != shift.size()) {
    throw Error(ErrorCode::shape, "mlp: input scaling width mismatch");
  }
  in_shift_ = std::move(shift);
  in_scale_ = std::move(scale);
}

void Mlp::set_output_scaling(double shift, double scale) {
  out_shift_ = shift;
  out_scale_ = scale;
}

std::size_t Mlp::input_width() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool Mlp::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

Matrix Mlp::standardize(const Matrix& X) const {
  if (static_cast<std::size_t>(X.cols()) != input_width()) {
    throw Error(ErrorCode::shape, fmt::format("mlp: input has {} columns, network expects {}", X.cols(),
                                              input_width()));
  }
  return (X.rowwise() - in_shift_.transpose()).array().rowwise() / in_scale_.transpose().array();
}

namespace {

// Activations stored column-per-observation: acts[0] = Z^T, acts[l] = layer l
// output. The final entry is the 1 x T network output.
struct Tape {
  std::vector<Matrix> acts;
};

void activate(Matrix& m, Activation a) {
  if (a == Activation::tanh) m = m.array().tanh();
}

Tape forward(const std::vector<DenseLayer>& layers, Activation a, const Matrix& Z) {
  Tape tape;
  tape.acts.reserve(layers.size() + 1);
  tape.acts.push_back(Z.transpose());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix pre = layers[l].weights * tape.acts.back();
    pre.colwise() += layers[l].bias;
    if (l + 1 < layers.size()) activate(pre, a);
    tape.acts.push_back(std::move(pre));
  }
  return tape;
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

// Reverse sweep. `adjoint` is d(objective)/d(output), 1 x T. Fills parameter
// gradients when `grads` is non-null and returns input adjoints (D x T).
Matrix backward(const std::vector<DenseLayer>& layers, Activation a, const Tape& tape, Matrix adjoint,
                Gradients* grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size() && a == Activation::tanh) {
      adjoint = adjoint.array() * (1.0 - tape.acts[l + 1].array().square());
    }
    if (grads) {
      grads->weights[l].noalias() = adjoint * tape.acts[l].transpose();
      grads->bias[l] = adjoint.rowwise().sum();
    }
    adjoint = layers[l].weights.transpose() * adjoint;
  }
  return adjoint;
}

}  // namespace

Vector Mlp::predict_standardized(const Matrix& Z) const {
  const auto tape = forward(layers_, activation_, Z);
  return tape.acts.back().row(0).transpose();
}

Vector Mlp::predict(const Matrix& X) const {
  return (out_shift_ + out_scale_ * predict_standardized(standardize(X)).array()).matrix();
}

Matrix Mlp::input_gradients_standardized(const Matrix& Z) const {
  if (static_cast<std::size_t>(Z.cols()) != input_width()) {
    throw Error(ErrorCode::shape, fmt::format("mlp: input has {} columns, network expects {}", Z.cols(),
                                              input_width()));
  }
  const auto tape = forward(layers_, activation_, Z);
  // Seeding every column with 1 runs T independent sweeps at once: row t of
  // the output depends only on column t of the input.
  Matrix seed = Matrix::Ones(1, Z.rows());
  return backward(layers_, activation_, tape, std::move(seed), nullptr).transpose();
}

Matrix Mlp::input_gradients(const Matrix& X) const {
  Matrix g = input_gradients_standardized(standardize(X));
  // chain rule through both affine maps
  return (g.array().rowwise() * (out_scale_ / in_scale_.array()).transpose()).matrix();
}

SensitivityRows sensitivities(const Mlp& net, const Matrix& X, std::size_t driver_columns) {
  if (static_cast<std::size_t>(X.cols()) != net.input_width()) {
    throw Error(ErrorCode::shape, fmt::format("sensitivities: X has {} columns, network expects {}", X.cols(),
                                              net.input_width()));
  }
  if (driver_columns > net.input_width() || net.input_width() - driver_columns > 1) {
    throw Error(ErrorCode::shape, "sensitivities: at most one autoregressive column may follow the drivers");
  }
  Matrix g = net.input_gradients(X);
  SensitivityRows rows;
  const auto d = static_cast<Eigen::Index>(driver_columns);
  rows.drivers = g.leftCols(d);
  if (g.cols() > d) rows.autoregressive = g.col(d);
  return rows;
}

Matrix sensitivities(const Mlp& net, const Matrix& X) {
  return sensitivities(net, X, static_cast<std::size_t>(X.cols())).drivers;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct ColumnStats {
  Vector mean;
  Vector scale;
};

ColumnStats column_stats(const Matrix& X) {
  ColumnStats s;
  s.mean = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - s.mean(c)).square().mean();
    s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

std::vector<DenseLayer> init_layers(const ArchitectureConfig& arch, std::size_t inputs) {
  std::mt19937_64 rng(arch.seed);
  std::vector<DenseLayer> layers;
  auto make = [&](std::size_t in, std::size_t out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer layer{Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                     Vector::Zero(static_cast<Eigen::Index>(out))};
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = u(rng);
    layers.push_back(std::move(layer));
  };
  make(inputs, arch.units);
  for (std::size_t l = 1; l < arch.layers; ++l) make(arch.units, arch.units);
  make(arch.units, 1);
  return layers;
}

}  // namespace

FitResult train(const ArchitectureConfig& arch, const Design& design, const TrainingConfig& config) {
  arch.validate();
  const auto T = design.X.rows();
  if (T == 0 || design.y.size() != T) throw Error(ErrorCode::shape, "train: empty or mismatched design");
  if (design.input_ids.size() != static_cast<std::size_t>(design.X.cols())) {
    throw Error(ErrorCode::shape, "train: input ids do not match design columns");
  }

  const auto xs = column_stats(design.X);
  const double y_mean = design.y.mean();
  const double y_var = (design.y.array() - y_mean).square().mean();
  const double y_scale = y_var > 0.0 ? std::sqrt(y_var) : 1.0;

  Mlp net(init_layers(arch, static_cast<std::size_t>(design.X.cols())), Activation::tanh);
  net.set_input_scaling(xs.mean, xs.scale);
  net.set_output_scaling(y_mean, y_scale);

  const Matrix Z = net.standardize(design.X);
  const Eigen::RowVectorXd target = ((design.y.array() - y_mean) / y_scale).matrix().transpose();
  auto& layers = net.layers();

  auto loss_of = [&](const Tape& tape) { return (tape.acts.back() - target).squaredNorm() / static_cast<double>(T); };

  FitResult fit;
  {
    const auto tape = forward(layers, Activation::tanh, Z);
    fit.initial_mse = loss_of(tape) * y_scale * y_scale;
  }

  if (y_var == 0.0) {
    // A constant target is fit exactly by a zero output layer.
    layers.back().weights.setZero();
    layers.back().bias.setZero();
  } else {
    Gradients grads;
    Gradients m1;
    Gradients m2;
    for (const auto& l : layers) {
      grads.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      grads.bias.push_back(Vector::Zero(l.bias.size()));
    }
    m1 = grads;
    m2 = grads;
    double b1t = 1.0;
    double b2t = 1.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      const auto tape = forward(layers, Activation::tanh, Z);
      const double loss = loss_of(tape);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::divergence,
                    fmt::format("training diverged for architecture {} at epoch {}", arch.label(), epoch));
      }
      Matrix adjoint = (2.0 / static_cast<double>(T)) * (tape.acts.back() - target);
      backward(layers, Activation::tanh, tape, std::move(adjoint), &grads);

      b1t *= config.beta1;
      b2t *= config.beta2;
      const double step = config.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
      auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
        param.array() -= step * m.array() / (v.array().sqrt() + config.epsilon);
      };
      for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights, grads.weights[l], m1.weights[l], m2.weights[l]);
        update(layers[l].bias, grads.bias[l], m1.bias[l], m2.bias[l]);
      }
    }
  }
  if (!net.all_finite()) {
    throw Error(ErrorCode::divergence, fmt::format("training produced non-finite parameters for {}", arch.label()));
  }

  fit.arch = arch;
  fit.driver_ids.assign(design.input_ids.begin(),
                        design.input_ids.begin() + static_cast<std::ptrdiff_t>(design.driver_columns));
  fit.residuals = design.y - net.predict(design.X);
  fit.mse = fit.residuals.squaredNorm() / static_cast<double>(T);
  if (!std::isfinite(fit.mse)) {
    throw Error(ErrorCode::divergence, fmt::format("non-finite MSE for architecture {}", arch.label()));
  }
  fit.sensitivity = sensitivities(net, design.X, design.driver_columns);
  fit.mean_sensitivity = fit.sensitivity.drivers.colwise().mean().transpose();
  fit.net = std::move(net);
  return fit;
}

// ---------------------------------------------------------------------------
// Grid search

GridSearchResult grid_search(std::string_view asset_id, std::span<const ArchitectureConfig> candidates,
                             const GridData& data, std::uint64_t global_seed, const TrainingConfig& config,
                             unsigned threads) {
  if (candidates.empty()) throw Error(ErrorCode::validation, "grid_search: no candidate architectures");

  std::vector<std::optional<FitResult>> fits(candidates.size());
  std::vector<CandidateOutcome> outcomes(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    ArchitectureConfig arch = candidates[i];
    arch.seed = derive_seed(global_seed, fmt::format("{}|{}", asset_id, arch.label()));
    outcomes[i].arch = arch;
    if (arch.window > data.asset.size()) {
      outcomes[i].note = fmt::format("skipped {}: window {} exceeds {} available observations", arch.label(),
                                     arch.window, data.asset.size());
      return;
    }
    try {
      auto design = build_design(data.asset, data.drivers, data.driver_ids, arch, asset_id);
      auto fit = train(arch, design, config);
      fit.asset_id = std::string(asset_id);
      outcomes[i].mse = fit.mse;
      fits[i] = std::move(fit);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::divergence && e.code() != ErrorCode::insufficient_data) throw;
      outcomes[i].note = fmt::format("skipped {}: {}", arch.label(), e.what());
    }
  });

  GridSearchResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!outcomes[i].note.empty()) result.warnings.push_back(outcomes[i].note);
    if (!fits[i]) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& a = *fits[i];
    const auto& b = *fits[*best];
    if (a.mse < b.mse || (a.mse == b.mse && a.net.parameter_count() < b.net.parameter_count())) best = i;
  }
  if (!best) {
    throw Error(ErrorCode::no_viable_architecture,
                fmt::format("grid_search: no viable architecture for asset '{}'", asset_id));
  }
  result.best = std::move(*fits[*best]);
  result.candidates = std::move(outcomes);
  return result;
}

// ---------------------------------------------------------------------------
// Linear baseline

LinearFit fit_linear(std::span<const double> asset, const Matrix& drivers, const LinearLagSpec& spec,
                     std::span<const std::string> driver_ids) {
  const auto T = asset.size();
  if (static_cast<std::size_t>(drivers.rows()) != T) {
    throw Error(ErrorCode::shape, "fit_linear: asset and driver rows differ");
  }
  const auto n_drivers = static_cast<std::size_t>(drivers.cols());
  const std::size_t last_driver_lag = spec.driver_lags > 0 ? spec.first_driver_lag + spec.driver_lags - 1 : 0;
  const std::size_t max_lag = std::max(spec.asset_lags, last_driver_lag);
  const std::size_t width = spec.asset_lags + n_drivers * spec.driver_lags;
  if (T <= max_lag + width + 1) {
    throw Error(ErrorCode::insufficient_data, fmt::format("fit_linear: {} observations too few", T));
  }
  const std::size_t rows = T - max_lag;

  LinearFit out;
  for (std::size_t m = 1; m <= spec.asset_lags; ++m) out.labels.push_back(fmt::format("asset@t-{}", m));
  for (std::size_t j = 0; j < n_drivers; ++j) {
    const std::string name = j < driver_ids.size() ? driver_ids[j] : fmt::format("driver{}", j + 1);
    for (std::size_t p = 0; p < spec.driver_lags; ++p) {
      out.labels.push_back(fmt::format("{}@t-{}", name, spec.first_driver_lag + p));
    }
  }

  Matrix X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width + 1));
  Vector y(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = max_lag + r;
    const auto rr = static_cast<Eigen::Index>(r);
    Eigen::Index c = 0;
    for (std::size_t m = 1; m <= spec.asset_lags; ++m) X(rr, c++) = asset[t - m];
    for (std::size_t j = 0; j < n_drivers; ++j) {
      for (std::size_t p = 0; p < spec.driver_lags; ++p) {
        X(rr, c++) = drivers(static_cast<Eigen::Index>(t - spec.first_driver_lag - p), static_cast<Eigen::Index>(j));
      }
    }
    X(rr, c) = 1.0;
    y(rr) = asset[t];
  }

  const Matrix gram = X.transpose() * X;
  const Vector rhs = X.transpose() * y;
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  Matrix normal = gram;
  if (qr.rank() < X.cols()) {
    out.ridge_used = true;
    normal += 1e-8 * Matrix::Identity(gram.rows(), gram.cols());
  }
  Eigen::LDLT<Matrix> ldlt(normal);
  const Vector beta = ldlt.solve(rhs);
  out.residuals = y - X * beta;
  const auto p = static_cast<double>(X.cols());
  const double dof = std::max(1.0, static_cast<double>(rows) - p);
  const double sigma2 = out.residuals.squaredNorm() / dof;
  const Matrix cov = sigma2 * ldlt.solve(Matrix::Identity(gram.rows(), gram.cols()));
  out.coefficients = beta.head(static_cast<Eigen::Index>(width));
  out.intercept = beta(static_cast<Eigen::Index>(width));
  out.standard_errors = cov.diagonal().head(static_cast<Eigen::Index>(width)).cwiseMax(0.0).cwiseSqrt();
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const ArchitectureConfig& arch) {
  return {{"layers", arch.layers}, {"units", arch.units},   {"lag", arch.lag},
          {"window", arch.window}, {"autoregressive", arch.autoregressive}, {"seed", arch.seed}};
}

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json sens = nlohmann::json::object();
  for (std::size_t j = 0; j < fit.driver_ids.size(); ++j) {
    sens[fit.driver_ids[j]] = fit.mean_sensitivity(static_cast<Eigen::Index>(j));
  }
  nlohmann::json out = {{"asset", fit.asset_id},
                        {"architecture", to_json(fit.arch)},
                        {"label", fit.arch.label()},
                        {"parameters", fit.net.parameter_count()},
                        {"mse", fit.mse},
                        {"mean_sensitivity", std::move(sens)}};
  if (fit.sensitivity.autoregressive) out["mean_autoregressive_sensitivity"] = fit.sensitivity.autoregressive->mean();
  return out;
}

}  // namespace hsp::nnet
