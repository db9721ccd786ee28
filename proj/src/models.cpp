#include "neurozip/models.hpp"

#include <cmath>
#include <string>

#include "neurozip/error.hpp"
#include "neurozip/kernels.hpp"
#include "neurozip/random.hpp"

namespace neurozip {

std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::string_view to_string(FeatureMode m) { return m == FeatureMode::relative ? "relative" : "raw"; }

std::string_view to_string(FitMode m) {
  switch (m) {
    case FitMode::zip_only: return "zip_only";
    case FitMode::neural_only: return "neural_only";
    case FitMode::neuro_zip: return "neuro_zip";
  }
  return "neuro_zip";
}

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "relative") return FeatureMode::relative;
  if (s == "raw") return FeatureMode::raw;
  throw ConfigError("unknown feature mode '" + std::string(s) + "'");
}

FitMode parse_fit_mode(std::string_view s) {
  if (s == "zip_only" || s == "zip-only") return FitMode::zip_only;
  if (s == "neural_only" || s == "neural-only") return FitMode::neural_only;
  if (s == "neuro_zip" || s == "neuro-zip") return FitMode::neuro_zip;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

std::size_t MlpModel::input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }

std::size_t MlpModel::output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

void MlpModel::validate() const {
  if (layers.empty()) throw ModelError("network has no layers");
  if (input_dim() != 2) throw ModelError("network input must be 2-dimensional, got " + std::to_string(input_dim()));
  if (output_dim() != 2) throw ModelError("network output must be 2-dimensional, got " + std::to_string(output_dim()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw ModelError("layer " + std::to_string(l) + ": bias " + autodiff::shape_string(layer.bias) +
                       " does not match weight " + autodiff::shape_string(layer.weight));
    }
    if (l > 0 && layers[l - 1].weight.cols() != layer.weight.rows()) {
      throw ModelError("layer " + std::to_string(l) + ": fan-in " + std::to_string(layer.weight.rows()) +
                       " does not match previous fan-out " + std::to_string(layers[l - 1].weight.cols()));
    }
  }
}

MlpModel make_mlp(std::size_t hidden_width, std::size_t hidden_depth, Activation activation,
                  std::uint64_t seed, bool zero_output_layer) {
  if (hidden_width == 0 && hidden_depth > 0) throw ConfigError("hidden width must be positive");
  auto rng = make_engine({seed, 0x6d6c70ull});
  MlpModel mlp;
  mlp.activation = activation;
  std::size_t fan_in = 2;
  for (std::size_t l = 0; l <= hidden_depth; ++l) {
    const bool last = l == hidden_depth;
    const std::size_t fan_out = last ? 2 : hidden_width;
    DenseLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight[i] = uniform(rng, -s, s);
    if (last && zero_output_layer) layer.weight.fill(0.0);
    mlp.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return mlp;
}

PowerPair zip_forward(const ZipParams& zip, const OperatingPoint& op, double v_t) {
  if (!(op.v0 > 0.0)) throw OperatingPointError("operating point voltage must be positive, got " + std::to_string(op.v0));
  const double r = v_t / op.v0;
  const double r2 = r * r;
  return {zip.alpha_p * op.p0 + zip.alpha_i * (op.p0 * r) + zip.alpha_z * (op.p0 * r2),
          zip.beta_p * op.q0 + zip.beta_i * (op.q0 * r) + zip.beta_z * (op.q0 * r2)};
}

namespace {

double activate(Activation a, double x) {
  if (a == Activation::tanh) return std::tanh(x);
  return x > 0.0 ? x : 0.0;
}

}  // namespace

Matrix mlp_forward_batch(const MlpModel& mlp, const Matrix& features) {
  mlp.validate();
  if (features.cols() != 2) {
    throw ModelError("features must have 2 columns, got " + autodiff::shape_string(features));
  }
  Matrix h = features;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const DenseLayer& layer = mlp.layers[l];
    Matrix z(h.rows(), layer.weight.cols());
    kernels::matmul(h.values(), layer.weight.values(), z.values(), h.rows(), h.cols(), layer.weight.cols());
    const bool hidden = l + 1 < mlp.layers.size();
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.cols(); ++j) {
        const double v = z(i, j) + layer.bias[j];
        z(i, j) = hidden ? activate(mlp.activation, v) : v;
      }
    }
    h = std::move(z);
  }
  return h;
}

PowerPair mlp_forward(const MlpModel& mlp, std::array<double, 2> features) {
  const Matrix out = mlp_forward_batch(mlp, Matrix(1, 2, {features[0], features[1]}));
  return {out[0], out[1]};
}

PowerPair combine(const MixingWeights& mix, PowerPair physics, PowerPair neural) {
  return {mix.a * physics.p + (1.0 - mix.a) * neural.p, mix.b * physics.q + (1.0 - mix.b) * neural.q};
}

std::array<double, 2> make_features(FeatureMode mode, double v, double theta_v, double v0, double theta_v0) {
  if (mode == FeatureMode::raw) return {v, theta_v};
  return {v / v0, theta_v - theta_v0};
}

ZipVars bind_parameters(autodiff::Tape& tape, const ZipParams& zip) {
  return {tape.parameter(Matrix::scalar(zip.alpha_p)), tape.parameter(Matrix::scalar(zip.alpha_i)),
          tape.parameter(Matrix::scalar(zip.alpha_z)), tape.parameter(Matrix::scalar(zip.beta_p)),
          tape.parameter(Matrix::scalar(zip.beta_i)),  tape.parameter(Matrix::scalar(zip.beta_z))};
}

MlpVars bind_parameters(autodiff::Tape& tape, const MlpModel& mlp) {
  MlpVars vars;
  vars.activation = mlp.activation;
  for (const DenseLayer& layer : mlp.layers) {
    const Var w = tape.parameter(layer.weight);
    const Var b = tape.parameter(layer.bias);
    vars.layers.emplace_back(w, b);
  }
  return vars;
}

PowerVars zip_forward(const ZipVars& zip, const OperatingPoint& op, Var v_t) {
  if (!(op.v0 > 0.0)) throw OperatingPointError("operating point voltage must be positive, got " + std::to_string(op.v0));
  autodiff::Tape& tape = v_t.tape();
  const Var r = v_t / op.v0;
  const Var r2 = square(r);
  const Var p = zip.alpha_p * tape.constant(op.p0) + zip.alpha_i * (op.p0 * r) + zip.alpha_z * (op.p0 * r2);
  const Var q = zip.beta_p * tape.constant(op.q0) + zip.beta_i * (op.q0 * r) + zip.beta_z * (op.q0 * r2);
  return {p, q};
}

PowerVars zip_forward(const ZipVars& zip, autodiff::Tape& tape, const ZipBasis& basis) {
  const Var p = zip.alpha_p * tape.constant(basis.p_const) + zip.alpha_i * tape.constant(basis.p_linear) +
                zip.alpha_z * tape.constant(basis.p_quadratic);
  const Var q = zip.beta_p * tape.constant(basis.q_const) + zip.beta_i * tape.constant(basis.q_linear) +
                zip.beta_z * tape.constant(basis.q_quadratic);
  return {p, q};
}

Var mlp_forward(const MlpVars& mlp, Var features) {
  if (mlp.layers.empty()) throw ModelError("network has no layers");
  autodiff::Tape& tape = features.tape();
  const Var ones = tape.constant(Matrix(features.value().rows(), 1, 1.0));
  Var h = features;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& [w, b] = mlp.layers[l];
    if (h.value().cols() != w.value().rows()) {
      throw ModelError("layer " + std::to_string(l) + ": input " + autodiff::shape_string(h.value()) +
                       " does not fit weight " + autodiff::shape_string(w.value()));
    }
    const Var z = matmul(h, w) + matmul(ones, b);
    const bool hidden = l + 1 < mlp.layers.size();
    if (!hidden) {
      h = z;
    } else if (mlp.activation == Activation::tanh) {
      h = tanh(z);
    } else {
      h = relu(z);
    }
  }
  return h;
}

PowerVars split_columns(Var output) {
  if (output.value().cols() != 2) {
    throw ModelError("expected N x 2 network output, got " + autodiff::shape_string(output.value()));
  }
  autodiff::Tape& tape = output.tape();
  return {matmul(output, tape.constant(Matrix(2, 1, {1.0, 0.0}))),
          matmul(output, tape.constant(Matrix(2, 1, {0.0, 1.0})))};
}

PowerVars combine(const MixVars& mix, const PowerVars& physics, const PowerVars& neural) {
  return {mix.a * physics.p + (1.0 - mix.a) * neural.p, mix.b * physics.q + (1.0 - mix.b) * neural.q};
}

}  // namespace neurozip
