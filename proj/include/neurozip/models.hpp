#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "neurozip/autodiff.hpp"

namespace neurozip {

using autodiff::Matrix;
using autodiff::Var;

/// ZIP polynomial coefficients: constant power (p), constant current (i) and
/// constant impedance (z) shares for real (alpha) and reactive (beta) power.
struct ZipParams {
  double alpha_p = 0.0;
  double alpha_i = 0.0;
  double alpha_z = 0.0;
  double beta_p = 0.0;
  double beta_i = 0.0;
  double beta_z = 0.0;

  bool operator==(const ZipParams&) const = default;
};

/// Pre-disturbance voltage magnitude and load powers, per unit.
struct OperatingPoint {
  double v0 = 1.0;
  double p0 = 0.0;
  double q0 = 0.0;

  bool operator==(const OperatingPoint&) const = default;
};

/// Blend between the physics branch (a, b = 1) and the neural branch (0).
struct MixingWeights {
  double a = 0.5;
  double b = 0.5;

  bool operator==(const MixingWeights&) const = default;
};

struct PowerPair {
  double p = 0.0;
  double q = 0.0;
};

enum class Activation { tanh, relu };

/// How (V, theta_V) are presented to the network.
enum class FeatureMode {
  relative,  ///< (V / V0, theta_V - theta_V0)
  raw,       ///< (V, theta_V)
};

/// Which branches a fit or evaluation uses.
enum class FitMode { zip_only, neural_only, neuro_zip };

std::string_view to_string(Activation a);
std::string_view to_string(FeatureMode m);
std::string_view to_string(FitMode m);
Activation parse_activation(std::string_view s);
FeatureMode parse_feature_mode(std::string_view s);
FitMode parse_fit_mode(std::string_view s);

struct DenseLayer {
  Matrix weight;  // fan_in x fan_out, so a batch maps as X * W + b
  Matrix bias;    // 1 x fan_out

  bool operator==(const DenseLayer&) const = default;
};

/// Fully connected network; hidden layers use `activation`, the last layer is affine.
struct MlpModel {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;

  std::size_t input_dim() const;
  std::size_t output_dim() const;

  /// Throws ModelError unless layer shapes chain from 2 inputs to 2 outputs.
  void validate() const;

  bool operator==(const MlpModel&) const = default;
};

/// Full trainable model: physics coefficients, mixing weights and network.
struct NeuroZipModel {
  ZipParams zip;
  MixingWeights mix;
  MlpModel mlp;
  FeatureMode features = FeatureMode::relative;

  bool operator==(const NeuroZipModel&) const = default;
};

/// Network with `hidden_depth` hidden layers of `hidden_width` units.
/// Weights are Glorot-uniform from a generator seeded with `seed`; biases are
/// zero. With zero_output_layer the final affine map starts at zero.
MlpModel make_mlp(std::size_t hidden_width, std::size_t hidden_depth, Activation activation,
                  std::uint64_t seed, bool zero_output_layer);

// Plain evaluation.

PowerPair zip_forward(const ZipParams& zip, const OperatingPoint& op, double v_t);
PowerPair mlp_forward(const MlpModel& mlp, std::array<double, 2> features);

/// Row-wise network evaluation of an N x 2 feature matrix.
Matrix mlp_forward_batch(const MlpModel& mlp, const Matrix& features);

PowerPair combine(const MixingWeights& mix, PowerPair physics, PowerPair neural);

std::array<double, 2> make_features(FeatureMode mode, double v, double theta_v, double v0, double theta_v0);

// Differentiable evaluation on a tape.

struct ZipVars {
  Var alpha_p, alpha_i, alpha_z;
  Var beta_p, beta_i, beta_z;
};

struct MixVars {
  Var a, b;
};

struct MlpVars {
  std::vector<std::pair<Var, Var>> layers;  // (weight, bias)
  Activation activation = Activation::tanh;
};

struct PowerVars {
  Var p, q;
};

ZipVars bind_parameters(autodiff::Tape& tape, const ZipParams& zip);
MlpVars bind_parameters(autodiff::Tape& tape, const MlpModel& mlp);

/// v_t may be any shape; the result has the same shape.
PowerVars zip_forward(const ZipVars& zip, const OperatingPoint& op, Var v_t);

/// Per-sample ZIP basis columns (N x 1): p0, p0*r, p0*r^2 and the q0 analogues,
/// with r = V / V0 of the sample's own trajectory.
struct ZipBasis {
  Matrix p_const, p_linear, p_quadratic;
  Matrix q_const, q_linear, q_quadratic;
};

PowerVars zip_forward(const ZipVars& zip, autodiff::Tape& tape, const ZipBasis& basis);

/// N x 2 features to N x 2 outputs; columns are (P~, Q~).
Var mlp_forward(const MlpVars& mlp, Var features);

/// Splits an N x 2 network output into its P and Q columns.
PowerVars split_columns(Var output);

PowerVars combine(const MixVars& mix, const PowerVars& physics, const PowerVars& neural);

}  // namespace neurozip
