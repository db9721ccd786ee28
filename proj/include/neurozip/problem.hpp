#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include "neurozip/autodiff.hpp"
#include "neurozip/data.hpp"
#include "neurozip/models.hpp"

namespace neurozip {

enum class PenaltyNorm { l1, l2 };

std::string_view to_string(PenaltyNorm n);
PenaltyNorm parse_penalty_norm(std::string_view s);

/// Weights of the inequality (q_g) and equality (q_h) penalty terms.
/// l1 sums absolute residuals, l2 sums squared residuals.
struct PenaltyConfig {
  double q_g = 1.0;
  double q_h = 1.0;
  PenaltyNorm norm = PenaltyNorm::l2;

  void validate() const;
};

inline constexpr std::size_t kEqualityCount = 2;
inline constexpr std::size_t kInequalityCount = 10;

/// Residuals of the constraint set. Equalities must be 0, inequalities <= 0.
struct ConstraintResiduals {
  std::array<double, kEqualityCount> equalities{};      // sum(alpha) - 1, sum(beta) - 1
  std::array<double, kInequalityCount> inequalities{};  // -alpha_*, -beta_*, -a, a - 1, -b, b - 1
};

extern const std::array<std::string_view, kEqualityCount> kEqualityNames;
extern const std::array<std::string_view, kInequalityCount> kInequalityNames;

ConstraintResiduals constraint_residuals(const ZipParams& zip, const MixingWeights& mix);

double constraint_penalty(const ZipParams& zip, const MixingWeights& mix, const PenaltyConfig& cfg);

/// l1, unit-weight penalty: the reported "constraint violation".
double violation_metric(const ZipParams& zip, const MixingWeights& mix);

/// Per-constraint contributions to violation_metric, in kEqualityNames then
/// kInequalityNames order.
std::array<double, kEqualityCount + kInequalityCount> violation_breakdown(const ZipParams& zip,
                                                                          const MixingWeights& mix);

/// Column-stacked training data for all samples of a set of trajectories.
struct Batch {
  Matrix features;  // N x 2
  Matrix p_star;    // N x 1
  Matrix q_star;    // N x 1
  ZipBasis basis;

  std::size_t size() const { return p_star.rows(); }
};

Batch make_batch(std::span<const Trajectory> trajectories, FeatureMode features);
Batch select_rows(const Batch& batch, std::span<const std::size_t> rows);

/// Differentiable handles for every parameter of a NeuroZipModel. Depending on
/// the fit mode some entries are constants (see bind_model).
struct ModelVars {
  ZipVars zip;
  MixVars mix;
  MlpVars mlp;
  bool has_network = true;
};

/// zip_only: a = b = 1 as constants, no network nodes.
/// neural_only: a = b = 0 as constants.
/// neuro_zip: everything trainable.
ModelVars bind_model(autodiff::Tape& tape, const NeuroZipModel& model, FitMode mode);

/// P_fit and Q_fit columns for every sample of the batch.
PowerVars predict(autodiff::Tape& tape, const ModelVars& vars, const Batch& batch, FitMode mode);

/// mean over samples of (P_fit - P*)^2 + (Q_fit - Q*)^2.
Var data_loss(Var p_fit, Var q_fit, Var p_star, Var q_star);

Var constraint_penalty(const ZipVars& zip, const MixVars& mix, const PenaltyConfig& cfg);

/// data_loss + constraint_penalty as one node.
Var total_loss(autodiff::Tape& tape, const ModelVars& vars, const Batch& batch, FitMode mode,
               const PenaltyConfig& cfg);

/// Plain double helpers mirroring the tape versions.
double data_loss(std::span<const double> p_fit, std::span<const double> q_fit, std::span<const double> p_star,
                 std::span<const double> q_star);
double total_loss_value(const NeuroZipModel& model, const Batch& batch, FitMode mode, const PenaltyConfig& cfg);

}  // namespace neurozip
