#include "neurozip/problem.hpp"

#include <cmath>
#include <string>

#include "neurozip/error.hpp"

namespace neurozip {

const std::array<std::string_view, kEqualityCount> kEqualityNames = {"alpha_sum", "beta_sum"};
const std::array<std::string_view, kInequalityCount> kInequalityNames = {
    "alpha_p_nonneg", "alpha_i_nonneg", "alpha_z_nonneg", "beta_p_nonneg", "beta_i_nonneg",
    "beta_z_nonneg",  "a_lower",        "a_upper",        "b_lower",       "b_upper"};

std::string_view to_string(PenaltyNorm n) { return n == PenaltyNorm::l1 ? "l1" : "l2"; }

PenaltyNorm parse_penalty_norm(std::string_view s) {
  if (s == "l1" || s == "1") return PenaltyNorm::l1;
  if (s == "l2" || s == "2") return PenaltyNorm::l2;
  throw ConfigError("unknown penalty norm '" + std::string(s) + "'");
}

void PenaltyConfig::validate() const {
  if (!(q_g >= 0.0) || !(q_h >= 0.0)) throw ConfigError("penalty weights must be non-negative");
}

ConstraintResiduals constraint_residuals(const ZipParams& zip, const MixingWeights& mix) {
  ConstraintResiduals r;
  r.equalities = {zip.alpha_p + zip.alpha_i + zip.alpha_z - 1.0, zip.beta_p + zip.beta_i + zip.beta_z - 1.0};
  r.inequalities = {-zip.alpha_p, -zip.alpha_i, -zip.alpha_z, -zip.beta_p, -zip.beta_i,
                    -zip.beta_z,  -mix.a,       mix.a - 1.0,  -mix.b,      mix.b - 1.0};
  return r;
}

double constraint_penalty(const ZipParams& zip, const MixingWeights& mix, const PenaltyConfig& cfg) {
  const ConstraintResiduals r = constraint_residuals(zip, mix);
  const auto norm = [&](double x) { return cfg.norm == PenaltyNorm::l1 ? std::fabs(x) : x * x; };
  double g = 0.0;
  for (double x : r.inequalities) g += norm(x > 0.0 ? x : 0.0);
  double h = 0.0;
  for (double x : r.equalities) h += norm(x);
  return cfg.q_g * g + cfg.q_h * h;
}

double violation_metric(const ZipParams& zip, const MixingWeights& mix) {
  return constraint_penalty(zip, mix, PenaltyConfig{1.0, 1.0, PenaltyNorm::l1});
}

std::array<double, kEqualityCount + kInequalityCount> violation_breakdown(const ZipParams& zip,
                                                                          const MixingWeights& mix) {
  const ConstraintResiduals r = constraint_residuals(zip, mix);
  std::array<double, kEqualityCount + kInequalityCount> out{};
  for (std::size_t i = 0; i < kEqualityCount; ++i) out[i] = std::fabs(r.equalities[i]);
  for (std::size_t i = 0; i < kInequalityCount; ++i) out[kEqualityCount + i] = r.inequalities[i] > 0.0 ? r.inequalities[i] : 0.0;
  return out;
}

Batch make_batch(std::span<const Trajectory> trajectories, FeatureMode features) {
  const std::size_t n = total_samples(trajectories);
  if (n == 0) throw ContractError("batch needs at least one sample");
  Batch b;
  b.features = Matrix(n, 2);
  b.p_star = Matrix(n, 1);
  b.q_star = Matrix(n, 1);
  b.basis = {Matrix(n, 1), Matrix(n, 1), Matrix(n, 1), Matrix(n, 1), Matrix(n, 1), Matrix(n, 1)};
  std::size_t row = 0;
  for (const Trajectory& traj : trajectories) {
    const OperatingPoint& op = traj.operating_point;
    if (!(op.v0 > 0.0)) throw OperatingPointError("trajectory '" + traj.id + "' has non-positive v0");
    const double theta0 = traj.theta_v0();
    for (const Sample& s : traj.samples) {
      const auto f = make_features(features, s.v, s.theta_v, op.v0, theta0);
      b.features(row, 0) = f[0];
      b.features(row, 1) = f[1];
      b.p_star[row] = s.p_star;
      b.q_star[row] = s.q_star;
      const double r = s.v / op.v0;
      const double r2 = r * r;
      b.basis.p_const[row] = op.p0;
      b.basis.p_linear[row] = op.p0 * r;
      b.basis.p_quadratic[row] = op.p0 * r2;
      b.basis.q_const[row] = op.q0;
      b.basis.q_linear[row] = op.q0 * r;
      b.basis.q_quadratic[row] = op.q0 * r2;
      ++row;
    }
  }
  return b;
}

Batch select_rows(const Batch& batch, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("batch needs at least one sample");
  const std::size_t n = rows.size();
  Batch out;
  out.features = Matrix(n, 2);
  out.p_star = Matrix(n, 1);
  out.q_star = Matrix(n, 1);
  out.basis = {Matrix(n, 1), Matrix(n, 1), Matrix(n, 1), Matrix(n, 1), Matrix(n, 1), Matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows[i];
    out.features(i, 0) = batch.features(r, 0);
    out.features(i, 1) = batch.features(r, 1);
    out.p_star[i] = batch.p_star[r];
    out.q_star[i] = batch.q_star[r];
    out.basis.p_const[i] = batch.basis.p_const[r];
    out.basis.p_linear[i] = batch.basis.p_linear[r];
    out.basis.p_quadratic[i] = batch.basis.p_quadratic[r];
    out.basis.q_const[i] = batch.basis.q_const[r];
    out.basis.q_linear[i] = batch.basis.q_linear[r];
    out.basis.q_quadratic[i] = batch.basis.q_quadratic[r];
  }
  return out;
}

ModelVars bind_model(autodiff::Tape& tape, const NeuroZipModel& model, FitMode mode) {
  ModelVars vars;
  vars.zip = bind_parameters(tape, model.zip);
  switch (mode) {
    case FitMode::zip_only:
      vars.mix = {tape.constant(1.0), tape.constant(1.0)};
      vars.has_network = false;
      break;
    case FitMode::neural_only:
      vars.mix = {tape.constant(0.0), tape.constant(0.0)};
      break;
    case FitMode::neuro_zip:
      vars.mix = {tape.parameter(Matrix::scalar(model.mix.a)), tape.parameter(Matrix::scalar(model.mix.b))};
      break;
  }
  if (vars.has_network) {
    model.mlp.validate();
    vars.mlp = bind_parameters(tape, model.mlp);
  }
  return vars;
}

PowerVars predict(autodiff::Tape& tape, const ModelVars& vars, const Batch& batch, FitMode mode) {
  const PowerVars physics = zip_forward(vars.zip, tape, batch.basis);
  if (mode == FitMode::zip_only || !vars.has_network) return physics;
  const PowerVars neural = split_columns(mlp_forward(vars.mlp, tape.constant(batch.features)));
  return combine(vars.mix, physics, neural);
}

Var data_loss(Var p_fit, Var q_fit, Var p_star, Var q_star) {
  if (p_fit.value().size() == 0) throw ContractError("data loss over an empty batch");
  const auto& pv = p_fit.value();
  if (!pv.same_shape(q_fit.value()) || !pv.same_shape(p_star.value()) || !pv.same_shape(q_star.value())) {
    throw DimensionError("data loss: outputs and references are not aligned " + autodiff::shape_string(pv) + " " +
                         autodiff::shape_string(q_fit.value()) + " " + autodiff::shape_string(p_star.value()) + " " +
                         autodiff::shape_string(q_star.value()));
  }
  return mean(square(p_fit - p_star) + square(q_fit - q_star));
}

Var constraint_penalty(const ZipVars& zip, const MixVars& mix, const PenaltyConfig& cfg) {
  const auto norm = [&](Var x) { return cfg.norm == PenaltyNorm::l1 ? abs(x) : square(x); };
  const Var h_alpha = zip.alpha_p + zip.alpha_i + zip.alpha_z + (-1.0);
  const Var h_beta = zip.beta_p + zip.beta_i + zip.beta_z + (-1.0);
  const Var h = norm(h_alpha) + norm(h_beta);

  const Var g_terms[kInequalityCount] = {-zip.alpha_p, -zip.alpha_i, -zip.alpha_z, -zip.beta_p,
                                         -zip.beta_i,  -zip.beta_z,  -mix.a,       mix.a + (-1.0),
                                         -mix.b,       mix.b + (-1.0)};
  Var g = norm(relu(g_terms[0]));
  for (std::size_t i = 1; i < kInequalityCount; ++i) g = g + norm(relu(g_terms[i]));
  return cfg.q_g * g + cfg.q_h * h;
}

Var total_loss(autodiff::Tape& tape, const ModelVars& vars, const Batch& batch, FitMode mode,
               const PenaltyConfig& cfg) {
  const PowerVars fit = predict(tape, vars, batch, mode);
  const Var objective = data_loss(fit.p, fit.q, tape.constant(batch.p_star), tape.constant(batch.q_star));
  return objective + constraint_penalty(vars.zip, vars.mix, cfg);
}

double data_loss(std::span<const double> p_fit, std::span<const double> q_fit, std::span<const double> p_star,
                 std::span<const double> q_star) {
  if (p_fit.empty()) throw ContractError("data loss over an empty batch");
  if (q_fit.size() != p_fit.size() || p_star.size() != p_fit.size() || q_star.size() != p_fit.size()) {
    throw DimensionError("data loss: outputs and references are not aligned");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p_fit.size(); ++i) {
    const double dp = p_fit[i] - p_star[i];
    const double dq = q_fit[i] - q_star[i];
    s += dp * dp + dq * dq;
  }
  return s / static_cast<double>(p_fit.size());
}

double total_loss_value(const NeuroZipModel& model, const Batch& batch, FitMode mode, const PenaltyConfig& cfg) {
  autodiff::Tape tape;
  const ModelVars vars = bind_model(tape, model, mode);
  return total_loss(tape, vars, batch, mode, cfg).value().item();
}

}  // namespace neurozip
