#include "neurozip/optimizer.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "neurozip/error.hpp"
#include "neurozip/kernels.hpp"
#include "neurozip/random.hpp"
#include "neurozip/text.hpp"

namespace neurozip {

void AdamWState::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("moment decay rates must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

void adamw_step(AdamWState& state, std::span<Matrix> params, std::span<const Matrix> grads,
                const std::vector<bool>& decay_mask) {
  if (grads.size() != params.size() || decay_mask.size() != params.size()) {
    throw ContractError("adamw_step: " + std::to_string(params.size()) + " parameters, " +
                        std::to_string(grads.size()) + " gradients, " + std::to_string(decay_mask.size()) +
                        " mask entries");
  }
  if (state.m.empty() && state.v.empty()) {
    for (const Matrix& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adamw_step: optimizer state tracks a different parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i]) || !state.m[i].same_shape(params[i]) || !state.v[i].same_shape(params[i])) {
      throw ContractError("adamw_step: shape mismatch at parameter " + std::to_string(i) + ", param " +
                          autodiff::shape_string(params[i]) + " grad " + autodiff::shape_string(grads[i]));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double wd = decay_mask[i] ? state.weight_decay : 0.0;
    auto p = params[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * (g[j] * g[j]);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] = p[j] - state.lr * (m_hat / (std::sqrt(v_hat) + state.eps) + wd * p[j]);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  penalty.validate();
  if (hidden_width == 0 && hidden_depth > 0) throw ConfigError("hidden width must be positive");
  AdamWState probe;
  probe.lr = lr;
  probe.beta1 = beta1;
  probe.beta2 = beta2;
  probe.eps = eps;
  probe.weight_decay = weight_decay;
  probe.validate();
  double total = 0.0;
  for (double r : split) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

NeuroZipModel init_parameters(const TrainConfig& cfg) {
  NeuroZipModel model;
  const double third = 1.0 / 3.0;
  model.zip = {third, third, third, third, third, third};
  switch (cfg.mode) {
    case FitMode::zip_only: model.mix = {1.0, 1.0}; break;
    case FitMode::neural_only: model.mix = {0.0, 0.0}; break;
    case FitMode::neuro_zip: model.mix = {0.5, 0.5}; break;
  }
  model.mlp = make_mlp(cfg.hidden_width, cfg.hidden_depth, cfg.activation, cfg.seed, cfg.zero_init_output);
  model.features = cfg.features;
  return model;
}

std::vector<Matrix> parameter_list(const NeuroZipModel& model, FitMode mode) {
  const ZipParams& z = model.zip;
  std::vector<Matrix> out;
  for (double x : {z.alpha_p, z.alpha_i, z.alpha_z, z.beta_p, z.beta_i, z.beta_z}) out.push_back(Matrix::scalar(x));
  if (mode == FitMode::neuro_zip) {
    out.push_back(Matrix::scalar(model.mix.a));
    out.push_back(Matrix::scalar(model.mix.b));
  }
  if (mode != FitMode::zip_only) {
    for (const DenseLayer& layer : model.mlp.layers) {
      out.push_back(layer.weight);
      out.push_back(layer.bias);
    }
  }
  return out;
}

void assign_parameters(NeuroZipModel& model, FitMode mode, std::span<const Matrix> params) {
  const std::size_t expected =
      6 + (mode == FitMode::neuro_zip ? 2 : 0) + (mode != FitMode::zip_only ? 2 * model.mlp.layers.size() : 0);
  if (params.size() != expected) {
    throw ContractError("assign_parameters: expected " + std::to_string(expected) + " tensors, got " +
                        std::to_string(params.size()));
  }
  std::size_t i = 0;
  ZipParams& z = model.zip;
  for (double* x : {&z.alpha_p, &z.alpha_i, &z.alpha_z, &z.beta_p, &z.beta_i, &z.beta_z}) *x = params[i++].item();
  if (mode == FitMode::neuro_zip) {
    model.mix.a = params[i++].item();
    model.mix.b = params[i++].item();
  }
  if (mode != FitMode::zip_only) {
    for (DenseLayer& layer : model.mlp.layers) {
      if (!params[i].same_shape(layer.weight) || !params[i + 1].same_shape(layer.bias)) {
        throw ContractError("assign_parameters: layer shape mismatch");
      }
      layer.weight = params[i++];
      layer.bias = params[i++];
    }
  }
}

std::vector<bool> decay_mask(const NeuroZipModel& model, FitMode mode) {
  std::vector<bool> mask(mode == FitMode::neuro_zip ? 8 : 6, false);
  if (mode != FitMode::zip_only) {
    for (std::size_t l = 0; l < model.mlp.layers.size(); ++l) {
      mask.push_back(true);
      mask.push_back(false);
    }
  }
  return mask;
}

namespace {

std::vector<Var> trainable_vars(const ModelVars& vars, FitMode mode) {
  const ZipVars& z = vars.zip;
  std::vector<Var> out{z.alpha_p, z.alpha_i, z.alpha_z, z.beta_p, z.beta_i, z.beta_z};
  if (mode == FitMode::neuro_zip) {
    out.push_back(vars.mix.a);
    out.push_back(vars.mix.b);
  }
  if (mode != FitMode::zip_only) {
    for (const auto& [w, b] : vars.mlp.layers) {
      out.push_back(w);
      out.push_back(b);
    }
  }
  return out;
}

double frobenius(const Matrix& m) {
  double s = 0.0;
  for (double x : m.values()) s += x * x;
  return std::sqrt(s);
}

[[noreturn]] void diverged(std::size_t epoch, const char* which, double loss, const NeuroZipModel& model,
                           FitMode mode) {
  std::ostringstream msg;
  msg << which << " loss became " << loss << " at epoch " << epoch << "; parameter norms:";
  const auto params = parameter_list(model, mode);
  const char* zip_names[] = {"alpha_p", "alpha_i", "alpha_z", "beta_p", "beta_i", "beta_z"};
  std::size_t i = 0;
  for (; i < 6; ++i) msg << ' ' << zip_names[i] << '=' << text::format_double(params[i].item());
  if (mode == FitMode::neuro_zip) {
    msg << " a=" << text::format_double(params[i].item()) << " b=" << text::format_double(params[i + 1].item());
    i += 2;
  }
  for (std::size_t l = 0; i < params.size(); i += 2, ++l) {
    msg << " W" << l << '=' << text::format_double(frobenius(params[i])) << " b" << l << '='
        << text::format_double(frobenius(params[i + 1]));
  }
  throw DivergenceError(msg.str());
}

struct StepResult {
  double loss;
  std::vector<Matrix> grads;
};

StepResult loss_and_grads(const NeuroZipModel& model, const Batch& batch, const TrainConfig& cfg) {
  autodiff::Tape tape;
  const ModelVars vars = bind_model(tape, model, cfg.mode);
  const Var loss = total_loss(tape, vars, batch, cfg.mode, cfg.penalty);
  StepResult out{loss.value().item(), {}};
  if (!std::isfinite(out.loss)) return out;
  const autodiff::GradientTable grads = tape.backward(loss);
  for (const Var v : trainable_vars(vars, cfg.mode)) out.grads.push_back(grads[v]);
  return out;
}

}  // namespace

GradCheckResult gradient_check(const NeuroZipModel& model, const Batch& batch, FitMode mode,
                               const PenaltyConfig& penalty, double epsilon, int threads) {
  if (!(epsilon > 0.0)) throw ContractError("gradient_check: epsilon must be positive");
  const std::vector<Matrix> params = parameter_list(model, mode);
  const std::size_t first_layer = mode == FitMode::neuro_zip ? 8 : 6;
  const bool network = mode != FitMode::zip_only;
  const std::size_t depth = network ? model.mlp.layers.size() : 0;

  const auto unpack = [&](autodiff::Tape& tape, std::span<const Var> vars, std::size_t from_layer) {
    ModelVars mv;
    mv.zip = {vars[0], vars[1], vars[2], vars[3], vars[4], vars[5]};
    if (mode == FitMode::neuro_zip) {
      mv.mix = {vars[6], vars[7]};
    } else {
      const double w = mode == FitMode::zip_only ? 1.0 : 0.0;
      mv.mix = {tape.constant(w), tape.constant(w)};
    }
    mv.has_network = network;
    mv.mlp.activation = model.mlp.activation;
    for (std::size_t l = from_layer; l < depth; ++l) {
      mv.mlp.layers.emplace_back(vars[first_layer + 2 * l], vars[first_layer + 2 * l + 1]);
    }
    return mv;
  };

  // Analytic gradients come from one backward pass over the full loss.
  std::vector<Matrix> analytic;
  {
    autodiff::Tape tape;
    std::vector<Var> vars;
    for (const Matrix& p : params) vars.push_back(tape.parameter(p));
    const Var loss = total_loss(tape, unpack(tape, vars, 0), batch, mode, penalty);
    const autodiff::GradientTable grads = tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(grads[v]);
  }

  // Perturbing layer l leaves every activation before it unchanged, so each
  // probe re-runs the network from its own layer only. inputs[l] is the
  // activation entering layer l; inputs[depth] is the network output.
  std::vector<Matrix> inputs;
  if (network) {
    autodiff::Tape tape;
    inputs.push_back(batch.features);
    for (std::size_t l = 0; l < depth; ++l) {
      MlpVars one;
      one.activation = model.mlp.activation;
      one.layers.emplace_back(tape.constant(model.mlp.layers[l].weight), tape.constant(model.mlp.layers[l].bias));
      Var h = mlp_forward(one, tape.constant(inputs.back()));
      if (l + 1 < depth) h = model.mlp.activation == Activation::tanh ? tanh(h) : relu(h);
      inputs.push_back(h.value());
    }
  }

  std::vector<autodiff::LossBuilder> from_layer;
  for (std::size_t start = 0; start <= depth; ++start) {
    from_layer.push_back([&, start](autodiff::Tape& tape, std::span<const Var> vars) {
      const ModelVars mv = unpack(tape, vars, start);
      PowerVars fit = zip_forward(mv.zip, tape, batch.basis);
      if (network) {
        Var h = tape.constant(inputs[start]);
        if (start < depth) h = mlp_forward(mv.mlp, h);
        fit = combine(mv.mix, fit, split_columns(h));
      }
      return data_loss(fit.p, fit.q, tape.constant(batch.p_star), tape.constant(batch.q_star)) +
             constraint_penalty(mv.zip, mv.mix, penalty);
    });
  }

  struct Probe {
    std::size_t param, entry, start;
  };
  std::vector<Probe> probes;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t start = p < first_layer ? depth : (p - first_layer) / 2;
    for (std::size_t e = 0; e < params[p].size(); ++e) probes.push_back({p, e, start});
  }

  std::vector<double> errors(probes.size(), 0.0);
  kernels::parallel_for(probes.size(), threads, [&](std::size_t i) {
    const Probe probe = probes[i];
    std::vector<Matrix> shifted = params;
    const double base = params[probe.param][probe.entry];
    shifted[probe.param][probe.entry] = base + epsilon;
    const double plus = autodiff::evaluate_loss(from_layer[probe.start], shifted);
    shifted[probe.param][probe.entry] = base - epsilon;
    const double minus = autodiff::evaluate_loss(from_layer[probe.start], shifted);
    const double central = (plus - minus) / (2.0 * epsilon);
    errors[i] = std::fabs(analytic[probe.param][probe.entry] - central) / (std::fabs(central) + 1e-12);
  });

  GradCheckResult out;
  out.entries = probes.size();
  out.max_rel_error = errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
  return out;
}

TrainResult train(std::span<const Trajectory> train_set, std::span<const Trajectory> val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("training split is empty");
  if (val_set.empty()) throw ContractError("validation split is empty");

  const Batch train_batch = make_batch(train_set, cfg.features);
  const Batch val_batch = make_batch(val_set, cfg.features);

  NeuroZipModel model = init_parameters(cfg);
  std::vector<Matrix> params = parameter_list(model, cfg.mode);
  const std::vector<bool> mask = decay_mask(model, cfg.mode);

  AdamWState state;
  state.lr = cfg.lr;
  state.beta1 = cfg.beta1;
  state.beta2 = cfg.beta2;
  state.eps = cfg.eps;
  state.weight_decay = cfg.weight_decay;

  const bool mini = cfg.batch_size > 0 && cfg.batch_size < train_batch.size();
  std::vector<std::size_t> order(train_batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.model = model;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double train_loss = 0.0;
    if (!mini) {
      StepResult step = loss_and_grads(model, train_batch, cfg);
      if (!std::isfinite(step.loss)) diverged(epoch, "training", step.loss, model, cfg.mode);
      adamw_step(state, params, step.grads, mask);
      assign_parameters(model, cfg.mode, params);
      train_loss = step.loss;
    } else {
      auto rng = make_engine({cfg.seed, 0x6d696e69ull, epoch});
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      double weighted = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t len = std::min(cfg.batch_size, order.size() - start);
        const Batch sub = select_rows(train_batch, std::span<const std::size_t>(order).subspan(start, len));
        StepResult step = loss_and_grads(model, sub, cfg);
        if (!std::isfinite(step.loss)) diverged(epoch, "training", step.loss, model, cfg.mode);
        adamw_step(state, params, step.grads, mask);
        assign_parameters(model, cfg.mode, params);
        weighted += step.loss * static_cast<double>(len);
      }
      train_loss = weighted / static_cast<double>(order.size());
    }

    const double val_loss = total_loss_value(model, val_batch, cfg.mode, cfg.penalty);
    if (!std::isfinite(val_loss)) diverged(epoch, "validation", val_loss, model, cfg.mode);

    result.history.push_back({epoch, train_loss, val_loss, violation_metric(model.zip, model.mix), model.mix.a,
                              model.mix.b});
    result.epochs_run = epoch;

    if (!have_best || val_loss < result.best_val_loss) {
      have_best = true;
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model = model;
    } else if (cfg.patience > 0 && epoch - result.best_epoch >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace neurozip
