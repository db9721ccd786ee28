#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "neurozip/data.hpp"
#include "neurozip/models.hpp"
#include "neurozip/problem.hpp"

namespace neurozip {

struct AdamWState {
  std::uint64_t step_count = 0;
  std::vector<Matrix> m, v;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

/// One decoupled-weight-decay Adam step. Moments are created on the first call.
/// decay_mask[i] selects which parameters receive weight decay.
void adamw_step(AdamWState& state, std::span<Matrix> params, std::span<const Matrix> grads,
                const std::vector<bool>& decay_mask);

struct TrainConfig {
  std::size_t epochs = 2000;
  double lr = 0.01;
  PenaltyConfig penalty;
  std::uint64_t seed = 1;
  std::size_t patience = 200;  // 0 disables early stopping
  std::size_t batch_size = 0;  // samples per step, 0 for full batch

  Activation activation = Activation::tanh;
  std::size_t hidden_width = 20;
  std::size_t hidden_depth = 4;
  bool zero_init_output = true;
  FitMode mode = FitMode::neuro_zip;
  FeatureMode features = FeatureMode::relative;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  std::array<double, 3> split{0.6, 0.2, 0.2};

  void validate() const;
};

/// Feasible start: every ZIP share 1/3, a = b = 0.5 (1 for zip_only, 0 for
/// neural_only), network from make_mlp seeded with cfg.seed.
NeuroZipModel init_parameters(const TrainConfig& cfg);

/// Trainable tensors of `model` under `mode`, in tape binding order:
/// six ZIP scalars, then a and b (neuro_zip only), then (weight, bias) per layer
/// (all modes except zip_only).
std::vector<Matrix> parameter_list(const NeuroZipModel& model, FitMode mode);
void assign_parameters(NeuroZipModel& model, FitMode mode, std::span<const Matrix> params);

/// True for network weight matrices, false for everything else.
std::vector<bool> decay_mask(const NeuroZipModel& model, FitMode mode);

/// Central-difference check of total_loss gradients over every trainable entry
/// of `model` under `mode`.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

GradCheckResult gradient_check(const NeuroZipModel& model, const Batch& batch, FitMode mode,
                               const PenaltyConfig& penalty, double epsilon, int threads = 0);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double violation = 0.0;
  double a = 0.0;
  double b = 0.0;
};

struct TrainResult {
  NeuroZipModel model;  // parameters at best_epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

/// Gradient steps on total_loss over `train`, selecting the parameters with the
/// lowest validation total_loss. Throws DivergenceError on a non-finite loss.
TrainResult train(std::span<const Trajectory> train_set, std::span<const Trajectory> val_set,
                  const TrainConfig& cfg);

}  // namespace neurozip
