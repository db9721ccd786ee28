#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "neurozip/data.hpp"
#include "neurozip/models.hpp"
#include "neurozip/problem.hpp"

namespace neurozip {

struct TrajectoryError {
  std::string id;
  std::size_t samples = 0;
  double mse_p = 0.0;
  double mse_q = 0.0;
};

struct EvalReport {
  FitMode mode = FitMode::neuro_zip;
  std::string split;  // label of the evaluated subset, e.g. "test"
  std::size_t samples = 0;
  double mse_p = 0.0;  // mean over all samples of all trajectories
  double mse_q = 0.0;
  double a = 0.0;  // effective mixing weights for `mode`
  double b = 0.0;
  double violation = 0.0;  // violation_metric of the model's own parameters
  std::array<double, kEqualityCount + kInequalityCount> breakdown{};
  std::vector<TrajectoryError> per_trajectory;
};

/// Pointwise outputs of every branch for one trajectory.
struct TrajectoryPrediction {
  std::vector<double> t, p_ref, q_ref;
  std::vector<double> p_zip, q_zip;
  std::vector<double> p_nn, q_nn;
  std::vector<double> p_fit, q_fit;
};

/// zip_only: fit = ZIP branch (a = b = 1), network unused.
/// neural_only: fit = network branch (a = b = 0).
/// neuro_zip: fit = model.mix blend.
TrajectoryPrediction predict_trajectory(const NeuroZipModel& model, const Trajectory& traj, FitMode mode);

/// Parallel per trajectory (threads <= 0: default); aggregation order is fixed,
/// so the report does not depend on the thread count. Throws CheckpointError if
/// the network does not fit the 2-in/2-out contract in a mode that uses it.
EvalReport evaluate(const NeuroZipModel& model, std::span<const Trajectory> trajectories, FitMode mode,
                    int threads = 0, std::string split = "test");

/// Key-value report, one metric per line.
void write_report(const EvalReport& report, std::ostream& out);
void save_report(const EvalReport& report, const std::filesystem::path& path);

/// Single summary line: mode, split, mse_p, mse_q, a, b, violation.
std::string metric_line(const EvalReport& report);

/// CSV with columns t,p_ref,q_ref,p_zip,q_zip,p_fit,q_fit.
void write_comparison(const NeuroZipModel& model, const Trajectory& traj, std::ostream& out,
                      FitMode mode = FitMode::neuro_zip);
void emit_comparison(const NeuroZipModel& model, const Trajectory& traj, const std::filesystem::path& path,
                     FitMode mode = FitMode::neuro_zip);

}  // namespace neurozip
