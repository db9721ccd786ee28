#include "neurozip/evaluation.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "neurozip/error.hpp"
#include "neurozip/kernels.hpp"
#include "neurozip/text.hpp"

namespace neurozip {

namespace {

void check_architecture(const NeuroZipModel& model, FitMode mode) {
  if (mode == FitMode::zip_only) return;
  try {
    model.mlp.validate();
  } catch (const ModelError& e) {
    throw CheckpointError(std::string("network does not match the model contract: ") + e.what());
  }
}

}  // namespace

TrajectoryPrediction predict_trajectory(const NeuroZipModel& model, const Trajectory& traj, FitMode mode) {
  const std::size_t n = traj.samples.size();
  const OperatingPoint& op = traj.operating_point;
  TrajectoryPrediction out;
  out.t.resize(n);
  out.p_ref.resize(n);
  out.q_ref.resize(n);
  out.p_zip.resize(n);
  out.q_zip.resize(n);
  out.p_nn.assign(n, 0.0);
  out.q_nn.assign(n, 0.0);
  out.p_fit.resize(n);
  out.q_fit.resize(n);

  Matrix features(n, 2);
  const double theta0 = traj.theta_v0();
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = traj.samples[i];
    out.t[i] = s.t;
    out.p_ref[i] = s.p_star;
    out.q_ref[i] = s.q_star;
    const PowerPair zip = zip_forward(model.zip, op, s.v);
    out.p_zip[i] = zip.p;
    out.q_zip[i] = zip.q;
    const auto f = make_features(model.features, s.v, s.theta_v, op.v0, theta0);
    features(i, 0) = f[0];
    features(i, 1) = f[1];
  }

  if (mode != FitMode::zip_only && n > 0) {
    const Matrix nn = mlp_forward_batch(model.mlp, features);
    for (std::size_t i = 0; i < n; ++i) {
      out.p_nn[i] = nn(i, 0);
      out.q_nn[i] = nn(i, 1);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    PowerPair fit;
    switch (mode) {
      case FitMode::zip_only: fit = {out.p_zip[i], out.q_zip[i]}; break;
      case FitMode::neural_only: fit = {out.p_nn[i], out.q_nn[i]}; break;
      case FitMode::neuro_zip:
        fit = combine(model.mix, {out.p_zip[i], out.q_zip[i]}, {out.p_nn[i], out.q_nn[i]});
        break;
    }
    out.p_fit[i] = fit.p;
    out.q_fit[i] = fit.q;
  }
  return out;
}

EvalReport evaluate(const NeuroZipModel& model, std::span<const Trajectory> trajectories, FitMode mode, int threads,
                    std::string split) {
  if (trajectories.empty()) throw ContractError("evaluation needs at least one trajectory");
  check_architecture(model, mode);

  struct Partial {
    double sse_p = 0.0;
    double sse_q = 0.0;
  };
  std::vector<Partial> partial(trajectories.size());
  kernels::parallel_for(trajectories.size(), kernels::resolve_threads(threads), [&](std::size_t k) {
    const TrajectoryPrediction pred = predict_trajectory(model, trajectories[k], mode);
    Partial acc;
    for (std::size_t i = 0; i < pred.t.size(); ++i) {
      const double dp = pred.p_fit[i] - pred.p_ref[i];
      const double dq = pred.q_fit[i] - pred.q_ref[i];
      acc.sse_p += dp * dp;
      acc.sse_q += dq * dq;
    }
    partial[k] = acc;
  });

  EvalReport report;
  report.mode = mode;
  report.split = std::move(split);
  double sse_p = 0.0;
  double sse_q = 0.0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const std::size_t n = trajectories[k].samples.size();
    TrajectoryError row{trajectories[k].id, n, 0.0, 0.0};
    if (n > 0) {
      row.mse_p = partial[k].sse_p / static_cast<double>(n);
      row.mse_q = partial[k].sse_q / static_cast<double>(n);
    }
    report.per_trajectory.push_back(std::move(row));
    sse_p += partial[k].sse_p;
    sse_q += partial[k].sse_q;
    report.samples += n;
  }
  if (report.samples == 0) throw ContractError("evaluation needs at least one sample");
  report.mse_p = sse_p / static_cast<double>(report.samples);
  report.mse_q = sse_q / static_cast<double>(report.samples);

  switch (mode) {
    case FitMode::zip_only: report.a = report.b = 1.0; break;
    case FitMode::neural_only: report.a = report.b = 0.0; break;
    case FitMode::neuro_zip:
      report.a = model.mix.a;
      report.b = model.mix.b;
      break;
  }
  report.violation = violation_metric(model.zip, model.mix);
  report.breakdown = violation_breakdown(model.zip, model.mix);
  return report;
}

void write_report(const EvalReport& report, std::ostream& out) {
  using text::format_double;
  out << "mode=" << to_string(report.mode) << '\n';
  out << "split=" << report.split << '\n';
  out << "trajectories=" << report.per_trajectory.size() << '\n';
  out << "samples=" << report.samples << '\n';
  out << "mse_p=" << format_double(report.mse_p) << '\n';
  out << "mse_q=" << format_double(report.mse_q) << '\n';
  out << "a=" << format_double(report.a) << '\n';
  out << "b=" << format_double(report.b) << '\n';
  out << "violation=" << format_double(report.violation) << '\n';
  for (std::size_t i = 0; i < kEqualityCount; ++i) {
    out << "violation." << kEqualityNames[i] << '=' << format_double(report.breakdown[i]) << '\n';
  }
  for (std::size_t i = 0; i < kInequalityCount; ++i) {
    out << "violation." << kInequalityNames[i] << '=' << format_double(report.breakdown[kEqualityCount + i])
        << '\n';
  }
  for (const TrajectoryError& row : report.per_trajectory) {
    out << "trajectory." << row.id << ".samples=" << row.samples << '\n';
    out << "trajectory." << row.id << ".mse_p=" << format_double(row.mse_p) << '\n';
    out << "trajectory." << row.id << ".mse_q=" << format_double(row.mse_q) << '\n';
  }
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report '" + path.string() + "'");
  write_report(report, out);
  if (!out) throw IoError("failed writing report '" + path.string() + "'");
}

std::string metric_line(const EvalReport& report) {
  using text::format_double;
  std::ostringstream out;
  out << "mode=" << to_string(report.mode) << " split=" << report.split << " mse_p=" << format_double(report.mse_p)
      << " mse_q=" << format_double(report.mse_q) << " a=" << format_double(report.a)
      << " b=" << format_double(report.b) << " violation=" << format_double(report.violation);
  return out.str();
}

void write_comparison(const NeuroZipModel& model, const Trajectory& traj, std::ostream& out, FitMode mode) {
  check_architecture(model, mode);
  const TrajectoryPrediction pred = predict_trajectory(model, traj, mode);
  using text::format_double;
  out << "t,p_ref,q_ref,p_zip,q_zip,p_fit,q_fit\n";
  for (std::size_t i = 0; i < pred.t.size(); ++i) {
    out << format_double(pred.t[i]) << ',' << format_double(pred.p_ref[i]) << ',' << format_double(pred.q_ref[i])
        << ',' << format_double(pred.p_zip[i]) << ',' << format_double(pred.q_zip[i]) << ','
        << format_double(pred.p_fit[i]) << ',' << format_double(pred.q_fit[i]) << '\n';
  }
}

void emit_comparison(const NeuroZipModel& model, const Trajectory& traj, const std::filesystem::path& path,
                     FitMode mode) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write comparison file '" + path.string() + "'");
  write_comparison(model, traj, out, mode);
  if (!out) throw IoError("failed writing comparison file '" + path.string() + "'");
}

}  // namespace neurozip
