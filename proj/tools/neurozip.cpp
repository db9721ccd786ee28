// neurozip: generate synthetic boundary-bus data, train and evaluate the
// neuro-augmented ZIP load model, and check gradients.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "neurozip/autodiff.hpp"
#include "neurozip/checkpoint.hpp"
#include "neurozip/data.hpp"
#include "neurozip/error.hpp"
#include "neurozip/evaluation.hpp"
#include "neurozip/kernels.hpp"
#include "neurozip/optimizer.hpp"
#include "neurozip/random.hpp"
#include "neurozip/text.hpp"

namespace fs = std::filesystem;
using namespace neurozip;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Thrown for bad flag values that only show up after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string mode = "neuro-zip";
  std::string activation = "tanh";
  std::string hidden = "20x4";
  std::string norm = "l2";
  std::string features = "relative";
  double qg = 1.0;
  double qh = 1.0;
  std::uint64_t seed = 1;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--seed", f.seed, "Seed for initialisation, splitting and mini-batches")->capture_default_str();
  cmd->add_option("--mode", f.mode, "Fit mode")
      ->check(CLI::IsMember({"zip-only", "neural-only", "neuro-zip"}))
      ->capture_default_str();
  cmd->add_option("--activation", f.activation, "Hidden activation")
      ->check(CLI::IsMember({"tanh", "relu"}))
      ->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "Hidden layers as WIDTHxDEPTH")->capture_default_str();
  cmd->add_option("--norm", f.norm, "Penalty norm")->check(CLI::IsMember({"l1", "l2"}))->capture_default_str();
  cmd->add_option("--features", f.features, "Network inputs")
      ->check(CLI::IsMember({"relative", "raw"}))
      ->capture_default_str();
  cmd->add_option("--qg", f.qg, "Inequality penalty weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--qh", f.qh, "Equality penalty weight")->check(CLI::NonNegativeNumber)->capture_default_str();
}

std::pair<std::size_t, std::size_t> parse_hidden(const std::string& s) {
  const auto parts = text::split(s, 'x');
  std::uint64_t w = 0;
  std::uint64_t d = 0;
  if (parts.size() != 2 || !text::parse_uint(parts[0], w) || !text::parse_uint(parts[1], d)) {
    throw UsageError("--hidden expects WIDTHxDEPTH, got '" + s + "'");
  }
  return {w, d};
}

std::array<double, 3> parse_split(const std::string& s) {
  const auto parts = text::split(s, ',');
  std::array<double, 3> out{};
  if (parts.size() != 3) throw UsageError("--split expects three comma-separated ratios, got '" + s + "'");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!text::parse_double(text::trim(parts[i]), out[i])) {
      throw UsageError("--split: bad ratio '" + std::string(parts[i]) + "'");
    }
  }
  return out;
}

TrainConfig make_config(const ModelFlags& f) {
  TrainConfig cfg;
  cfg.seed = f.seed;
  cfg.mode = parse_fit_mode(f.mode);
  cfg.activation = parse_activation(f.activation);
  cfg.features = parse_feature_mode(f.features);
  std::tie(cfg.hidden_width, cfg.hidden_depth) = parse_hidden(f.hidden);
  cfg.penalty = {f.qg, f.qh, parse_penalty_norm(f.norm)};
  return cfg;
}

int thread_budget() {
  const char* env = std::getenv("NEUROZIP_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  std::uint64_t n = 0;
  if (!text::parse_uint(text::trim(env), n)) {
    throw UsageError(std::string("NEUROZIP_THREADS must be a non-negative integer, got '") + env + "'");
  }
  return static_cast<int>(n);
}

// generate

struct GenerateFlags {
  std::string out;
  std::string scenario = "all";
  std::optional<std::size_t> n;
  std::uint64_t seed = 1;
  double noise_std = 0.0;
  double duration = 10.0;
  double dt = 0.02;
  std::string dip_depth;
  std::string voltage_recovery;
  bool phasors = false;
};

Range parse_range(const std::string& flag, const std::string& s) {
  const auto parts = text::split(s, ',');
  Range r;
  if (parts.size() != 2 || !text::parse_double(text::trim(parts[0]), r.lo) ||
      !text::parse_double(text::trim(parts[1]), r.hi)) {
    throw UsageError(flag + " expects LO,HI, got '" + s + "'");
  }
  return r;
}

int cmd_generate(const GenerateFlags& f) {
  GeneratorConfig cfg;
  cfg.seed = f.seed;
  cfg.noise_std = f.noise_std;
  cfg.duration = f.duration;
  cfg.dt = f.dt;
  if (!f.dip_depth.empty()) cfg.dip_depth = parse_range("--dip-depth", f.dip_depth);
  if (!f.voltage_recovery.empty()) cfg.voltage_recovery = parse_range("--voltage-recovery", f.voltage_recovery);
  if (f.scenario != "all") {
    const Scenario only = parse_scenario(f.scenario);
    for (std::size_t i = 0; i < kGeneratedScenarios.size(); ++i) {
      cfg.counts[i] = kGeneratedScenarios[i] == only ? f.n.value_or(cfg.counts[i]) : 0;
    }
  } else if (f.n) {
    cfg.counts.fill(*f.n);
  }
  cfg.validate();

  const auto trajectories = generate_dataset(cfg);
  save_dataset(trajectories, f.out, f.phasors ? CsvSchema::phasors : CsvSchema::powers);
  for (std::size_t i = 0; i < kGeneratedScenarios.size(); ++i) {
    if (cfg.counts[i] > 0) std::cout << to_string(kGeneratedScenarios[i]) << ' ' << cfg.counts[i] << '\n';
  }
  std::cout << "wrote " << trajectories.size() << " trajectories x " << cfg.samples_per_trajectory()
            << " samples to " << f.out << '\n';
  return 0;
}

// train

struct TrainFlags {
  ModelFlags model;
  std::string data;
  std::string out;
  std::size_t epochs = 2000;
  double lr = 0.01;
  std::size_t patience = 200;
  std::size_t batch_size = 0;
  std::string split = "0.6,0.2,0.2";
  std::string report;
  std::string history;
  std::size_t log_every = 0;
};

void write_history(const TrainResult& result, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history '" + path.string() + "'");
  out << "epoch,train_loss,val_loss,violation,a,b\n";
  for (const EpochRecord& r : result.history) {
    out << r.epoch << ',' << text::format_double(r.train_loss) << ',' << text::format_double(r.val_loss) << ','
        << text::format_double(r.violation) << ',' << text::format_double(r.a) << ',' << text::format_double(r.b)
        << '\n';
  }
}

int cmd_train(const TrainFlags& f) {
  TrainConfig cfg = make_config(f.model);
  cfg.epochs = f.epochs;
  cfg.lr = f.lr;
  cfg.patience = f.patience;
  cfg.batch_size = f.batch_size;
  cfg.split = parse_split(f.split);
  cfg.validate();

  const auto trajectories = load_dataset(f.data);
  const DatasetSplit split = split_dataset(trajectories, cfg.split, cfg.seed);
  std::cout << "split train=" << split.train.size() << " val=" << split.val.size() << " test=" << split.test.size()
            << '\n';

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(split.train, split.val, cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (f.log_every > 0) {
    for (const EpochRecord& r : result.history) {
      if (r.epoch % f.log_every == 0 || r.epoch == result.best_epoch) {
        std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << " viol "
                  << r.violation << " a " << r.a << " b " << r.b << '\n';
      }
    }
  }
  std::cout << "epochs_run=" << result.epochs_run << " best_epoch=" << result.best_epoch
            << " best_val_loss=" << text::format_double(result.best_val_loss)
            << (result.stopped_early ? " stopped_early" : "") << " seconds=" << seconds << '\n';

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.model = result.model;
  ckpt.training = {result.epochs_run, result.best_epoch, result.best_val_loss,
                   result.history.empty() ? 0.0 : result.history.back().train_loss, result.stopped_early};
  ckpt.manifest_hash = text::hex64(manifest_hash(trajectories));

  if (!split.test.empty()) {
    const EvalReport report = evaluate(result.model, split.test, cfg.mode, thread_budget(), "test");
    ckpt.metrics = summarize(report);
    if (!f.report.empty()) save_report(report, f.report);
    std::cout << metric_line(report) << '\n';
  } else {
    std::cout << "test split is empty; no metrics\n";
  }
  save_checkpoint(ckpt, f.out);
  if (!f.history.empty()) write_history(result, f.history);
  return 0;
}

// eval

struct EvalFlags {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string mode;
  std::string subset = "test";
  std::string emit_trajectory;
  std::string comparison_out;
};

int cmd_eval(const EvalFlags& f) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const auto trajectories = load_dataset(f.data);

  const Trajectory* emit = nullptr;
  if (!f.emit_trajectory.empty()) {
    for (const Trajectory& t : trajectories) {
      if (t.id == f.emit_trajectory) emit = &t;
    }
    if (emit == nullptr) throw UsageError("unknown trajectory id '" + f.emit_trajectory + "'");
  }

  const std::string hash = text::hex64(manifest_hash(trajectories));
  if (hash != ckpt.manifest_hash) {
    std::cerr << "warning: dataset manifest hash " << hash << " differs from the checkpoint's "
              << ckpt.manifest_hash << "; split membership may not match training\n";
  }

  const FitMode mode = f.mode.empty() ? ckpt.config.mode : parse_fit_mode(f.mode);
  std::vector<Trajectory> subset;
  if (f.subset == "all") {
    subset = trajectories;
  } else {
    DatasetSplit split = split_dataset(trajectories, ckpt.config.split, ckpt.config.seed);
    subset = f.subset == "train" ? std::move(split.train) : f.subset == "val" ? std::move(split.val)
                                                                              : std::move(split.test);
  }
  if (subset.empty()) throw UsageError("subset '" + f.subset + "' is empty for this dataset");

  const EvalReport report = evaluate(ckpt.model, subset, mode, thread_budget(), f.subset);
  std::cout << metric_line(report) << '\n';
  if (!f.out.empty()) save_report(report, f.out);

  if (emit != nullptr) {
    const fs::path path = f.comparison_out.empty() ? fs::path(emit->id + "_comparison.csv") : fs::path(f.comparison_out);
    emit_comparison(ckpt.model, *emit, path, mode);
    std::cout << "comparison " << emit->id << " -> " << path.string() << '\n';
  }
  return 0;
}

// gradcheck

struct GradcheckFlags {
  ModelFlags model;
  std::string data;
  std::size_t n = 10;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::string corrupt_op;
};

int cmd_gradcheck(const GradcheckFlags& f) {
  TrainConfig cfg = make_config(f.model);
  cfg.zero_init_output = false;
  cfg.validate();
  if (!(f.eps > 0.0)) throw UsageError("--eps must be positive");

  auto trajectories = load_dataset(f.data);
  if (trajectories.size() > f.n) trajectories.resize(f.n);

  // A generic point: shares and mixing weights off their feasible-start values
  // and away from the rectifier kinks.
  NeuroZipModel model = init_parameters(cfg);
  auto rng = make_engine({cfg.seed, 0x67726164ull});
  ZipParams& z = model.zip;
  for (double* x : {&z.alpha_p, &z.alpha_i, &z.alpha_z, &z.beta_p, &z.beta_i, &z.beta_z}) {
    *x += uniform(rng, -0.05, 0.05);
  }
  if (cfg.mode == FitMode::neuro_zip) model.mix = {uniform(rng, 0.3, 0.7), uniform(rng, 0.3, 0.7)};

  if (!f.corrupt_op.empty()) {
    bool found = false;
    for (int i = 0; i <= static_cast<int>(autodiff::Op::abs); ++i) {
      const auto op = static_cast<autodiff::Op>(i);
      if (autodiff::op_name(op) == f.corrupt_op) {
        autodiff::testing::set_gradient_fault(op, 1.5);
        found = true;
      }
    }
    if (!found) throw UsageError("unknown primitive '" + f.corrupt_op + "'");
  }

  const Batch batch = make_batch(trajectories, cfg.features);
  const auto start = std::chrono::steady_clock::now();
  const GradCheckResult result = gradient_check(model, batch, cfg.mode, cfg.penalty, f.eps, thread_budget());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  autodiff::testing::clear_gradient_faults();

  const bool pass = result.max_rel_error < f.tolerance;
  std::cout << "trajectories=" << trajectories.size() << " samples=" << batch.size() << " entries=" << result.entries
            << " eps=" << text::format_double(f.eps) << '\n';
  std::cout << "max_rel_error=" << text::format_double(result.max_rel_error) << " tolerance="
            << text::format_double(f.tolerance) << " seconds=" << seconds << '\n';
  std::cout << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neuro-augmented ZIP load model: data generation, training and evaluation"};
  app.require_subcommand(1);

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic trajectory dataset");
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--scenario", gen.scenario, "Scenario to generate, or all")
      ->check(CLI::IsMember({"all", "dist_fault", "trans_fault_zload", "trans_fault_composite"}))
      ->capture_default_str();
  generate->add_option("--n", gen.n, "Trajectories per selected scenario")->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  generate->add_option("--noise-std", gen.noise_std, "Measurement noise std, per unit")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  generate->add_option("--duration", gen.duration, "Trajectory length, s")->capture_default_str();
  generate->add_option("--dt", gen.dt, "Sample interval, s")->capture_default_str();
  generate->add_option("--dip-depth", gen.dip_depth, "Fault dip depth range LO,HI as a fraction of v0");
  generate->add_option("--voltage-recovery", gen.voltage_recovery, "Post-clearing voltage time constant range LO,HI, s");
  generate->add_flag("--phasors", gen.phasors, "Write current phasors (i, theta_i) instead of P, Q");

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "Fit a model and write a checkpoint");
  train_cmd->add_option("--data", tr.data, "Dataset directory or CSV")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  add_model_flags(train_cmd, tr.model);
  train_cmd->add_option("--epochs", tr.epochs, "Epoch budget")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "AdamW learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--patience", tr.patience, "Early-stopping patience, 0 to disable")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size, "Samples per step, 0 for full batch")->capture_default_str();
  train_cmd->add_option("--split", tr.split, "train,val,test ratios")->capture_default_str();
  train_cmd->add_option("--report", tr.report, "Also write the test report here");
  train_cmd->add_option("--history", tr.history, "Write per-epoch history CSV here");
  train_cmd->add_option("--log-every", tr.log_every, "Print every Nth epoch to stderr");

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--data", ev.data, "Dataset directory or CSV")->required();
  eval_cmd->add_option("--checkpoint,--model", ev.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--out", ev.out, "Report path");
  eval_cmd->add_option("--mode", ev.mode, "Fit mode (default: the checkpoint's)")
      ->check(CLI::IsMember({"zip-only", "neural-only", "neuro-zip"}));
  eval_cmd->add_option("--subset", ev.subset, "Which split to score")
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--emit-trajectory", ev.emit_trajectory, "Write a comparison CSV for this trajectory id");
  eval_cmd->add_option("--comparison-out", ev.comparison_out, "Comparison CSV path");

  GradcheckFlags gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare loss gradients with central differences");
  grad_cmd->add_option("--data", gc.data, "Dataset directory or CSV")->required();
  add_model_flags(grad_cmd, gc.model);
  grad_cmd->add_option("--n", gc.n, "Use the first N trajectories")->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--eps", gc.eps, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", gc.tolerance, "Pass threshold on max relative error")->capture_default_str();
  grad_cmd->add_option("--corrupt-op", gc.corrupt_op)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    kernels::set_max_threads(thread_budget());
    if (generate->parsed()) return cmd_generate(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (grad_cmd->parsed()) return cmd_gradcheck(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
