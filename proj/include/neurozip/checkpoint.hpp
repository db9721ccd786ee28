#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "neurozip/evaluation.hpp"
#include "neurozip/models.hpp"
#include "neurozip/optimizer.hpp"

namespace neurozip {

inline constexpr int kCheckpointFormatVersion = 1;

struct TrainingSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double final_train_loss = 0.0;
  bool stopped_early = false;
};

struct MetricSummary {
  FitMode mode = FitMode::neuro_zip;
  std::string split = "test";
  double mse_p = 0.0;
  double mse_q = 0.0;
  double a = 0.0;
  double b = 0.0;
  double violation = 0.0;

  bool operator==(const MetricSummary&) const = default;
};

MetricSummary summarize(const EvalReport& report);

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  TrainConfig config;
  NeuroZipModel model;
  TrainingSummary training;
  std::string manifest_hash;  // 16 hex digits
  std::optional<MetricSummary> metrics;
};

/// Line-oriented text; doubles use the shortest round-trip form, so
/// write -> read -> write is byte-stable and reload is bit-exact.
void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace neurozip
