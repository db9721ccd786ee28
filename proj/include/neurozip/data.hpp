#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurozip/models.hpp"

namespace neurozip {

/// Disturbance families, mirroring the three recorded fault campaigns.
enum class Scenario {
  dist_fault,             ///< fault inside the distribution feeder, composite load
  trans_fault_zload,      ///< transmission fault, static ZIP load only
  trans_fault_composite,  ///< transmission fault, ZIP plus recovering load
  unspecified,            ///< external data without a manifest
};

inline constexpr std::array<Scenario, 3> kGeneratedScenarios = {
    Scenario::dist_fault, Scenario::trans_fault_zload, Scenario::trans_fault_composite};

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view s);

/// One boundary-bus measurement, per unit and radians.
struct Sample {
  double t = 0.0;
  double v = 1.0;
  double theta_v = 0.0;
  double p_star = 0.0;
  double q_star = 0.0;

  bool operator==(const Sample&) const = default;
};

struct Trajectory {
  std::string id;
  Scenario scenario = Scenario::unspecified;
  OperatingPoint operating_point;
  std::vector<Sample> samples;

  double theta_v0() const { return samples.empty() ? 0.0 : samples.front().theta_v; }

  bool operator==(const Trajectory&) const = default;
};

/// Sets operating_point from the first sample (v, p_star, q_star).
void refresh_operating_point(Trajectory& traj);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GeneratorConfig {
  // Trajectories per scenario, indexed like kGeneratedScenarios.
  std::array<std::size_t, 3> counts = {20, 50, 50};

  double duration = 10.0;
  double dt = 0.02;
  double fault_start = 1.0;
  double fault_duration = 0.1;
  double fault_ramp = 0.02;  // s, linear voltage fall ending at fault_start; 0 for a step

  OperatingPoint operating_point{1.0, 0.8, 0.3};
  double operating_point_spread = 0.0;  // relative, uniform per trajectory

  Range dip_depth{0.1, 0.4};          // fraction of v0 lost during the fault
  Range voltage_recovery{0.1, 0.3};   // s, post-clearing voltage time constant
  Range load_recovery{0.75, 0.85};    // s, T_r of the recovering load
  Range dynamic_share{0.25, 0.25};    // fraction of load that recovers dynamically
  Range swing_frequency{0.18, 0.22};  // Hz, post-clearing angle oscillation
  Range swing_damping{0.9, 1.1};      // s, envelope time constant
  double swing_amplitude = 0.3;       // rad per unit dip depth
  double dist_swing_scale = 0.5;      // distribution faults excite smaller swings

  ZipParams truth{0.4, 0.3, 0.3, 0.5, 0.2, 0.3};

  double noise_std = 0.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  std::size_t samples_per_trajectory() const;
};

/// Boundary phasors to active and reactive power: P = V I cos(phi), Q = V I sin(phi), phi = theta_v - theta_i.
PowerPair power_from_measurements(double v, double i, double theta_v, double theta_i);

/// Trapezoidal integration of dx/dt = (u(t) - x) / time_constant on a uniform
/// grid, with u linear between samples and x(0) = u[0].
std::vector<double> integrate_recovery(std::span<const double> input, double dt, double time_constant);

/// Deterministic in (cfg.seed, scenario, index) regardless of generation order.
Trajectory generate_trajectory(const GeneratorConfig& cfg, Scenario scenario, std::size_t index);

/// All configured trajectories, ordered by scenario then index. Parallel per
/// trajectory; output does not depend on the thread count.
std::vector<Trajectory> generate_dataset(const GeneratorConfig& cfg, int threads = 0);

enum class CsvSchema {
  powers,   ///< traj_id,t,v,theta_v,p_star,q_star
  phasors,  ///< traj_id,t,v,theta_v,i,theta_i
};

std::vector<Trajectory> read_csv(std::istream& in);
void write_csv(std::span<const Trajectory> trajectories, std::ostream& out, CsvSchema schema = CsvSchema::powers);
std::vector<Trajectory> load_csv(const std::filesystem::path& path);
void save_csv(std::span<const Trajectory> trajectories, const std::filesystem::path& path,
              CsvSchema schema = CsvSchema::powers);

/// Manifest sidecar: traj_id,scenario,v0,p0,q0,samples.
std::string manifest_text(std::span<const Trajectory> trajectories);
std::uint64_t manifest_hash(std::span<const Trajectory> trajectories);
void apply_manifest(std::vector<Trajectory>& trajectories, std::istream& manifest);

inline constexpr std::string_view kTrajectoryFile = "trajectories.csv";
inline constexpr std::string_view kManifestFile = "manifest.csv";

/// Writes trajectories.csv and manifest.csv into `dir` (created if missing).
void save_dataset(std::span<const Trajectory> trajectories, const std::filesystem::path& dir,
                  CsvSchema schema = CsvSchema::powers);

/// Accepts a dataset directory or a single CSV file. A manifest next to the CSV
/// supplies scenario tags and is checked against the data.
std::vector<Trajectory> load_dataset(const std::filesystem::path& path);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct DatasetSplit {
  std::vector<Trajectory> train, val, test;
};

/// Whole-trajectory split after a seeded shuffle. Validation and test sizes are
/// floor(ratio * n); train takes the remainder.
SplitIndices split_indices(std::size_t count, std::array<double, 3> ratios, std::uint64_t seed);
DatasetSplit split_dataset(std::span<const Trajectory> trajectories, std::array<double, 3> ratios,
                           std::uint64_t seed);

std::size_t total_samples(std::span<const Trajectory> trajectories);

}  // namespace neurozip
