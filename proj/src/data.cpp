#include "neurozip/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "neurozip/error.hpp"
#include "neurozip/kernels.hpp"
#include "neurozip/random.hpp"
#include "neurozip/text.hpp"

namespace neurozip {

namespace {

// Grid times are n * dt; event times are compared with this slack so that
// round-off in n * dt does not move an event by one sample.
constexpr double kTimeSlack = 1e-9;

void check_range(const Range& r, std::string_view name, double min_lo, bool strictly_positive = false) {
  if (!(r.lo <= r.hi)) throw ConfigError(std::string(name) + ": lower bound exceeds upper bound");
  if (r.lo < min_lo || (strictly_positive && !(r.lo > 0.0))) {
    throw ConfigError(std::string(name) + ": lower bound out of range");
  }
}

std::size_t scenario_slot(Scenario s) {
  switch (s) {
    case Scenario::dist_fault: return 0;
    case Scenario::trans_fault_zload: return 1;
    case Scenario::trans_fault_composite: return 2;
    case Scenario::unspecified: break;
  }
  throw ConfigError("cannot generate an unspecified scenario");
}

std::string trajectory_id(Scenario s, std::size_t index) {
  std::ostringstream os;
  os << to_string(s) << '_';
  os.width(3);
  os.fill('0');
  os << index;
  return os.str();
}

}  // namespace

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::dist_fault: return "dist_fault";
    case Scenario::trans_fault_zload: return "trans_fault_zload";
    case Scenario::trans_fault_composite: return "trans_fault_composite";
    case Scenario::unspecified: return "unspecified";
  }
  return "unspecified";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "dist_fault") return Scenario::dist_fault;
  if (s == "trans_fault_zload") return Scenario::trans_fault_zload;
  if (s == "trans_fault_composite") return Scenario::trans_fault_composite;
  if (s == "unspecified") return Scenario::unspecified;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

void refresh_operating_point(Trajectory& traj) {
  if (traj.samples.empty()) return;
  const Sample& first = traj.samples.front();
  traj.operating_point = {first.v, first.p_star, first.q_star};
}

void GeneratorConfig::validate() const {
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (dt > duration) throw ConfigError("dt exceeds duration");
  if (fault_start < 0.0 || fault_duration < 0.0) throw ConfigError("fault timing must be non-negative");
  if (fault_ramp < 0.0 || fault_ramp > fault_start) throw ConfigError("fault ramp must be in [0, fault_start]");
  if (!(fault_start + fault_duration < duration)) throw ConfigError("fault must clear before the end of the record");
  if (!(operating_point.v0 > 0.0)) throw ConfigError("operating point voltage must be positive");
  if (operating_point_spread < 0.0 || operating_point_spread >= 1.0) {
    throw ConfigError("operating point spread must be in [0, 1)");
  }
  check_range(dip_depth, "dip depth", 0.0);
  if (dip_depth.hi >= 1.0) throw ConfigError("dip depth must stay below 1");
  check_range(voltage_recovery, "voltage recovery time constant", 0.0, true);
  check_range(load_recovery, "load recovery time constant", 0.0, true);
  check_range(dynamic_share, "dynamic share", 0.0);
  if (dynamic_share.hi > 1.0) throw ConfigError("dynamic share must not exceed 1");
  check_range(swing_frequency, "swing frequency", 0.0);
  check_range(swing_damping, "swing damping", 0.0, true);
  if (swing_amplitude < 0.0 || dist_swing_scale < 0.0) throw ConfigError("swing amplitude must be non-negative");
  if (noise_std < 0.0) throw ConfigError("noise std must be non-negative");
}

std::size_t GeneratorConfig::samples_per_trajectory() const {
  return static_cast<std::size_t>(std::llround(duration / dt)) + 1;
}

PowerPair power_from_measurements(double v, double i, double theta_v, double theta_i) {
  const double phi = theta_v - theta_i;
  return {v * i * std::cos(phi), v * i * std::sin(phi)};
}

std::vector<double> integrate_recovery(std::span<const double> input, double dt, double time_constant) {
  if (!(dt > 0.0) || !(time_constant > 0.0)) throw ConfigError("recovery integration needs dt > 0 and T > 0");
  std::vector<double> x(input.size());
  if (input.empty()) return x;
  const double c = dt / (2.0 * time_constant);
  x[0] = input[0];
  for (std::size_t n = 0; n + 1 < input.size(); ++n) {
    x[n + 1] = ((1.0 - c) * x[n] + c * (input[n] + input[n + 1])) / (1.0 + c);
  }
  return x;
}

Trajectory generate_trajectory(const GeneratorConfig& cfg, Scenario scenario, std::size_t index) {
  cfg.validate();
  const std::size_t slot = scenario_slot(scenario);
  auto rng = make_engine({cfg.seed, slot, index});

  const auto spread = [&](double base) {
    return base * (1.0 + cfg.operating_point_spread * (2.0 * uniform01(rng) - 1.0));
  };
  OperatingPoint op;
  op.v0 = spread(cfg.operating_point.v0);
  op.p0 = spread(cfg.operating_point.p0);
  op.q0 = spread(cfg.operating_point.q0);

  const double depth = uniform(rng, cfg.dip_depth.lo, cfg.dip_depth.hi);
  const double tau_v = uniform(rng, cfg.voltage_recovery.lo, cfg.voltage_recovery.hi);
  const double t_r = uniform(rng, cfg.load_recovery.lo, cfg.load_recovery.hi);
  const double share = uniform(rng, cfg.dynamic_share.lo, cfg.dynamic_share.hi);
  const double freq = uniform(rng, cfg.swing_frequency.lo, cfg.swing_frequency.hi);
  const double damping = uniform(rng, cfg.swing_damping.lo, cfg.swing_damping.hi);
  const double amplitude =
      cfg.swing_amplitude * depth * (scenario == Scenario::dist_fault ? cfg.dist_swing_scale : 1.0);

  const std::size_t n = cfg.samples_per_trajectory();
  const double t_fault = cfg.fault_start;
  const double t_clear = cfg.fault_start + cfg.fault_duration;

  std::vector<double> t(n), v(n), theta(n), p_zip(n), q_zip(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = static_cast<double>(k) * cfg.dt;
    if (t[k] < t_fault - cfg.fault_ramp - kTimeSlack) {
      v[k] = op.v0;
      theta[k] = 0.0;
    } else if (t[k] < t_fault - kTimeSlack) {
      // A finite fall keeps u(t) continuous, so the trapezoidal rule converges at second order
      const double f = (t[k] - (t_fault - cfg.fault_ramp)) / cfg.fault_ramp;
      v[k] = op.v0 * (1.0 - f * depth);
      theta[k] = -f * amplitude;
    } else if (t[k] < t_clear - kTimeSlack) {
      v[k] = op.v0 * (1.0 - depth);
      theta[k] = -amplitude;
    } else {
      const double s = std::max(0.0, t[k] - t_clear);
      v[k] = op.v0 - op.v0 * depth * std::exp(-s / tau_v);
      theta[k] = -amplitude * std::exp(-s / damping) * std::cos(2.0 * std::numbers::pi * freq * s);
    }
    const PowerPair pq = zip_forward(cfg.truth, op, v[k]);
    p_zip[k] = pq.p;
    q_zip[k] = pq.q;
  }

  std::vector<double> p = p_zip;
  std::vector<double> q = q_zip;
  if (scenario != Scenario::trans_fault_zload) {
    const std::vector<double> xp = integrate_recovery(p_zip, cfg.dt, t_r);
    const std::vector<double> xq = integrate_recovery(q_zip, cfg.dt, t_r);
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = (1.0 - share) * p_zip[k] + share * xp[k];
      q[k] = (1.0 - share) * q_zip[k] + share * xq[k];
    }
  }

  Trajectory traj;
  traj.id = trajectory_id(scenario, index);
  traj.scenario = scenario;
  traj.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    Sample& s = traj.samples[k];
    s = {t[k], v[k], theta[k], p[k], q[k]};
    if (cfg.noise_std > 0.0) {
      s.v += cfg.noise_std * normal(rng);
      s.theta_v += cfg.noise_std * normal(rng);
      s.p_star += cfg.noise_std * normal(rng);
      s.q_star += cfg.noise_std * normal(rng);
    }
  }
  refresh_operating_point(traj);
  return traj;
}

std::vector<Trajectory> generate_dataset(const GeneratorConfig& cfg, int threads) {
  cfg.validate();
  struct Job {
    Scenario scenario;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < kGeneratedScenarios.size(); ++s)
    for (std::size_t i = 0; i < cfg.counts[s]; ++i) jobs.push_back({kGeneratedScenarios[s], i});

  std::vector<Trajectory> out(jobs.size());
  kernels::parallel_for(jobs.size(), threads,
                        [&](std::size_t j) { out[j] = generate_trajectory(cfg, jobs[j].scenario, jobs[j].index); });
  return out;
}

std::vector<Trajectory> read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::trim(line).empty()) {
      for (std::string_view col : text::split(line, ',')) header.emplace_back(text::trim(col));
      break;
    }
  }
  if (header.empty()) throw ParseError("empty file: expected a header line", line_no == 0 ? 1 : line_no);

  const auto find = [&](std::string_view name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  static const std::set<std::string, std::less<>> known = {"traj_id", "t",      "v",      "theta_v",
                                                           "p_star",  "q_star", "i",      "theta_i"};
  for (const std::string& col : header) {
    if (!known.count(col)) throw SchemaError("unknown column '" + col + "'");
    if (std::count(header.begin(), header.end(), col) > 1) throw SchemaError("duplicate column '" + col + "'");
  }
  const int c_id = find("traj_id"), c_t = find("t"), c_v = find("v"), c_th = find("theta_v");
  const int c_p = find("p_star"), c_q = find("q_star"), c_i = find("i"), c_thi = find("theta_i");
  if (c_id < 0 || c_t < 0 || c_v < 0 || c_th < 0) throw SchemaError("missing one of traj_id,t,v,theta_v");
  const bool has_powers = c_p >= 0 || c_q >= 0;
  const bool has_phasors = c_i >= 0 || c_thi >= 0;
  if (has_powers && has_phasors) throw SchemaError("mixed column schemas: both power and current columns present");
  if (has_powers && (c_p < 0 || c_q < 0)) throw SchemaError("power schema needs both p_star and q_star");
  if (has_phasors && (c_i < 0 || c_thi < 0)) throw SchemaError("phasor schema needs both i and theta_i");
  if (!has_powers && !has_phasors) throw SchemaError("no power or current columns");

  std::vector<Trajectory> out;
  std::set<std::string, std::less<>> finished;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const std::vector<std::string_view> fields = text::split(line, ',');
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    const std::string_view id = text::trim(fields[static_cast<std::size_t>(c_id)]);
    if (id.empty()) throw ParseError("empty traj_id", line_no);
    const auto number = [&](int col) {
      double x = 0.0;
      if (!text::parse_double(fields[static_cast<std::size_t>(col)], x) || !std::isfinite(x)) {
        throw ParseError("bad number in column '" + header[static_cast<std::size_t>(col)] + "'", line_no);
      }
      return x;
    };
    Sample s;
    s.t = number(c_t);
    s.v = number(c_v);
    s.theta_v = number(c_th);
    if (!(s.v > 0.0)) throw ParseError("voltage magnitude must be positive", line_no);
    if (has_powers) {
      s.p_star = number(c_p);
      s.q_star = number(c_q);
    } else {
      const PowerPair pq = power_from_measurements(s.v, number(c_i), s.theta_v, number(c_thi));
      s.p_star = pq.p;
      s.q_star = pq.q;
    }

    if (out.empty() || out.back().id != id) {
      if (finished.count(id)) {
        throw ParseError("rows of trajectory '" + std::string(id) + "' are not contiguous", line_no);
      }
      if (!out.empty()) finished.insert(out.back().id);
      out.push_back(Trajectory{std::string(id), Scenario::unspecified, {}, {}});
    } else if (s.t < out.back().samples.back().t) {
      throw ParseError("time decreases within trajectory '" + std::string(id) + "'", line_no);
    }
    out.back().samples.push_back(s);
  }
  if (out.empty()) throw ParseError("no samples after header", line_no);
  for (Trajectory& traj : out) refresh_operating_point(traj);
  return out;
}

void write_csv(std::span<const Trajectory> trajectories, std::ostream& out, CsvSchema schema) {
  using text::format_double;
  out << (schema == CsvSchema::powers ? "traj_id,t,v,theta_v,p_star,q_star\n" : "traj_id,t,v,theta_v,i,theta_i\n");
  for (const Trajectory& traj : trajectories) {
    for (const Sample& s : traj.samples) {
      out << traj.id << ',' << format_double(s.t) << ',' << format_double(s.v) << ',' << format_double(s.theta_v)
          << ',';
      if (schema == CsvSchema::powers) {
        out << format_double(s.p_star) << ',' << format_double(s.q_star) << '\n';
      } else {
        const double current = std::hypot(s.p_star, s.q_star) / s.v;
        const double theta_i = s.theta_v - std::atan2(s.q_star, s.p_star);
        out << format_double(current) << ',' << format_double(theta_i) << '\n';
      }
    }
  }
}

std::vector<Trajectory> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void save_csv(std::span<const Trajectory> trajectories, const std::filesystem::path& path, CsvSchema schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(trajectories, out, schema);
  if (!out) throw IoError("write failed for " + path.string());
}

std::string manifest_text(std::span<const Trajectory> trajectories) {
  using text::format_double;
  std::ostringstream os;
  os << "traj_id,scenario,v0,p0,q0,samples\n";
  for (const Trajectory& traj : trajectories) {
    const OperatingPoint& op = traj.operating_point;
    os << traj.id << ',' << to_string(traj.scenario) << ',' << format_double(op.v0) << ',' << format_double(op.p0)
       << ',' << format_double(op.q0) << ',' << traj.samples.size() << '\n';
  }
  return os.str();
}

std::uint64_t manifest_hash(std::span<const Trajectory> trajectories) {
  return text::fnv1a(manifest_text(trajectories));
}

void apply_manifest(std::vector<Trajectory>& trajectories, std::istream& manifest) {
  std::map<std::string, Trajectory*, std::less<>> by_id;
  for (Trajectory& traj : trajectories) by_id[traj.id] = &traj;

  std::string line;
  std::size_t line_no = 0;
  std::set<std::string, std::less<>> seen;
  bool header = true;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, ',');
    if (header) {
      header = false;
      if (fields.size() != 6 || text::trim(fields[0]) != "traj_id") throw SchemaError("unexpected manifest header");
      continue;
    }
    if (fields.size() != 6) throw ParseError("manifest row needs 6 fields", line_no);
    const std::string_view id = text::trim(fields[0]);
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw SchemaError("manifest lists unknown trajectory '" + std::string(id) + "'");
    Trajectory& traj = *it->second;
    Scenario scenario;
    try {
      scenario = parse_scenario(text::trim(fields[1]));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
    double v0 = 0, p0 = 0, q0 = 0;
    std::uint64_t count = 0;
    if (!text::parse_double(fields[2], v0) || !text::parse_double(fields[3], p0) ||
        !text::parse_double(fields[4], q0) || !text::parse_uint(fields[5], count)) {
      throw ParseError("bad manifest number", line_no);
    }
    // phasor files rebuild p, q through trig, so allow rounding here
    const auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); };
    const OperatingPoint& op = traj.operating_point;
    if (!close(v0, op.v0) || !close(p0, op.p0) || !close(q0, op.q0) || count != traj.samples.size()) {
      throw SchemaError("manifest disagrees with data for trajectory '" + traj.id + "'");
    }
    traj.scenario = scenario;
    seen.insert(traj.id);
  }
  if (seen.size() != trajectories.size()) throw SchemaError("manifest does not cover every trajectory");
}

void save_dataset(std::span<const Trajectory> trajectories, const std::filesystem::path& dir, CsvSchema schema) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_csv(trajectories, dir / kTrajectoryFile, schema);
  std::ofstream out(dir / kManifestFile, std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest_text(trajectories);
}

std::vector<Trajectory> load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such dataset: " + path.string());
  if (!std::filesystem::is_directory(path)) return load_csv(path);
  std::vector<Trajectory> trajectories = load_csv(path / kTrajectoryFile);
  const std::filesystem::path manifest = path / kManifestFile;
  if (std::filesystem::exists(manifest)) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open " + manifest.string());
    apply_manifest(trajectories, in);
  }
  return trajectories;
}

SplitIndices split_indices(std::size_t count, std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  std::size_t nonzero = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw SplitError("split ratios must be non-negative");
    total += r;
    nonzero += r > 0.0 ? 1 : 0;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
  if (count < nonzero) {
    throw SplitError("cannot split " + std::to_string(count) + " trajectories into " + std::to_string(nonzero) +
                     " non-empty buckets");
  }

  const auto bucket = [&](double r) {
    auto size = static_cast<std::size_t>(std::floor(r * static_cast<double>(count) + 1e-9));
    if (r > 0.0 && size == 0) size = 1;
    return size;
  };
  const std::size_t n_val = bucket(ratios[1]);
  const std::size_t n_test = bucket(ratios[2]);
  if (n_val + n_test > count) throw SplitError("split ratios leave no room for training data");
  const std::size_t n_train = count - n_val - n_test;
  if (ratios[0] > 0.0 && n_train == 0) throw SplitError("split leaves the training bucket empty");

  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  auto rng = make_engine({seed, 0x73706c6974ull});
  for (std::size_t i = count; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);

  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DatasetSplit split_dataset(std::span<const Trajectory> trajectories, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  const SplitIndices idx = split_indices(trajectories.size(), ratios, seed);
  DatasetSplit out;
  for (std::size_t i : idx.train) out.train.push_back(trajectories[i]);
  for (std::size_t i : idx.val) out.val.push_back(trajectories[i]);
  for (std::size_t i : idx.test) out.test.push_back(trajectories[i]);
  return out;
}

std::size_t total_samples(std::span<const Trajectory> trajectories) {
  std::size_t n = 0;
  for (const Trajectory& traj : trajectories) n += traj.samples.size();
  return n;
}

}  // namespace neurozip
