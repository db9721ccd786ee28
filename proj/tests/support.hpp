#pragma once

#include <doctest.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "neurozip/autodiff.hpp"
#include "neurozip/data.hpp"
#include "neurozip/random.hpp"

namespace nzt {

/// Scratch directory, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("neurozip-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline neurozip::autodiff::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                                double lo = -2.0, double hi = 2.0) {
  neurozip::autodiff::Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = neurozip::uniform(rng, lo, hi);
  return m;
}

// Hand-rolled property runner: `check(rng)` is called for `cases` independent
// seeded generators. The failing case index shows up in doctest's INFO output.
template <typename F>
void property(std::uint64_t seed, int cases, F&& check) {
  for (int i = 0; i < cases; ++i) {
    auto rng = neurozip::make_engine({seed, static_cast<std::uint64_t>(i)});
    INFO("property seed " << seed << " case " << i);
    check(rng);
  }
}

/// Short trajectories so generator-backed tests stay fast.
inline neurozip::GeneratorConfig small_generator(std::size_t per_scenario = 2) {
  neurozip::GeneratorConfig cfg;
  cfg.counts = {per_scenario, per_scenario, per_scenario};
  cfg.duration = 3.0;
  cfg.fault_start = 0.5;
  return cfg;
}

}  // namespace nzt
