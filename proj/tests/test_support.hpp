#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "kiln/kiln.hpp"

namespace kiln::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("kiln-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  fs::path path_;
};

/// A small, fast valid spec writing into `out`.
inline RunSpec small_spec(const fs::path& out, std::string name = "unit") {
  RunSpec s;
  s.name = std::move(name);
  s.platform = PlatformKind::SimulatedCloud;
  s.compute = {2, 1, 3};
  s.reliability = {2, true};
  s.payload.n_points = 8;
  s.payload.steps = 40;
  s.payload.bins = 10;
  s.payload.convergence = {1e-9, 3};
  s.output_location = out;
  s.curate = false;
  s.master_seed = 42;
  return s;
}

inline Json small_spec_json(const fs::path& out) { return to_json(small_spec(out)); }

}  // namespace kiln::testing
