#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "streetsafe/common.hpp"
#include "streetsafe/features.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("streetsafe-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

inline fs::path sample_dir() { return fs::path(STREETSAFE_SAMPLE_DIR); }

/// Random but valid feature row.
inline streetsafe::FeatureVector random_features(streetsafe::Rng& rng) {
  streetsafe::FeatureVector v;
  v.greenery = rng.uniform();
  v.sky = rng.uniform();
  v.wall = rng.uniform();
  v.fence = rng.uniform();
  v.sidewalk = rng.uniform();
  v.wire = rng.bernoulli(0.5) ? 1 : 0;
  v.entropy = rng.uniform(0.0, 8.0);
  v.car_count = static_cast<std::int64_t>(rng.below(12));
  return v;
}

inline streetsafe::FeatureTable random_table(std::size_t n, std::uint64_t seed) {
  streetsafe::Rng rng(seed);
  streetsafe::FeatureTable t;
  for (std::size_t i = 0; i < n; ++i) t.rows.push_back({"img" + std::to_string(i), random_features(rng), {}});
  return t;
}

}  // namespace testutil
