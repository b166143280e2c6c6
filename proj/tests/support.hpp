#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "uqsr/image.hpp"
#include "uqsr/rng.hpp"
#include "uqsr/tensor.hpp"

namespace test_support {

inline uqsr::ImageTensor random_image(int h, int w, int c, uqsr::Rng& rng) {
  uqsr::ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

inline uqsr::Tensor random_tensor(int n, int c, int h, int w, uqsr::Rng& rng, double lo = 0.0,
                                  double hi = 1.0) {
  uqsr::Tensor t(n, c, h, w);
  for (double& v : t.v) v = lo + (hi - lo) * rng.uniform();
  return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Relative error with a floor so near-zero gradients compare sanely.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("uqsr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace test_support
