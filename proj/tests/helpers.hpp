#pragma once

#include "zest/numerics/param.hpp"
#include "zest/numerics/rng.hpp"

#include <filesystem>
#include <string>

namespace zest::test {

template <typename T>
num::Tensor<T> random_tensor(num::Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  num::Tensor<T> t(rows, cols);
  for (T& v : t.values()) v = static_cast<T>(rng.normal(0.0, scale));
  return t;
}

template <typename T>
void randomize(num::Parameter<T>& p, num::Rng& rng, double scale = 1.0) {
  for (T& v : p.value.values()) v = static_cast<T>(rng.normal(0.0, scale));
}

/// Fresh scratch directory under the system temp dir, removed on exit.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / ("zest-test-" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace zest::test
