#pragma once

#include "fbgan/tensor.hpp"
#include "fbgan/volume.hpp"

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

namespace fbgan::test {

/// Fresh, empty scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("fbgan_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

template <typename Scalar>
Tensor<Scalar> uniform_tensor(Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<Scalar> t(s);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(u(rng));
  return t;
}

inline Volume uniform_volume(Index nz, Index ny, Index nx, std::mt19937_64& rng, double lo,
                             double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Volume v(nz, ny, nx);
  for (Index i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(u(rng));
  return v;
}

}  // namespace fbgan::test
