#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "hsittt/cube.hpp"

namespace testing {

template <typename T = float>
hsittt::Volume<T> random_volume(std::size_t s, std::size_t h, std::size_t w,
                                std::uint64_t seed, double lo = 0.0,
                                double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  hsittt::Volume<T> v(s, h, w);
  for (T& x : v.data) x = static_cast<T>(u(rng));
  return v;
}

inline hsittt::HSICube random_cube(std::size_t s, std::size_t h,
                                   std::size_t w, std::uint64_t seed) {
  return hsittt::HSICube::create(random_volume<float>(s, h, w, seed));
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("hsittt_test_" + std::to_string(rd()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
