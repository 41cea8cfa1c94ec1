#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hsittt/errors.hpp"

namespace hsittt {

// Dense S x H x W array, band-major then row-major:
//   data[(s * height + y) * width + x]
// Each band is one contiguous H x W plane so the band-shared model can
// stream planes independently.
template <typename T>
struct Volume {
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  Volume() = default;
  Volume(std::size_t s, std::size_t h, std::size_t w, T fill = T(0))
      : bands(s), height(h), width(w), data(s * h * w, fill) {}

  std::size_t plane_size() const { return height * width; }
  std::size_t size() const { return data.size(); }

  T& at(std::size_t s, std::size_t y, std::size_t x) {
    return data[(s * height + y) * width + x];
  }
  const T& at(std::size_t s, std::size_t y, std::size_t x) const {
    return data[(s * height + y) * width + x];
  }

  std::span<T> plane(std::size_t s) {
    return {data.data() + s * plane_size(), plane_size()};
  }
  std::span<const T> plane(std::size_t s) const {
    return {data.data() + s * plane_size(), plane_size()};
  }

  bool same_shape(const Volume& o) const {
    return bands == o.bands && height == o.height && width == o.width;
  }

  template <typename U>
  Volume<U> cast() const {
    Volume<U> out;
    out.bands = bands;
    out.height = height;
    out.width = width;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Volume&) const = default;
};

// Single-channel H x W image (one band).
template <typename T>
using Image = Volume<T>;

// Ratio of HR side length to LR side length.
class ScaleFactor {
 public:
  explicit ScaleFactor(double value = 1.0);

  double value() const { return value_; }
  bool is_integer() const;

  // Output side length when downsampling a side of length n.
  std::size_t downsampled(std::size_t n) const;
  // Output side length when upsampling a side of length n: round(n * value).
  std::size_t upsampled(std::size_t n) const;

  bool operator==(const ScaleFactor&) const = default;

 private:
  double value_;
};

enum class RangePolicy { kReject, kClamp };

// Hyperspectral cube with values in [0, 1] and optional wavelength metadata.
// Band indices are zero-based; band s here is band s + 1 in one-based
// notation.
class HSICube {
 public:
  HSICube() = default;

  // Throws ValidationError when data is non-finite, out of range (unless
  // policy is kClamp), or wavelengths are inconsistent.
  static HSICube create(Volume<float> data,
                        std::optional<std::vector<double>> wavelengths_nm = {},
                        RangePolicy policy = RangePolicy::kReject);

  // Like create() but clamps to [0, 1]; non-finite values are still an error.
  // Used when materializing model outputs.
  static HSICube from_prediction(const Volume<float>& data);
  static HSICube from_prediction(const Volume<double>& data);

  std::size_t height() const { return data_.height; }
  std::size_t width() const { return data_.width; }
  std::size_t bands() const { return data_.bands; }

  const Volume<float>& volume() const { return data_; }
  std::span<const float> plane(std::size_t s) const { return data_.plane(s); }
  const std::optional<std::vector<double>>& wavelengths_nm() const {
    return wavelengths_;
  }

  bool operator==(const HSICube&) const = default;

 private:
  Volume<float> data_;
  std::optional<std::vector<double>> wavelengths_;
};

// Cube container: <dir>/header.json + <dir>/data.f32 (little-endian binary32,
// band-major). Save/load round-trips bit-exactly.
HSICube load_cube(const std::filesystem::path& dir,
                  RangePolicy policy = RangePolicy::kReject);
void save_cube(const HSICube& cube, const std::filesystem::path& dir);

// H x W copy of band s. Throws ValidationError when s >= bands.
Image<float> band(const HSICube& cube, std::size_t s);

// Reassembles single-band images into a cube (inverse of band()).
HSICube stack_bands(const std::vector<Image<float>>& planes,
                    std::optional<std::vector<double>> wavelengths_nm = {});

// Degradation operator shared by pretraining, evaluation and test-time
// training: separable Catmull-Rom bicubic (a = -0.5) whose kernel is widened
// by the factor when shrinking (antialiasing), with edge-replicate borders.
// Output is floor(H / f) x floor(W / f). Factor 1 is the identity.
template <typename T>
Volume<T> downsample(const Volume<T>& in, const ScaleFactor& factor);

HSICube downsample(const HSICube& cube, const ScaleFactor& factor);

// Plain bicubic resize to an arbitrary size; the kernel is widened only
// when shrinking. Used for the bicubic baseline.
template <typename T>
Volume<T> resize_bicubic(const Volume<T>& in, std::size_t out_height,
                         std::size_t out_width);

HSICube upsample_bicubic(const HSICube& cube, const ScaleFactor& factor);

// Catmull-Rom cubic kernel with a = -0.5.
double cubic_kernel(double x);

}  // namespace hsittt
