#include "hsittt/augment.hpp"

#include <cmath>
#include <string>

namespace hsittt {

MixingMatrix::MixingMatrix(std::size_t bands, std::vector<double> entries)
    : bands_(bands), entries_(std::move(entries)) {
  if (bands_ == 0 || entries_.size() != bands_ * bands_) {
    throw ValidationError("mixing matrix must be S x S with S >= 1");
  }
  for (std::size_t r = 0; r < bands_; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < bands_; ++c) {
      const double v = entries_[r * bands_ + c];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("mixing matrix entry outside [0, 1]");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError("mixing matrix row " + std::to_string(r) +
                            " does not sum to 1");
    }
  }
}

MixingMatrix sample_mixing_matrix(std::size_t bands, Rng& rng) {
  if (bands == 0) throw ValidationError("mixing matrix needs S >= 1");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> entries(bands * bands);
  for (std::size_t r = 0; r < bands; ++r) {
    double sum = 0.0;
    while (sum == 0.0) {
      sum = 0.0;
      for (std::size_t c = 0; c < bands; ++c) {
        entries[r * bands + c] = uniform(rng);
        sum += entries[r * bands + c];
      }
    }
    for (std::size_t c = 0; c < bands; ++c) entries[r * bands + c] /= sum;
  }
  return MixingMatrix(bands, std::move(entries));
}

template <typename T>
Volume<T> spectral_mixup(const Volume<T>& cube, const MixingMatrix& mixing,
                         double lambda) {
  if (mixing.bands() != cube.bands) {
    throw ValidationError("mixing matrix is " + std::to_string(mixing.bands()) +
                          "x" + std::to_string(mixing.bands()) +
                          " but cube has " + std::to_string(cube.bands) +
                          " bands");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("mixup lambda must be in [0, 1]");
  }
  const std::size_t bands = cube.bands;
  const std::size_t plane = cube.plane_size();
  Volume<T> out(bands, cube.height, cube.width);
  std::vector<double> mixed(plane);
  for (std::size_t s = 0; s < bands; ++s) {
    std::fill(mixed.begin(), mixed.end(), 0.0);
    for (std::size_t k = 0; k < bands; ++k) {
      const double b = mixing(s, k);
      const auto src = cube.plane(k);
      for (std::size_t p = 0; p < plane; ++p) {
        mixed[p] += b * static_cast<double>(src[p]);
      }
    }
    const auto src = cube.plane(s);
    auto dst = out.plane(s);
    for (std::size_t p = 0; p < plane; ++p) {
      dst[p] = static_cast<T>(lambda * static_cast<double>(src[p]) +
                              (1.0 - lambda) * mixed[p]);
    }
  }
  return out;
}

HSICube spectral_mixup(const HSICube& cube, const MixingMatrix& mixing,
                       double lambda) {
  // Convex combinations stay in range up to rounding; clamp absorbs the ulp.
  return HSICube::create(spectral_mixup(cube.volume(), mixing, lambda),
                         cube.wavelengths_nm(), RangePolicy::kClamp);
}

template <typename T>
std::pair<Volume<T>, Volume<T>> make_augmented_pair(const Volume<T>& hr,
                                                    const MixingMatrix& mixing,
                                                    double lambda,
                                                    const ScaleFactor& factor) {
  Volume<T> hr_aug = spectral_mixup(hr, mixing, lambda);
  Volume<T> lr = downsample(hr_aug, factor);
  return {std::move(lr), std::move(hr_aug)};
}

template Volume<float> spectral_mixup(const Volume<float>&,
                                      const MixingMatrix&, double);
template Volume<double> spectral_mixup(const Volume<double>&,
                                       const MixingMatrix&, double);
template std::pair<Volume<float>, Volume<float>> make_augmented_pair(
    const Volume<float>&, const MixingMatrix&, double, const ScaleFactor&);
template std::pair<Volume<double>, Volume<double>> make_augmented_pair(
    const Volume<double>&, const MixingMatrix&, double, const ScaleFactor&);

}  // namespace hsittt
