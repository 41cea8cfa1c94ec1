#pragma once

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "hsittt/cube.hpp"

namespace hsittt {

using Rng = std::mt19937_64;

// S x S row-stochastic matrix with entries in [0, 1], row-major.
class MixingMatrix {
 public:
  // Throws ValidationError unless entries is bands*bands long, nonnegative,
  // and every row sums to 1 within 1e-6.
  MixingMatrix(std::size_t bands, std::vector<double> entries);

  std::size_t bands() const { return bands_; }
  double operator()(std::size_t row, std::size_t col) const {
    return entries_[row * bands_ + col];
  }
  const std::vector<double>& entries() const { return entries_; }

  bool operator==(const MixingMatrix&) const = default;

 private:
  std::size_t bands_;
  std::vector<double> entries_;
};

// Entries drawn uniformly from [0, 1), then each row divided by its sum. A
// row that sums to zero is redrawn.
MixingMatrix sample_mixing_matrix(std::size_t bands, Rng& rng);

// Spectral Mixup: out(., p) = lambda * X(., p) + (1 - lambda) * B X(., p)
// for every pixel p. The default lambda is 0.5; it is unrelated to the EMA
// smoothing factor alpha even though both are sometimes written alpha.
template <typename T>
Volume<T> spectral_mixup(const Volume<T>& cube, const MixingMatrix& mixing,
                         double lambda);

HSICube spectral_mixup(const HSICube& cube, const MixingMatrix& mixing,
                       double lambda);

// (downsample(hr_aug, factor), hr_aug) with hr_aug = spectral_mixup(hr, ...).
template <typename T>
std::pair<Volume<T>, Volume<T>> make_augmented_pair(const Volume<T>& hr,
                                                    const MixingMatrix& mixing,
                                                    double lambda,
                                                    const ScaleFactor& factor);

}  // namespace hsittt
