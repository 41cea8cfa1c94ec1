#pragma once

#include <span>
#include <vector>

#include "hsittt/cube.hpp"

namespace hsittt {

// PSNR is computed against a peak value of 1.0 (data lives in [0, 1]).
inline constexpr double kPsnrPeak = 1.0;
// MSE floor; identical images score 10 * log10(1 / 1e-12) = 120 dB.
inline constexpr double kMseFloor = 1e-12;
inline constexpr double kPsnrCap = 120.0;

struct MetricsReport {
  double rmse = 0.0;
  double mpsnr = 0.0;
  double ergas = 0.0;
  std::vector<double> psnr_per_band;
  ScaleFactor scale;
};

double rmse(const HSICube& pred, const HSICube& ref);

double psnr_band(std::span<const float> pred, std::span<const float> ref);

// Mean of per-band PSNR.
double mpsnr(const HSICube& pred, const HSICube& ref);

// ERGAS with the 100 / r convention, r the upscaling factor:
//   (100 / r) * sqrt( (1/S) * sum_s (rmse_s / mean_s(ref))^2 )
// Throws ValidationError naming the band when a reference band mean is zero.
double ergas(const HSICube& pred, const HSICube& ref, const ScaleFactor& factor);

MetricsReport evaluate_metrics(const HSICube& pred, const HSICube& ref,
                               const ScaleFactor& factor);

}  // namespace hsittt
