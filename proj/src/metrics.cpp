#include "hsittt/metrics.hpp"

#include <cmath>
#include <string>

namespace hsittt {

namespace {

void require_same_shape(const HSICube& a, const HSICube& b) {
  if (!a.volume().same_shape(b.volume())) {
    throw ValidationError(
        "shape mismatch: " + std::to_string(a.bands()) + "x" +
        std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
        std::to_string(b.bands()) + "x" + std::to_string(b.height()) + "x" +
        std::to_string(b.width()));
  }
}

double mean_squared_error(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace

double rmse(const HSICube& pred, const HSICube& ref) {
  require_same_shape(pred, ref);
  return std::sqrt(
      mean_squared_error(pred.volume().data, ref.volume().data));
}

double psnr_band(std::span<const float> pred, std::span<const float> ref) {
  if (pred.size() != ref.size() || pred.empty()) {
    throw ValidationError("psnr_band: shape mismatch");
  }
  const double mse = mean_squared_error(pred, ref);
  if (mse <= kMseFloor) return kPsnrCap;
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / mse);
}

double mpsnr(const HSICube& pred, const HSICube& ref) {
  require_same_shape(pred, ref);
  double sum = 0.0;
  for (std::size_t s = 0; s < pred.bands(); ++s) {
    sum += psnr_band(pred.plane(s), ref.plane(s));
  }
  return sum / static_cast<double>(pred.bands());
}

double ergas(const HSICube& pred, const HSICube& ref,
             const ScaleFactor& factor) {
  require_same_shape(pred, ref);
  double acc = 0.0;
  for (std::size_t s = 0; s < pred.bands(); ++s) {
    const auto r = ref.plane(s);
    double mean = 0.0;
    for (float v : r) mean += v;
    mean /= static_cast<double>(r.size());
    if (mean == 0.0) {
      throw ValidationError("ergas: reference band " + std::to_string(s) +
                            " has zero mean");
    }
    const double band_rmse = std::sqrt(mean_squared_error(pred.plane(s), r));
    acc += (band_rmse / mean) * (band_rmse / mean);
  }
  return 100.0 / factor.value() *
         std::sqrt(acc / static_cast<double>(pred.bands()));
}

MetricsReport evaluate_metrics(const HSICube& pred, const HSICube& ref,
                               const ScaleFactor& factor) {
  require_same_shape(pred, ref);
  MetricsReport report;
  report.scale = factor;
  report.rmse = rmse(pred, ref);
  report.psnr_per_band.reserve(pred.bands());
  double sum = 0.0;
  for (std::size_t s = 0; s < pred.bands(); ++s) {
    report.psnr_per_band.push_back(psnr_band(pred.plane(s), ref.plane(s)));
    sum += report.psnr_per_band.back();
  }
  report.mpsnr = sum / static_cast<double>(pred.bands());
  report.ergas = ergas(pred, ref, factor);
  return report;
}

}  // namespace hsittt
