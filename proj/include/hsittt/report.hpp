#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsittt/cube.hpp"
#include "hsittt/metrics.hpp"

namespace hsittt {

// One row of a metrics CSV: image_id,scale,rmse,mpsnr,ergas
struct MetricsRow {
  std::string image_id;
  double scale = 0.0;
  double rmse = 0.0;
  double mpsnr = 0.0;
  double ergas = 0.0;
};

// Numbers are written with 6 significant digits.
std::string format_number(double v);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& ids,
                       const std::vector<MetricsReport>& reports);
// image_id,band,psnr_db
void write_band_csv(const std::filesystem::path& path,
                    const std::vector<std::string>& ids,
                    const std::vector<MetricsReport>& reports);

// Throws ValidationError on a wrong header, malformed row, or no rows.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct ComparisonRow {
  std::string image_id;
  MetricsRow source;
  MetricsRow adapted;
  double delta_rmse = 0.0;   // adapted - source
  double delta_mpsnr = 0.0;  // adapted - source
  double delta_ergas = 0.0;  // adapted - source
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  // Per-metric means over rows; image_id is "mean".
  ComparisonRow mean;
};

// Pairs rows by image_id (in the source order). Throws ValidationError when
// the two files do not cover the same images.
Comparison compare_metrics(const std::vector<MetricsRow>& source,
                           const std::vector<MetricsRow>& adapted);

void write_comparison_csv(const std::filesystem::path& path,
                          const Comparison& comparison);
std::string comparison_markdown(const Comparison& comparison);
// Markdown table of a single metrics file plus its mean row.
std::string metrics_markdown(const std::vector<MetricsRow>& rows);

// A loss log: pretraining logs have columns step,l1,sstv,total; test-time
// logs step,phase,l1,sstv,total (one row per update).
struct LossLog {
  std::vector<std::string> columns;  // series names, e.g. {"l1","sstv","total"}
  std::vector<std::vector<double>> series;
};
LossLog read_loss_csv(const std::filesystem::path& path);

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(w * h * 3, fill) {}
};

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

// Line plot of every series against the update index, on a shared linear
// y-axis starting at zero, with light grid lines. There is no text; series
// take kPlotColorNames in column order, and the grid spacing and axis top
// are returned through the optional pointers so the caller can caption it.
inline constexpr const char* kPlotColorNames[] = {"blue", "orange", "green",
                                                  "red", "purple"};
RgbImage plot_losses(const LossLog& log, std::size_t width = 640,
                     std::size_t height = 360, double* grid_step = nullptr,
                     double* y_top = nullptr);

// Three bands spread over the range: the centers of its upper, middle and
// lower thirds (S = 8 gives 6, 4, 1; S = 31 gives 25, 15, 5).
std::array<std::size_t, 3> default_composite_bands(std::size_t bands);

// Direct band-to-channel assignment (R, G, B), value * 255 rounded, no other
// processing. Output is W x H of the cube.
RgbImage composite(const HSICube& cube, const std::array<std::size_t, 3>& rgb);

}  // namespace hsittt
