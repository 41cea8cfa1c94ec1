#include "hsittt/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hsittt {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

double parse_number(const std::string& s, const std::filesystem::path& path,
                    std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ValidationError(path.string() + ":" + std::to_string(line) +
                          ": not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& ids,
                       const std::vector<MetricsReport>& reports) {
  if (ids.size() != reports.size()) {
    throw ValidationError("write_metrics_csv: ids and reports differ in length");
  }
  auto out = open_out(path);
  out << "image_id,scale,rmse,mpsnr,ergas\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& r = reports[i];
    out << ids[i] << ',' << format_number(r.scale.value()) << ','
        << format_number(r.rmse) << ',' << format_number(r.mpsnr) << ','
        << format_number(r.ergas) << '\n';
  }
  close_out(out, path);
}

void write_band_csv(const std::filesystem::path& path,
                    const std::vector<std::string>& ids,
                    const std::vector<MetricsReport>& reports) {
  if (ids.size() != reports.size()) {
    throw ValidationError("write_band_csv: ids and reports differ in length");
  }
  auto out = open_out(path);
  out << "image_id,band,psnr_db\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& bands = reports[i].psnr_per_band;
    for (std::size_t s = 0; s < bands.size(); ++s) {
      out << ids[i] << ',' << s << ',' << format_number(bands[s]) << '\n';
    }
  }
  close_out(out, path);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ValidationError(path.string() + ": empty CSV");
  if (lines[0] != "image_id,scale,rmse,mpsnr,ergas") {
    throw ValidationError(path.string() + ": unexpected header '" + lines[0] +
                          "'");
  }
  if (lines.size() == 1) throw ValidationError(path.string() + ": no rows");
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (cells.size() != 5 || cells[0].empty()) {
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) +
                            ": expected 5 fields");
    }
    MetricsRow row;
    row.image_id = cells[0];
    row.scale = parse_number(cells[1], path, i + 1);
    row.rmse = parse_number(cells[2], path, i + 1);
    row.mpsnr = parse_number(cells[3], path, i + 1);
    row.ergas = parse_number(cells[4], path, i + 1);
    rows.push_back(row);
  }
  return rows;
}

Comparison compare_metrics(const std::vector<MetricsRow>& source,
                           const std::vector<MetricsRow>& adapted) {
  if (source.empty()) throw ValidationError("compare_metrics: no rows");
  std::map<std::string, const MetricsRow*> by_id;
  for (const auto& r : adapted) {
    if (!by_id.emplace(r.image_id, &r).second) {
      throw ValidationError("duplicate image_id " + r.image_id);
    }
  }
  if (by_id.size() != source.size()) {
    throw ValidationError("metrics files cover different images");
  }
  Comparison c;
  c.mean.image_id = "mean";
  for (const auto& s : source) {
    auto it = by_id.find(s.image_id);
    if (it == by_id.end()) {
      throw ValidationError("image " + s.image_id + " missing from second file");
    }
    ComparisonRow row;
    row.image_id = s.image_id;
    row.source = s;
    row.adapted = *it->second;
    row.delta_rmse = row.adapted.rmse - s.rmse;
    row.delta_mpsnr = row.adapted.mpsnr - s.mpsnr;
    row.delta_ergas = row.adapted.ergas - s.ergas;
    c.rows.push_back(row);
  }
  const double n = static_cast<double>(c.rows.size());
  auto mean_of = [&](auto get) {
    double sum = 0.0;
    for (const auto& r : c.rows) sum += get(r);
    return sum / n;
  };
  c.mean.source.image_id = c.mean.adapted.image_id = "mean";
  c.mean.source.scale = c.rows[0].source.scale;
  c.mean.adapted.scale = c.rows[0].adapted.scale;
  c.mean.source.rmse = mean_of([](const ComparisonRow& r) { return r.source.rmse; });
  c.mean.source.mpsnr = mean_of([](const ComparisonRow& r) { return r.source.mpsnr; });
  c.mean.source.ergas = mean_of([](const ComparisonRow& r) { return r.source.ergas; });
  c.mean.adapted.rmse = mean_of([](const ComparisonRow& r) { return r.adapted.rmse; });
  c.mean.adapted.mpsnr = mean_of([](const ComparisonRow& r) { return r.adapted.mpsnr; });
  c.mean.adapted.ergas = mean_of([](const ComparisonRow& r) { return r.adapted.ergas; });
  c.mean.delta_rmse = c.mean.adapted.rmse - c.mean.source.rmse;
  c.mean.delta_mpsnr = c.mean.adapted.mpsnr - c.mean.source.mpsnr;
  c.mean.delta_ergas = c.mean.adapted.ergas - c.mean.source.ergas;
  return c;
}

void write_comparison_csv(const std::filesystem::path& path,
                          const Comparison& comparison) {
  auto out = open_out(path);
  out << "image_id,rmse_source,rmse_adapted,rmse_delta,"
         "mpsnr_source,mpsnr_adapted,mpsnr_delta,"
         "ergas_source,ergas_adapted,ergas_delta\n";
  auto row = [&](const ComparisonRow& r) {
    out << r.image_id << ',' << format_number(r.source.rmse) << ','
        << format_number(r.adapted.rmse) << ',' << format_number(r.delta_rmse)
        << ',' << format_number(r.source.mpsnr) << ','
        << format_number(r.adapted.mpsnr) << ','
        << format_number(r.delta_mpsnr) << ','
        << format_number(r.source.ergas) << ','
        << format_number(r.adapted.ergas) << ','
        << format_number(r.delta_ergas) << '\n';
  };
  for (const auto& r : comparison.rows) row(r);
  row(comparison.mean);
  close_out(out, path);
}

std::string comparison_markdown(const Comparison& comparison) {
  std::ostringstream md;
  md << "| image | RMSE src | RMSE adapted | dRMSE | MPSNR src | MPSNR adapted "
        "| dMPSNR | ERGAS src | ERGAS adapted | dERGAS |\n"
     << "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  auto row = [&](const ComparisonRow& r, bool bold) {
    const std::string b = bold ? "**" : "";
    md << "| " << b << r.image_id << b << " | " << format_number(r.source.rmse)
       << " | " << format_number(r.adapted.rmse) << " | "
       << format_number(r.delta_rmse) << " | " << format_number(r.source.mpsnr)
       << " | " << format_number(r.adapted.mpsnr) << " | "
       << format_number(r.delta_mpsnr) << " | "
       << format_number(r.source.ergas) << " | "
       << format_number(r.adapted.ergas) << " | "
       << format_number(r.delta_ergas) << " |\n";
  };
  for (const auto& r : comparison.rows) row(r, false);
  row(comparison.mean, true);
  return md.str();
}

std::string metrics_markdown(const std::vector<MetricsRow>& rows) {
  std::ostringstream md;
  md << "| image | scale | RMSE | MPSNR | ERGAS |\n|---|---:|---:|---:|---:|\n";
  double rmse = 0, mpsnr = 0, ergas = 0;
  for (const auto& r : rows) {
    md << "| " << r.image_id << " | " << format_number(r.scale) << " | "
       << format_number(r.rmse) << " | " << format_number(r.mpsnr) << " | "
       << format_number(r.ergas) << " |\n";
    rmse += r.rmse;
    mpsnr += r.mpsnr;
    ergas += r.ergas;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    md << "| **mean** | | " << format_number(rmse / n) << " | "
       << format_number(mpsnr / n) << " | " << format_number(ergas / n)
       << " |\n";
  }
  return md.str();
}

LossLog read_loss_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ValidationError(path.string() + ": empty CSV");
  const auto header = split_csv(lines[0]);
  if (header.empty() || header[0] != "step") {
    throw ValidationError(path.string() + ": loss log must start with 'step'");
  }
  // Every column after step except the phase label is a series.
  LossLog log;
  std::vector<std::size_t> cols;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "phase") continue;
    cols.push_back(c);
    log.columns.push_back(header[c]);
  }
  if (cols.empty()) throw ValidationError(path.string() + ": no loss columns");
  log.series.resize(cols.size());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (cells.size() != header.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) +
                            ": expected " + std::to_string(header.size()) +
                            " fields");
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      log.series[k].push_back(parse_number(cells[cols[k]], path, i + 1));
    }
  }
  if (log.series[0].empty()) throw ValidationError(path.string() + ": no rows");
  return log;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.width == 0 || image.height == 0 ||
      image.pixels.size() != image.width * image.height * 3) {
    throw ValidationError("write_png: bad image dimensions");
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() +
                                             y * image.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("failed writing " + path.string());
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out(img.width, img.height, 0);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string());
  }
  return out;
}

namespace {

using Rgb = std::array<std::uint8_t, 3>;

void put(RgbImage& img, long x, long y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) ||
      y >= static_cast<long>(img.height)) {
    return;
  }
  auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width +
                         static_cast<std::size_t>(x)) * 3];
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

// Bresenham, drawn 2 px thick.
void line(RgbImage& img, long x0, long y0, long x1, long y1, const Rgb& c) {
  const long dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const long dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    put(img, x0, y0, c);
    put(img, x0, y0 + 1, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

RgbImage plot_losses(const LossLog& log, std::size_t width,
                     std::size_t height, double* grid_step, double* y_top) {
  if (width < 64 || height < 64) throw ValidationError("plot too small");
  if (log.series.empty() || log.series[0].empty()) {
    throw ValidationError("plot_losses: empty log");
  }
  static const Rgb kColors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                {214, 39, 40},  {148, 103, 189}};
  const Rgb axis{0, 0, 0}, grid{225, 225, 225};
  RgbImage img(width, height);
  const long left = 40, right = static_cast<long>(width) - 12;
  const long top = 12, bottom = static_cast<long>(height) - 30;

  double ymax = 0.0;
  std::size_t n = 0;
  for (const auto& s : log.series) {
    n = std::max(n, s.size());
    for (double v : s) {
      if (std::isfinite(v)) ymax = std::max(ymax, v);
    }
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  const double step = nice_step(ymax);
  ymax = std::ceil(ymax / step) * step;
  if (grid_step) *grid_step = step;
  if (y_top) *y_top = ymax;

  auto px = [&](std::size_t i) {
    const double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.5;
    return left + std::lround(t * (right - left));
  };
  auto py = [&](double v) {
    return bottom - std::lround(std::clamp(v / ymax, 0.0, 1.0) * (bottom - top));
  };

  for (double v = step; v <= ymax + 1e-12 * ymax; v += step) {
    line(img, left, py(v), right, py(v), grid);
    line(img, left - 5, py(v), left, py(v), axis);
  }
  line(img, left, top, left, bottom, axis);
  line(img, left, bottom, right, bottom, axis);

  for (std::size_t k = 0; k < log.series.size(); ++k) {
    const auto& s = log.series[k];
    const Rgb& c = kColors[k % std::size(kColors)];
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!std::isfinite(s[i - 1]) || !std::isfinite(s[i])) continue;
      line(img, px(i - 1), py(s[i - 1]), px(i), py(s[i]), c);
    }
    // Legend swatch under the x-axis, one per series in column order.
    const long sx = left + 10 + static_cast<long>(k) * 30;
    for (long dy = 0; dy < 8; dy += 2) {
      line(img, sx, bottom + 12 + dy, sx + 20, bottom + 12 + dy, c);
    }
  }
  return img;
}

std::array<std::size_t, 3> default_composite_bands(std::size_t bands) {
  if (bands == 0) throw ValidationError("cube has no bands");
  // Centers of three equal thirds of the band range, highest as red.
  auto at = [&](std::size_t k) { return (2 * k + 1) * bands / 6; };
  return {at(2), at(1), at(0)};
}

RgbImage composite(const HSICube& cube, const std::array<std::size_t, 3>& rgb) {
  for (std::size_t b : rgb) {
    if (b >= cube.bands()) {
      throw ValidationError("composite band " + std::to_string(b) +
                            " out of range for " +
                            std::to_string(cube.bands()) + " bands");
    }
  }
  RgbImage img(cube.width(), cube.height(), 0);
  const std::size_t n = cube.width() * cube.height();
  for (std::size_t c = 0; c < 3; ++c) {
    const auto plane = cube.plane(rgb[c]);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::clamp(static_cast<double>(plane[i]), 0.0, 1.0);
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

}  // namespace hsittt
