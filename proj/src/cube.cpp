#include "hsittt/cube.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace hsittt {

namespace fs = std::filesystem;
using nlohmann::json;

ScaleFactor::ScaleFactor(double value) : value_(value) {
  if (!std::isfinite(value) || value < 1.0) {
    std::ostringstream msg;
    msg << "scale factor must be a finite value >= 1, got " << value;
    throw ValidationError(msg.str());
  }
}

bool ScaleFactor::is_integer() const { return value_ == std::floor(value_); }

std::size_t ScaleFactor::downsampled(std::size_t n) const {
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(n) / value_ + 1e-9));
}

std::size_t ScaleFactor::upsampled(std::size_t n) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * value_));
}

// ---------------------------------------------------------------------------
// HSICube

namespace {

void check_wavelengths(const std::optional<std::vector<double>>& wl,
                       std::size_t bands) {
  if (!wl) return;
  if (wl->size() != bands) {
    throw ValidationError("wavelengths_nm has " + std::to_string(wl->size()) +
                          " entries but cube has " + std::to_string(bands) +
                          " bands");
  }
  for (std::size_t i = 0; i < wl->size(); ++i) {
    if (!std::isfinite((*wl)[i])) {
      throw ValidationError("wavelengths_nm[" + std::to_string(i) +
                            "] is not finite");
    }
    if (i > 0 && !((*wl)[i] > (*wl)[i - 1])) {
      throw ValidationError("wavelengths_nm must be strictly increasing (index " +
                            std::to_string(i) + ")");
    }
  }
}

}  // namespace

HSICube HSICube::create(Volume<float> data,
                        std::optional<std::vector<double>> wavelengths_nm,
                        RangePolicy policy) {
  if (data.bands == 0 || data.height == 0 || data.width == 0) {
    throw ValidationError("cube dimensions must be positive");
  }
  if (data.data.size() != data.bands * data.height * data.width) {
    throw ValidationError("cube payload size does not match its dimensions");
  }
  for (std::size_t i = 0; i < data.data.size(); ++i) {
    float& v = data.data[i];
    if (!std::isfinite(v)) {
      throw ValidationError("non-finite value at flat index " +
                            std::to_string(i));
    }
    if (v < 0.0f || v > 1.0f) {
      if (policy == RangePolicy::kClamp) {
        v = std::clamp(v, 0.0f, 1.0f);
      } else {
        std::ostringstream msg;
        msg << "value " << v << " outside [0, 1] at flat index " << i;
        throw ValidationError(msg.str());
      }
    }
  }
  check_wavelengths(wavelengths_nm, data.bands);
  HSICube cube;
  cube.data_ = std::move(data);
  cube.wavelengths_ = std::move(wavelengths_nm);
  return cube;
}

HSICube HSICube::from_prediction(const Volume<float>& data) {
  return create(data, std::nullopt, RangePolicy::kClamp);
}

HSICube HSICube::from_prediction(const Volume<double>& data) {
  return create(data.cast<float>(), std::nullopt, RangePolicy::kClamp);
}

// ---------------------------------------------------------------------------
// Container I/O

namespace {

std::size_t header_dim(const json& h, const char* key) {
  if (!h.contains(key) || !h[key].is_number_integer()) {
    throw ValidationError(std::string("header.json: missing integer key '") +
                          key + "'");
  }
  const auto v = h[key].get<std::int64_t>();
  if (v <= 0) {
    throw ValidationError(std::string("header.json: '") + key +
                          "' must be positive");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

HSICube load_cube(const fs::path& dir, RangePolicy policy) {
  const fs::path header_path = dir / "header.json";
  const fs::path data_path = dir / "data.f32";
  if (!fs::exists(header_path)) {
    throw IoError("missing " + header_path.string());
  }
  if (!fs::exists(data_path)) {
    throw IoError("missing " + data_path.string());
  }

  json h;
  try {
    h = json::parse(detail::read_file(header_path));
  } catch (const json::parse_error& e) {
    throw ValidationError("header.json: " + std::string(e.what()));
  }
  if (!h.is_object()) throw ValidationError("header.json: not an object");
  for (const auto& [key, _] : h.items()) {
    static const char* kKnown[] = {"height", "width", "bands", "dtype",
                                   "layout", "wavelengths_nm"};
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) {
          return key == k;
        }) == std::end(kKnown)) {
      throw ValidationError("header.json: unknown key '" + key + "'");
    }
  }
  const std::size_t height = header_dim(h, "height");
  const std::size_t width = header_dim(h, "width");
  const std::size_t bands = header_dim(h, "bands");
  if (h.value("dtype", std::string()) != "f32le") {
    throw ValidationError("header.json: dtype must be \"f32le\"");
  }
  if (h.value("layout", std::string()) != "band-major") {
    throw ValidationError("header.json: layout must be \"band-major\"");
  }
  std::optional<std::vector<double>> wavelengths;
  if (h.contains("wavelengths_nm")) {
    if (!h["wavelengths_nm"].is_array()) {
      throw ValidationError("header.json: wavelengths_nm must be an array");
    }
    std::vector<double> wl;
    for (const auto& v : h["wavelengths_nm"]) {
      if (!v.is_number()) {
        throw ValidationError("header.json: wavelengths_nm must hold numbers");
      }
      wl.push_back(v.get<double>());
    }
    wavelengths = std::move(wl);
  }

  const std::string payload = detail::read_file(data_path);
  const std::size_t expected = bands * height * width;
  if (payload.size() != expected * sizeof(float)) {
    std::ostringstream msg;
    msg << "data.f32 holds " << payload.size() << " bytes ("
        << payload.size() / sizeof(float) << " floats) but header requires "
        << expected << " floats";
    throw ValidationError(msg.str());
  }
  Volume<float> vol(bands, height, width);
  vol.data = detail::decode_f32le(payload);
  return HSICube::create(std::move(vol), std::move(wavelengths), policy);
}

void save_cube(const HSICube& cube, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json h;
  h["height"] = cube.height();
  h["width"] = cube.width();
  h["bands"] = cube.bands();
  h["dtype"] = "f32le";
  h["layout"] = "band-major";
  if (cube.wavelengths_nm()) h["wavelengths_nm"] = *cube.wavelengths_nm();

  detail::write_file(dir / "header.json", h.dump(2) + "\n");
  detail::write_file(dir / "data.f32", detail::encode_f32le(cube.volume().data));
}

// ---------------------------------------------------------------------------
// Band access

Image<float> band(const HSICube& cube, std::size_t s) {
  if (s >= cube.bands()) {
    throw ValidationError("band index " + std::to_string(s) +
                          " out of range for " + std::to_string(cube.bands()) +
                          " bands");
  }
  Image<float> img(1, cube.height(), cube.width());
  const auto p = cube.plane(s);
  std::copy(p.begin(), p.end(), img.data.begin());
  return img;
}

HSICube stack_bands(const std::vector<Image<float>>& planes,
                    std::optional<std::vector<double>> wavelengths_nm) {
  if (planes.empty()) throw ValidationError("cannot stack zero bands");
  const std::size_t h = planes.front().height;
  const std::size_t w = planes.front().width;
  Volume<float> vol(planes.size(), h, w);
  for (std::size_t s = 0; s < planes.size(); ++s) {
    if (planes[s].bands != 1 || planes[s].height != h || planes[s].width != w) {
      throw ValidationError("band " + std::to_string(s) +
                            " has a different shape");
    }
    std::copy(planes[s].data.begin(), planes[s].data.end(),
              vol.plane(s).begin());
  }
  return HSICube::create(std::move(vol), std::move(wavelengths_nm));
}

// ---------------------------------------------------------------------------
// Resampling

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

namespace {

struct Tap {
  std::size_t index;
  double weight;
};

// Normalized taps for each output sample along one axis. `ratio` is the
// input/output sample spacing; the kernel is stretched by it when > 1.
std::vector<std::vector<Tap>> axis_taps(std::size_t n_in, std::size_t n_out,
                                        double ratio) {
  const double stretch = std::max(ratio, 1.0);
  const double support = 2.0 * stretch;
  std::vector<std::vector<Tap>> taps(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    const auto lo = static_cast<long>(std::floor(center - support));
    const auto hi = static_cast<long>(std::ceil(center + support));
    double sum = 0.0;
    auto& row = taps[i];
    for (long j = lo; j <= hi; ++j) {
      const double w = cubic_kernel((static_cast<double>(j) - center) / stretch);
      if (w == 0.0) continue;
      const long clamped =
          std::clamp<long>(j, 0, static_cast<long>(n_in) - 1);
      row.push_back({static_cast<std::size_t>(clamped), w});
      sum += w;
    }
    for (auto& t : row) t.weight /= sum;
  }
  return taps;
}

template <typename T>
Volume<T> resample(const Volume<T>& in, std::size_t out_h, std::size_t out_w,
                   double ratio_h, double ratio_w) {
  const auto taps_y = axis_taps(in.height, out_h, ratio_h);
  const auto taps_x = axis_taps(in.width, out_w, ratio_w);
  Volume<T> out(in.bands, out_h, out_w);
  std::vector<double> rows(in.height * out_w);
  for (std::size_t s = 0; s < in.bands; ++s) {
    const auto src = in.plane(s);
    for (std::size_t y = 0; y < in.height; ++y) {
      const T* line = src.data() + y * in.width;
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (const Tap& t : taps_x[x]) {
          acc += t.weight * static_cast<double>(line[t.index]);
        }
        rows[y * out_w + x] = acc;
      }
    }
    auto dst = out.plane(s);
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (const Tap& t : taps_y[y]) {
          acc += t.weight * rows[t.index * out_w + x];
        }
        dst[y * out_w + x] = static_cast<T>(acc);
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
Volume<T> downsample(const Volume<T>& in, const ScaleFactor& factor) {
  const std::size_t out_h = factor.downsampled(in.height);
  const std::size_t out_w = factor.downsampled(in.width);
  if (out_h == 0 || out_w == 0) {
    throw ValidationError("downsampling " + std::to_string(in.height) + "x" +
                          std::to_string(in.width) + " by " +
                          std::to_string(factor.value()) +
                          " gives an empty image");
  }
  if (factor.value() == 1.0) return in;
  return resample(in, out_h, out_w, factor.value(), factor.value());
}

HSICube downsample(const HSICube& cube, const ScaleFactor& factor) {
  return HSICube::create(downsample(cube.volume(), factor),
                         cube.wavelengths_nm(), RangePolicy::kClamp);
}

template <typename T>
Volume<T> resize_bicubic(const Volume<T>& in, std::size_t out_height,
                         std::size_t out_width) {
  if (out_height == 0 || out_width == 0) {
    throw ValidationError("resize target must be non-empty");
  }
  if (out_height == in.height && out_width == in.width) return in;
  return resample(in, out_height, out_width,
                  static_cast<double>(in.height) / out_height,
                  static_cast<double>(in.width) / out_width);
}

HSICube upsample_bicubic(const HSICube& cube, const ScaleFactor& factor) {
  return HSICube::create(
      resize_bicubic(cube.volume(), factor.upsampled(cube.height()),
                     factor.upsampled(cube.width())),
      cube.wavelengths_nm(), RangePolicy::kClamp);
}

template Volume<float> downsample(const Volume<float>&, const ScaleFactor&);
template Volume<double> downsample(const Volume<double>&, const ScaleFactor&);
template Volume<float> resize_bicubic(const Volume<float>&, std::size_t,
                                      std::size_t);
template Volume<double> resize_bicubic(const Volume<double>&, std::size_t,
                                       std::size_t);

}  // namespace hsittt
