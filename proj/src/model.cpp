#include "hsittt/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Core>

namespace hsittt {

std::string to_string(Variant v) {
  return v == Variant::kSingle ? "single" : "joint";
}

Variant parse_variant(const std::string& s) {
  if (s == "single") return Variant::kSingle;
  if (s == "joint") return Variant::kJoint;
  throw ValidationError("unknown model variant '" + s + "'");
}

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.blocks = 16;
  c.features = 64;
  c.mlp_layers = 5;
  c.mlp_hidden = 256;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.blocks = 2;
  c.features = 8;
  c.mlp_layers = 2;
  c.mlp_hidden = 32;
  return c;
}

void ModelConfig::validate() const {
  if (features == 0) throw ValidationError("model: features must be positive");
  if (mlp_layers == 0 || mlp_hidden == 0) {
    throw ValidationError("model: MLP needs at least one hidden layer");
  }
  if (variant == Variant::kJoint && bands == 0) {
    throw ValidationError("model: joint variant needs bands >= 1");
  }
}

ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  const std::size_t c = config.channels();
  const std::size_t f = config.features;
  std::size_t offset = 0;
  auto conv = [&](std::size_t in, std::size_t out) {
    Conv slot{offset, offset + out * in * 9, in, out};
    offset += out * in * 9 + out;
    return slot;
  };
  head = conv(c, f);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    Block blk;
    blk.conv1 = conv(f, f);
    blk.conv2 = conv(f, f);
    blk.scale = offset++;
    blocks.push_back(blk);
  }
  std::size_t in = config.decoder_inputs();
  for (std::size_t l = 0; l <= config.mlp_layers; ++l) {
    const std::size_t out = l < config.mlp_layers ? config.mlp_hidden : c;
    mlp.push_back({offset, offset + out * in, in, out});
    offset += out * in + out;
    in = out;
  }
  total = offset;
}

std::size_t parameter_count(const ModelConfig& config) {
  return ParamLayout(config).total;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  const ParamLayout layout(config);
  ModelParams<T> params{config, std::vector<T>(layout.total)};
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) {
      params.values[begin + i] = static_cast<T>(dist(rng));
    }
  };
  auto fill_conv = [&](const ParamLayout::Conv& c) {
    fill(c.weight, c.out * c.in * 9, c.in * 9);
    fill(c.bias, c.out, c.in * 9);
  };
  fill_conv(layout.head);
  for (const auto& blk : layout.blocks) {
    fill_conv(blk.conv1);
    fill_conv(blk.conv2);
    params.values[blk.scale] = T(1);
  }
  for (const auto& lin : layout.mlp) {
    fill(lin.weight, lin.out * lin.in, lin.in);
    fill(lin.bias, lin.out, lin.in);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Coordinates and local ensemble

double pixel_center(std::size_t i, std::size_t n) {
  return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
}

QueryGrid::QueryGrid(std::vector<std::array<double, 2>> c,
                     std::array<double, 2> cell_size)
    : coords(std::move(c)), cell(cell_size) {
  for (auto& p : coords) {
    p[0] = std::clamp(p[0], -1.0, 1.0);
    p[1] = std::clamp(p[1], -1.0, 1.0);
  }
}

QueryGrid QueryGrid::pixel_centers(std::size_t out_h, std::size_t out_w) {
  QueryGrid grid;
  grid.coords.reserve(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      grid.coords.push_back({pixel_center(y, out_h), pixel_center(x, out_w)});
    }
  }
  grid.cell = {2.0 / static_cast<double>(out_h),
               2.0 / static_cast<double>(out_w)};
  return grid;
}

std::array<EnsembleTap, 4> local_ensemble(double y, double x,
                                          std::size_t fmap_h,
                                          std::size_t fmap_w) {
  // Continuous index of the query on the code grid; code i sits at i.
  const double fy = (y + 1.0) * static_cast<double>(fmap_h) / 2.0 - 0.5;
  const double fx = (x + 1.0) * static_cast<double>(fmap_w) / 2.0 - 0.5;
  const auto y0 = static_cast<long>(std::floor(fy));
  const auto x0 = static_cast<long>(std::floor(fx));
  std::array<EnsembleTap, 4> taps;
  double sum = 0.0;
  for (int t = 0; t < 4; ++t) {
    const long ry = std::clamp<long>(y0 + t / 2, 0, static_cast<long>(fmap_h) - 1);
    const long rx = std::clamp<long>(x0 + t % 2, 0, static_cast<long>(fmap_w) - 1);
    EnsembleTap& tap = taps[t];
    tap.row = static_cast<std::size_t>(ry);
    tap.col = static_cast<std::size_t>(rx);
    tap.rel_y = y - pixel_center(tap.row, fmap_h);
    tap.rel_x = x - pixel_center(tap.col, fmap_w);
    tap.weight =
        1.0 / (tap.rel_y * tap.rel_y + tap.rel_x * tap.rel_x + kEnsembleEpsilon);
    sum += tap.weight;
  }
  for (auto& tap : taps) tap.weight /= sum;
  return taps;
}

// ---------------------------------------------------------------------------
// Network kernels

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Queries decoded per batch; bounds decoder memory on large outputs.
constexpr std::size_t kQueryChunk = 4096;

// 3x3, zero padding 1. Row (ci * 9 + ky * 3 + kx) of col holds the input
// plane ci shifted by (ky - 1, kx - 1).
template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t h, std::size_t w,
            std::vector<T>& col) {
  const std::size_t hw = h * w;
  col.assign(channels * 9 * hw, T(0));
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T* src = in + ci * hw;
    for (std::size_t k = 0; k < 9; ++k) {
      const long dy = static_cast<long>(k / 3) - 1;
      const long dx = static_cast<long>(k % 3) - 1;
      T* dst = col.data() + (ci * 9 + k) * hw;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        const std::size_t x_begin = dx < 0 ? 1 : 0;
        const std::size_t x_end = dx > 0 ? w - 1 : w;
        const T* row = src + sy * static_cast<long>(w) + dx;
        for (std::size_t x = x_begin; x < x_end; ++x) dst[y * w + x] = row[x];
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h,
                std::size_t w, T* out) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T* dst = out + ci * hw;
    for (std::size_t k = 0; k < 9; ++k) {
      const long dy = static_cast<long>(k / 3) - 1;
      const long dx = static_cast<long>(k % 3) - 1;
      const T* src = col + (ci * 9 + k) * hw;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        const std::size_t x_begin = dx < 0 ? 1 : 0;
        const std::size_t x_end = dx > 0 ? w - 1 : w;
        T* row = dst + sy * static_cast<long>(w) + dx;
        for (std::size_t x = x_begin; x < x_end; ++x) row[x] += src[y * w + x];
      }
    }
  }
}

template <typename T>
void conv_forward(const ParamLayout::Conv& slot, std::span<const T> params,
                  const T* in, std::size_t h, std::size_t w, T* out,
                  std::vector<T>& scratch) {
  const std::size_t hw = h * w;
  im2col(in, slot.in, h, w, scratch);
  Eigen::Map<const RowMat<T>> weight(params.data() + slot.weight, slot.out,
                                     slot.in * 9);
  Eigen::Map<const RowMat<T>> col(scratch.data(), slot.in * 9, hw);
  Eigen::Map<RowMat<T>> o(out, slot.out, hw);
  o.noalias() = weight * col;
  o.colwise() += Eigen::Map<const Vec<T>>(params.data() + slot.bias, slot.out);
}

// grad_in may be null; otherwise the input gradient is added to it.
template <typename T>
void conv_backward(const ParamLayout::Conv& slot, std::span<const T> params,
                   const T* in, std::size_t h, std::size_t w,
                   const T* grad_out, std::span<T> grad_params, T* grad_in,
                   std::vector<T>& scratch) {
  const std::size_t hw = h * w;
  im2col(in, slot.in, h, w, scratch);
  Eigen::Map<const RowMat<T>> col(scratch.data(), slot.in * 9, hw);
  Eigen::Map<const RowMat<T>> d_out(grad_out, slot.out, hw);
  Eigen::Map<RowMat<T>> d_weight(grad_params.data() + slot.weight, slot.out,
                                 slot.in * 9);
  d_weight.noalias() += d_out * col.transpose();
  // Plain loops: Eigen's vectorized reductions sum in an order that depends on
  // buffer alignment, which would make training irreproducible.
  for (std::size_t o = 0; o < slot.out; ++o) {
    const T* row = grad_out + o * hw;
    T acc = T(0);
    for (std::size_t i = 0; i < hw; ++i) acc += row[i];
    grad_params[slot.bias + o] += acc;
  }
  if (grad_in != nullptr) {
    Eigen::Map<const RowMat<T>> weight(params.data() + slot.weight, slot.out,
                                       slot.in * 9);
    RowMat<T> d_col = weight.transpose() * d_out;
    col2im_add(d_col.data(), slot.in, h, w, grad_in);
  }
}

template <typename T>
void require_params(const ParamLayout& layout, std::size_t n) {
  if (n != layout.total) {
    throw ValidationError("parameter vector has " + std::to_string(n) +
                          " entries, architecture needs " +
                          std::to_string(layout.total));
  }
}

// Channel-major encoder output, F x h x w.
template <typename T>
std::vector<T> run_encoder(const ModelConfig& config, const ParamLayout& layout,
                           const Volume<T>& input, std::span<const T> params,
                           ForwardCache<T>* cache) {
  if (input.bands != config.channels()) {
    throw ValidationError("encoder expects " +
                          std::to_string(config.channels()) +
                          " input channels, got " +
                          std::to_string(input.bands));
  }
  const std::size_t h = input.height;
  const std::size_t w = input.width;
  const std::size_t n = config.features * h * w;
  std::vector<T> scratch;
  std::vector<T> act(n);
  conv_forward(layout.head, params, input.data.data(), h, w, act.data(),
               scratch);
  for (const auto& blk : layout.blocks) {
    std::vector<T> relu(n);
    std::vector<T> branch(n);
    conv_forward(blk.conv1, params, act.data(), h, w, relu.data(), scratch);
    for (T& v : relu) v = std::max(v, T(0));
    conv_forward(blk.conv2, params, relu.data(), h, w, branch.data(), scratch);
    const T scale = params[blk.scale];
    if (cache != nullptr) cache->blocks.push_back({act, relu, branch});
    for (std::size_t i = 0; i < n; ++i) act[i] += scale * branch[i];
  }
  return act;
}

template <typename T>
FeatureMap<T> to_feature_map(const std::vector<T>& channel_major,
                             std::size_t dim, std::size_t h, std::size_t w) {
  FeatureMap<T> fmap{h, w, dim, std::vector<T>(dim * h * w)};
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t p = 0; p < hw; ++p) {
      fmap.data[p * dim + c] = channel_major[c * hw + p];
    }
  }
  return fmap;
}

template <typename T>
void require_finite(const std::vector<T>& v, const char* what) {
  for (const T x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite activation in ") + what);
    }
  }
}

// Decodes queries [q0, q1) and writes the blended C values of query q to
// values[c * total_queries + q].
template <typename T>
void decode_chunk(const ModelConfig& config, const ParamLayout& layout,
                  const FeatureMap<T>& fmap, const QueryGrid& grid,
                  std::size_t q0, std::size_t q1, std::span<const T> params,
                  std::vector<T>& values,
                  typename ForwardCache<T>::Chunk* cache) {
  const std::size_t dim = fmap.dim;
  const std::size_t in_dim = config.decoder_inputs();
  const std::size_t cols = 4 * (q1 - q0);
  const auto fh = static_cast<double>(fmap.height);
  const auto fw = static_cast<double>(fmap.width);

  ColMat<T> x(in_dim, cols);
  std::vector<T> weight(cols);
  std::vector<std::uint32_t> pixel(cols);
  for (std::size_t q = q0; q < q1; ++q) {
    const auto taps =
        local_ensemble(grid.coords[q][0], grid.coords[q][1], fmap.height,
                       fmap.width);
    for (std::size_t t = 0; t < 4; ++t) {
      const std::size_t c = 4 * (q - q0) + t;
      const auto code = fmap.code(taps[t].row, taps[t].col);
      T* column = x.data() + c * in_dim;
      std::copy(code.begin(), code.end(), column);
      column[dim + 0] = static_cast<T>(taps[t].rel_y * fh);
      column[dim + 1] = static_cast<T>(taps[t].rel_x * fw);
      column[dim + 2] = static_cast<T>(grid.cell[0] * fh);
      column[dim + 3] = static_cast<T>(grid.cell[1] * fw);
      weight[c] = static_cast<T>(taps[t].weight);
      pixel[c] = static_cast<std::uint32_t>(taps[t].row * fmap.width +
                                            taps[t].col);
    }
  }

  ColMat<T> act = x;
  if (cache != nullptr) cache->hidden.clear();
  for (std::size_t l = 0; l < layout.mlp.size(); ++l) {
    const auto& lin = layout.mlp[l];
    Eigen::Map<const RowMat<T>> w(params.data() + lin.weight, lin.out, lin.in);
    ColMat<T> next = w * act;
    next.colwise() += Eigen::Map<const Vec<T>>(params.data() + lin.bias, lin.out);
    if (l + 1 < layout.mlp.size()) {
      next = next.cwiseMax(T(0));
      if (cache != nullptr) {
        cache->hidden.emplace_back(next.data(), next.data() + next.size());
      }
    }
    act = std::move(next);
  }

  const std::size_t channels = config.channels();
  const std::size_t total_q = grid.coords.size();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t q = q0; q < q1; ++q) {
      const std::size_t c0 = 4 * (q - q0);
      T acc = T(0);
      for (std::size_t t = 0; t < 4; ++t) {
        acc += weight[c0 + t] * act(ch, c0 + t);
      }
      values[ch * total_q + q] = acc;
    }
  }

  if (cache != nullptr) {
    cache->q0 = q0;
    cache->q1 = q1;
    cache->inputs.assign(x.data(), x.data() + x.size());
    cache->weight = std::move(weight);
    cache->pixel = std::move(pixel);
  }
}

// Adds the gradient w.r.t. the pixel-major feature map into grad_fmap.
template <typename T>
void decode_chunk_backward(const ModelConfig& config, const ParamLayout& layout,
                           const typename ForwardCache<T>::Chunk& chunk,
                           const T* grad_values, std::size_t total_q,
                           std::span<const T> params, std::span<T> grad_params,
                           std::vector<T>& grad_fmap) {
  const std::size_t dim = config.features;
  const std::size_t cols = 4 * (chunk.q1 - chunk.q0);
  const std::size_t channels = config.channels();

  ColMat<T> grad(channels, cols);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t c = 0; c < cols; ++c) {
      grad(ch, c) =
          chunk.weight[c] * grad_values[ch * total_q + chunk.q0 + c / 4];
    }
  }

  for (std::size_t l = layout.mlp.size(); l-- > 0;) {
    const auto& lin = layout.mlp[l];
    const T* prev_data = l == 0 ? chunk.inputs.data() : chunk.hidden[l - 1].data();
    Eigen::Map<const ColMat<T>> prev(prev_data, lin.in, cols);
    Eigen::Map<RowMat<T>> d_w(grad_params.data() + lin.weight, lin.out, lin.in);
    d_w.noalias() += grad * prev.transpose();
    for (std::size_t o = 0; o < lin.out; ++o) {
      T acc = T(0);
      for (std::size_t c = 0; c < cols; ++c) acc += grad(o, c);
      grad_params[lin.bias + o] += acc;
    }
    Eigen::Map<const RowMat<T>> w(params.data() + lin.weight, lin.out, lin.in);
    if (l > 0) {
      ColMat<T> d_prev = w.transpose() * grad;
      grad = d_prev.cwiseProduct(
          (prev.array() > T(0)).template cast<T>().matrix());
    } else {
      ColMat<T> d_codes = w.leftCols(dim).transpose() * grad;
      for (std::size_t c = 0; c < cols; ++c) {
        T* dst = grad_fmap.data() + static_cast<std::size_t>(chunk.pixel[c]) * dim;
        const T* src = d_codes.data() + c * dim;
        for (std::size_t k = 0; k < dim; ++k) dst[k] += src[k];
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SRNet

template <typename T>
SRNet<T>::SRNet(ModelConfig config)
    : config_(std::move(config)), layout_(config_) {}

template <typename T>
FeatureMap<T> SRNet<T>::stem(const Volume<T>& input,
                             std::span<const T> params) const {
  require_params<T>(layout_, params.size());
  if (input.bands != config_.channels()) {
    throw ValidationError("stem: channel mismatch");
  }
  std::vector<T> scratch;
  std::vector<T> act(config_.features * input.plane_size());
  conv_forward(layout_.head, params, input.data.data(), input.height,
               input.width, act.data(), scratch);
  return to_feature_map(act, config_.features, input.height, input.width);
}

template <typename T>
FeatureMap<T> SRNet<T>::encode(const Volume<T>& input,
                               std::span<const T> params) const {
  require_params<T>(layout_, params.size());
  auto act = run_encoder<T>(config_, layout_, input, params, nullptr);
  require_finite(act, "encoder");
  return to_feature_map(act, config_.features, input.height, input.width);
}

template <typename T>
std::vector<T> SRNet<T>::query(const FeatureMap<T>& fmap, const QueryGrid& grid,
                               std::span<const T> params) const {
  require_params<T>(layout_, params.size());
  std::vector<T> values(config_.channels() * grid.coords.size());
  for (std::size_t q0 = 0; q0 < grid.coords.size(); q0 += kQueryChunk) {
    const std::size_t q1 = std::min(q0 + kQueryChunk, grid.coords.size());
    decode_chunk<T>(config_, layout_, fmap, grid, q0, q1, params, values,
                    nullptr);
  }
  return values;
}

template <typename T>
std::vector<T> SRNet<T>::decode_one(std::span<const T> code, double rel_y,
                                    double rel_x, std::array<double, 2> cell,
                                    std::size_t fmap_h, std::size_t fmap_w,
                                    std::span<const T> params) const {
  require_params<T>(layout_, params.size());
  const std::size_t dim = config_.features;
  Vec<T> act(config_.decoder_inputs());
  for (std::size_t k = 0; k < dim; ++k) act[k] = code[k];
  act[dim + 0] = static_cast<T>(rel_y * static_cast<double>(fmap_h));
  act[dim + 1] = static_cast<T>(rel_x * static_cast<double>(fmap_w));
  act[dim + 2] = static_cast<T>(cell[0] * static_cast<double>(fmap_h));
  act[dim + 3] = static_cast<T>(cell[1] * static_cast<double>(fmap_w));
  for (std::size_t l = 0; l < layout_.mlp.size(); ++l) {
    const auto& lin = layout_.mlp[l];
    Eigen::Map<const RowMat<T>> w(params.data() + lin.weight, lin.out, lin.in);
    Vec<T> next = w * act + Eigen::Map<const Vec<T>>(params.data() + lin.bias,
                                                     lin.out);
    if (l + 1 < layout_.mlp.size()) next = next.cwiseMax(T(0));
    act = std::move(next);
  }
  return {act.data(), act.data() + act.size()};
}

template <typename T>
Volume<T> SRNet<T>::forward(const Volume<T>& input, std::size_t out_h,
                            std::size_t out_w, std::span<const T> params,
                            ForwardCache<T>* cache) const {
  require_params<T>(layout_, params.size());
  if (cache != nullptr) {
    *cache = ForwardCache<T>{};
    cache->input = input;
    cache->fmap_h = input.height;
    cache->fmap_w = input.width;
    cache->out_h = out_h;
    cache->out_w = out_w;
  }
  const auto act = run_encoder<T>(config_, layout_, input, params, cache);
  require_finite(act, "encoder");
  const auto fmap =
      to_feature_map(act, config_.features, input.height, input.width);

  const QueryGrid grid = QueryGrid::pixel_centers(out_h, out_w);
  Volume<T> out(config_.channels(), out_h, out_w);
  for (std::size_t q0 = 0; q0 < grid.coords.size(); q0 += kQueryChunk) {
    const std::size_t q1 = std::min(q0 + kQueryChunk, grid.coords.size());
    typename ForwardCache<T>::Chunk* chunk = nullptr;
    if (cache != nullptr) chunk = &cache->chunks.emplace_back();
    decode_chunk<T>(config_, layout_, fmap, grid, q0, q1, params, out.data,
                    chunk);
  }
  return out;
}

template <typename T>
void SRNet<T>::backward(const ForwardCache<T>& cache,
                        const Volume<T>& grad_output,
                        std::span<const T> params,
                        std::span<T> grad_params) const {
  require_params<T>(layout_, params.size());
  require_params<T>(layout_, grad_params.size());
  const std::size_t h = cache.fmap_h;
  const std::size_t w = cache.fmap_w;
  const std::size_t hw = h * w;
  const std::size_t dim = config_.features;
  const std::size_t total_q = cache.out_h * cache.out_w;

  std::vector<T> grad_fmap(dim * hw, T(0));
  for (const auto& chunk : cache.chunks) {
    decode_chunk_backward<T>(config_, layout_, chunk, grad_output.data.data(),
                             total_q, params, grad_params, grad_fmap);
  }

  // Pixel-major -> channel-major.
  std::vector<T> grad_act(dim * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < dim; ++c) {
      grad_act[c * hw + p] = grad_fmap[p * dim + c];
    }
  }

  std::vector<T> scratch;
  std::vector<T> grad_branch(dim * hw);
  std::vector<T> grad_relu(dim * hw);
  for (std::size_t b = layout_.blocks.size(); b-- > 0;) {
    const auto& blk = layout_.blocks[b];
    const auto& saved = cache.blocks[b];
    const T scale = params[blk.scale];
    T d_scale = T(0);
    for (std::size_t i = 0; i < grad_act.size(); ++i) {
      d_scale += grad_act[i] * saved.branch[i];
      grad_branch[i] = scale * grad_act[i];
    }
    grad_params[blk.scale] += d_scale;
    std::fill(grad_relu.begin(), grad_relu.end(), T(0));
    conv_backward(blk.conv2, params, saved.relu.data(), h, w,
                  grad_branch.data(), grad_params, grad_relu.data(), scratch);
    for (std::size_t i = 0; i < grad_relu.size(); ++i) {
      if (!(saved.relu[i] > T(0))) grad_relu[i] = T(0);
    }
    conv_backward(blk.conv1, params, saved.input.data(), h, w,
                  grad_relu.data(), grad_params, grad_act.data(), scratch);
  }
  conv_backward(layout_.head, params, cache.input.data.data(), h, w,
                grad_act.data(), grad_params, static_cast<T*>(nullptr),
                scratch);
}

// ---------------------------------------------------------------------------
// SRModel

template <typename T>
SRModel<T>::SRModel(ModelConfig config) : net_(std::move(config)) {}

template <typename T>
Volume<T> SRModel<T>::super_resolve_band(const Image<T>& band,
                                         const ScaleFactor& factor,
                                         std::span<const T> params) const {
  if (config().variant != Variant::kSingle || band.bands != 1) {
    throw ValidationError("super_resolve_band needs a single-channel model "
                          "and a 1-band image");
  }
  return net_.forward(band, factor.upsampled(band.height),
                      factor.upsampled(band.width), params);
}

template <typename T>
Volume<T> SRModel<T>::super_resolve(const Volume<T>& lr,
                                    const ScaleFactor& factor,
                                    std::span<const T> params) const {
  return predict(lr, factor.upsampled(lr.height), factor.upsampled(lr.width),
                 params);
}

template <typename T>
Volume<T> SRModel<T>::predict(const Volume<T>& lr, std::size_t out_h,
                              std::size_t out_w,
                              std::span<const T> params) const {
  if (config().variant == Variant::kJoint) {
    return net_.forward(lr, out_h, out_w, params);
  }
  Volume<T> out(lr.bands, out_h, out_w);
  Image<T> plane(1, lr.height, lr.width);
  for (std::size_t s = 0; s < lr.bands; ++s) {
    const auto src = lr.plane(s);
    std::copy(src.begin(), src.end(), plane.data.begin());
    const auto up = net_.forward(plane, out_h, out_w, params);
    std::copy(up.data.begin(), up.data.end(), out.plane(s).begin());
  }
  return out;
}

template <typename T>
LossValue SRModel<T>::loss_and_gradient(const Volume<T>& lr,
                                        const Volume<T>& target,
                                        std::span<const T> params,
                                        std::span<T> grad_params,
                                        double weight) const {
  if (lr.bands != target.bands) {
    throw ValidationError("loss_and_gradient: band count mismatch");
  }
  const std::size_t out_h = target.height;
  const std::size_t out_w = target.width;
  Volume<T> grad(target.bands, out_h, out_w);

  if (config().variant == Variant::kJoint) {
    ForwardCache<T> cache;
    const auto pred = net_.forward(lr, out_h, out_w, params, &cache);
    const LossValue loss = total_loss_backward(pred, target, grad, weight);
    net_.backward(cache, grad, params, grad_params);
    return loss;
  }

  std::vector<ForwardCache<T>> caches(lr.bands);
  Volume<T> pred(lr.bands, out_h, out_w);
  Image<T> plane(1, lr.height, lr.width);
  for (std::size_t s = 0; s < lr.bands; ++s) {
    const auto src = lr.plane(s);
    std::copy(src.begin(), src.end(), plane.data.begin());
    const auto up = net_.forward(plane, out_h, out_w, params, &caches[s]);
    std::copy(up.data.begin(), up.data.end(), pred.plane(s).begin());
  }
  const LossValue loss = total_loss_backward(pred, target, grad, weight);
  Image<T> grad_plane(1, out_h, out_w);
  for (std::size_t s = 0; s < lr.bands; ++s) {
    const auto g = grad.plane(s);
    std::copy(g.begin(), g.end(), grad_plane.data.begin());
    net_.backward(caches[s], grad_plane, params, grad_params);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Float wrappers

Volume<float> super_resolve(const HSICube& cube, const ScaleFactor& factor,
                            const SRModelParams& params) {
  return SRModel<float>(params.config)
      .super_resolve(cube.volume(), factor, params.values);
}

Volume<float> super_resolve_band(const Image<float>& band,
                                 const ScaleFactor& factor,
                                 const SRModelParams& params) {
  return SRModel<float>(params.config)
      .super_resolve_band(band, factor, params.values);
}

Volume<float> super_resolve_joint(const HSICube& cube,
                                  const ScaleFactor& factor,
                                  const SRModelParams& params) {
  if (params.config.variant != Variant::kJoint) {
    throw ValidationError("super_resolve_joint needs a joint-variant model");
  }
  if (cube.bands() != params.config.bands) {
    throw ValidationError("joint model was built for " +
                          std::to_string(params.config.bands) +
                          " bands, cube has " + std::to_string(cube.bands()));
  }
  return super_resolve(cube, factor, params);
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_params(const ModelConfig&, std::uint64_t);
template class SRNet<float>;
template class SRNet<double>;
template class SRModel<float>;
template class SRModel<double>;

}  // namespace hsittt
