#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hsittt/cube.hpp"
#include "hsittt/losses.hpp"

namespace hsittt {

// kSingle: one single-channel network shared by every band (no cross-band
// computation anywhere). kJoint: all bands in, all bands out; the control
// model for the single-vs-joint comparison.
enum class Variant { kSingle, kJoint };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::kSingle;
  // Channel count of the joint variant; ignored (always 1) for kSingle.
  std::size_t bands = 1;
  std::size_t blocks = 4;
  // Encoder width, which is also the latent code dimension D.
  std::size_t features = 32;
  // Number of hidden layers of the decoder MLP and their width.
  std::size_t mlp_layers = 3;
  std::size_t mlp_hidden = 64;

  // 4 blocks x 32 features, MLP 3 x 64.
  static ModelConfig desk();
  // 16 blocks x 64 features, MLP 5 x 256.
  static ModelConfig large();
  // D = 8, 2 blocks, MLP 2 x 32; small enough for finite differences.
  static ModelConfig tiny();

  std::size_t channels() const {
    return variant == Variant::kSingle ? 1 : bands;
  }
  // latent code + relative coordinate + query cell size
  std::size_t decoder_inputs() const { return features + 2 + 2; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Offsets of each tensor in the flat parameter vector. Canonical order:
//   head.weight [F, C, 3, 3], head.bias [F],
//   per block: conv1.weight [F, F, 3, 3], conv1.bias [F],
//              conv2.weight [F, F, 3, 3], conv2.bias [F], scale [1],
//   per MLP layer: weight [out, in], bias [out]
// with MLP widths (D + 4) -> hidden x mlp_layers -> C.
struct ParamLayout {
  struct Conv {
    std::size_t weight, bias, in, out;
  };
  struct Block {
    Conv conv1, conv2;
    std::size_t scale;
  };
  struct Linear {
    std::size_t weight, bias, in, out;
  };
  Conv head;
  std::vector<Block> blocks;
  std::vector<Linear> mlp;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig& config);
};

std::size_t parameter_count(const ModelConfig& config);

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<T> values;

  template <typename U>
  ModelParams<U> cast() const {
    return {config, std::vector<U>(values.begin(), values.end())};
  }
  bool all_finite() const;
  bool operator==(const ModelParams&) const = default;
};

using SRModelParams = ModelParams<float>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, residual
// scales 1. The draw sequence is the same for every T.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

// Latent codes, pixel-major H x W x D. Code (i, j) sits at the center of
// LR cell (i, j) in the continuous [-1, 1]^2 domain.
template <typename T>
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  std::vector<T> data;

  std::span<const T> code(std::size_t y, std::size_t x) const {
    return {data.data() + (y * width + x) * dim, dim};
  }
  bool operator==(const FeatureMap&) const = default;
};

// Query coordinates (y, x) in [-1, 1]^2 plus the query pixel extent.
struct QueryGrid {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> cell{};

  QueryGrid() = default;
  // Coordinates are clamped into [-1, 1].
  QueryGrid(std::vector<std::array<double, 2>> coords,
            std::array<double, 2> cell);

  // Pixel centers -1 + (2i + 1) / N of an out_h x out_w image, row-major.
  static QueryGrid pixel_centers(std::size_t out_h, std::size_t out_w);
};

// Pixel-center coordinate of index i on an axis of n samples.
double pixel_center(std::size_t i, std::size_t n);

// One of the four latent codes blended for a query.
struct EnsembleTap {
  std::size_t row = 0;
  std::size_t col = 0;
  // Query minus code center, in [-1, 1] domain units.
  double rel_y = 0.0;
  double rel_x = 0.0;
  // Normalized inverse-squared-distance weight.
  double weight = 0.0;
};

inline constexpr double kEnsembleEpsilon = 1e-9;

// The 2 x 2 codes surrounding the query (indices clamped to the grid, so a
// border code may appear twice) with weights
//   w_t = 1 / (|n - n'_t|^2 + eps) / sum_t(...)
std::array<EnsembleTap, 4> local_ensemble(double y, double x,
                                          std::size_t fmap_h,
                                          std::size_t fmap_w);

// Activations recorded by SRNet::forward for the backward pass.
template <typename T>
struct ForwardCache {
  struct Block {
    std::vector<T> input;   // F x h x w
    std::vector<T> relu;    // conv1 output after ReLU
    std::vector<T> branch;  // conv2 output, before the residual scale
  };
  // Decoder activations for a contiguous run of queries [q0, q1); matrices
  // are column-major with one column per (query, corner) pair.
  struct Chunk {
    std::size_t q0 = 0;
    std::size_t q1 = 0;
    std::vector<T> inputs;
    std::vector<std::vector<T>> hidden;
    std::vector<std::uint32_t> pixel;
    std::vector<T> weight;
  };

  Volume<T> input;
  std::vector<Block> blocks;
  std::size_t fmap_h = 0;
  std::size_t fmap_w = 0;
  std::vector<Chunk> chunks;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

// Residual convolutional encoder plus local implicit decoder. Holds only the
// architecture; parameters are passed in as a flat span.
template <typename T>
class SRNet {
 public:
  explicit SRNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }

  // Output of the head convolution alone.
  FeatureMap<T> stem(const Volume<T>& input, std::span<const T> params) const;

  // input is C x h x w. Throws NumericError on non-finite activations.
  FeatureMap<T> encode(const Volume<T>& input, std::span<const T> params) const;

  // C x Q values, channel-major.
  std::vector<T> query(const FeatureMap<T>& fmap, const QueryGrid& grid,
                       std::span<const T> params) const;

  // Evaluates the decoder MLP on one latent code, relative coordinate and
  // cell (both in [-1, 1] domain units); returns C values.
  std::vector<T> decode_one(std::span<const T> code, double rel_y,
                            double rel_x, std::array<double, 2> cell,
                            std::size_t fmap_h, std::size_t fmap_w,
                            std::span<const T> params) const;

  // encode + query on the pixel-center grid of an out_h x out_w image.
  // Pass a cache to enable backward().
  Volume<T> forward(const Volume<T>& input, std::size_t out_h,
                    std::size_t out_w, std::span<const T> params,
                    ForwardCache<T>* cache = nullptr) const;

  // Accumulates dL/dparams given dL/doutput for the forward pass recorded in
  // cache.
  void backward(const ForwardCache<T>& cache, const Volume<T>& grad_output,
                std::span<const T> params, std::span<T> grad_params) const;

 private:
  ModelConfig config_;
  ParamLayout layout_;
};

// High-level model API over whole cubes; dispatches on the variant.
template <typename T>
class SRModel {
 public:
  explicit SRModel(ModelConfig config);

  const ModelConfig& config() const { return net_.config(); }
  const SRNet<T>& net() const { return net_; }

  // Single-band SR; band is 1 x h x w. Output round(h*f) x round(w*f).
  Volume<T> super_resolve_band(const Image<T>& band, const ScaleFactor& factor,
                               std::span<const T> params) const;

  // S x h x w -> S x round(h*f) x round(w*f). The single variant runs every
  // band through the same network independently.
  Volume<T> super_resolve(const Volume<T>& lr, const ScaleFactor& factor,
                          std::span<const T> params) const;

  // Prediction at exactly out_h x out_w.
  Volume<T> predict(const Volume<T>& lr, std::size_t out_h, std::size_t out_w,
                    std::span<const T> params) const;

  // total_loss(predict(lr, target shape), target) and, scaled by weight, its
  // gradient accumulated into grad_params.
  LossValue loss_and_gradient(const Volume<T>& lr, const Volume<T>& target,
                              std::span<const T> params,
                              std::span<T> grad_params,
                              double weight = 1.0) const;

 private:
  SRNet<T> net_;
};

// Convenience wrappers on float parameters and validated cubes. The result is
// not clamped; HSICube::from_prediction clamps when materializing.
Volume<float> super_resolve(const HSICube& cube, const ScaleFactor& factor,
                            const SRModelParams& params);
Volume<float> super_resolve_band(const Image<float>& band,
                                 const ScaleFactor& factor,
                                 const SRModelParams& params);
// Joint variant only; throws ValidationError on band-count mismatch.
Volume<float> super_resolve_joint(const HSICube& cube,
                                  const ScaleFactor& factor,
                                  const SRModelParams& params);

}  // namespace hsittt
