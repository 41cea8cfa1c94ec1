#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hsittt/cube.hpp"
#include "hsittt/losses.hpp"
#include "hsittt/metrics.hpp"
#include "hsittt/model.hpp"

namespace hsittt {

// Low-rank linear mixing model: cube = clip(sum_k A_k (x) e_k, 0, 1).
struct SynthConfig {
  std::size_t num_images = 20;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t bands = 8;
  // Number of endmember spectra K (<= bands).
  std::size_t endmembers = 4;
  // Gaussian sigma, in pixels, of the abundance low-pass filter.
  double smoothness = 3.0;
  // Softmax gain on the standardized abundance fields; higher gives
  // sharper material boundaries, 0 a uniform mixture.
  double sharpness = 3.0;
  // Peak-to-peak span of each endmember spectrum.
  double spectral_amplitude = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Endmembers are cumulative sums of Gaussian noise rescaled to span
// spectral_amplitude above a random base level, all inside [0.05, 0.95];
// abundances are a softmax over K blurred, standardized noise fields, so
// they are nonnegative and sum to 1 per pixel (K = 1 gives a constant
// abundance). Fully determined by the seed.
std::vector<HSICube> synth_dataset(const SynthConfig& config);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_patches = 2;
  // HR patch side; must be a multiple of an integer scale.
  std::size_t patch_size = 32;
  double learning_rate = 1e-3;
  ScaleFactor scale{2.0};
  // Spectral Mixup on HR patches before degradation.
  bool aug_enabled = false;
  double mixup_lambda = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainLogRow {
  std::size_t step = 0;  // one-based
  std::size_t epoch = 0;  // one-based
  LossValue loss;
};

template <typename T>
struct PretrainResult {
  ModelParams<T> params;
  std::vector<TrainLogRow> log;
};

// Supervised training of the source model on random HR patches and their
// degraded LR versions. Each epoch visits every image once (in shuffled
// order, one random patch each), batch_patches images per Adam step, so an
// epoch is ceil(N / batch_patches) steps. Parameters are initialized from
// config.seed. Throws DivergenceError on a non-finite loss.
template <typename T>
PretrainResult<T> pretrain(const std::vector<HSICube>& dataset,
                           const TrainConfig& config,
                           const ModelConfig& model);

// Maps an LR volume to an HR volume of the requested size.
using Predictor = std::function<Volume<float>(
    const Volume<float>& lr, std::size_t out_h, std::size_t out_w)>;

Predictor model_predictor(const SRModelParams& params);
Predictor bicubic_predictor();

// For each HR cube: degrade with the shared operator (clamped to a valid
// cube, as an LR input file would be), predict, clamp, score
// against the original.
std::vector<MetricsReport> evaluate(const Predictor& predictor,
                                    const std::vector<HSICube>& dataset,
                                    const ScaleFactor& scale);
std::vector<MetricsReport> evaluate(const SRModelParams& params,
                                    const std::vector<HSICube>& dataset,
                                    const ScaleFactor& scale);

// Dataset directory: img_0000/, img_0001/, ... cube containers plus
// split.json {"train": [ids], "test": [ids]}.
struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

std::string image_id(std::size_t index);

// First train_count images train, the rest test.
DatasetSplit default_split(std::size_t num_images, std::size_t train_count);

void save_dataset(const std::vector<HSICube>& cubes, const DatasetSplit& split,
                  const std::filesystem::path& dir);
DatasetSplit load_split(const std::filesystem::path& dir);

struct NamedCube {
  std::string id;
  HSICube cube;
};
// which: "train", "test" or "all" (every id of the split, train first).
std::vector<NamedCube> load_dataset(const std::filesystem::path& dir,
                                    const std::string& which);

}  // namespace hsittt
