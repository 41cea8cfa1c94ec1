#include "hsittt/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "hsittt/augment.hpp"
#include "hsittt/optim.hpp"

namespace hsittt {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
  if (num_images == 0) throw ValidationError("synth: num_images must be >= 1");
  if (height < 8 || width < 8) {
    throw ValidationError("synth: height and width must be >= 8");
  }
  if (bands == 0) throw ValidationError("synth: bands must be >= 1");
  if (endmembers == 0 || endmembers > bands) {
    throw ValidationError("synth: endmembers must be in [1, bands]");
  }
  if (!(smoothness > 0.0) || !std::isfinite(smoothness)) {
    throw ValidationError("synth: smoothness must be positive");
  }
  if (!(sharpness >= 0.0) || !std::isfinite(sharpness)) {
    throw ValidationError("synth: sharpness must be finite and >= 0");
  }
  if (!(spectral_amplitude >= 0.0 && spectral_amplitude <= 0.9)) {
    throw ValidationError("synth: spectral_amplitude must be in [0, 0.9]");
  }
}

namespace {

std::vector<double> gaussian_taps(double sigma) {
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable Gaussian blur with edge replication.
std::vector<double> blur(const std::vector<double>& in, std::size_t h,
                         std::size_t w, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const long radius = static_cast<long>(taps.size() / 2);
  std::vector<double> tmp(h * w), out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        const long sx = std::clamp<long>(static_cast<long>(x) + k, 0,
                                         static_cast<long>(w) - 1);
        acc += taps[k + radius] * in[y * w + sx];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        const long sy = std::clamp<long>(static_cast<long>(y) + k, 0,
                                         static_cast<long>(h) - 1);
        acc += taps[k + radius] * tmp[sy * w + x];
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

// A random base level plus a cumulative-sum random walk rescaled to span
// `amplitude`.
std::vector<double> endmember(std::size_t bands, double amplitude, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> e(bands);
  double acc = 0.0;
  for (double& v : e) {
    acc += normal(rng);
    v = acc;
  }
  const double base = 0.05 + (0.9 - amplitude) * uniform(rng);
  const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : e) v = base + (range > 0.0 ? amplitude * (v - min) / range : 0.5 * amplitude);
  return e;
}

}  // namespace

std::vector<HSICube> synth_dataset(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::size_t h = config.height;
  const std::size_t w = config.width;
  const std::size_t k_count = config.endmembers;
  std::vector<HSICube> cubes;
  cubes.reserve(config.num_images);
  for (std::size_t n = 0; n < config.num_images; ++n) {
    std::vector<std::vector<double>> spectra;
    for (std::size_t k = 0; k < k_count; ++k) {
      spectra.push_back(endmember(config.bands, config.spectral_amplitude, rng));
    }
    std::vector<std::vector<double>> fields;
    for (std::size_t k = 0; k < k_count; ++k) {
      std::vector<double> noise(h * w);
      for (double& v : noise) v = uniform(rng);
      auto field = blur(noise, h, w, config.smoothness);
      const double mean =
          std::accumulate(field.begin(), field.end(), 0.0) / field.size();
      double var = 0.0;
      for (double v : field) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / field.size());
      for (double& v : field) v = sd > 0.0 ? (v - mean) / sd : 0.0;
      fields.push_back(std::move(field));
    }

    Volume<float> vol(config.bands, h, w);
    std::vector<double> abundance(k_count);
    for (std::size_t p = 0; p < h * w; ++p) {
      double max_logit = -1e300;
      for (std::size_t k = 0; k < k_count; ++k) {
        max_logit = std::max(max_logit, config.sharpness * fields[k][p]);
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        abundance[k] = std::exp(config.sharpness * fields[k][p] - max_logit);
        sum += abundance[k];
      }
      for (std::size_t s = 0; s < config.bands; ++s) {
        double v = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
          v += abundance[k] / sum * spectra[k][s];
        }
        vol.data[s * h * w + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    cubes.push_back(HSICube::create(std::move(vol)));
  }
  return cubes;
}

// ---------------------------------------------------------------------------
// Pretraining

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("train: epochs must be >= 1");
  if (batch_patches == 0) {
    throw ValidationError("train: batch_patches must be >= 1");
  }
  if (patch_size == 0) throw ValidationError("train: patch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train: learning_rate must be finite and >= 0");
  }
  if (scale.is_integer() &&
      patch_size % static_cast<std::size_t>(scale.value()) != 0) {
    throw ValidationError("train: patch_size must be divisible by the scale");
  }
  if (scale.downsampled(patch_size) == 0) {
    throw ValidationError("train: patch_size too small for the scale");
  }
  if (!(mixup_lambda >= 0.0 && mixup_lambda <= 1.0)) {
    throw ValidationError("train: mixup_lambda must be in [0, 1]");
  }
}

template <typename T>
PretrainResult<T> pretrain(const std::vector<HSICube>& dataset,
                           const TrainConfig& config,
                           const ModelConfig& model) {
  config.validate();
  model.validate();
  if (dataset.empty()) throw ValidationError("pretrain: empty dataset");
  for (const auto& cube : dataset) {
    if (cube.height() < config.patch_size || cube.width() < config.patch_size) {
      throw ValidationError("pretrain: patch_size exceeds an image");
    }
    if (model.variant == Variant::kJoint && cube.bands() != model.bands) {
      throw ValidationError("pretrain: joint model band count mismatch");
    }
  }

  PretrainResult<T> result{init_params<T>(model, config.seed), {}};
  auto& params = result.params.values;
  const SRModel<T> net(model);
  AdamState<T> opt(params.size());
  const AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8};
  // Separate stream from the initialization draws.
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  const std::size_t n = dataset.size();
  const std::size_t batch = config.batch_patches;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t p = config.patch_size;
  std::vector<std::size_t> order(n);
  std::vector<T> grad(params.size());
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      ++step;
      std::fill(grad.begin(), grad.end(), T(0));
      LossValue mean;
      for (std::size_t b = 0; b < batch; ++b) {
        const HSICube& cube = dataset[order[(s * batch + b) % n]];
        std::uniform_int_distribution<std::size_t> pick_y(0, cube.height() - p);
        std::uniform_int_distribution<std::size_t> pick_x(0, cube.width() - p);
        const std::size_t y0 = pick_y(rng);
        const std::size_t x0 = pick_x(rng);
        Volume<T> hr(cube.bands(), p, p);
        for (std::size_t c = 0; c < cube.bands(); ++c) {
          for (std::size_t y = 0; y < p; ++y) {
            for (std::size_t x = 0; x < p; ++x) {
              hr.at(c, y, x) = static_cast<T>(cube.volume().at(c, y0 + y, x0 + x));
            }
          }
        }
        if (config.aug_enabled) {
          hr = spectral_mixup(hr, sample_mixing_matrix(hr.bands, rng),
                              config.mixup_lambda);
        }
        const Volume<T> lr = downsample(hr, config.scale);
        const double weight = 1.0 / static_cast<double>(batch);
        LossValue loss;
        try {
          loss = net.loss_and_gradient(lr, hr, params, grad, weight);
        } catch (const NumericError& e) {
          throw DivergenceError(e.what(), step);
        }
        mean.l1 += weight * loss.l1;
        mean.sstv += weight * loss.sstv;
        mean.total += weight * loss.total;
      }
      if (!std::isfinite(mean.total)) {
        throw DivergenceError("non-finite training loss in epoch " +
                                  std::to_string(epoch),
                              step);
      }
      adam_step<T>(params, grad, opt, adam);
      result.log.push_back({step, epoch, mean});
    }
  }
  return result;
}

template PretrainResult<float> pretrain(const std::vector<HSICube>&,
                                        const TrainConfig&,
                                        const ModelConfig&);
template PretrainResult<double> pretrain(const std::vector<HSICube>&,
                                         const TrainConfig&,
                                         const ModelConfig&);

// ---------------------------------------------------------------------------
// Evaluation

Predictor model_predictor(const SRModelParams& params) {
  auto model = std::make_shared<const SRModel<float>>(params.config);
  return [model, values = params.values](const Volume<float>& lr,
                                         std::size_t out_h, std::size_t out_w) {
    return model->predict(lr, out_h, out_w, values);
  };
}

Predictor bicubic_predictor() {
  return [](const Volume<float>& lr, std::size_t out_h, std::size_t out_w) {
    return resize_bicubic(lr, out_h, out_w);
  };
}

std::vector<MetricsReport> evaluate(const Predictor& predictor,
                                    const std::vector<HSICube>& dataset,
                                    const ScaleFactor& scale) {
  std::vector<MetricsReport> reports;
  reports.reserve(dataset.size());
  for (const auto& hr : dataset) {
    const Volume<float> lr = downsample(hr, scale).volume();
    const HSICube pred = HSICube::from_prediction(
        predictor(lr, hr.height(), hr.width()));
    reports.push_back(evaluate_metrics(pred, hr, scale));
  }
  return reports;
}

std::vector<MetricsReport> evaluate(const SRModelParams& params,
                                    const std::vector<HSICube>& dataset,
                                    const ScaleFactor& scale) {
  return evaluate(model_predictor(params), dataset, scale);
}

// ---------------------------------------------------------------------------
// Dataset directories

std::string image_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04zu", index);
  return buf;
}

DatasetSplit default_split(std::size_t num_images, std::size_t train_count) {
  DatasetSplit split;
  for (std::size_t i = 0; i < num_images; ++i) {
    (i < train_count ? split.train : split.test).push_back(image_id(i));
  }
  return split;
}

void save_dataset(const std::vector<HSICube>& cubes, const DatasetSplit& split,
                  const fs::path& dir) {
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    save_cube(cubes[i], dir / image_id(i));
  }
  json j;
  j["train"] = split.train;
  j["test"] = split.test;
  detail::write_file(dir / "split.json", j.dump(2) + "\n");
}

DatasetSplit load_split(const fs::path& dir) {
  const fs::path path = dir / "split.json";
  if (!fs::exists(path)) throw IoError("missing " + path.string());
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("split.json: " + std::string(e.what()));
  }
  DatasetSplit split;
  try {
    split.train = j.at("train").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("split.json: " + std::string(e.what()));
  }
  return split;
}

std::vector<NamedCube> load_dataset(const fs::path& dir,
                                    const std::string& which) {
  const DatasetSplit split = load_split(dir);
  std::vector<std::string> ids;
  if (which == "train" || which == "all") {
    ids.insert(ids.end(), split.train.begin(), split.train.end());
  }
  if (which == "test" || which == "all") {
    ids.insert(ids.end(), split.test.begin(), split.test.end());
  }
  if (which != "train" && which != "test" && which != "all") {
    throw ValidationError("unknown split '" + which + "'");
  }
  std::vector<NamedCube> out;
  for (const auto& id : ids) out.push_back({id, load_cube(dir / id)});
  return out;
}

}  // namespace hsittt
