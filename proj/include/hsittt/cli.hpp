#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hsittt/model.hpp"
#include "hsittt/pretrain.hpp"
#include "hsittt/ttt.hpp"

namespace hsittt {

// Settings shared by every command. The JSON form has four sections, all
// optional, and unknown keys anywhere are rejected:
//   {"model": {"variant", "blocks", "features", "feature_dim", "mlp_layers",
//              "mlp_hidden"},
//    "ttt":   {"steps", "learning_rate", "ema_alpha", "mixup_lambda",
//              "aug_enabled"},
//    "train": {"epochs", "batch_patches", "patch_size", "learning_rate"},
//    "data":  {"scale", "seed"}}
// feature_dim is the latent code size, which equals the encoder width here;
// giving both with different values is an error.
struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  TTTConfig ttt;
  TrainConfig train;
  ScaleFactor scale{2.0};
  std::uint64_t seed = 0;

  // Copies scale and seed into the ttt and train sections.
  void propagate();
  // Throws ValidationError.
  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitIo = 3;

// Runs the command line (args excludes the program name) and returns the
// exit code. Errors are reported on err and never thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace hsittt
