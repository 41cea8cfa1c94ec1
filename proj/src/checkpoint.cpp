#include "hsittt/checkpoint.hpp"

#include <json.hpp>

#include "binary_io.hpp"

namespace hsittt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bumped if the pixel-center / relative-coordinate convention changes.
constexpr int kCoordConvention = 1;

std::size_t get_size(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw ValidationError(std::string("model.json: missing non-negative "
                                      "integer '") +
                          key + "'");
  }
  return j[key].get<std::size_t>();
}

}  // namespace

void save_checkpoint(const SRModelParams& params, const fs::path& dir) {
  const ModelConfig& c = params.config;
  if (params.values.size() != parameter_count(c)) {
    throw ValidationError("save_checkpoint: parameter count mismatch");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json j;
  j["variant"] = to_string(c.variant);
  j["bands"] = c.channels();
  j["blocks"] = c.blocks;
  j["features"] = c.features;
  j["feature_dim"] = c.features;
  j["mlp_layers"] = c.mlp_layers;
  j["mlp_hidden"] = c.mlp_hidden;
  j["coord_convention"] = kCoordConvention;
  j["feature_unfold"] = false;
  j["param_count"] = params.values.size();
  detail::write_file(dir / "model.json", j.dump(2) + "\n");
  detail::write_file(dir / "weights.f32", detail::encode_f32le(params.values));
}

SRModelParams load_checkpoint(const fs::path& dir) {
  const fs::path meta = dir / "model.json";
  const fs::path weights = dir / "weights.f32";
  if (!fs::exists(meta)) throw IoError("missing " + meta.string());
  if (!fs::exists(weights)) throw IoError("missing " + weights.string());

  json j;
  try {
    j = json::parse(detail::read_file(meta));
  } catch (const json::parse_error& e) {
    throw ValidationError("model.json: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ValidationError("model.json: not an object");

  ModelConfig c;
  c.variant = parse_variant(j.value("variant", std::string("single")));
  c.bands = get_size(j, "bands");
  c.blocks = get_size(j, "blocks");
  c.features = get_size(j, "features");
  c.mlp_layers = get_size(j, "mlp_layers");
  c.mlp_hidden = get_size(j, "mlp_hidden");
  if (j.contains("feature_dim") && get_size(j, "feature_dim") != c.features) {
    throw ValidationError("model.json: feature_dim must equal features");
  }
  if (j.value("coord_convention", kCoordConvention) != kCoordConvention) {
    throw ValidationError("model.json: unsupported coord_convention");
  }
  if (j.value("feature_unfold", false)) {
    throw ValidationError("model.json: feature_unfold is not supported");
  }
  if (c.variant == Variant::kSingle && c.bands != 1) {
    throw ValidationError("model.json: single variant must declare bands = 1");
  }
  const std::size_t declared = get_size(j, "param_count");
  const std::size_t expected = parameter_count(c);
  if (declared != expected) {
    throw ValidationError("model.json: param_count " + std::to_string(declared) +
                          " does not match the architecture (" +
                          std::to_string(expected) + ")");
  }
  const std::string bytes = detail::read_file(weights);
  if (bytes.size() != expected * 4) {
    throw ValidationError("weights.f32 holds " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected * 4));
  }
  SRModelParams params{c, detail::decode_f32le(bytes)};
  if (!params.all_finite()) {
    throw ValidationError("weights.f32 contains non-finite values");
  }
  return params;
}

}  // namespace hsittt
