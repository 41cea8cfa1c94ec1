#include "hsittt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "hsittt/checkpoint.hpp"
#include "hsittt/report.hpp"

namespace hsittt {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

namespace {

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

std::size_t get_count(const json& obj, const char* key,
                      const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ValidationError(where + "." + key + " must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const json& obj, const char* key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ValidationError(where + "." + key + " must be a number");
  return v.get<double>();
}

bool get_bool(const json& obj, const char* key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ValidationError(where + "." + key + " must be a boolean");
  return v.get<bool>();
}

}  // namespace

void RunConfig::propagate() {
  ttt.scale = scale;
  ttt.seed = seed;
  train.scale = scale;
  train.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  ttt.validate();
  train.validate();
  if (!(ttt.scale == scale) || !(train.scale == scale) || ttt.seed != seed ||
      train.seed != seed) {
    throw ValidationError("run config: scale/seed not propagated");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  reject_unknown(doc, "config", {"model", "ttt", "train", "data"});
  RunConfig rc;

  if (doc.contains("model")) {
    const json& m = doc["model"];
    const std::string w = "model";
    reject_unknown(m, w, {"variant", "blocks", "features", "feature_dim",
                          "mlp_layers", "mlp_hidden"});
    if (m.contains("variant")) {
      if (!m["variant"].is_string()) throw ValidationError("model.variant must be a string");
      rc.model.variant = parse_variant(m["variant"].get<std::string>());
    }
    if (m.contains("blocks")) rc.model.blocks = get_count(m, "blocks", w);
    if (m.contains("features")) rc.model.features = get_count(m, "features", w);
    if (m.contains("feature_dim")) {
      const std::size_t d = get_count(m, "feature_dim", w);
      if (m.contains("features") && d != rc.model.features) {
        throw ValidationError(
            "model.feature_dim must equal model.features (the latent code is "
            "the encoder output)");
      }
      rc.model.features = d;
    }
    if (m.contains("mlp_layers")) rc.model.mlp_layers = get_count(m, "mlp_layers", w);
    if (m.contains("mlp_hidden")) rc.model.mlp_hidden = get_count(m, "mlp_hidden", w);
  }
  if (doc.contains("ttt")) {
    const json& t = doc["ttt"];
    const std::string w = "ttt";
    reject_unknown(t, w, {"steps", "learning_rate", "ema_alpha", "mixup_lambda",
                          "aug_enabled"});
    if (t.contains("steps")) rc.ttt.steps = get_count(t, "steps", w);
    if (t.contains("learning_rate")) rc.ttt.learning_rate = get_real(t, "learning_rate", w);
    if (t.contains("ema_alpha")) rc.ttt.ema_alpha = get_real(t, "ema_alpha", w);
    if (t.contains("mixup_lambda")) rc.ttt.mixup_lambda = get_real(t, "mixup_lambda", w);
    if (t.contains("aug_enabled")) rc.ttt.aug_enabled = get_bool(t, "aug_enabled", w);
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    const std::string w = "train";
    reject_unknown(t, w, {"epochs", "batch_patches", "patch_size", "learning_rate"});
    if (t.contains("epochs")) rc.train.epochs = get_count(t, "epochs", w);
    if (t.contains("batch_patches")) rc.train.batch_patches = get_count(t, "batch_patches", w);
    if (t.contains("patch_size")) rc.train.patch_size = get_count(t, "patch_size", w);
    if (t.contains("learning_rate")) rc.train.learning_rate = get_real(t, "learning_rate", w);
  }
  if (doc.contains("data")) {
    const json& d = doc["data"];
    const std::string w = "data";
    reject_unknown(d, w, {"scale", "seed"});
    if (d.contains("scale")) rc.scale = ScaleFactor(get_real(d, "scale", w));
    if (d.contains("seed")) rc.seed = get_count(d, "seed", w);
  }
  rc.propagate();
  rc.validate();
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

// ---------------------------------------------------------------- commands

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  bool clamp = false;
};

struct Context {
  const Globals& g;
  std::ostream& out;
  RunConfig rc;
  std::ostringstream discard;

  std::ostream& log() {
    discard.str("");
    return g.quiet ? static_cast<std::ostream&>(discard) : out;
  }
  RangePolicy policy() const {
    return g.clamp ? RangePolicy::kClamp : RangePolicy::kReject;
  }
};

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ValidationError("--out is required");
  const fs::path p(g.out);
  if (fs::exists(p) && !fs::is_directory(p)) {
    throw IoError("output path " + p.string() + " exists and is not a directory");
  }
  return p;
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

void require_dir(const std::string& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string("--") + what + " is required");
  if (!fs::is_directory(p)) {
    throw IoError(std::string(what) + " directory not found: " + p);
  }
}

std::ofstream open_csv(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

void write_train_log(const fs::path& p, const std::vector<TrainLogRow>& log) {
  auto f = open_csv(p);
  f << "step,l1,sstv,total\n";
  for (const auto& r : log) {
    f << r.step << ',' << format_number(r.loss.l1) << ','
      << format_number(r.loss.sstv) << ',' << format_number(r.loss.total) << '\n';
  }
  if (!f) throw IoError("failed writing " + p.string());
}

void write_ttt_log(const fs::path& p, const std::vector<StepLoss>& log) {
  auto f = open_csv(p);
  f << "step,phase,l1,sstv,total\n";
  for (const auto& r : log) {
    f << r.step << ',' << to_string(r.phase) << ',' << format_number(r.loss.l1)
      << ',' << format_number(r.loss.sstv) << ','
      << format_number(r.loss.total) << '\n';
  }
  if (!f) throw IoError("failed writing " + p.string());
}

std::size_t thread_count(std::size_t jobs) {
  std::size_t n = 1;
  if (const char* env = std::getenv("HSITTT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ValidationError(std::string("HSITTT_THREADS must be a positive integer, got '") +
                            env + "'");
    }
    n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs job(i) for i in [0, n) on the configured number of workers. Results
// are written by index, so output does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = thread_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- synth

struct SynthArgs {
  std::size_t images = 20;
  std::size_t size = 64;
  std::size_t bands = 8;
  std::size_t endmembers = 4;
  std::optional<std::size_t> train_count;
  double smoothness = 3.0;
  double sharpness = 3.0;
  double amplitude = 0.2;
};

void cmd_synth(Context& ctx, const SynthArgs& a) {
  SynthConfig sc;
  sc.num_images = a.images;
  sc.height = sc.width = a.size;
  sc.bands = a.bands;
  sc.endmembers = std::min(a.endmembers, std::max<std::size_t>(a.bands, 1));
  sc.smoothness = a.smoothness;
  sc.sharpness = a.sharpness;
  sc.spectral_amplitude = a.amplitude;
  sc.seed = ctx.rc.seed;
  sc.validate();
  // A quarter held out by default (15 / 5 for 20 images).
  const std::size_t train = a.train_count.value_or(a.images - a.images / 4);
  if (train > a.images) throw ValidationError("--train exceeds --images");
  const fs::path out = require_out(ctx.g);

  const auto cubes = synth_dataset(sc);
  save_dataset(cubes, default_split(a.images, train), out);
  ctx.log() << "synth: " << a.images << " images " << sc.height << "x"
            << sc.width << "x" << sc.bands << " (" << train << " train, "
            << (a.images - train) << " test) seed " << sc.seed << " -> "
            << out.string() << "\n";
}

// ---- pretrain

struct PretrainArgs {
  std::string data;
  std::string split = "train";
  std::optional<std::string> variant;
  std::optional<std::size_t> blocks, features, mlp_layers, mlp_hidden;
  std::optional<std::size_t> epochs, batch, patch;
  std::optional<double> lr, scale;
  bool aug = false;
};

void cmd_pretrain(Context& ctx, const PretrainArgs& a) {
  RunConfig& rc = ctx.rc;
  if (a.variant) rc.model.variant = parse_variant(*a.variant);
  if (a.blocks) rc.model.blocks = *a.blocks;
  if (a.features) rc.model.features = *a.features;
  if (a.mlp_layers) rc.model.mlp_layers = *a.mlp_layers;
  if (a.mlp_hidden) rc.model.mlp_hidden = *a.mlp_hidden;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.batch) rc.train.batch_patches = *a.batch;
  if (a.patch) rc.train.patch_size = *a.patch;
  if (a.lr) rc.train.learning_rate = *a.lr;
  if (a.scale) rc.scale = ScaleFactor(*a.scale);
  rc.train.aug_enabled = a.aug;
  rc.propagate();
  require_dir(a.data, "data");
  const auto named = load_dataset(a.data, a.split);
  if (named.empty()) throw ValidationError("split '" + a.split + "' is empty");
  if (rc.model.variant == Variant::kJoint) rc.model.bands = named[0].cube.bands();
  rc.validate();
  const fs::path out = require_out(ctx.g);

  std::vector<HSICube> cubes;
  for (const auto& n : named) cubes.push_back(n.cube);
  const auto t0 = std::chrono::steady_clock::now();
  ctx.log() << "pretrain: " << cubes.size() << " images, "
            << to_string(rc.model.variant) << " model with "
            << parameter_count(rc.model) << " parameters, " << rc.train.epochs
            << " epochs\n";
  auto result = pretrain<float>(cubes, rc.train, rc.model);
  make_dir(out);
  save_checkpoint(result.params, out);
  write_train_log(out / "train_log.csv", result.log);
  if (!result.log.empty()) {
    ctx.log() << "pretrain: " << result.log.size() << " steps, loss "
              << format_number(result.log.front().loss.total) << " -> "
              << format_number(result.log.back().loss.total) << " ("
              << format_number(seconds_since(t0)) << " s) -> " << out.string()
              << "\n";
  }
}

// ---- adapt

struct TTTArgs {
  std::optional<std::size_t> steps;
  std::optional<double> lr, alpha, lambda, scale;
  bool no_aug = false;

  void apply(RunConfig& rc) const {
    if (steps) rc.ttt.steps = *steps;
    if (lr) rc.ttt.learning_rate = *lr;
    if (alpha) rc.ttt.ema_alpha = *alpha;
    if (lambda) rc.ttt.mixup_lambda = *lambda;
    if (scale) rc.scale = ScaleFactor(*scale);
    if (no_aug) rc.ttt.aug_enabled = false;
    rc.propagate();
  }
};

struct AdaptArgs {
  std::string model;
  std::string image;
  TTTArgs ttt;
};

void check_bands(const SRModelParams& p, const HSICube& cube) {
  if (p.config.variant == Variant::kJoint && p.config.bands != cube.bands()) {
    throw ValidationError("joint model expects " + std::to_string(p.config.bands) +
                          " bands, image has " + std::to_string(cube.bands()));
  }
}

void cmd_adapt(Context& ctx, const AdaptArgs& a) {
  RunConfig& rc = ctx.rc;
  a.ttt.apply(rc);
  rc.validate();
  require_dir(a.model, "model");
  require_dir(a.image, "image");
  const SRModelParams source = load_checkpoint(a.model);
  const HSICube lr = load_cube(a.image, ctx.policy());
  check_bands(source, lr);
  const fs::path out = require_out(ctx.g);

  const auto t0 = std::chrono::steady_clock::now();
  const CubeAdaptResult r = adapt(source, lr, rc.ttt);
  make_dir(out);
  save_cube(r.prediction, out / "prediction");
  save_checkpoint(r.student, out / "student");
  save_checkpoint(r.teacher, out / "teacher");
  write_ttt_log(out / "ttt_log.csv", r.log);
  ctx.log() << "adapt: " << rc.ttt.steps << " steps on " << lr.height() << "x"
            << lr.width() << "x" << lr.bands() << " -> "
            << r.prediction.height() << "x" << r.prediction.width() << " ("
            << format_number(seconds_since(t0)) << " s) -> " << out.string()
            << "\n";
}

// ---- eval

struct EvalArgs {
  std::string data;
  std::string split = "test";
  std::string model;
  std::string predictions;
  bool bicubic = false;
  bool adapt = false;
  bool save_predictions = false;
  TTTArgs ttt;
};

void cmd_eval(Context& ctx, const EvalArgs& a) {
  RunConfig& rc = ctx.rc;
  a.ttt.apply(rc);
  rc.validate();
  const int sources = (a.model.empty() ? 0 : 1) + (a.bicubic ? 1 : 0) +
                      (a.predictions.empty() ? 0 : 1);
  if (sources != 1) {
    throw ValidationError("give exactly one of --model, --bicubic, --predictions");
  }
  if (a.adapt && a.model.empty()) throw ValidationError("--adapt needs --model");
  require_dir(a.data, "data");
  const auto named = load_dataset(a.data, a.split);
  if (named.empty()) throw ValidationError("split '" + a.split + "' is empty");
  std::optional<SRModelParams> params;
  if (!a.model.empty()) {
    require_dir(a.model, "model");
    params = load_checkpoint(a.model);
    for (const auto& n : named) check_bands(*params, n.cube);
  }
  std::vector<HSICube> given;
  if (!a.predictions.empty()) {
    require_dir(a.predictions, "predictions");
    for (const auto& n : named) {
      given.push_back(load_cube(fs::path(a.predictions) / n.id, ctx.policy()));
      if (given.back().volume().height != n.cube.height() ||
          given.back().volume().width != n.cube.width() ||
          given.back().bands() != n.cube.bands()) {
        throw ValidationError("prediction " + n.id + " does not match its reference shape");
      }
    }
  }
  const fs::path out = require_out(ctx.g);

  const std::size_t n = named.size();
  std::vector<MetricsReport> reports(n);
  std::vector<HSICube> preds(n), inputs(n);
  std::vector<std::vector<StepLoss>> logs(n);
  const Predictor bicubic = bicubic_predictor();
  parallel_for(n, [&](std::size_t i) {
    const HSICube& hr = named[i].cube;
    if (!given.empty()) {
      preds[i] = given[i];
    } else {
      inputs[i] = downsample(hr, rc.scale);
      if (a.adapt) {
        auto r = adapt(*params, inputs[i], rc.ttt);
        preds[i] = std::move(r.prediction);
        logs[i] = std::move(r.log);
      } else {
        const Predictor p = params ? model_predictor(*params) : bicubic;
        preds[i] = HSICube::from_prediction(
            p(inputs[i].volume(), hr.height(), hr.width()));
      }
    }
    reports[i] = evaluate_metrics(preds[i], hr, rc.scale);
  });

  std::vector<std::string> ids;
  for (const auto& nc : named) ids.push_back(nc.id);
  make_dir(out);
  write_metrics_csv(out / "metrics.csv", ids, reports);
  write_band_csv(out / "band_psnr.csv", ids, reports);
  if (a.save_predictions) {
    for (std::size_t i = 0; i < n; ++i) {
      save_cube(preds[i], out / "predictions" / ids[i]);
      if (given.empty()) save_cube(inputs[i], out / "inputs" / ids[i]);
    }
  }
  if (a.adapt) {
    make_dir(out / "ttt_logs");
    for (std::size_t i = 0; i < n; ++i) {
      write_ttt_log(out / "ttt_logs" / (ids[i] + ".csv"), logs[i]);
    }
  }
  double mean = 0.0;
  for (const auto& r : reports) mean += r.mpsnr;
  ctx.log() << "eval: " << n << " images (" << a.split << "), mean MPSNR "
            << format_number(mean / static_cast<double>(n)) << " dB -> "
            << (out / "metrics.csv").string() << "\n";
}

// ---- report

struct ReportArgs {
  std::vector<std::string> metrics;
  std::vector<std::string> logs;
  std::string gt, bicubic, source, adapted;
  std::vector<std::size_t> bands;
};

void cmd_report(Context& ctx, const ReportArgs& a) {
  if (a.metrics.empty() || a.metrics.size() > 2) {
    throw ValidationError("report needs one or two --metrics CSVs (source, adapted)");
  }
  std::vector<std::vector<MetricsRow>> tables;
  for (const auto& m : a.metrics) tables.push_back(read_metrics_csv(m));
  std::optional<Comparison> cmp;
  if (tables.size() == 2) cmp = compare_metrics(tables[0], tables[1]);

  std::vector<std::pair<std::string, LossLog>> logs;
  std::map<std::string, int> seen;
  for (const auto& l : a.logs) {
    std::string name = fs::path(l).stem().string();
    if (seen[name]++ > 0) name += "_" + std::to_string(seen[name] - 1);
    logs.emplace_back(name, read_loss_csv(l));
  }

  std::vector<std::pair<std::string, HSICube>> cubes;
  const std::pair<const char*, const std::string*> kinds[] = {
      {"gt", &a.gt}, {"bicubic", &a.bicubic}, {"source", &a.source},
      {"adapted", &a.adapted}};
  for (const auto& [name, dir] : kinds) {
    if (dir->empty()) continue;
    require_dir(*dir, name);
    cubes.emplace_back(name, load_cube(*dir, RangePolicy::kClamp));
  }
  std::array<std::size_t, 3> rgb{};
  if (!cubes.empty()) {
    if (!a.bands.empty() && a.bands.size() != 3) {
      throw ValidationError("--bands takes exactly three indices");
    }
    rgb = a.bands.empty() ? default_composite_bands(cubes[0].second.bands())
                          : std::array<std::size_t, 3>{a.bands[0], a.bands[1], a.bands[2]};
    for (const auto& [name, c] : cubes) {
      for (std::size_t b : rgb) {
        if (b >= c.bands()) {
          throw ValidationError("band " + std::to_string(b) + " out of range for " +
                                name + " (" + std::to_string(c.bands()) + " bands)");
        }
      }
    }
  }
  const fs::path out = require_out(ctx.g);

  make_dir(out);
  std::ostringstream md;
  md << "# Super-resolution report\n\n";
  if (cmp) {
    write_comparison_csv(out / "comparison.csv", *cmp);
    md << "Source vs adapted (delta = adapted - source).\n\n"
       << comparison_markdown(*cmp) << "\n";
  } else {
    md << metrics_markdown(tables[0]) << "\n";
  }
  for (const auto& [name, log] : logs) {
    const std::string file = "loss_" + name + ".png";
    double step = 0.0, top = 0.0;
    write_png(out / file, plot_losses(log, 640, 360, &step, &top));
    md << "![" << name << "](" << file << ")\n\n" << name << ": ";
    for (std::size_t k = 0; k < log.columns.size(); ++k) {
      md << (k ? ", " : "") << log.columns[k] << " "
         << kPlotColorNames[k % std::size(kPlotColorNames)];
    }
    md << "; x is the update index, y runs from 0 to " << format_number(top)
       << " with grid lines every " << format_number(step) << ".\n\n";
  }
  if (!cubes.empty()) {
    md << "Composites use bands " << rgb[0] << ", " << rgb[1] << ", " << rgb[2]
       << " as R, G, B.\n\n";
    for (const auto& [name, c] : cubes) {
      const std::string file = "composite_" + name + ".png";
      write_png(out / file, composite(c, rgb));
      md << "![" << name << "](" << file << ") ";
    }
    md << "\n";
  }
  std::ofstream f(out / "summary.md", std::ios::binary);
  f << md.str();
  if (!f) throw IoError("failed writing summary.md");
  ctx.log() << "report: " << (out / "summary.md").string() << "\n";
}

void add_ttt_flags(CLI::App* sub, TTTArgs& t) {
  sub->add_option("--steps", t.steps, "Test-time iterations T (default 20)");
  sub->add_option("--lr", t.lr, "Adam learning rate (default 1e-5)");
  sub->add_option("--alpha", t.alpha, "EMA factor (default 0.99)");
  sub->add_option("--lambda", t.lambda, "Spectral Mixup weight (default 0.5)");
  sub->add_option("--scale", t.scale, "Upscaling factor (default 2)");
  sub->add_flag("--no-aug", t.no_aug, "Skip the mixup half of each iteration");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Test-time training for hyperspectral super-resolution", "hsittt"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run config");
  app.add_option("--seed", g.seed, "Seed (overrides data.seed)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "No progress output");
  app.add_flag("--clamp", g.clamp, "Clamp out-of-range input cubes instead of rejecting");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--images", sa.images, "Number of cubes")->capture_default_str();
  synth->add_option("--size", sa.size, "Height and width")->capture_default_str();
  synth->add_option("--bands", sa.bands, "Bands per cube")->capture_default_str();
  synth->add_option("--endmembers", sa.endmembers, "Endmember count (capped at bands)")
      ->capture_default_str();
  synth->add_option("--train", sa.train_count, "Training images (default 3/4)");
  synth->add_option("--smoothness", sa.smoothness, "Abundance blur sigma")
      ->capture_default_str();
  synth->add_option("--sharpness", sa.sharpness, "Abundance softmax gain")
      ->capture_default_str();
  synth->add_option("--amplitude", sa.amplitude, "Endmember spectral span")
      ->capture_default_str();

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Train the source model");
  pre->add_option("--data", pa.data, "Dataset directory")->required();
  pre->add_option("--split", pa.split, "train, test or all")->capture_default_str();
  pre->add_option("--variant", pa.variant, "single or joint");
  pre->add_option("--blocks", pa.blocks);
  pre->add_option("--features", pa.features);
  pre->add_option("--mlp-layers", pa.mlp_layers);
  pre->add_option("--mlp-hidden", pa.mlp_hidden);
  pre->add_option("--epochs", pa.epochs);
  pre->add_option("--batch", pa.batch, "Patches per Adam step");
  pre->add_option("--patch", pa.patch, "HR patch side");
  pre->add_option("--lr", pa.lr);
  pre->add_option("--scale", pa.scale);
  pre->add_flag("--aug", pa.aug, "Spectral Mixup on training patches");

  AdaptArgs aa;
  auto* ad = app.add_subcommand("adapt", "Test-time training on one LR cube");
  ad->add_option("--model", aa.model, "Source checkpoint directory")->required();
  ad->add_option("--image", aa.image, "LR cube container")->required();
  add_ttt_flags(ad, aa.ttt);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a model on a dataset split");
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--split", ea.split, "train, test or all")->capture_default_str();
  ev->add_option("--model", ea.model, "Checkpoint directory");
  ev->add_flag("--bicubic", ea.bicubic, "Score the bicubic baseline");
  ev->add_option("--predictions", ea.predictions,
                 "Directory of precomputed prediction cubes named by image id");
  ev->add_flag("--adapt", ea.adapt, "Run test-time training on every image first");
  ev->add_flag("--save-predictions", ea.save_predictions,
               "Also write predictions/ and the LR inputs/");
  add_ttt_flags(ev, ea.ttt);

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Tables, loss plots and composites");
  rep->add_option("--metrics", ra.metrics, "Metrics CSV; give source then adapted")
      ->required();
  rep->add_option("--log", ra.logs, "Loss log CSV (repeatable)");
  rep->add_option("--gt", ra.gt, "Ground-truth cube");
  rep->add_option("--bicubic", ra.bicubic, "Bicubic prediction cube");
  rep->add_option("--source", ra.source, "Source-model prediction cube");
  rep->add_option("--adapted", ra.adapted, "Adapted prediction cube");
  rep->add_option("--bands", ra.bands, "Three band indices for R G B")->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    Context ctx{g, out, RunConfig{}, {}};
    if (!g.config.empty()) ctx.rc = load_run_config(g.config);
    if (g.seed) ctx.rc.seed = *g.seed;
    ctx.rc.propagate();
    if (synth->parsed()) cmd_synth(ctx, sa);
    else if (pre->parsed()) cmd_pretrain(ctx, pa);
    else if (ad->parsed()) cmd_adapt(ctx, aa);
    else if (ev->parsed()) cmd_eval(ctx, ea);
    else if (rep->parsed()) cmd_report(ctx, ra);
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const NumericError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace hsittt
