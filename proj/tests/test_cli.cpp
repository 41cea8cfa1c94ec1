#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "hsittt/checkpoint.hpp"
#include "hsittt/cli.hpp"
#include "hsittt/report.hpp"

using namespace hsittt;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
  }
  return files;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// A small model and short schedules so the whole pipeline runs in seconds.
const char* kSmallConfig = R"({
  "model": {"blocks": 1, "features": 8, "mlp_layers": 1, "mlp_hidden": 16},
  "train": {"epochs": 2, "patch_size": 16},
  "ttt": {"steps": 2}
})";

struct Workspace {
  TempDir dir;
  std::string config;
  std::string data;

  Workspace() {
    config = (dir / "config.json").string();
    std::ofstream(config) << kSmallConfig;
    data = (dir / "data").string();
    const Run r = run({"--quiet", "synth", "--out", data, "--images", "4",
                       "--size", "16", "--bands", "3", "--seed", "7"});
    REQUIRE(r.code == 0);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig d = parse_run_config("{}");
  CHECK(d.model == ModelConfig::desk());
  CHECK(d.ttt.steps == 20);
  CHECK(d.ttt.learning_rate == 1e-5);
  CHECK(d.ttt.ema_alpha == 0.99);
  CHECK(d.ttt.mixup_lambda == 0.5);
  CHECK(d.scale.value() == 2.0);

  const RunConfig c = parse_run_config(R"({
    "model": {"blocks": 2, "feature_dim": 16, "mlp_layers": 2, "mlp_hidden": 32},
    "ttt": {"steps": 5, "learning_rate": 1e-4, "ema_alpha": 0.9,
            "mixup_lambda": 0.25, "aug_enabled": false},
    "train": {"epochs": 3, "batch_patches": 4, "patch_size": 24, "learning_rate": 2e-3},
    "data": {"scale": 3, "seed": 11}})");
  CHECK(c.model.blocks == 2);
  CHECK(c.model.features == 16);
  CHECK(c.model.mlp_hidden == 32);
  CHECK(c.ttt.steps == 5);
  CHECK_FALSE(c.ttt.aug_enabled);
  CHECK(c.train.batch_patches == 4);
  CHECK(c.train.learning_rate == 2e-3);
  CHECK(c.ttt.scale.value() == 3.0);
  CHECK(c.train.scale.value() == 3.0);
  CHECK(c.ttt.seed == 11);
  CHECK(c.train.seed == 11);

  const char* bad[] = {
      R"({"extra": {}})",
      R"({"ttt": {"step": 3}})",
      R"({"model": {"features": 8, "feature_dim": 16}})",
      R"({"model": {"blocks": -1}})",
      R"({"model": {"blocks": 1.5}})",
      R"({"ttt": {"ema_alpha": 1.5}})",
      R"({"ttt": {"aug_enabled": 1}})",
      R"({"train": {"patch_size": 15}})",
      R"({"data": {"scale": 0.5}})",
      R"({"model": []})",
      R"([1, 2])",
      R"({"ttt": )",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_AS(parse_run_config(text), ValidationError);
  }
}

TEST_CASE("cli synth") {
  TempDir dir;
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  Run r = run({"synth", "--out", a, "--images", "20", "--size", "64", "--bands",
               "8", "--seed", "0"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("20 images 64x64x8") != std::string::npos);
  CHECK(r.out.find("seed 0") != std::string::npos);
  std::size_t containers = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.is_directory() && fs::exists(e.path() / "data.f32")) ++containers;
  }
  CHECK(containers == 20);
  CHECK(fs::exists(fs::path(a) / "split.json"));
  const DatasetSplit split = load_split(a);
  CHECK(split.train.size() == 15);
  CHECK(split.test.size() == 5);

  SUBCASE("same seed gives identical files") {
    REQUIRE(run({"--quiet", "synth", "--out", b, "--images", "20", "--size",
                 "64", "--bands", "8", "--seed", "0"}).code == 0);
    CHECK(tree(a) == tree(b));
  }
  SUBCASE("zero bands is rejected before writing") {
    r = run({"synth", "--out", b, "--bands", "0"});
    CHECK(r.code == kExitValidation);
    CHECK_FALSE(r.err.empty());
    CHECK_FALSE(fs::exists(b));
  }
  SUBCASE("output path that is a file") {
    std::ofstream(dir / "file") << "x";
    r = run({"synth", "--out", (dir / "file").string(), "--images", "2"});
    CHECK(r.code == kExitIo);
  }
}

TEST_CASE("cli argument and config errors") {
  Workspace ws;
  CHECK(run({}).code == kExitValidation);
  CHECK(run({"bogus"}).code == kExitValidation);
  CHECK(run({"synth", "--images", "x", "--out", ws.path("o")}).code ==
        kExitValidation);
  CHECK(run({"--help"}).code == kExitOk);

  std::ofstream(ws.path("bad.json")) << R"({"ttt": {"stepz": 1}})";
  Run r = run({"--config", ws.path("bad.json"), "eval", "--data", ws.data,
               "--bicubic", "--out", ws.path("e")});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("stepz") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.path("e")));

  CHECK(run({"--config", ws.path("missing.json"), "eval", "--data", ws.data,
             "--bicubic", "--out", ws.path("e")}).code == kExitIo);
  CHECK(run({"eval", "--data", ws.path("nope"), "--bicubic", "--out",
             ws.path("e")}).code == kExitIo);
  // Patch not divisible by the scale: rejected before any output exists.
  r = run({"--config", ws.config, "pretrain", "--data", ws.data, "--patch", "15",
           "--out", ws.path("m")});
  CHECK(r.code == kExitValidation);
  CHECK_FALSE(fs::exists(ws.path("m")));
  CHECK(run({"eval", "--data", ws.data, "--out", ws.path("e")}).code ==
        kExitValidation);
}

TEST_CASE("cli pretrain") {
  Workspace ws;
  const std::string m = ws.path("model");
  Run r = run({"--config", ws.config, "--quiet", "pretrain", "--data", ws.data,
               "--out", m});
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  const SRModelParams p = load_checkpoint(m);
  CHECK(p.config.features == 8);
  CHECK(p.values.size() == parameter_count(p.config));
  // 3 training images, batch 2: two steps per epoch, two epochs.
  const auto rows = csv_rows(fs::path(m) / "train_log.csv");
  REQUIRE(rows.size() == 1 + 4);
  CHECK(rows[0] == std::vector<std::string>{"step", "l1", "sstv", "total"});
  CHECK(rows[4][0] == "4");

  SUBCASE("zero learning rate returns the initialization") {
    REQUIRE(run({"--config", ws.config, "--quiet", "--seed", "5", "pretrain",
                 "--data", ws.data, "--lr", "0", "--out", ws.path("m0")}).code == 0);
    const SRModelParams z = load_checkpoint(ws.path("m0"));
    CHECK(z == init_params<float>(z.config, 5));
  }
  SUBCASE("divergence exits 2 without output") {
    r = run({"--config", ws.config, "pretrain", "--data", ws.data, "--lr",
             "1e30", "--out", ws.path("mx")});
    CHECK(r.code == kExitDivergence);
    CHECK(r.err.find("step") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.path("mx")));
  }
  SUBCASE("joint variant takes its band count from the data") {
    REQUIRE(run({"--config", ws.config, "--quiet", "pretrain", "--data", ws.data,
                 "--variant", "joint", "--out", ws.path("mj")}).code == 0);
    const SRModelParams j = load_checkpoint(ws.path("mj"));
    CHECK(j.config.variant == Variant::kJoint);
    CHECK(j.config.bands == 3);
  }
}

TEST_CASE("cli eval and adapt") {
  Workspace ws;
  const std::string m = ws.path("model");
  REQUIRE(run({"--config", ws.config, "--quiet", "pretrain", "--data", ws.data,
               "--out", m}).code == 0);
  const std::string test = ws.path("eval_test"), train = ws.path("eval_train");
  REQUIRE(run({"--quiet", "eval", "--data", ws.data, "--model", m, "--out", test,
               "--save-predictions"}).code == 0);
  REQUIRE(run({"--quiet", "eval", "--data", ws.data, "--model", m, "--split",
               "train", "--out", train}).code == 0);

  SUBCASE("train and test splits give different CSVs") {
    const auto a = csv_rows(fs::path(test) / "metrics.csv");
    const auto b = csv_rows(fs::path(train) / "metrics.csv");
    CHECK(a.size() == 2);
    CHECK(b.size() == 4);
    CHECK(a[1][0] == "img_0003");
    CHECK(slurp(fs::path(test) / "metrics.csv") !=
          slurp(fs::path(train) / "metrics.csv"));
  }
  SUBCASE("mpsnr column is the mean of the per-band CSV") {
    const auto m_rows = csv_rows(fs::path(train) / "metrics.csv");
    const auto b_rows = csv_rows(fs::path(train) / "band_psnr.csv");
    CHECK(b_rows[0] == std::vector<std::string>{"image_id", "band", "psnr_db"});
    CHECK(b_rows.size() == 1 + 3 * 3);
    for (std::size_t i = 1; i < m_rows.size(); ++i) {
      double sum = 0.0;
      int n = 0;
      for (std::size_t k = 1; k < b_rows.size(); ++k) {
        if (b_rows[k][0] == m_rows[i][0]) {
          sum += std::stod(b_rows[k][2]);
          ++n;
        }
      }
      REQUIRE(n == 3);
      // Both files carry 6 significant digits, so agreement is to that
      // resolution: half a unit in the 6th digit of each side.
      const double mpsnr = std::stod(m_rows[i][3]);
      CHECK(std::abs(sum / n - mpsnr) <= 1e-5 * std::abs(mpsnr));
    }
  }
  SUBCASE("identical predictions score zero error") {
    REQUIRE(run({"--quiet", "eval", "--data", ws.data, "--split", "all",
                 "--predictions", ws.data, "--out", ws.path("ident")}).code == 0);
    const auto rows = csv_rows(fs::path(ws.path("ident")) / "metrics.csv");
    REQUIRE(rows.size() == 5);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i][2] == "0");
      CHECK(rows[i][3] == "120");
      CHECK(rows[i][4] == "0");
    }
  }
  SUBCASE("adapt with zero steps reproduces the source prediction") {
    const std::string lr = (fs::path(test) / "inputs" / "img_0003").string();
    const std::string out = ws.path("adapt0");
    REQUIRE(run({"--quiet", "adapt", "--model", m, "--image", lr, "--steps", "0",
                 "--out", out}).code == 0);
    CHECK(slurp(fs::path(out) / "prediction" / "data.f32") ==
          slurp(fs::path(test) / "predictions" / "img_0003" / "data.f32"));
    CHECK(load_checkpoint(fs::path(out) / "teacher") == load_checkpoint(m));
    CHECK(csv_rows(fs::path(out) / "ttt_log.csv").size() == 1);
  }
  SUBCASE("adapt outputs and determinism") {
    const std::string lr = (fs::path(test) / "inputs" / "img_0003").string();
    for (const char* name : {"a1", "a2"}) {
      REQUIRE(run({"--config", ws.config, "--quiet", "--seed", "3", "adapt",
                   "--model", m, "--image", lr, "--lr", "1e-3", "--out",
                   ws.path(name)}).code == 0);
    }
    CHECK(tree(ws.path("a1")) == tree(ws.path("a2")));
    const auto log = csv_rows(fs::path(ws.path("a1")) / "ttt_log.csv");
    REQUIRE(log.size() == 1 + 4);
    CHECK(log[0] == std::vector<std::string>{"step", "phase", "l1", "sstv", "total"});
    CHECK(log[1][1] == "pseudo");
    CHECK(log[2][1] == "mixup");
    CHECK(load_checkpoint(fs::path(ws.path("a1")) / "student") !=
          load_checkpoint(m));
    const HSICube pred = load_cube(fs::path(ws.path("a1")) / "prediction");
    CHECK(pred.height() == 16);
    CHECK(pred.bands() == 3);
  }
  SUBCASE("eval --adapt matches adapt per image and ignores the thread count") {
    REQUIRE(run({"--config", ws.config, "--quiet", "eval", "--data", ws.data,
                 "--split", "all", "--model", m, "--adapt", "--out",
                 ws.path("ea1"), "--save-predictions"}).code == 0);
    setenv("HSITTT_THREADS", "3", 1);
    const Run r = run({"--config", ws.config, "--quiet", "eval", "--data",
                       ws.data, "--split", "all", "--model", m, "--adapt",
                       "--out", ws.path("ea3"), "--save-predictions"});
    setenv("HSITTT_THREADS", "0", 1);
    const Run bad = run({"eval", "--data", ws.data, "--bicubic", "--out",
                         ws.path("eb")});
    unsetenv("HSITTT_THREADS");
    REQUIRE(r.code == 0);
    CHECK(bad.code == kExitValidation);
    CHECK(tree(ws.path("ea1")) == tree(ws.path("ea3")));

    const std::string lr = (fs::path(ws.path("ea1")) / "inputs" / "img_0001").string();
    REQUIRE(run({"--config", ws.config, "--quiet", "adapt", "--model", m,
                 "--image", lr, "--out", ws.path("one")}).code == 0);
    CHECK(slurp(fs::path(ws.path("one")) / "prediction" / "data.f32") ==
          slurp(fs::path(ws.path("ea1")) / "predictions" / "img_0001" / "data.f32"));
  }
  SUBCASE("out-of-range input needs --clamp") {
    save_cube(HSICube::create(Volume<float>(3, 8, 8, 0.5f)), ws.path("hot"));
    {
      std::fstream f(fs::path(ws.path("hot")) / "data.f32",
                     std::ios::binary | std::ios::in | std::ios::out);
      const float hot = 1.5f;
      f.seekp(5 * sizeof(float));
      f.write(reinterpret_cast<const char*>(&hot), sizeof hot);
    }
    CHECK(run({"--quiet", "adapt", "--model", m, "--image", ws.path("hot"),
               "--steps", "0", "--out", ws.path("h1")}).code == kExitValidation);
    CHECK(run({"--quiet", "--clamp", "adapt", "--model", m, "--image",
               ws.path("hot"), "--steps", "0", "--out", ws.path("h2")}).code == 0);
  }
}

TEST_CASE("cli report") {
  Workspace ws;
  const std::string m = ws.path("model");
  REQUIRE(run({"--config", ws.config, "--quiet", "pretrain", "--data", ws.data,
               "--out", m}).code == 0);
  REQUIRE(run({"--config", ws.config, "--quiet", "eval", "--data", ws.data,
               "--split", "all", "--model", m, "--out", ws.path("src"),
               "--save-predictions"}).code == 0);
  REQUIRE(run({"--config", ws.config, "--quiet", "eval", "--data", ws.data,
               "--split", "all", "--model", m, "--adapt", "--lr", "1e-3",
               "--out", ws.path("ad"), "--save-predictions"}).code == 0);

  const fs::path out = ws.path("report");
  const Run r = run({"--quiet", "report", "--metrics",
                     ws.path("src") + "/metrics.csv", "--metrics",
                     ws.path("ad") + "/metrics.csv", "--log",
                     m + "/train_log.csv", "--log",
                     ws.path("ad") + "/ttt_logs/img_0000.csv", "--gt",
                     ws.data + "/img_0000", "--source",
                     ws.path("src") + "/predictions/img_0000", "--adapted",
                     ws.path("ad") + "/predictions/img_0000", "--out",
                     out.string()});
  REQUIRE(r.code == 0);

  const auto src = read_metrics_csv(ws.path("src") + "/metrics.csv");
  const auto ad = read_metrics_csv(ws.path("ad") + "/metrics.csv");
  const auto cmp = csv_rows(out / "comparison.csv");
  REQUIRE(cmp.size() == 1 + 4 + 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(cmp[i + 1][0] == src[i].image_id);
    CHECK(std::stod(cmp[i + 1][6]) ==
          doctest::Approx(ad[i].mpsnr - src[i].mpsnr).epsilon(1e-4));
    CHECK(std::stod(cmp[i + 1][3]) ==
          doctest::Approx(ad[i].rmse - src[i].rmse).epsilon(1e-4));
  }
  CHECK(cmp[5][0] == "mean");

  for (const char* png : {"loss_train_log.png", "loss_img_0000.png"}) {
    CHECK(fs::exists(out / png));
  }
  for (const char* png : {"composite_gt.png", "composite_source.png",
                          "composite_adapted.png"}) {
    const RgbImage img = read_png(out / png);
    CHECK(img.width == 16);
    CHECK(img.height == 16);
  }
  const std::string md = slurp(out / "summary.md");
  CHECK(md.find("bands 2, 1, 0") != std::string::npos);
  CHECK(md.find("**mean**") != std::string::npos);

  SUBCASE("single CSV gives a plain table") {
    REQUIRE(run({"--quiet", "report", "--metrics", ws.path("src") + "/metrics.csv",
                 "--out", ws.path("r1")}).code == 0);
    CHECK_FALSE(fs::exists(fs::path(ws.path("r1")) / "comparison.csv"));
    CHECK(slurp(fs::path(ws.path("r1")) / "summary.md").find("img_0003") !=
          std::string::npos);
  }
  SUBCASE("empty CSV is a validation error with no output") {
    std::ofstream(ws.path("empty.csv"));
    CHECK(run({"report", "--metrics", ws.path("empty.csv"), "--out",
               ws.path("r2")}).code == kExitValidation);
    CHECK_FALSE(fs::exists(ws.path("r2")));
  }
  SUBCASE("bad band choice") {
    CHECK(run({"report", "--metrics", ws.path("src") + "/metrics.csv", "--gt",
               ws.data + "/img_0000", "--bands", "0,1,3", "--out",
               ws.path("r3")}).code == kExitValidation);
    CHECK(run({"--quiet", "report", "--metrics", ws.path("src") + "/metrics.csv",
               "--gt", ws.data + "/img_0000", "--bands", "0,0,2", "--out",
               ws.path("r4")}).code == 0);
  }
}
