#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fundus/checkpoint.hpp"
#include "fundus/csv.hpp"
#include "fundus/image_io.hpp"
#include "fundus/manifest.hpp"
#include "fundus/model.hpp"
#include "fundus/pretrain.hpp"
#include "fundus/rng.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace fundus;

namespace {

std::string cli_binary() {
  const char* env = std::getenv("FUNDUS_CL_BIN");
  REQUIRE_MESSAGE(env != nullptr, "FUNDUS_CL_BIN must point at fundus-cl");
  return env;
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_binary() + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTinyConfig = R"(
seed = 11

[data]
synth_n = 24
synth_size = 16
synth_styles = 3

[augment]
out_size = 16
crop_scale = [0.8, 1.0]

[pretrain]
batch_size = 8
max_epochs = 2
stage_blocks = [1, 1]
stage_channels = [8, 16]
embedding_dim = 16
input_size = 16
proj_hidden_dim = 16
proj_output_dim = 8

[finetune]
epochs = 2
batch_size = 8

[eval]
bootstrap_resamples = 200

[sweep]
fractions = [1.0]
seeds = 1
)";

std::string sha_file(const std::string& path) {
  return std::to_string(fnv1a64(read_text_file(path)));
}

}  // namespace

TEST_CASE("synth is balanced and byte-deterministic") {
  testutil::TempDir tmp("clisynth");
  write_text_file(tmp.file("run.toml"), kTinyConfig);
  const std::string cfg = " --config " + tmp.file("run.toml");
  CHECK(run_cli(cfg + " --out " + tmp.file("a") + " synth") == 0);
  CHECK(run_cli(cfg + " --out " + tmp.file("b") + " synth") == 0);

  const auto manifest = data::read_manifest_csv(tmp.file("a/manifest.csv"));
  CHECK(manifest.records.size() == 24);
  std::size_t referable = 0;
  for (const auto& r : manifest.records)
    referable += data::grade_to_referable(r.grade);
  CHECK(referable == 12);

  for (const auto& entry : fs::directory_iterator(tmp.file("a/img"))) {
    const auto rel = entry.path().filename().string();
    CHECK(sha_file(entry.path().string()) == sha_file(tmp.file("b/img/" + rel)));
  }
  // Style bank exists and feeds ingest cleanly.
  CHECK(fs::exists(tmp.file("a/styles")));
  CHECK(run_cli(cfg + " --out " + tmp.file("c") + " ingest --manifest " +
                tmp.file("a/manifest.csv")) == 0);
  const auto kept = data::read_manifest_csv(tmp.file("c/kept.csv"));
  CHECK(kept.records.size() == 24);  // default thresholds keep the fixture
}

TEST_CASE("ingest flags dark and missing images with reasons") {
  testutil::TempDir tmp("cliingest");
  write_text_file(tmp.file("run.toml"), kTinyConfig);

  data::DatasetManifest m;
  Rng rng(3);
  auto add = [&](const std::string& id, bool create, float level) {
    if (create) {
      Image img(16, 16);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = level > 0 ? static_cast<float>(level * rng.uniform()) : 0.f;
      ingest::save_png(tmp.file(id + ".png"), img);
    }
    data::FundusRecord r;
    r.image_id = id;
    r.image_uri = id + ".png";
    r.patient_id = id;
    r.grade = data::DRGrade{0};
    m.records.push_back(r);
  };
  add("ok", true, 1.0f);
  add("black", true, 0.f);
  add("gone", false, 0.f);
  data::write_manifest_csv(tmp.file("m.csv"), m);

  CHECK(run_cli(" --config " + tmp.file("run.toml") + " --out " +
                tmp.file("out") + " ingest --manifest " + tmp.file("m.csv")) ==
        0);
  const auto report = read_csv(tmp.file("out/exclusion_report.csv"));
  REQUIRE(report.rows.size() == 2);
  std::map<std::string, std::string> reasons;
  for (const auto& row : report.rows) reasons[row[0]] = row[1];
  CHECK(reasons["black"] == "luminance");
  CHECK(reasons["gone"] == "io");
}

TEST_CASE("malformed manifests exit with code 2") {
  testutil::TempDir tmp("clibad");
  write_text_file(tmp.file("run.toml"), kTinyConfig);
  write_text_file(tmp.file("bad.csv"),
                  "image_id,image_uri,grade,patient_id,eye\nx,u,7,p,OD\n");
  CHECK(run_cli(" --config " + tmp.file("run.toml") + " --out " +
                tmp.file("out") + " ingest --manifest " + tmp.file("bad.csv")) ==
        2);
  CHECK(run_cli(" --config " + tmp.file("run.toml") + " finetune --init cl") ==
        2);  // missing checkpoint
  CHECK(run_cli(" totally-unknown-command") == 2);
}

TEST_CASE("eval on an uninformative model reports AUC 0.5") {
  testutil::TempDir tmp("clieval");
  write_text_file(tmp.file("run.toml"), kTinyConfig);
  const std::string cfg = " --config " + tmp.file("run.toml");
  REQUIRE(run_cli(cfg + " --out " + tmp.file("data") + " synth") == 0);

  // Zero-weight head scores every image 0.5.
  nn::EncoderConfig enc_cfg;
  enc_cfg.stages = {{1, 8}, {1, 16}};
  enc_cfg.embedding_dim = 16;
  enc_cfg.input_size = 16;
  nn::ClassifierNet model(enc_cfg);
  model.init(2);
  const auto* head_w = model.registry().find("head.w");
  const auto* head_b = model.registry().find("head.b");
  for (std::size_t i = 0; i < head_w->size; ++i)
    model.params()[head_w->offset + i] = 0.f;
  for (std::size_t i = 0; i < head_b->size; ++i)
    model.params()[head_b->offset + i] = 0.f;
  ssl::Checkpoint ckpt = ssl::snapshot_params(model.registry(), model.params());
  nlohmann::json extra;
  extra["encoder"] = nlohmann::json::parse(ssl::encoder_config_json(enc_cfg));
  ckpt.extra_json = extra.dump();
  ssl::save_checkpoint(ckpt, tmp.file("flat.fnck"));

  REQUIRE(run_cli(cfg + " --out " + tmp.file("ev") + " eval --model " +
                  tmp.file("flat.fnck") + " --test " +
                  tmp.file("data/manifest.csv")) == 0);
  const auto report =
      nlohmann::json::parse(read_text_file(tmp.file("ev/report.json")));
  CHECK(report["auc"].get<double>() == doctest::Approx(0.5));
  CHECK(fs::exists(tmp.file("ev/roc.csv")));
  CHECK(fs::exists(tmp.file("ev/roc.svg")));
  CHECK(fs::exists(tmp.file("ev/scores.csv")));

  // roc.csv is sorted by descending threshold with monotone rates.
  const auto roc = read_csv(tmp.file("ev/roc.csv"));
  CHECK(roc.header == std::vector<std::string>{"threshold", "fpr", "tpr"});
  double prev_thr = std::numeric_limits<double>::infinity();
  double prev_fpr = -1, prev_tpr = -1;
  for (std::size_t i = 1; i < roc.rows.size(); ++i) {
    const double thr = std::stod(roc.rows[i][0]);
    CHECK(thr < prev_thr);
    prev_thr = thr;
    CHECK(std::stod(roc.rows[i][1]) >= prev_fpr);
    CHECK(std::stod(roc.rows[i][2]) >= prev_tpr);
    prev_fpr = std::stod(roc.rows[i][1]);
    prev_tpr = std::stod(roc.rows[i][2]);
  }
}

TEST_CASE("style-preview writes before/after pairs") {
  testutil::TempDir tmp("clistyle");
  write_text_file(tmp.file("run.toml"), kTinyConfig);
  const std::string cfg = " --config " + tmp.file("run.toml");
  REQUIRE(run_cli(cfg + " --out " + tmp.file("data") + " synth") == 0);

  // Same config with style_dir pointed at the generated styles.
  std::string rewritten = kTinyConfig;
  const std::string marker = "out_size = 16";
  const auto pos = rewritten.find(marker);
  REQUIRE(pos != std::string::npos);
  rewritten.insert(pos + marker.size(),
                   "\nstyle_dir = \"" + tmp.file("data/styles") + "\"");
  write_text_file(tmp.file("run2.toml"), rewritten);

  REQUIRE(run_cli(" --config " + tmp.file("run2.toml") + " --out " +
                  tmp.file("pv") + " style-preview --input " +
                  tmp.file("data/img/img00000.png") + " --n 2") == 0);
  CHECK(fs::exists(tmp.file("pv/preview_before.png")));
  CHECK(fs::exists(tmp.file("pv/preview_after_000.png")));
  CHECK(fs::exists(tmp.file("pv/preview_after_001.png")));
}

TEST_CASE("every run writes its resolved config with a matching digest") {
  testutil::TempDir tmp("clirun");
  write_text_file(tmp.file("run.toml"), kTinyConfig);
  REQUIRE(run_cli(" --config " + tmp.file("run.toml") + " --out " +
                  tmp.file("r1") + " synth") == 0);
  CHECK(fs::exists(tmp.file("r1/resolved.toml")));
  const auto resolved = read_text_file(tmp.file("r1/resolved.toml"));
  CHECK(resolved.find("synth_n = 24") != std::string::npos);
}
