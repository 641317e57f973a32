#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lcg/checkpoint.hpp"
#include "lcg/cli.hpp"
#include "lcg/config.hpp"
#include "lcg/image_io.hpp"
#include "lcg/pipeline.hpp"
#include "lcg/shard.hpp"

using namespace lcg;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTinyConfig = R"(# small end-to-end config
[model]
image_size = 16
factor = 4
widths = 8, 16
blocks = 1, 1
cross = true, true
time_dim = 4
embed_width = 8

[lcg]
embed_dim = 5

[diffusion]
timesteps = 50

[sample]
steps = 4

[train]
steps = 4
batch_size = 4
micro_batch = 2
checkpoint_every = 2

[data]
scenes = 8
train_samples = 12
eval_samples = 4
min_extent = 0.2
max_extent = 0.4
min_visible_pixels = 6
)";

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  setenv("LCG_LOG", "error", 1);
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lcg_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

// Tiny config plus generated shards in `dir/data`.
fs::path prepared(const std::string& name) {
  const fs::path dir = fresh_dir(name);
  const fs::path cfg = write_text(dir / "tiny.ini", kTinyConfig);
  REQUIRE(run({"datagen", "--config", cfg.string(), "--out", (dir / "data").string()}).code == 0);
  return dir;
}

std::string s(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("check suites and unknown suite names") {
  for (const char* suite : {"gla", "mask", "codec"}) {
    const Result r = run({"check", suite});
    CHECK(r.code == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
  }
  CHECK(run({"check", "nonsense"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
}

TEST_CASE("gradient suite prints its worst relative error") {
  const Result r = run({"check", "grad"});
  CHECK(r.code == 0);
  CHECK(r.out.find("rel") != std::string::npos);
}

TEST_CASE("datagen is byte-identical per seed and rejects bad configs") {
  const fs::path dir = fresh_dir("datagen");
  const fs::path cfg = write_text(dir / "tiny.ini", kTinyConfig);
  REQUIRE(run({"datagen", "--config", s(cfg), "--out", s(dir / "a")}).code == 0);
  REQUIRE(run({"datagen", "--config", s(cfg), "--out", s(dir / "b")}).code == 0);
  CHECK(read_file(dir / "a/train.lcgs") == read_file(dir / "b/train.lcgs"));
  CHECK(read_file(dir / "a/eval.lcgs") == read_file(dir / "b/eval.lcgs"));
  REQUIRE(run({"datagen", "--config", s(cfg), "--seed", "5", "--out", s(dir / "c")}).code == 0);
  CHECK(read_file(dir / "a/train.lcgs") != read_file(dir / "c/train.lcgs"));
  const Shard shard = read_shard(dir / "a/train.lcgs");
  CHECK(shard.samples.size() == 12);
  CHECK(parse_config(shard.config).scenes == 8);

  const fs::path bad = write_text(dir / "bad.ini", std::string(kTinyConfig) + "\n[brush]\nmin_ratio = 0.7\nmax_ratio = 0.2\n");
  const Result r = run({"datagen", "--config", s(bad), "--out", s(dir / "d")});
  CHECK(r.code == 2);
  CHECK(r.err.find("brush.min_ratio") != std::string::npos);
  CHECK(r.err.find("brush.max_ratio") != std::string::npos);
  const fs::path unknown = write_text(dir / "unknown.ini", "[model]\nwidht = 3\n");
  CHECK(run({"datagen", "--config", s(unknown)}).code == 2);
}

TEST_CASE("a 100-scene dataset passes the scanner") {
  const fs::path dir = fresh_dir("scan100");
  const fs::path cfg = write_text(dir / "c.ini", "[data]\nscenes = 100\ntrain_samples = 300\neval_samples = 20\n");
  const Result r = run({"datagen", "--config", s(cfg), "--out", s(dir / "data")});
  CHECK(r.code == 0);
  CHECK(r.out.find("0 violations") != std::string::npos);
  const Shard shard = read_shard(dir / "data/train.lcgs");
  CHECK(scan_samples(shard.samples, 0.02, 0.9).ok());
}

TEST_CASE("maskgen writes previews") {
  const fs::path dir = fresh_dir("maskgen");
  const fs::path cfg = write_text(dir / "tiny.ini", kTinyConfig);
  CHECK(run({"maskgen", "--config", s(cfg), "--count", "3", "--out", s(dir / "prev")}).code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "prev")) files += e.is_regular_file();
  CHECK(files >= 3);
}

TEST_CASE("a zero-step run checkpoints the initialization") {
  const fs::path dir = prepared("zero");
  const std::string cfg = s(dir / "tiny.ini");
  REQUIRE(run({"train", "--config", cfg, "--data", s(dir / "data/train.lcgs"), "--steps", "0", "--out", s(dir / "run")})
              .code == 0);
  const Checkpoint ck = load_checkpoint(dir / "run/step_000000.lcgc");
  const RunConfig rc = load_config(dir / "tiny.ini");
  CHECK(ck.step == 0);
  CHECK(flatten(checkpoint_weights(ck, rc.model)) == flatten(initial_weights(rc)));
  CHECK_FALSE(fs::exists(dir / "run/train.lock"));
}

TEST_CASE("resume reproduces an uninterrupted run and refuses a changed config") {
  const fs::path dir = prepared("resume");
  const std::string cfg = s(dir / "tiny.ini"), data = s(dir / "data/train.lcgs");
  REQUIRE(run({"train", "--config", cfg, "--data", data, "--out", s(dir / "full")}).code == 0);
  REQUIRE(run({"train", "--config", cfg, "--data", data, "--steps", "2", "--out", s(dir / "split")}).code == 0);
  REQUIRE(run({"train", "--config", cfg, "--data", data, "--resume", "--out", s(dir / "split")}).code == 0);
  CHECK(read_file(dir / "full/latest.lcgc") == read_file(dir / "split/latest.lcgc"));
  CHECK(read_file(dir / "full/step_000004.lcgc") == read_file(dir / "split/step_000004.lcgc"));

  std::ifstream log(dir / "split/loss.log");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 4);

  const Result changed = run({"train", "--config", cfg, "--data", data, "--seed", "5", "--resume", "--out", s(dir / "split")});
  CHECK(changed.code == 2);
  CHECK(changed.err.find("seed") != std::string::npos);
  // A fresh run into an occupied directory is a usage error.
  CHECK(run({"train", "--config", cfg, "--data", data, "--out", s(dir / "split")}).code == 2);
}

TEST_CASE("a held lock stops a second trainer") {
  const fs::path dir = prepared("lock");
  fs::create_directories(dir / "run");
  write_text(dir / "run/train.lock", "");
  const Result r = run({"train", "--config", s(dir / "tiny.ini"), "--data", s(dir / "data/train.lcgs"), "--out", s(dir / "run")});
  CHECK(r.code == 1);
  CHECK(r.err.find("locked") != std::string::npos);
  CHECK(fs::exists(dir / "run/train.lock"));
}

TEST_CASE("sample keeps known pixels and is deterministic") {
  const fs::path dir = prepared("sample");
  REQUIRE(run({"train", "--config", s(dir / "tiny.ini"), "--data", s(dir / "data/train.lcgs"), "--steps", "2", "--out",
               s(dir / "run")})
              .code == 0);
  const std::string ckpt = s(dir / "run/latest.lcgc");
  const Shard shard = read_shard(dir / "data/eval.lcgs");
  const Image& im = shard.samples.at(0).image;
  write_image(im, dir / "in.ppm");
  write_mask(BinaryMask(16, 16), dir / "zero.pgm");
  write_mask(shard.samples[0].mask, dir / "mask.pgm");

  REQUIRE(run({"sample", "--checkpoint", ckpt, "--image", s(dir / "in.ppm"), "--mask", s(dir / "zero.pgm"), "--out",
               s(dir / "same.ppm")})
              .code == 0);
  CHECK(read_file(dir / "same.ppm") == read_file(dir / "in.ppm"));

  for (const char* name : {"o1.ppm", "o2.ppm"}) {
    REQUIRE(run({"sample", "--checkpoint", ckpt, "--image", s(dir / "in.ppm"), "--mask", s(dir / "mask.pgm"),
                 "--category", "foreground", "--seed", "3", "--out", s(dir / name)})
                .code == 0);
  }
  CHECK(read_file(dir / "o1.ppm") == read_file(dir / "o2.ppm"));
  const Image filled = read_image(dir / "o1.ppm");
  for (std::size_t i = 0; i < shard.samples[0].mask.size(); ++i)
    if (!shard.samples[0].mask[i])
      for (std::size_t c = 0; c < 3; ++c) CHECK(filled.pixels[i * 3 + c] == im.pixels[i * 3 + c]);

  // Omitted scale means 2.0; an explicit 2.0 gives the same bytes.
  REQUIRE(run({"sample", "--checkpoint", ckpt, "--image", s(dir / "in.ppm"), "--mask", s(dir / "mask.pgm"),
               "--category", "foreground", "--seed", "3", "--scale", "2.0", "--out", s(dir / "o3.ppm")})
              .code == 0);
  CHECK(read_file(dir / "o1.ppm") == read_file(dir / "o3.ppm"));
  CHECK(parse_config(load_checkpoint(ckpt).config).sampler.guidance_scale == 2.0);

  write_image(Image(18, 18, 3, 0.5), dir / "odd.ppm");
  write_mask(BinaryMask(18, 18), dir / "odd.pgm");
  const Result odd = run({"sample", "--checkpoint", ckpt, "--image", s(dir / "odd.ppm"), "--mask", s(dir / "odd.pgm"),
                          "--out", s(dir / "x.ppm")});
  CHECK(odd.code == 2);
  CHECK(odd.err.find("divisible") != std::string::npos);
  CHECK(run({"sample", "--checkpoint", s(dir / "missing.lcgc"), "--image", s(dir / "in.ppm"), "--mask",
             s(dir / "zero.pgm"), "--out", s(dir / "x.ppm")})
            .code == 1);

  std::vector<std::uint8_t> bytes = read_file(ckpt);
  bytes[bytes.size() / 2] ^= 0x10;
  write_file(dir / "corrupt.lcgc", bytes);
  const Result corrupt = run({"sample", "--checkpoint", s(dir / "corrupt.lcgc"), "--image", s(dir / "in.ppm"), "--mask",
                              s(dir / "zero.pgm"), "--out", s(dir / "x.ppm")});
  CHECK(corrupt.code == 1);
  CHECK(corrupt.err.find("checksum") != std::string::npos);
}

TEST_CASE("eval writes a structured report") {
  const fs::path dir = prepared("eval");
  REQUIRE(run({"train", "--config", s(dir / "tiny.ini"), "--data", s(dir / "data/train.lcgs"), "--steps", "0", "--out",
               s(dir / "run")})
              .code == 0);
  const Result r = run({"eval", "--checkpoint", s(dir / "run/latest.lcgc"), "--data", s(dir / "data/eval.lcgs"), "--out",
                        s(dir / "report.json")});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("samples") == 4);
  CHECK(j.at("checkpoint_step") == 0);
  CHECK(j.at("overall").at("count") == 4);
  CHECK(j.at("overall").at("masked_l1").get<double>() > 0.0);
  CHECK(j.at("by_coverage").size() == 4);
  CHECK(parse_config(j.at("config").get<std::string>()).sampler.guidance_scale == 2.0);
  CHECK(nlohmann::json::parse(std::ifstream(dir / "report.json")) == j);
}

TEST_CASE("masked PSNR sentinels") {
  const BinaryMask all(4, 4, 1);
  const Image zero(4, 4, 3, 0.0), one(4, 4, 3, 1.0);
  CHECK(masked_psnr(one, one, all) == kPsnrCap);
  CHECK(masked_psnr(zero, one, all) == 0.0);
  CHECK(masked_l1(zero, one, all) == 1.0);
  CHECK(masked_l1(zero, one, BinaryMask(4, 4)) == 0.0);
  Image half(4, 4, 3, 0.5);
  CHECK(masked_psnr(zero, half, all) == doctest::Approx(10 * std::log10(4.0)));
}
