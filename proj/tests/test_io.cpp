#include <doctest.h>

#include <filesystem>

#include "lcg/checkpoint.hpp"
#include "lcg/config.hpp"
#include "lcg/image_io.hpp"
#include "lcg/shard.hpp"

using namespace lcg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lcg_test_io";
  fs::create_directories(dir);
  return dir / name;
}

Shard sample_shard(std::size_t count, std::uint64_t seed) {
  Shard s;
  s.config = "[data]\nseed = " + std::to_string(seed) + "\n";
  if (count == 0) return s;
  std::vector<Scene> scenes;
  for (std::uint64_t i = 0; i < 8; ++i) scenes.push_back(gen_scene(derive_seed(seed, i), SceneConfig{}));
  Rng rng(seed);
  s.samples = build_pairs(scenes, PairConfig{}, count, rng);
  return s;
}

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.denoiser.image_size = 8;
  mc.denoiser.factor = 2;
  mc.denoiser.widths = {8, 16};
  mc.denoiser.blocks = {1, 1};
  mc.denoiser.cross = {true, true};
  mc.denoiser.time_dim = 4;
  mc.denoiser.embed_width = 8;
  mc.lcg.embed_dim = 5;
  mc.lcg.token_width = 8;
  return mc;
}

}  // namespace

TEST_CASE("shards roundtrip at 0, 1 and 1000 samples") {
  for (std::size_t n : {0, 1, 1000}) {
    const Shard s = sample_shard(n, 21 + n);
    const fs::path p = scratch("roundtrip.lcgs");
    write_shard(s, p);
    const Shard back = read_shard(p);
    CHECK(back == s);
    CHECK(back.samples.size() == n);
    CHECK(encode_shard(back) == read_file(p));
  }
}

TEST_CASE("truncated shards report the stopping offset") {
  const std::vector<std::uint8_t> bytes = encode_shard(sample_shard(3, 5));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::span<const std::uint8_t> head(bytes.data(), cut);
    try {
      (void)decode_shard(head);
      FAIL("expected FormatError");
    } catch (const ChecksumError&) {
      FAIL("truncation must not look like a checksum failure");
    } catch (const FormatError& e) {
      CHECK(e.offset() <= cut);
      CHECK(std::string(e.what()).find("at byte") != std::string::npos);
    }
  }
}

TEST_CASE("a flipped payload byte fails the checksum") {
  std::vector<std::uint8_t> bytes = encode_shard(sample_shard(3, 6));
  bytes[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_shard(bytes), ChecksumError);
  std::vector<std::uint8_t> wrong_magic = encode_shard(sample_shard(1, 6));
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(decode_shard(wrong_magic), FormatError);
  std::vector<std::uint8_t> trailing = encode_shard(sample_shard(1, 6));
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_shard(trailing), FormatError);
}

TEST_CASE("crc32 of a known string") {
  const std::string s = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())) == 0xCBF43926u);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  const ModelConfig mc = tiny_model();
  Rng rng(7);
  std::vector<TrainingExample> examples;
  for (int n = 0; n < 4; ++n) {
    Image im(8, 8, 3, 0.25 * (n % 4));
    BinaryMask m(8, 8);
    m.set(n, true);
    examples.push_back(make_training_example(im, m, Category::Foreground, mc.denoiser));
  }
  TrainConfig tc;
  tc.batch_size = 2;
  tc.micro_batch = 1;
  Trainer trainer(mc, tc, DiffusionSchedule::linear(50), examples, init_model(mc, 3));
  trainer.step();
  for (Dtype dt : {Dtype::F64, Dtype::F32}) {
    const Checkpoint ck = make_checkpoint(trainer, "cfg text", dt);
    CHECK(ck.step == 1);
    const fs::path a = scratch("a.lcgc"), b = scratch("b.lcgc");
    save_checkpoint(ck, a);
    const Checkpoint back = load_checkpoint(a);
    CHECK(back == ck);
    save_checkpoint(back, b);
    CHECK(read_file(a) == read_file(b));
  }

  // F64 restores exactly.
  const Checkpoint ck = make_checkpoint(trainer, "cfg text");
  Trainer other(mc, tc, DiffusionSchedule::linear(50), examples, init_model(mc, 9));
  restore_trainer(other, ck);
  CHECK(flatten(other.params()) == flatten(trainer.params()));
  CHECK(other.rng_state() == trainer.rng_state());
  CHECK(flatten(checkpoint_weights(ck, mc)) == flatten(trainer.params()));

  // Byte 11 lies inside the config text, which the decoder does not interpret.
  std::vector<std::uint8_t> bytes = encode_checkpoint(ck);
  bytes[11] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(bytes), ChecksumError);
  CHECK_THROWS_AS(checkpoint_weights(ck, ModelConfig{}), std::exception);
}

TEST_CASE("config text roundtrips through the canonical form") {
  RunConfig c;
  set_key(c, "model.tau", "4");
  set_key(c, "train.seed", "99");
  set_key(c, "brush.max_ratio", "0.45");
  set_key(c, "sample.guidance_mode", "category_contrast");
  const std::string text = to_text(c);
  const RunConfig back = parse_config(text);
  CHECK(to_text(back) == text);
  CHECK(back.model.denoiser.tau == 4.0);
  CHECK(back.train.seed == 99);
  CHECK(back.pairs.brush.max_ratio == 0.45);
  CHECK(back.sampler.mode == GuidanceMode::CategoryContrast);
  CHECK(text.rfind("# lcg ", 0) == 0);
}

TEST_CASE("training identity ignores run length and threads") {
  RunConfig a, b;
  set_key(b, "train.steps", "17");
  set_key(b, "train.threads", "4");
  set_key(b, "sample.guidance_scale", "3");
  CHECK(training_identity(a) == training_identity(b));
  set_key(b, "train.learning_rate", "0.5");
  CHECK(training_identity(a) != training_identity(b));
}

TEST_CASE("config errors name the offending keys") {
  CHECK_THROWS_AS(parse_config("[model]\nwidthz = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nowhere]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nsteps = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[sample]\nguidance_scale = 0.5\n"), ConfigError);
  try {
    (void)parse_config("[brush]\nmin_ratio = 0.7\nmax_ratio = 0.3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("brush.min_ratio") != std::string::npos);
    CHECK(msg.find("brush.max_ratio") != std::string::npos);
  }
  try {
    (void)parse_config("[data]\nbogus = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("data.bogus") != std::string::npos);
  }
}

TEST_CASE("default configuration values") {
  const RunConfig c = parse_config("");
  CHECK(c.model.lcg.embed_dim == 20);
  CHECK(c.model.lcg.tokens == 1);
  CHECK(c.sampler.guidance_scale == 2.0);
  CHECK(c.model.denoiser.guidance_scale == 2.0);
  CHECK(c.pairs.compose.p_rand == 0.5);
  CHECK(c.pairs.compose.p_obj == 0.5);
  CHECK(c.train.p_drop == 0.1);
  CHECK(c.model.denoiser.tau == 16.0);
  CHECK(c.model.denoiser.factor == 4);
  CHECK(c.model.denoiser.image_size == 32);
  CHECK(c.timesteps == 1000);
  CHECK(c.train.steps == 2000);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.optimizer.beta1 == 0.9);
  CHECK(c.train.optimizer.beta2 == 0.999);
  CHECK_FALSE(c.sampler.repaint_known);
  CHECK(c.sampler.mode == GuidanceMode::ConditionalVsNull);
}

TEST_CASE("images and masks roundtrip through netpbm") {
  Rng rng(8);
  std::uniform_int_distribution<int> level(0, 255);
  for (std::size_t ch : {1, 3}) {
    Image im(5, 7, ch);
    for (double& p : im.pixels) p = level(rng) / 255.0;
    const fs::path p = scratch(ch == 3 ? "im.ppm" : "im.pgm");
    write_image(im, p);
    CHECK(read_image(p) == im);
    CHECK(decode_pnm(encode_pnm(im)) == im);
  }
  BinaryMask m(6, 4);
  m.set(2, 3, true);
  m.set(5, 0, true);
  const fs::path mp = scratch("mask.pgm");
  write_mask(m, mp);
  CHECK(read_mask(mp) == m);

  Image gray(2, 2, 1, 0.5);
  const fs::path gp = scratch("gray.pgm");
  write_image(gray, gp);
  CHECK_THROWS(read_mask(gp));
  const std::vector<std::uint8_t> junk{'P', '9', '\n'};
  CHECK_THROWS(decode_pnm(junk));
}
