#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fireset/errors.hpp"
#include "fireset/hash.hpp"
#include "fireset/io.hpp"
#include "fireset/rng.hpp"

using namespace fireset;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "fireset_io_test";
  fs::create_directories(dir);
  return dir;
}

Entity random_entity(std::uint64_t seed, std::size_t H = 32, std::size_t T = 12,
                     std::size_t T_h = 8) {
  Entity e;
  e.F = canonical_channels().size();
  e.T = T;
  e.T_h = T_h;
  e.H = H;
  e.W = H;
  e.channels = canonical_channels();
  e.valid_box = default_valid_box(e.H, e.W);
  e.data.resize(e.F * e.T * e.H * e.W);
  Rng rng(seed);
  for (auto& v : e.data) v = static_cast<float>(rng.uniform(-1.0, 3.0));
  return e;
}

}  // namespace

TEST_CASE("entity encode/decode round trip is exact") {
  const Entity e = random_entity(7);
  const auto bytes = encode_entity(e);
  const Entity back = decode_entity(bytes);

  CHECK(back.F == e.F);
  CHECK(back.T == e.T);
  CHECK(back.T_h == e.T_h);
  CHECK(back.H == e.H);
  CHECK(back.W == e.W);
  CHECK(back.channels == e.channels);
  CHECK(back.valid_box == e.valid_box);
  REQUIRE(back.data.size() == e.data.size());
  CHECK(std::memcmp(back.data.data(), e.data.data(), e.data.size() * 4) == 0);

  // re-encoding reproduces the byte stream exactly
  CHECK(encode_entity(back) == bytes);
}

TEST_CASE("entity file round trip through disk") {
  const auto dir = temp_dir();
  const auto path = dir / "entity_roundtrip.bin";
  const Entity e = random_entity(21, 64, 24, 16);
  write_entity(path, e);
  const Entity back = read_entity(path);
  CHECK(back.data == e.data);
  CHECK(fnv1a64_file(path) == fnv1a64(encode_entity(e).data(), encode_entity(e).size()));

  // valid_box is derived from the grid, not stored
  CHECK(back.valid_box == default_valid_box(64, 64));
  fs::remove(path);
}

TEST_CASE("entity header layout is stable") {
  Entity e = random_entity(3, 16, 4, 2);
  const auto bytes = encode_entity(e);
  REQUIRE(bytes.size() > 28);
  CHECK(bytes[0] == 'W');
  CHECK(bytes[1] == 'I');
  CHECK(bytes[2] == 'S');
  CHECK(bytes[3] == 'P');
  // version 1, then F=7 little-endian
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 7);
  // first channel record: len=7, "dryness"
  CHECK(bytes[28] == 7);
  CHECK(bytes[32] == 'd');
}

TEST_CASE("entity decode rejects malformed input") {
  const Entity e = random_entity(5, 16, 4, 2);
  auto bytes = encode_entity(e);

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_entity(bytes), IoError);
  }
  SUBCASE("unsupported version") {
    bytes[4] = 9;
    CHECK_THROWS_AS(decode_entity(bytes), IoError);
  }
  SUBCASE("truncated payload") {
    bytes.resize(bytes.size() - 5);
    CHECK_THROWS_AS(decode_entity(bytes), IoError);
  }
  SUBCASE("trailing garbage") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_entity(bytes), IoError);
  }
  SUBCASE("empty") {
    CHECK_THROWS_AS(decode_entity({}), IoError);
  }
}

TEST_CASE("read_entity on a missing path throws IoError") {
  CHECK_THROWS_AS(read_entity(temp_dir() / "does_not_exist.bin"), IoError);
}

TEST_CASE("model config json round trip") {
  ModelConfig c;
  c.Q = 6;
  c.L = 3;
  c.d_e = 16;
  c.n_heads = 2;
  c.H = 32;
  c.W = 32;
  c.memory_steps = 2;
  c.dropout = 0.05;
  c.seed = 99;
  c.alpha_schedule = {{8, 0.75}, {16, 1.0}};

  const auto j = model_config_json(c);
  const ModelConfig back = model_config_from_json(j);
  CHECK(back.Q == c.Q);
  CHECK(back.L == c.L);
  CHECK(back.d_e == c.d_e);
  CHECK(back.n_heads == c.n_heads);
  CHECK(back.H == c.H);
  CHECK(back.memory_steps == c.memory_steps);
  CHECK(back.dropout == doctest::Approx(c.dropout));
  CHECK(back.seed == c.seed);
  CHECK(back.alpha_schedule == c.alpha_schedule);
  CHECK(model_config_json(back) == j);
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
  ModelConfig c;
  c.Q = 4;
  c.L = 2;
  c.d_e = 8;
  c.n_heads = 2;
  c.H = 32;
  c.W = 32;
  c.memory_steps = 2;
  c.seed = 31;

  auto net = Network<float>::init(c);
  // dirty the weights so we are not just reloading the init stream
  Rng rng(5);
  for (auto& [name, t] : net.params.all())
    for (auto& v : t.values_mut()) v += static_cast<float>(rng.uniform(-0.5, 0.5));

  const auto dir = temp_dir();
  const auto path = dir / "ckpt.bin";
  CheckpointMeta meta;
  meta.seed = 1234;
  meta.step = 777;
  meta.val_map = 0.4375;
  write_checkpoint(path, net, meta);

  const auto loaded = read_checkpoint(path);
  CHECK(loaded.meta.seed == meta.seed);
  CHECK(loaded.meta.step == meta.step);
  CHECK(loaded.meta.val_map == meta.val_map);
  CHECK(loaded.net.cfg.Q == c.Q);
  CHECK(loaded.net.params.count() == net.params.count());
  for (const auto& [name, t] : net.params.all()) {
    const auto& lt = loaded.net.params.at(name);
    REQUIRE(lt.size() == t.size());
    CHECK(std::memcmp(lt.values().data(), t.values().data(), t.size() * 4) == 0);
  }

  // identical save from the reloaded net is byte-identical
  const auto path2 = dir / "ckpt2.bin";
  write_checkpoint(path2, loaded.net, loaded.meta);
  CHECK(fnv1a64_file(path) == fnv1a64_file(path2));
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint reader rejects corruption") {
  ModelConfig c;
  c.Q = 2;
  c.L = 1;
  c.d_e = 8;
  c.n_heads = 2;
  c.H = 32;
  c.W = 32;
  c.memory_steps = 1;
  auto net = Network<float>::init(c);

  const auto dir = temp_dir();
  const auto path = dir / "ckpt_bad.bin";
  write_checkpoint(path, net, {});

  auto text = read_text_file(path);
  SUBCASE("magic") {
    text[0] = 'Z';
    write_text_file(path, text);
    CHECK_THROWS_AS(read_checkpoint(path), IoError);
  }
  SUBCASE("truncated block") {
    text.resize(text.size() - 8);
    write_text_file(path, text);
    CHECK_THROWS_AS(read_checkpoint(path), IoError);
  }
  fs::remove(path);
}

TEST_CASE("pgm writer emits a valid P5 header") {
  const auto dir = temp_dir();
  const auto path = dir / "img.pgm";
  std::vector<std::uint8_t> px(6 * 4);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 10);
  write_pgm(path, 6, 4, px);
  const auto text = read_text_file(path);
  CHECK(text.substr(0, 11) == "P5\n6 4\n255\n");
  CHECK(text.size() == 11 + px.size());
  CHECK_THROWS_AS(write_pgm(path, 5, 4, px), ShapeError);
  fs::remove(path);
}

TEST_CASE("text file round trip") {
  const auto dir = temp_dir();
  const auto path = dir / "note.txt";
  const std::string body = "alpha\nbeta\n";
  write_text_file(path, body);
  CHECK(read_text_file(path) == body);
  CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), IoError);
  fs::remove(path);
}
