#include <doctest.h>

#include <cmath>
#include <algorithm>

#include <json.hpp>

#include "protoncast/error.hpp"
#include "protoncast/trainer.hpp"
#include "support.hpp"

using namespace protoncast;
using namespace testing;

namespace {

ModelConfig small(Mode mode, Variant v = Variant::orig) { return make_config({Features::P_XR, v, mode}, 8, 4, 12, 12); }

// Smooth decaying profiles, the shape the model sees after windowing.
std::vector<Sample> decay_samples(std::size_t n, std::uint64_t seed, const ModelConfig& cfg) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double level = rng.uniform(1.0, 2.5), rate = rng.uniform(0.01, 0.05);
    Sample s;
    s.event_id = "D" + std::to_string(k);
    s.input = Tensor({cfg.input_len, cfg.feature_count()});
    for (std::size_t t = 0; t < cfg.input_len; ++t) {
      s.input.at(t, 0) = level - rate * t;
      if (cfg.feature_count() == 2) s.input.at(t, 1) = 0.5 - 0.01 * t;
    }
    for (std::size_t t = 0; t < cfg.output_len; ++t) s.target.push_back(level - rate * (cfg.input_len + t));
    out.push_back(std::move(s));
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("training spec validation") {
  const ModelConfig cfg = small(Mode::OS);
  const auto data = decay_samples(4, 1, cfg);
  TrainSpec spec;
  spec.epochs = 0;
  CHECK(code_of([&] { train(data, cfg, spec); }) == ErrorCode::InvalidArgument);
  spec = {};
  spec.batch_size = 0;
  CHECK(code_of([&] { train(data, cfg, spec); }) == ErrorCode::InvalidArgument);
  spec = {};
  spec.lr = 0;
  CHECK(code_of([&] { train(data, cfg, spec); }) == ErrorCode::InvalidArgument);
  spec = {};
  spec.clip_norm = -1.0;
  CHECK(code_of([&] { train(data, cfg, spec); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { train({}, cfg, TrainSpec{}); }) == ErrorCode::InvalidArgument);
  auto short_target = data;
  short_target[2].target.pop_back();
  CHECK(code_of([&] { train(short_target, cfg, TrainSpec{}); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("epoch order") {
  const auto a = epoch_order(50, 7, 3);
  CHECK(a == epoch_order(50, 7, 3));
  CHECK(a != epoch_order(50, 7, 4));
  CHECK(a != epoch_order(50, 8, 3));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(epoch_order(1, 0, 1) == std::vector<std::size_t>{0});
  CHECK(epoch_order(0, 0, 1).empty());
}

TEST_CASE("training is deterministic and reduces the loss") {
  for (Mode mode : {Mode::OS, Mode::AR}) {
    const ModelConfig cfg = small(mode);
    const auto data = decay_samples(10, 2, cfg);
    TrainSpec spec;
    spec.epochs = 30;
    spec.batch_size = 4;
    spec.lr = 1e-2;
    spec.seed = 11;
    std::vector<EpochRecord> log;
    const auto a = train(data, cfg, spec, [&](const EpochRecord& r) { log.push_back(r); });
    const auto b = train(data, cfg, spec);
    CHECK(a.params == b.params);
    CHECK(a.history.epoch_loss == b.history.epoch_loss);
    REQUIRE(log.size() == 30);
    CHECK(log.front().epoch == 1);
    CHECK(log.back().epoch == 30);
    CHECK(log.back().mean_loss == a.history.epoch_loss.back());
    CHECK(a.history.epoch_loss.back() < 0.5 * a.history.epoch_loss.front());

    spec.seed = 12;
    CHECK_FALSE(train(data, cfg, spec).params == a.params);
  }
}

TEST_CASE("a single full batch gives a settling loss curve") {
  // Full-batch Adam with a small step: after a short warm-up the loss should
  // not go back up in most seeded runs.
  const ModelConfig cfg = small(Mode::OS);
  const auto data = decay_samples(6, 3, cfg);
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainSpec spec;
    spec.epochs = 60;
    spec.batch_size = data.size();
    spec.lr = 1e-3;
    spec.seed = seed;
    const auto h = train(data, cfg, spec).history.epoch_loss;
    bool ok = true;
    for (std::size_t i = 6; i < h.size(); ++i) ok = ok && h[i] <= h[i - 1];
    monotone += ok;
  }
  CHECK(monotone >= 9);
}

TEST_CASE("non-finite loss is raised") {
  const ModelConfig cfg = small(Mode::OS);
  auto data = decay_samples(3, 4, cfg);
  data[1].target[3] = 1e200;
  TrainSpec spec;
  spec.epochs = 2;
  spec.batch_size = 1;
  try {
    train(data, cfg, spec);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("gradient clipping changes the trajectory but stays deterministic") {
  const ModelConfig cfg = small(Mode::AR);
  const auto data = decay_samples(6, 5, cfg);
  TrainSpec spec;
  spec.epochs = 5;
  spec.batch_size = 3;
  spec.lr = 1e-2;
  const auto plain = train(data, cfg, spec);
  spec.clip_norm = 1e-3;
  const auto clipped = train(data, cfg, spec);
  CHECK_FALSE(plain.params == clipped.params);
  CHECK(clipped.params == train(data, cfg, spec).params);
}

TEST_CASE("epoch log line") {
  const auto j = nlohmann::json::parse(epoch_log_line({3, 0.25, 1.5}));
  CHECK(j.at("epoch") == 3);
  CHECK(j.at("mean_loss") == 0.25);
  CHECK(j.at("wall_seconds") == 1.5);
}

TEST_CASE("checkpoints") {
  const ModelConfig cfg = small(Mode::AR, Variant::orig);
  TrainSpec spec;
  spec.epochs = 3;
  spec.seed = 9;
  spec.clip_norm = 2.0;
  const auto data = decay_samples(5, 6, cfg);
  const auto trained = train(data, cfg, spec);
  Checkpoint ck{trained.params, cfg, spec, {3, trained.history.epoch_loss.back(), cfg.preprocess()}};
  ck.meta.preprocess.half_window = 5;
  const auto dir = temp_dir("checkpoints");
  const auto path = dir / "m.ckpt";

  SUBCASE("round trip is exact") {
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    CHECK(back.params == ck.params);
    CHECK(back.config == ck.config);
    CHECK(back.train == ck.train);
    CHECK(back.meta.epoch == 3);
    CHECK(back.meta.loss == ck.meta.loss);
    CHECK(back.meta.preprocess.half_window == 5);
    for (const auto& s : data) CHECK(forward(s, back.params, back.config) == forward(s, ck.params, cfg));
    CHECK(serialize_checkpoint(back) == serialize_checkpoint(ck));
  }
  SUBCASE("special values survive") {
    ck.params.at("out.b")[0] = -0.0;
    ck.params.at("out.w")[0] = 4.9406564584124654e-324;
    const auto back = parse_checkpoint(serialize_checkpoint(ck));
    CHECK(std::signbit(back.params.at("out.b")[0]));
    CHECK(back.params.at("out.w")[0] == 4.9406564584124654e-324);
  }

  const std::string bytes = serialize_checkpoint(ck);
  const auto nl = bytes.find('\n');
  auto manifest = nlohmann::json::parse(bytes.substr(0, nl));
  const std::string blob = bytes.substr(nl + 1);

  SUBCASE("truncation") {
    CHECK(code_of([&] { parse_checkpoint(bytes.substr(0, bytes.size() - 8)); }) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of([&] { parse_checkpoint(bytes.substr(0, nl / 2)); }) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of([&] { parse_checkpoint(bytes.substr(0, nl + 1)); }) == ErrorCode::CorruptCheckpoint);
  }
  SUBCASE("manifest for a larger model") {
    manifest["config"]["hidden"] = 16;
    CHECK(code_of([&] { parse_checkpoint(manifest.dump() + "\n" + blob); }) == ErrorCode::CorruptCheckpoint);
  }
  SUBCASE("flipped payload byte") {
    std::string bad = bytes;
    bad[nl + 100] ^= 0x01;
    try {
      parse_checkpoint(bad);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CorruptCheckpoint);
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }
  SUBCASE("version") {
    manifest["version"] = kCheckpointVersion + 1;
    CHECK(code_of([&] { parse_checkpoint(manifest.dump() + "\n" + blob); }) == ErrorCode::VersionMismatch);
  }
  SUBCASE("not a checkpoint") {
    CHECK(code_of([&] { parse_checkpoint("{\"a\":1}\n"); }) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of([&] { parse_checkpoint("garbage\n"); }) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of([&] { load_checkpoint(dir / "missing.ckpt"); }) == ErrorCode::Io);
  }
  SUBCASE("parameters must match the config") {
    Checkpoint other = ck;
    other.config.hidden = 16;
    CHECK_THROWS_AS(serialize_checkpoint(other), Error);
  }
}
