#include <doctest.h>

#include <sstream>
#include <string>

#include "neurozip/checkpoint.hpp"
#include "neurozip/error.hpp"
#include "neurozip/text.hpp"
#include "support.hpp"

using namespace neurozip;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.config.seed = 12345678901234ull;
  ckpt.config.lr = 0.003;
  ckpt.config.penalty = {0.5, 2.0, PenaltyNorm::l1};
  ckpt.config.activation = Activation::relu;
  ckpt.config.hidden_width = 5;
  ckpt.config.hidden_depth = 2;
  ckpt.config.mode = FitMode::neural_only;
  ckpt.config.features = FeatureMode::raw;
  ckpt.config.split = {0.7, 0.15, 0.15};
  ckpt.config.batch_size = 32;
  ckpt.config.zero_init_output = false;
  ckpt.model.zip = {0.1 + 0.2, 1.0 / 3.0, -1e-17, 0.5, 2.0 / 7.0, 1e300};
  ckpt.model.mix = {0.123456789012345678, -0.0};
  ckpt.model.features = FeatureMode::raw;
  ckpt.model.mlp = make_mlp(5, 2, Activation::relu, 77, false);
  ckpt.model.mlp.layers[1].bias[3] = 4.9e-324;
  ckpt.training = {120, 97, 1.25e-7, 3.5e-7, true};
  ckpt.manifest_hash = text::hex64(0x0123456789abcdefull);
  ckpt.metrics = MetricSummary{FitMode::zip_only, "val", 1e-9, 2e-9, 1.0, 1.0, 0.0};
  return ckpt;
}

std::string serialize(const Checkpoint& ckpt) {
  std::ostringstream out;
  write_checkpoint(ckpt, out);
  return out.str();
}

Checkpoint deserialize(const std::string& text) {
  std::istringstream in(text);
  return read_checkpoint(in);
}

std::string error_of(const std::string& text) {
  try {
    deserialize(text);
  } catch (const CheckpointError& e) {
    return e.what();
  }
  return "<no error>";
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("checkpoint round trip is exact and byte-stable") {
  const Checkpoint ckpt = sample_checkpoint();
  const std::string text = serialize(ckpt);
  const Checkpoint back = deserialize(text);
  CHECK(back.format_version == kCheckpointFormatVersion);
  CHECK(back.model == ckpt.model);
  CHECK(back.manifest_hash == "0123456789abcdef");
  CHECK(back.training.best_epoch == 97);
  CHECK(back.training.stopped_early);
  CHECK(back.training.best_val_loss == 1.25e-7);
  REQUIRE(back.metrics.has_value());
  CHECK(*back.metrics == *ckpt.metrics);
  CHECK(back.config.seed == ckpt.config.seed);
  CHECK(back.config.penalty.norm == PenaltyNorm::l1);
  CHECK(back.config.penalty.q_h == 2.0);
  CHECK(back.config.mode == FitMode::neural_only);
  CHECK(back.config.split == ckpt.config.split);
  CHECK(back.config.batch_size == 32);
  CHECK_FALSE(back.config.zero_init_output);
  CHECK(serialize(back) == text);
}

TEST_CASE("checkpoint without metrics") {
  Checkpoint ckpt = sample_checkpoint();
  ckpt.metrics.reset();
  const std::string text = serialize(ckpt);
  CHECK(text.find("metrics.") == std::string::npos);
  CHECK_FALSE(deserialize(text).metrics.has_value());
}

TEST_CASE("checkpoint layout") {
  const std::string text = serialize(sample_checkpoint());
  CHECK(text.rfind("neurozip-checkpoint\nformat_version 1\n", 0) == 0);
  CHECK(text.size() >= 4);
  CHECK(text.substr(text.size() - 4) == "end\n");
  CHECK(text.find("\nlayer 0 weight 2 5 ") != std::string::npos);
  CHECK(text.find("\nlayer 2 bias 1 2 ") != std::string::npos);
  CHECK(text.find("\nmlp.layers 3\n") != std::string::npos);
  CHECK(text.find("\nconfig.split 0.7,0.15,0.15\n") != std::string::npos);
}

TEST_CASE("corrupt checkpoints are rejected with a reason") {
  const std::string good = serialize(sample_checkpoint());
  CHECK(error_of("").find("header") != std::string::npos);
  CHECK(error_of("something else\n").find("header") != std::string::npos);
  CHECK(error_of(replace(good, "format_version 1", "format_version 2")).find("format_version 2") !=
        std::string::npos);
  CHECK(error_of(good.substr(0, good.size() - 4)).find("end") != std::string::npos);
  CHECK(error_of(good + "zip.alpha_p 1\n").find("after 'end'") != std::string::npos);
  CHECK(error_of(replace(good, "mix.a ", "mix.c ")).find("mix.a") != std::string::npos);
  CHECK(error_of(replace(good, "end\n", "colour blue\nend\n")).find("unknown key 'colour'") != std::string::npos);
  CHECK(error_of(replace(good, "end\n", "mix.b 0\nend\n")).find("duplicate key 'mix.b'") != std::string::npos);
  CHECK(error_of(replace(good, "mix.b -0", "mix.b zero")).find("'mix.b' must be a number") != std::string::npos);
  CHECK(error_of(replace(good, "config.norm l1", "config.norm l7")).find("line") != std::string::npos);
  CHECK(error_of(replace(good, "mlp.layers 3", "mlp.layers 4")).find("mlp.layers") != std::string::npos);
  CHECK(error_of(replace(good, "layer 0 weight 2 5", "layer 0 weight 2 6")).find("values") != std::string::npos);
  CHECK(error_of(replace(good, "layer 0 weight 2 5", "layer 0 weight 5 2")).find("inconsistent") !=
        std::string::npos);
  CHECK(error_of(replace(good, "layer 1 bias", "layer 1 offset")).find("malformed") != std::string::npos);
  CHECK(error_of(replace(good, "config.zero_init_output 0", "config.zero_init_output maybe")).find("0 or 1") !=
        std::string::npos);
  CHECK(error_of(replace(good, "training.stopped_early 1", "training.stopped_early")).find("key value") !=
        std::string::npos);
  // Errors point at the offending line.
  CHECK(error_of(replace(good, "end\n", "colour blue\nend\n")).rfind("line ", 0) == 0);
}

TEST_CASE("checkpoint files") {
  nzt::TempDir dir;
  const Checkpoint ckpt = sample_checkpoint();
  save_checkpoint(ckpt, dir / "m.ckpt");
  CHECK(nzt::read_file(dir / "m.ckpt") == serialize(ckpt));
  CHECK(load_checkpoint(dir / "m.ckpt").model == ckpt.model);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  CHECK_THROWS_AS(save_checkpoint(ckpt, dir / "no" / "dir" / "m.ckpt"), IoError);
}

TEST_CASE("reloaded checkpoints evaluate bit-identically") {
  const auto data = generate_dataset(nzt::small_generator(1));
  TrainConfig cfg;
  cfg.hidden_width = 6;
  cfg.hidden_depth = 2;
  cfg.epochs = 15;
  const TrainResult result = train(std::span(data).subspan(0, 2), std::span(data).subspan(2), cfg);
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.model = result.model;
  ckpt.manifest_hash = text::hex64(manifest_hash(data));
  const EvalReport before = evaluate(ckpt.model, data, FitMode::neuro_zip);
  ckpt.metrics = summarize(before);
  const Checkpoint back = deserialize(serialize(ckpt));
  const EvalReport after = evaluate(back.model, data, FitMode::neuro_zip);
  CHECK(summarize(after) == *back.metrics);
  CHECK(after.mse_p == before.mse_p);
}
