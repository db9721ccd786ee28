#include <doctest.h>

#include <algorithm>
#include <vector>

#include "neurozip/error.hpp"
#include "neurozip/optimizer.hpp"
#include "neurozip/problem.hpp"
#include "support.hpp"

using namespace neurozip;
using autodiff::Tape;

namespace {

const PenaltyConfig kL1{1.0, 1.0, PenaltyNorm::l1};
const ZipParams kFeasibleZip{0.5, 0.3, 0.2, 1.0, 0.0, 0.0};

Trajectory flat_trajectory(std::vector<double> p_star, double p0 = 1.0) {
  Trajectory traj;
  traj.id = "t";
  traj.operating_point = {1.0, p0, 0.0};
  for (std::size_t i = 0; i < p_star.size(); ++i) traj.samples.push_back({0.02 * i, 1.0, 0.0, p_star[i], 0.0});
  return traj;
}

double tape_penalty(const ZipParams& zip, const MixingWeights& mix, const PenaltyConfig& cfg) {
  Tape tape;
  const ZipVars zv = bind_parameters(tape, zip);
  const MixVars mv{tape.parameter(Matrix::scalar(mix.a)), tape.parameter(Matrix::scalar(mix.b))};
  return constraint_penalty(zv, mv, cfg).value().item();
}

ZipParams random_zip(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi),
          uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

}  // namespace

TEST_CASE("data_loss examples") {
  SUBCASE("perfect fit") {
    const std::vector<double> p = {0.8, 0.7}, q = {0.3, 0.2};
    CHECK(data_loss(p, q, p, q) == 0.0);
  }
  SUBCASE("single sample with a 0.1 P residual") {
    const std::vector<double> p = {0.9}, q = {0.3}, ps = {0.8};
    CHECK(data_loss(p, q, ps, q) == doctest::Approx(0.01).epsilon(1e-14));
  }
  SUBCASE("two samples with P residuals 0.1 and 0.3") {
    const std::vector<double> p = {1.1, 1.3}, q = {0.0, 0.0}, ps = {1.0, 1.0};
    CHECK(data_loss(p, q, ps, q) == doctest::Approx(0.05).epsilon(1e-14));
    Tape tape;
    const Var loss = data_loss(tape.constant(Matrix::column(p)), tape.constant(Matrix::column(q)),
                               tape.constant(Matrix::column(ps)), tape.constant(Matrix::column(q)));
    CHECK(loss.value().item() == doctest::Approx(0.05).epsilon(1e-14));
  }
}

TEST_CASE("data_loss rejects empty and misaligned input") {
  const std::vector<double> empty;
  CHECK_THROWS_AS(data_loss(empty, empty, empty, empty), ContractError);
  const std::vector<double> two = {1.0, 2.0}, three = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(data_loss(two, two, three, two), DimensionError);

  Tape tape;
  const Var e = tape.constant(Matrix(0, 1));
  CHECK_THROWS_AS(data_loss(e, e, e, e), ContractError);
  const Var a = tape.constant(Matrix(2, 1)), b = tape.constant(Matrix(3, 1));
  CHECK_THROWS_AS(data_loss(a, a, b, a), DimensionError);
}

TEST_CASE("constraint_penalty examples with l1") {
  CHECK(constraint_penalty(kFeasibleZip, {0.5, 0.5}, kL1) == 0.0);
  CHECK(constraint_penalty({-0.1, 0.6, 0.5, 1.0, 0.0, 0.0}, {0.5, 0.5}, kL1) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(constraint_penalty({0.4, 0.4, 0.3, 1.0, 0.0, 0.0}, {0.5, 0.5}, kL1) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("constraint_penalty weights and norms") {
  const ZipParams zip{-0.2, 0.7, 0.5, 0.5, 0.25, 0.25};  // alpha sum 1, one negative share
  const MixingWeights mix{1.25, -0.5};
  // Active inequalities: 0.2 (alpha_p), 0.25 (a_upper), 0.5 (b_lower).
  CHECK(constraint_penalty(zip, mix, {1.0, 1.0, PenaltyNorm::l1}) == doctest::Approx(0.95).epsilon(1e-14));
  CHECK(constraint_penalty(zip, mix, {1.0, 1.0, PenaltyNorm::l2}) ==
        doctest::Approx(0.04 + 0.0625 + 0.25).epsilon(1e-14));
  CHECK(constraint_penalty(zip, mix, {2.0, 0.0, PenaltyNorm::l1}) == doctest::Approx(1.9).epsilon(1e-14));
  const ZipParams eq_only{0.5, 0.5, 0.5, 0.5, 0.25, 0.25};
  CHECK(constraint_penalty(eq_only, {0.5, 0.5}, {0.0, 3.0, PenaltyNorm::l1}) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(constraint_penalty(eq_only, {0.5, 0.5}, {1.0, 1.0, PenaltyNorm::l2}) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("violation_metric examples") {
  CHECK(violation_metric(kFeasibleZip, {0.5, 0.5}) == 0.0);
  CHECK(violation_metric({0.409, 0.3, 0.3, 0.5, 0.2, 0.3}, {0.5, 0.5}) == doctest::Approx(0.009).epsilon(1e-12));
  CHECK(violation_metric({-0.002, 0.502, 0.5, 0.5, 0.25, 0.25}, {0.5, 0.5}) == doctest::Approx(0.002).epsilon(1e-12));
  // The metric ignores the training norm: l1 with unit weights.
  const ZipParams zip{0.4, 0.4, 0.3, 1.0, 0.0, 0.0};
  CHECK(violation_metric(zip, {0.5, 0.5}) == constraint_penalty(zip, {0.5, 0.5}, kL1));
}

TEST_CASE("violation breakdown sums to the metric and names every constraint") {
  const ZipParams zip{-0.2, 0.7, 0.6, 0.5, 0.25, 0.2};
  const MixingWeights mix{1.25, 0.5};
  const auto parts = violation_breakdown(zip, mix);
  double total = 0.0;
  for (double x : parts) total += x;
  CHECK(total == doctest::Approx(violation_metric(zip, mix)).epsilon(1e-14));
  CHECK(parts[0] == doctest::Approx(0.1).epsilon(1e-12));   // alpha_sum
  CHECK(parts[1] == doctest::Approx(0.05).epsilon(1e-12));  // beta_sum
  CHECK(parts[kEqualityCount + 0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(parts[kEqualityCount + 7] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(kEqualityNames[0] == "alpha_sum");
  CHECK(kInequalityNames[7] == "a_upper");
  std::vector<std::string_view> names(kInequalityNames.begin(), kInequalityNames.end());
  names.insert(names.end(), kEqualityNames.begin(), kEqualityNames.end());
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("penalty is zero exactly on the feasible set") {
  nzt::property(31, 200, [](std::mt19937_64& rng) {
    // Dyadic shares so the sums are exactly 1.
    const auto share = [&] { return static_cast<double>(uniform_index(rng, 33)) / 64.0; };
    const double ap = share(), ai = share(), bp = share(), bi = share();
    const ZipParams zip{ap, ai, 1.0 - ap - ai, bp, bi, 1.0 - bp - bi};
    const MixingWeights mix{uniform01(rng), uniform01(rng)};
    for (PenaltyNorm norm : {PenaltyNorm::l1, PenaltyNorm::l2}) {
      CHECK(constraint_penalty(zip, mix, {1.0, 1.0, norm}) == 0.0);
    }
    ZipParams bad = zip;
    bad.beta_i -= 0.01 + uniform01(rng);
    for (PenaltyNorm norm : {PenaltyNorm::l1, PenaltyNorm::l2}) {
      CHECK(constraint_penalty(bad, mix, {1.0, 1.0, norm}) > 0.0);
    }
    CHECK(constraint_penalty(zip, {1.0 + 1e-3, 0.5}, kL1) > 0.0);
  });
}

TEST_CASE("penalty is non-negative and invariant to reordering the alpha shares") {
  nzt::property(37, 200, [](std::mt19937_64& rng) {
    const ZipParams zip = random_zip(rng, -0.5, 1.5);
    const MixingWeights mix{uniform(rng, -0.5, 1.5), uniform(rng, -0.5, 1.5)};
    for (PenaltyNorm norm : {PenaltyNorm::l1, PenaltyNorm::l2}) {
      const PenaltyConfig cfg{uniform(rng, 0, 2), uniform(rng, 0, 2), norm};
      const double base = constraint_penalty(zip, mix, cfg);
      CHECK(base >= 0.0);
      const ZipParams perm{zip.alpha_z, zip.alpha_p, zip.alpha_i, zip.beta_p, zip.beta_i, zip.beta_z};
      CHECK(constraint_penalty(perm, mix, cfg) == doctest::Approx(base).epsilon(1e-14));
      CHECK(tape_penalty(zip, mix, cfg) == doctest::Approx(base).epsilon(1e-14));
    }
  });
}

TEST_CASE("total_loss examples") {
  SUBCASE("feasible and perfect") {
    const Trajectory traj = flat_trajectory({1.0, 1.0, 1.0});
    const Batch batch = make_batch(std::span(&traj, 1), FeatureMode::relative);
    NeuroZipModel model;
    model.zip = kFeasibleZip;
    CHECK(total_loss_value(model, batch, FitMode::zip_only, kL1) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("feasible with data loss 0.05") {
    const Trajectory traj = flat_trajectory({0.9, 0.7});
    const Batch batch = make_batch(std::span(&traj, 1), FeatureMode::relative);
    NeuroZipModel model;
    model.zip = kFeasibleZip;
    CHECK(total_loss_value(model, batch, FitMode::zip_only, kL1) == doctest::Approx(0.05).epsilon(1e-14));
  }
  SUBCASE("data loss 0.05 plus penalty 0.1") {
    // alpha sums to 1.1, so the ZIP branch predicts 1.1 at nominal voltage.
    const Trajectory traj = flat_trajectory({1.0, 0.8});
    const Batch batch = make_batch(std::span(&traj, 1), FeatureMode::relative);
    NeuroZipModel model;
    model.zip = {0.4, 0.4, 0.3, 1.0, 0.0, 0.0};
    CHECK(total_loss_value(model, batch, FitMode::zip_only, kL1) == doctest::Approx(0.15).epsilon(1e-14));
  }
}

TEST_CASE("zip_only loss is the classical penalised ZIP fit") {
  GeneratorConfig gen = nzt::small_generator(1);
  const auto data = generate_dataset(gen);
  const Batch batch = make_batch(data, FeatureMode::relative);
  TrainConfig cfg;
  cfg.zero_init_output = false;
  NeuroZipModel model = init_parameters(cfg);
  model.zip = {0.45, 0.35, 0.25, 0.5, 0.3, 0.1};

  std::vector<double> p_fit, q_fit;
  for (const Trajectory& traj : data) {
    for (const Sample& s : traj.samples) {
      const PowerPair out = zip_forward(model.zip, traj.operating_point, s.v);
      p_fit.push_back(out.p);
      q_fit.push_back(out.q);
    }
  }
  const double expected = data_loss(p_fit, q_fit, batch.p_star.values(), batch.q_star.values()) +
                          constraint_penalty(model.zip, {1.0, 1.0}, cfg.penalty);
  CHECK(total_loss_value(model, batch, FitMode::zip_only, cfg.penalty) == doctest::Approx(expected).epsilon(1e-13));

  // Network weights do not enter the zip_only loss.
  NeuroZipModel other = model;
  other.mlp = make_mlp(20, 4, Activation::relu, 99, false);
  other.mix = {0.1, 0.2};
  CHECK(total_loss_value(other, batch, FitMode::zip_only, cfg.penalty) ==
        total_loss_value(model, batch, FitMode::zip_only, cfg.penalty));

  // A zeroed network blended at a = b = 1 is the same problem.
  NeuroZipModel blended = model;
  blended.mix = {1.0, 1.0};
  for (DenseLayer& layer : blended.mlp.layers) layer.weight.fill(0.0);
  CHECK(total_loss_value(blended, batch, FitMode::neuro_zip, cfg.penalty) ==
        doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("total_loss gradients pass the finite-difference check in every mode") {
  GeneratorConfig gen = nzt::small_generator(1);
  const auto data = generate_dataset(gen);
  const Batch batch = make_batch(data, FeatureMode::relative);
  TrainConfig cfg;
  cfg.hidden_width = 6;
  cfg.hidden_depth = 2;
  cfg.zero_init_output = false;
  NeuroZipModel model = init_parameters(cfg);
  model.zip = {0.45, 0.35, 0.25, 0.55, -0.05, 0.45};
  model.mix = {0.6, 1.1};  // one active bound so the rectifier path is exercised
  for (FitMode mode : {FitMode::zip_only, FitMode::neural_only, FitMode::neuro_zip}) {
    for (PenaltyNorm norm : {PenaltyNorm::l1, PenaltyNorm::l2}) {
      INFO("mode " << to_string(mode) << " norm " << to_string(norm));
      const GradCheckResult r = gradient_check(model, batch, mode, {1.0, 1.0, norm}, 1e-5);
      CHECK(r.max_rel_error < 1e-4);
      std::size_t entries = 0;
      for (const Matrix& m : parameter_list(model, mode)) entries += m.size();
      CHECK(r.entries == entries);
    }
  }
}

TEST_CASE("make_batch stacks samples with per-trajectory normalisation") {
  Trajectory a = flat_trajectory({0.8, 0.6}, 0.8);
  a.operating_point = {1.0, 0.8, 0.3};
  a.samples[1].v = 0.5;
  a.samples[1].theta_v = 0.25;
  Trajectory b = flat_trajectory({1.6}, 1.6);
  b.operating_point = {2.0, 1.6, 0.4};
  b.samples[0].v = 2.0;
  b.samples[0].theta_v = -1.0;
  const std::vector<Trajectory> trajs = {a, b};

  const Batch batch = make_batch(trajs, FeatureMode::relative);
  REQUIRE(batch.size() == 3);
  CHECK(batch.features(1, 0) == 0.5);
  CHECK(batch.features(1, 1) == 0.25);
  CHECK(batch.features(2, 0) == 1.0);
  CHECK(batch.features(2, 1) == 0.0);
  CHECK(batch.basis.p_linear[1] == 0.4);
  CHECK(batch.basis.p_quadratic[1] == 0.2);
  CHECK(batch.basis.q_const[2] == 0.4);
  CHECK(batch.basis.q_quadratic[2] == 0.4);
  CHECK(batch.p_star[2] == 1.6);

  const Batch raw = make_batch(trajs, FeatureMode::raw);
  CHECK(raw.features(2, 0) == 2.0);
  CHECK(raw.features(2, 1) == -1.0);

  const std::vector<std::size_t> rows = {2, 0};
  const Batch sub = select_rows(batch, rows);
  REQUIRE(sub.size() == 2);
  CHECK(sub.p_star[0] == 1.6);
  CHECK(sub.basis.p_const[1] == 0.8);
  CHECK(sub.features(0, 0) == 1.0);

  CHECK_THROWS_AS(make_batch(std::span<const Trajectory>{}, FeatureMode::relative), ContractError);
  CHECK_THROWS_AS(select_rows(batch, std::span<const std::size_t>{}), ContractError);
  Trajectory bad = a;
  bad.operating_point.v0 = 0.0;
  CHECK_THROWS_AS(make_batch(std::span(&bad, 1), FeatureMode::relative), OperatingPointError);
}

TEST_CASE("bind_model exposes the trainable set of each mode") {
  TrainConfig cfg;
  const NeuroZipModel model = init_parameters(cfg);
  Tape tape;
  const ModelVars zip_only = bind_model(tape, model, FitMode::zip_only);
  CHECK_FALSE(zip_only.has_network);
  CHECK(tape.op(zip_only.mix.a) == autodiff::Op::constant);
  CHECK(zip_only.mix.a.value().item() == 1.0);
  const ModelVars neural = bind_model(tape, model, FitMode::neural_only);
  CHECK(neural.has_network);
  CHECK(neural.mix.b.value().item() == 0.0);
  CHECK(neural.mlp.layers.size() == 5);
  const ModelVars full = bind_model(tape, model, FitMode::neuro_zip);
  CHECK(tape.op(full.mix.a) == autodiff::Op::parameter);
  CHECK(full.mix.a.value().item() == 0.5);
}

TEST_CASE("penalty configuration parsing and validation") {
  CHECK(parse_penalty_norm("l1") == PenaltyNorm::l1);
  CHECK(parse_penalty_norm("1") == PenaltyNorm::l1);
  CHECK(parse_penalty_norm("l2") == PenaltyNorm::l2);
  CHECK(parse_penalty_norm(to_string(PenaltyNorm::l2)) == PenaltyNorm::l2);
  CHECK_THROWS_AS(parse_penalty_norm("l3"), ConfigError);
  CHECK_NOTHROW(PenaltyConfig{0.0, 0.0, PenaltyNorm::l1}.validate());
  CHECK_THROWS_AS((PenaltyConfig{-1.0, 1.0, PenaltyNorm::l1}.validate()), ConfigError);
  CHECK_THROWS_AS((PenaltyConfig{1.0, -0.5, PenaltyNorm::l2}.validate()), ConfigError);
}
