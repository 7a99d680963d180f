#include <gtest/gtest.h>

#include <random>

#include "hecnn/backward.hpp"
#include "hecnn/errors.hpp"
#include "hecnn/oracle.hpp"
#include "random_models.hpp"

namespace hecnn {
namespace {

ModelConfig small_trainable() {
  std::mt19937_64 rng(42);
  test::ModelRanges ranges;
  ranges.min_conv = 1;
  ranges.max_conv = 2;
  return test::random_trainable_config(rng, ranges);
}

struct Trainee {
  PackingPlan plan;
  TeeService tee;
  EncryptedModel model;
  ActivationGrid inputs;
  Trainee(const ModelConfig& c, const PlainModel& m, const Tensor& batch)
      : plan(validate_model(c, PackingRequest::Baseline)), tee(128, plan.levels, plan.slots) {
    OpLedger scratch;
    model = encrypt_model(m, plan, tee.backend(), scratch);
    inputs = pack_inputs(batch, plan, tee.backend(), scratch);
  }
};

void expect_close(const Tensor& got, const Tensor& want, double tol) {
  ASSERT_EQ(got.shape(), want.shape());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got.data()[i], want.data()[i], tol * (1.0 + std::abs(want.data()[i]))) << "entry " << i;
  }
}

TEST(TrainStep, ZeroLearningRateKeepsWeights) {
  const ModelConfig c = small_trainable();
  std::mt19937_64 rng(1);
  const Tensor batch = test::random_batch(c, rng);
  const PlainModel m = test::random_model(c, rng);
  Trainee s(c, m, batch);
  OpLedger ledger;
  const TrainResult r =
      train_step(s.tee.backend(), s.tee, s.model, s.inputs, test::random_labels(c, rng), s.plan, 0.0, ledger);
  const PlainModel after = decode_model(r.model, s.plan, s.tee.inspector());
  for (std::size_t l = 0; l < m.conv.size(); ++l) expect_close(after.conv[l], m.conv[l], 1e-12);
  for (std::size_t l = 0; l < m.fc.size(); ++l) expect_close(after.fc[l], m.fc[l], 1e-12);
}

TEST(TrainStep, MatchesPlaintextSgd) {
  const ModelConfig c = small_trainable();
  std::mt19937_64 rng(2);
  const Tensor batch = test::random_batch(c, rng);
  const PlainModel m = test::unit_rms(test::random_model(c, rng), c, batch);
  const Tensor labels = test::random_labels(c, rng);
  Trainee s(c, m, batch);
  OpLedger ledger;
  const double eta = 0.05;
  const TrainResult r = train_step(s.tee.backend(), s.tee, s.model, s.inputs, labels, s.plan, eta, ledger);
  const PlainModel want = sgd_step(m, plain_backward(m, c, batch, labels), eta);
  const PlainModel got = decode_model(r.model, s.plan, s.tee.inspector());
  for (std::size_t l = 0; l < m.conv.size(); ++l) expect_close(got.conv[l], want.conv[l], 1e-9);
  for (std::size_t l = 0; l < m.fc.size(); ++l) expect_close(got.fc[l], want.fc[l], 1e-9);
}

TEST(TrainStep, WeightRefreshesFollowSetCapacity) {
  const ModelConfig c = small_trainable();
  std::mt19937_64 rng(3);
  const Tensor batch = test::random_batch(c, rng);
  Trainee s(c, test::random_model(c, rng), batch);
  OpLedger ledger;
  const TrainResult r =
      train_step(s.tee.backend(), s.tee, s.model, s.inputs, test::random_labels(c, rng), s.plan, 0.1, ledger);
  std::size_t expected = 0;
  for (std::size_t l = 0; l < s.plan.fc.size(); ++l) {
    const auto k = static_cast<std::size_t>(s.plan.fc[l].weight_ciphertexts);
    const std::size_t set = fc_update_set_size(s.plan);
    expected += (k + set - 1) / set;
    EXPECT_EQ(r.fc_updates[l].refreshed.size(), (k + set - 1) / set);
  }
  for (std::size_t l = 0; l < s.plan.conv.size(); ++l) {
    const auto k = static_cast<std::size_t>(s.plan.conv[l].filter_ciphertexts);
    const std::size_t set = conv_update_set_size(s.plan);
    expected += (k + set - 1) / set;
  }
  EXPECT_EQ(static_cast<std::size_t>(s.tee.counters().weight_refreshes), expected);
}

TEST(CheckTrainable, RejectsFcLayerWiderThanSlotSet) {
  ModelConfig c;
  c.input_side = 1;
  c.input_channels = 4;
  c.n = 2;
  c.slot_count = 8;
  c.fc = {{4, 4}, {4, 1}};
  const PackingPlan plan = validate_model(c, PackingRequest::Baseline);
  ASSERT_GT(plan.fc[0].weight_ciphertexts, plan.n);
  try {
    check_trainable(plan);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("fc layer 0"), std::string::npos) << what;
    EXPECT_NE(what.find("(i,j)"), std::string::npos) << what;
  }
}

TEST(CheckTrainable, RejectsPackedConvModes) {
  ModelConfig c;
  c.input_side = 10;
  c.input_channels = 2;
  c.n = 2;
  c.slot_count = 128;
  c.conv = {{2, 4, 3, 1}, {4, 2, 2, 2}};
  c.fc = {{32, 4}, {4, 3}};
  const PackingPlan plan = validate_model(c, PackingRequest::CrossChannel);
  ASSERT_NE(plan.replication, 1);
  EXPECT_THROW(check_trainable(plan), ValidationError);
}

TEST(WeightUpdate, PopulatesNegativeScaledSetSums) {
  TeeService tee(128, 6, 8);
  OpLedger ledger;
  const Backend& be = tee.backend();
  const std::vector<Ciphertext> grads = {
      be.encrypt(SlotVector({1, 2, 0, 0, 3, 4, 0, 0}), ledger),
      be.encrypt(SlotVector({0, 1, 1, 0, 0, 0, 0, 5}), ledger),
  };
  UpdateTrace trace;
  const auto deltas = weight_update_deltas(be, tee, grads, {0, 1}, 4, 0.5, ledger, &trace);
  ASSERT_EQ(deltas.size(), 2u);
  EXPECT_EQ(tee.inspect(deltas[0]), SlotVector({-1.5, -1.5, -1.5, -1.5, -3.5, -3.5, -3.5, -3.5}));
  EXPECT_EQ(tee.inspect(deltas[1]), SlotVector({-1, -1, -1, -1, -2.5, -2.5, -2.5, -2.5}));
  EXPECT_EQ(trace.refreshed.size(), 1u);
  EXPECT_EQ(tee.counters().weight_refreshes, 1);
}

TEST(WeightUpdate, RejectsCollidingTargets) {
  TeeService tee(128, 6, 8);
  OpLedger ledger;
  const Backend& be = tee.backend();
  const std::vector<Ciphertext> grads(2, be.encrypt(SlotVector(8, 1.0), ledger));
  EXPECT_THROW(weight_update_deltas(be, tee, grads, {1, 1}, 4, 0.5, ledger), ValidationError);
}

}  // namespace
}  // namespace hecnn
