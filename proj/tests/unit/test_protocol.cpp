#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "hecnn/oracle.hpp"
#include "hecnn/protocol.hpp"
#include "random_models.hpp"

namespace hecnn {
namespace {

struct Fixture {
  ModelConfig config;
  PlainModel model;
  Tensor batch;
  Tensor labels;
  Fixture() {
    std::mt19937_64 rng(21);
    config = test::random_trainable_config(rng, {});
    batch = test::random_batch(config, rng);
    model = test::unit_rms(test::random_model(config, rng), config, batch);
    labels = test::random_labels(config, rng);
  }
};

bool has_kind(const SessionTranscript& t, const std::string& kind) {
  return std::any_of(t.entries().begin(), t.entries().end(),
                     [&](const TranscriptEntry& e) { return e.kind == kind; });
}

TEST(Session, InferenceTranscriptRunsStepsInOrder) {
  const Fixture f;
  const SessionResult r = run_session(f.model, f.config, f.batch);
  const auto& entries = r.transcript.entries();
  ASSERT_FALSE(entries.empty());
  for (std::size_t i = 1; i < entries.size(); ++i) EXPECT_LE(entries[i - 1].step, entries[i].step);
  std::vector<int> steps;
  for (const auto& e : entries) {
    if (steps.empty() || steps.back() != e.step) steps.push_back(e.step);
  }
  EXPECT_EQ(steps, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_FALSE(has_kind(r.transcript, "updated-model"));
  EXPECT_FALSE(r.updated_model.has_value());
}

TEST(Session, InferenceTeeCounters) {
  const Fixture f;
  const SessionResult r = run_session(f.model, f.config, f.batch);
  EXPECT_EQ(r.tee.keygens, 1);
  EXPECT_EQ(r.tee.result_decrypts, 1);
  EXPECT_EQ(r.tee.rewraps, 1);
  EXPECT_EQ(r.tee.weight_refreshes, 0);
  EXPECT_EQ(r.tee.final_gradients, 0);
}

TEST(Session, LogitsMatchOracle) {
  const Fixture f;
  const SessionResult r = run_session(f.model, f.config, f.batch);
  const Tensor want = plain_forward(f.model, f.config, f.batch).logits;
  ASSERT_EQ(r.logits.shape(), want.shape());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_NEAR(r.logits.data()[i], want.data()[i], 1e-9 * (1.0 + std::abs(want.data()[i])));
  }
}

TEST(Session, TrainingReturnsUpdatedModel) {
  const Fixture f;
  SessionOptions options;
  options.eta = 0.1;
  const SessionResult r = run_session(f.model, f.config, f.batch, f.labels, options);
  ASSERT_TRUE(r.updated_model.has_value());
  EXPECT_TRUE(has_kind(r.transcript, "updated-model"));
  EXPECT_TRUE(has_kind(r.transcript, "encrypted-final-gradient"));
  EXPECT_EQ(r.tee.final_gradients, 1);
  EXPECT_GT(r.tee.weight_refreshes, 0);
  const PlainModel want =
      sgd_step(f.model, plain_backward(f.model, f.config, f.batch, f.labels), options.eta);
  for (std::size_t l = 0; l < want.fc.size(); ++l) {
    for (std::size_t i = 0; i < want.fc[l].size(); ++i) {
      EXPECT_NEAR(r.updated_model->fc[l].data()[i], want.fc[l].data()[i], 1e-9);
    }
  }
}

TEST(Session, ModelAttestationFailureReleasesNoKeys) {
  const Fixture f;
  SessionOptions options;
  options.fail_model_attestation = true;
  try {
    run_session(f.model, f.config, f.batch, std::nullopt, options);
    FAIL() << "expected AttestationError";
  } catch (const AttestationError& e) {
    EXPECT_EQ(e.transcript().last_step(), 1);
    EXPECT_FALSE(has_kind(e.transcript(), "public-key"));
    EXPECT_FALSE(has_kind(e.transcript(), "client-key"));
  }
}

TEST(Session, DataAttestationFailureReleasesNoDataKeys) {
  const Fixture f;
  SessionOptions options;
  options.fail_data_attestation = true;
  try {
    run_session(f.model, f.config, f.batch, std::nullopt, options);
    FAIL() << "expected AttestationError";
  } catch (const AttestationError& e) {
    EXPECT_EQ(e.transcript().last_step(), 5);
    for (const auto& entry : e.transcript().entries()) {
      EXPECT_NE(entry.to, Role::DataProvider) << entry.kind;
      if (entry.step == 5) EXPECT_EQ(entry.kind, "attest");
    }
  }
}

TEST(Party, OnlyTheTeeCanDecrypt) {
  TeeService tee(128, 3, 4);
  OpLedger ledger;
  const Ciphertext ct = tee.backend().encrypt(SlotVector({1, 2, 3, 4}), ledger);
  Party ree(Role::Ree);
  EXPECT_THROW(ree.decrypt(ct, ledger), AuthorizationError);
  EXPECT_THROW(ree.attach_tee(&tee), AuthorizationError);
  Party enclave(Role::Tee);
  enclave.attach_tee(&tee);
  EXPECT_EQ(enclave.decrypt(ct, ledger), SlotVector({1, 2, 3, 4}));
}

TEST(Transcript, RejectsOutOfOrderSteps) {
  SessionTranscript t;
  t.record(3, Role::Tee, Role::Ree, "x", 1);
  EXPECT_THROW(t.record(2, Role::Tee, Role::Ree, "y", 1), Error);
  EXPECT_NE(t.render().find("step=3"), std::string::npos);
}

TEST(Rewrap, RoundTripsUnderTheClientKey) {
  const Tensor t({2, 2}, std::vector<double>{1.5, -2, 0, 7});
  const auto bytes = wrap_tensor(t, 99);
  EXPECT_EQ(unwrap_tensor(bytes, t.shape(), 99), t);
  EXPECT_NE(unwrap_tensor(bytes, t.shape(), 98), t);
}

}  // namespace
}  // namespace hecnn
