#include <gtest/gtest.h>

#include <random>

#include "hecnn/errors.hpp"
#include "hecnn/packing.hpp"
#include "hecnn/tee.hpp"
#include "random_models.hpp"

namespace hecnn {
namespace {

ModelConfig tiny8() {
  ModelConfig c;
  c.input_side = 8;
  c.n = 2;
  c.slot_count = 8;
  c.conv = {{1, 2, 2, 2}, {2, 1, 2, 2}};
  c.fc = {{4, 2}, {2, 2}};
  c.activation = false;
  return c;
}

Tensor iota(std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i + 1);
  return t;
}

TEST(EncodeInputs, SlotLayoutFollowsWindowGrid) {
  const ModelConfig c = tiny8();
  const PackingPlan plan = validate_model(c);
  const Tensor batch = iota({2, 1, 8, 8});
  const auto cts = encode_inputs(batch, plan);
  ASSERT_EQ(cts.size(), 16u);
  // Ciphertext (u, v) slot (a*G + b)*n + t holds input t at (u + 4a, v + 4b).
  for (int u = 0; u < 4; ++u) {
    for (int v = 0; v < 4; ++v) {
      const SlotVector& ct = cts[static_cast<std::size_t>(u * 4 + v)];
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          for (int t = 0; t < 2; ++t) {
            const double want = batch.at(static_cast<std::size_t>(t), std::size_t{0},
                                         static_cast<std::size_t>(u + 4 * a), static_cast<std::size_t>(v + 4 * b));
            EXPECT_EQ(ct[static_cast<std::size_t>((a * 2 + b) * 2 + t)], want);
          }
        }
      }
    }
  }
}

TEST(EncodeInputs, SingleWindowUsesSlotZero) {
  ModelConfig c;
  c.input_side = 3;
  c.n = 1;
  c.slot_count = 4;
  c.conv = {{1, 1, 3, 1}};
  c.fc = {{1, 1}};
  const PackingPlan plan = validate_model(c, PackingRequest::Baseline);
  const auto cts = encode_inputs(iota({1, 1, 3, 3}), plan);
  ASSERT_EQ(cts.size(), 9u);
  EXPECT_EQ(cts[4], (SlotVector{5, 0, 0, 0}));
}

TEST(EncodeInputs, CrossChannelConcatenatesChannelBlocks) {
  ModelConfig multi;
  multi.input_side = 4;
  multi.input_channels = 3;
  multi.n = 1;
  multi.slot_count = 8;
  multi.conv = {{3, 1, 2, 2}};
  multi.fc = {{4, 1}};
  const PackingPlan plan = validate_model(multi, PackingRequest::CrossChannel);
  ASSERT_EQ(plan.replication, 2);
  const Tensor batch = iota({1, 3, 4, 4});
  const auto grouped = encode_inputs(batch, plan);
  ASSERT_EQ(grouped.size(), 8u);  // two channel groups of 4 windows

  ModelConfig single = multi;
  single.input_channels = 1;
  single.conv[0].channels = 1;
  single.slot_count = 4;
  const PackingPlan single_plan = validate_model(single, PackingRequest::Baseline);
  for (int ch = 0; ch < 3; ++ch) {
    Tensor one({1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) one.data()[i] = batch.data()[static_cast<std::size_t>(ch) * 16 + i];
    const auto ref = encode_inputs(one, single_plan);
    const int group = ch / 2, block = ch % 2;
    for (std::size_t w = 0; w < 4; ++w) {
      for (std::size_t s = 0; s < 4; ++s) {
        EXPECT_EQ(grouped[static_cast<std::size_t>(group) * 4 + w][static_cast<std::size_t>(block) * 4 + s], ref[w][s]);
      }
    }
  }
  // The short final group is zero in its upper block.
  for (std::size_t w = 4; w < 8; ++w) {
    for (std::size_t s = 4; s < 8; ++s) EXPECT_EQ(grouped[w][s], 0.0);
  }
}

TEST(EncodeFilters, ReplicatesEachElement) {
  const PackingPlan plan = validate_model(tiny8());
  Tensor f({2, 1, 2, 2});
  f.data()[0] = 3.5;
  const auto cts = encode_filters(f, plan, 0);
  ASSERT_EQ(cts.size(), 8u);
  EXPECT_EQ(cts[filter_index(plan.conv[0], 1, 0, 0, 0, 0)], SlotVector(8, 3.5));
}

TEST(EncodeFcWeights, TypeIRowMatchesWorkedExample) {
  const PackingPlan plan = validate_model(tiny8());
  Tensor w({2, 4}, {1, 0, 0, 1, 0, 1, -1, 1});
  const auto cts = encode_fc_weights(w, plan, 0);
  ASSERT_EQ(cts.size(), 2u);
  EXPECT_EQ(cts[fc_weight_index(plan.fc[0], 0, 0)], (SlotVector{1, 1, 0, 0, 0, 0, 1, 1}));
}

TEST(EncodeFcWeights, TypeIIPadsUnusedBlocks) {
  const PackingPlan plan = validate_model(tiny8());
  ASSERT_EQ(plan.fc[1].input_type, FcInputType::TypeII);
  Tensor w({2, 2}, {5, 6, 7, 8});
  const auto cts = encode_fc_weights(w, plan, 1);
  ASSERT_EQ(cts.size(), 2u);
  // Input j = 0: outputs 0 and 1 in blocks 0 and 1, blocks 2 and 3 zero.
  EXPECT_EQ(cts[fc_weight_index(plan.fc[1], 0, 0)], (SlotVector{5, 5, 7, 7, 0, 0, 0, 0}));
}

TEST(EncryptModel, CountsCnn12Ciphertexts) {
  ModelConfig c;
  c.input_side = 28;
  c.n = 64;
  c.slot_count = 4096;
  c.conv = {{1, 4, 7, 3}};
  c.fc = {{256, 64}, {64, 10}};
  const PackingPlan plan = validate_model(c);
  std::mt19937_64 rng(3);
  TeeService tee(128, plan.levels, plan.slots);
  OpLedger ledger;
  const EncryptedModel m = encrypt_model(test::random_model(c, rng), plan, tee.backend(), ledger);
  EXPECT_EQ(ledger.in_phase("Enc.Filters", OpKind::Enc), 196u);
  EXPECT_EQ(ledger.in_phase("Enc.Weight1", OpKind::Enc), 256u);
  EXPECT_EQ(ledger.in_phase("Enc.Weight2", OpKind::Enc), 64u);
  EXPECT_EQ(m.fc[1].size(), 64u);
}

TEST(DecodeModel, InvertsEncryption) {
  std::mt19937_64 rng(9);
  test::ModelRanges ranges;
  for (int i = 0; i < 20; ++i) {
    const ModelConfig c = test::random_config(rng, ranges);
    const PackingPlan plan = validate_model(c);
    const PlainModel model = test::random_model(c, rng);
    TeeService tee(128, plan.levels, plan.slots);
    OpLedger ledger;
    const EncryptedModel enc = encrypt_model(model, plan, tee.backend(), ledger);
    EXPECT_EQ(decode_model(enc, plan, tee.inspector()), model);
  }
}

TEST(PackFilters, RejectsWrongShape) {
  const PackingPlan plan = validate_model(tiny8());
  TeeService tee(128, plan.levels, plan.slots);
  OpLedger ledger;
  EXPECT_THROW(pack_filters(Tensor({2, 1, 3, 3}), plan, 0, tee.backend(), ledger), ValidationError);
}

TEST(UnpackOutputs, ReadsTypeIIBlocks) {
  const PackingPlan plan = validate_model(tiny8());
  const Tensor logits = unpack_outputs(std::vector<SlotVector>{{36, 72, 76, 152, 0, 0, 0, 0}}, plan);
  EXPECT_EQ(logits, Tensor({2, 2}, {36, 76, 72, 152}));
}

}  // namespace
}  // namespace hecnn
