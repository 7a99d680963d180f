#include <gtest/gtest.h>

#include "hecnn/errors.hpp"
#include "hecnn/geometry.hpp"

namespace hecnn {
namespace {

// Layer-by-layer recurrences, written independently of the library.
std::vector<CombinedParams> recurrence(const std::vector<ConvLayerSpec>& layers) {
  std::vector<CombinedParams> out(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 == layers.size()) {
      out[l] = {layers[l].kernel, layers[l].stride};
    } else {
      out[l].kernel = layers[l].kernel + (out[l + 1].kernel - 1) * layers[l].stride;
      out[l].stride = layers[l].stride * out[l + 1].stride;
    }
  }
  return out;
}

ModelConfig cnn12() {
  ModelConfig c;
  c.input_side = 28;
  c.n = 64;
  c.slot_count = 4096;
  c.conv = {{1, 4, 7, 3}};
  c.fc = {{256, 64}, {64, 10}};
  return c;
}

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

TEST(CombinedParams, SingleLayer) {
  const std::vector<ConvLayerSpec> layers = {{1, 4, 7, 3}};
  EXPECT_EQ(derive_combined_params(layers), (std::vector<CombinedParams>{{7, 3}}));
}

TEST(CombinedParams, TwoStridedLayers) {
  const std::vector<ConvLayerSpec> layers = {{1, 2, 2, 2}, {2, 1, 2, 2}};
  EXPECT_EQ(derive_combined_params(layers), (std::vector<CombinedParams>{{4, 4}, {2, 2}}));
}

TEST(CombinedParams, ThreeUnitStrideLayers) {
  const std::vector<ConvLayerSpec> layers = {{1, 1, 3, 1}, {1, 1, 3, 1}, {1, 1, 3, 1}};
  EXPECT_EQ(derive_combined_params(layers).front(), (CombinedParams{7, 1}));
}

TEST(CombinedParams, MatchesRecurrenceOnManyStacks) {
  for (int k0 = 1; k0 <= 4; ++k0) {
    for (int s0 = 1; s0 <= 3; ++s0) {
      for (int k1 = 1; k1 <= 3; ++k1) {
        for (int s1 = 1; s1 <= 3; ++s1) {
          const std::vector<ConvLayerSpec> layers = {{1, 1, k0, s0}, {1, 1, k1, s1}, {1, 1, 2, s0}};
          EXPECT_EQ(derive_combined_params(layers), recurrence(layers));
        }
      }
    }
  }
}

TEST(OutputGrid, Examples) {
  EXPECT_EQ(derive_output_grid(28, 7, 3).side, 8);
  EXPECT_TRUE(derive_output_grid(28, 7, 3).exact);
  EXPECT_EQ(derive_output_grid(8, 4, 4).side, 2);
  EXPECT_EQ(derive_output_grid(5, 5, 3).side, 1);
  EXPECT_FALSE(derive_output_grid(9, 4, 4).exact);
  EXPECT_THROW(derive_output_grid(3, 4, 1), ValidationError);
}

TEST(PackingFactor, Examples) {
  EXPECT_EQ(compute_packing_factor(8192, 16, 4), 32);
  EXPECT_EQ(compute_packing_factor(8192, 512, 4), 1);
  EXPECT_EQ(compute_packing_factor(4096, 64, 8), 1);
  EXPECT_EQ(compute_packing_factor(8192, 3, 4), 128);
  EXPECT_THROW(compute_packing_factor(4096, 128, 8), ValidationError);
}

TEST(ValidateModel, Cnn12) {
  const PackingPlan p = validate_model(cnn12());
  EXPECT_EQ(p.conv[0].combined, (CombinedParams{7, 3}));
  EXPECT_EQ(p.grid_side, 8);
  EXPECT_EQ(p.replication, 1);
  EXPECT_EQ(p.levels, 6);
  EXPECT_EQ(p.input_ciphertexts(), 49);
  EXPECT_EQ(p.filter_ciphertexts(), 196);
  EXPECT_EQ(p.fc[0].input_type, FcInputType::TypeI);
  EXPECT_EQ(p.fc[0].input_ciphertexts, 4);
  EXPECT_EQ(p.fc[0].pisets_per_ciphertext, 64);
  EXPECT_EQ(p.fc[0].weight_ciphertexts, 256);
  EXPECT_EQ(p.fc[1].input_type, FcInputType::TypeII);
  EXPECT_EQ(p.fc[1].output_ciphertexts, 1);
  EXPECT_EQ(p.fc[1].weight_ciphertexts, 64);
}

TEST(ValidateModel, Tiny8) {
  const PackingPlan p = validate_model(tiny8());
  EXPECT_EQ(p.conv[0].combined, (CombinedParams{4, 4}));
  EXPECT_EQ(p.grid_side, 2);
  EXPECT_EQ(p.replication, 1);
  EXPECT_EQ(p.levels, 8);
  EXPECT_EQ(p.input_ciphertexts(), 16);
}

TEST(ValidateModel, Deterministic) {
  const PackingPlan a = validate_model(cnn12());
  const PackingPlan b = validate_model(cnn12());
  EXPECT_EQ(a.fc[0].features.size(), b.fc[0].features.size());
  EXPECT_EQ(a.levels, b.levels);
  EXPECT_EQ(a.block_stride, b.block_stride);
}

TEST(ValidateModel, LevelsFollowDepth) {
  ModelConfig c = cnn12();
  EXPECT_EQ(c.depth(), 5);
  c.final_activation = true;
  EXPECT_EQ(c.depth(), 6);
  EXPECT_EQ(validate_model(c).levels, 7);
}

TEST(ValidateModel, Rejections) {
  ModelConfig c = cnn12();
  c.n = 48;
  EXPECT_THROW(validate_model(c), ValidationError);
  c = cnn12();
  c.slot_count = 3000;
  EXPECT_THROW(validate_model(c), ValidationError);
  c = cnn12();
  c.n = 128;
  EXPECT_THROW(validate_model(c), ValidationError);
  c = cnn12();
  c.fc[0].in = 255;
  EXPECT_THROW(validate_model(c), ValidationError);
  c = cnn12();
  c.fc[1].in = 63;
  EXPECT_THROW(validate_model(c), ValidationError);
}

TEST(ValidateModel, NonIntegralPisetsRejected) {
  ModelConfig c;
  c.input_side = 1;
  c.input_channels = 10;
  c.n = 1;
  c.slot_count = 16;
  c.fc = {{10, 2}};
  c.fc[0].ciphertexts = 5;
  EXPECT_EQ(validate_model(c).fc[0].pisets_per_ciphertext, 2);
  c.fc[0].ciphertexts = 4;
  EXPECT_THROW(validate_model(c), ValidationError);
}

TEST(ValidateModel, ModesAlternateUnderAuto) {
  ModelConfig c;
  c.input_side = 10;
  c.input_channels = 2;
  c.n = 8;
  c.slot_count = 256;
  c.conv = {{2, 3, 3, 1}, {3, 2, 2, 2}};
  c.fc = {{32, 4}, {4, 3}};
  const PackingPlan p = validate_model(c);
  EXPECT_EQ(p.replication, 2);
  EXPECT_EQ(p.conv[0].mode, PackingMode::CrossChannel);
  EXPECT_EQ(p.conv[1].mode, PackingMode::CrossFilter);
  const PackingPlan b = validate_model(c, PackingRequest::Baseline);
  EXPECT_EQ(b.conv[1].mode, PackingMode::Baseline);
}

}  // namespace
}  // namespace hecnn
