#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/model.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn::test {

// Ranges for randomly drawn desk-scale models.
struct ModelRanges {
  int min_conv = 1;
  int max_conv = 3;
  int min_fc = 1;
  int max_fc = 2;
  int max_side = 12;
  std::vector<int> ns = {1, 2, 4};
  int max_channels = 2;
  int max_filters = 3;
  int max_fc_out = 4;
  bool allow_final_activation = true;
};

// A config with a valid plan under `request`. Draws until one validates.
ModelConfig random_config(std::mt19937_64& rng, const ModelRanges& ranges,
                          PackingRequest request = PackingRequest::Auto);
// Like random_config, but the plan also passes check_trainable.
ModelConfig random_trainable_config(std::mt19937_64& rng, const ModelRanges& ranges);

PlainModel random_model(const ModelConfig& config, std::mt19937_64& rng, double scale = 1.0);
// Rescales each layer in turn so its pre-activation over `batch` has unit
// RMS. Without it, stacked squares of small values drive outputs and
// gradients toward zero.
PlainModel unit_rms(PlainModel model, const ModelConfig& config, const Tensor& batch);

Tensor random_batch(const ModelConfig& config, std::mt19937_64& rng);
Tensor random_labels(const ModelConfig& config, std::mt19937_64& rng);

// Uniform integer in [lo, hi].
int pick(std::mt19937_64& rng, int lo, int hi);

}  // namespace hecnn::test
