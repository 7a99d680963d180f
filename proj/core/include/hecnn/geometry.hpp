#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hecnn {

struct ConvLayerSpec {
  int channels = 1;  // α_l
  int filters = 1;   // ε_l, output channels of the layer
  int kernel = 1;    // γ_l
  int stride = 1;    // δ_l
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct FcLayerSpec {
  int in = 1;   // ι_l
  int out = 1;  // o_l
  // Forces ι'_l (input ciphertext count); only meaningful for the first FC
  // layer of a model without convolutions.
  std::optional<int> ciphertexts;
  friend bool operator==(const FcLayerSpec&, const FcLayerSpec&) = default;
};

struct ModelConfig {
  int input_side = 1;      // β_0
  int input_channels = 0;  // α_0; 0 means "take it from the first conv layer" (or 1)
  int n = 1;               // simultaneous inputs
  std::size_t slot_count = 0;
  std::vector<ConvLayerSpec> conv;
  std::vector<FcLayerSpec> fc;
  bool final_activation = false;
  bool activation = true;  // false disables every square activation

  int channels_in() const;
  // Whether FC layer `l` (0-based) is followed by a square activation.
  bool fc_has_activation(std::size_t l) const;
  bool conv_has_activation() const { return activation; }
  // Multiplicative depth of the whole pipeline.
  int depth() const;
};

enum class PackingMode { Baseline, CrossChannel, CrossFilter };
enum class PackingRequest { Auto, Baseline, CrossChannel, CrossFilter };
enum class FcInputType { TypeI, TypeII };

std::string to_string(PackingMode mode);
std::string to_string(FcInputType type);

struct CombinedParams {
  int kernel = 1;  // γ̃_l
  int stride = 1;  // δ̃_l
  friend bool operator==(const CombinedParams&, const CombinedParams&) = default;
};

// Closed-form combined kernel side and stride for each layer l (combining
// layers l..c-1). Cross-checked against the layer-to-layer recurrences;
// a disagreement is a logic error.
std::vector<CombinedParams> derive_combined_params(std::span<const ConvLayerSpec> layers);

struct OutputGrid {
  int side = 0;       // β̃_0
  bool exact = true;  // (β_0 - γ̃_0) divisible by δ̃_0
};

OutputGrid derive_output_grid(int input_side, int combined_kernel, int combined_stride);

// Largest power of two r with r * n * grid_side^2 <= slots.
int compute_packing_factor(std::size_t slots, int n, int grid_side);

// Position of one FC input feature inside the layer's input ciphertexts.
struct FeatureSlot {
  int ciphertext = 0;
  std::size_t base = 0;  // first slot of the feature's n-value pi-set
};

struct ConvLayerPlan {
  ConvLayerSpec spec;
  CombinedParams combined;  // γ̃_l, δ̃_l
  int out_side = 1;         // γ̃_{l+1}
  PackingMode mode = PackingMode::Baseline;
  int input_groups = 1;   // ciphertext groups per (u, v) at the input
  int output_groups = 1;  // ciphertext groups per (u, v) at the output
  bool input_replicated = false;   // input blocks are r identical replicas
  bool output_replicated = false;
  int filter_ciphertexts = 0;
};

struct FcLayerPlan {
  FcLayerSpec spec;
  FcInputType input_type = FcInputType::TypeI;
  int input_ciphertexts = 0;  // ι'_l
  int pisets_per_ciphertext = 0;  // ι''_l (Type I); 1 for Type II
  int output_ciphertexts = 0;
  int weight_ciphertexts = 0;
  bool activation = true;
  std::vector<FeatureSlot> features;  // Type I only, indexed by feature
};

struct PackingPlan {
  ModelConfig config;
  std::size_t slots = 0;
  int n = 1;
  int levels = 0;       // L
  int grid_side = 0;    // β̃_0 (0 without conv layers)
  bool grid_exact = true;
  int replication = 1;  // r
  std::size_t block_stride = 0;  // S / r, spacing of replica / channel blocks
  std::size_t block_size = 0;    // n * β̃_0^2 used slots per block
  std::vector<ConvLayerPlan> conv;
  std::vector<FcLayerPlan> fc;
  std::vector<std::string> warnings;

  std::size_t conv_count() const { return conv.size(); }
  std::size_t fc_count() const { return fc.size(); }
  int input_ciphertexts() const;
  int filter_ciphertexts() const;
  int outputs() const { return fc.empty() ? 0 : fc.back().spec.out; }
  bool all_baseline() const;
};

// Builds the complete packing plan for a configuration, or throws
// ValidationError describing the first violated constraint.
PackingPlan validate_model(const ModelConfig& config,
                           PackingRequest request = PackingRequest::Auto);

}  // namespace hecnn
