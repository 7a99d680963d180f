#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/he_sim.hpp"
#include "hecnn/model.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn {

// Conv: ciphertexts indexed (group, u, v) over a side x side window grid.
// FcTypeI: several distinct pi-sets per ciphertext (input of a Type I layer).
// FcTypeII: one pi-set replicated S/n times (input of a Type II layer).
enum class GridLayout { Conv, FcTypeI, FcTypeII };

struct ActivationGrid {
  GridLayout layout = GridLayout::Conv;
  int groups = 0;
  int side = 1;
  std::vector<Ciphertext> cts;

  std::size_t index(int group, int u, int v) const {
    return (static_cast<std::size_t>(group) * side + u) * side + v;
  }
  const Ciphertext& at(int group, int u, int v) const { return cts.at(index(group, u, v)); }
  std::size_t size() const { return cts.size(); }
};

// Filter ciphertexts per conv layer and weight ciphertexts per FC layer, laid
// out as described by filter_index / fc_weight_index.
struct EncryptedModel {
  std::vector<std::vector<Ciphertext>> conv;
  std::vector<std::vector<Ciphertext>> fc;
};

// Filter-side and channel-side group counts of a conv layer's filter set.
int filter_groups(const ConvLayerPlan& layer, int replication);
int channel_groups(const ConvLayerPlan& layer, int replication);
std::size_t filter_index(const ConvLayerPlan& layer, int replication, int filter_group,
                         int channel_group, int x, int y);
// Type I: (output i, input ciphertext j). Type II: (output ciphertext q, input j).
std::size_t fc_weight_index(const FcLayerPlan& layer, int out, int in);

// Feature-map side at conv boundary l (0 = input, c = conv stack output).
int map_side(const PackingPlan& plan, std::size_t l);

// Where channel `ch` of the activation entering conv layer l (l == c: the
// conv stack output) lives: ciphertext group and replica/channel block.
struct ChannelSlot {
  int group = 0;
  int block = 0;
};
ChannelSlot locate_channel(const PackingPlan& plan, std::size_t l, int ch);

// Plaintext encoders. Unused slots are zero.
std::vector<SlotVector> encode_inputs(const Tensor& batch, const PackingPlan& plan);
std::vector<SlotVector> encode_filters(const Tensor& filters, const PackingPlan& plan,
                                       std::size_t l);
std::vector<SlotVector> encode_fc_weights(const Tensor& weights, const PackingPlan& plan,
                                          std::size_t l);

// Encrypting packers. pack_inputs follows the layer-0 mode of the plan;
// pack_inputs_cross_channel additionally requires that mode.
ActivationGrid pack_inputs(const Tensor& batch, const PackingPlan& plan, const Backend& backend,
                           OpLedger& ledger);
ActivationGrid pack_inputs_cross_channel(const Tensor& batch, const PackingPlan& plan,
                                         const Backend& backend, OpLedger& ledger);
std::vector<Ciphertext> pack_filters(const Tensor& filters, const PackingPlan& plan,
                                     std::size_t l, const Backend& backend, OpLedger& ledger);
std::vector<Ciphertext> pack_fc_weights_type1(const Tensor& weights, const PackingPlan& plan,
                                              std::size_t l, const Backend& backend,
                                              OpLedger& ledger);
std::vector<Ciphertext> pack_fc_weights_type2(const Tensor& weights, const PackingPlan& plan,
                                              std::size_t l, const Backend& backend,
                                              OpLedger& ledger);
// Encrypts every parameter under phases "Enc.Filters" and "Enc.Weight<l+1>".
EncryptedModel encrypt_model(const PlainModel& model, const PackingPlan& plan,
                             const Backend& backend, OpLedger& ledger);

using Decryptor = std::function<SlotVector(const Ciphertext&)>;

// Logits (n x o_f) from the decrypted final ciphertexts.
Tensor unpack_outputs(const std::vector<SlotVector>& final_cts, const PackingPlan& plan);
Tensor unpack_outputs(const ActivationGrid& final_grid, const PackingPlan& plan,
                      const Decryptor& decrypt);

PlainModel decode_model(const EncryptedModel& model, const PackingPlan& plan,
                        const Decryptor& decrypt);

// Activation (or gradient) at conv boundary l as an (n x channels x side x
// side) tensor. Positions covered by several windows are either read once
// (accumulate = false, activations) or summed (accumulate = true, gradients,
// where each window copy carries its own partial derivative).
Tensor decode_conv_grid(const ActivationGrid& grid, const PackingPlan& plan, std::size_t l,
                        const Decryptor& decrypt, bool accumulate);
// Input (or input gradient) of FC layer l as an (n x in) tensor.
Tensor decode_fc_input(const ActivationGrid& grid, const PackingPlan& plan, std::size_t l,
                       const Decryptor& decrypt);

// Weight gradients from the unfolded products dZ (x) activation: each entry is
// the sum over the slots that hold its n per-input terms.
Tensor decode_fc_weight_gradient(const std::vector<Ciphertext>& grads, const PackingPlan& plan,
                                 std::size_t l, const Decryptor& decrypt);
Tensor decode_conv_weight_gradient(const std::vector<Ciphertext>& grads, const PackingPlan& plan,
                                   std::size_t l, const Decryptor& decrypt);

}  // namespace hecnn
