#pragma once

#include <cstddef>
#include <vector>

#include "hecnn/forward.hpp"
#include "hecnn/geometry.hpp"
#include "hecnn/he_sim.hpp"
#include "hecnn/ledger.hpp"
#include "hecnn/packing.hpp"
#include "hecnn/tee.hpp"

namespace hecnn {

// Gradient grids reuse the activation grid layouts of the same boundary.
using GradientGrid = ActivationGrid;

// ∇pre = (pre ⊕ pre) ⊗ ∇post for the square activation.
GradientGrid square_backward(const Backend& backend, const ActivationGrid& pre,
                             const GradientGrid& post_grad, OpLedger& ledger, int workers = 0);

// ∇C_j = Σ_i ∇Z_i ⊗ M̂_{i,j}; the result has the layer's Type I input layout.
GradientGrid fc_backward_type1(const Backend& backend, const GradientGrid& out_grads,
                               const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                               std::size_t l, OpLedger& ledger, int workers = 0);
// ∇C_j = Σ_q ∇Z_q ⊗ M̂_{q,j}, then folded and replicated across the S/n
// blocks so it matches the replicated Type II input.
GradientGrid fc_backward_type2(const Backend& backend, const GradientGrid& out_grads,
                               const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                               std::size_t l, OpLedger& ledger, int workers = 0);

Ciphertext fc_weight_gradient(const Backend& backend, const Ciphertext& out_grad,
                              const Ciphertext& activation, OpLedger& ledger);
// All ∇M̂ of layer l, indexed like the weights (fc_weight_index).
std::vector<Ciphertext> fc_weight_gradients(const Backend& backend, const GradientGrid& out_grads,
                                            const ActivationGrid& inputs, const PackingPlan& plan,
                                            std::size_t l, OpLedger& ledger, int workers = 0);

// Input gradient of a baseline conv layer, on the layer's input window grid.
GradientGrid conv_backward(const Backend& backend, const GradientGrid& out_grads,
                           const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                           std::size_t l, OpLedger& ledger, int workers = 0);
// ∇F̂_{k,i,x,y} = Σ_{u,v} ∇Z_{k,u,v} ⊗ C_{i,δu+x,δv+y}, indexed like the filters.
std::vector<Ciphertext> conv_weight_gradient(const Backend& backend, const GradientGrid& out_grads,
                                             const ActivationGrid& inputs,
                                             const PackingPlan& plan, std::size_t l,
                                             OpLedger& ledger, int workers = 0);

// Intermediate ciphertexts of one weight update, in gradient order.
struct UpdateTrace {
  std::size_t set_size = 0;
  std::vector<int> targets;             // in-set index m of each gradient
  std::vector<Ciphertext> masked;       // Step 2
  std::vector<std::vector<int>> groups; // Step 3: gradient indices per merged ciphertext
  std::vector<Ciphertext> merged;       // Step 4
  std::vector<Ciphertext> refreshed;    // Step 5
  std::vector<Ciphertext> split;        // Step 6
  std::vector<Ciphertext> populated;    // Step 7
};

// Steps 2-7 for gradients whose sums over each aligned set of `set_size`
// slots are the entries to apply. Returns, per gradient, a ciphertext holding
// -eta * sum replicated over every slot of each set (Step 7 output).
std::vector<Ciphertext> weight_update_deltas(const Backend& backend, TeeService& tee,
                                             const std::vector<Ciphertext>& grads,
                                             const std::vector<int>& targets,
                                             std::size_t set_size, double eta, OpLedger& ledger,
                                             UpdateTrace* trace = nullptr, int workers = 0);

// Eight-step FC update. Rejects layers where some target i*ι'+j >= n.
void fc_weight_update(const Backend& backend, TeeService& tee, const std::vector<Ciphertext>& grads,
                      std::vector<Ciphertext>& weights, const PackingPlan& plan, std::size_t l,
                      double eta, OpLedger& ledger, UpdateTrace* trace = nullptr,
                      int workers = 0);
// Same procedure for a baseline conv layer with sets of next_pow2(n·β̃₀²) slots.
void conv_weight_update(const Backend& backend, TeeService& tee,
                        const std::vector<Ciphertext>& grads, std::vector<Ciphertext>& filters,
                        const PackingPlan& plan, std::size_t l, double eta, OpLedger& ledger,
                        UpdateTrace* trace = nullptr, int workers = 0);

// Slot-set size used by the weight update of each layer kind.
std::size_t fc_update_set_size(const PackingPlan& plan);
std::size_t conv_update_set_size(const PackingPlan& plan);

// Throws ValidationError unless the plan can be trained: baseline conv
// packing, and every update target inside its slot set.
void check_trainable(const PackingPlan& plan);

struct BackwardOptions {
  bool input_gradient = false;  // also propagate to the network input
  int workers = 0;
};

struct BackwardResult {
  std::vector<std::vector<Ciphertext>> conv_weight_grads;
  std::vector<std::vector<Ciphertext>> fc_weight_grads;
  // Gradient w.r.t. the input of each layer; empty grid where not computed.
  std::vector<GradientGrid> conv_input_grads;
  std::vector<GradientGrid> fc_input_grads;
};

// Backward pass from the gradient of the final layer output. Operands that
// lack the levels a product chain needs are refreshed through the TEE
// (counted as depth refreshes).
BackwardResult backward_pass(const Backend& backend, TeeService& tee, const EncryptedModel& model,
                             const ForwardTrace& trace, const GradientGrid& output_grad,
                             const PackingPlan& plan, OpLedger& ledger,
                             const BackwardOptions& options = {});

struct TrainResult {
  EncryptedModel model;
  ActivationGrid output;  // forward output before the update
  BackwardResult gradients;
  std::vector<UpdateTrace> fc_updates;
  std::vector<UpdateTrace> conv_updates;
};

// Forward with retained activations, TEE final-layer gradient, backward pass
// and the weight updates of every layer.
TrainResult train_step(const Backend& backend, TeeService& tee, const EncryptedModel& model,
                       const ActivationGrid& inputs, const Tensor& labels,
                       const PackingPlan& plan, double eta, OpLedger& ledger,
                       const BackwardOptions& options = {});

}  // namespace hecnn
