#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/he_sim.hpp"
#include "hecnn/ledger.hpp"
#include "hecnn/packing.hpp"

namespace hecnn {

// Observer of intermediate ciphertexts, e.g. ("FL1:product", 0, ct) or
// ("FL1:rotate_add", 0, ct). Events are "<phase>:<what>" with what in
// {output, product, rotate_add}. Setting a tracer forces serial execution.
using Tracer = std::function<void(const std::string& event, std::size_t index, const Ciphertext&)>;

struct ForwardOptions {
  Tracer tracer;
  int workers = 0;  // 0: worker_count()
};

// Activations retained for backward propagation.
struct ForwardTrace {
  std::vector<ActivationGrid> conv_input;
  std::vector<ActivationGrid> conv_pre;  // before the square activation
  std::vector<ActivationGrid> fc_input;
  std::vector<ActivationGrid> fc_pre;
};

std::string conv_phase(std::size_t l);
std::string fc_phase(std::size_t l);
std::string square_phase(const std::string& layer_phase);

Ciphertext square_activation(const Backend& backend, const Ciphertext& ct, OpLedger& ledger);

// Each conv variant writes the pre-activation output to `pre` when given and
// returns the activated output (or the pre-activation output when the plan
// disables activations).
ActivationGrid conv_forward(const Backend& backend, const ActivationGrid& input,
                            const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                            std::size_t l, OpLedger& ledger, const ForwardOptions& options = {},
                            ActivationGrid* pre = nullptr);
ActivationGrid conv_forward_cross_channel(const Backend& backend, const ActivationGrid& input,
                                          const std::vector<Ciphertext>& filters,
                                          const PackingPlan& plan, std::size_t l,
                                          OpLedger& ledger, const ForwardOptions& options = {},
                                          ActivationGrid* pre = nullptr);
ActivationGrid conv_forward_cross_filter(const Backend& backend, const ActivationGrid& input,
                                         const std::vector<Ciphertext>& filters,
                                         const PackingPlan& plan, std::size_t l, OpLedger& ledger,
                                         const ForwardOptions& options = {},
                                         ActivationGrid* pre = nullptr);
// Dispatches on the plan's mode for layer l.
ActivationGrid conv_layer_forward(const Backend& backend, const ActivationGrid& input,
                                  const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                                  std::size_t l, OpLedger& ledger,
                                  const ForwardOptions& options = {},
                                  ActivationGrid* pre = nullptr);

ActivationGrid fc_forward_type1(const Backend& backend, const ActivationGrid& input,
                                const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                                std::size_t l, OpLedger& ledger,
                                const ForwardOptions& options = {}, ActivationGrid* pre = nullptr);
ActivationGrid fc_forward_type2(const Backend& backend, const ActivationGrid& input,
                                const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                                std::size_t l, OpLedger& ledger,
                                const ForwardOptions& options = {}, ActivationGrid* pre = nullptr);

// Rotate-and-add over `steps` doublings of `base`: afterwards every slot holds
// the sum of the 2^steps slots spaced `base` apart in its cyclic orbit.
Ciphertext rotate_and_add(const Backend& backend, Ciphertext ct, std::size_t base, int steps,
                          OpLedger& ledger, const Tracer& tracer = {},
                          const std::string& event = {}, std::size_t index = 0);

// Full encrypted forward pass; returns the final (un-activated) layer output.
ActivationGrid infer(const Backend& backend, const EncryptedModel& model,
                     const ActivationGrid& inputs, const PackingPlan& plan, OpLedger& ledger,
                     const ForwardOptions& options = {}, ForwardTrace* trace = nullptr);

}  // namespace hecnn
