#include "hecnn/forward.hpp"

#include <bit>
#include <optional>

#include "hecnn/errors.hpp"
#include "hecnn/parallel.hpp"

namespace hecnn {

namespace {

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

int workers_for(const ForwardOptions& options) {
  if (options.tracer) return 1;
  return options.workers > 0 ? options.workers : worker_count();
}

std::vector<Ciphertext> collect(std::vector<std::optional<Ciphertext>>& slots) {
  std::vector<Ciphertext> out;
  out.reserve(slots.size());
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

void accumulate(const Backend& backend, std::optional<Ciphertext>& acc, Ciphertext term,
                OpLedger& ledger) {
  acc = acc ? backend.add(*acc, term, ledger) : std::move(term);
}

// Squares every ciphertext of `grid` under the layer's Square phase, keeping
// the pre-activation grid when requested.
ActivationGrid finish_layer(const Backend& backend, ActivationGrid grid, bool activation,
                            const std::string& phase, OpLedger& ledger,
                            const ForwardOptions& options, ActivationGrid* pre) {
  if (options.tracer) {
    for (std::size_t i = 0; i < grid.cts.size(); ++i) options.tracer(phase + ":output", i, grid.cts[i]);
  }
  if (pre) *pre = grid;
  if (!activation) return grid;
  PhaseScope scope(ledger, square_phase(phase));
  std::vector<std::optional<Ciphertext>> out(grid.cts.size());
  parallel_for(
      grid.cts.size(), ledger,
      [&](std::size_t i, OpLedger& local) { out[i] = square_activation(backend, grid.cts[i], local); },
      workers_for(options));
  grid.cts = collect(out);
  return grid;
}

void check_input(const ActivationGrid& input, const PackingPlan& plan, std::size_t l) {
  const auto& layer = plan.conv.at(l);
  if (input.layout != GridLayout::Conv || input.groups != layer.input_groups ||
      input.side != layer.combined.kernel) {
    throw ValidationError("conv layer " + std::to_string(l) + " expects " +
                          std::to_string(layer.input_groups) + " groups of " +
                          std::to_string(layer.combined.kernel) + "^2 ciphertexts");
  }
}

// Shared multiply-accumulate of Algs. 1, 4 and 5: output (k, u, v) sums
// in(i, δu+x, δv+y) ⊗ F(k, i, x, y) over i < channel_groups and the kernel.
ActivationGrid conv_accumulate(const Backend& backend, const ActivationGrid& input,
                               const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                               std::size_t l, OpLedger& ledger, const ForwardOptions& options,
                               int fold_steps) {
  check_input(input, plan, l);
  const auto& layer = plan.conv[l];
  const int r = plan.replication;
  const int fg = filter_groups(layer, r);
  const int cg = channel_groups(layer, r);
  const int k = layer.spec.kernel;
  const int d = layer.spec.stride;
  const int side = layer.out_side;
  if (filters.size() != uz(fg * cg * k * k)) {
    throw ValidationError("conv layer " + std::to_string(l) + " expects " +
                          std::to_string(fg * cg * k * k) + " filter ciphertexts, got " +
                          std::to_string(filters.size()));
  }
  const std::string phase = conv_phase(l);
  ActivationGrid out;
  out.layout = GridLayout::Conv;
  out.groups = fg;
  out.side = side;
  std::vector<std::optional<Ciphertext>> cts(uz(fg * side * side));
  PhaseScope scope(ledger, phase);
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t idx, OpLedger& local) {
        const int f = static_cast<int>(idx) / (side * side);
        const int u = static_cast<int>(idx) / side % side;
        const int v = static_cast<int>(idx) % side;
        std::optional<Ciphertext> acc;
        for (int c = 0; c < cg; ++c) {
          for (int x = 0; x < k; ++x) {
            for (int y = 0; y < k; ++y) {
              accumulate(backend, acc,
                         backend.multiply(input.at(c, d * u + x, d * v + y),
                                          filters[filter_index(layer, r, f, c, x, y)], local),
                         local);
            }
          }
        }
        cts[idx] = rotate_and_add(backend, std::move(*acc), plan.block_stride, fold_steps, local,
                                  options.tracer, phase + ":rotate_add", idx);
      },
      workers_for(options));
  out.cts = collect(cts);
  return out;
}

}  // namespace

std::string conv_phase(std::size_t l) { return "CL" + std::to_string(l + 1); }
std::string fc_phase(std::size_t l) { return "FL" + std::to_string(l + 1); }
std::string square_phase(const std::string& layer_phase) { return "Square(" + layer_phase + ")"; }

Ciphertext square_activation(const Backend& backend, const Ciphertext& ct, OpLedger& ledger) {
  return backend.square(ct, ledger);
}

Ciphertext rotate_and_add(const Backend& backend, Ciphertext ct, std::size_t base, int steps,
                          OpLedger& ledger, const Tracer& tracer, const std::string& event,
                          std::size_t index) {
  const std::size_t slots = backend.slot_count();
  for (int s = 0; s < steps; ++s) {
    const std::size_t offset = (base << s) % slots;
    ct = backend.add(ct, backend.rotate(ct, offset, ledger), ledger);
    if (tracer) tracer(event, index, ct);
  }
  return ct;
}

ActivationGrid conv_forward(const Backend& backend, const ActivationGrid& input,
                            const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                            std::size_t l, OpLedger& ledger, const ForwardOptions& options,
                            ActivationGrid* pre) {
  if (plan.conv.at(l).mode != PackingMode::Baseline) {
    throw ValidationError("conv layer " + std::to_string(l) + " is not baseline-packed");
  }
  auto out = conv_accumulate(backend, input, filters, plan, l, ledger, options, 0);
  return finish_layer(backend, std::move(out), plan.config.conv_has_activation(), conv_phase(l),
                      ledger, options, pre);
}

ActivationGrid conv_forward_cross_channel(const Backend& backend, const ActivationGrid& input,
                                          const std::vector<Ciphertext>& filters,
                                          const PackingPlan& plan, std::size_t l,
                                          OpLedger& ledger, const ForwardOptions& options,
                                          ActivationGrid* pre) {
  if (plan.conv.at(l).mode != PackingMode::CrossChannel) {
    throw ValidationError("conv layer " + std::to_string(l) + " is not cross-channel packed");
  }
  const int steps = std::countr_zero(static_cast<unsigned>(plan.replication));
  auto out = conv_accumulate(backend, input, filters, plan, l, ledger, options, steps);
  return finish_layer(backend, std::move(out), plan.config.conv_has_activation(), conv_phase(l),
                      ledger, options, pre);
}

ActivationGrid conv_forward_cross_filter(const Backend& backend, const ActivationGrid& input,
                                         const std::vector<Ciphertext>& filters,
                                         const PackingPlan& plan, std::size_t l, OpLedger& ledger,
                                         const ForwardOptions& options, ActivationGrid* pre) {
  if (plan.conv.at(l).mode != PackingMode::CrossFilter) {
    throw ValidationError("conv layer " + std::to_string(l) + " is not cross-filter packed");
  }
  auto out = conv_accumulate(backend, input, filters, plan, l, ledger, options, 0);
  return finish_layer(backend, std::move(out), plan.config.conv_has_activation(), conv_phase(l),
                      ledger, options, pre);
}

ActivationGrid conv_layer_forward(const Backend& backend, const ActivationGrid& input,
                                  const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                                  std::size_t l, OpLedger& ledger, const ForwardOptions& options,
                                  ActivationGrid* pre) {
  switch (plan.conv.at(l).mode) {
    case PackingMode::Baseline:
      return conv_forward(backend, input, filters, plan, l, ledger, options, pre);
    case PackingMode::CrossChannel:
      return conv_forward_cross_channel(backend, input, filters, plan, l, ledger, options, pre);
    case PackingMode::CrossFilter:
      return conv_forward_cross_filter(backend, input, filters, plan, l, ledger, options, pre);
  }
  throw Error("unknown packing mode");
}

ActivationGrid fc_forward_type1(const Backend& backend, const ActivationGrid& input,
                                const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                                std::size_t l, OpLedger& ledger, const ForwardOptions& options,
                                ActivationGrid* pre) {
  const auto& layer = plan.fc.at(l);
  if (layer.input_type != FcInputType::TypeI) {
    throw ValidationError("fc layer " + std::to_string(l) + " does not take Type I input");
  }
  const int in_cts = layer.input_ciphertexts;
  const int o = layer.spec.out;
  if (input.cts.size() != uz(in_cts) || weights.size() != uz(layer.weight_ciphertexts)) {
    throw ValidationError("fc layer " + std::to_string(l) + " expects " + std::to_string(in_cts) +
                          " input and " + std::to_string(layer.weight_ciphertexts) +
                          " weight ciphertexts");
  }
  const std::string phase = fc_phase(l);
  const int steps = std::countr_zero(plan.slots / uz(plan.n));
  ActivationGrid out;
  out.layout = GridLayout::FcTypeII;
  out.groups = o;
  std::vector<std::optional<Ciphertext>> cts(uz(o));
  {
    PhaseScope scope(ledger, phase);
    parallel_for(
        cts.size(), ledger,
        [&](std::size_t i, OpLedger& local) {
          std::optional<Ciphertext> acc;
          for (int j = 0; j < in_cts; ++j) {
            accumulate(backend, acc,
                       backend.multiply(input.cts[uz(j)],
                                        weights[fc_weight_index(layer, static_cast<int>(i), j)],
                                        local),
                       local);
          }
          if (options.tracer) options.tracer(phase + ":product", i, *acc);
          cts[i] = rotate_and_add(backend, std::move(*acc), uz(plan.n), steps, local,
                                  options.tracer, phase + ":rotate_add", i);
        },
        workers_for(options));
  }
  out.cts = collect(cts);
  return finish_layer(backend, std::move(out), layer.activation, phase, ledger, options, pre);
}

ActivationGrid fc_forward_type2(const Backend& backend, const ActivationGrid& input,
                                const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                                std::size_t l, OpLedger& ledger, const ForwardOptions& options,
                                ActivationGrid* pre) {
  const auto& layer = plan.fc.at(l);
  if (layer.input_type != FcInputType::TypeII) {
    throw ValidationError("fc layer " + std::to_string(l) + " does not take Type II input");
  }
  const int in = layer.spec.in;
  if (input.cts.size() != uz(in) || weights.size() != uz(layer.weight_ciphertexts)) {
    throw ValidationError("fc layer " + std::to_string(l) + " expects " + std::to_string(in) +
                          " input and " + std::to_string(layer.weight_ciphertexts) +
                          " weight ciphertexts");
  }
  const std::string phase = fc_phase(l);
  ActivationGrid out;
  out.layout = GridLayout::FcTypeI;
  out.groups = layer.output_ciphertexts;
  std::vector<std::optional<Ciphertext>> cts(uz(layer.output_ciphertexts));
  {
    PhaseScope scope(ledger, phase);
    parallel_for(
        cts.size(), ledger,
        [&](std::size_t q, OpLedger& local) {
          std::optional<Ciphertext> acc;
          for (int j = 0; j < in; ++j) {
            accumulate(backend, acc,
                       backend.multiply(input.cts[uz(j)],
                                        weights[fc_weight_index(layer, static_cast<int>(q), j)],
                                        local),
                       local);
          }
          if (options.tracer) options.tracer(phase + ":product", q, *acc);
          cts[q] = std::move(acc);
        },
        workers_for(options));
  }
  out.cts = collect(cts);
  return finish_layer(backend, std::move(out), layer.activation, phase, ledger, options, pre);
}

ActivationGrid infer(const Backend& backend, const EncryptedModel& model,
                     const ActivationGrid& inputs, const PackingPlan& plan, OpLedger& ledger,
                     const ForwardOptions& options, ForwardTrace* trace) {
  if (model.conv.size() != plan.conv.size() || model.fc.size() != plan.fc.size()) {
    throw ValidationError("encrypted model does not match the packing plan");
  }
  ActivationGrid current = inputs;
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    try {
      ActivationGrid pre;
      ActivationGrid next = conv_layer_forward(backend, current, model.conv[l], plan, l, ledger,
                                               options, trace ? &pre : nullptr);
      if (trace) {
        trace->conv_input.push_back(std::move(current));
        trace->conv_pre.push_back(std::move(pre));
      }
      current = std::move(next);
    } catch (const Error&) {
      rethrow_with_context(conv_phase(l));
    }
  }
  if (!plan.conv.empty()) current.layout = GridLayout::FcTypeI;
  for (std::size_t l = 0; l < plan.fc.size(); ++l) {
    try {
      ActivationGrid pre;
      ActivationGrid* keep = trace ? &pre : nullptr;
      ActivationGrid next =
          plan.fc[l].input_type == FcInputType::TypeI
              ? fc_forward_type1(backend, current, model.fc[l], plan, l, ledger, options, keep)
              : fc_forward_type2(backend, current, model.fc[l], plan, l, ledger, options, keep);
      if (trace) {
        trace->fc_input.push_back(std::move(current));
        trace->fc_pre.push_back(std::move(pre));
      }
      current = std::move(next);
    } catch (const Error&) {
      rethrow_with_context(fc_phase(l));
    }
  }
  return current;
}

}  // namespace hecnn
