#include "hecnn/backward.hpp"

#include <bit>
#include <optional>

#include "hecnn/errors.hpp"
#include "hecnn/parallel.hpp"

namespace hecnn {

namespace {

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

int resolve(int workers) { return workers > 0 ? workers : worker_count(); }

std::vector<Ciphertext> collect(std::vector<std::optional<Ciphertext>>& slots) {
  std::vector<Ciphertext> out;
  out.reserve(slots.size());
  for (auto& slot : slots) {
    if (!slot) throw Error("internal: gradient accumulator never initialized");
    out.push_back(std::move(*slot));
  }
  return out;
}

void accumulate(const Backend& backend, std::optional<Ciphertext>& acc, Ciphertext term,
                OpLedger& ledger) {
  acc = acc ? backend.add(*acc, term, ledger) : std::move(term);
}

SlotVector set_mask(std::size_t slots, std::size_t set_size, int target, double value) {
  SlotVector mask(slots);
  for (std::size_t p = static_cast<std::size_t>(target); p < slots; p += set_size) mask[p] = value;
  return mask;
}

// Rotate-and-add over a slot set: for bit k of `pattern` set the copy is
// rotated right by 2^k, otherwise left. With pattern = m every slot of a set
// sums into in-set index m; with pattern = set-1-m a value at index m spreads
// over its whole set.
Ciphertext signed_rotate_and_add(const Backend& backend, Ciphertext ct, std::size_t set_size,
                                 std::size_t pattern, OpLedger& ledger) {
  for (std::size_t step = 1, bit = 0; step < set_size; step <<= 1, ++bit) {
    const Ciphertext moved = (pattern >> bit) & 1U ? backend.rotate_right(ct, step, ledger)
                                                   : backend.rotate(ct, step, ledger);
    ct = backend.add(ct, moved, ledger);
  }
  return ct;
}

Ciphertext ensure_level(TeeService& tee, const Ciphertext& ct, int need, OpLedger& ledger) {
  return ct.level() >= need ? ct : tee.depth_refresh(ct, ledger);
}

ActivationGrid ensure_level(TeeService& tee, ActivationGrid grid, int need, OpLedger& ledger) {
  for (auto& ct : grid.cts) {
    if (ct.level() < need) ct = tee.depth_refresh(ct, ledger);
  }
  return grid;
}

std::vector<Ciphertext> ensure_level(TeeService& tee, std::vector<Ciphertext> cts, int need,
                                     OpLedger& ledger) {
  for (auto& ct : cts) ct = ensure_level(tee, ct, need, ledger);
  return cts;
}

void require_baseline(const PackingPlan& plan, std::size_t l) {
  if (plan.conv.at(l).mode != PackingMode::Baseline) {
    throw ValidationError("conv layer " + std::to_string(l) +
                          ": backward propagation requires baseline packing");
  }
}

std::string pair_text(int a, int b) {
  return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}

}  // namespace

GradientGrid square_backward(const Backend& backend, const ActivationGrid& pre,
                             const GradientGrid& post_grad, OpLedger& ledger, int workers) {
  if (pre.cts.size() != post_grad.cts.size()) {
    throw ValidationError("activation gradient shape does not match the retained activation");
  }
  GradientGrid out = post_grad;
  std::vector<std::optional<Ciphertext>> cts(pre.cts.size());
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t i, OpLedger& local) {
        const Ciphertext twice = backend.add(pre.cts[i], pre.cts[i], local);
        cts[i] = backend.multiply(twice, post_grad.cts[i], local);
      },
      resolve(workers));
  out.cts = collect(cts);
  return out;
}

GradientGrid fc_backward_type1(const Backend& backend, const GradientGrid& out_grads,
                               const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                               std::size_t l, OpLedger& ledger, int workers) {
  const auto& layer = plan.fc.at(l);
  if (layer.input_type != FcInputType::TypeI || out_grads.cts.size() != uz(layer.spec.out)) {
    throw ValidationError("fc layer " + std::to_string(l) + ": Type I backward expects " +
                          std::to_string(layer.spec.out) + " output gradients");
  }
  GradientGrid out;
  out.layout = GridLayout::FcTypeI;
  out.groups = layer.input_ciphertexts;
  std::vector<std::optional<Ciphertext>> cts(uz(layer.input_ciphertexts));
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t j, OpLedger& local) {
        for (int i = 0; i < layer.spec.out; ++i) {
          accumulate(backend, cts[j],
                     backend.multiply(out_grads.cts[uz(i)],
                                      weights[fc_weight_index(layer, i, static_cast<int>(j))], local),
                     local);
        }
      },
      resolve(workers));
  out.cts = collect(cts);
  return out;
}

GradientGrid fc_backward_type2(const Backend& backend, const GradientGrid& out_grads,
                               const std::vector<Ciphertext>& weights, const PackingPlan& plan,
                               std::size_t l, OpLedger& ledger, int workers) {
  const auto& layer = plan.fc.at(l);
  if (layer.input_type != FcInputType::TypeII ||
      out_grads.cts.size() != uz(layer.output_ciphertexts)) {
    throw ValidationError("fc layer " + std::to_string(l) + ": Type II backward expects " +
                          std::to_string(layer.output_ciphertexts) + " output gradients");
  }
  const int steps = std::countr_zero(plan.slots / uz(plan.n));
  GradientGrid out;
  out.layout = GridLayout::FcTypeII;
  out.groups = layer.spec.in;
  std::vector<std::optional<Ciphertext>> cts(uz(layer.spec.in));
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t j, OpLedger& local) {
        std::optional<Ciphertext> acc;
        for (int q = 0; q < layer.output_ciphertexts; ++q) {
          accumulate(backend, acc,
                     backend.multiply(out_grads.cts[uz(q)],
                                      weights[fc_weight_index(layer, q, static_cast<int>(j))], local),
                     local);
        }
        cts[j] = rotate_and_add(backend, std::move(*acc), uz(plan.n), steps, local);
      },
      resolve(workers));
  out.cts = collect(cts);
  return out;
}

Ciphertext fc_weight_gradient(const Backend& backend, const Ciphertext& out_grad,
                              const Ciphertext& activation, OpLedger& ledger) {
  return backend.multiply(out_grad, activation, ledger);
}

std::vector<Ciphertext> fc_weight_gradients(const Backend& backend, const GradientGrid& out_grads,
                                            const ActivationGrid& inputs, const PackingPlan& plan,
                                            std::size_t l, OpLedger& ledger, int workers) {
  const auto& layer = plan.fc.at(l);
  const int outs = layer.input_type == FcInputType::TypeI ? layer.spec.out : layer.output_ciphertexts;
  const int ins = layer.input_type == FcInputType::TypeI ? layer.input_ciphertexts : layer.spec.in;
  if (out_grads.cts.size() != uz(outs) || inputs.cts.size() != uz(ins)) {
    throw ValidationError("fc layer " + std::to_string(l) + ": weight gradient operand mismatch");
  }
  std::vector<std::optional<Ciphertext>> cts(uz(layer.weight_ciphertexts));
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t idx, OpLedger& local) {
        const int i = static_cast<int>(idx) / ins;
        const int j = static_cast<int>(idx) % ins;
        cts[fc_weight_index(layer, i, j)] =
            fc_weight_gradient(backend, out_grads.cts[uz(i)], inputs.cts[uz(j)], local);
      },
      resolve(workers));
  return collect(cts);
}

GradientGrid conv_backward(const Backend& backend, const GradientGrid& out_grads,
                           const std::vector<Ciphertext>& filters, const PackingPlan& plan,
                           std::size_t l, OpLedger& ledger, int workers) {
  require_baseline(plan, l);
  const auto& layer = plan.conv[l];
  const int alpha = layer.spec.channels;
  const int eps = layer.spec.filters;
  const int k = layer.spec.kernel;
  const int d = layer.spec.stride;
  const int out_side = layer.out_side;
  const int in_side = layer.combined.kernel;
  if (out_grads.groups != eps || out_grads.side != out_side) {
    throw ValidationError("conv layer " + std::to_string(l) + ": output gradient grid mismatch");
  }
  GradientGrid out;
  out.layout = GridLayout::Conv;
  out.groups = alpha;
  out.side = in_side;
  std::vector<std::optional<Ciphertext>> cts(uz(alpha * in_side * in_side));
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t idx, OpLedger& local) {
        const int i = static_cast<int>(idx) / (in_side * in_side);
        const int p = static_cast<int>(idx) / in_side % in_side;
        const int q = static_cast<int>(idx) % in_side;
        for (int f = 0; f < eps; ++f) {
          for (int x = 0; x < k; ++x) {
            if (p - x < 0 || (p - x) % d != 0 || (p - x) / d >= out_side) continue;
            for (int y = 0; y < k; ++y) {
              if (q - y < 0 || (q - y) % d != 0 || (q - y) / d >= out_side) continue;
              accumulate(backend, cts[idx],
                         backend.multiply(out_grads.at(f, (p - x) / d, (q - y) / d),
                                          filters[filter_index(layer, 1, f, i, x, y)], local),
                         local);
            }
          }
        }
        // Positions no window reads (stride > kernel) get a zero gradient at
        // the level of the computed ones.
        if (!cts[idx]) {
          cts[idx] = backend.cmult(out_grads.cts.front(), SlotVector(backend.slot_count(), 0.0), local);
        }
      },
      resolve(workers));
  out.cts = collect(cts);
  return out;
}

std::vector<Ciphertext> conv_weight_gradient(const Backend& backend, const GradientGrid& out_grads,
                                             const ActivationGrid& inputs,
                                             const PackingPlan& plan, std::size_t l,
                                             OpLedger& ledger, int workers) {
  require_baseline(plan, l);
  const auto& layer = plan.conv[l];
  const int alpha = layer.spec.channels;
  const int eps = layer.spec.filters;
  const int k = layer.spec.kernel;
  const int d = layer.spec.stride;
  const int out_side = layer.out_side;
  std::vector<std::optional<Ciphertext>> cts(uz(eps * alpha * k * k));
  parallel_for(
      cts.size(), ledger,
      [&](std::size_t idx, OpLedger& local) {
        const int y = static_cast<int>(idx) % k;
        const int x = static_cast<int>(idx) / k % k;
        const int i = static_cast<int>(idx) / (k * k) % alpha;
        const int f = static_cast<int>(idx) / (k * k * alpha);
        for (int u = 0; u < out_side; ++u) {
          for (int v = 0; v < out_side; ++v) {
            accumulate(backend, cts[idx],
                       backend.multiply(out_grads.at(f, u, v), inputs.at(i, d * u + x, d * v + y),
                                        local),
                       local);
          }
        }
      },
      resolve(workers));
  return collect(cts);
}

std::vector<Ciphertext> weight_update_deltas(const Backend& backend, TeeService& tee,
                                             const std::vector<Ciphertext>& grads,
                                             const std::vector<int>& targets,
                                             std::size_t set_size, double eta, OpLedger& ledger,
                                             UpdateTrace* trace, int workers) {
  const std::size_t slots = backend.slot_count();
  if (set_size == 0 || !std::has_single_bit(set_size) || set_size > slots) {
    throw ValidationError("weight-update set size must be a power of two not exceeding S");
  }
  if (targets.size() != grads.size()) throw ValidationError("one target index per gradient");
  const std::size_t count = grads.size();

  // Step 2: fold each set onto its target index and scale by -eta.
  std::vector<std::optional<Ciphertext>> masked_slots(count);
  parallel_for(
      count, ledger,
      [&](std::size_t g, OpLedger& local) {
        const Ciphertext folded =
            signed_rotate_and_add(backend, grads[g], set_size, uz(targets[g]), local);
        masked_slots[g] = backend.cmult(folded, set_mask(slots, set_size, targets[g], -eta), local);
      },
      resolve(workers));
  std::vector<Ciphertext> masked = collect(masked_slots);

  // Steps 3-4: merge groups of set_size gradients with distinct targets.
  std::vector<std::vector<int>> groups;
  for (std::size_t g = 0; g < count; g += set_size) {
    std::vector<int> group;
    std::vector<bool> seen(set_size, false);
    for (std::size_t h = g; h < std::min(count, g + set_size); ++h) {
      const int m = targets[h];
      if (m < 0 || uz(m) >= set_size || seen[uz(m)]) {
        throw ValidationError("weight-update target " + std::to_string(m) +
                              " is outside its slot set or collides within a merge group");
      }
      seen[uz(m)] = true;
      group.push_back(static_cast<int>(h));
    }
    groups.push_back(std::move(group));
  }
  std::vector<Ciphertext> merged;
  for (const auto& group : groups) {
    Ciphertext acc = masked[uz(group.front())];
    for (std::size_t h = 1; h < group.size(); ++h) acc = backend.add(acc, masked[uz(group[h])], ledger);
    merged.push_back(std::move(acc));
  }

  // Step 5: the only TEE touch.
  std::vector<Ciphertext> refreshed;
  for (const auto& ct : merged) refreshed.push_back(tee.refresh(ct, ledger));

  // Steps 6-7: split by single-position masks and populate each set.
  std::vector<std::optional<Ciphertext>> split_slots(count);
  std::vector<std::optional<Ciphertext>> populated_slots(count);
  parallel_for(
      count, ledger,
      [&](std::size_t g, OpLedger& local) {
        const std::size_t group = g / set_size;
        split_slots[g] =
            backend.cmult(refreshed[group], set_mask(slots, set_size, targets[g], 1.0), local);
        populated_slots[g] = signed_rotate_and_add(backend, *split_slots[g], set_size,
                                                   set_size - 1 - uz(targets[g]), local);
      },
      resolve(workers));
  std::vector<Ciphertext> populated = collect(populated_slots);

  if (trace) {
    trace->set_size = set_size;
    trace->targets = targets;
    trace->masked = std::move(masked);
    trace->groups = std::move(groups);
    trace->merged = std::move(merged);
    trace->refreshed = std::move(refreshed);
    trace->split = collect(split_slots);
    trace->populated = populated;
  }
  return populated;
}

std::size_t fc_update_set_size(const PackingPlan& plan) { return uz(plan.n); }

std::size_t conv_update_set_size(const PackingPlan& plan) {
  return std::bit_ceil(plan.block_size);
}

void check_trainable(const PackingPlan& plan) {
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    require_baseline(plan, l);
    const std::size_t set = conv_update_set_size(plan);
    if (uz(plan.conv[l].filter_ciphertexts) > set) {
      const auto& spec = plan.conv[l].spec;
      const int k2 = spec.kernel * spec.kernel;
      const int m = static_cast<int>(set);
      throw ValidationError("conv layer " + std::to_string(l) + ": filter (k,i) = " +
                            pair_text(m / (spec.channels * k2), m / k2 % spec.channels) +
                            " has update index " + std::to_string(m) + " >= slot set size " +
                            std::to_string(set));
    }
  }
  for (std::size_t l = 0; l < plan.fc.size(); ++l) {
    const auto& layer = plan.fc[l];
    if (layer.weight_ciphertexts > plan.n) {
      const int ins = layer.input_type == FcInputType::TypeI ? layer.input_ciphertexts : layer.spec.in;
      const int m = plan.n;
      throw ValidationError("fc layer " + std::to_string(l) + ": weight (i,j) = " +
                            pair_text(m / ins, m % ins) + " gives update index i*" +
                            std::to_string(ins) + "+j = " + std::to_string(m) +
                            " which is not < n = " + std::to_string(plan.n));
    }
  }
}

void fc_weight_update(const Backend& backend, TeeService& tee, const std::vector<Ciphertext>& grads,
                      std::vector<Ciphertext>& weights, const PackingPlan& plan, std::size_t l,
                      double eta, OpLedger& ledger, UpdateTrace* trace, int workers) {
  const auto& layer = plan.fc.at(l);
  if (grads.size() != weights.size() || weights.size() != uz(layer.weight_ciphertexts)) {
    throw ValidationError("fc layer " + std::to_string(l) + ": gradient/weight count mismatch");
  }
  if (layer.weight_ciphertexts > plan.n) {
    const int ins = layer.input_type == FcInputType::TypeI ? layer.input_ciphertexts : layer.spec.in;
    throw ValidationError("fc layer " + std::to_string(l) + ": weight (i,j) = " +
                          pair_text(plan.n / ins, plan.n % ins) +
                          " violates i*ι'+j < n = " + std::to_string(plan.n));
  }
  std::vector<int> targets(grads.size());
  for (std::size_t g = 0; g < grads.size(); ++g) targets[g] = static_cast<int>(g);
  const auto deltas = weight_update_deltas(backend, tee, grads, targets, fc_update_set_size(plan),
                                           eta, ledger, trace, workers);
  for (std::size_t g = 0; g < weights.size(); ++g) weights[g] = backend.add(weights[g], deltas[g], ledger);
}

void conv_weight_update(const Backend& backend, TeeService& tee,
                        const std::vector<Ciphertext>& grads, std::vector<Ciphertext>& filters,
                        const PackingPlan& plan, std::size_t l, double eta, OpLedger& ledger,
                        UpdateTrace* trace, int workers) {
  require_baseline(plan, l);
  if (grads.size() != filters.size()) {
    throw ValidationError("conv layer " + std::to_string(l) + ": gradient/filter count mismatch");
  }
  const std::size_t set = conv_update_set_size(plan);
  if (grads.size() > set) {
    throw ValidationError("conv layer " + std::to_string(l) + ": " + std::to_string(grads.size()) +
                          " filter elements exceed the update slot set of " + std::to_string(set));
  }
  std::vector<int> targets(grads.size());
  for (std::size_t g = 0; g < grads.size(); ++g) targets[g] = static_cast<int>(g);
  const auto deltas =
      weight_update_deltas(backend, tee, grads, targets, set, eta, ledger, trace, workers);
  for (std::size_t g = 0; g < filters.size(); ++g) filters[g] = backend.add(filters[g], deltas[g], ledger);
}

BackwardResult backward_pass(const Backend& backend, TeeService& tee, const EncryptedModel& model,
                             const ForwardTrace& trace, const GradientGrid& output_grad,
                             const PackingPlan& plan, OpLedger& ledger,
                             const BackwardOptions& options) {
  const std::size_t c = plan.conv.size();
  const std::size_t f = plan.fc.size();
  if (trace.fc_input.size() != f || trace.conv_input.size() != c) {
    throw ValidationError("forward trace does not cover every layer");
  }
  for (std::size_t l = 0; l < c; ++l) require_baseline(plan, l);
  const int workers = options.workers;
  BackwardResult result;
  result.conv_weight_grads.resize(c);
  result.fc_weight_grads.resize(f);
  result.conv_input_grads.resize(c);
  result.fc_input_grads.resize(f);

  GradientGrid grad = output_grad;
  for (std::size_t li = f; li-- > 0;) {
    const auto& layer = plan.fc[li];
    const std::string phase = fc_phase(li);
    try {
      if (layer.activation) {
        PhaseScope scope(ledger, "BP." + square_phase(phase));
        grad = square_backward(backend, ensure_level(tee, trace.fc_pre[li], 1, ledger),
                               ensure_level(tee, grad, 1, ledger), ledger, workers);
      }
      grad = ensure_level(tee, grad, 2, ledger);
      {
        PhaseScope scope(ledger, "Grad." + phase);
        result.fc_weight_grads[li] =
            fc_weight_gradients(backend, grad, ensure_level(tee, trace.fc_input[li], 2, ledger),
                                plan, li, ledger, workers);
      }
      if (li > 0 || c > 0 || options.input_gradient) {
        PhaseScope scope(ledger, "BP." + phase);
        const auto weights = ensure_level(tee, model.fc[li], 1, ledger);
        grad = layer.input_type == FcInputType::TypeI
                   ? fc_backward_type1(backend, grad, weights, plan, li, ledger, workers)
                   : fc_backward_type2(backend, grad, weights, plan, li, ledger, workers);
        result.fc_input_grads[li] = grad;
      }
    } catch (const Error&) {
      rethrow_with_context("backward " + phase);
    }
  }

  if (c > 0) {
    grad.layout = GridLayout::Conv;
    grad.side = 1;
  }
  for (std::size_t li = c; li-- > 0;) {
    const std::string phase = conv_phase(li);
    try {
      if (plan.config.conv_has_activation()) {
        PhaseScope scope(ledger, "BP." + square_phase(phase));
        grad = square_backward(backend, ensure_level(tee, trace.conv_pre[li], 1, ledger),
                               ensure_level(tee, grad, 1, ledger), ledger, workers);
      }
      grad = ensure_level(tee, grad, 2, ledger);
      {
        PhaseScope scope(ledger, "Grad." + phase);
        result.conv_weight_grads[li] =
            conv_weight_gradient(backend, grad, ensure_level(tee, trace.conv_input[li], 2, ledger),
                                 plan, li, ledger, workers);
      }
      if (li > 0 || options.input_gradient) {
        PhaseScope scope(ledger, "BP." + phase);
        grad = conv_backward(backend, grad, ensure_level(tee, model.conv[li], 1, ledger), plan, li,
                             ledger, workers);
        result.conv_input_grads[li] = grad;
      }
    } catch (const Error&) {
      rethrow_with_context("backward " + phase);
    }
  }
  return result;
}

TrainResult train_step(const Backend& backend, TeeService& tee, const EncryptedModel& model,
                       const ActivationGrid& inputs, const Tensor& labels,
                       const PackingPlan& plan, double eta, OpLedger& ledger,
                       const BackwardOptions& options) {
  check_trainable(plan);
  check_label_shape(labels, plan.config);
  ForwardTrace trace;
  ForwardOptions forward_options;
  forward_options.workers = options.workers;
  const ActivationGrid output = infer(backend, model, inputs, plan, ledger, forward_options, &trace);
  const GradientGrid output_grad = tee.final_gradient(output, labels, plan, ledger);

  TrainResult result;
  result.gradients =
      backward_pass(backend, tee, model, trace, output_grad, plan, ledger, options);
  result.model = model;
  result.output = output;
  result.fc_updates.resize(plan.fc.size());
  result.conv_updates.resize(plan.conv.size());
  for (std::size_t l = 0; l < plan.fc.size(); ++l) {
    PhaseScope scope(ledger, "Update." + fc_phase(l));
    fc_weight_update(backend, tee, result.gradients.fc_weight_grads[l], result.model.fc[l], plan, l,
                     eta, ledger, &result.fc_updates[l], options.workers);
  }
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    PhaseScope scope(ledger, "Update." + conv_phase(l));
    conv_weight_update(backend, tee, result.gradients.conv_weight_grads[l], result.model.conv[l],
                       plan, l, eta, ledger, &result.conv_updates[l], options.workers);
  }
  return result;
}

}  // namespace hecnn
