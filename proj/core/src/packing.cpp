#include "hecnn/packing.hpp"

#include "hecnn/errors.hpp"

namespace hecnn {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

// Slot of pi-set position (a, b), input t, inside replica/channel block `block`.
std::size_t grid_slot(const PackingPlan& plan, int block, int a, int b, int t) {
  return uz(block) * plan.block_stride + (uz(a) * uz(plan.grid_side) + uz(b)) * uz(plan.n) + uz(t);
}

int grid_side_at(const PackingPlan& plan, std::size_t l) {
  return l < plan.conv.size() ? plan.conv[l].combined.kernel : 1;
}

int combined_stride_at(const PackingPlan& plan, std::size_t l) {
  return l < plan.conv.size() ? plan.conv[l].combined.stride : 1;
}

int channels_at(const PackingPlan& plan, std::size_t l) {
  return l < plan.conv.size() ? plan.conv[l].spec.channels : plan.conv.back().spec.filters;
}

int groups_at(const PackingPlan& plan, std::size_t l) {
  return l < plan.conv.size() ? plan.conv[l].input_groups : plan.conv.back().output_groups;
}

std::vector<Ciphertext> encrypt_all(const std::vector<SlotVector>& pts, const Backend& backend,
                                    OpLedger& ledger) {
  std::vector<Ciphertext> out;
  out.reserve(pts.size());
  for (const auto& pt : pts) out.push_back(backend.encrypt(pt, ledger));
  return out;
}

void fill_block(SlotVector& pt, const PackingPlan& plan, int block, double value) {
  const std::size_t start = uz(block) * plan.block_stride;
  for (std::size_t s = 0; s < plan.block_size; ++s) pt[start + s] = value;
}

}  // namespace

int filter_groups(const ConvLayerPlan& layer, int replication) {
  return layer.mode == PackingMode::CrossFilter ? ceil_div(layer.spec.filters, replication)
                                                : layer.spec.filters;
}

int channel_groups(const ConvLayerPlan& layer, int replication) {
  return layer.mode == PackingMode::CrossChannel ? ceil_div(layer.spec.channels, replication)
                                                 : layer.spec.channels;
}

std::size_t filter_index(const ConvLayerPlan& layer, int replication, int filter_group,
                         int channel_group, int x, int y) {
  const std::size_t k = uz(layer.spec.kernel);
  return ((uz(filter_group) * uz(channel_groups(layer, replication)) + uz(channel_group)) * k +
          uz(x)) * k + uz(y);
}

std::size_t fc_weight_index(const FcLayerPlan& layer, int out, int in) {
  const int inputs = layer.input_type == FcInputType::TypeI ? layer.input_ciphertexts : layer.spec.in;
  return uz(out) * uz(inputs) + uz(in);
}

int map_side(const PackingPlan& plan, std::size_t l) {
  int side = plan.config.input_side;
  for (std::size_t i = 0; i < l && i < plan.conv.size(); ++i) {
    side = 1 + (side - plan.conv[i].spec.kernel) / plan.conv[i].spec.stride;
  }
  return side;
}

ChannelSlot locate_channel(const PackingPlan& plan, std::size_t l, int ch) {
  const int r = plan.replication;
  if (l < plan.conv.size()) {
    if (plan.conv[l].mode == PackingMode::CrossChannel) return {ch / r, ch % r};
    return {ch, 0};
  }
  if (plan.conv.back().mode == PackingMode::CrossFilter) return {ch / r, ch % r};
  return {ch, 0};
}

std::vector<SlotVector> encode_inputs(const Tensor& batch, const PackingPlan& plan) {
  check_batch_shape(batch, plan.config);
  const int n = plan.n;
  std::vector<SlotVector> out;

  if (plan.conv.empty()) {
    const auto& layer = plan.fc.front();
    const int side = plan.config.input_side;
    out.assign(uz(layer.input_ciphertexts), SlotVector(plan.slots));
    for (int i = 0; i < plan.config.channels_in(); ++i) {
      for (int x = 0; x < side; ++x) {
        for (int y = 0; y < side; ++y) {
          const auto& slot = layer.features[(uz(i) * uz(side) + uz(x)) * uz(side) + uz(y)];
          for (int t = 0; t < n; ++t) out[uz(slot.ciphertext)][slot.base + uz(t)] = batch.at(t, i, x, y);
        }
      }
    }
    return out;
  }

  const auto& first = plan.conv.front();
  const int r = plan.replication;
  const int gk = first.combined.kernel;
  const int gs = first.combined.stride;
  const int grid = plan.grid_side;
  const int alpha = first.spec.channels;
  out.assign(uz(first.input_groups * gk * gk), SlotVector(plan.slots));

  for (int g = 0; g < first.input_groups; ++g) {
    for (int block = 0; block < r; ++block) {
      int ch = -1;
      switch (first.mode) {
        case PackingMode::Baseline: ch = block == 0 ? g : -1; break;
        case PackingMode::CrossChannel: ch = g * r + block < alpha ? g * r + block : -1; break;
        case PackingMode::CrossFilter: ch = g; break;
      }
      if (ch < 0) continue;
      for (int u = 0; u < gk; ++u) {
        for (int v = 0; v < gk; ++v) {
          auto& pt = out[(uz(g) * uz(gk) + uz(u)) * uz(gk) + uz(v)];
          for (int a = 0; a < grid; ++a) {
            for (int b = 0; b < grid; ++b) {
              for (int t = 0; t < n; ++t) {
                pt[grid_slot(plan, block, a, b, t)] = batch.at(t, ch, u + a * gs, v + b * gs);
              }
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<SlotVector> encode_filters(const Tensor& filters, const PackingPlan& plan,
                                       std::size_t l) {
  const auto& layer = plan.conv.at(l);
  const auto& spec = layer.spec;
  if (filters.shape() != std::vector<std::size_t>{uz(spec.filters), uz(spec.channels),
                                                  uz(spec.kernel), uz(spec.kernel)}) {
    throw ValidationError("conv[" + std::to_string(l) + "] filters have shape " +
                          filters.shape_string());
  }
  const int r = plan.replication;
  const int fg = filter_groups(layer, r);
  const int cg = channel_groups(layer, r);
  const int k = spec.kernel;
  std::vector<SlotVector> out(uz(fg * cg * k * k), SlotVector(plan.slots));

  for (int f = 0; f < fg; ++f) {
    for (int c = 0; c < cg; ++c) {
      for (int x = 0; x < k; ++x) {
        for (int y = 0; y < k; ++y) {
          auto& pt = out[filter_index(layer, r, f, c, x, y)];
          switch (layer.mode) {
            case PackingMode::Baseline:
              fill_block(pt, plan, 0, filters.at(f, c, x, y));
              break;
            case PackingMode::CrossChannel:
              for (int b = 0; b < r && c * r + b < spec.channels; ++b) {
                fill_block(pt, plan, b, filters.at(f, c * r + b, x, y));
              }
              break;
            case PackingMode::CrossFilter:
              for (int b = 0; b < r && f * r + b < spec.filters; ++b) {
                fill_block(pt, plan, b, filters.at(f * r + b, c, x, y));
              }
              break;
          }
        }
      }
    }
  }
  return out;
}

std::vector<SlotVector> encode_fc_weights(const Tensor& weights, const PackingPlan& plan,
                                          std::size_t l) {
  const auto& layer = plan.fc.at(l);
  const int in = layer.spec.in;
  const int o = layer.spec.out;
  if (weights.shape() != std::vector<std::size_t>{uz(o), uz(in)}) {
    throw ValidationError("fc[" + std::to_string(l) + "] weights have shape " +
                          weights.shape_string() + ", expected (" + std::to_string(o) + ", " +
                          std::to_string(in) + ")");
  }
  const int n = plan.n;
  std::vector<SlotVector> out(uz(layer.weight_ciphertexts), SlotVector(plan.slots));

  if (layer.input_type == FcInputType::TypeI) {
    for (int i = 0; i < o; ++i) {
      for (int w = 0; w < in; ++w) {
        const auto& slot = layer.features[uz(w)];
        auto& pt = out[fc_weight_index(layer, i, slot.ciphertext)];
        for (int t = 0; t < n; ++t) pt[slot.base + uz(t)] = weights.at(i, w);
      }
    }
  } else {
    const int per_ct = static_cast<int>(plan.slots / uz(n));
    for (int w = 0; w < o; ++w) {
      const int q = w / per_ct;
      const int block = w % per_ct;
      for (int j = 0; j < in; ++j) {
        auto& pt = out[fc_weight_index(layer, q, j)];
        for (int t = 0; t < n; ++t) pt[uz(block) * uz(n) + uz(t)] = weights.at(w, j);
      }
    }
  }
  return out;
}

ActivationGrid pack_inputs(const Tensor& batch, const PackingPlan& plan, const Backend& backend,
                           OpLedger& ledger) {
  ActivationGrid grid;
  if (plan.conv.empty()) {
    grid.layout = GridLayout::FcTypeI;
    grid.groups = plan.fc.front().input_ciphertexts;
  } else {
    grid.layout = GridLayout::Conv;
    grid.groups = plan.conv.front().input_groups;
    grid.side = plan.conv.front().combined.kernel;
  }
  grid.cts = encrypt_all(encode_inputs(batch, plan), backend, ledger);
  return grid;
}

ActivationGrid pack_inputs_cross_channel(const Tensor& batch, const PackingPlan& plan,
                                         const Backend& backend, OpLedger& ledger) {
  if (plan.conv.empty() || plan.conv.front().mode != PackingMode::CrossChannel) {
    throw ValidationError("plan does not use cross-channel packing at layer 0");
  }
  return pack_inputs(batch, plan, backend, ledger);
}

std::vector<Ciphertext> pack_filters(const Tensor& filters, const PackingPlan& plan,
                                     std::size_t l, const Backend& backend, OpLedger& ledger) {
  return encrypt_all(encode_filters(filters, plan, l), backend, ledger);
}

std::vector<Ciphertext> pack_fc_weights_type1(const Tensor& weights, const PackingPlan& plan,
                                              std::size_t l, const Backend& backend,
                                              OpLedger& ledger) {
  if (plan.fc.at(l).input_type != FcInputType::TypeI) {
    throw ValidationError("fc[" + std::to_string(l) + "] is not a Type I layer");
  }
  return encrypt_all(encode_fc_weights(weights, plan, l), backend, ledger);
}

std::vector<Ciphertext> pack_fc_weights_type2(const Tensor& weights, const PackingPlan& plan,
                                              std::size_t l, const Backend& backend,
                                              OpLedger& ledger) {
  if (plan.fc.at(l).input_type != FcInputType::TypeII) {
    throw ValidationError("fc[" + std::to_string(l) + "] is not a Type II layer");
  }
  return encrypt_all(encode_fc_weights(weights, plan, l), backend, ledger);
}

EncryptedModel encrypt_model(const PlainModel& model, const PackingPlan& plan,
                             const Backend& backend, OpLedger& ledger) {
  check_model_shapes(model, plan.config);
  EncryptedModel out;
  {
    PhaseScope phase(ledger, "Enc.Filters");
    for (std::size_t l = 0; l < plan.conv.size(); ++l) {
      out.conv.push_back(pack_filters(model.conv[l], plan, l, backend, ledger));
    }
  }
  for (std::size_t l = 0; l < plan.fc.size(); ++l) {
    PhaseScope phase(ledger, "Enc.Weight" + std::to_string(l + 1));
    out.fc.push_back(plan.fc[l].input_type == FcInputType::TypeI
                         ? pack_fc_weights_type1(model.fc[l], plan, l, backend, ledger)
                         : pack_fc_weights_type2(model.fc[l], plan, l, backend, ledger));
  }
  return out;
}

Tensor unpack_outputs(const std::vector<SlotVector>& final_cts, const PackingPlan& plan) {
  const auto& last = plan.fc.back();
  const int n = plan.n;
  const int o = last.spec.out;
  if (static_cast<int>(final_cts.size()) != last.output_ciphertexts) {
    throw ValidationError("expected " + std::to_string(last.output_ciphertexts) +
                          " output ciphertexts, got " + std::to_string(final_cts.size()));
  }
  Tensor logits({uz(n), uz(o)});
  const int per_ct = static_cast<int>(plan.slots / uz(n));
  for (int j = 0; j < o; ++j) {
    for (int t = 0; t < n; ++t) {
      if (last.input_type == FcInputType::TypeI) {
        logits.at(t, j) = final_cts[uz(j)][uz(t)];
      } else {
        logits.at(t, j) = final_cts[uz(j / per_ct)][uz(j % per_ct) * uz(n) + uz(t)];
      }
    }
  }
  return logits;
}

Tensor unpack_outputs(const ActivationGrid& final_grid, const PackingPlan& plan,
                      const Decryptor& decrypt) {
  std::vector<SlotVector> pts;
  for (const auto& ct : final_grid.cts) pts.push_back(decrypt(ct));
  return unpack_outputs(pts, plan);
}

PlainModel decode_model(const EncryptedModel& model, const PackingPlan& plan,
                        const Decryptor& decrypt) {
  PlainModel out;
  const int r = plan.replication;
  const int n = plan.n;
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    const auto& layer = plan.conv[l];
    const auto& spec = layer.spec;
    const int k = spec.kernel;
    Tensor filters({uz(spec.filters), uz(spec.channels), uz(k), uz(k)});
    std::vector<SlotVector> pts;
    for (const auto& ct : model.conv.at(l)) pts.push_back(decrypt(ct));
    for (int f = 0; f < spec.filters; ++f) {
      for (int c = 0; c < spec.channels; ++c) {
        int fg = f, cg = c, block = 0;
        if (layer.mode == PackingMode::CrossChannel) {
          cg = c / r;
          block = c % r;
        } else if (layer.mode == PackingMode::CrossFilter) {
          fg = f / r;
          block = f % r;
        }
        for (int x = 0; x < k; ++x) {
          for (int y = 0; y < k; ++y) {
            filters.at(f, c, x, y) = pts[filter_index(layer, r, fg, cg, x, y)][uz(block) * plan.block_stride];
          }
        }
      }
    }
    out.conv.push_back(std::move(filters));
  }
  const int per_ct = static_cast<int>(plan.slots / uz(n));
  for (std::size_t l = 0; l < plan.fc.size(); ++l) {
    const auto& layer = plan.fc[l];
    const int in = layer.spec.in;
    const int o = layer.spec.out;
    Tensor weights({uz(o), uz(in)});
    std::vector<SlotVector> pts;
    for (const auto& ct : model.fc.at(l)) pts.push_back(decrypt(ct));
    for (int i = 0; i < o; ++i) {
      for (int w = 0; w < in; ++w) {
        if (layer.input_type == FcInputType::TypeI) {
          const auto& slot = layer.features[uz(w)];
          weights.at(i, w) = pts[fc_weight_index(layer, i, slot.ciphertext)][slot.base];
        } else {
          weights.at(i, w) = pts[fc_weight_index(layer, i / per_ct, w)][uz(i % per_ct) * uz(n)];
        }
      }
    }
    out.fc.push_back(std::move(weights));
  }
  return out;
}

Tensor decode_conv_grid(const ActivationGrid& grid, const PackingPlan& plan, std::size_t l,
                        const Decryptor& decrypt, bool accumulate) {
  const int n = plan.n;
  const int channels = channels_at(plan, l);
  const int side = map_side(plan, l);
  const int gk = grid_side_at(plan, l);
  const int gs = combined_stride_at(plan, l);
  if (grid.layout != GridLayout::Conv || grid.groups != groups_at(plan, l) || grid.side != gk) {
    throw ValidationError("activation grid does not match conv boundary " + std::to_string(l));
  }
  std::vector<SlotVector> pts;
  for (const auto& ct : grid.cts) pts.push_back(decrypt(ct));
  Tensor out({uz(n), uz(channels), uz(side), uz(side)});
  for (int ch = 0; ch < channels; ++ch) {
    const ChannelSlot where = locate_channel(plan, l, ch);
    for (int u = 0; u < gk; ++u) {
      for (int v = 0; v < gk; ++v) {
        const auto& pt = pts[grid.index(where.group, u, v)];
        for (int a = 0; a < plan.grid_side; ++a) {
          for (int b = 0; b < plan.grid_side; ++b) {
            for (int t = 0; t < n; ++t) {
              const double value = pt[grid_slot(plan, where.block, a, b, t)];
              double& cell = out.at(t, ch, u + a * gs, v + b * gs);
              cell = accumulate ? cell + value : value;
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor decode_fc_input(const ActivationGrid& grid, const PackingPlan& plan, std::size_t l,
                       const Decryptor& decrypt) {
  const auto& layer = plan.fc.at(l);
  const int n = plan.n;
  const int in = layer.spec.in;
  std::vector<SlotVector> pts;
  for (const auto& ct : grid.cts) pts.push_back(decrypt(ct));
  Tensor out({uz(n), uz(in)});
  for (int w = 0; w < in; ++w) {
    for (int t = 0; t < n; ++t) {
      if (layer.input_type == FcInputType::TypeI) {
        const auto& slot = layer.features[uz(w)];
        out.at(t, w) = pts.at(uz(slot.ciphertext))[slot.base + uz(t)];
      } else {
        out.at(t, w) = pts.at(uz(w))[uz(t)];
      }
    }
  }
  return out;
}

Tensor decode_fc_weight_gradient(const std::vector<Ciphertext>& grads, const PackingPlan& plan,
                                 std::size_t l, const Decryptor& decrypt) {
  const auto& layer = plan.fc.at(l);
  const int n = plan.n;
  const int in = layer.spec.in;
  const int o = layer.spec.out;
  const int per_ct = static_cast<int>(plan.slots / uz(n));
  std::vector<SlotVector> pts;
  for (const auto& ct : grads) pts.push_back(decrypt(ct));
  Tensor out({uz(o), uz(in)});
  for (int i = 0; i < o; ++i) {
    for (int w = 0; w < in; ++w) {
      std::size_t base = 0;
      const SlotVector* pt = nullptr;
      if (layer.input_type == FcInputType::TypeI) {
        const auto& slot = layer.features[uz(w)];
        pt = &pts.at(fc_weight_index(layer, i, slot.ciphertext));
        base = slot.base;
      } else {
        pt = &pts.at(fc_weight_index(layer, i / per_ct, w));
        base = uz(i % per_ct) * uz(n);
      }
      double sum = 0.0;
      for (int t = 0; t < n; ++t) sum += (*pt)[base + uz(t)];
      out.at(i, w) = sum;
    }
  }
  return out;
}

Tensor decode_conv_weight_gradient(const std::vector<Ciphertext>& grads, const PackingPlan& plan,
                                   std::size_t l, const Decryptor& decrypt) {
  const auto& layer = plan.conv.at(l);
  const auto& spec = layer.spec;
  if (layer.mode != PackingMode::Baseline) {
    throw ValidationError("conv weight gradients are defined for baseline packing only");
  }
  const int k = spec.kernel;
  Tensor out({uz(spec.filters), uz(spec.channels), uz(k), uz(k)});
  for (int f = 0; f < spec.filters; ++f) {
    for (int c = 0; c < spec.channels; ++c) {
      for (int x = 0; x < k; ++x) {
        for (int y = 0; y < k; ++y) {
          const SlotVector pt = decrypt(grads.at(filter_index(layer, plan.replication, f, c, x, y)));
          double sum = 0.0;
          for (double v : pt.values()) sum += v;
          out.at(f, c, x, y) = sum;
        }
      }
    }
  }
  return out;
}

}  // namespace hecnn
