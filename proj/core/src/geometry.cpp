#include "hecnn/geometry.hpp"

#include <bit>
#include <sstream>

#include "hecnn/errors.hpp"

namespace hecnn {

int ModelConfig::channels_in() const {
  if (input_channels > 0) return input_channels;
  return conv.empty() ? 1 : conv.front().channels;
}

bool ModelConfig::fc_has_activation(std::size_t l) const {
  if (!activation) return false;
  return l + 1 < fc.size() || final_activation;
}

int ModelConfig::depth() const {
  int squares = 0;
  if (activation) {
    squares = static_cast<int>(conv.size());
    for (std::size_t l = 0; l < fc.size(); ++l) squares += fc_has_activation(l) ? 1 : 0;
  }
  return static_cast<int>(conv.size() + fc.size()) + squares;
}

std::string to_string(PackingMode mode) {
  switch (mode) {
    case PackingMode::Baseline: return "baseline";
    case PackingMode::CrossChannel: return "cross-channel";
    case PackingMode::CrossFilter: return "cross-filter";
  }
  return "?";
}

std::string to_string(FcInputType type) { return type == FcInputType::TypeI ? "I" : "II"; }

namespace {

int ceil_div(long long a, long long b) { return static_cast<int>((a + b - 1) / b); }

[[noreturn]] void fail(const std::string& message) { throw ValidationError(message); }

// Backward recurrence from the last layer: γ̃_{c-1} = γ_{c-1}, and the
// smallest γ̃_l satisfying γ̃_{l+1} = 1 + ⌊(γ̃_l - γ_l)/δ_l⌋ is
// γ_l + (γ̃_{l+1} - 1)·δ_l. δ̃_l = δ_l·δ̃_{l+1}.
std::vector<CombinedParams> combined_by_recurrence(std::span<const ConvLayerSpec> layers) {
  const std::size_t c = layers.size();
  std::vector<CombinedParams> out(c);
  for (std::size_t i = c; i-- > 0;) {
    if (i + 1 == c) {
      out[i] = {layers[i].kernel, layers[i].stride};
    } else {
      out[i].kernel = layers[i].kernel + (out[i + 1].kernel - 1) * layers[i].stride;
      out[i].stride = layers[i].stride * out[i + 1].stride;
    }
  }
  return out;
}

}  // namespace

std::vector<CombinedParams> derive_combined_params(std::span<const ConvLayerSpec> layers) {
  const std::size_t c = layers.size();
  std::vector<CombinedParams> out(c);
  for (std::size_t l = 0; l < c; ++l) {
    long long kernel = 1;
    long long stride_prefix = 1;  // ∏_{j=l}^{i-1} δ_j
    for (std::size_t i = l; i < c; ++i) {
      kernel += static_cast<long long>(layers[i].kernel - 1) * stride_prefix;
      stride_prefix *= layers[i].stride;
    }
    out[l] = {static_cast<int>(kernel), static_cast<int>(stride_prefix)};
  }
  if (out != combined_by_recurrence(layers)) {
    throw Error("combined layer closed form disagrees with the recurrence");
  }
  // Forward recurrence must walk γ̃ down to a single window after the last layer.
  for (std::size_t l = 0; l < c; ++l) {
    const int next = 1 + (out[l].kernel - layers[l].kernel) / layers[l].stride;
    const int expected = l + 1 < c ? out[l + 1].kernel : 1;
    if (next != expected) throw Error("combined kernel recurrence broken at layer " + std::to_string(l));
  }
  return out;
}

OutputGrid derive_output_grid(int input_side, int combined_kernel, int combined_stride) {
  if (combined_stride < 1 || combined_kernel < 1) fail("combined kernel and stride must be positive");
  if (input_side < combined_kernel) {
    fail("input side " + std::to_string(input_side) + " is smaller than the combined kernel side " +
         std::to_string(combined_kernel));
  }
  const int span = input_side - combined_kernel;
  return {1 + span / combined_stride, span % combined_stride == 0};
}

int compute_packing_factor(std::size_t slots, int n, int grid_side) {
  const std::size_t used = static_cast<std::size_t>(n) * static_cast<std::size_t>(grid_side) *
                           static_cast<std::size_t>(grid_side);
  if (used == 0) fail("packing factor needs n >= 1 and a non-empty grid");
  if (used > slots) {
    fail("capacity violation: n*grid^2 = " + std::to_string(used) + " exceeds " +
         std::to_string(slots) + " slots");
  }
  return static_cast<int>(std::bit_floor(slots / used));
}

int PackingPlan::input_ciphertexts() const {
  if (!conv.empty()) {
    const auto& first = conv.front();
    return first.input_groups * first.combined.kernel * first.combined.kernel;
  }
  return fc.empty() ? 0 : fc.front().input_ciphertexts;
}

int PackingPlan::filter_ciphertexts() const {
  int total = 0;
  for (const auto& layer : conv) total += layer.filter_ciphertexts;
  return total;
}

bool PackingPlan::all_baseline() const {
  for (const auto& layer : conv) {
    if (layer.mode != PackingMode::Baseline) return false;
  }
  return true;
}

PackingPlan validate_model(const ModelConfig& config, PackingRequest request) {
  PackingPlan plan;
  plan.config = config;
  plan.slots = config.slot_count;
  plan.n = config.n;
  const std::size_t S = config.slot_count;

  if (S == 0 || !std::has_single_bit(S)) {
    fail("slot_count " + std::to_string(S) + " is not a power of two");
  }
  if (config.n < 1) fail("n must be >= 1");
  if (!std::has_single_bit(static_cast<unsigned>(config.n)) || static_cast<std::size_t>(config.n) > S) {
    fail("n = " + std::to_string(config.n) + " must be a power of two not exceeding " +
         std::to_string(S) + " so that S/n is a power of two");
  }
  if (config.input_side < 1) fail("input_side must be >= 1");
  if (config.fc.empty()) fail("model needs at least one fully-connected layer");
  if (config.input_channels < 0) fail("input_channels must be >= 0");

  const std::size_t c = config.conv.size();
  const std::size_t f = config.fc.size();
  const int n = config.n;

  for (std::size_t l = 0; l < c; ++l) {
    const auto& layer = config.conv[l];
    const std::string where = "conv[" + std::to_string(l) + "]";
    if (layer.channels < 1 || layer.filters < 1 || layer.kernel < 1 || layer.stride < 1) {
      fail(where + ": channels, filters, kernel and stride must all be >= 1");
    }
    const int expected_channels = l == 0 ? config.channels_in() : config.conv[l - 1].filters;
    if (layer.channels != expected_channels) {
      fail(where + ": channels = " + std::to_string(layer.channels) + " but its input has " +
           std::to_string(expected_channels) + " channels");
    }
  }
  for (std::size_t l = 0; l < f; ++l) {
    if (config.fc[l].in < 1 || config.fc[l].out < 1) {
      fail("fc[" + std::to_string(l) + "]: in and out must be >= 1");
    }
  }

  plan.levels = std::max(2 * static_cast<int>(c + f), config.depth() + 1);

  // Convolutional geometry.
  if (c > 0) {
    const auto combined = derive_combined_params(config.conv);
    const OutputGrid grid = derive_output_grid(config.input_side, combined[0].kernel, combined[0].stride);
    plan.grid_side = grid.side;
    plan.grid_exact = grid.exact;
    if (!grid.exact) {
      plan.warnings.push_back("input side " + std::to_string(config.input_side) +
                              " leaves trailing pixels outside the combined windows (valid convolution)");
    }
    plan.replication = compute_packing_factor(S, n, grid.side);
    plan.block_stride = S / static_cast<std::size_t>(plan.replication);
    plan.block_size = static_cast<std::size_t>(n) * grid.side * grid.side;
    const int r = plan.replication;

    PackingMode mode = PackingMode::Baseline;
    switch (request) {
      case PackingRequest::Auto:
        if (r > 1 && config.conv[0].channels > 1) {
          mode = PackingMode::CrossChannel;
        } else if (r > 1 && config.conv[0].channels == 1 && config.conv[0].filters > 1) {
          mode = PackingMode::CrossFilter;
        }
        break;
      case PackingRequest::Baseline: mode = PackingMode::Baseline; break;
      case PackingRequest::CrossChannel: mode = PackingMode::CrossChannel; break;
      case PackingRequest::CrossFilter: mode = PackingMode::CrossFilter; break;
    }

    for (std::size_t l = 0; l < c; ++l) {
      ConvLayerPlan layer;
      layer.spec = config.conv[l];
      layer.combined = combined[l];
      layer.out_side = l + 1 < c ? combined[l + 1].kernel : 1;
      if (l > 0) {
        const PackingMode prev = plan.conv[l - 1].mode;
        mode = prev == PackingMode::CrossChannel  ? PackingMode::CrossFilter
               : prev == PackingMode::CrossFilter ? PackingMode::CrossChannel
                                                  : PackingMode::Baseline;
      }
      layer.mode = mode;
      const int alpha = layer.spec.channels;
      const int eps = layer.spec.filters;
      const int k2 = layer.spec.kernel * layer.spec.kernel;
      switch (mode) {
        case PackingMode::Baseline:
          layer.input_groups = alpha;
          layer.output_groups = eps;
          layer.filter_ciphertexts = eps * alpha * k2;
          break;
        case PackingMode::CrossChannel:
          layer.input_groups = ceil_div(alpha, r);
          layer.output_groups = eps;
          layer.output_replicated = true;
          layer.filter_ciphertexts = eps * ceil_div(alpha, r) * k2;
          break;
        case PackingMode::CrossFilter:
          layer.input_groups = alpha;
          layer.output_groups = ceil_div(eps, r);
          layer.input_replicated = true;
          layer.filter_ciphertexts = ceil_div(eps, r) * alpha * k2;
          break;
      }
      plan.conv.push_back(layer);
    }
  }

  // Fully-connected layers alternate Type I / Type II, starting with Type I.
  const std::size_t per_ct = S / static_cast<std::size_t>(n);  // pi-sets per ciphertext
  for (std::size_t l = 0; l < f; ++l) {
    const std::string where = "fc[" + std::to_string(l) + "]";
    FcLayerPlan layer;
    layer.spec = config.fc[l];
    layer.activation = config.fc_has_activation(l);
    layer.input_type = l % 2 == 0 ? FcInputType::TypeI : FcInputType::TypeII;
    const int in = layer.spec.in;
    const int out = layer.spec.out;

    if (layer.spec.ciphertexts && (l > 0 || c > 0)) {
      fail(where + ": 'ciphertexts' can only be forced on the first layer of a model without convolutions");
    }

    if (layer.input_type == FcInputType::TypeI) {
      std::vector<FeatureSlot> features;
      int input_cts = 0;
      if (l == 0 && c > 0) {
        const auto& last = plan.conv.back();
        const int g2 = plan.grid_side * plan.grid_side;
        const int r = plan.replication;
        input_cts = last.output_groups;
        for (int k = 0; k < last.spec.filters; ++k) {
          for (int p = 0; p < g2; ++p) {
            FeatureSlot slot;
            if (last.mode == PackingMode::CrossFilter) {
              slot.ciphertext = k / r;
              slot.base = static_cast<std::size_t>(k % r) * plan.block_stride +
                          static_cast<std::size_t>(p) * n;
            } else {
              slot.ciphertext = k;
              slot.base = static_cast<std::size_t>(p) * n;
            }
            features.push_back(slot);
          }
        }
      } else if (l == 0) {
        const long long total = static_cast<long long>(config.channels_in()) * config.input_side *
                                config.input_side;
        if (layer.spec.ciphertexts) {
          input_cts = *layer.spec.ciphertexts;
          if (input_cts < 1) fail(where + ": ciphertexts must be >= 1");
        } else {
          input_cts = 0;
          for (long long d = 1; d <= total; ++d) {
            if (total % d == 0 && (total / d) * n <= static_cast<long long>(S)) {
              input_cts = static_cast<int>(d);
              break;
            }
          }
        }
        if (total % input_cts != 0) {
          fail(where + ": " + std::to_string(total) + " input pi-sets do not split evenly over " +
               std::to_string(input_cts) + " ciphertexts (pi-sets per ciphertext must be an integer)");
        }
        const long long per = total / input_cts;
        if (per * n > static_cast<long long>(S)) {
          fail(where + ": " + std::to_string(per) + " pi-sets of " + std::to_string(n) +
               " values overflow " + std::to_string(S) + " slots");
        }
        for (long long w = 0; w < total; ++w) {
          features.push_back({static_cast<int>(w / per), static_cast<std::size_t>(w % per) * n});
        }
      } else {
        const auto& prev = plan.fc[l - 1];
        input_cts = prev.output_ciphertexts;
        for (int w = 0; w < prev.spec.out; ++w) {
          features.push_back({static_cast<int>(static_cast<std::size_t>(w) / per_ct),
                              (static_cast<std::size_t>(w) % per_ct) * n});
        }
      }
      if (static_cast<int>(features.size()) != in) {
        fail(where + ": in = " + std::to_string(in) + " but the preceding layer produces " +
             std::to_string(features.size()) + " features");
      }
      if (in % input_cts != 0) {
        fail(where + ": " + std::to_string(in) + " pi-sets over " + std::to_string(input_cts) +
             " ciphertexts is not an integer number of pi-sets per ciphertext");
      }
      layer.input_ciphertexts = input_cts;
      layer.pisets_per_ciphertext = in / input_cts;
      if (static_cast<std::size_t>(layer.pisets_per_ciphertext) * n > S) {
        fail(where + ": Type I replication overflow (pi-sets per ciphertext * n > S)");
      }
      layer.output_ciphertexts = out;
      layer.weight_ciphertexts = out * input_cts;
      layer.features = std::move(features);
    } else {
      const auto& prev = plan.fc[l - 1];
      if (in != prev.spec.out) {
        fail(where + ": in = " + std::to_string(in) + " but the preceding layer has " +
             std::to_string(prev.spec.out) + " outputs");
      }
      layer.input_ciphertexts = in;
      layer.pisets_per_ciphertext = 1;
      layer.output_ciphertexts = ceil_div(static_cast<long long>(out) * n, static_cast<long long>(S));
      layer.weight_ciphertexts = in * layer.output_ciphertexts;
    }
    plan.fc.push_back(std::move(layer));
  }
  return plan;
}

}  // namespace hecnn
