#include "hecnn/tee.hpp"

#include <cstring>
#include <random>

#include "hecnn/errors.hpp"

namespace hecnn {

namespace {

constexpr const char* kPhase = "TEE";

void xor_keystream(std::vector<std::uint8_t>& bytes, std::uint64_t key) {
  std::mt19937_64 stream(key);
  for (std::size_t i = 0; i < bytes.size(); i += 8) {
    const std::uint64_t word = stream();
    for (std::size_t b = 0; b < 8 && i + b < bytes.size(); ++b) {
      bytes[i + b] ^= static_cast<std::uint8_t>(word >> (8 * b));
    }
  }
}

}  // namespace

TeeService::TeeService(int security_bits, int levels, std::size_t slot_count)
    : TeeService(keygen(security_bits, levels, slot_count)) {}

TeeService::TeeService(KeyPair keys)
    : keys_(keys.keys), secret_(std::move(keys.secret)), backend_(make_sim_backend(keys_)) {
  counters_.keygens = 1;
}

Ciphertext TeeService::reencrypt(const Ciphertext& ct, OpLedger& ledger) {
  PhaseScope phase(ledger, kPhase);
  return backend_->encrypt(backend_->decrypt(ct, secret_, ledger), ledger);
}

Ciphertext TeeService::refresh(const Ciphertext& ct, OpLedger& ledger) {
  std::lock_guard lock(mutex_);
  ++counters_.weight_refreshes;
  return reencrypt(ct, ledger);
}

Ciphertext TeeService::depth_refresh(const Ciphertext& ct, OpLedger& ledger) {
  std::lock_guard lock(mutex_);
  ++counters_.depth_refreshes;
  return reencrypt(ct, ledger);
}

Tensor TeeService::decrypt_outputs(const ActivationGrid& final_grid, const PackingPlan& plan,
                                   OpLedger& ledger) {
  std::lock_guard lock(mutex_);
  ++counters_.result_decrypts;
  PhaseScope phase(ledger, kPhase);
  std::vector<SlotVector> pts;
  for (const auto& ct : final_grid.cts) pts.push_back(backend_->decrypt(ct, secret_, ledger));
  return unpack_outputs(pts, plan);
}

ActivationGrid TeeService::final_gradient(const ActivationGrid& final_grid, const Tensor& labels,
                                          const PackingPlan& plan, OpLedger& ledger) {
  check_label_shape(labels, plan.config);
  std::lock_guard lock(mutex_);
  ++counters_.final_gradients;
  PhaseScope phase(ledger, kPhase);
  std::vector<SlotVector> pts;
  for (const auto& ct : final_grid.cts) pts.push_back(backend_->decrypt(ct, secret_, ledger));
  const Tensor logits = unpack_outputs(pts, plan);

  const auto& last = plan.fc.back();
  const std::size_t n = static_cast<std::size_t>(plan.n);
  const std::size_t per_ct = plan.slots / n;
  const std::size_t o = static_cast<std::size_t>(last.spec.out);
  std::vector<SlotVector> grads(final_grid.cts.size(), SlotVector(plan.slots));
  for (std::size_t j = 0; j < o; ++j) {
    for (std::size_t t = 0; t < n; ++t) {
      const double g = 2.0 * (logits.at(t, j) - labels.at(t, j)) / static_cast<double>(n);
      if (last.input_type == FcInputType::TypeI) {
        for (std::size_t block = 0; block < per_ct; ++block) grads[j][block * n + t] = g;
      } else {
        grads[j / per_ct][(j % per_ct) * n + t] = g;
      }
    }
  }
  ActivationGrid out;
  out.layout = final_grid.layout;
  out.groups = final_grid.groups;
  out.side = final_grid.side;
  for (const auto& pt : grads) out.cts.push_back(backend_->encrypt(pt, ledger));
  return out;
}

SlotVector TeeService::decrypt(const Ciphertext& ct, OpLedger& ledger) {
  std::lock_guard lock(mutex_);
  PhaseScope phase(ledger, kPhase);
  return backend_->decrypt(ct, secret_, ledger);
}

PlainModel TeeService::decrypt_model(const EncryptedModel& model, const PackingPlan& plan,
                                     OpLedger& ledger) {
  std::lock_guard lock(mutex_);
  PhaseScope phase(ledger, kPhase);
  return decode_model(model, plan,
                      [&](const Ciphertext& ct) { return backend_->decrypt(ct, secret_, ledger); });
}

std::vector<std::uint8_t> TeeService::rewrap(const Tensor& result, std::uint64_t client_key) {
  std::lock_guard lock(mutex_);
  ++counters_.rewraps;
  return wrap_tensor(result, client_key);
}

SlotVector TeeService::inspect(const Ciphertext& ct) const {
  OpLedger scratch;
  return backend_->decrypt(ct, secret_, scratch);
}

Decryptor TeeService::inspector() const {
  return [this](const Ciphertext& ct) { return inspect(ct); };
}

TeeCounters TeeService::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

std::vector<std::uint8_t> wrap_tensor(const Tensor& tensor, std::uint64_t key) {
  std::vector<std::uint8_t> bytes(tensor.size() * sizeof(double));
  if (!bytes.empty()) std::memcpy(bytes.data(), tensor.data().data(), bytes.size());
  xor_keystream(bytes, key);
  return bytes;
}

Tensor unwrap_tensor(const std::vector<std::uint8_t>& bytes, std::vector<std::size_t> shape,
                     std::uint64_t key) {
  std::vector<std::uint8_t> plain = bytes;
  xor_keystream(plain, key);
  Tensor out(std::move(shape));
  if (plain.size() != out.size() * sizeof(double)) {
    throw ValidationError("wrapped result has " + std::to_string(plain.size()) +
                          " bytes, expected " + std::to_string(out.size() * sizeof(double)));
  }
  if (!plain.empty()) std::memcpy(out.data().data(), plain.data(), plain.size());
  return out;
}

}  // namespace hecnn
