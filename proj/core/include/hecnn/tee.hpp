#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/he_sim.hpp"
#include "hecnn/ledger.hpp"
#include "hecnn/model.hpp"
#include "hecnn/packing.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn {

struct TeeCounters {
  int keygens = 0;
  int result_decrypts = 0;
  int rewraps = 0;
  int weight_refreshes = 0;  // weight-update Step 5
  int depth_refreshes = 0;   // level restores during training
  int final_gradients = 0;
  friend bool operator==(const TeeCounters&, const TeeCounters&) = default;
};

// The enclave: sole holder of the HE secret key. Requests are serialized.
// Every decrypt/encrypt it performs is recorded under the "TEE" phase.
class TeeService {
 public:
  TeeService(int security_bits, int levels, std::size_t slot_count);
  explicit TeeService(KeyPair keys);

  const KeyMaterial& keys() const { return keys_; }
  // Evaluation backend handed to the REE; it cannot decrypt.
  const Backend& backend() const { return *backend_; }

  // Decrypt and re-encrypt at level L-1.
  Ciphertext refresh(const Ciphertext& ct, OpLedger& ledger);
  Ciphertext depth_refresh(const Ciphertext& ct, OpLedger& ledger);

  // Decrypts the final layer output and returns the logits (n x o).
  Tensor decrypt_outputs(const ActivationGrid& final_grid, const PackingPlan& plan,
                         OpLedger& ledger);
  // MSE gradient 2(y_hat - y)/n, packed in the final layer's output layout
  // and encrypted at level L-1.
  ActivationGrid final_gradient(const ActivationGrid& final_grid, const Tensor& labels,
                                const PackingPlan& plan, OpLedger& ledger);
  SlotVector decrypt(const Ciphertext& ct, OpLedger& ledger);
  PlainModel decrypt_model(const EncryptedModel& model, const PackingPlan& plan, OpLedger& ledger);

  // Result re-encryption for the data provider (opaque keystream wrap).
  std::vector<std::uint8_t> rewrap(const Tensor& result, std::uint64_t client_key);

  // Diagnostic decryption for tests and tooling; not part of the protocol
  // and not counted in the ledger.
  SlotVector inspect(const Ciphertext& ct) const;
  Decryptor inspector() const;

  TeeCounters counters() const;

 private:
  Ciphertext reencrypt(const Ciphertext& ct, OpLedger& ledger);

  KeyMaterial keys_;
  SecretKey secret_;
  std::unique_ptr<Backend> backend_;
  mutable std::mutex mutex_;
  TeeCounters counters_;
};

// Symmetric keystream wrap used for the data provider's result channel.
std::vector<std::uint8_t> wrap_tensor(const Tensor& tensor, std::uint64_t key);
Tensor unwrap_tensor(const std::vector<std::uint8_t>& bytes, std::vector<std::size_t> shape,
                     std::uint64_t key);

}  // namespace hecnn
