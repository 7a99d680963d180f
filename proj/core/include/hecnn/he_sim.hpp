#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "hecnn/ledger.hpp"

namespace hecnn {

// Fixed-length vector of real slot values. The length is the scheme's slot
// count and never changes after construction.
class SlotVector {
 public:
  explicit SlotVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  explicit SlotVector(std::vector<double> values) : values_(std::move(values)) {}
  SlotVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> view() const { return values_; }
  std::span<double> view() { return values_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const SlotVector&, const SlotVector&) = default;

 private:
  std::vector<double> values_;
};

struct KeyId {
  std::uint64_t value = 0;
  friend auto operator<=>(const KeyId&, const KeyId&) = default;
};

// Public parameters of a session: everything except the secret key.
struct KeyMaterial {
  std::size_t slot_count = 0;
  int levels = 0;         // L; fresh ciphertexts sit at level L-1
  int security_bits = 0;  // informational in simulation
  KeyId key_id;

  int top_level() const { return levels - 1; }
};

// Capability required for decryption. Move-only; only the TEE should hold one.
class SecretKey {
 public:
  SecretKey(SecretKey&&) noexcept = default;
  SecretKey& operator=(SecretKey&&) noexcept = default;
  SecretKey(const SecretKey&) = delete;
  SecretKey& operator=(const SecretKey&) = delete;

  KeyId key_id() const { return key_id_; }

 private:
  explicit SecretKey(KeyId id) : key_id_(id) {}
  friend struct KeyPair keygen(int security_bits, int levels, std::size_t slot_count);
  KeyId key_id_;
};

struct KeyPair {
  KeyMaterial keys;
  SecretKey secret;
};

// Fresh key pair with a process-unique key id. Throws ValidationError unless
// slot_count is a power of two and levels >= 1.
KeyPair keygen(int security_bits, int levels, std::size_t slot_count);

// Encrypted slot vector plus its remaining multiplicative level.
//
// A product (⊗ or CMult) leaves the result one level lower with a pending
// rescale; additions and rotations applied before the next product are
// attributed to the pre-rescale level, the way a lazily-rescaling CKKS
// evaluator would perform them.
class Ciphertext {
 public:
  const SlotVector& payload() const { return payload_; }
  int level() const { return level_; }
  bool rescale_pending() const { return rescale_pending_; }
  KeyId key_id() const { return key_id_; }
  std::size_t slot_count() const { return payload_.size(); }

  // Level charged to ⊕ and Rot on this ciphertext.
  int additive_level() const { return level_ + (rescale_pending_ ? 1 : 0); }

 private:
  friend class SimBackend;
  Ciphertext(SlotVector payload, int level, bool pending, KeyId key)
      : payload_(std::move(payload)), level_(level), rescale_pending_(pending), key_id_(key) {}

  SlotVector payload_;
  int level_ = 0;
  bool rescale_pending_ = false;
  KeyId key_id_;
};

// The six leveled-HE primitives plus level alignment. Every primitive records
// exactly one ledger entry; level_align is free.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const KeyMaterial& keys() const = 0;

  virtual Ciphertext encrypt(const SlotVector& pt, OpLedger& ledger) const = 0;
  virtual SlotVector decrypt(const Ciphertext& ct, const SecretKey& sk,
                             OpLedger& ledger) const = 0;
  virtual Ciphertext add(const Ciphertext& a, const Ciphertext& b, OpLedger& ledger) const = 0;
  virtual Ciphertext multiply(const Ciphertext& a, const Ciphertext& b,
                              OpLedger& ledger) const = 0;
  virtual Ciphertext cmult(const Ciphertext& ct, const SlotVector& pt, OpLedger& ledger) const = 0;
  // Cyclic left rotation by `steps` slots, 0 <= steps < S.
  virtual Ciphertext rotate(const Ciphertext& ct, std::size_t steps, OpLedger& ledger) const = 0;
  virtual Ciphertext level_align(const Ciphertext& ct, int target) const = 0;

  std::size_t slot_count() const { return keys().slot_count; }
  Ciphertext square(const Ciphertext& ct, OpLedger& ledger) const {
    return multiply(ct, ct, ledger);
  }
  // Cyclic right rotation, expressed as a left rotation by S - steps.
  Ciphertext rotate_right(const Ciphertext& ct, std::size_t steps, OpLedger& ledger) const {
    const std::size_t s = slot_count();
    return rotate(ct, (s - steps % s) % s, ledger);
  }
};

// Noise-free simulation: payloads are exact doubles, levels are tracked and
// enforced, keys are identifiers only.
class SimBackend final : public Backend {
 public:
  explicit SimBackend(KeyMaterial keys);

  const KeyMaterial& keys() const override { return keys_; }
  Ciphertext encrypt(const SlotVector& pt, OpLedger& ledger) const override;
  SlotVector decrypt(const Ciphertext& ct, const SecretKey& sk, OpLedger& ledger) const override;
  Ciphertext add(const Ciphertext& a, const Ciphertext& b, OpLedger& ledger) const override;
  Ciphertext multiply(const Ciphertext& a, const Ciphertext& b, OpLedger& ledger) const override;
  Ciphertext cmult(const Ciphertext& ct, const SlotVector& pt, OpLedger& ledger) const override;
  Ciphertext rotate(const Ciphertext& ct, std::size_t steps, OpLedger& ledger) const override;
  Ciphertext level_align(const Ciphertext& ct, int target) const override;

 private:
  void check_key(const Ciphertext& ct) const;
  void check_length(const SlotVector& pt) const;

  KeyMaterial keys_;
};

std::unique_ptr<Backend> make_sim_backend(const KeyMaterial& keys);

}  // namespace hecnn
