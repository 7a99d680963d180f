#include "hecnn/he_sim.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <string>

#include "hecnn/errors.hpp"

namespace hecnn {

namespace {

std::atomic<std::uint64_t> g_next_key_id{1};

std::string phase_suffix(const OpLedger& ledger) {
  return " (phase " + std::string(ledger.current_phase()) + ")";
}

}  // namespace

KeyPair keygen(int security_bits, int levels, std::size_t slot_count) {
  if (slot_count == 0 || !std::has_single_bit(slot_count)) {
    throw ValidationError("slot count " + std::to_string(slot_count) +
                          " is not a power of two");
  }
  if (levels < 1) {
    throw ValidationError("level budget must be >= 1, got " + std::to_string(levels));
  }
  KeyId id{g_next_key_id.fetch_add(1)};
  KeyMaterial keys{slot_count, levels, security_bits, id};
  return KeyPair{keys, SecretKey(id)};
}

SimBackend::SimBackend(KeyMaterial keys) : keys_(keys) {
  if (keys_.slot_count == 0 || !std::has_single_bit(keys_.slot_count) || keys_.levels < 1) {
    throw ValidationError("invalid key material");
  }
}

void SimBackend::check_key(const Ciphertext& ct) const {
  if (ct.key_id() != keys_.key_id) {
    throw KeyMismatchError("ciphertext key " + std::to_string(ct.key_id().value) +
                           " does not match session key " + std::to_string(keys_.key_id.value));
  }
}

void SimBackend::check_length(const SlotVector& pt) const {
  if (pt.size() != keys_.slot_count) {
    throw ValidationError("plaintext has " + std::to_string(pt.size()) + " slots, scheme has " +
                          std::to_string(keys_.slot_count));
  }
}

Ciphertext SimBackend::encrypt(const SlotVector& pt, OpLedger& ledger) const {
  check_length(pt);
  ledger.record(OpKind::Enc, keys_.top_level());
  return Ciphertext(pt, keys_.top_level(), false, keys_.key_id);
}

SlotVector SimBackend::decrypt(const Ciphertext& ct, const SecretKey& sk, OpLedger& ledger) const {
  check_key(ct);
  if (sk.key_id() != keys_.key_id) {
    throw KeyMismatchError("secret key does not belong to this session");
  }
  ledger.record(OpKind::Dec, ct.level());
  return ct.payload();
}

Ciphertext SimBackend::add(const Ciphertext& a, const Ciphertext& b, OpLedger& ledger) const {
  check_key(a);
  check_key(b);
  const int level = std::min(a.level(), b.level());
  const bool pending = (a.level() == level && a.rescale_pending()) ||
                       (b.level() == level && b.rescale_pending());
  ledger.record(OpKind::Add, level + (pending ? 1 : 0));
  SlotVector out = a.payload();
  auto lhs = out.view();
  auto rhs = b.payload().view();
  for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] += rhs[i];
  return Ciphertext(std::move(out), level, pending, keys_.key_id);
}

Ciphertext SimBackend::multiply(const Ciphertext& a, const Ciphertext& b, OpLedger& ledger) const {
  check_key(a);
  check_key(b);
  const int level = std::min(a.level(), b.level());
  if (level < 1) {
    throw DepthBudgetError("ciphertext multiply at level " + std::to_string(level) +
                           ": level budget exhausted" + phase_suffix(ledger));
  }
  ledger.record(OpKind::Mul, level);
  SlotVector out = a.payload();
  auto lhs = out.view();
  auto rhs = b.payload().view();
  for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] *= rhs[i];
  return Ciphertext(std::move(out), level - 1, true, keys_.key_id);
}

Ciphertext SimBackend::cmult(const Ciphertext& ct, const SlotVector& pt, OpLedger& ledger) const {
  check_key(ct);
  check_length(pt);
  if (ct.level() < 1) {
    throw DepthBudgetError("plaintext multiply at level " + std::to_string(ct.level()) +
                           ": level budget exhausted" + phase_suffix(ledger));
  }
  ledger.record(OpKind::CMult, ct.level());
  SlotVector out = ct.payload();
  auto lhs = out.view();
  auto rhs = pt.view();
  for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] *= rhs[i];
  return Ciphertext(std::move(out), ct.level() - 1, true, keys_.key_id);
}

Ciphertext SimBackend::rotate(const Ciphertext& ct, std::size_t steps, OpLedger& ledger) const {
  check_key(ct);
  if (steps >= keys_.slot_count) {
    throw ValidationError("rotation by " + std::to_string(steps) + " outside [0, " +
                          std::to_string(keys_.slot_count) + ")");
  }
  ledger.record(OpKind::Rot, ct.additive_level());
  std::vector<double> out(ct.payload().values());
  std::rotate(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(steps), out.end());
  return Ciphertext(SlotVector(std::move(out)), ct.level(), ct.rescale_pending(), keys_.key_id);
}

Ciphertext SimBackend::level_align(const Ciphertext& ct, int target) const {
  check_key(ct);
  if (target > ct.level()) {
    throw ValidationError("cannot raise ciphertext level from " + std::to_string(ct.level()) +
                          " to " + std::to_string(target));
  }
  if (target < 0) throw ValidationError("negative target level");
  if (target == ct.level()) return ct;
  return Ciphertext(ct.payload(), target, false, keys_.key_id);
}

std::unique_ptr<Backend> make_sim_backend(const KeyMaterial& keys) {
  return std::make_unique<SimBackend>(keys);
}

}  // namespace hecnn
