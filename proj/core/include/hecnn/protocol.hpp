#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hecnn/backward.hpp"
#include "hecnn/errors.hpp"
#include "hecnn/forward.hpp"
#include "hecnn/geometry.hpp"
#include "hecnn/he_sim.hpp"
#include "hecnn/ledger.hpp"
#include "hecnn/model.hpp"
#include "hecnn/tee.hpp"

namespace hecnn {

enum class Role { ModelProvider, DataProvider, Tee, Ree };
std::string to_string(Role role);

struct TranscriptEntry {
  int step = 0;
  Role from = Role::Tee;
  Role to = Role::Tee;
  std::string kind;
  std::uint64_t bytes = 0;
  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

class SessionTranscript {
 public:
  // Steps must be recorded in non-decreasing order.
  void record(int step, Role from, Role to, std::string kind, std::uint64_t bytes);
  const std::vector<TranscriptEntry>& entries() const { return entries_; }
  // One line per message: step=<k> from=<role> to=<role> kind=<kind> bytes=<n>
  std::string render() const;
  int last_step() const { return entries_.empty() ? 0 : entries_.back().step; }
  friend bool operator==(const SessionTranscript&, const SessionTranscript&) = default;

 private:
  std::vector<TranscriptEntry> entries_;
};

// A participant. Only the TEE holds a TeeService (and with it the HE secret
// key); decrypting through any other party raises AuthorizationError.
class Party {
 public:
  explicit Party(Role role, std::uint64_t client_key = 0) : role_(role), client_key_(client_key) {}
  Role role() const { return role_; }
  std::uint64_t client_key() const { return client_key_; }
  void attach_tee(TeeService* tee);
  SlotVector decrypt(const Ciphertext& ct, OpLedger& ledger) const;

 private:
  Role role_;
  std::uint64_t client_key_;
  TeeService* tee_ = nullptr;
};

// Attestation of the TEE failed; no key material was released.
class AttestationError : public Error {
 public:
  AttestationError(const std::string& message, SessionTranscript transcript)
      : Error(message), transcript_(std::move(transcript)) {}
  const SessionTranscript& transcript() const { return transcript_; }

 private:
  SessionTranscript transcript_;
};

struct SessionOptions {
  PackingRequest packing = PackingRequest::Auto;
  int security_bits = 128;
  std::uint64_t seed = 1;  // client keys
  bool fail_model_attestation = false;
  bool fail_data_attestation = false;
  double eta = 0.01;
  int workers = 0;
  Tracer tracer;
};

struct SessionResult {
  PackingPlan plan;
  Tensor logits;  // as recovered by the data provider
  SessionTranscript transcript;
  OpLedger ledger;
  TeeCounters tee;
  std::optional<PlainModel> updated_model;  // training sessions only
};

// Steps 1-10 of the outsourcing framework. With labels, the REE also runs one
// training step and the TEE returns the updated model to the model provider.
SessionResult run_session(const PlainModel& model, const ModelConfig& config, const Tensor& batch,
                          const std::optional<Tensor>& labels = std::nullopt,
                          const SessionOptions& options = {});

}  // namespace hecnn
