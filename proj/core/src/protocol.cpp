#include "hecnn/protocol.hpp"

#include <random>
#include <sstream>

#include "hecnn/errors.hpp"
#include "hecnn/packing.hpp"

namespace hecnn {

namespace {

// Payload size estimates: a ciphertext is two length-2S vectors of 8-byte
// coefficients in the real scheme; keys are sized like ciphertexts.
std::uint64_t ct_bytes(const PackingPlan& plan) { return 2ULL * 2ULL * plan.slots * 8ULL; }

std::uint64_t model_ct_count(const PackingPlan& plan) {
  std::uint64_t count = static_cast<std::uint64_t>(plan.filter_ciphertexts());
  for (const auto& layer : plan.fc) count += static_cast<std::uint64_t>(layer.weight_ciphertexts);
  return count;
}

}  // namespace

std::string to_string(Role role) {
  switch (role) {
    case Role::ModelProvider: return "ModelProvider";
    case Role::DataProvider: return "DataProvider";
    case Role::Tee: return "TEE";
    case Role::Ree: return "REE";
  }
  return "?";
}

void SessionTranscript::record(int step, Role from, Role to, std::string kind, std::uint64_t bytes) {
  if (step < 1 || step > 10 || step < last_step()) {
    throw Error("transcript step " + std::to_string(step) + " out of order");
  }
  entries_.push_back({step, from, to, std::move(kind), bytes});
}

std::string SessionTranscript::render() const {
  std::ostringstream out;
  for (const auto& e : entries_) {
    out << "step=" << e.step << " from=" << to_string(e.from) << " to=" << to_string(e.to)
        << " kind=" << e.kind << " bytes=" << e.bytes << '\n';
  }
  return out.str();
}

void Party::attach_tee(TeeService* tee) {
  if (role_ != Role::Tee) throw AuthorizationError(to_string(role_) + " cannot host the TEE");
  tee_ = tee;
}

SlotVector Party::decrypt(const Ciphertext& ct, OpLedger& ledger) const {
  if (role_ != Role::Tee || tee_ == nullptr) {
    throw AuthorizationError(to_string(role_) + " holds no homomorphic secret key");
  }
  return tee_->decrypt(ct, ledger);
}

SessionResult run_session(const PlainModel& model, const ModelConfig& config, const Tensor& batch,
                          const std::optional<Tensor>& labels, const SessionOptions& options) {
  SessionResult result;
  // Training is only defined for the baseline conv layout.
  const PackingRequest request =
      labels && options.packing == PackingRequest::Auto ? PackingRequest::Baseline : options.packing;
  result.plan = validate_model(config, request);
  const PackingPlan& plan = result.plan;
  check_model_shapes(model, config);
  check_batch_shape(batch, config);
  if (labels) {
    check_label_shape(*labels, config);
    check_trainable(plan);
  }

  std::mt19937_64 rng(options.seed);
  Party model_provider(Role::ModelProvider, rng());
  Party data_provider(Role::DataProvider, rng());
  Party ree(Role::Ree);
  Party tee_party(Role::Tee);
  auto& transcript = result.transcript;
  auto& ledger = result.ledger;
  const std::uint64_t ct = ct_bytes(plan);

  transcript.record(1, Role::ModelProvider, Role::Tee, "attest", 0);
  if (options.fail_model_attestation) {
    throw AttestationError("step 1: model provider could not attest the TEE", transcript);
  }
  transcript.record(1, Role::ModelProvider, Role::Tee, "client-key", 8);
  transcript.record(1, Role::ModelProvider, Role::Tee, "hyperparameters",
                    16ULL * (plan.conv.size() + plan.fc.size() + 1));

  TeeService tee(options.security_bits, plan.levels, plan.slots);
  tee_party.attach_tee(&tee);
  const Backend& backend = tee.backend();
  transcript.record(2, Role::Tee, Role::ModelProvider, "public-key", ct);

  EncryptedModel encrypted;
  try {
    encrypted = encrypt_model(model, plan, backend, ledger);
  } catch (const Error&) {
    rethrow_with_context("step 3");
  }
  transcript.record(3, Role::ModelProvider, Role::Ree, "encrypted-model", model_ct_count(plan) * ct);
  transcript.record(4, Role::Tee, Role::Ree, "public-and-evaluation-keys", 2 * ct);

  transcript.record(5, Role::DataProvider, Role::Tee, "attest", 0);
  if (options.fail_data_attestation) {
    throw AttestationError("step 5: data provider could not attest the TEE", transcript);
  }
  transcript.record(5, Role::DataProvider, Role::Tee, "client-key", 8);
  transcript.record(6, Role::Tee, Role::DataProvider, "public-key", ct);

  ActivationGrid inputs;
  try {
    PhaseScope phase(ledger, "Enc.Inputs");
    inputs = pack_inputs(batch, plan, backend, ledger);
  } catch (const Error&) {
    rethrow_with_context("step 7");
  }
  transcript.record(7, Role::DataProvider, Role::Ree, "encrypted-inputs", inputs.size() * ct);

  ActivationGrid output;
  std::optional<EncryptedModel> updated;
  const TeeCounters before = tee.counters();
  try {
    if (labels) {
      BackwardOptions backward;
      backward.workers = options.workers;
      TrainResult trained =
          train_step(backend, tee, encrypted, inputs, *labels, plan, options.eta, ledger, backward);
      output = std::move(trained.output);
      updated = std::move(trained.model);
    } else {
      ForwardOptions forward;
      forward.workers = options.workers;
      forward.tracer = options.tracer;
      output = infer(backend, encrypted, inputs, plan, ledger, forward);
    }
  } catch (const Error&) {
    rethrow_with_context("step 8");
  }
  if (labels) {
    const TeeCounters after = tee.counters();
    const std::uint64_t grads = static_cast<std::uint64_t>(output.size());
    transcript.record(8, Role::Ree, Role::Tee, "encrypted-logits", grads * ct);
    transcript.record(8, Role::Tee, Role::Ree, "encrypted-final-gradient", grads * ct);
    const auto depth = static_cast<std::uint64_t>(after.depth_refreshes - before.depth_refreshes);
    const auto weight = static_cast<std::uint64_t>(after.weight_refreshes - before.weight_refreshes);
    if (depth > 0) {
      transcript.record(8, Role::Ree, Role::Tee, "depth-refresh-request", depth * ct);
      transcript.record(8, Role::Tee, Role::Ree, "depth-refresh", depth * ct);
    }
    transcript.record(8, Role::Ree, Role::Tee, "weight-refresh-request", weight * ct);
    transcript.record(8, Role::Tee, Role::Ree, "weight-refresh", weight * ct);
  }
  transcript.record(8, Role::Ree, Role::Tee, "encrypted-result", output.size() * ct);

  const Tensor logits = tee.decrypt_outputs(output, plan, ledger);
  const auto wrapped = tee.rewrap(logits, data_provider.client_key());
  transcript.record(9, Role::Tee, Role::DataProvider, "wrapped-result", wrapped.size());

  result.logits = unwrap_tensor(wrapped, logits.shape(), data_provider.client_key());
  transcript.record(10, Role::DataProvider, Role::DataProvider, "unwrap-result", wrapped.size());
  if (updated) {
    result.updated_model = tee.decrypt_model(*updated, plan, ledger);
    // Wrapped under the model provider's client key, like the result at step 9.
    std::uint64_t bytes = 0;
    for (const auto& t : result.updated_model->conv) bytes += t.size() * sizeof(double);
    for (const auto& t : result.updated_model->fc) bytes += t.size() * sizeof(double);
    transcript.record(10, Role::Tee, Role::ModelProvider, "updated-model", bytes);
  }
  result.tee = tee.counters();
  return result;
}

}  // namespace hecnn
