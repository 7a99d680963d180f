#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/ledger.hpp"
#include "hecnn/model.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kDepth = 3,
  kOracleMismatch = 4,
};

// Runs the command line `args` (without the program name). Reports go to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Seeded demo data: weights uniform in +-1/sqrt(fan-in), inputs in [-1, 1],
// labels in [0, 1].
PlainModel demo_model(const ModelConfig& config, std::uint64_t seed);
Tensor demo_batch(const ModelConfig& config, std::uint64_t seed);
Tensor demo_labels(const ModelConfig& config, std::uint64_t seed);

// Estimated microseconds split by phase and by level.
struct CostBreakdown {
  std::vector<std::pair<std::string, double>> by_phase;  // in ledger phase order
  std::map<int, double, std::greater<>> by_level;
  double total = 0.0;
};
CostBreakdown cost_breakdown(const OpLedger& ledger, const CostTable& costs);

std::string render_plan(const PackingPlan& plan);

}  // namespace hecnn::cli
