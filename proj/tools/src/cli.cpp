#include "hecnn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "hecnn/backward.hpp"
#include "hecnn/errors.hpp"
#include "hecnn/model_io.hpp"
#include "hecnn/oracle.hpp"
#include "hecnn/protocol.hpp"

namespace hecnn::cli {

namespace {

struct Options {
  std::string config;
  std::string weights;
  std::string inputs;
  std::string labels;
  std::string costs;
  std::string out;
  std::optional<int> n;
  bool no_activation = false;
  std::string packing = "auto";
  bool compare_oracle = false;
  std::optional<double> tolerance;
  double eta = 0.01;
  std::uint64_t seed = 1;
  std::string report = "text";
};

PackingRequest parse_packing(const std::string& name) {
  if (name == "auto") return PackingRequest::Auto;
  if (name == "baseline") return PackingRequest::Baseline;
  if (name == "cross-channel") return PackingRequest::CrossChannel;
  if (name == "cross-filter") return PackingRequest::CrossFilter;
  throw ValidationError("unknown packing '" + name + "'");
}

ModelConfig load(const Options& o) {
  ModelConfig config = load_config(o.config);
  if (o.n) config.n = *o.n;
  if (o.no_activation) config.activation = false;
  return config;
}

bool wants_text(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".txt") == 0;
}

Tensor single_tensor(const std::string& path) {
  auto tensors = read_tensors(path);
  if (tensors.size() != 1) {
    throw ValidationError(path + ": expected exactly one tensor, found " + std::to_string(tensors.size()));
  }
  return std::move(tensors.front());
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

std::string ledger_csv(const OpLedger& ledger, int n) {
  std::string out;
  const Grouping groups[] = {Grouping::ByPhase, Grouping::ByLevel, Grouping::Totals, Grouping::Amortized};
  for (Grouping g : groups) {
    if (!out.empty()) out += '\n';
    out += render_csv(report(ledger, g, static_cast<std::uint64_t>(n)));
  }
  return out;
}

std::string ledger_text(const OpLedger& ledger, int n) {
  std::ostringstream out;
  out << "ops by phase\n" << render_text(report(ledger, Grouping::ByPhase));
  out << "\nops by level\n" << render_text(report(ledger, Grouping::ByLevel));
  out << "\ntotal\n" << render_text(report(ledger, Grouping::Totals));
  out << "\namortized over n=" << n << "\n"
      << render_text(report(ledger, Grouping::Amortized, static_cast<std::uint64_t>(n)));
  return out.str();
}

std::string cost_text(const CostBreakdown& costs, int n) {
  std::ostringstream out;
  out << "estimated time (us) by phase\n";
  for (const auto& [phase, us] : costs.by_phase) out << "  " << std::left << std::setw(16) << phase << fmt(us) << '\n';
  out << "estimated time (us) by level\n";
  for (const auto& [level, us] : costs.by_level) out << "  " << std::left << std::setw(16) << level << fmt(us) << '\n';
  out << "estimated total " << fmt(costs.total) << " us, amortized " << fmt(costs.total / n) << " us\n";
  return out.str();
}

std::string cost_csv(const CostBreakdown& costs) {
  std::ostringstream out;
  out << "phase/level,us\n";
  for (const auto& [phase, us] : costs.by_phase) out << phase << ',' << fmt(us) << '\n';
  for (const auto& [level, us] : costs.by_level) out << level << ',' << fmt(us) << '\n';
  out << "total," << fmt(costs.total) << '\n';
  return out.str();
}

std::string tensor_rows(const Tensor& t) {
  std::ostringstream out;
  const std::size_t rows = t.shape().empty() ? 1 : t.shape().front();
  const std::size_t cols = rows == 0 ? 0 : t.size() / rows;
  for (std::size_t i = 0; i < rows; ++i) {
    out << "  [" << i << "]";
    for (std::size_t j = 0; j < cols; ++j) out << ' ' << fmt(t.data()[i * cols + j]);
    out << '\n';
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f << body;
}

std::optional<CostBreakdown> try_costs(const OpLedger& ledger, const CostTable& table, std::string& why) {
  try {
    return cost_breakdown(ledger, table);
  } catch (const MissingCostError& e) {
    why = e.what();
    return std::nullopt;
  }
}

CostTable cost_table(const Options& o) {
  return o.costs.empty() ? CostTable::builtin_defaults() : load_cost_table(o.costs);
}

int cmd_derive(const Options& o, std::ostream& out) {
  const ModelConfig config = load(o);
  const PackingPlan plan = validate_model(config, parse_packing(o.packing));
  out << render_plan(plan);
  if (!o.out.empty()) write_text_file(o.out, render_plan(plan));
  return kOk;
}

int cmd_infer(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelConfig config = load(o);
  const PlainModel model = o.weights.empty() ? demo_model(config, o.seed)
                                             : model_from_tensors(read_tensors(o.weights), config);
  const Tensor batch = o.inputs.empty() ? demo_batch(config, o.seed) : single_tensor(o.inputs);
  SessionOptions session;
  session.packing = parse_packing(o.packing);
  session.seed = o.seed;
  const SessionResult result = run_session(model, config, batch, std::nullopt, session);

  std::string why;
  const auto costs = try_costs(result.ledger, cost_table(o), why);
  std::optional<double> error;
  bool pass = true;
  if (o.compare_oracle) {
    const double tol = o.tolerance.value_or(1e-9);
    const PlainForward oracle = plain_forward(model, config, batch);
    error = relative_error(result.logits.data(), oracle.logits.data());
    pass = *error <= tol;
  }

  if (o.report == "csv") {
    out << ledger_csv(result.ledger, config.n);
    if (costs) out << '\n' << cost_csv(*costs);
  } else {
    out << render_plan(result.plan) << '\n' << ledger_text(result.ledger, config.n) << '\n';
    if (costs) {
      out << cost_text(*costs, config.n);
    } else {
      out << "estimated time unavailable: " << why << '\n';
    }
    out << "\nlogits (input x output)\n" << tensor_rows(result.logits);
  }
  if (!o.out.empty()) write_text_file(o.out, ledger_csv(result.ledger, config.n));
  if (error) {
    (o.report == "csv" ? err : out) << "oracle: " << (pass ? "pass" : "FAIL")
                                    << " (max relative error " << fmt(*error) << ")\n";
  }
  return pass ? kOk : kOracleMismatch;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelConfig config = load(o);
  const PlainModel model = o.weights.empty() ? demo_model(config, o.seed)
                                             : model_from_tensors(read_tensors(o.weights), config);
  const Tensor batch = o.inputs.empty() ? demo_batch(config, o.seed) : single_tensor(o.inputs);
  const Tensor labels = o.labels.empty() ? demo_labels(config, o.seed) : single_tensor(o.labels);
  check_label_shape(labels, config);
  SessionOptions session;
  session.packing = parse_packing(o.packing);
  session.seed = o.seed;
  session.eta = o.eta;
  const SessionResult result = run_session(model, config, batch, labels, session);
  const PlainModel& updated = *result.updated_model;

  std::optional<double> error;
  bool pass = true;
  if (o.compare_oracle) {
    const double tol = o.tolerance.value_or(1e-6);
    const PlainModel expected = sgd_step(model, plain_backward(model, config, batch, labels), o.eta);
    double worst = 0.0;
    for (std::size_t l = 0; l < expected.conv.size(); ++l) {
      worst = std::max(worst, relative_error(updated.conv[l].data(), expected.conv[l].data()));
    }
    for (std::size_t l = 0; l < expected.fc.size(); ++l) {
      worst = std::max(worst, relative_error(updated.fc[l].data(), expected.fc[l].data()));
    }
    error = worst;
    pass = worst <= tol;
  }
  if (!o.out.empty()) write_tensors(o.out, model_to_tensors(updated), wants_text(o.out));

  if (o.report == "csv") {
    out << ledger_csv(result.ledger, config.n);
  } else {
    out << render_plan(result.plan) << '\n' << ledger_text(result.ledger, config.n) << '\n';
    out << "loss before step " << fmt(mse(result.logits, labels)) << '\n';
  }
  (o.report == "csv" ? err : out) << "tee refreshes: weight update " << result.tee.weight_refreshes
                                  << ", depth " << result.tee.depth_refreshes << '\n';
  if (error) {
    (o.report == "csv" ? err : out) << "oracle: " << (pass ? "pass" : "FAIL")
                                    << " (max relative error " << fmt(*error) << ")\n";
  }
  return pass ? kOk : kOracleMismatch;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  const ModelConfig config = load(o);
  const CostTable table = cost_table(o);
  // Operation counts do not depend on the data, so all-zero tensors stand in.
  PlainModel zeros = demo_model(config, 0);
  for (auto& t : zeros.conv) std::fill(t.data().begin(), t.data().end(), 0.0);
  for (auto& t : zeros.fc) std::fill(t.data().begin(), t.data().end(), 0.0);
  Tensor batch = demo_batch(config, 0);
  std::fill(batch.data().begin(), batch.data().end(), 0.0);
  SessionOptions session;
  session.packing = parse_packing(o.packing);
  const SessionResult result = run_session(zeros, config, batch, std::nullopt, session);
  const CostBreakdown costs = cost_breakdown(result.ledger, table);

  if (o.report == "csv") {
    out << ledger_csv(result.ledger, config.n) << '\n' << cost_csv(costs);
  } else {
    out << render_plan(result.plan) << '\n' << ledger_text(result.ledger, config.n) << '\n'
        << cost_text(costs, config.n);
  }
  if (!o.out.empty()) write_text_file(o.out, ledger_csv(result.ledger, config.n) + '\n' + cost_csv(costs));
  return kOk;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Model configuration (JSON)")->required();
  cmd->add_option("--n", o.n, "Override the number of simultaneous inputs");
  cmd->add_flag("--no-activation", o.no_activation, "Disable every square activation");
  cmd->add_option("--packing", o.packing, "Conv packing mode")
      ->check(CLI::IsMember({"auto", "baseline", "cross-channel", "cross-filter"}));
  cmd->add_option("--report", o.report, "Report format")->check(CLI::IsMember({"text", "csv"}));
  cmd->add_option("--out", o.out, "Output file");
}

void add_data(CLI::App* cmd, Options& o) {
  cmd->add_option("--weights", o.weights, "Weights tensor file (seeded demo weights when omitted)");
  cmd->add_option("--inputs", o.inputs, "Input batch tensor file (seeded demo inputs when omitted)");
  cmd->add_flag("--compare-oracle", o.compare_oracle, "Check against the plaintext oracle");
  cmd->add_option("--tolerance", o.tolerance, "Maximum relative error for --compare-oracle");
  cmd->add_option("--seed", o.seed, "Seed for client keys and demo data");
  cmd->add_option("--costs", o.costs, "Cost table (JSON) overriding the defaults");
}

double fan_in_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1))); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Packed homomorphic CNN inference and training on a simulated backend", "hecnn"};
  app.require_subcommand(1);
  Options o;
  auto* derive = app.add_subcommand("derive-params", "Print the packing plan of a configuration");
  add_common(derive, o);
  auto* infer = app.add_subcommand("infer", "Run an inference session and report operation counts");
  add_common(infer, o);
  add_data(infer, o);
  auto* train = app.add_subcommand("train-step", "Run one encrypted SGD step");
  add_common(train, o);
  add_data(train, o);
  train->add_option("--labels", o.labels, "Label tensor file, n x outputs (seeded when omitted)");
  train->add_option("--eta", o.eta, "Learning rate");
  auto* estimate = app.add_subcommand("estimate", "Estimate execution time from a dry run");
  add_common(estimate, o);
  estimate->add_option("--costs", o.costs, "Cost table (JSON) overriding the defaults");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (derive->parsed()) return cmd_derive(o, out);
    if (infer->parsed()) return cmd_infer(o, out, err);
    if (train->parsed()) return cmd_train(o, out, err);
    return cmd_estimate(o, out);
  } catch (const DepthBudgetError& e) {
    err << "depth budget error: " << e.what() << '\n';
    return kDepth;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const MissingCostError& e) {
    err << "missing cost: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

PlainModel demo_model(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PlainModel model;
  for (const auto& c : config.conv) {
    std::uniform_real_distribution<double> u(-fan_in_bound(c.channels * c.kernel * c.kernel),
                                               fan_in_bound(c.channels * c.kernel * c.kernel));
    Tensor t({static_cast<std::size_t>(c.filters), static_cast<std::size_t>(c.channels),
              static_cast<std::size_t>(c.kernel), static_cast<std::size_t>(c.kernel)});
    for (auto& v : t.data()) v = u(rng);
    model.conv.push_back(std::move(t));
  }
  for (const auto& f : config.fc) {
    std::uniform_real_distribution<double> u(-fan_in_bound(f.in), fan_in_bound(f.in));
    Tensor t({static_cast<std::size_t>(f.out), static_cast<std::size_t>(f.in)});
    for (auto& v : t.data()) v = u(rng);
    model.fc.push_back(std::move(t));
  }
  return model;
}

Tensor demo_batch(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto side = static_cast<std::size_t>(config.input_side);
  Tensor t({static_cast<std::size_t>(config.n), static_cast<std::size_t>(config.channels_in()), side, side});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Tensor demo_labels(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int outputs = config.fc.empty() ? 0 : config.fc.back().out;
  Tensor t({static_cast<std::size_t>(config.n), static_cast<std::size_t>(outputs)});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

CostBreakdown cost_breakdown(const OpLedger& ledger, const CostTable& costs) {
  CostBreakdown b;
  std::map<std::string, double> phase;
  for (const auto& [key, count] : ledger.entries()) {
    if (key.kind == OpKind::Enc || key.kind == OpKind::Dec) continue;
    const auto cost = costs.get(key.kind, key.level);
    if (!cost) {
      throw MissingCostError("no cost for " + std::string(to_string(key.kind)) + " at level " +
                             std::to_string(key.level));
    }
    const double us = *cost * static_cast<double>(count);
    phase[key.phase] += us;
    b.by_level[key.level] += us;
  }
  for (const auto& name : ledger.phases()) {
    if (auto it = phase.find(name); it != phase.end()) b.by_phase.emplace_back(name, it->second);
  }
  b.total = estimate_time(ledger, costs);
  return b;
}

std::string render_plan(const PackingPlan& plan) {
  std::ostringstream out;
  const ModelConfig& c = plan.config;
  out << "plan: S=" << plan.slots << " n=" << plan.n << " L=" << plan.levels
      << " depth=" << c.depth() << '\n';
  if (!plan.conv.empty()) {
    out << "combined: gamma0=" << plan.conv[0].combined.kernel << " delta0=" << plan.conv[0].combined.stride
        << " beta0=" << plan.grid_side << (plan.grid_exact ? "" : " (inexact)") << " r=" << plan.replication
        << '\n';
  }
  for (std::size_t l = 0; l < plan.conv.size(); ++l) {
    const auto& layer = plan.conv[l];
    out << "  CL" << l + 1 << ": " << layer.spec.channels << "->" << layer.spec.filters << " channels, kernel "
        << layer.spec.kernel << " stride " << layer.spec.stride << ", combined kernel " << layer.combined.kernel
        << " stride " << layer.combined.stride << ", " << to_string(layer.mode) << ", "
        << layer.filter_ciphertexts << " filter ciphertexts\n";
  }
  out << "  input ciphertexts: " << plan.input_ciphertexts() << '\n';
  for (std::size_t l = 0; l < plan.fc.size(); ++l) {
    const auto& layer = plan.fc[l];
    out << "  FL" << l + 1 << ": " << layer.spec.in << "->" << layer.spec.out << ", "
        << to_string(layer.input_type) << " input in " << layer.input_ciphertexts << " ciphertexts";
    if (layer.input_type == FcInputType::TypeI) out << " (" << layer.pisets_per_ciphertext << " pi-sets each)";
    out << ", " << layer.weight_ciphertexts << " weight ciphertexts, " << layer.output_ciphertexts
        << " output ciphertexts" << (layer.activation ? ", square" : "") << '\n';
  }
  for (const auto& w : plan.warnings) out << "  warning: " << w << '\n';
  return out.str();
}

}  // namespace hecnn::cli
