#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace hecnn {

enum class OpKind : std::uint8_t { Add, Mul, CMult, Rot, Enc, Dec };

inline constexpr std::array<OpKind, 6> kReportKinds = {
    OpKind::Add, OpKind::Mul, OpKind::Rot, OpKind::CMult, OpKind::Enc, OpKind::Dec};

std::string_view to_string(OpKind kind);

// Counts of homomorphic primitive invocations keyed by (phase, kind, level).
//
// The phase is taken from a label stack so the pipeline can annotate its
// stages ("CL1", "Square(CL1)", "FL1", ...). Counts only grow; merging two
// ledgers sums entrywise. A ledger is owned by a single worker; parallel code
// forks one per worker and merges at the join.
class OpLedger {
 public:
  struct Key {
    std::string phase;
    OpKind kind;
    int level;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  void record(OpKind kind, int level, std::uint64_t count = 1);

  void push_phase(std::string phase);
  void pop_phase();
  std::string_view current_phase() const;

  // Empty ledger sharing this ledger's phase stack and known phase order.
  OpLedger fork() const;
  void merge(const OpLedger& other);

  std::uint64_t total(OpKind kind) const;
  std::uint64_t at_level(OpKind kind, int level) const;
  std::uint64_t in_phase(std::string_view phase, OpKind kind) const;
  std::uint64_t count(std::string_view phase, OpKind kind, int level) const;

  bool empty() const { return counts_.empty(); }
  const std::map<Key, std::uint64_t>& entries() const { return counts_; }
  // Phases in the order they first received a count.
  const std::vector<std::string>& phases() const { return phase_order_; }
  std::vector<int> levels() const;

  friend bool operator==(const OpLedger& a, const OpLedger& b) {
    return a.counts_ == b.counts_;
  }

 private:
  std::map<Key, std::uint64_t> counts_;
  std::vector<std::string> phase_stack_;
  std::vector<std::string> phase_order_;
};

OpLedger merge(const OpLedger& a, const OpLedger& b);

// RAII phase label.
class PhaseScope {
 public:
  PhaseScope(OpLedger& ledger, std::string phase) : ledger_(ledger) {
    ledger_.push_phase(std::move(phase));
  }
  ~PhaseScope() { ledger_.pop_phase(); }
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  OpLedger& ledger_;
};

enum class Grouping { ByPhase, ByLevel, Totals, Amortized };

// One row of a rendered ledger table. Counts stay integral; `divisor` is the
// amortization denominator (1 for plain counts).
struct ReportRow {
  std::string label;
  std::array<std::uint64_t, kReportKinds.size()> counts{};
  std::uint64_t divisor = 1;

  double value(std::size_t column) const {
    return static_cast<double>(counts[column]) / static_cast<double>(divisor);
  }
};

struct ReportTable {
  Grouping grouping = Grouping::Totals;
  std::vector<ReportRow> rows;
};

// Deterministic table. ByLevel lists levels high to low; Amortized divides
// totals by n (n >= 1) and renders one decimal.
ReportTable report(const OpLedger& ledger, Grouping grouping, std::uint64_t n = 1);

std::string render_text(const ReportTable& table);
// Header: phase/level,add,mul,rot,cmult,enc,dec
std::string render_csv(const ReportTable& table);
ReportTable parse_csv(std::string_view csv, Grouping grouping);

// Per-(kind, level) operation cost in microseconds for Add, Mul, Rot, CMult.
class CostTable {
 public:
  // Measured costs at N=16384 for levels 2-11, plus a level-1 row
  // extrapolated linearly from levels 2 and 3.
  static CostTable builtin_defaults();

  void set(OpKind kind, int level, double micros);
  std::optional<double> get(OpKind kind, int level) const;
  const std::map<std::pair<OpKind, int>, double>& entries() const { return costs_; }

 private:
  std::map<std::pair<OpKind, int>, double> costs_;
};

// Sum of count x cost over Add/Mul/Rot/CMult entries. Enc and Dec are free.
// Throws MissingCostError when a counted (kind, level) has no cost.
double estimate_time(const OpLedger& ledger, const CostTable& costs);

}  // namespace hecnn
