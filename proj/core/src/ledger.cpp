#include "hecnn/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "hecnn/errors.hpp"

namespace hecnn {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::CMult: return "cmult";
    case OpKind::Rot: return "rot";
    case OpKind::Enc: return "enc";
    case OpKind::Dec: return "dec";
  }
  return "?";
}

namespace {

constexpr std::string_view kNoPhase = "-";

std::size_t column_of(OpKind kind) {
  for (std::size_t i = 0; i < kReportKinds.size(); ++i) {
    if (kReportKinds[i] == kind) return i;
  }
  return 0;
}

}  // namespace

void OpLedger::record(OpKind kind, int level, std::uint64_t count) {
  std::string phase(current_phase());
  if (std::find(phase_order_.begin(), phase_order_.end(), phase) == phase_order_.end()) {
    phase_order_.push_back(phase);
  }
  counts_[Key{std::move(phase), kind, level}] += count;
}

void OpLedger::push_phase(std::string phase) { phase_stack_.push_back(std::move(phase)); }

void OpLedger::pop_phase() {
  if (!phase_stack_.empty()) phase_stack_.pop_back();
}

std::string_view OpLedger::current_phase() const {
  return phase_stack_.empty() ? kNoPhase : std::string_view(phase_stack_.back());
}

OpLedger OpLedger::fork() const {
  OpLedger child;
  child.phase_stack_ = phase_stack_;
  child.phase_order_ = phase_order_;
  return child;
}

void OpLedger::merge(const OpLedger& other) {
  for (const auto& phase : other.phase_order_) {
    if (std::find(phase_order_.begin(), phase_order_.end(), phase) == phase_order_.end() &&
        std::any_of(other.counts_.begin(), other.counts_.end(),
                    [&](const auto& e) { return e.first.phase == phase; })) {
      phase_order_.push_back(phase);
    }
  }
  for (const auto& [key, value] : other.counts_) counts_[key] += value;
}

std::uint64_t OpLedger::total(OpKind kind) const {
  std::uint64_t sum = 0;
  for (const auto& [key, value] : counts_) {
    if (key.kind == kind) sum += value;
  }
  return sum;
}

std::uint64_t OpLedger::at_level(OpKind kind, int level) const {
  std::uint64_t sum = 0;
  for (const auto& [key, value] : counts_) {
    if (key.kind == kind && key.level == level) sum += value;
  }
  return sum;
}

std::uint64_t OpLedger::in_phase(std::string_view phase, OpKind kind) const {
  std::uint64_t sum = 0;
  for (const auto& [key, value] : counts_) {
    if (key.kind == kind && key.phase == phase) sum += value;
  }
  return sum;
}

std::uint64_t OpLedger::count(std::string_view phase, OpKind kind, int level) const {
  auto it = counts_.find(Key{std::string(phase), kind, level});
  return it == counts_.end() ? 0 : it->second;
}

std::vector<int> OpLedger::levels() const {
  std::set<int, std::greater<>> seen;
  for (const auto& entry : counts_) seen.insert(entry.first.level);
  return {seen.begin(), seen.end()};
}

OpLedger merge(const OpLedger& a, const OpLedger& b) {
  OpLedger out = a;
  out.merge(b);
  return out;
}

ReportTable report(const OpLedger& ledger, Grouping grouping, std::uint64_t n) {
  ReportTable table;
  table.grouping = grouping;
  auto totals_row = [&](std::string label) {
    ReportRow row;
    row.label = std::move(label);
    for (const auto& [key, value] : ledger.entries()) row.counts[column_of(key.kind)] += value;
    return row;
  };

  switch (grouping) {
    case Grouping::ByPhase:
      for (const auto& phase : ledger.phases()) {
        ReportRow row;
        row.label = phase;
        for (const auto& [key, value] : ledger.entries()) {
          if (key.phase == phase) row.counts[column_of(key.kind)] += value;
        }
        table.rows.push_back(std::move(row));
      }
      break;
    case Grouping::ByLevel:
      for (int level : ledger.levels()) {
        ReportRow row;
        row.label = std::to_string(level);
        for (const auto& [key, value] : ledger.entries()) {
          if (key.level == level) row.counts[column_of(key.kind)] += value;
        }
        table.rows.push_back(std::move(row));
      }
      break;
    case Grouping::Totals:
      table.rows.push_back(totals_row("total"));
      break;
    case Grouping::Amortized: {
      if (n == 0) throw ValidationError("amortized report requires n >= 1");
      ReportRow row = totals_row("amortized");
      row.divisor = n;
      table.rows.push_back(std::move(row));
      break;
    }
  }
  return table;
}

namespace {

std::string format_cell(const ReportTable& table, const ReportRow& row, std::size_t column) {
  if (table.grouping == Grouping::Amortized) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1) << row.value(column);
    return out.str();
  }
  return std::to_string(row.counts[column]);
}

}  // namespace

std::string render_text(const ReportTable& table) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {table.grouping == Grouping::ByLevel ? "level" : "phase"};
  for (OpKind kind : kReportKinds) header.emplace_back(to_string(kind));
  cells.push_back(header);
  for (const auto& row : table.rows) {
    std::vector<std::string> line = {row.label};
    for (std::size_t c = 0; c < kReportKinds.size(); ++c) line.push_back(format_cell(table, row, c));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(widths[c])) << line[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << line[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string render_csv(const ReportTable& table) {
  std::ostringstream out;
  out << "phase/level,add,mul,rot,cmult,enc,dec\n";
  for (const auto& row : table.rows) {
    out << row.label;
    for (std::size_t c = 0; c < kReportKinds.size(); ++c) out << ',' << format_cell(table, row, c);
    out << '\n';
  }
  return out.str();
}

ReportTable parse_csv(std::string_view csv, Grouping grouping) {
  ReportTable table;
  table.grouping = grouping;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "phase/level,add,mul,rot,cmult,enc,dec") {
    throw ValidationError("report CSV: missing or unexpected header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != kReportKinds.size() + 1) {
      throw ValidationError("report CSV line " + std::to_string(line_no) + ": expected 7 fields");
    }
    ReportRow row;
    row.label = fields[0];
    // Amortized cells carry one decimal; keep them as tenths.
    if (grouping == Grouping::Amortized) row.divisor = 10;
    for (std::size_t c = 0; c < kReportKinds.size(); ++c) {
      try {
        if (grouping == Grouping::Amortized) {
          row.counts[c] = static_cast<std::uint64_t>(std::llround(std::stod(fields[c + 1]) * 10.0));
        } else {
          row.counts[c] = std::stoull(fields[c + 1]);
        }
      } catch (const std::exception&) {
        throw ValidationError("report CSV line " + std::to_string(line_no) + ": bad number '" +
                              fields[c + 1] + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

CostTable CostTable::builtin_defaults() {
  struct Row {
    int level;
    double add, mul, rot, cmult;
  };
  static constexpr Row kRows[] = {
      {1, 59, 2762, 1773, 823},  // extrapolated from levels 2 and 3
      {2, 93, 6434, 4542, 1645},     {3, 127, 10106, 7311, 2467},
      {4, 172, 14466, 10719, 3273},  {5, 209, 19757, 14995, 4137},
      {6, 253, 25931, 20057, 5018},  {7, 298, 33139, 25916, 5935},
      {8, 345, 39953, 31722, 6741},  {9, 397, 49835, 40167, 7942},
      {10, 443, 57791, 47144, 8731}, {11, 498, 68374, 56366, 9895},
  };
  CostTable table;
  for (const auto& row : kRows) {
    table.set(OpKind::Add, row.level, row.add);
    table.set(OpKind::Mul, row.level, row.mul);
    table.set(OpKind::Rot, row.level, row.rot);
    table.set(OpKind::CMult, row.level, row.cmult);
  }
  return table;
}

void CostTable::set(OpKind kind, int level, double micros) {
  if (kind == OpKind::Enc || kind == OpKind::Dec) {
    throw ValidationError("cost table prices only add/mul/rot/cmult");
  }
  if (!(micros > 0.0)) {
    throw ValidationError("cost for " + std::string(to_string(kind)) + " at level " +
                          std::to_string(level) + " must be positive");
  }
  costs_[{kind, level}] = micros;
}

std::optional<double> CostTable::get(OpKind kind, int level) const {
  auto it = costs_.find({kind, level});
  if (it == costs_.end()) return std::nullopt;
  return it->second;
}

double estimate_time(const OpLedger& ledger, const CostTable& costs) {
  double total = 0.0;
  for (const auto& [key, count] : ledger.entries()) {
    if (key.kind == OpKind::Enc || key.kind == OpKind::Dec || count == 0) continue;
    auto cost = costs.get(key.kind, key.level);
    if (!cost) {
      throw MissingCostError("no cost entry for " + std::string(to_string(key.kind)) +
                             " at level " + std::to_string(key.level));
    }
    total += static_cast<double>(count) * *cost;
  }
  return total;
}

}  // namespace hecnn
