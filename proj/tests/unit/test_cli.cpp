#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hecnn/cli.hpp"
#include "hecnn/model_io.hpp"
#include "hecnn/protocol.hpp"

namespace hecnn {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string data(const std::string& rel) { return std::string(HECNN_DATA_DIR) + "/" + rel; }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hecnn_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

TEST(Cli, DeriveParamsForReferenceModel) {
  const Outcome r = cli({"derive-params", "--config", data("cnn12/config.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("plan: S=4096 n=64 L=6 depth=5"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("gamma0=7 delta0=3 beta0=8 r=1"), std::string::npos) << r.out;
}

TEST(Cli, WorkedExampleInferenceMatchesOracle) {
  const Outcome r = cli({"infer", "--config", data("tiny8/config.json"), "--weights", data("tiny8/weights.txt"),
                     "--inputs", data("tiny8/inputs.txt"), "--compare-oracle"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("[0] 36 76"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("[1] 72 152"), std::string::npos) << r.out;
}

TEST(Cli, InvalidBatchSizeIsAValidationError) {
  const Outcome r = cli({"derive-params", "--config", data("tiny8/config.json"), "--n", "3"});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("n = 3"), std::string::npos) << r.err;
}

TEST(Cli, MalformedConfigIsAValidationError) {
  const fs::path path = scratch("broken.json");
  write(path, "{\"input_side\": 8,\n \"n\": }");
  const Outcome r = cli({"derive-params", "--config", path.string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagIsAValidationError) {
  EXPECT_EQ(cli({"infer", "--config", data("tiny8/config.json"), "--bogus"}).code, cli::kValidation);
}

TEST(Cli, OversizedFcLayerCannotBeTrained) {
  const fs::path path = scratch("wide.json");
  write(path, R"({"input_side": 1, "input_channels": 64, "n": 2, "slot_count": 8,
                  "fc": [{"in": 64, "out": 2}, {"in": 2, "out": 2}]})");
  const Outcome r = cli({"train-step", "--config", path.string()});
  EXPECT_EQ(r.code, cli::kValidation) << r.out;
  EXPECT_NE(r.err.find("(i,j)"), std::string::npos) << r.err;
}

TEST(Cli, TrainStepWithZeroEtaKeepsWeights) {
  const fs::path out = scratch("updated.txt");
  const Outcome r = cli({"train-step", "--config", data("desk/config.json"), "--eta", "0", "--seed", "5",
                     "--out", out.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const ModelConfig config = load_config(data("desk/config.json"));
  const PlainModel want = cli::demo_model(config, 5);
  const PlainModel got = model_from_tensors(read_tensors(out.string()), config);
  for (std::size_t l = 0; l < want.fc.size(); ++l) {
    for (std::size_t i = 0; i < want.fc[l].size(); ++i) {
      EXPECT_NEAR(got.fc[l].data()[i], want.fc[l].data()[i], 1e-12);
    }
  }
  for (std::size_t l = 0; l < want.conv.size(); ++l) {
    for (std::size_t i = 0; i < want.conv[l].size(); ++i) {
      EXPECT_NEAR(got.conv[l].data()[i], want.conv[l].data()[i], 1e-12);
    }
  }
}

TEST(Cli, TrainStepComparesWithOracle) {
  const Outcome r = cli({"train-step", "--config", data("desk/config.json"), "--compare-oracle"});
  EXPECT_EQ(r.code, cli::kOk) << r.err << r.out;
}

double estimated_total(const std::string& out) {
  const auto pos = out.find("estimated total ");
  EXPECT_NE(pos, std::string::npos) << out;
  return std::stod(out.substr(pos + 16));
}

TEST(Cli, EstimateScalesWithCostTable) {
  const std::string config = data("cnn12/config.json");
  const Outcome base = cli({"estimate", "--config", config});
  ASSERT_EQ(base.code, cli::kOk) << base.err;

  // Halving every multiplication cost removes exactly half of the ⊗ share.
  const CostTable defaults = CostTable::builtin_defaults();
  std::string rows;
  for (const auto& [key, cost] : defaults.entries()) {
    if (key.first != OpKind::Mul) continue;
    if (!rows.empty()) rows += ",";
    rows += "{\"level\":" + std::to_string(key.second) + ",\"mul\":" + std::to_string(cost / 2) + "}";
  }
  const fs::path costs = scratch("half_mul.json");
  write(costs, "{\"rows\":[" + rows + "]}");
  const Outcome half = cli({"estimate", "--config", config, "--costs", costs.string()});
  ASSERT_EQ(half.code, cli::kOk) << half.err;

  const ModelConfig mc = load_config(config);
  const SessionResult s = run_session(cli::demo_model(mc, 1), mc, cli::demo_batch(mc, 1));
  double mul_share = 0.0;
  for (int level : s.ledger.levels()) {
    mul_share += static_cast<double>(s.ledger.at_level(OpKind::Mul, level)) * *defaults.get(OpKind::Mul, level);
  }
  EXPECT_NEAR(estimated_total(base.out) - estimated_total(half.out), mul_share / 2, 2.0);
}

TEST(Cli, EstimateWithoutConvLayers) {
  const fs::path path = scratch("fc_only.json");
  write(path, R"({"input_side": 1, "input_channels": 4, "n": 4, "slot_count": 16,
                  "fc": [{"in": 4, "out": 2}, {"in": 2, "out": 2}]})");
  const Outcome r = cli({"estimate", "--config", path.string()});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_GT(estimated_total(r.out), 0.0);
  EXPECT_EQ(r.out.find("CL1"), std::string::npos);
}

TEST(Cli, CsvReportParsesBack) {
  const Outcome r = cli({"infer", "--config", data("tiny8/config.json"), "--report", "csv"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto end = r.out.find("\n\n");
  ASSERT_NE(end, std::string::npos);
  const ReportTable table = parse_csv(r.out.substr(0, end + 1), Grouping::ByPhase);
  const auto row = std::find_if(table.rows.begin(), table.rows.end(),
                                [](const ReportRow& x) { return x.label == "CL1"; });
  ASSERT_NE(row, table.rows.end());
  EXPECT_EQ(row->counts[0], 24u);
  EXPECT_EQ(row->counts[1], 32u);
}

}  // namespace
}  // namespace hecnn
