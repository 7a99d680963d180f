#include <gtest/gtest.h>

#include <filesystem>

#include "hecnn/errors.hpp"
#include "hecnn/model_io.hpp"

namespace hecnn {
namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

constexpr const char* kConfig = R"({
  "input_side": 8, "n": 2, "slot_count": 8,
  "conv": [{"channels": 1, "filters": 2, "kernel": 2, "stride": 2}],
  "fc": [{"in": 32, "out": 2}, {"in": 2, "out": 2}]
})";

TEST(Config, ParsesAndRoundTrips) {
  const ModelConfig c = parse_config(kConfig);
  EXPECT_EQ(c.input_side, 8);
  EXPECT_EQ(c.slot_count, 8u);
  ASSERT_EQ(c.conv.size(), 1u);
  EXPECT_EQ(c.conv[0].filters, 2);
  EXPECT_TRUE(c.activation);
  const ModelConfig again = parse_config(config_to_json(c));
  EXPECT_EQ(again.conv, c.conv);
  EXPECT_EQ(again.fc, c.fc);
  EXPECT_EQ(again.n, c.n);
}

TEST(Config, SyntaxErrorReportsLineAndColumn) {
  const std::string msg = error_of([] { parse_config("{\n  \"n\": 2,\n  oops\n}", "m.json"); });
  EXPECT_NE(msg.find("m.json"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Config, FieldErrorsNameTheJsonPath) {
  const std::string bad_kernel = error_of([] {
    parse_config(R"({"input_side": 8, "n": 1, "slot_count": 64, "conv": [{"channels": 1, "filters": 1, "kernel": "x", "stride": 1}], "fc": [{"in": 1, "out": 1}]})");
  });
  EXPECT_NE(bad_kernel.find("$.conv[0].kernel"), std::string::npos) << bad_kernel;
  const std::string unknown = error_of([] {
    parse_config(R"({"input_side": 8, "n": 1, "slot_count": 64, "fc": [{"in": 1, "out": 1, "bias": true}]})");
  });
  EXPECT_NE(unknown.find("$.fc[0].bias"), std::string::npos) << unknown;
}

TEST(Tensors, BinaryAndTextRoundTrip) {
  const std::vector<Tensor> ts = {Tensor({2, 3}, std::vector<double>{1, -2.5, 3, 0.125, 1e-300, 7}),
                                  Tensor({1}, std::vector<double>{42})};
  EXPECT_EQ(parse_tensors(tensors_to_binary(ts)), ts);
  EXPECT_EQ(parse_tensors(tensors_to_text(ts)), ts);
}

TEST(Tensors, TextAllowsComments) {
  const auto ts = parse_tensors("# weights\ntensor 2 2\n1 2 # first row\n3 4\n");
  ASSERT_EQ(ts.size(), 1u);
  EXPECT_EQ(ts[0], Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensors, RejectsTruncatedContainer) {
  std::string bytes = tensors_to_binary({Tensor({4}, 1.0)});
  bytes.resize(bytes.size() - 3);
  EXPECT_NE(error_of([&] { parse_tensors(bytes, "w.bin"); }).find("truncated"), std::string::npos);
}

TEST(Tensors, RejectsWrongValueCount) {
  EXPECT_THROW(parse_tensors("tensor 2 2\n1 2 3\n"), ValidationError);
}

TEST(Tensors, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "hecnn_io_roundtrip.bin";
  const std::vector<Tensor> ts = {Tensor({3}, std::vector<double>{1, 2, 3})};
  write_tensors(path.string(), ts);
  EXPECT_EQ(read_tensors(path.string()), ts);
  std::filesystem::remove(path);
}

TEST(Model, ShapesAreChecked) {
  const ModelConfig c = parse_config(kConfig);
  std::vector<Tensor> ts = {Tensor({2, 1, 2, 2}), Tensor({2, 32}), Tensor({2, 2})};
  const PlainModel m = model_from_tensors(ts, c);
  EXPECT_EQ(model_to_tensors(m), ts);
  ts[1] = Tensor({2, 31});
  EXPECT_THROW(model_from_tensors(ts, c), ValidationError);
  ts.pop_back();
  EXPECT_THROW(model_from_tensors(ts, c), ValidationError);
}

TEST(CostTable, RowsOverrideDefaults) {
  const CostTable t = parse_cost_table(R"({"rows": [{"level": 3, "mul": 1.5}]})");
  const CostTable d = CostTable::builtin_defaults();
  EXPECT_EQ(t.get(OpKind::Mul, 3), 1.5);
  EXPECT_EQ(t.get(OpKind::Add, 3), d.get(OpKind::Add, 3));
  EXPECT_EQ(t.get(OpKind::Mul, 4), d.get(OpKind::Mul, 4));
}

TEST(CostTable, ReplaceDropsDefaults) {
  const CostTable t =
      parse_cost_table(R"({"replace": true, "rows": [{"level": 1, "add": 1, "mul": 2, "rot": 3, "cmult": 4}]})");
  EXPECT_EQ(t.get(OpKind::Rot, 1), 3.0);
  EXPECT_FALSE(t.get(OpKind::Add, 2).has_value());
}

}  // namespace
}  // namespace hecnn
