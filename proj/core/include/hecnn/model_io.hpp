#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/ledger.hpp"
#include "hecnn/model.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn {

// JSON model configuration:
//   {"input_side": 28, "input_channels": 1, "n": 64, "slot_count": 4096,
//    "conv": [{"channels": 1, "filters": 4, "kernel": 7, "stride": 3}],
//    "fc": [{"in": 256, "out": 64}, {"in": 64, "out": 10}],
//    "final_activation": false, "activation": true}
// Syntax errors report line and column; field errors report the JSON path.
ModelConfig parse_config(std::string_view text, const std::string& source = "<config>");
ModelConfig load_config(const std::string& path);
std::string config_to_json(const ModelConfig& config);

// Tensor containers. Binary: "HCNT", u32 version, u32 count, then per tensor
// u8 dtype (1 = f64 little-endian), u32 rank, u64 dims, row-major payload.
// Text: "tensor d0 d1 ..." header lines each followed by the values; '#'
// starts a comment. read_tensors detects the format from the magic.
std::vector<Tensor> parse_tensors(const std::string& bytes, const std::string& source = "<tensors>");
std::vector<Tensor> read_tensors(const std::string& path);
std::string tensors_to_binary(const std::vector<Tensor>& tensors);
std::string tensors_to_text(const std::vector<Tensor>& tensors);
void write_tensors(const std::string& path, const std::vector<Tensor>& tensors, bool text = false);

// A weights file holds the conv filters in layer order, then the FC matrices.
PlainModel model_from_tensors(std::vector<Tensor> tensors, const ModelConfig& config);
std::vector<Tensor> model_to_tensors(const PlainModel& model);

// Cost table JSON: {"rows": [{"level": 6, "add": 253, "mul": 25931,
// "rot": 20057, "cmult": 5018}, ...]}. Rows override the built-in defaults
// unless "replace": true.
CostTable parse_cost_table(std::string_view text, const std::string& source = "<costs>");
CostTable load_cost_table(const std::string& path);

std::string read_file(const std::string& path);

}  // namespace hecnn
