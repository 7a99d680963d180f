#pragma once

#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn {

// Plaintext model parameters. Conv filters are (filters x channels x kernel x
// kernel); FC matrices are (out x in).
struct PlainModel {
  std::vector<Tensor> conv;
  std::vector<Tensor> fc;
  friend bool operator==(const PlainModel&, const PlainModel&) = default;
};

// Throws ValidationError when the tensors do not match the configuration.
void check_model_shapes(const PlainModel& model, const ModelConfig& config);
// Batch tensors are (n x channels x side x side).
void check_batch_shape(const Tensor& batch, const ModelConfig& config);
// Label tensors are (n x outputs).
void check_label_shape(const Tensor& labels, const ModelConfig& config);

}  // namespace hecnn
