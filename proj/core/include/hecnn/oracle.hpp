#pragma once

#include <vector>

#include "hecnn/geometry.hpp"
#include "hecnn/model.hpp"
#include "hecnn/tensor.hpp"

namespace hecnn {

// Plaintext reference network: valid strided convolution, square
// activations, dense layers, no bias.
struct PlainForward {
  Tensor logits;                  // n x o_f
  std::vector<Tensor> conv_input; // n x channels x side x side, per conv layer
  std::vector<Tensor> conv_pre;   // pre-activation conv outputs
  std::vector<Tensor> fc_input;   // n x in, per FC layer
  std::vector<Tensor> fc_pre;     // n x out, pre-activation
};

struct PlainGradients {
  std::vector<Tensor> conv;        // like PlainModel::conv
  std::vector<Tensor> fc;          // like PlainModel::fc
  std::vector<Tensor> conv_input;  // dL/d(input of conv layer l)
  std::vector<Tensor> fc_input;    // dL/d(input of FC layer l)
};

PlainForward plain_forward(const PlainModel& model, const ModelConfig& config, const Tensor& batch);

// Mean over the n inputs of the squared error summed over logits.
double mse(const Tensor& logits, const Tensor& labels);
double plain_loss(const PlainModel& model, const ModelConfig& config, const Tensor& batch,
                  const Tensor& labels);

PlainGradients plain_backward(const PlainModel& model, const ModelConfig& config,
                              const Tensor& batch, const Tensor& labels);

// Central differences of plain_loss for every weight (conv and fc fields only).
PlainGradients finite_diff_grad(const PlainModel& model, const ModelConfig& config,
                                const Tensor& batch, const Tensor& labels, double step = 1e-5);

PlainModel sgd_step(const PlainModel& model, const PlainGradients& grads, double eta);

}  // namespace hecnn
