#include "hecnn/model.hpp"

#include "hecnn/errors.hpp"

namespace hecnn {

namespace {

void expect_shape(const Tensor& t, const std::vector<std::size_t>& shape, const std::string& what) {
  if (t.shape() != shape) {
    Tensor expected(shape);
    throw ValidationError(what + " has shape " + t.shape_string() + ", expected " +
                          expected.shape_string());
  }
}

}  // namespace

void check_model_shapes(const PlainModel& model, const ModelConfig& config) {
  if (model.conv.size() != config.conv.size() || model.fc.size() != config.fc.size()) {
    throw ValidationError("model has " + std::to_string(model.conv.size()) + " conv and " +
                          std::to_string(model.fc.size()) + " fc tensors, config expects " +
                          std::to_string(config.conv.size()) + " and " +
                          std::to_string(config.fc.size()));
  }
  for (std::size_t l = 0; l < config.conv.size(); ++l) {
    const auto& s = config.conv[l];
    expect_shape(model.conv[l],
                 {static_cast<std::size_t>(s.filters), static_cast<std::size_t>(s.channels),
                  static_cast<std::size_t>(s.kernel), static_cast<std::size_t>(s.kernel)},
                 "conv[" + std::to_string(l) + "] filters");
  }
  for (std::size_t l = 0; l < config.fc.size(); ++l) {
    const auto& s = config.fc[l];
    expect_shape(model.fc[l], {static_cast<std::size_t>(s.out), static_cast<std::size_t>(s.in)},
                 "fc[" + std::to_string(l) + "] weights");
  }
}

void check_batch_shape(const Tensor& batch, const ModelConfig& config) {
  expect_shape(batch,
               {static_cast<std::size_t>(config.n), static_cast<std::size_t>(config.channels_in()),
                static_cast<std::size_t>(config.input_side),
                static_cast<std::size_t>(config.input_side)},
               "input batch");
}

void check_label_shape(const Tensor& labels, const ModelConfig& config) {
  expect_shape(labels,
               {static_cast<std::size_t>(config.n), static_cast<std::size_t>(config.fc.back().out)},
               "labels");
}

}  // namespace hecnn
