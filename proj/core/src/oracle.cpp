#include "hecnn/oracle.hpp"

#include "hecnn/errors.hpp"

namespace hecnn {

namespace {

Tensor square(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v *= v;
  return out;
}

Tensor conv(const Tensor& input, const Tensor& filters, int stride) {
  const std::size_t n = input.dim(0);
  const std::size_t channels = input.dim(1);
  const std::size_t side = input.dim(2);
  const std::size_t count = filters.dim(0);
  const std::size_t k = filters.dim(2);
  const std::size_t d = static_cast<std::size_t>(stride);
  const std::size_t out_side = 1 + (side - k) / d;
  Tensor out({n, count, out_side, out_side});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t f = 0; f < count; ++f)
      for (std::size_t u = 0; u < out_side; ++u)
        for (std::size_t v = 0; v < out_side; ++v) {
          double sum = 0.0;
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t x = 0; x < k; ++x)
              for (std::size_t y = 0; y < k; ++y)
                sum += input.at(t, c, d * u + x, d * v + y) * filters.at(f, c, x, y);
          out.at(t, f, u, v) = sum;
        }
  return out;
}

Tensor flatten(const Tensor& t) {
  const std::size_t n = t.dim(0);
  return Tensor({n, t.size() / n}, std::vector<double>(t.data().begin(), t.data().end()));
}

Tensor dense(const Tensor& x, const Tensor& weights) {
  const std::size_t n = x.dim(0);
  const std::size_t in = weights.dim(1);
  const std::size_t out = weights.dim(0);
  Tensor y({n, out});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < out; ++i) {
      double sum = 0.0;
      for (std::size_t w = 0; w < in; ++w) sum += weights.at(i, w) * x.at(t, w);
      y.at(t, i) = sum;
    }
  return y;
}

// d/dpre of square(pre), chained with the post-activation gradient.
Tensor square_grad(const Tensor& pre, const Tensor& post_grad) {
  Tensor out = pre;
  auto g = post_grad.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 2.0 * o[i] * g[i];
  return out;
}

}  // namespace

PlainForward plain_forward(const PlainModel& model, const ModelConfig& config, const Tensor& batch) {
  check_model_shapes(model, config);
  if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(config.channels_in()) ||
      batch.dim(2) != static_cast<std::size_t>(config.input_side) || batch.dim(3) != batch.dim(2)) {
    throw ValidationError("input batch has shape " + batch.shape_string());
  }
  PlainForward out;
  Tensor current = batch;
  for (std::size_t l = 0; l < config.conv.size(); ++l) {
    out.conv_input.push_back(current);
    Tensor pre = conv(current, model.conv[l], config.conv[l].stride);
    out.conv_pre.push_back(pre);
    current = config.conv_has_activation() ? square(pre) : pre;
  }
  current = flatten(current);
  for (std::size_t l = 0; l < config.fc.size(); ++l) {
    if (current.dim(1) != static_cast<std::size_t>(config.fc[l].in)) {
      throw ValidationError("fc[" + std::to_string(l) + "] expects " +
                            std::to_string(config.fc[l].in) + " inputs, got " +
                            std::to_string(current.dim(1)));
    }
    out.fc_input.push_back(current);
    Tensor pre = dense(current, model.fc[l]);
    out.fc_pre.push_back(pre);
    current = config.fc_has_activation(l) ? square(pre) : pre;
  }
  out.logits = current;
  return out;
}

double mse(const Tensor& logits, const Tensor& labels) {
  if (logits.shape() != labels.shape()) {
    throw ValidationError("labels " + labels.shape_string() + " do not match logits " +
                          logits.shape_string());
  }
  double sum = 0.0;
  auto a = logits.data();
  auto b = labels.data();
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum / static_cast<double>(logits.dim(0));
}

double plain_loss(const PlainModel& model, const ModelConfig& config, const Tensor& batch,
                  const Tensor& labels) {
  return mse(plain_forward(model, config, batch).logits, labels);
}

PlainGradients plain_backward(const PlainModel& model, const ModelConfig& config,
                              const Tensor& batch, const Tensor& labels) {
  const PlainForward fwd = plain_forward(model, config, batch);
  if (fwd.logits.shape() != labels.shape()) {
    throw ValidationError("labels " + labels.shape_string() + " do not match logits " +
                          fwd.logits.shape_string());
  }
  const std::size_t n = batch.dim(0);
  const std::size_t c = config.conv.size();
  const std::size_t f = config.fc.size();
  PlainGradients grads;
  grads.conv.resize(c);
  grads.fc.resize(f);
  grads.conv_input.resize(c);
  grads.fc_input.resize(f);

  Tensor g = fwd.logits;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data()[i] = 2.0 * (fwd.logits.data()[i] - labels.data()[i]) / static_cast<double>(n);
  }
  for (std::size_t l = f; l-- > 0;) {
    if (config.fc_has_activation(l)) g = square_grad(fwd.fc_pre[l], g);
    const Tensor& x = fwd.fc_input[l];
    const Tensor& w = model.fc[l];
    Tensor dw(w.shape());
    Tensor dx(x.shape());
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < w.dim(0); ++i)
        for (std::size_t j = 0; j < w.dim(1); ++j) {
          dw.at(i, j) += g.at(t, i) * x.at(t, j);
          dx.at(t, j) += g.at(t, i) * w.at(i, j);
        }
    grads.fc[l] = std::move(dw);
    grads.fc_input[l] = dx;
    g = std::move(dx);
  }
  if (c > 0) {
    const auto& shape = fwd.conv_pre.back().shape();
    g = Tensor(shape, std::vector<double>(g.data().begin(), g.data().end()));
  }
  for (std::size_t l = c; l-- > 0;) {
    if (config.conv_has_activation()) g = square_grad(fwd.conv_pre[l], g);
    const Tensor& a = fwd.conv_input[l];
    const Tensor& w = model.conv[l];
    const std::size_t d = static_cast<std::size_t>(config.conv[l].stride);
    const std::size_t k = w.dim(2);
    const std::size_t out_side = g.dim(2);
    Tensor dw(w.shape());
    Tensor da(a.shape());
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t fi = 0; fi < w.dim(0); ++fi)
        for (std::size_t ci = 0; ci < w.dim(1); ++ci)
          for (std::size_t u = 0; u < out_side; ++u)
            for (std::size_t v = 0; v < out_side; ++v) {
              const double go = g.at(t, fi, u, v);
              for (std::size_t x = 0; x < k; ++x)
                for (std::size_t y = 0; y < k; ++y) {
                  dw.at(fi, ci, x, y) += go * a.at(t, ci, d * u + x, d * v + y);
                  da.at(t, ci, d * u + x, d * v + y) += go * w.at(fi, ci, x, y);
                }
            }
    grads.conv[l] = std::move(dw);
    grads.conv_input[l] = da;
    g = std::move(da);
  }
  return grads;
}

PlainGradients finite_diff_grad(const PlainModel& model, const ModelConfig& config,
                                const Tensor& batch, const Tensor& labels, double step) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
  PlainGradients grads;
  PlainModel probe = model;
  auto diff = [&](Tensor& param) {
    Tensor out(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + step;
      const double up = plain_loss(probe, config, batch, labels);
      param.data()[i] = saved - step;
      const double down = plain_loss(probe, config, batch, labels);
      param.data()[i] = saved;
      out.data()[i] = (up - down) / (2.0 * step);
    }
    return out;
  };
  for (auto& t : probe.conv) grads.conv.push_back(diff(t));
  for (auto& t : probe.fc) grads.fc.push_back(diff(t));
  return grads;
}

PlainModel sgd_step(const PlainModel& model, const PlainGradients& grads, double eta) {
  PlainModel out = model;
  auto apply = [eta](Tensor& w, const Tensor& g) {
    if (w.shape() != g.shape()) throw ValidationError("gradient shape mismatch in SGD step");
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= eta * g.data()[i];
  };
  for (std::size_t l = 0; l < out.conv.size(); ++l) apply(out.conv[l], grads.conv.at(l));
  for (std::size_t l = 0; l < out.fc.size(); ++l) apply(out.fc[l], grads.fc.at(l));
  return out;
}

}  // namespace hecnn
