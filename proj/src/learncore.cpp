#include "evicon/learncore.hpp"

#include <algorithm>
#include <cmath>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::learn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw Error("invalid_checkpoint", "unknown activation '" + s + "'");
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error("invalid_argument", "DenseNet needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weight.rows()) throw Error("invalid_argument", "layer bias/weight mismatch");
    if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows()) {
      throw Error("invalid_argument", "layer " + std::to_string(i) + " input does not chain");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw Error("invalid_argument", "non-finite weights");
  }
}

DenseNet DenseNet::xavier(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
                          std::uint64_t seed) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
    throw Error("invalid_argument", "xavier: dims must have one more entry than activations");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(dims[i]);
    const auto out = static_cast<Eigen::Index>(dims[i + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Rng rng(derive_seed(seed, i));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out), activations[i]};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

std::size_t DenseNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t DenseNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<std::span<double>> DenseNet::parameters() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

NetGradient NetGradient::zeros_like(const DenseNet& net) {
  NetGradient g;
  for (const auto& l : net.layers()) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

NetGradient& NetGradient::operator+=(const NetGradient& other) {
  if (layers.empty()) {
    *this = other;
    return *this;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

NetGradient& NetGradient::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  return *this;
}

std::vector<std::span<const double>> NetGradient::views() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

namespace {

void check_input(const DenseNet& net, Eigen::Index rows) {
  if (net.layers().empty()) throw Error("invalid_argument", "forward: empty network");
  if (static_cast<std::size_t>(rows) != net.input_dim()) {
    throw Error("dimension_mismatch", "network expects input of size " + std::to_string(net.input_dim()) +
                                          ", got " + std::to_string(rows));
  }
}

}  // namespace

Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs, ForwardCache* cache) {
  check_input(net, inputs.rows());
  if (cache) {
    cache->inputs.clear();
    cache->pre_activations.clear();
  }
  Eigen::MatrixXd x = inputs;
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre_activations.push_back(z);
    }
    x = layer.activation == Activation::relu ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return x;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input) {
  return forward_batch(net, input);
}

NetGradient backward_batch(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                           Eigen::MatrixXd* input_grad) {
  const auto& layers = net.layers();
  if (cache.inputs.size() != layers.size()) throw Error("invalid_argument", "backward: cache does not match net");
  if (static_cast<std::size_t>(upstream.rows()) != net.output_dim() ||
      upstream.cols() != cache.inputs.front().cols()) {
    throw Error("dimension_mismatch", "backward: upstream gradient shape mismatch");
  }
  NetGradient grad;
  grad.layers.resize(layers.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (layers[i].activation == Activation::relu) {
      delta = delta.cwiseProduct((cache.pre_activations[i].array() > 0.0).cast<double>().matrix());
    }
    grad.layers[i].weight = delta * cache.inputs[i].transpose();
    grad.layers[i].bias = delta.rowwise().sum();
    if (i > 0 || input_grad) delta = layers[i].weight.transpose() * delta;
  }
  if (input_grad) *input_grad = std::move(delta);
  return grad;
}

BackwardResult backward(const DenseNet& net, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream) {
  ForwardCache cache;
  forward_batch(net, input, &cache);
  Eigen::MatrixXd in_grad;
  BackwardResult out;
  out.params = backward_batch(net, cache, upstream, &in_grad);
  out.input_grad = in_grad.col(0);
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

LossGrad softmax_cross_entropy(const Eigen::VectorXd& logits, std::size_t target) {
  if (target >= static_cast<std::size_t>(logits.size())) {
    throw Error("invalid_argument", "softmax_cross_entropy: target index out of range");
  }
  if (!logits.allFinite()) throw Error("non_finite", "softmax_cross_entropy: non-finite logits");
  const double max = logits.maxCoeff();
  const Eigen::ArrayXd shifted = logits.array() - max;
  const double log_sum = std::log(shifted.exp().sum());
  LossGrad out;
  const auto t = static_cast<Eigen::Index>(target);
  out.loss = log_sum - shifted(t);
  out.grad = (shifted - log_sum).exp().matrix();
  out.grad(t) -= 1.0;
  return out;
}

void optimizer_step(OptimizerState& state, const std::vector<std::span<double>>& params,
                    const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) throw Error("dimension_mismatch", "optimizer_step: block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size()) throw Error("dimension_mismatch", "optimizer_step: block size mismatch");
    for (double g : grads[b]) {
      if (!std::isfinite(g)) throw Error("non_finite_gradient", "optimizer_step: non-finite gradient");
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error("dimension_mismatch", "optimizer_step: state was built for different parameters");
  }
  const auto& c = state.config;
  ++state.step;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      params[b][i] -= c.learning_rate * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + c.epsilon);
    }
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

GradientCheckResult gradient_check(const std::vector<std::span<double>>& params,
                                   const std::vector<std::span<const double>>& analytic,
                                   const std::function<double()>& loss, double tolerance, double step) {
  if (params.size() != analytic.size()) throw Error("dimension_mismatch", "gradient_check: block count mismatch");
  GradientCheckResult out;
  std::size_t flat = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != analytic[b].size()) throw Error("dimension_mismatch", "gradient_check: block size mismatch");
    for (std::size_t i = 0; i < params[b].size(); ++i, ++flat) {
      const double original = params[b][i];
      params[b][i] = original + step;
      const double up = loss();
      params[b][i] = original - step;
      const double down = loss();
      params[b][i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[b][i], numeric);
      if (out.checked == 0 || err > out.max_relative_error) {
        out.max_relative_error = err;
        out.worst_index = flat;
      }
      ++out.checked;
    }
  }
  out.passed = out.max_relative_error < tolerance;
  return out;
}

GradientCheckResult gradient_check(DenseNet& net, const OutputLoss& loss, const Eigen::VectorXd& input,
                                   double tolerance) {
  const Eigen::VectorXd output = forward(net, input);
  const LossGrad lg = loss(output);
  const BackwardResult analytic = backward(net, input, lg.grad);
  return gradient_check(net.parameters(), analytic.params.views(),
                        [&] { return loss(forward(net, input)).loss; }, tolerance);
}

nlohmann::json net_to_json(const DenseNet& net) {
  nlohmann::json arch = nlohmann::json::array();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    arch.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"activation", to_string(l.activation)}});
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(l.weight.size() + l.bias.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat.push_back(l.bias(r));
    params.push_back(std::move(flat));
  }
  return {{"arch", std::move(arch)}, {"params", std::move(params)}};
}

DenseNet net_from_json(const nlohmann::json& j) {
  try {
    const auto& arch = j.at("arch");
    const auto& params = j.at("params");
    if (arch.size() != params.size()) throw Error("invalid_checkpoint", "arch/params length mismatch");
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i < arch.size(); ++i) {
      const auto in = arch[i].at("in").get<Eigen::Index>();
      const auto out = arch[i].at("out").get<Eigen::Index>();
      const auto flat = params[i].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != in * out + out) {
        throw Error("invalid_checkpoint", "layer " + std::to_string(i) + " has the wrong parameter count");
      }
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out),
                       parse_activation(arch[i].at("activation").get<std::string>())};
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = flat[k++];
      }
      for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = flat[k++];
      layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_checkpoint", e.what());
  }
}

}  // namespace evicon::learn
