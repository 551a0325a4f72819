#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace evicon::learn {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::identity;
};

/// Stack of affine layers, each followed by its activation.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// Xavier-uniform weights (each layer seeded from `seed` and its index),
  /// zero biases. `dims` has one more entry than `activations`.
  static DenseNet xavier(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
                         std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  /// Spans over every weight and bias block, in layer order (weight, bias).
  std::vector<std::span<double>> parameters();

 private:
  std::vector<DenseLayer> layers_;
};

/// Inputs and pre-activations recorded by a batched forward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;          // per layer, in x batch
  std::vector<Eigen::MatrixXd> pre_activations; // per layer, out x batch
};

struct LayerGradient {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct NetGradient {
  std::vector<LayerGradient> layers;

  static NetGradient zeros_like(const DenseNet& net);
  NetGradient& operator+=(const NetGradient& other);
  NetGradient& operator*=(double s);
  std::vector<std::span<const double>> views() const;
};

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input);

/// Columns of `inputs` are samples.
Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs, ForwardCache* cache = nullptr);

struct BackwardResult {
  NetGradient params;
  Eigen::VectorXd input_grad;
};

BackwardResult backward(const DenseNet& net, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream);

/// Gradients summed over the batch. `input_grad` (if given) receives
/// dLoss/dInput per column.
NetGradient backward_batch(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                           Eigen::MatrixXd* input_grad = nullptr);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// -log softmax(logits)[target] with gradient p - onehot(target).
LossGrad softmax_cross_entropy(const Eigen::VectorXd& logits, std::size_t target);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  OptimizerState() = default;
  explicit OptimizerState(AdamConfig c) : config(c) {}
};

/// One Adam update. Moment buffers are allocated on first use. Throws
/// evicon::Error("non_finite_gradient") before touching anything if a
/// gradient is NaN/inf.
void optimizer_step(OptimizerState& state, const std::vector<std::span<double>>& params,
                    const std::vector<std::span<const double>>& grads);

inline constexpr double kFiniteDifferenceStep = 1e-4;

struct GradientCheckResult {
  bool passed = false;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;  // flat index over all parameter blocks
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, 1e-8) with central differences of `loss`.
double relative_error(double analytic, double numeric);

/// Compares `analytic` against central differences of `loss`, perturbing
/// `params` in place (restored afterwards).
GradientCheckResult gradient_check(const std::vector<std::span<double>>& params,
                                   const std::vector<std::span<const double>>& analytic,
                                   const std::function<double()>& loss, double tolerance,
                                   double step = kFiniteDifferenceStep);

/// Loss of the network output; returns the loss and dLoss/dOutput.
using OutputLoss = std::function<LossGrad(const Eigen::VectorXd& output)>;

GradientCheckResult gradient_check(DenseNet& net, const OutputLoss& loss, const Eigen::VectorXd& input,
                                   double tolerance);

inline constexpr int kCheckpointVersion = 1;

/// {"arch": [{"in","out","activation"}...], "params": [[W row-major..., b...]...]}
nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& j);

}  // namespace evicon::learn
