#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "mergeflow/rng.hpp"

namespace mergeflow {

// Dense network with tanh hidden layers and a linear output layer. Weights
// are row-major [out x in]; everything is double precision.
struct Mlp {
  std::vector<int> sizes;  // e.g. {17, 64, 64, 11}
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int in_dim() const { return sizes.front(); }
  int out_dim() const { return sizes.back(); }
};

// Orthogonal-style init: Gaussian then Gram-Schmidt, gain sqrt(2) on hidden
// layers and `final_gain` on the output layer. Biases start at zero.
Mlp make_mlp(const std::vector<int>& sizes, Rng& rng, double final_gain = 1.0);

struct ForwardCache {
  // activations[0] is the input; activations[l] the post-tanh output of
  // hidden layer l; the last entry is the linear output.
  std::vector<std::vector<double>> activations;
};

std::vector<double> forward(const Mlp& net, std::span<const double> input,
                            ForwardCache* cache = nullptr);

struct MlpGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static MlpGrads zeros_like(const Mlp& net);
  void scale(double s);
  bool all_finite() const;
};

// Analytic gradients for the cached forward pass; `output_grad` is
// dLoss/dOutput. Accumulates scaled grads into `into`.
void backward(const Mlp& net, const ForwardCache& cache,
              std::span<const double> output_grad, MlpGrads& into,
              double scale = 1.0);

std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);
double entropy_from_logits(std::span<const double> logits);
int argmax(std::span<const double> values);

// Draws an action index; if `logp` is given it receives the log-probability
// of the sampled action.
int sample_categorical(std::span<const double> logits, Rng& rng,
                       double* logp = nullptr);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  MlpGrads m, v;

  static AdamState init(const Mlp& net, double lr);
};

// Standard Adam with bias correction. Throws on non-finite gradients.
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

// Exact binary round-trip of network and optimizer state.
void save_mlp(std::ostream& os, const Mlp& net);
Mlp load_mlp(std::istream& is);
void save_adam(std::ostream& os, const AdamState& state);
AdamState load_adam(std::istream& is);

std::uint64_t params_hash(const Mlp& net);

}  // namespace mergeflow
