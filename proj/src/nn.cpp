#include "mergeflow/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mergeflow {

namespace {

void check_shapes(const Mlp& net) {
  if (net.sizes.size() < 2) throw std::invalid_argument("Mlp: need >= 2 sizes");
  if (net.weights.size() != net.sizes.size() - 1 ||
      net.biases.size() != net.weights.size())
    throw std::invalid_argument("Mlp: layer count mismatch");
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const std::size_t rows = net.sizes[l + 1], cols = net.sizes[l];
    if (net.weights[l].size() != rows * cols || net.biases[l].size() != rows)
      throw std::invalid_argument("Mlp: shape mismatch at layer " +
                                  std::to_string(l));
  }
}

// Orthonormalize the rows (out <= in) or columns (out > in) of a Gaussian
// matrix with modified Gram-Schmidt.
std::vector<double> orthogonal_matrix(int rows, int cols, Rng& rng) {
  const bool transpose = rows > cols;
  const int r = transpose ? cols : rows;
  const int c = transpose ? rows : cols;
  std::vector<std::vector<double>> basis(r, std::vector<double>(c));
  for (auto& row : basis)
    for (double& x : row) x = normal(rng);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < c; ++k) dot += basis[i][k] * basis[j][k];
      for (int k = 0; k < c; ++k) basis[i][k] -= dot * basis[j][k];
    }
    double norm = 0.0;
    for (int k = 0; k < c; ++k) norm += basis[i][k] * basis[i][k];
    norm = std::sqrt(std::max(norm, 1e-30));
    for (int k = 0; k < c; ++k) basis[i][k] /= norm;
  }
  std::vector<double> w(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      w[static_cast<std::size_t>(i) * cols + j] =
          transpose ? basis[j][i] : basis[i][j];
  return w;
}

constexpr char kMagic[4] = {'M', 'F', 'N', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return value;
}

void write_vec(std::ostream& os, const std::vector<double>& v) {
  write_pod(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_vec(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return v;
}

}  // namespace

Mlp make_mlp(const std::vector<int>& sizes, Rng& rng, double final_gain) {
  Mlp net;
  net.sizes = sizes;
  const int layers = static_cast<int>(sizes.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const int rows = sizes[l + 1], cols = sizes[l];
    const double gain = (l == layers - 1) ? final_gain : std::sqrt(2.0);
    std::vector<double> w = orthogonal_matrix(rows, cols, rng);
    for (double& x : w) x *= gain;
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(rows, 0.0);
  }
  check_shapes(net);
  return net;
}

std::vector<double> forward(const Mlp& net, std::span<const double> input,
                            ForwardCache* cache) {
  check_shapes(net);
  if (static_cast<int>(input.size()) != net.in_dim())
    throw std::invalid_argument("forward: input size mismatch");
  std::vector<double> act(input.begin(), input.end());
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(act);
  }
  const int layers = net.layer_count();
  for (int l = 0; l < layers; ++l) {
    const int rows = net.sizes[l + 1], cols = net.sizes[l];
    std::vector<double> out(rows);
    for (int i = 0; i < rows; ++i) {
      double sum = net.biases[l][i];
      const double* wrow = &net.weights[l][static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) sum += wrow[j] * act[j];
      out[i] = (l == layers - 1) ? sum : std::tanh(sum);
    }
    act = std::move(out);
    if (cache) cache->activations.push_back(act);
  }
  return act;
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  for (const auto& w : net.weights) g.weights.emplace_back(w.size(), 0.0);
  for (const auto& b : net.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

void MlpGrads::scale(double s) {
  for (auto& w : weights)
    for (double& x : w) x *= s;
  for (auto& b : biases)
    for (double& x : b) x *= s;
}

bool MlpGrads::all_finite() const {
  for (const auto& w : weights)
    for (double x : w)
      if (!std::isfinite(x)) return false;
  for (const auto& b : biases)
    for (double x : b)
      if (!std::isfinite(x)) return false;
  return true;
}

void backward(const Mlp& net, const ForwardCache& cache,
              std::span<const double> output_grad, MlpGrads& into,
              double scale) {
  const int layers = net.layer_count();
  if (static_cast<int>(cache.activations.size()) != layers + 1)
    throw std::invalid_argument("backward: cache does not match network");
  for (int l = 0; l <= layers; ++l)
    if (static_cast<int>(cache.activations[l].size()) != net.sizes[l])
      throw std::invalid_argument("backward: stale cache");
  if (static_cast<int>(output_grad.size()) != net.out_dim())
    throw std::invalid_argument("backward: output_grad size mismatch");

  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (int l = layers - 1; l >= 0; --l) {
    const int rows = net.sizes[l + 1], cols = net.sizes[l];
    const auto& below = cache.activations[l];
    for (int i = 0; i < rows; ++i) {
      into.biases[l][i] += scale * delta[i];
      double* grow = &into.weights[l][static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) grow[j] += scale * delta[i] * below[j];
    }
    if (l == 0) break;
    std::vector<double> prev(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      const double* wrow = &net.weights[l][static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) prev[j] += wrow[j] * delta[i];
    }
    // tanh'(x) = 1 - tanh(x)^2, and activations[l] holds tanh(x).
    for (int j = 0; j < cols; ++j) {
      const double h = cache.activations[l][j];
      prev[j] *= 1.0 - h * h;
    }
    delta = std::move(prev);
  }
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

double entropy_from_logits(std::span<const double> logits) {
  std::vector<double> lp = log_softmax(logits);
  double h = 0.0;
  for (double l : lp) h -= std::exp(l) * l;
  return h;
}

int argmax(std::span<const double> values) {
  return static_cast<int>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

int sample_categorical(std::span<const double> logits, Rng& rng, double* logp) {
  std::vector<double> lp = log_softmax(logits);
  const double u = u01(rng);
  double cum = 0.0;
  int pick = static_cast<int>(logits.size()) - 1;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    cum += std::exp(lp[i]);
    if (u < cum) {
      pick = static_cast<int>(i);
      break;
    }
  }
  if (logp) *logp = lp[pick];
  return pick;
}

AdamState AdamState::init(const Mlp& net, double lr_) {
  AdamState s;
  s.lr = lr_;
  s.m = MlpGrads::zeros_like(net);
  s.v = MlpGrads::zeros_like(net);
  return s;
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
  if (!grads.all_finite())
    throw std::runtime_error("adam_step: non-finite gradient");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  };
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    update(net.weights[l], grads.weights[l], state.m.weights[l],
           state.v.weights[l]);
    update(net.biases[l], grads.biases[l], state.m.biases[l],
           state.v.biases[l]);
  }
}

void save_mlp(std::ostream& os, const Mlp& net) {
  os.write(kMagic, 4);
  write_pod(os, static_cast<std::uint32_t>(net.sizes.size()));
  for (int s : net.sizes) write_pod(os, static_cast<std::int32_t>(s));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    write_vec(os, net.weights[l]);
    write_vec(os, net.biases[l]);
  }
}

Mlp load_mlp(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  Mlp net;
  const auto n = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i)
    net.sizes.push_back(read_pod<std::int32_t>(is));
  for (std::uint32_t l = 0; l + 1 < n; ++l) {
    net.weights.push_back(read_vec(is));
    net.biases.push_back(read_vec(is));
  }
  check_shapes(net);
  return net;
}

void save_adam(std::ostream& os, const AdamState& state) {
  write_pod(os, state.lr);
  write_pod(os, state.beta1);
  write_pod(os, state.beta2);
  write_pod(os, state.eps);
  write_pod(os, static_cast<std::int64_t>(state.step));
  auto dump = [&](const MlpGrads& g) {
    write_pod(os, static_cast<std::uint32_t>(g.weights.size()));
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      write_vec(os, g.weights[l]);
      write_vec(os, g.biases[l]);
    }
  };
  dump(state.m);
  dump(state.v);
}

AdamState load_adam(std::istream& is) {
  AdamState s;
  s.lr = read_pod<double>(is);
  s.beta1 = read_pod<double>(is);
  s.beta2 = read_pod<double>(is);
  s.eps = read_pod<double>(is);
  s.step = read_pod<std::int64_t>(is);
  auto slurp = [&](MlpGrads& g) {
    const auto n = read_pod<std::uint32_t>(is);
    for (std::uint32_t l = 0; l < n; ++l) {
      g.weights.push_back(read_vec(is));
      g.biases.push_back(read_vec(is));
    }
  };
  slurp(s.m);
  slurp(s.v);
  return s;
}

std::uint64_t params_hash(const Mlp& net) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto feed = [&h](const std::vector<double>& v) {
    for (double d : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffULL;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const auto& w : net.weights) feed(w);
  for (const auto& b : net.biases) feed(b);
  return h;
}

}  // namespace mergeflow
