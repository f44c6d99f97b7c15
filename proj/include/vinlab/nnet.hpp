#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vinlab/random.hpp"
#include "vinlab/tensor.hpp"

namespace vinlab {

enum class LayerKind { Conv1x1, Conv2d, Dense };

// Weights plus optional bias of one named layer, with gradient buffers.
//   Conv1x1: shape {Cin, Cout}
//   Conv2d:  shape {k, k, Cin, Cout}
//   Dense:   shape {N, Out}, bias Out
struct LayerParams {
  std::string name;
  LayerKind kind = LayerKind::Dense;
  std::vector<int> shape;
  std::vector<double> weights;
  std::vector<double> weight_grad;
  std::vector<double> bias;
  std::vector<double> bias_grad;
  bool frozen = false;

  static LayerParams conv1x1(std::string name, int in_channels, int out_channels);
  static LayerParams conv2d(std::string name, int kernel, int in_channels, int out_channels);
  static LayerParams dense(std::string name, int inputs, int outputs);

  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  int fan_in() const;
  int fan_out() const;
  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
  double init_bound() const;
  void initialize(SplitMix64& rng);
  void zero_grad();
  bool same_values(const LayerParams& other) const {
    return weights == other.weights && bias == other.bias;
  }

  bool operator==(const LayerParams&) const = default;
};

// ---------------------------------------------------------------------------
// Kernels. Forward passes write into `out` (reshaped if needed). Backward
// passes read the output gradient from `out.grads()`, accumulate into the input
// gradient buffers and, unless the layer is frozen, into the parameter
// gradients.

void conv1x1_forward(const Tensor& in, const LayerParams& p, Tensor& out);
void conv1x1_backward(Tensor& in, LayerParams& p, const Tensor& out);

// Same-size zero-padded cross-correlation, stride 1, odd kernel, no bias.
void conv2d_forward(const Tensor& in, const LayerParams& p, Tensor& out);
void conv2d_backward(Tensor& in, LayerParams& p, const Tensor& out);

// Per-cell max over channels. Backward routes to the lowest-index argmax.
void channel_max_forward(const Tensor& in, Tensor& out);
void channel_max_backward(Tensor& in, const Tensor& out);

void concat_channels_forward(const Tensor& a, const Tensor& b, Tensor& out);
void concat_channels_backward(Tensor& a, Tensor& b, const Tensor& out);

// a is H x W x 1, broadcast across the channels of b.
void pointwise_mul_forward(const Tensor& a, const Tensor& b, Tensor& out);
void pointwise_mul_backward(Tensor& a, Tensor& b, const Tensor& out);

// Affine map of the flattened input tensor.
void dense_forward(const Tensor& in, const LayerParams& p, std::span<double> out);
void dense_backward(Tensor& in, LayerParams& p, std::span<const double> dout);

// Convenience wrappers that allocate their result.
Tensor conv1x1(const Tensor& in, const LayerParams& p);
Tensor conv2d(const Tensor& in, const LayerParams& p);
Tensor channel_max(const Tensor& in);
Tensor pointwise_mul(const Tensor& a, const Tensor& b);
std::vector<double> dense(const Tensor& in, const LayerParams& p);

// Value-iteration block: V_0 = 0, then K times
//   Q = conv2d(concat(reward_map, V), params);  V = channel_max(Q).
// The tape keeps every V_k (zero-padded by k/2 on each side) and the argmax
// routing so backward can unroll all K iterations.
struct ViTape {
  int height = 0;
  int width = 0;
  int pad = 0;
  int filters = 0;
  int iterations = 0;
  std::vector<double> values;           // (K + 1) padded planes
  std::vector<std::uint8_t> argmax;     // K * H * W
  std::vector<double> reward_response;  // F * H * W (filter-major), reward half of the conv
  std::vector<double> padded_reward;    // one padded plane

  std::size_t plane() const {
    return static_cast<std::size_t>(height + 2 * pad) * static_cast<std::size_t>(width + 2 * pad);
  }
  double value(int k, int y, int x) const {
    return values[static_cast<std::size_t>(k) * plane() +
                  static_cast<std::size_t>(y + pad) * (width + 2 * pad) + static_cast<std::size_t>(x + pad)];
  }
};

void vi_module_forward(const Tensor& reward_map, const LayerParams& p, int iterations, ViTape& tape,
                       Tensor& out);
// `out.grads()` holds dL/dV_K. Accumulates into reward_map's grad and p's grads.
void vi_module_backward(Tensor& reward_map, LayerParams& p, const ViTape& tape, const Tensor& out);
Tensor vi_module(const Tensor& reward_map, const LayerParams& p, int iterations);

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer over a fixed list of layers.

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, std::span<const LayerParams> layers);

  // One update of every unfrozen layer, then all gradients are cleared.
  void step(std::span<LayerParams> layers);
  void reset_layer(std::size_t layer_index);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  long step_count() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m_w, v_w, m_b, v_b;
  };
  AdamConfig config_{};
  std::vector<Moments> moments_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Central-difference gradient checking.

struct LayerGradientReport {
  std::string name;
  bool frozen = false;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  // Largest analytic gradient magnitude; zero for frozen layers, whose
  // gradients are never populated.
  double max_analytic = 0.0;
};

struct GradientReport {
  std::vector<LayerGradientReport> layers;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

double relative_error(double analytic, double numeric);

// `loss` runs a forward pass only; `backprop` runs forward + backward and
// leaves gradients in the layers' buffers (which are zeroed beforehand).
GradientReport gradient_check(std::span<LayerParams> layers, const std::function<double()>& loss,
                              const std::function<void()>& backprop, double tolerance, double h = 1e-5);

// ---------------------------------------------------------------------------
// Parameter files: per layer a header line
//   layer <name> shape <d0>x<d1>... bias <n> frozen <0|1>
// followed by one scalar per line (weights, then bias) in shortest
// round-trip decimal form.

void write_layers(std::ostream& os, std::span<const LayerParams> layers);
std::vector<LayerParams> read_layers(std::istream& is, std::size_t count);
std::string format_double(double v);

}  // namespace vinlab
