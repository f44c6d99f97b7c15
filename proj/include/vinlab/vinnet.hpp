#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vinlab/gridworld.hpp"
#include "vinlab/nnet.hpp"

namespace vinlab {

enum class LayerId : int { Attention = 0, Reward = 1, Vi = 2, ActionAttention = 3, QValues = 4 };
inline constexpr int kNumLayers = 5;
inline constexpr std::array<std::string_view, kNumLayers> kLayerNames = {
    "attention", "reward", "vi", "action_attention", "q_values"};

inline constexpr int kViFilters = 2;
inline constexpr int kActionFeatures = 4;
inline constexpr int kDefaultViIterations = 20;

// Layer index for a name; throws std::invalid_argument for unknown names.
LayerId layer_id(std::string_view name);
std::string_view layer_name(LayerId id);

//   R = conv1x1_reward(obs)                 8x8x1
//   A = conv1x1_attention(obs)              8x8x1
//   V = vi_module(R, 3x3x2->2, K)           8x8x1
//   M = conv2d(concat(V, A), 3x3x2->4)      8x8x4
//   q = dense(flatten(A * M), 256->4 + 4)
class VinNetwork {
 public:
  VinNetwork() = default;

  int num_channels() const { return num_channels_; }
  int vi_iterations() const { return vi_iterations_; }
  void set_vi_iterations(int k);

  std::span<LayerParams> layers() { return layers_; }
  std::span<const LayerParams> layers() const { return layers_; }
  LayerParams& layer(LayerId id) { return layers_[static_cast<int>(id)]; }
  const LayerParams& layer(LayerId id) const { return layers_[static_cast<int>(id)]; }
  LayerParams& layer(std::string_view name) { return layer(layer_id(name)); }
  const LayerParams& layer(std::string_view name) const { return layer(layer_id(name)); }

  std::size_t parameter_count() const;
  std::size_t trainable_parameter_count() const;

  // Copies parameter values only (freeze flags untouched).
  void copy_values_from(const VinNetwork& other);
  void zero_grad();

  // Throws std::logic_error when a structural invariant is violated.
  void validate() const;

  void save(std::ostream& os) const;
  static VinNetwork load(std::istream& is);
  void save_file(const std::string& path) const;
  static VinNetwork load_file(const std::string& path);

  bool operator==(const VinNetwork&) const = default;

 private:
  friend VinNetwork build_network(int, int, std::uint64_t);
  int num_channels_ = 0;
  int vi_iterations_ = 0;
  std::array<LayerParams, kNumLayers> layers_{};
};

VinNetwork build_network(int num_channels, int vi_iterations = kDefaultViIterations,
                         std::uint64_t init_seed = 0);

using QValues = std::array<double, kNumActions>;

// Intermediate activations of one forward pass, kept for backward. Reusing a
// cache across calls avoids reallocating every activation.
struct ForwardCache {
  Tensor obs;
  Tensor reward;
  Tensor attention;
  ViTape vi;
  Tensor value;
  Tensor value_attention;
  Tensor features;
  Tensor masked;
  QValues q{};
};

QValues forward_q(const VinNetwork& net, const Tensor& obs);
QValues forward_q(const VinNetwork& net, const Tensor& obs, ForwardCache& cache);
QValues forward_q(const VinNetwork& net, const Observation& obs, ForwardCache& cache);

// Backpropagates dL/dq through the pass recorded in `cache`, accumulating
// into the gradients of unfrozen layers. Branches that only lead to frozen
// layers are skipped.
void backward_q(VinNetwork& net, ForwardCache& cache, std::span<const double> dq);

// Redraws one layer from the Glorot-uniform init (bias zero). When an
// optimizer is given its moment accumulators for that layer are reset.
void reinitialize_layer(VinNetwork& net, std::string_view name, SplitMix64& rng, Adam* optimizer = nullptr);

void set_frozen(VinNetwork& net, std::span<const std::string> names, bool frozen);
void set_all_frozen(VinNetwork& net, bool frozen);

struct ParameterReport {
  std::array<std::size_t, kNumLayers> per_layer{};
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t count(LayerId id) const { return per_layer[static_cast<int>(id)]; }
  std::string to_string() const;
};

ParameterReport parameter_report(const VinNetwork& net);

// End-to-end check of every layer's analytic gradient for the scalar loss
// sum_a c_a q_a(obs), with fixed pseudo-random coefficients c.
GradientReport gradient_check(VinNetwork& net, const Tensor& obs, double tolerance, double h = 1e-5,
                              std::uint64_t coefficient_seed = 7);

}  // namespace vinlab
