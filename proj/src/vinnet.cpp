#include "vinlab/vinnet.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vinlab {

LayerId layer_id(std::string_view name) {
  for (int i = 0; i < kNumLayers; ++i) {
    if (kLayerNames[i] == name) return static_cast<LayerId>(i);
  }
  throw std::invalid_argument("unknown layer name: " + std::string(name));
}

std::string_view layer_name(LayerId id) { return kLayerNames[static_cast<int>(id)]; }

VinNetwork build_network(int num_channels, int vi_iterations, std::uint64_t init_seed) {
  if (num_channels != kSimplifiedChannels && num_channels != kMaxChannels) {
    throw std::invalid_argument("build_network: channels must be 5 or 8");
  }
  if (vi_iterations < 1) throw std::invalid_argument("build_network: vi_iterations must be >= 1");

  VinNetwork net;
  net.num_channels_ = num_channels;
  net.vi_iterations_ = vi_iterations;
  net.layers_[0] = LayerParams::conv1x1("attention", num_channels, 1);
  net.layers_[1] = LayerParams::conv1x1("reward", num_channels, 1);
  net.layers_[2] = LayerParams::conv2d("vi", 3, 2, kViFilters);
  net.layers_[3] = LayerParams::conv2d("action_attention", 3, 2, kActionFeatures);
  net.layers_[4] = LayerParams::dense("q_values", kNumCells * kActionFeatures, kNumActions);

  SplitMix64 rng(init_seed);
  for (auto& l : net.layers_) l.initialize(rng);
  net.validate();
  return net;
}

void VinNetwork::set_vi_iterations(int k) {
  if (k < 1) throw std::invalid_argument("vi_iterations must be >= 1");
  vi_iterations_ = k;
}

std::size_t VinNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

std::size_t VinNetwork::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    if (!l.frozen) n += l.parameter_count();
  }
  return n;
}

void VinNetwork::copy_values_from(const VinNetwork& other) {
  if (other.num_channels_ != num_channels_) throw std::invalid_argument("copy_values_from: channel mismatch");
  for (int i = 0; i < kNumLayers; ++i) {
    layers_[i].weights = other.layers_[i].weights;
    layers_[i].bias = other.layers_[i].bias;
  }
}

void VinNetwork::zero_grad() {
  for (auto& l : layers_) l.zero_grad();
}

void VinNetwork::validate() const {
  const int C = num_channels_;
  if (C != kSimplifiedChannels && C != kMaxChannels) throw std::logic_error("VinNetwork: channels must be 5 or 8");
  if (vi_iterations_ < 1) throw std::logic_error("VinNetwork: vi_iterations must be >= 1");
  const std::vector<int> expected[kNumLayers] = {
      {C, 1}, {C, 1}, {3, 3, 2, kViFilters}, {3, 3, 2, kActionFeatures}, {kNumCells * kActionFeatures, kNumActions}};
  for (int i = 0; i < kNumLayers; ++i) {
    if (layers_[i].name != kLayerNames[i]) throw std::logic_error("VinNetwork: layer order/name mismatch");
    if (layers_[i].shape != expected[i]) throw std::logic_error("VinNetwork: bad shape for layer " + layers_[i].name);
  }
  const auto rep = parameter_report(*this);
  const auto att = rep.count(LayerId::Attention);
  const auto rew = rep.count(LayerId::Reward);
  const auto q = rep.count(LayerId::QValues);
  if (att != static_cast<std::size_t>(C) || rew != static_cast<std::size_t>(C)) {
    throw std::logic_error("VinNetwork: attention/reward must have one weight per channel");
  }
  if (q <= 1000 || q * 100 <= rep.total * 85) throw std::logic_error("VinNetwork: q_values must dominate the count");
  if (rep.total < 1050 || rep.total > 1250) throw std::logic_error("VinNetwork: total parameter count out of range");
  if (rep.count(LayerId::ActionAttention) <= std::max(att, rew)) {
    throw std::logic_error("VinNetwork: action_attention must outsize attention and reward");
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

QValues forward_q(const VinNetwork& net, const Tensor& obs, ForwardCache& cache) {
  if (obs.shape() != Shape3{kGridSize, kGridSize, net.num_channels()}) {
    throw std::invalid_argument("forward_q: observation shape mismatch");
  }
  if (&cache.obs != &obs) {
    if (cache.obs.shape() != obs.shape()) cache.obs.reshape(obs.shape());
    std::copy(obs.values().begin(), obs.values().end(), cache.obs.values().begin());
  }
  conv1x1_forward(cache.obs, net.layer(LayerId::Reward), cache.reward);
  conv1x1_forward(cache.obs, net.layer(LayerId::Attention), cache.attention);
  vi_module_forward(cache.reward, net.layer(LayerId::Vi), net.vi_iterations(), cache.vi, cache.value);
  concat_channels_forward(cache.value, cache.attention, cache.value_attention);
  conv2d_forward(cache.value_attention, net.layer(LayerId::ActionAttention), cache.features);
  pointwise_mul_forward(cache.attention, cache.features, cache.masked);
  dense_forward(cache.masked, net.layer(LayerId::QValues), cache.q);
  return cache.q;
}

QValues forward_q(const VinNetwork& net, const Observation& obs, ForwardCache& cache) {
  obs.write_tensor(cache.obs);
  return forward_q(net, cache.obs, cache);
}

QValues forward_q(const VinNetwork& net, const Tensor& obs) {
  thread_local ForwardCache cache;
  return forward_q(net, obs, cache);
}

void backward_q(VinNetwork& net, ForwardCache& cache, std::span<const double> dq) {
  auto trainable = [&](LayerId id) { return !net.layer(id).frozen; };
  const bool need_attention = trainable(LayerId::Attention);
  const bool need_vi = trainable(LayerId::Vi) || trainable(LayerId::Reward);
  const bool need_features = need_attention || need_vi || trainable(LayerId::ActionAttention);

  cache.masked.zero_grad();
  dense_backward(cache.masked, net.layer(LayerId::QValues), dq);
  if (!need_features) return;

  cache.attention.zero_grad();
  cache.features.zero_grad();
  pointwise_mul_backward(cache.attention, cache.features, cache.masked);

  cache.value_attention.zero_grad();
  conv2d_backward(cache.value_attention, net.layer(LayerId::ActionAttention), cache.features);
  cache.value.zero_grad();
  concat_channels_backward(cache.value, cache.attention, cache.value_attention);

  if (need_vi) {
    cache.reward.zero_grad();
    vi_module_backward(cache.reward, net.layer(LayerId::Vi), cache.vi, cache.value);
    if (trainable(LayerId::Reward)) conv1x1_backward(cache.obs, net.layer(LayerId::Reward), cache.reward);
  }
  if (need_attention) conv1x1_backward(cache.obs, net.layer(LayerId::Attention), cache.attention);
}

// ---------------------------------------------------------------------------
// Layer controls

void reinitialize_layer(VinNetwork& net, std::string_view name, SplitMix64& rng, Adam* optimizer) {
  const LayerId id = layer_id(name);
  net.layer(id).initialize(rng);
  if (optimizer) optimizer->reset_layer(static_cast<std::size_t>(id));
}

void set_frozen(VinNetwork& net, std::span<const std::string> names, bool frozen) {
  for (const auto& n : names) net.layer(n).frozen = frozen;
}

void set_all_frozen(VinNetwork& net, bool frozen) {
  for (auto& l : net.layers()) l.frozen = frozen;
}

ParameterReport parameter_report(const VinNetwork& net) {
  ParameterReport r;
  for (int i = 0; i < kNumLayers; ++i) {
    const auto& l = net.layers()[i];
    r.per_layer[i] = l.parameter_count();
    r.total += r.per_layer[i];
    if (!l.frozen) r.trainable += r.per_layer[i];
  }
  return r;
}

std::string ParameterReport::to_string() const {
  std::ostringstream os;
  for (int i = 0; i < kNumLayers; ++i) os << kLayerNames[i] << ' ' << per_layer[i] << '\n';
  os << "total " << total << '\n' << "trainable " << trainable << '\n';
  return os.str();
}

GradientReport gradient_check(VinNetwork& net, const Tensor& obs, double tolerance, double h,
                              std::uint64_t coefficient_seed) {
  SplitMix64 rng(coefficient_seed);
  QValues coeff{};
  for (auto& c : coeff) c = rng.uniform(-1.0, 1.0);
  ForwardCache cache;
  auto loss = [&] {
    const auto q = forward_q(net, obs, cache);
    double s = 0.0;
    for (int a = 0; a < kNumActions; ++a) s += coeff[a] * q[a];
    return s;
  };
  auto backprop = [&] {
    forward_q(net, obs, cache);
    backward_q(net, cache, coeff);
  };
  return gradient_check(net.layers(), loss, backprop, tolerance, h);
}

// ---------------------------------------------------------------------------
// Parameter files

void VinNetwork::save(std::ostream& os) const {
  os << "vinnet channels " << num_channels_ << " iterations " << vi_iterations_ << " layers " << kNumLayers << '\n';
  write_layers(os, layers_);
}

VinNetwork VinNetwork::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("parameter file: empty");
  std::istringstream hs(line);
  std::string kw, kw_c, kw_k, kw_l;
  int C = 0, K = 0, L = 0;
  hs >> kw >> kw_c >> C >> kw_k >> K >> kw_l >> L;
  if (hs.fail() || kw != "vinnet" || kw_c != "channels" || kw_k != "iterations" || kw_l != "layers" ||
      L != kNumLayers) {
    throw std::invalid_argument("parameter file: bad header: " + line);
  }
  VinNetwork net;
  net.num_channels_ = C;
  net.vi_iterations_ = K;
  auto layers = read_layers(is, kNumLayers);
  for (int i = 0; i < kNumLayers; ++i) net.layers_[i] = std::move(layers[i]);
  net.validate();
  return net;
}

void VinNetwork::save_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  save(os);
}

VinNetwork VinNetwork::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return load(is);
}

}  // namespace vinlab
