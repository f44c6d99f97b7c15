#include "vinlab/nnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace vinlab {

namespace {

void ensure_shape(Tensor& t, Shape3 shape) {
  if (t.shape() != shape) t.reshape(shape);
}

constexpr int kMaxConv1x1In = 16;

using Vec4 = double __attribute__((vector_size(32)));

inline Vec4 load4(const double* p) {
  Vec4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, Vec4 v) { std::memcpy(p, &v, sizeof v); }

inline double hsum4(Vec4 v) { return (v[0] + v[1]) + (v[2] + v[3]); }

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// LayerParams

LayerParams LayerParams::conv1x1(std::string name, int in_channels, int out_channels) {
  LayerParams p;
  p.name = std::move(name);
  p.kind = LayerKind::Conv1x1;
  p.shape = {in_channels, out_channels};
  p.weights.assign(static_cast<std::size_t>(in_channels) * out_channels, 0.0);
  p.weight_grad.assign(p.weights.size(), 0.0);
  return p;
}

LayerParams LayerParams::conv2d(std::string name, int kernel, int in_channels, int out_channels) {
  require(kernel % 2 == 1, "conv2d: kernel size must be odd");
  LayerParams p;
  p.name = std::move(name);
  p.kind = LayerKind::Conv2d;
  p.shape = {kernel, kernel, in_channels, out_channels};
  p.weights.assign(static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels, 0.0);
  p.weight_grad.assign(p.weights.size(), 0.0);
  return p;
}

LayerParams LayerParams::dense(std::string name, int inputs, int outputs) {
  LayerParams p;
  p.name = std::move(name);
  p.kind = LayerKind::Dense;
  p.shape = {inputs, outputs};
  p.weights.assign(static_cast<std::size_t>(inputs) * outputs, 0.0);
  p.weight_grad.assign(p.weights.size(), 0.0);
  p.bias.assign(static_cast<std::size_t>(outputs), 0.0);
  p.bias_grad.assign(p.bias.size(), 0.0);
  return p;
}

int LayerParams::fan_in() const {
  switch (kind) {
    case LayerKind::Conv2d: return shape[0] * shape[1] * shape[2];
    case LayerKind::Conv1x1:
    case LayerKind::Dense: return shape[0];
  }
  return 0;
}

int LayerParams::fan_out() const {
  switch (kind) {
    case LayerKind::Conv2d: return shape[0] * shape[1] * shape[3];
    case LayerKind::Conv1x1:
    case LayerKind::Dense: return shape[1];
  }
  return 0;
}

double LayerParams::init_bound() const { return std::sqrt(6.0 / (fan_in() + fan_out())); }

void LayerParams::initialize(SplitMix64& rng) {
  const double bound = init_bound();
  for (auto& w : weights) w = rng.uniform(-bound, bound);
  std::fill(bias.begin(), bias.end(), 0.0);
  zero_grad();
}

void LayerParams::zero_grad() {
  std::fill(weight_grad.begin(), weight_grad.end(), 0.0);
  std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// conv1x1

void conv1x1_forward(const Tensor& in, const LayerParams& p, Tensor& out) {
  const int cin = p.shape[0];
  const int cout = p.shape[1];
  require(p.kind == LayerKind::Conv1x1 && in.channels() == cin, "conv1x1: shape mismatch");
  ensure_shape(out, {in.height(), in.width(), cout});
  const auto x = in.values();
  auto y = out.values();
  const double* w = p.weights.data();
  const std::size_t cells = static_cast<std::size_t>(in.height()) * in.width();
  if (cout == 1) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double* xi = &x[i * cin];
      double acc = 0.0;
      for (int ci = 0; ci < cin; ++ci) acc += xi[ci] * w[ci];
      y[i] = acc;
    }
    return;
  }
  for (std::size_t i = 0; i < cells; ++i) {
    const double* xi = &x[i * cin];
    double* yi = &y[i * cout];
    for (int co = 0; co < cout; ++co) yi[co] = 0.0;
    for (int ci = 0; ci < cin; ++ci) {
      const double v = xi[ci];
      const double* wr = w + static_cast<std::size_t>(ci) * cout;
      for (int co = 0; co < cout; ++co) yi[co] += v * wr[co];
    }
  }
}

void conv1x1_backward(Tensor& in, LayerParams& p, const Tensor& out) {
  const int cin = p.shape[0];
  const int cout = p.shape[1];
  const auto x = in.values();
  auto dx = in.grads();
  const auto dy = out.grads();
  const std::size_t cells = static_cast<std::size_t>(in.height()) * in.width();
  const bool train = !p.frozen;
  if (cout == 1) {
    const double* w = p.weights.data();
    double g[kMaxConv1x1In] = {};
    const bool small = cin <= kMaxConv1x1In;
    for (std::size_t i = 0; i < cells; ++i) {
      const double d = dy[i];
      for (int ci = 0; ci < cin; ++ci) {
        dx[i * cin + ci] += w[ci] * d;
        if (train) {
          if (small) g[ci] += x[i * cin + ci] * d;
          else p.weight_grad[ci] += x[i * cin + ci] * d;
        }
      }
    }
    if (train && small) {
      for (int ci = 0; ci < cin; ++ci) p.weight_grad[ci] += g[ci];
    }
    return;
  }
  for (std::size_t i = 0; i < cells; ++i) {
    const double* dyi = &dy[i * cout];
    for (int ci = 0; ci < cin; ++ci) {
      const double* wr = &p.weights[static_cast<std::size_t>(ci) * cout];
      double acc = 0.0;
      for (int co = 0; co < cout; ++co) acc += wr[co] * dyi[co];
      dx[i * cin + ci] += acc;
      if (train) {
        const double v = x[i * cin + ci];
        double* gr = &p.weight_grad[static_cast<std::size_t>(ci) * cout];
        for (int co = 0; co < cout; ++co) gr[co] += v * dyi[co];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

// Copies an H x W x C tensor into a zero-bordered (H + 2r) x (W + 2r) x C buffer.
void pad_into(std::span<const double> x, int H, int W, int C, int r, std::vector<double>& out) {
  const int Wp = W + 2 * r;
  out.assign(static_cast<std::size_t>(H + 2 * r) * Wp * C, 0.0);
  for (int y = 0; y < H; ++y) {
    std::copy_n(&x[static_cast<std::size_t>(y) * W * C], static_cast<std::size_t>(W) * C,
                &out[(static_cast<std::size_t>(y + r) * Wp + r) * C]);
  }
}

template <int KS, int CI, int CO>
void conv2d_forward_impl(const Tensor& in, const LayerParams& p, Tensor& out) {
  const int k = KS > 0 ? KS : p.shape[0];
  const int cin = CI > 0 ? CI : p.shape[2];
  const int cout = CO > 0 ? CO : p.shape[3];
  const int H = in.height();
  const int W = in.width();
  const int r = k / 2;
  const int Wp = W + 2 * r;
  thread_local std::vector<double> xp;
  pad_into(in.values(), H, W, cin, r, xp);
  out.fill(0.0);
  auto y = out.values();
  const double* w = p.weights.data();
  for (int oy = 0; oy < H; ++oy) {
    double* yrow = &y[static_cast<std::size_t>(oy) * W * cout];
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* xrow = &xp[(static_cast<std::size_t>(oy + ky) * Wp + kx) * cin];
        const double* wt = w + static_cast<std::size_t>(ky * k + kx) * cin * cout;
        for (int ox = 0; ox < W; ++ox) {
          const double* xi = xrow + static_cast<std::size_t>(ox) * cin;
          double* yo = yrow + static_cast<std::size_t>(ox) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double v = xi[ci];
            const double* wr = wt + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) yo[co] += v * wr[co];
          }
        }
      }
    }
  }
}

template <int KS, int CI, int CO>
void conv2d_backward_impl(Tensor& in, LayerParams& p, const Tensor& out) {
  const int k = KS > 0 ? KS : p.shape[0];
  const int cin = CI > 0 ? CI : p.shape[2];
  const int cout = CO > 0 ? CO : p.shape[3];
  const int H = in.height();
  const int W = in.width();
  const int r = k / 2;
  const int Wp = W + 2 * r;
  thread_local std::vector<double> xp, dxp;
  pad_into(in.values(), H, W, cin, r, xp);
  dxp.assign(xp.size(), 0.0);
  const auto dy = out.grads();
  const double* w = p.weights.data();
  double* gw = p.weight_grad.data();
  const bool train = !p.frozen;
  for (int oy = 0; oy < H; ++oy) {
    const double* grow = &dy[static_cast<std::size_t>(oy) * W * cout];
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t base = (static_cast<std::size_t>(oy + ky) * Wp + kx) * cin;
        const std::size_t wbase = static_cast<std::size_t>(ky * k + kx) * cin * cout;
        for (int ox = 0; ox < W; ++ox) {
          const double* go = grow + static_cast<std::size_t>(ox) * cout;
          const std::size_t ib = base + static_cast<std::size_t>(ox) * cin;
          for (int ci = 0; ci < cin; ++ci) {
            const double* wr = w + wbase + static_cast<std::size_t>(ci) * cout;
            double acc = 0.0;
            for (int co = 0; co < cout; ++co) acc += wr[co] * go[co];
            dxp[ib + ci] += acc;
            if (train) {
              const double v = xp[ib + ci];
              double* gr = gw + wbase + static_cast<std::size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) gr[co] += v * go[co];
            }
          }
        }
      }
    }
  }
  auto dx = in.grads();
  for (int yy = 0; yy < H; ++yy) {
    const double* src = &dxp[(static_cast<std::size_t>(yy + r) * Wp + r) * cin];
    double* dst = &dx[static_cast<std::size_t>(yy) * W * cin];
    for (std::size_t i = 0; i < static_cast<std::size_t>(W) * cin; ++i) dst[i] += src[i];
  }
}

// 3x3, two inputs, four outputs: one 4-lane vector per pixel.
void conv2d_forward_3x3x2x4(const Tensor& in, const LayerParams& p, Tensor& out) {
  const int H = in.height();
  const int W = in.width();
  const int Wp = W + 2;
  thread_local std::vector<double> xp;
  pad_into(in.values(), H, W, 2, 1, xp);
  Vec4 w[18];
  for (int j = 0; j < 18; ++j) w[j] = load4(&p.weights[j * 4]);
  auto y = out.values();
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      Vec4 acc = {};
      for (int t = 0; t < 9; ++t) {
        const double* xi = &xp[(static_cast<std::size_t>(oy + t / 3) * Wp + ox + t % 3) * 2];
        acc += xi[0] * w[t * 2] + xi[1] * w[t * 2 + 1];
      }
      store4(&y[(static_cast<std::size_t>(oy) * W + ox) * 4], acc);
    }
  }
}

void conv2d_backward_3x3x2x4(Tensor& in, LayerParams& p, const Tensor& out) {
  const int H = in.height();
  const int W = in.width();
  const int Wp = W + 2;
  thread_local std::vector<double> xp, gp;
  pad_into(in.values(), H, W, 2, 1, xp);
  pad_into(out.grads(), H, W, 4, 1, gp);
  Vec4 w[18];
  for (int j = 0; j < 18; ++j) w[j] = load4(&p.weights[j * 4]);
  auto dx = in.grads();
  // input gradient by gathering the output gradient through the flipped kernel
  for (int iy = 0; iy < H; ++iy) {
    for (int ix = 0; ix < W; ++ix) {
      Vec4 a0 = {}, a1 = {};
      for (int t = 0; t < 9; ++t) {
        const Vec4 g = load4(&gp[(static_cast<std::size_t>(iy + 2 - t / 3) * Wp + ix + 2 - t % 3) * 4]);
        a0 += w[t * 2] * g;
        a1 += w[t * 2 + 1] * g;
      }
      dx[(static_cast<std::size_t>(iy) * W + ix) * 2] += hsum4(a0);
      dx[(static_cast<std::size_t>(iy) * W + ix) * 2 + 1] += hsum4(a1);
    }
  }
  if (p.frozen) return;
  Vec4 gw[18] = {};
  const auto dy = out.grads();
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      const Vec4 g = load4(&dy[(static_cast<std::size_t>(oy) * W + ox) * 4]);
      for (int t = 0; t < 9; ++t) {
        const double* xi = &xp[(static_cast<std::size_t>(oy + t / 3) * Wp + ox + t % 3) * 2];
        gw[t * 2] += xi[0] * g;
        gw[t * 2 + 1] += xi[1] * g;
      }
    }
  }
  for (int j = 0; j < 18; ++j) store4(&p.weight_grad[j * 4], load4(&p.weight_grad[j * 4]) + gw[j]);
}

}  // namespace

void conv2d_forward(const Tensor& in, const LayerParams& p, Tensor& out) {
  require(p.kind == LayerKind::Conv2d, "conv2d: layer is not a 2-D convolution");
  require(in.channels() == p.shape[2], "conv2d: input channel mismatch");
  ensure_shape(out, {in.height(), in.width(), p.shape[3]});
  if (p.shape[0] == 3 && p.shape[2] == 2 && p.shape[3] == 4) {
    conv2d_forward_3x3x2x4(in, p, out);
  } else {
    conv2d_forward_impl<0, 0, 0>(in, p, out);
  }
}

void conv2d_backward(Tensor& in, LayerParams& p, const Tensor& out) {
  if (p.shape[0] == 3 && p.shape[2] == 2 && p.shape[3] == 4) {
    conv2d_backward_3x3x2x4(in, p, out);
  } else {
    conv2d_backward_impl<0, 0, 0>(in, p, out);
  }
}

// ---------------------------------------------------------------------------
// channel_max

void channel_max_forward(const Tensor& in, Tensor& out) {
  const int C = in.channels();
  require(C >= 1, "channel_max: needs at least one channel");
  ensure_shape(out, {in.height(), in.width(), 1});
  const auto x = in.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* xi = &x[i * C];
    double best = xi[0];
    for (int c = 1; c < C; ++c) best = std::max(best, xi[c]);
    y[i] = best;
  }
}

void channel_max_backward(Tensor& in, const Tensor& out) {
  const int C = in.channels();
  const auto x = in.values();
  auto dx = in.grads();
  const auto dy = out.grads();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double* xi = &x[i * C];
    int arg = 0;
    for (int c = 1; c < C; ++c) {
      if (xi[c] > xi[arg]) arg = c;
    }
    dx[i * C + arg] += dy[i];
  }
}

// ---------------------------------------------------------------------------
// concat / pointwise_mul

void concat_channels_forward(const Tensor& a, const Tensor& b, Tensor& out) {
  require(a.height() == b.height() && a.width() == b.width(), "concat: spatial shape mismatch");
  const int ca = a.channels();
  const int cb = b.channels();
  ensure_shape(out, {a.height(), a.width(), ca + cb});
  const auto xa = a.values();
  const auto xb = b.values();
  auto y = out.values();
  const std::size_t cells = static_cast<std::size_t>(a.height()) * a.width();
  for (std::size_t i = 0; i < cells; ++i) {
    std::copy_n(&xa[i * ca], ca, &y[i * (ca + cb)]);
    std::copy_n(&xb[i * cb], cb, &y[i * (ca + cb) + ca]);
  }
}

void concat_channels_backward(Tensor& a, Tensor& b, const Tensor& out) {
  const int ca = a.channels();
  const int cb = b.channels();
  auto da = a.grads();
  auto db = b.grads();
  const auto dy = out.grads();
  const std::size_t cells = static_cast<std::size_t>(a.height()) * a.width();
  for (std::size_t i = 0; i < cells; ++i) {
    for (int c = 0; c < ca; ++c) da[i * ca + c] += dy[i * (ca + cb) + c];
    for (int c = 0; c < cb; ++c) db[i * cb + c] += dy[i * (ca + cb) + ca + c];
  }
}

void pointwise_mul_forward(const Tensor& a, const Tensor& b, Tensor& out) {
  require(a.channels() == 1 && a.height() == b.height() && a.width() == b.width(),
          "pointwise_mul: shape mismatch");
  const int F = b.channels();
  ensure_shape(out, b.shape());
  const auto xa = a.values();
  const auto xb = b.values();
  auto y = out.values();
  for (std::size_t i = 0; i < xa.size(); ++i) {
    for (int f = 0; f < F; ++f) y[i * F + f] = xa[i] * xb[i * F + f];
  }
}

void pointwise_mul_backward(Tensor& a, Tensor& b, const Tensor& out) {
  const int F = b.channels();
  const auto xa = a.values();
  const auto xb = b.values();
  auto da = a.grads();
  auto db = b.grads();
  const auto dy = out.grads();
  for (std::size_t i = 0; i < xa.size(); ++i) {
    double acc = 0.0;
    for (int f = 0; f < F; ++f) {
      acc += dy[i * F + f] * xb[i * F + f];
      db[i * F + f] += dy[i * F + f] * xa[i];
    }
    da[i] += acc;
  }
}

// ---------------------------------------------------------------------------
// dense

void dense_forward(const Tensor& in, const LayerParams& p, std::span<double> out) {
  const int n = p.shape[0];
  const int m = p.shape[1];
  require(p.kind == LayerKind::Dense && in.size() == static_cast<std::size_t>(n) &&
              out.size() == static_cast<std::size_t>(m),
          "dense: shape mismatch");
  const auto x = in.values();
  for (int o = 0; o < m; ++o) out[o] = p.bias[o];
  if (m == 4) {
    Vec4 acc = load4(p.bias.data());
    for (int i = 0; i < n; ++i) acc += x[i] * load4(&p.weights[static_cast<std::size_t>(i) * 4]);
    store4(out.data(), acc);
    return;
  }
  for (int i = 0; i < n; ++i) {
    const double v = x[i];
    const double* wr = &p.weights[static_cast<std::size_t>(i) * m];
    for (int o = 0; o < m; ++o) out[o] += v * wr[o];
  }
}

void dense_backward(Tensor& in, LayerParams& p, std::span<const double> dout) {
  const int n = p.shape[0];
  const int m = p.shape[1];
  const auto x = in.values();
  auto dx = in.grads();
  if (m == 4) {
    const Vec4 d = load4(dout.data());
    for (int i = 0; i < n; ++i) dx[i] += hsum4(load4(&p.weights[static_cast<std::size_t>(i) * 4]) * d);
    if (p.frozen) return;
    store4(p.bias_grad.data(), load4(p.bias_grad.data()) + d);
    double* gw = p.weight_grad.data();
    for (int i = 0; i < n; ++i) store4(gw + i * 4, load4(gw + i * 4) + x[i] * d);
    return;
  }
  for (int i = 0; i < n; ++i) {
    const double* wr = &p.weights[static_cast<std::size_t>(i) * m];
    double acc = 0.0;
    for (int o = 0; o < m; ++o) acc += wr[o] * dout[o];
    dx[i] += acc;
  }
  if (p.frozen) return;
  for (int o = 0; o < m; ++o) p.bias_grad[o] += dout[o];
  for (int i = 0; i < n; ++i) {
    const double v = x[i];
    double* gr = &p.weight_grad[static_cast<std::size_t>(i) * m];
    for (int o = 0; o < m; ++o) gr[o] += v * dout[o];
  }
}

Tensor conv1x1(const Tensor& in, const LayerParams& p) {
  Tensor out;
  conv1x1_forward(in, p, out);
  return out;
}

Tensor conv2d(const Tensor& in, const LayerParams& p) {
  Tensor out;
  conv2d_forward(in, p, out);
  return out;
}

Tensor channel_max(const Tensor& in) {
  Tensor out;
  channel_max_forward(in, out);
  return out;
}

Tensor pointwise_mul(const Tensor& a, const Tensor& b) {
  Tensor out;
  pointwise_mul_forward(a, b, out);
  return out;
}

std::vector<double> dense(const Tensor& in, const LayerParams& p) {
  std::vector<double> out(static_cast<std::size_t>(p.shape[1]));
  dense_forward(in, p, out);
  return out;
}

// ---------------------------------------------------------------------------
// Value iteration
//
// The conv input is concat(R, V): input channel 0 is the reward map and
// channel 1 the running value. The reward half of every iteration's conv is
// identical, so it is computed once; in backward the per-iteration Q
// gradients are summed before being pushed through that half. Kernel size
// and filter count are template parameters for the shapes the network uses
// (0 means "read from the layer at run time").

namespace {

constexpr int kMaxViFilters = 16;
constexpr int kMaxViWidth = 64;

// Row-vectorized kernels: every inner loop runs across the cells of one grid
// row so the compiler can keep a row of accumulators in vector registers.
template <int KS, int NF, int WD>
void vi_forward_impl(const Tensor& reward_map, const LayerParams& p, int iterations, ViTape& tape, Tensor& out) {
  const int k = KS > 0 ? KS : p.shape[0];
  const int F = NF > 0 ? NF : p.shape[3];
  const int W = WD > 0 ? WD : reward_map.width();
  const int r = k / 2;
  const int H = reward_map.height();
  const int Wp = W + 2 * r;
  const std::size_t HW = static_cast<std::size_t>(H) * W;

  tape.height = H;
  tape.width = W;
  tape.pad = r;
  tape.filters = F;
  tape.iterations = iterations;
  const std::size_t plane = tape.plane();
  tape.values.assign((static_cast<std::size_t>(iterations) + 1) * plane, 0.0);
  tape.argmax.assign(static_cast<std::size_t>(iterations) * HW, 0);
  tape.reward_response.assign(HW * F, 0.0);  // planar: [f][cell]
  tape.padded_reward.assign(plane, 0.0);

  const auto R = reward_map.values();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      tape.padded_reward[static_cast<std::size_t>(y + r) * Wp + x + r] = R[static_cast<std::size_t>(y) * W + x];
    }
  }

  // Split the (tap, in-channel, filter) weights into the reward and value halves.
  double wr[25 * kMaxViFilters];
  double wv[25 * kMaxViFilters];
  for (int tap = 0; tap < k * k; ++tap) {
    for (int f = 0; f < F; ++f) {
      wr[tap * F + f] = p.weights[static_cast<std::size_t>(tap * 2) * F + f];
      wv[tap * F + f] = p.weights[static_cast<std::size_t>(tap * 2 + 1) * F + f];
    }
  }

  const double* Rp = tape.padded_reward.data();
  for (int f = 0; f < F; ++f) {
    double* rr = &tape.reward_response[static_cast<std::size_t>(f) * HW];
    for (int oy = 0; oy < H; ++oy) {
      double* row = rr + static_cast<std::size_t>(oy) * W;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double w = wr[(ky * k + kx) * F + f];
          const double* in = Rp + static_cast<std::size_t>(oy + ky) * Wp + kx;
          for (int ox = 0; ox < W; ++ox) row[ox] += w * in[ox];
        }
      }
    }
  }

  double q[kMaxViFilters][kMaxViWidth];
  for (int it = 1; it <= iterations; ++it) {
    const double* prev = &tape.values[static_cast<std::size_t>(it - 1) * plane];
    double* cur = &tape.values[static_cast<std::size_t>(it) * plane];
    std::uint8_t* arg = &tape.argmax[static_cast<std::size_t>(it - 1) * HW];
    for (int oy = 0; oy < H; ++oy) {
      for (int f = 0; f < F; ++f) {
        const double* rr = &tape.reward_response[static_cast<std::size_t>(f) * HW + static_cast<std::size_t>(oy) * W];
        for (int ox = 0; ox < W; ++ox) q[f][ox] = rr[ox];
      }
      if (it > 1) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double* in = prev + static_cast<std::size_t>(oy + ky) * Wp + kx;
            for (int f = 0; f < F; ++f) {
              const double w = wv[(ky * k + kx) * F + f];
              for (int ox = 0; ox < W; ++ox) q[f][ox] += w * in[ox];
            }
          }
        }
      }
      double* dst = cur + static_cast<std::size_t>(oy + r) * Wp + r;
      std::uint8_t* a = arg + static_cast<std::size_t>(oy) * W;
      for (int ox = 0; ox < W; ++ox) {
        int best = 0;
        for (int f = 1; f < F; ++f) {
          if (q[f][ox] > q[best][ox]) best = f;
        }
        dst[ox] = q[best][ox];
        a[ox] = static_cast<std::uint8_t>(best);
      }
    }
  }

  ensure_shape(out, {H, W, 1});
  auto y = out.values();
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) y[static_cast<std::size_t>(oy) * W + ox] = tape.value(iterations, oy, ox);
  }
}

template <int KS, int NF, int WD>
void vi_backward_impl(Tensor& reward_map, LayerParams& p, const ViTape& tape, const Tensor& out) {
  const int k = KS > 0 ? KS : p.shape[0];
  const int F = NF > 0 ? NF : p.shape[3];
  const int W = WD > 0 ? WD : tape.width;
  const int r = k / 2;
  const int H = tape.height;
  const int Wp = W + 2 * r;
  const std::size_t HW = static_cast<std::size_t>(H) * W;
  const std::size_t plane = tape.plane();

  double wr[25 * kMaxViFilters];
  double wv[25 * kMaxViFilters];
  double gwr[25 * kMaxViFilters] = {};
  double gwv[25 * kMaxViFilters] = {};
  for (int tap = 0; tap < k * k; ++tap) {
    for (int f = 0; f < F; ++f) {
      wr[tap * F + f] = p.weights[static_cast<std::size_t>(tap * 2) * F + f];
      wv[tap * F + f] = p.weights[static_cast<std::size_t>(tap * 2 + 1) * F + f];
    }
  }

  thread_local std::vector<double> dv, dprev, dq, dq_sum;
  dv.assign(plane, 0.0);
  dprev.assign(plane, 0.0);
  dq.assign(HW * F, 0.0);      // planar [f][cell], this iteration
  dq_sum.assign(HW * F, 0.0);  // planar [f][cell], summed over iterations
  const auto dout = out.grads();
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      dv[static_cast<std::size_t>(oy + r) * Wp + ox + r] = dout[static_cast<std::size_t>(oy) * W + ox];
    }
  }

  for (int it = tape.iterations; it >= 1; --it) {
    const double* prev = &tape.values[static_cast<std::size_t>(it - 1) * plane];
    const std::uint8_t* arg = &tape.argmax[static_cast<std::size_t>(it - 1) * HW];
    // Route dV through the max onto the winning filter.
    for (int f = 0; f < F; ++f) {
      double* d = &dq[static_cast<std::size_t>(f) * HW];
      double* ds = &dq_sum[static_cast<std::size_t>(f) * HW];
      for (int oy = 0; oy < H; ++oy) {
        const double* g = &dv[static_cast<std::size_t>(oy + r) * Wp + r];
        const std::uint8_t* a = arg + static_cast<std::size_t>(oy) * W;
        double* drow = d + static_cast<std::size_t>(oy) * W;
        double* dsrow = ds + static_cast<std::size_t>(oy) * W;
        for (int ox = 0; ox < W; ++ox) {
          const double v = a[ox] == f ? g[ox] : 0.0;
          drow[ox] = v;
          dsrow[ox] += v;
        }
      }
    }
    if (it == 1) break;  // V_0 is the constant zero map
    std::fill(dprev.begin(), dprev.end(), 0.0);
    for (int oy = 0; oy < H; ++oy) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int tap = ky * k + kx;
          const std::size_t off = static_cast<std::size_t>(oy + ky) * Wp + kx;
          double* dp = &dprev[off];
          const double* pv = prev + off;
          for (int f = 0; f < F; ++f) {
            const double* drow = &dq[static_cast<std::size_t>(f) * HW + static_cast<std::size_t>(oy) * W];
            const double w = wv[tap * F + f];
            double acc = 0.0;
            for (int ox = 0; ox < W; ++ox) {
              dp[ox] += w * drow[ox];
              acc += pv[ox] * drow[ox];
            }
            gwv[tap * F + f] += acc;
          }
        }
      }
    }
    dv.swap(dprev);
  }

  // Reward half; dprev is reused as the padded reward gradient.
  std::fill(dprev.begin(), dprev.end(), 0.0);
  const double* Rp = tape.padded_reward.data();
  for (int oy = 0; oy < H; ++oy) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int tap = ky * k + kx;
        const std::size_t off = static_cast<std::size_t>(oy + ky) * Wp + kx;
        double* dp = &dprev[off];
        const double* rv = Rp + off;
        for (int f = 0; f < F; ++f) {
          const double* drow = &dq_sum[static_cast<std::size_t>(f) * HW + static_cast<std::size_t>(oy) * W];
          const double w = wr[tap * F + f];
          double acc = 0.0;
          for (int ox = 0; ox < W; ++ox) {
            dp[ox] += w * drow[ox];
            acc += rv[ox] * drow[ox];
          }
          gwr[tap * F + f] += acc;
        }
      }
    }
  }
  auto dR = reward_map.grads();
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      dR[static_cast<std::size_t>(oy) * W + ox] += dprev[static_cast<std::size_t>(oy + r) * Wp + ox + r];
    }
  }

  if (p.frozen) return;
  for (int tap = 0; tap < k * k; ++tap) {
    for (int f = 0; f < F; ++f) {
      p.weight_grad[static_cast<std::size_t>(tap * 2) * F + f] += gwr[tap * F + f];
      p.weight_grad[static_cast<std::size_t>(tap * 2 + 1) * F + f] += gwv[tap * F + f];
    }
  }
}

// Fixed 8x8, 3x3, two-filter kernels: the shape the network uses. Each
// grid row is one 8-lane vector per filter.
using Row8 = double __attribute__((vector_size(64)));

inline Row8 load8(const double* p) {
  Row8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Row8 v) { std::memcpy(p, &v, sizeof v); }

using Lanes8 = long long __attribute__((vector_size(64)));
using Bytes8 = std::uint8_t __attribute__((vector_size(8)));

// lane x takes lane x-1 (x+1), zero filled
inline Row8 shift_right(Row8 v) { return __builtin_shuffle(v, Row8{}, Lanes8{8, 0, 1, 2, 3, 4, 5, 6}); }
inline Row8 shift_left(Row8 v) { return __builtin_shuffle(v, Row8{}, Lanes8{1, 2, 3, 4, 5, 6, 7, 8}); }

inline double hsum(Row8 v) {
  double s = 0.0;
  for (int i = 0; i < 8; ++i) s += v[i];
  return s;
}

void vi_forward_3x3x2_w8(const Tensor& reward_map, const LayerParams& p, int iterations, ViTape& tape, Tensor& out) {
  constexpr int H = 8;
  constexpr int W = 8;
  constexpr int Wp = W + 2;
  constexpr std::size_t HW = H * W;
  tape.height = H;
  tape.width = W;
  tape.pad = 1;
  tape.filters = 2;
  tape.iterations = iterations;
  const std::size_t plane = tape.plane();
  tape.values.assign((static_cast<std::size_t>(iterations) + 1) * plane, 0.0);
  tape.argmax.assign(static_cast<std::size_t>(iterations) * HW, 0);
  tape.reward_response.assign(HW * 2, 0.0);
  tape.padded_reward.assign(plane, 0.0);

  const auto R = reward_map.values();
  for (int y = 0; y < H; ++y) std::copy_n(&R[static_cast<std::size_t>(y) * W], W, &tape.padded_reward[(y + 1) * Wp + 1]);
  double wr0[9], wr1[9], wv0[9], wv1[9];
  for (int t = 0; t < 9; ++t) {
    wr0[t] = p.weights[t * 4 + 0];
    wr1[t] = p.weights[t * 4 + 1];
    wv0[t] = p.weights[t * 4 + 2];
    wv1[t] = p.weights[t * 4 + 3];
  }
  const double* Rp = tape.padded_reward.data();
  double* rr0 = tape.reward_response.data();
  double* rr1 = rr0 + HW;
  Row8 a0[H] = {}, a1[H] = {};
  for (int t = 0; t < 9; ++t) {
    const double* base = Rp + (t / 3) * Wp + t % 3;
    for (int oy = 0; oy < H; ++oy) {
      const Row8 in = load8(base + oy * Wp);
      a0[oy] += wr0[t] * in;
      a1[oy] += wr1[t] * in;
    }
  }
  for (int oy = 0; oy < H; ++oy) {
    store8(rr0 + oy * W, a0[oy]);
    store8(rr1 + oy * W, a1[oy]);
  }

  // V stays in registers; the x-1 / x+1 neighbours come from lane shifts.
  Row8 v[H] = {};
  for (int it = 1; it <= iterations; ++it) {
    double* cur = &tape.values[static_cast<std::size_t>(it) * plane];
    std::uint8_t* arg = &tape.argmax[static_cast<std::size_t>(it - 1) * HW];
    for (int oy = 0; oy < H; ++oy) {
      a0[oy] = load8(rr0 + oy * W);
      a1[oy] = load8(rr1 + oy * W);
    }
    if (it > 1) {
      for (int iy = 0; iy < H; ++iy) {
        const Row8 c = v[iy];
        const Row8 l = shift_right(c);
        const Row8 rt = shift_left(c);
        for (int ky = 0; ky < 3; ++ky) {
          const int o = iy + 1 - ky;
          if (o < 0 || o >= H) continue;
          a0[o] += wv0[ky * 3] * l + wv0[ky * 3 + 1] * c + wv0[ky * 3 + 2] * rt;
          a1[o] += wv1[ky * 3] * l + wv1[ky * 3 + 1] * c + wv1[ky * 3 + 2] * rt;
        }
      }
    }
    for (int oy = 0; oy < H; ++oy) {
      const auto second = a1[oy] > a0[oy];
      v[oy] = second ? a1[oy] : a0[oy];
      store8(cur + (oy + 1) * Wp + 1, v[oy]);
      const Bytes8 bits = __builtin_convertvector(second, Bytes8) & 1;
      std::memcpy(arg + oy * W, &bits, sizeof bits);
    }
  }

  ensure_shape(out, {H, W, 1});
  auto y = out.values();
  const double* last = &tape.values[static_cast<std::size_t>(iterations) * plane];
  for (int oy = 0; oy < H; ++oy) std::copy_n(last + (oy + 1) * Wp + 1, W, &y[static_cast<std::size_t>(oy) * W]);
}

void vi_backward_3x3x2_w8(Tensor& reward_map, LayerParams& p, const ViTape& tape, const Tensor& out) {
  constexpr int H = 8;
  constexpr int W = 8;
  constexpr int Wp = W + 2;
  constexpr std::size_t HW = H * W;
  const std::size_t plane = tape.plane();
  double wr0[9], wr1[9], wv0[9], wv1[9];
  for (int t = 0; t < 9; ++t) {
    wr0[t] = p.weights[t * 4 + 0];
    wr1[t] = p.weights[t * 4 + 1];
    wv0[t] = p.weights[t * 4 + 2];
    wv1[t] = p.weights[t * 4 + 3];
  }
  Row8 g0[9] = {}, g1[9] = {};  // weight grads, filter 0 / 1

  // Weight grads of one conv half: x[t] feeds output row o from input row
  // o + ky - 1, shifted by kx - 1.
  auto weight_grads = [&](const double* padded, const Row8* d0, const Row8* d1, Row8* acc0, Row8* acc1) {
    for (int iy = 0; iy < H; ++iy) {
      const Row8 c = load8(padded + (iy + 1) * Wp + 1);
      const Row8 l = shift_right(c);
      const Row8 rt = shift_left(c);
      for (int ky = 0; ky < 3; ++ky) {
        const int o = iy + 1 - ky;
        if (o < 0 || o >= H) continue;
        acc0[ky * 3] += l * d0[o];
        acc0[ky * 3 + 1] += c * d0[o];
        acc0[ky * 3 + 2] += rt * d0[o];
        acc1[ky * 3] += l * d1[o];
        acc1[ky * 3 + 1] += c * d1[o];
        acc1[ky * 3 + 2] += rt * d1[o];
      }
    }
  };
  // Input gradient through the flipped kernel.
  auto transposed = [&](const Row8* d0, const Row8* d1, const double* w0, const double* w1, Row8* dst) {
    for (int iy = 0; iy < H; ++iy) dst[iy] = Row8{};
    for (int o = 0; o < H; ++o) {
      const Row8 c0 = d0[o], l0 = shift_left(c0), r0 = shift_right(c0);
      const Row8 c1 = d1[o], l1 = shift_left(c1), r1 = shift_right(c1);
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = o + ky - 1;
        if (iy < 0 || iy >= H) continue;
        dst[iy] += w0[ky * 3] * l0 + w0[ky * 3 + 1] * c0 + w0[ky * 3 + 2] * r0 + w1[ky * 3] * l1 +
                   w1[ky * 3 + 1] * c1 + w1[ky * 3 + 2] * r1;
      }
    }
  };

  Row8 dv[H], d0[H], d1[H], s0[H] = {}, s1[H] = {};
  const auto dout = out.grads();
  for (int oy = 0; oy < H; ++oy) dv[oy] = load8(&dout[static_cast<std::size_t>(oy) * W]);
  const Row8 zero = {};

  for (int it = tape.iterations; it >= 1; --it) {
    const std::uint8_t* arg = &tape.argmax[static_cast<std::size_t>(it - 1) * HW];
    for (int oy = 0; oy < H; ++oy) {
      Bytes8 bits;
      std::memcpy(&bits, arg + oy * W, sizeof bits);
      const auto second = __builtin_convertvector(bits, Lanes8) != 0;
      d0[oy] = second ? zero : dv[oy];
      d1[oy] = second ? dv[oy] : zero;
      s0[oy] += d0[oy];
      s1[oy] += d1[oy];
    }
    if (it == 1) break;  // V_0 is the constant zero map
    weight_grads(&tape.values[static_cast<std::size_t>(it - 1) * plane], d0, d1, g0 + 0, g1 + 0);
    transposed(d0, d1, wv0, wv1, dv);
  }

  Row8 h0[9] = {}, h1[9] = {};
  weight_grads(tape.padded_reward.data(), s0, s1, h0, h1);
  Row8 dr[H];
  transposed(s0, s1, wr0, wr1, dr);
  auto dR = reward_map.grads();
  for (int oy = 0; oy < H; ++oy) store8(&dR[static_cast<std::size_t>(oy) * W], load8(&dR[static_cast<std::size_t>(oy) * W]) + dr[oy]);
  if (p.frozen) return;
  for (int t = 0; t < 9; ++t) {
    p.weight_grad[t * 4 + 0] += hsum(h0[t]);
    p.weight_grad[t * 4 + 1] += hsum(h1[t]);
    p.weight_grad[t * 4 + 2] += hsum(g0[t]);
    p.weight_grad[t * 4 + 3] += hsum(g1[t]);
  }
}

void check_vi_layer(const LayerParams& p) {
  require(p.kind == LayerKind::Conv2d && p.shape[2] == 2, "vi_module: expects a k x k x 2 x F conv");
  require(p.shape[0] <= 5, "vi_module: kernel size above 5 is not supported");
  require(p.shape[3] >= 1 && p.shape[3] <= kMaxViFilters, "vi_module: filter count must lie in [1, 16]");
}

bool vi_fast_path(const LayerParams& p, int height, int width) {
  return p.shape[0] == 3 && p.shape[3] == 2 && height == 8 && width == 8;
}

}  // namespace

void vi_module_forward(const Tensor& reward_map, const LayerParams& p, int iterations, ViTape& tape,
                       Tensor& out) {
  check_vi_layer(p);
  require(reward_map.channels() == 1, "vi_module: reward map must have one channel");
  require(iterations >= 0, "vi_module: iterations must be non-negative");
  require(reward_map.width() <= kMaxViWidth, "vi_module: width above 64 is not supported");
  if (vi_fast_path(p, reward_map.height(), reward_map.width())) {
    vi_forward_3x3x2_w8(reward_map, p, iterations, tape, out);
  } else {
    vi_forward_impl<0, 0, 0>(reward_map, p, iterations, tape, out);
  }
}

void vi_module_backward(Tensor& reward_map, LayerParams& p, const ViTape& tape, const Tensor& out) {
  check_vi_layer(p);
  if (vi_fast_path(p, tape.height, tape.width)) {
    vi_backward_3x3x2_w8(reward_map, p, tape, out);
  } else {
    vi_backward_impl<0, 0, 0>(reward_map, p, tape, out);
  }
}

Tensor vi_module(const Tensor& reward_map, const LayerParams& p, int iterations) {
  ViTape tape;
  Tensor out;
  vi_module_forward(reward_map, p, iterations, tape, out);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(AdamConfig config, std::span<const LayerParams> layers) : config_(config) {
  moments_.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    moments_[i].m_w.assign(layers[i].weights.size(), 0.0);
    moments_[i].v_w.assign(layers[i].weights.size(), 0.0);
    moments_[i].m_b.assign(layers[i].bias.size(), 0.0);
    moments_[i].v_b.assign(layers[i].bias.size(), 0.0);
  }
}

void Adam::reset_layer(std::size_t layer_index) {
  auto& m = moments_.at(layer_index);
  std::fill(m.m_w.begin(), m.m_w.end(), 0.0);
  std::fill(m.v_w.begin(), m.v_w.end(), 0.0);
  std::fill(m.m_b.begin(), m.m_b.end(), 0.0);
  std::fill(m.v_b.begin(), m.v_b.end(), 0.0);
}

void Adam::step(std::span<LayerParams> layers) {
  if (layers.size() != moments_.size()) throw std::invalid_argument("Adam::step: layer count changed");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  auto update = [&](std::vector<double>& x, std::vector<double>& g, std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = layers[i];
    if (!layer.frozen) {
      update(layer.weights, layer.weight_grad, moments_[i].m_w, moments_[i].v_w);
      update(layer.bias, layer.bias_grad, moments_[i].m_b, moments_[i].v_b);
    }
    layer.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Gradient check

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

GradientReport gradient_check(std::span<LayerParams> layers, const std::function<double()>& loss,
                              const std::function<void()>& backprop, double tolerance, double h) {
  for (auto& l : layers) l.zero_grad();
  backprop();

  GradientReport report;
  report.tolerance = tolerance;
  for (auto& layer : layers) {
    LayerGradientReport lr;
    lr.name = layer.name;
    lr.frozen = layer.frozen;
    auto probe = [&](std::vector<double>& x, const std::vector<double>& g) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        lr.max_analytic = std::max(lr.max_analytic, std::abs(g[i]));
        if (layer.frozen) continue;
        const double saved = x[i];
        x[i] = saved + h;
        const double up = loss();
        x[i] = saved - h;
        const double down = loss();
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        lr.max_rel_error = std::max(lr.max_rel_error, relative_error(g[i], numeric));
        ++lr.checked;
      }
    };
    probe(layer.weights, layer.weight_grad);
    probe(layer.bias, layer.bias_grad);
    report.max_rel_error = std::max(report.max_rel_error, lr.max_rel_error);
    report.layers.push_back(std::move(lr));
  }
  for (auto& l : layers) l.zero_grad();
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("parameter file: bad scalar '" + s + "'");
  }
  return v;
}

}  // namespace

void write_layers(std::ostream& os, std::span<const LayerParams> layers) {
  for (const auto& l : layers) {
    os << "layer " << l.name << " shape ";
    for (std::size_t i = 0; i < l.shape.size(); ++i) os << (i ? "x" : "") << l.shape[i];
    os << " bias " << l.bias.size() << " frozen " << (l.frozen ? 1 : 0) << '\n';
    for (double w : l.weights) os << format_double(w) << '\n';
    for (double b : l.bias) os << format_double(b) << '\n';
  }
}

std::vector<LayerParams> read_layers(std::istream& is, std::size_t count) {
  std::vector<LayerParams> out;
  std::string line;
  while (out.size() < count && std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kw_layer, name, kw_shape, dims, kw_bias, kw_frozen;
    std::size_t nbias = 0;
    int frozen = 0;
    ls >> kw_layer >> name >> kw_shape >> dims >> kw_bias >> nbias >> kw_frozen >> frozen;
    if (ls.fail() || kw_layer != "layer" || kw_shape != "shape" || kw_bias != "bias" || kw_frozen != "frozen") {
      throw std::invalid_argument("parameter file: bad layer header: " + line);
    }
    std::vector<int> shape;
    std::istringstream ds(dims);
    std::string part;
    while (std::getline(ds, part, 'x')) shape.push_back(std::stoi(part));

    LayerParams p;
    if (shape.size() == 4) {
      p = LayerParams::conv2d(name, shape[0], shape[2], shape[3]);
    } else if (shape.size() == 2 && nbias > 0) {
      p = LayerParams::dense(name, shape[0], shape[1]);
    } else if (shape.size() == 2) {
      p = LayerParams::conv1x1(name, shape[0], shape[1]);
    } else {
      throw std::invalid_argument("parameter file: unsupported shape for layer " + name);
    }
    if (p.bias.size() != nbias) throw std::invalid_argument("parameter file: bias length mismatch for " + name);
    p.frozen = frozen != 0;
    auto read_into = [&](std::vector<double>& dst) {
      for (auto& v : dst) {
        if (!std::getline(is, line)) throw std::invalid_argument("parameter file: truncated layer " + name);
        v = parse_double(line);
      }
    };
    read_into(p.weights);
    read_into(p.bias);
    out.push_back(std::move(p));
  }
  if (out.size() != count) throw std::invalid_argument("parameter file: expected more layers");
  return out;
}

}  // namespace vinlab
