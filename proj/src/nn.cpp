#include "fundus/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus::nn {

std::size_t ParamRegistry::add(const std::string& name, std::vector<int> shape) {
  require(find(name) == nullptr, "registry: duplicate tensor name " + name);
  std::size_t size = 1;
  for (const int d : shape) {
    require(d > 0, "registry: bad dim in " + name);
    size *= static_cast<std::size_t>(d);
  }
  const std::size_t offset = total;
  tensors.push_back({name, std::move(shape), offset, size});
  total += size;
  return offset;
}

const TensorSpec* ParamRegistry::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void conv2d_forward(const Conv2d& L, const float* theta, const FeatureMap& x,
                    FeatureMap& y) {
  const int oh = conv_out_extent(x.height, L.k, L.stride, L.pad);
  const int ow = conv_out_extent(x.width, L.k, L.stride, L.pad);
  y = FeatureMap(L.out_c, oh, ow);
  const float* w = theta + L.w_off;
  const int in_w = x.width, in_h = x.height;
  for (int oc = 0; oc < L.out_c; ++oc) {
    float* yp = y.channel(oc);
    for (int ic = 0; ic < L.in_c; ++ic) {
      const float* xp = x.channel(ic);
      const float* wp = w + (static_cast<std::size_t>(oc) * L.in_c + ic) * L.k * L.k;
      for (int ky = 0; ky < L.k; ++ky) {
        for (int kx = 0; kx < L.k; ++kx) {
          const float wv = wp[ky * L.k + kx];
          const int xlo = L.pad - kx;
          const int ox_lo = xlo <= 0 ? 0 : (xlo + L.stride - 1) / L.stride;
          const int xhi = in_w - 1 - kx + L.pad;
          const int ox_hi = xhi < 0 ? 0 : std::min(ow, xhi / L.stride + 1);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * L.stride + ky - L.pad;
            if (iy < 0 || iy >= in_h) continue;
            const float* xrow = xp + static_cast<std::size_t>(iy) * in_w;
            float* yrow = yp + static_cast<std::size_t>(oy) * ow;
            if (L.stride == 1) {
              const float* xs = xrow + kx - L.pad;
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                yrow[ox] += wv * xs[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                yrow[ox] += wv * xrow[ox * L.stride + kx - L.pad];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward(const Conv2d& L, const float* theta, const FeatureMap& x,
                     const FeatureMap& dy, FeatureMap* dx, float* grad) {
  // dx accumulates: an empty map is allocated to the input shape, a
  // pre-sized one (residual shortcut) is added into.
  if (dx && dx->data.empty()) *dx = FeatureMap(L.in_c, x.height, x.width);
  const int oh = dy.height, ow = dy.width;
  const int in_w = x.width, in_h = x.height;
  const float* w = theta + L.w_off;
  float* dw = grad + L.w_off;
  for (int oc = 0; oc < L.out_c; ++oc) {
    const float* dyp = dy.channel(oc);
    for (int ic = 0; ic < L.in_c; ++ic) {
      const float* xp = x.channel(ic);
      float* dxp = dx ? dx->channel(ic) : nullptr;
      const std::size_t wbase =
          (static_cast<std::size_t>(oc) * L.in_c + ic) * L.k * L.k;
      for (int ky = 0; ky < L.k; ++ky) {
        for (int kx = 0; kx < L.k; ++kx) {
          const int xlo = L.pad - kx;
          const int ox_lo = xlo <= 0 ? 0 : (xlo + L.stride - 1) / L.stride;
          const int xhi = in_w - 1 - kx + L.pad;
          const int ox_hi = xhi < 0 ? 0 : std::min(ow, xhi / L.stride + 1);
          const float wv = w[wbase + static_cast<std::size_t>(ky) * L.k + kx];
          double wacc = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * L.stride + ky - L.pad;
            if (iy < 0 || iy >= in_h) continue;
            const float* xrow = xp + static_cast<std::size_t>(iy) * in_w;
            const float* dyrow = dyp + static_cast<std::size_t>(oy) * ow;
            float* dxrow =
                dxp ? dxp + static_cast<std::size_t>(iy) * in_w : nullptr;
            if (L.stride == 1) {
              const float* xs = xrow + kx - L.pad;
              float facc = 0.f;
              for (int ox = ox_lo; ox < ox_hi; ++ox) facc += dyrow[ox] * xs[ox];
              wacc += facc;
              if (dxrow) {
                float* ds = dxrow + kx - L.pad;
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  ds[ox] += wv * dyrow[ox];
              }
            } else {
              float facc = 0.f;
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                facc += dyrow[ox] * xrow[ox * L.stride + kx - L.pad];
              wacc += facc;
              if (dxrow) {
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  dxrow[ox * L.stride + kx - L.pad] += wv * dyrow[ox];
              }
            }
          }
          dw[wbase + static_cast<std::size_t>(ky) * L.k + kx] +=
              static_cast<float>(wacc);
        }
      }
    }
  }
}

void groupnorm_forward(const GroupNorm& L, const float* theta,
                       const FeatureMap& x, FeatureMap& y, GnSaved& saved) {
  const float* gamma = theta + L.gamma_off;
  const float* beta = theta + L.beta_off;
  const int per_group = L.channels / L.groups;
  const std::size_t plane = x.plane_size();
  y = FeatureMap(x.channels, x.height, x.width);
  saved.xhat = FeatureMap(x.channels, x.height, x.width);
  saved.inv_std.assign(static_cast<std::size_t>(L.groups), 0.f);

  for (int g = 0; g < L.groups; ++g) {
    const std::size_t base = static_cast<std::size_t>(g) * per_group * plane;
    const std::size_t m = static_cast<std::size_t>(per_group) * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += x.data[base + i];
    const double mu = sum / static_cast<double>(m);
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = x.data[base + i] - mu;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(m);
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + L.eps));
    saved.inv_std[static_cast<std::size_t>(g)] = inv_std;
    const float muf = static_cast<float>(mu);
    for (int cc = 0; cc < per_group; ++cc) {
      const int c = g * per_group + cc;
      const float ga = gamma[c], be = beta[c];
      const std::size_t coff = static_cast<std::size_t>(c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const float xh = (x.data[coff + i] - muf) * inv_std;
        saved.xhat.data[coff + i] = xh;
        y.data[coff + i] = ga * xh + be;
      }
    }
  }
}

void groupnorm_backward(const GroupNorm& L, const float* theta,
                        const GnSaved& saved, const FeatureMap& dy,
                        FeatureMap& dx, float* grad) {
  const float* gamma = theta + L.gamma_off;
  float* dgamma = grad + L.gamma_off;
  float* dbeta = grad + L.beta_off;
  const int per_group = L.channels / L.groups;
  const std::size_t plane = saved.xhat.plane_size();
  dx = FeatureMap(saved.xhat.channels, saved.xhat.height, saved.xhat.width);

  for (int g = 0; g < L.groups; ++g) {
    const std::size_t m = static_cast<std::size_t>(per_group) * plane;
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int cc = 0; cc < per_group; ++cc) {
      const int c = g * per_group + cc;
      const std::size_t coff = static_cast<std::size_t>(c) * plane;
      const float ga = gamma[c];
      double dg = 0.0, db = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const float d = dy.data[coff + i];
        const float xh = saved.xhat.data[coff + i];
        dg += static_cast<double>(d) * xh;
        db += d;
        const double dxh = static_cast<double>(d) * ga;
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xh;
      }
      dgamma[c] += static_cast<float>(dg);
      dbeta[c] += static_cast<float>(db);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    const float inv_std = saved.inv_std[static_cast<std::size_t>(g)];
    const float a = static_cast<float>(sum_dxhat * inv_m);
    const float b = static_cast<float>(sum_dxhat_xhat * inv_m);
    for (int cc = 0; cc < per_group; ++cc) {
      const int c = g * per_group + cc;
      const std::size_t coff = static_cast<std::size_t>(c) * plane;
      const float ga = gamma[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const float dxh = dy.data[coff + i] * ga;
        const float xh = saved.xhat.data[coff + i];
        dx.data[coff + i] = inv_std * (dxh - a - xh * b);
      }
    }
  }
}

void relu_inplace(FeatureMap& x) {
  for (auto& v : x.data)
    if (v < 0.f) v = 0.f;
}

void relu_backward_inplace(const FeatureMap& y, FeatureMap& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (y.data[i] <= 0.f) dy.data[i] = 0.f;
}

void maxpool3x3s2_forward(const FeatureMap& x, FeatureMap& y,
                          std::vector<std::int32_t>& argmax) {
  const int oh = conv_out_extent(x.height, 3, 2, 1);
  const int ow = conv_out_extent(x.width, 3, 2, 1);
  y = FeatureMap(x.channels, oh, ow);
  argmax.assign(y.data.size(), 0);
  for (int c = 0; c < x.channels; ++c) {
    const float* xp = x.channel(c);
    float* yp = y.channel(c);
    std::int32_t* ap =
        argmax.data() + static_cast<std::size_t>(c) * y.plane_size();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = -1e30f;
        std::int32_t best_idx = 0;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 + ky - 1;
          if (iy < 0 || iy >= x.height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 + kx - 1;
            if (ix < 0 || ix >= x.width) continue;
            const std::int32_t idx = iy * x.width + ix;
            if (xp[idx] > best) {
              best = xp[idx];
              best_idx = idx;
            }
          }
        }
        yp[oy * ow + ox] = best;
        ap[oy * ow + ox] = best_idx;
      }
    }
  }
}

void maxpool3x3s2_backward(const FeatureMap& x_shape_like,
                           const std::vector<std::int32_t>& argmax,
                           const FeatureMap& dy, FeatureMap& dx) {
  dx = FeatureMap(x_shape_like.channels, x_shape_like.height,
                  x_shape_like.width);
  for (int c = 0; c < dy.channels; ++c) {
    const float* dyp = dy.channel(c);
    const std::int32_t* ap =
        argmax.data() + static_cast<std::size_t>(c) * dy.plane_size();
    float* dxp = dx.channel(c);
    for (std::size_t i = 0; i < dy.plane_size(); ++i)
      dxp[ap[i]] += dyp[i];
  }
}

void global_avg_pool(const FeatureMap& x, std::vector<float>& y) {
  y.assign(static_cast<std::size_t>(x.channels), 0.f);
  const std::size_t plane = x.plane_size();
  for (int c = 0; c < x.channels; ++c) {
    const float* xp = x.channel(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += xp[i];
    y[static_cast<std::size_t>(c)] =
        static_cast<float>(sum / static_cast<double>(plane));
  }
}

void global_avg_pool_backward(int h, int w, std::span<const float> dy,
                              FeatureMap& dx) {
  dx = FeatureMap(static_cast<int>(dy.size()), h, w);
  const float inv = 1.f / static_cast<float>(h * w);
  for (int c = 0; c < dx.channels; ++c) {
    const float v = dy[static_cast<std::size_t>(c)] * inv;
    float* p = dx.channel(c);
    for (std::size_t i = 0; i < dx.plane_size(); ++i) p[i] = v;
  }
}

void linear_forward(const Linear& L, const float* theta, const float* x,
                    float* y) {
  const float* w = theta + L.w_off;
  const float* b = theta + L.b_off;
  for (int o = 0; o < L.out_dim; ++o) {
    const float* wrow = w + static_cast<std::size_t>(o) * L.in_dim;
    float acc = b[o];
    for (int i = 0; i < L.in_dim; ++i) acc += wrow[i] * x[i];
    y[o] = acc;
  }
}

void linear_backward(const Linear& L, const float* theta, const float* x,
                     const float* dy, float* dx, float* grad) {
  const float* w = theta + L.w_off;
  float* dw = grad + L.w_off;
  float* db = grad + L.b_off;
  if (dx) std::memset(dx, 0, sizeof(float) * static_cast<std::size_t>(L.in_dim));
  for (int o = 0; o < L.out_dim; ++o) {
    const float d = dy[o];
    db[o] += d;
    const float* wrow = w + static_cast<std::size_t>(o) * L.in_dim;
    float* dwrow = dw + static_cast<std::size_t>(o) * L.in_dim;
    for (int i = 0; i < L.in_dim; ++i) {
      dwrow[i] += d * x[i];
      if (dx) dx[i] += d * wrow[i];
    }
  }
}

void init_params(const ParamRegistry& reg, std::span<float> theta,
                 std::uint64_t seed) {
  require(theta.size() == reg.total, "init: theta size mismatch");
  for (const auto& t : reg.tensors) {
    float* p = theta.data() + t.offset;
    const bool is_gamma = t.name.ends_with(".gamma");
    const bool is_beta = t.name.ends_with(".beta");
    const bool is_bias = t.name.ends_with(".b");
    if (is_gamma) {
      std::fill(p, p + t.size, 1.f);
    } else if (is_beta || is_bias) {
      std::fill(p, p + t.size, 0.f);
    } else {
      // Weight tensor: fan_in is everything but the leading (output) dim.
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < t.shape.size(); ++d)
        fan_in *= static_cast<std::size_t>(t.shape[d]);
      const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      Rng rng = Rng::stream(seed, "init/" + t.name);
      for (std::size_t i = 0; i < t.size; ++i)
        p[i] = static_cast<float>(rng.normal() * std_dev);
    }
  }
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw UsageError("unknown optimizer: " + s + " (want adam or sgd)");
}

const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

void Optimizer::step(std::span<float> theta, std::span<const float> grad) {
  require(theta.size() == grad.size(), "optimizer: size mismatch");
  if (kind == OptimizerKind::sgd) {
    const float f = static_cast<float>(lr);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= f * grad[i];
    return;
  }
  if (m.size() != theta.size()) {
    m.assign(theta.size(), 0.f);
    v.assign(theta.size(), 0.f);
    t = 0;
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  const float lr_t = static_cast<float>(lr * std::sqrt(bc2) / bc1);
  const float e = static_cast<float>(eps);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = b1 * m[i] + (1.f - b1) * grad[i];
    v[i] = b2 * v[i] + (1.f - b2) * grad[i] * grad[i];
    theta[i] -= lr_t * m[i] / (std::sqrt(v[i]) + e);
  }
}

}  // namespace fundus::nn
