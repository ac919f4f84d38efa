#include "adt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace adt {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

Tensor map_binary(Tape& tape, const Tensor& a, const Tensor& b, const char* name,
                  double (*fwd)(double, double), double da_coeff, double db_coeff) {
  // only used for add/sub where local grads are constants
  check_same_shape(a, b, name);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  Tensor o = Tensor::from(a.shape(), std::move(out));
  if (needs_record(tape, {&a, &b})) {
    Tensor ac = a, bc = b, oc = o;
    tape.record(o, [ac, bc, oc, da_coeff, db_coeff]() mutable {
      auto og = oc.grad();
      if (ac.requires_grad()) {
        auto g = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += da_coeff * og[i];
      }
      if (bc.requires_grad()) {
        auto g = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += db_coeff * og[i];
      }
    });
  }
  return o;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return map_binary(tape, a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return map_binary(tape, a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor o = Tensor::from(a.shape(), std::move(out));
  if (needs_record(tape, {&a, &b})) {
    Tensor ac = a, bc = b, oc = o;
    tape.record(o, [ac, bc, oc]() mutable {
      auto og = oc.grad();
      auto av2 = ac.values();
      auto bv2 = bc.values();
      if (ac.requires_grad()) {
        auto g = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * bv2[i];
      }
      if (bc.requires_grad()) {
        auto g = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * av2[i];
      }
    });
  }
  return o;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  Tensor o = Tensor::from(a.shape(), std::move(out));
  if (needs_record(tape, {&a})) {
    Tensor ac = a, oc = o;
    tape.record(o, [ac, oc, c]() mutable {
      auto og = oc.grad();
      auto g = ac.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * og[i];
    });
  }
  return o;
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc, slope]() mutable {
      auto og = oc.grad();
      auto xv2 = xc.values();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += og[i] * (xv2[i] > 0.0 ? 1.0 : slope);
    });
  }
  return o;
}

Tensor relu(Tape& tape, const Tensor& x) { return leaky_relu(tape, x, 0.0); }

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(Tape& tape, const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc]() mutable {
      auto og = oc.grad();
      auto ov = oc.values();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * ov[i] * (1.0 - ov[i]);
    });
  }
  return o;
}

Tensor log(Tape& tape, const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i]);
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc]() mutable {
      auto og = oc.grad();
      auto xv2 = xc.values();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] / xv2[i];
    });
  }
  return o;
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc, lo, hi]() mutable {
      auto og = oc.grad();
      auto xv2 = xc.values();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv2[i] >= lo && xv2[i] <= hi) g[i] += og[i];
    });
  }
  return o;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul: operands must be 2-D, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  {
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.data();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t kk = 0; kk < k; ++kk) {
        double aik = pa[i * k + kk];
        if (aik == 0.0) continue;
        const double* brow = pb + kk * n;
        double* orow = po + i * n;
        for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
  }
  Tensor o = Tensor::from({m, n}, std::move(out));
  if (needs_record(tape, {&a, &b})) {
    Tensor ac = a, bc = b, oc = o;
    tape.record(o, [ac, bc, oc, m, k, n]() mutable {
      const double* og = oc.grad().data();
      if (ac.requires_grad()) {
        double* ga = ac.grad().data();
        const double* pb = bc.values().data();
        // dA = dO . B^T
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t kk = 0; kk < k; ++kk) {
            double s = 0.0;
            const double* orow = og + i * n;
            const double* brow = pb + kk * n;
            for (std::int64_t j = 0; j < n; ++j) s += orow[j] * brow[j];
            ga[i * k + kk] += s;
          }
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        const double* pa = ac.values().data();
        // dB = A^T . dO
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t kk = 0; kk < k; ++kk) {
            double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* orow = og + i * n;
            double* gbrow = gb + kk * n;
            for (std::int64_t j = 0; j < n; ++j) gbrow[j] += aik * orow[j];
          }
      }
    });
  }
  return o;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& b) {
  if (b.ndim() != 1) throw DimensionError("add_bias: bias must be 1-D");
  std::int64_t channels, inner;
  if (x.ndim() == 2) {
    channels = x.dim(1);
    inner = 1;
  } else if (x.ndim() == 4) {
    channels = x.dim(1);
    inner = x.dim(2) * x.dim(3);
  } else {
    throw DimensionError("add_bias: x must be [N,F] or [N,C,H,W]");
  }
  if (b.dim(0) != channels)
    throw DimensionError("add_bias: bias width " + std::to_string(b.dim(0)) +
                         " does not match channels " + std::to_string(channels));
  std::int64_t batch = x.dim(0);
  auto xv = x.values();
  auto bv = b.values();
  std::vector<double> out(xv.size());
  for (std::int64_t i = 0; i < batch; ++i)
    for (std::int64_t c = 0; c < channels; ++c) {
      double bc0 = bv[static_cast<std::size_t>(c)];
      std::int64_t base = (i * channels + c) * inner;
      for (std::int64_t j = 0; j < inner; ++j)
        out[static_cast<std::size_t>(base + j)] = xv[static_cast<std::size_t>(base + j)] + bc0;
    }
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x, &b})) {
    Tensor xc = x, bcap = b, oc = o;
    tape.record(o, [xc, bcap, oc, batch, channels, inner]() mutable {
      auto og = oc.grad();
      if (xc.requires_grad()) {
        auto g = xc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bcap.requires_grad()) {
        auto g = bcap.grad();
        for (std::int64_t i = 0; i < batch; ++i)
          for (std::int64_t c = 0; c < channels; ++c) {
            std::int64_t base = (i * channels + c) * inner;
            double s = 0.0;
            for (std::int64_t j = 0; j < inner; ++j) s += og[static_cast<std::size_t>(base + j)];
            g[static_cast<std::size_t>(c)] += s;
          }
      }
    });
  }
  return o;
}

namespace {

struct ConvGeom {
  std::int64_t batch, cin, h, w, cout, k, stride, pad, oh, ow;
};

ConvGeom conv_geom(const Tensor& input, const Tensor& kernel, std::int64_t stride,
                   std::int64_t padding) {
  if (input.ndim() != 4) throw DimensionError("conv2d: input must be [N,C,H,W]");
  if (kernel.ndim() != 4) throw DimensionError("conv2d: kernel must be [Co,C,k,k]");
  if (kernel.dim(2) != kernel.dim(3)) throw DimensionError("conv2d: kernel must be square");
  if (stride < 1 || kernel.dim(2) < 1) throw DimensionError("conv2d: kernel and stride must be >= 1");
  if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
  if (kernel.dim(1) != input.dim(1))
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                         " input channels, input has " + std::to_string(input.dim(1)));
  ConvGeom g;
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.oh = (g.h + 2 * padding - g.k) / stride + 1;
  g.ow = (g.w + 2 * padding - g.k) / stride + 1;
  if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k || g.oh < 1 || g.ow < 1)
    throw DimensionError("conv2d: output extent < 1 for input " + shape_str(input.shape()) +
                         ", kernel " + shape_str(kernel.shape()) + ", stride " +
                         std::to_string(stride) + ", padding " + std::to_string(padding));
  return g;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, std::int64_t stride,
              std::int64_t padding) {
  ConvGeom g = conv_geom(input, kernel, stride, padding);
  std::vector<double> out(static_cast<std::size_t>(g.batch * g.cout * g.oh * g.ow), 0.0);
  const double* in = input.values().data();
  const double* ker = kernel.values().data();
  auto in_at = [&](std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return in[((n * g.cin + c) * g.h + y) * g.w + x];
  };
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.cout; ++co)
      for (std::int64_t oy = 0; oy < g.oh; ++oy)
        for (std::int64_t ox = 0; ox < g.ow; ++ox) {
          double acc = 0.0;
          for (std::int64_t ci = 0; ci < g.cin; ++ci)
            for (std::int64_t ky = 0; ky < g.k; ++ky) {
              std::int64_t iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.h) continue;
              for (std::int64_t kx = 0; kx < g.k; ++kx) {
                std::int64_t ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.w) continue;
                acc += in_at(n, ci, iy, ix) * ker[((co * g.cin + ci) * g.k + ky) * g.k + kx];
              }
            }
          out[static_cast<std::size_t>(((n * g.cout + co) * g.oh + oy) * g.ow + ox)] = acc;
        }
  Tensor o = Tensor::from({g.batch, g.cout, g.oh, g.ow}, std::move(out));
  if (needs_record(tape, {&input, &kernel})) {
    Tensor ic = input, kc = kernel, oc = o;
    tape.record(o, [ic, kc, oc, g]() mutable {
      const double* og = oc.grad().data();
      const double* in2 = ic.values().data();
      const double* ker2 = kc.values().data();
      double* gin = ic.requires_grad() ? ic.grad().data() : nullptr;
      double* gker = kc.requires_grad() ? kc.grad().data() : nullptr;
      for (std::int64_t n = 0; n < g.batch; ++n)
        for (std::int64_t co = 0; co < g.cout; ++co)
          for (std::int64_t oy = 0; oy < g.oh; ++oy)
            for (std::int64_t ox = 0; ox < g.ow; ++ox) {
              double go = og[((n * g.cout + co) * g.oh + oy) * g.ow + ox];
              if (go == 0.0) continue;
              for (std::int64_t ci = 0; ci < g.cin; ++ci)
                for (std::int64_t ky = 0; ky < g.k; ++ky) {
                  std::int64_t iy = oy * g.stride - g.pad + ky;
                  if (iy < 0 || iy >= g.h) continue;
                  for (std::int64_t kx = 0; kx < g.k; ++kx) {
                    std::int64_t ix = ox * g.stride - g.pad + kx;
                    if (ix < 0 || ix >= g.w) continue;
                    std::int64_t in_idx = ((n * g.cin + ci) * g.h + iy) * g.w + ix;
                    std::int64_t k_idx = ((co * g.cin + ci) * g.k + ky) * g.k + kx;
                    if (gin) gin[in_idx] += go * ker2[k_idx];
                    if (gker) gker[k_idx] += go * in2[in_idx];
                  }
                }
            }
    });
  }
  return o;
}

namespace {

struct DeconvGeom {
  std::int64_t batch, cin, h, w, cout, k, stride, pad, opad, oh, ow;
};

DeconvGeom deconv_geom(const Tensor& input, const Tensor& kernel, std::int64_t stride,
                       std::int64_t padding, std::int64_t output_padding) {
  if (input.ndim() != 4) throw DimensionError("deconv2d: input must be [N,C,H,W]");
  if (kernel.ndim() != 4) throw DimensionError("deconv2d: kernel must be [C,Co,k,k]");
  if (kernel.dim(2) != kernel.dim(3)) throw DimensionError("deconv2d: kernel must be square");
  if (stride < 1 || kernel.dim(2) < 1)
    throw DimensionError("deconv2d: kernel and stride must be >= 1");
  if (padding < 0) throw DimensionError("deconv2d: padding must be >= 0");
  if (output_padding < 0 || output_padding >= stride)
    throw DimensionError("deconv2d: output_padding must be in [0, stride)");
  if (kernel.dim(0) != input.dim(1))
    throw DimensionError("deconv2d: kernel expects " + std::to_string(kernel.dim(0)) +
                         " input channels, input has " + std::to_string(input.dim(1)));
  DeconvGeom g;
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(1);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.opad = output_padding;
  g.oh = (g.h - 1) * stride - 2 * padding + g.k + output_padding;
  g.ow = (g.w - 1) * stride - 2 * padding + g.k + output_padding;
  if (g.oh < 1 || g.ow < 1)
    throw DimensionError("deconv2d: output extent < 1 for input " + shape_str(input.shape()) +
                         ", kernel " + shape_str(kernel.shape()));
  return g;
}

}  // namespace

Tensor deconv2d(Tape& tape, const Tensor& input, const Tensor& kernel, std::int64_t stride,
                std::int64_t padding, std::int64_t output_padding) {
  DeconvGeom g = deconv_geom(input, kernel, stride, padding, output_padding);
  std::vector<double> out(static_cast<std::size_t>(g.batch * g.cout * g.oh * g.ow), 0.0);
  const double* in = input.values().data();
  const double* ker = kernel.values().data();
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t ci = 0; ci < g.cin; ++ci)
      for (std::int64_t iy = 0; iy < g.h; ++iy)
        for (std::int64_t ix = 0; ix < g.w; ++ix) {
          double v = in[((n * g.cin + ci) * g.h + iy) * g.w + ix];
          if (v == 0.0) continue;
          for (std::int64_t co = 0; co < g.cout; ++co)
            for (std::int64_t ky = 0; ky < g.k; ++ky) {
              std::int64_t oy = iy * g.stride - g.pad + ky;
              if (oy < 0 || oy >= g.oh) continue;
              for (std::int64_t kx = 0; kx < g.k; ++kx) {
                std::int64_t ox = ix * g.stride - g.pad + kx;
                if (ox < 0 || ox >= g.ow) continue;
                out[static_cast<std::size_t>(((n * g.cout + co) * g.oh + oy) * g.ow + ox)] +=
                    v * ker[((ci * g.cout + co) * g.k + ky) * g.k + kx];
              }
            }
        }
  Tensor o = Tensor::from({g.batch, g.cout, g.oh, g.ow}, std::move(out));
  if (needs_record(tape, {&input, &kernel})) {
    Tensor ic = input, kc = kernel, oc = o;
    tape.record(o, [ic, kc, oc, g]() mutable {
      const double* og = oc.grad().data();
      const double* in2 = ic.values().data();
      const double* ker2 = kc.values().data();
      double* gin = ic.requires_grad() ? ic.grad().data() : nullptr;
      double* gker = kc.requires_grad() ? kc.grad().data() : nullptr;
      for (std::int64_t n = 0; n < g.batch; ++n)
        for (std::int64_t ci = 0; ci < g.cin; ++ci)
          for (std::int64_t iy = 0; iy < g.h; ++iy)
            for (std::int64_t ix = 0; ix < g.w; ++ix) {
              std::int64_t in_idx = ((n * g.cin + ci) * g.h + iy) * g.w + ix;
              double acc = 0.0;
              for (std::int64_t co = 0; co < g.cout; ++co)
                for (std::int64_t ky = 0; ky < g.k; ++ky) {
                  std::int64_t oy = iy * g.stride - g.pad + ky;
                  if (oy < 0 || oy >= g.oh) continue;
                  for (std::int64_t kx = 0; kx < g.k; ++kx) {
                    std::int64_t ox = ix * g.stride - g.pad + kx;
                    if (ox < 0 || ox >= g.ow) continue;
                    std::int64_t o_idx = ((n * g.cout + co) * g.oh + oy) * g.ow + ox;
                    std::int64_t k_idx = ((ci * g.cout + co) * g.k + ky) * g.k + kx;
                    double go = og[o_idx];
                    if (go == 0.0) continue;
                    acc += go * ker2[k_idx];
                    if (gker) gker[k_idx] += go * in2[in_idx];
                  }
                }
              if (gin) gin[in_idx] += acc;
            }
    });
  }
  return o;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw DimensionError("reshape: element count mismatch, " + shape_str(x.shape()) + " -> " +
                         shape_str(new_shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor o = Tensor::from(std::move(new_shape), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc]() mutable {
      auto og = oc.grad();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    });
  }
  return o;
}

Tensor flatten(Tape& tape, const Tensor& x) {
  if (x.ndim() < 2) throw DimensionError("flatten: need at least 2 dims");
  std::int64_t n = x.dim(0);
  return reshape(tape, x, {n, x.numel() / n});
}

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnStats& stats, bool train, double momentum, double eps) {
  std::int64_t channels, batch, inner;
  if (x.ndim() == 2) {
    batch = x.dim(0);
    channels = x.dim(1);
    inner = 1;
  } else if (x.ndim() == 4) {
    batch = x.dim(0);
    channels = x.dim(1);
    inner = x.dim(2) * x.dim(3);
  } else {
    throw DimensionError("batch_norm: x must be [N,F] or [N,C,H,W]");
  }
  if (gamma.numel() != channels || beta.numel() != channels)
    throw DimensionError("batch_norm: gamma/beta width mismatch");
  if (static_cast<std::int64_t>(stats.mean.size()) != channels)
    throw DimensionError("batch_norm: running stats width mismatch");
  if (train && batch < 2)
    throw DimensionError("batch_norm: train mode needs batch size >= 2");

  std::int64_t m = batch * inner;  // reduction set size per channel
  std::vector<double> mean(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> var(static_cast<std::size_t>(channels), 0.0);
  auto xv = x.values();
  auto idx = [&](std::int64_t n, std::int64_t c, std::int64_t j) {
    return static_cast<std::size_t>((n * channels + c) * inner + j);
  };
  if (train) {
    for (std::int64_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t j = 0; j < inner; ++j) s += xv[idx(n, c, j)];
      mean[static_cast<std::size_t>(c)] = s / static_cast<double>(m);
      double v = 0.0;
      for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t j = 0; j < inner; ++j) {
          double d = xv[idx(n, c, j)] - mean[static_cast<std::size_t>(c)];
          v += d * d;
        }
      var[static_cast<std::size_t>(c)] = v / static_cast<double>(m);
    }
    // running stats track the unbiased variance
    for (std::int64_t c = 0; c < channels; ++c) {
      double unbiased = m > 1 ? var[static_cast<std::size_t>(c)] * static_cast<double>(m) /
                                    static_cast<double>(m - 1)
                              : var[static_cast<std::size_t>(c)];
      stats.mean[static_cast<std::size_t>(c)] =
          (1.0 - momentum) * stats.mean[static_cast<std::size_t>(c)] +
          momentum * mean[static_cast<std::size_t>(c)];
      stats.var[static_cast<std::size_t>(c)] =
          (1.0 - momentum) * stats.var[static_cast<std::size_t>(c)] + momentum * unbiased;
    }
  } else {
    mean = stats.mean;
    var = stats.var;
  }

  std::vector<double> inv_std(static_cast<std::size_t>(channels));
  for (std::int64_t c = 0; c < channels; ++c)
    inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);

  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> xhat(xv.size());
  std::vector<double> out(xv.size());
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t c = 0; c < channels; ++c) {
      std::size_t cs = static_cast<std::size_t>(c);
      for (std::int64_t j = 0; j < inner; ++j) {
        std::size_t i = idx(n, c, j);
        xhat[i] = (xv[i] - mean[cs]) * inv_std[cs];
        out[i] = gv[cs] * xhat[i] + bv[cs];
      }
    }
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x, &gamma, &beta})) {
    Tensor xc = x, gc = gamma, bc = beta, oc = o;
    auto xhat_s = std::make_shared<std::vector<double>>(std::move(xhat));
    auto inv_s = std::make_shared<std::vector<double>>(std::move(inv_std));
    tape.record(o, [xc, gc, bc, oc, xhat_s, inv_s, batch, channels, inner, m, train]() mutable {
      auto og = oc.grad();
      auto gv2 = gc.values();
      const auto& xh = *xhat_s;
      const auto& is = *inv_s;
      auto idx2 = [&](std::int64_t n, std::int64_t c, std::int64_t j) {
        return static_cast<std::size_t>((n * channels + c) * inner + j);
      };
      for (std::int64_t c = 0; c < channels; ++c) {
        std::size_t cs = static_cast<std::size_t>(c);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::int64_t n = 0; n < batch; ++n)
          for (std::int64_t j = 0; j < inner; ++j) {
            std::size_t i = idx2(n, c, j);
            sum_dy += og[i];
            sum_dy_xhat += og[i] * xh[i];
          }
        if (gc.requires_grad()) gc.grad()[cs] += sum_dy_xhat;
        if (bc.requires_grad()) bc.grad()[cs] += sum_dy;
        if (xc.requires_grad()) {
          auto gx = xc.grad();
          double inv_m = 1.0 / static_cast<double>(m);
          for (std::int64_t n = 0; n < batch; ++n)
            for (std::int64_t j = 0; j < inner; ++j) {
              std::size_t i = idx2(n, c, j);
              if (train) {
                gx[i] += gv2[cs] * is[cs] *
                         (og[i] - inv_m * sum_dy - xh[i] * inv_m * sum_dy_xhat);
              } else {
                gx[i] += gv2[cs] * is[cs] * og[i];
              }
            }
        }
      }
    });
  }
  return o;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
  if (!train || p == 0.0) {
    // identity; still recorded so gradient flows untouched
    return scale(tape, x, 1.0);
  }
  auto xv = x.values();
  double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double mi = rng.uniform() < p ? 0.0 : keep_scale;
    (*mask)[i] = mi;
    out[i] = xv[i] * mi;
  }
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc, mask]() mutable {
      auto og = oc.grad();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * (*mask)[i];
    });
  }
  return o;
}

Tensor mse_per_sample(Tape& tape, const Tensor& recon, const Tensor& input) {
  check_same_shape(recon, input, "mse_per_sample");
  if (recon.ndim() < 1) throw DimensionError("mse_per_sample: need a batch dimension");
  std::int64_t batch = recon.dim(0);
  std::int64_t feat = recon.numel() / batch;
  auto rv = recon.values();
  auto iv = input.values();
  std::vector<double> out(static_cast<std::size_t>(batch), 0.0);
  for (std::int64_t n = 0; n < batch; ++n) {
    double s = 0.0;
    for (std::int64_t j = 0; j < feat; ++j) {
      double d = rv[static_cast<std::size_t>(n * feat + j)] - iv[static_cast<std::size_t>(n * feat + j)];
      s += d * d;
    }
    out[static_cast<std::size_t>(n)] = s / static_cast<double>(feat);
  }
  Tensor o = Tensor::from({batch}, std::move(out));
  if (needs_record(tape, {&recon, &input})) {
    Tensor rc = recon, ic = input, oc = o;
    tape.record(o, [rc, ic, oc, batch, feat]() mutable {
      auto og = oc.grad();
      auto rv2 = rc.values();
      auto iv2 = ic.values();
      double inv_feat = 1.0 / static_cast<double>(feat);
      if (rc.requires_grad()) {
        auto g = rc.grad();
        for (std::int64_t n = 0; n < batch; ++n)
          for (std::int64_t j = 0; j < feat; ++j) {
            std::size_t i = static_cast<std::size_t>(n * feat + j);
            g[i] += og[static_cast<std::size_t>(n)] * 2.0 * (rv2[i] - iv2[i]) * inv_feat;
          }
      }
      if (ic.requires_grad()) {
        auto g = ic.grad();
        for (std::int64_t n = 0; n < batch; ++n)
          for (std::int64_t j = 0; j < feat; ++j) {
            std::size_t i = static_cast<std::size_t>(n * feat + j);
            g[i] -= og[static_cast<std::size_t>(n)] * 2.0 * (rv2[i] - iv2[i]) * inv_feat;
          }
      }
    });
  }
  return o;
}

Tensor mean_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  double inv_n = 1.0 / static_cast<double>(x.numel());
  Tensor o = Tensor::scalar(s * inv_n);
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc, inv_n]() mutable {
      double go = oc.grad()[0];
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * inv_n;
    });
  }
  return o;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor o = Tensor::scalar(s);
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc]() mutable {
      double go = oc.grad()[0];
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
    });
  }
  return o;
}

Tensor grl(Tape& tape, const Tensor& x, double coefficient) {
  if (coefficient < 0.0) throw ConfigError("grl: coefficient must be nonnegative");
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor o = Tensor::from(x.shape(), std::move(out));
  if (needs_record(tape, {&x})) {
    Tensor xc = x, oc = o;
    tape.record(o, [xc, oc, coefficient]() mutable {
      auto og = oc.grad();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= coefficient * og[i];
    });
  }
  return o;
}

}  // namespace adt
