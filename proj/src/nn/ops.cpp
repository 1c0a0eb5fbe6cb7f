#include "textres/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <memory>
#include <cmath>
#include <numbers>

#include "textres/core/error.hpp"
#include "textres/core/image.hpp"

namespace textres::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

void accumulate(Graph& g, Var v, const Tensor& delta) {
  if (v.valid() && g.requires_grad(v)) g.grad_ref(v) += delta;
}

void check_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.same_shape(b), ErrorKind::InvalidInput,
          std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

struct ConvGeometry {
  int h, w, cin, k, stride, pad, out_h, out_w, cout;
};

void im2col(const Tensor& x, const ConvGeometry& geo, RowMat& cols) {
  cols.setZero(static_cast<Eigen::Index>(geo.out_h) * geo.out_w, geo.k * geo.k * geo.cin);
  for (int oy = 0; oy < geo.out_h; ++oy)
    for (int ox = 0; ox < geo.out_w; ++ox) {
      double* row = cols.row(static_cast<Eigen::Index>(oy) * geo.out_w + ox).data();
      for (int ky = 0; ky < geo.k; ++ky) {
        const int iy = oy * geo.stride - geo.pad + ky;
        if (iy < 0 || iy >= geo.h) continue;
        for (int kx = 0; kx < geo.k; ++kx) {
          const int ix = ox * geo.stride - geo.pad + kx;
          if (ix < 0 || ix >= geo.w) continue;
          const double* src = x.pixel(iy, ix);
          std::copy(src, src + geo.cin, row + (ky * geo.k + kx) * geo.cin);
        }
      }
    }
}

void col2im(const RowMat& dcols, const ConvGeometry& geo, Tensor& dx) {
  for (int oy = 0; oy < geo.out_h; ++oy)
    for (int ox = 0; ox < geo.out_w; ++ox) {
      const double* row = dcols.row(static_cast<Eigen::Index>(oy) * geo.out_w + ox).data();
      for (int ky = 0; ky < geo.k; ++ky) {
        const int iy = oy * geo.stride - geo.pad + ky;
        if (iy < 0 || iy >= geo.h) continue;
        for (int kx = 0; kx < geo.k; ++kx) {
          const int ix = ox * geo.stride - geo.pad + kx;
          if (ix < 0 || ix >= geo.w) continue;
          double* dst = dx.pixel(iy, ix);
          const double* src = row + (ky * geo.k + kx) * geo.cin;
          for (int c = 0; c < geo.cin; ++c) dst[c] += src[c];
        }
      }
    }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Var add(Graph& g, Var a, Var b) {
  check_shape(g.value(a), g.value(b), "add");
  return g.record(g.value(a) + g.value(b), {a, b}, [a, b](Graph& gr, const Tensor& dy) {
    accumulate(gr, a, dy);
    accumulate(gr, b, dy);
  });
}

Var sub(Graph& g, Var a, Var b) {
  check_shape(g.value(a), g.value(b), "sub");
  return g.record(g.value(a) - g.value(b), {a, b}, [a, b](Graph& gr, const Tensor& dy) {
    accumulate(gr, a, dy);
    accumulate(gr, b, dy * -1.0);
  });
}

Var scale(Graph& g, Var a, double s) {
  return g.record(g.value(a) * s, {a}, [a, s](Graph& gr, const Tensor& dy) { accumulate(gr, a, dy * s); });
}

Var mul_scalar(Graph& g, Var a, Var s) {
  require(g.value(s).size() == 1, ErrorKind::InvalidInput, "mul_scalar: scale must have one element");
  const double sv = g.value(s)[0];
  return g.record(g.value(a) * sv, {a, s}, [a, s, sv](Graph& gr, const Tensor& dy) {
    accumulate(gr, a, dy * sv);
    if (gr.requires_grad(s)) gr.grad_ref(s)[0] += dot(dy, gr.value(a));
  });
}

Var scaled_residual(Graph& g, Var x, Var alpha, Var branch) {
  const Tensor& xv = g.value(x);
  const Tensor& bv = g.value(branch);
  require(xv.same_shape(bv), ErrorKind::InvalidInput, "scaled_residual: shape mismatch");
  require(g.value(alpha).size() == 1, ErrorKind::InvalidInput, "scaled_residual: alpha must be a scalar");
  const double a = g.value(alpha)[0];
  Tensor out = xv;
  if (a != 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * bv[i];
  return g.record(std::move(out), {x, alpha, branch}, [x, alpha, branch, a](Graph& gr, const Tensor& dy) {
    if (gr.requires_grad(x)) gr.grad_ref(x) += dy;
    if (gr.requires_grad(alpha)) gr.grad_ref(alpha)[0] += dot(dy, gr.value(branch));
    if (a != 0.0 && gr.requires_grad(branch)) gr.grad_ref(branch) += dy * a;
  });
}

Var reshape(Graph& g, Var a, std::vector<int> shape) {
  Tensor out = g.value(a).reshaped(std::move(shape));
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& dy) {
    accumulate(gr, a, dy.reshaped(gr.value(a).shape()));
  });
}

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Tensor& W = g.value(weight);
  const Tensor& xv = g.value(x);
  require(W.rank() == 2 && static_cast<std::size_t>(W.dim(1)) == xv.size(), ErrorKind::InvalidInput,
          "linear: weight " + W.shape_string() + " does not accept input of size " + std::to_string(xv.size()));
  const int m = W.dim(0), n = W.dim(1);
  Tensor y({m});
  MapVec(y.data(), m).noalias() = ConstMapMat(W.data(), m, n) * ConstMapVec(xv.data(), n);
  if (bias.valid()) {
    require(g.value(bias).size() == static_cast<std::size_t>(m), ErrorKind::InvalidInput, "linear: bias size");
    y += g.value(bias);
  }
  return g.record(std::move(y), {x, weight, bias}, [x, weight, bias, m, n](Graph& gr, const Tensor& dy) {
    ConstMapVec dyv(dy.data(), m);
    if (gr.requires_grad(weight)) {
      const Tensor& xv2 = gr.value(x);
      MapMat(gr.grad_ref(weight).data(), m, n).noalias() += dyv * ConstMapVec(xv2.data(), n).transpose();
    }
    if (bias.valid() && gr.requires_grad(bias)) gr.grad_ref(bias) += dy;
    if (gr.requires_grad(x)) {
      const Tensor& W2 = gr.value(weight);
      MapVec(gr.grad_ref(x).data(), n).noalias() += ConstMapMat(W2.data(), m, n).transpose() * dyv;
    }
  });
}

Var matmul(Graph& g, Var a, Var b, bool ta, bool tb) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.rank() == 2 && B.rank() == 2, ErrorKind::InvalidInput, "matmul: rank-2 operands required");
  ConstMapMat Am(A.data(), A.dim(0), A.dim(1));
  ConstMapMat Bm(B.data(), B.dim(0), B.dim(1));
  const int m = ta ? A.dim(1) : A.dim(0);
  const int ka = ta ? A.dim(0) : A.dim(1);
  const int kb = tb ? B.dim(1) : B.dim(0);
  const int n = tb ? B.dim(0) : B.dim(1);
  require(ka == kb, ErrorKind::InvalidInput, "matmul: inner dimensions differ");
  Tensor out({m, n});
  MapMat C(out.data(), m, n);
  if (!ta && !tb) C.noalias() = Am * Bm;
  else if (ta && !tb) C.noalias() = Am.transpose() * Bm;
  else if (!ta && tb) C.noalias() = Am * Bm.transpose();
  else C.noalias() = Am.transpose() * Bm.transpose();
  return g.record(std::move(out), {a, b}, [a, b, ta, tb, m, n](Graph& gr, const Tensor& dy) {
    const Tensor& A2 = gr.value(a);
    const Tensor& B2 = gr.value(b);
    ConstMapMat Am2(A2.data(), A2.dim(0), A2.dim(1));
    ConstMapMat Bm2(B2.data(), B2.dim(0), B2.dim(1));
    ConstMapMat dC(dy.data(), m, n);
    // op(A) = A or A^T; d op(A) = dC op(B)^T, d op(B) = op(A)^T dC.
    if (gr.requires_grad(a)) {
      MapMat dA(gr.grad_ref(a).data(), A2.dim(0), A2.dim(1));
      const RowMat dopA = tb ? RowMat(dC * Bm2) : RowMat(dC * Bm2.transpose());
      if (ta) dA += dopA.transpose();
      else dA += dopA;
    }
    if (gr.requires_grad(b)) {
      MapMat dB(gr.grad_ref(b).data(), B2.dim(0), B2.dim(1));
      const RowMat dopB = ta ? RowMat(Am2 * dC) : RowMat(Am2.transpose() * dC);
      if (tb) dB += dopB.transpose();
      else dB += dopB;
    }
  });
}

Var softmax_rows(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  require(A.rank() == 2, ErrorKind::InvalidInput, "softmax_rows: rank-2 input required");
  const int rows = A.dim(0), cols = A.dim(1);
  Tensor out(A.shape());
  for (int r = 0; r < rows; ++r) {
    double mx = A[static_cast<std::size_t>(r) * cols];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, A[static_cast<std::size_t>(r) * cols + c]);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      out[i] = std::exp(A[i] - mx);
      s += out[i];
    }
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] /= s;
  }
  Tensor y = out;
  return g.record(std::move(out), {a}, [a, y, rows, cols](Graph& gr, const Tensor& dy) {
    Tensor dx(y.shape());
    for (int r = 0; r < rows; ++r) {
      double d = 0.0;
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        d += dy[i] * y[i];
      }
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        dx[i] = y[i] * (dy[i] - d);
      }
    }
    accumulate(gr, a, dx);
  });
}

Var gelu(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * normal_cdf(xv[i]);
  return g.record(std::move(y), {x}, [x](Graph& gr, const Tensor& dy) {
    const Tensor& xv2 = gr.value(x);
    Tensor dx(xv2.shape());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv2.size(); ++i) {
      const double v = xv2[i];
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] = dy[i] * (normal_cdf(v) + v * pdf);
    }
    accumulate(gr, x, dx);
  });
}

Var conv2d(Graph& g, Var x, Var weight, Var bias, int stride, int pad) {
  const Tensor& xv = g.value(x);
  const Tensor& W = g.value(weight);
  require(xv.rank() == 3 && W.rank() == 4 && W.dim(0) == W.dim(1) && W.dim(2) == xv.channels(),
          ErrorKind::InvalidInput, "conv2d: weight " + W.shape_string() + " vs input " + xv.shape_string());
  ConvGeometry geo{xv.height(), xv.width(), xv.channels(), W.dim(0), stride, pad, 0, 0, W.dim(3)};
  geo.out_h = (geo.h + 2 * pad - geo.k) / stride + 1;
  geo.out_w = (geo.w + 2 * pad - geo.k) / stride + 1;
  require(geo.out_h > 0 && geo.out_w > 0, ErrorKind::InvalidInput, "conv2d: input too small");
  const int patch = geo.k * geo.k * geo.cin;
  const bool pointwise = geo.k == 1 && stride == 1 && pad == 0;

  auto cols = std::make_shared<RowMat>();
  if (!pointwise) im2col(xv, geo, *cols);
  Tensor out = Tensor::hwc(geo.out_h, geo.out_w, geo.cout);
  const Eigen::Index npix = static_cast<Eigen::Index>(geo.out_h) * geo.out_w;
  MapMat Y(out.data(), npix, geo.cout);
  ConstMapMat Wm(W.data(), patch, geo.cout);
  if (pointwise) Y.noalias() = ConstMapMat(xv.data(), npix, patch) * Wm;
  else Y.noalias() = *cols * Wm;
  if (bias.valid()) {
    const Tensor& b = g.value(bias);
    require(b.size() == static_cast<std::size_t>(geo.cout), ErrorKind::InvalidInput, "conv2d: bias size");
    Y.rowwise() += ConstMapVec(b.data(), geo.cout).transpose();
  }
  return g.record(std::move(out), {x, weight, bias},
                  [x, weight, bias, geo, cols, pointwise, patch, npix](Graph& gr, const Tensor& dy) {
                    ConstMapMat dY(dy.data(), npix, geo.cout);
                    const Tensor& xv2 = gr.value(x);
                    if (gr.requires_grad(weight)) {
                      MapMat dW(gr.grad_ref(weight).data(), patch, geo.cout);
                      if (pointwise) dW.noalias() += ConstMapMat(xv2.data(), npix, patch).transpose() * dY;
                      else dW.noalias() += cols->transpose() * dY;
                    }
                    if (bias.valid() && gr.requires_grad(bias))
                      MapVec(gr.grad_ref(bias).data(), geo.cout) += dY.colwise().sum().transpose();
                    if (gr.requires_grad(x)) {
                      const Tensor& W2 = gr.value(weight);
                      ConstMapMat Wm2(W2.data(), patch, geo.cout);
                      if (pointwise) {
                        MapMat(gr.grad_ref(x).data(), npix, patch).noalias() += dY * Wm2.transpose();
                      } else {
                        RowMat dcols = dY * Wm2.transpose();
                        col2im(dcols, geo, gr.grad_ref(x));
                      }
                    }
                  });
}

Var concat_channels(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.rank() == 3 && B.rank() == 3 && A.height() == B.height() && A.width() == B.width(),
          ErrorKind::InvalidInput, "concat_channels: spatial dims differ");
  const int h = A.height(), w = A.width(), ca = A.channels(), cb = B.channels();
  Tensor out = Tensor::hwc(h, w, ca + cb);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::copy(A.pixel(y, x), A.pixel(y, x) + ca, out.pixel(y, x));
      std::copy(B.pixel(y, x), B.pixel(y, x) + cb, out.pixel(y, x) + ca);
    }
  return g.record(std::move(out), {a, b}, [a, b, h, w, ca, cb](Graph& gr, const Tensor& dy) {
    if (gr.requires_grad(a)) {
      Tensor& da = gr.grad_ref(a);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < ca; ++c) da(y, x, c) += dy(y, x, c);
    }
    if (gr.requires_grad(b)) {
      Tensor& db = gr.grad_ref(b);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < cb; ++c) db(y, x, c) += dy(y, x, ca + c);
    }
  });
}

Var upsample_nearest2(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  const int h = xv.height(), w = xv.width(), c = xv.channels();
  Tensor out = Tensor::hwc(2 * h, 2 * w, c);
  for (int y = 0; y < 2 * h; ++y)
    for (int xx = 0; xx < 2 * w; ++xx)
      for (int ch = 0; ch < c; ++ch) out(y, xx, ch) = xv(y / 2, xx / 2, ch);
  return g.record(std::move(out), {x}, [x, h, w, c](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_ref(x);
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        for (int ch = 0; ch < c; ++ch) dx(y / 2, xx / 2, ch) += dy(y, xx, ch);
  });
}

Var resize_bilinear(Graph& g, Var x, int out_h, int out_w) {
  const Tensor& xv = g.value(x);
  const int h = xv.height(), w = xv.width(), c = xv.channels();
  if (h == out_h && w == out_w) return x;
  Tensor out = textres::resize_bilinear(xv, out_h, out_w);
  return g.record(std::move(out), {x}, [x, h, w, c, out_h, out_w](Graph& gr, const Tensor& dy) {
    // Adjoint of the same half-pixel interpolation used in the forward pass.
    Tensor& dx = gr.grad_ref(x);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int xx = 0; xx < out_w; ++xx) {
        const double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        for (int ch = 0; ch < c; ++ch) {
          const double d = dy(y, xx, ch);
          dx(y0, x0, ch) += d * (1 - wy) * (1 - wx);
          dx(y0, x1, ch) += d * (1 - wy) * wx;
          dx(y1, x0, ch) += d * wy * (1 - wx);
          dx(y1, x1, ch) += d * wy * wx;
        }
      }
    }
  });
}

Var gather_pixels(Graph& g, Var x, const std::vector<int>& src, int out_h, int out_w) {
  const Tensor& xv = g.value(x);
  const int c = xv.channels();
  const int npix = xv.height() * xv.width();
  require(src.size() == static_cast<std::size_t>(out_h) * out_w, ErrorKind::InternalError,
          "gather_pixels: index count does not match output size");
  Tensor out = Tensor::hwc(out_h, out_w, c);
  for (std::size_t i = 0; i < src.size(); ++i) {
    require(src[i] >= 0 && src[i] < npix, ErrorKind::InternalError, "gather_pixels: source index out of bounds");
    std::copy(xv.data() + static_cast<std::size_t>(src[i]) * c, xv.data() + static_cast<std::size_t>(src[i] + 1) * c,
              out.data() + i * c);
  }
  return g.record(std::move(out), {x}, [x, src, c](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_ref(x);
    for (std::size_t i = 0; i < src.size(); ++i)
      for (int ch = 0; ch < c; ++ch) dx[static_cast<std::size_t>(src[i]) * c + ch] += dy[i * c + ch];
  });
}

Var sum(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  double s = 0.0;
  for (double v : av.values()) s += v;
  return g.record(Tensor({1}, s), {a}, [a](Graph& gr, const Tensor& dy) {
    Tensor& da = gr.grad_ref(a);
    for (double& v : da.values()) v += dy[0];
  });
}

Var mean_square(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  const double n = static_cast<double>(av.size());
  return g.record(Tensor({1}, dot(av, av) / n), {a}, [a, n](Graph& gr, const Tensor& dy) {
    accumulate(gr, a, gr.value(a) * (2.0 * dy[0] / n));
  });
}

Var mean_abs_diff(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  check_shape(av, bv, "mean_abs_diff");
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  return g.record(Tensor({1}, s / n), {a, b}, [a, b, n](Graph& gr, const Tensor& dy) {
    const Tensor& av2 = gr.value(a);
    const Tensor& bv2 = gr.value(b);
    Tensor d(av2.shape());
    for (std::size_t i = 0; i < av2.size(); ++i) {
      const double diff = av2[i] - bv2[i];
      d[i] = diff > 0 ? dy[0] / n : (diff < 0 ? -dy[0] / n : 0.0);
    }
    accumulate(gr, a, d);
    accumulate(gr, b, d * -1.0);
  });
}

}  // namespace textres::nn
