/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dynpet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dynpet {

namespace {

bool want_tape(std::initializer_list<Tensor> ins) {
  if (!Tape::active()) return false;
  for (const Tensor& t : ins)
    if (t.defined() && t.track()) return true;
  return false;
}

Tensor finish(std::vector<int> shape, std::vector<double> data, bool tracked) {
  Tensor o = Tensor::from(std::move(shape), std::move(data));
  if (tracked) o.set_track(true);
  return o;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

template <class F, class DF>
Tensor unary(const char* name, const Tensor& a, F f, DF df) {
  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const bool tr = want_tape({a});
  Tensor o = finish(a.shape(), std::move(y), tr);
  if (tr) {
    Tape::active()->record(name, o, [a, o, df] {
      if (!o.has_grad() || !a.track()) return;
      const auto& g = o.impl()->grad;
      const auto& x = a.data();
      const auto& y = o.data();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
  }
  return o;
}

// inclusive output range such that 0 <= o*stride - pad + k < in_extent
struct TapRange {
  int lo, hi;
};

TapRange tap_range(int in_extent, int out_extent, int stride, int pad, int k) {
  int lo = pad - k;
  lo = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  int hi = in_extent - 1 + pad - k;
  if (hi < 0) return {1, 0};
  hi /= stride;
  if (hi > out_extent - 1) hi = out_extent - 1;
  return {lo, hi};
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto& xa = a.data();
  const auto& xb = b.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] + xb[i];
  const bool tr = want_tape({a, b});
  Tensor o = finish(a.shape(), std::move(y), tr);
  if (tr) {
    Tape::active()->record("add", o, [a, b, o] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      if (a.track()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.track()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return o;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto& xa = a.data();
  const auto& xb = b.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] - xb[i];
  const bool tr = want_tape({a, b});
  Tensor o = finish(a.shape(), std::move(y), tr);
  if (tr) {
    Tape::active()->record("sub", o, [a, b, o] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      if (a.track()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.track()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return o;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto& xa = a.data();
  const auto& xb = b.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] * xb[i];
  const bool tr = want_tape({a, b});
  Tensor o = finish(a.shape(), std::move(y), tr);
  if (tr) {
    Tape::active()->record("mul", o, [a, b, o] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      const auto& xa = a.data();
      const auto& xb = b.data();
      if (a.track()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
      }
      if (b.track()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
      }
    });
  }
  return o;
}

Tensor scale(const Tensor& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; },
               [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; },
               [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary("leaky_relu", a,
               [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0.0)) shape_error("log", "nonpositive input entry");
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) shape_error("clamp", "lo > hi");
  return unary("clamp", a,
               [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
               [lo, hi](double x, double) {
                 return (x > lo && x < hi) ? 1.0 : 0.0;
               });
}

Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), a.data());
}

// ---------------------------------------------------------------------------
// reductions and layout

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const bool tr = want_tape({a});
  Tensor o = finish({1}, {s}, tr);
  if (tr) {
    Tape::active()->record("sum", o, [a, o] {
      if (!o.has_grad() || !a.track()) return;
      const double g = o.impl()->grad[0];
      auto& ga = a.grad();
      for (double& v : ga) v += g;
    });
  }
  return o;
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  const bool tr = want_tape({a});
  Tensor o = finish({1}, {s * inv}, tr);
  if (tr) {
    Tape::active()->record("mean", o, [a, o, inv] {
      if (!o.has_grad() || !a.track()) return;
      const double g = o.impl()->grad[0] * inv;
      auto& ga = a.grad();
      for (double& v : ga) v += g;
    });
  }
  return o;
}

Tensor row_mean(const Tensor& a) {
  if (a.rank() != 2) shape_error("row_mean", "expects rank 2, got " + shape_str(a.shape()));
  const int r = a.dim(0), c = a.dim(1);
  const auto& x = a.data();
  std::vector<double> y(r, 0.0);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += x[i * c + j];
    y[i] = s / c;
  }
  const bool tr = want_tape({a});
  Tensor o = finish({r}, std::move(y), tr);
  if (tr) {
    Tape::active()->record("row_mean", o, [a, o, r, c] {
      if (!o.has_grad() || !a.track()) return;
      const auto& g = o.impl()->grad;
      auto& ga = a.grad();
      for (int i = 0; i < r; ++i) {
        const double gi = g[i] / c;
        for (int j = 0; j < c; ++j) ga[i * c + j] += gi;
      }
    });
  }
  return o;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  if (n != a.numel())
    shape_error("reshape", "cannot view " + shape_str(a.shape()) + " as " +
                               shape_str(shape));
  const bool tr = want_tape({a});
  Tensor o = finish(std::move(shape), a.data(), tr);
  if (tr) {
    Tape::active()->record("reshape", o, [a, o] {
      if (!o.has_grad() || !a.track()) return;
      const auto& g = o.impl()->grad;
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return o;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const auto& first = parts[0].shape();
  int total0 = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank())
      shape_error("concat", "rank mismatch " + shape_str(p.shape()) + " vs " +
                                shape_str(first));
    for (int ax = 1; ax < p.rank(); ++ax)
      if (p.dim(ax) != first[ax])
        shape_error("concat", "extent mismatch on axis " + std::to_string(ax) +
                                  ": " + shape_str(p.shape()) + " vs " +
                                  shape_str(first));
    total0 += p.dim(0);
  }
  std::vector<int> oshape = first;
  oshape[0] = total0;
  std::vector<double> y;
  y.reserve(static_cast<std::size_t>(total0) * (parts[0].numel() / first[0]));
  for (const Tensor& p : parts)
    y.insert(y.end(), p.data().begin(), p.data().end());
  bool tr = false;
  if (Tape::active())
    for (const Tensor& p : parts)
      if (p.track()) tr = true;
  Tensor o = finish(std::move(oshape), std::move(y), tr);
  if (tr) {
    std::vector<Tensor> held = parts;
    Tape::active()->record("concat", o, [held, o] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      std::size_t offset = 0;
      for (const Tensor& p : held) {
        const std::size_t n = p.data().size();
        if (p.track()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
        }
        offset += n;
      }
    });
  }
  return o;
}

Tensor slice0(const Tensor& a, int begin, int end) {
  if (a.rank() < 1 || begin < 0 || end > a.dim(0) || begin >= end)
    shape_error("slice0", "invalid range [" + std::to_string(begin) + "," +
                              std::to_string(end) + ") on axis 0 of " +
                              shape_str(a.shape()));
  const std::size_t row = a.numel() / a.dim(0);
  std::vector<int> oshape = a.shape();
  oshape[0] = end - begin;
  std::vector<double> y(a.data().begin() + begin * row,
                        a.data().begin() + end * row);
  const bool tr = want_tape({a});
  Tensor o = finish(std::move(oshape), std::move(y), tr);
  if (tr) {
    Tape::active()->record("slice0", o, [a, o, begin, row] {
      if (!o.has_grad() || !a.track()) return;
      const auto& g = o.impl()->grad;
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[begin * row + i] += g[i];
    });
  }
  return o;
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2)
    shape_error("transpose2d", "expects rank 2, got " + shape_str(a.shape()));
  const int r = a.dim(0), c = a.dim(1);
  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  const bool tr = want_tape({a});
  Tensor o = finish({c, r}, std::move(y), tr);
  if (tr) {
    Tape::active()->record("transpose2d", o, [a, o, r, c] {
      if (!o.has_grad() || !a.track()) return;
      const auto& g = o.impl()->grad;
      auto& ga = a.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// 3-D convolution

namespace {

void conv3d_check(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                  int pad) {
  if (x.rank() != 4)
    shape_error("conv3d", "input must be [C,X,Y,Z], got " + shape_str(x.shape()));
  if (w.rank() != 5)
    shape_error("conv3d",
                "weight must be [Cout,Cin,K,K,K], got " + shape_str(w.shape()));
  if (w.dim(2) != w.dim(3) || w.dim(2) != w.dim(4))
    shape_error("conv3d", "kernel must be cubic, got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(0))
    shape_error("conv3d", "input channels " + std::to_string(x.dim(0)) +
                              " != weight input channels " +
                              std::to_string(w.dim(1)) + " (weight axis 1)");
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    shape_error("conv3d", "bias must be [Cout=" + std::to_string(w.dim(0)) +
                              "], got " + shape_str(b.shape()));
  if (stride != 1 && stride != 2)
    shape_error("conv3d", "stride must be 1 or 2, got " + std::to_string(stride));
  if (pad < 0) shape_error("conv3d", "negative padding");
  for (int ax = 1; ax <= 3; ++ax)
    if (x.dim(ax) + 2 * pad - w.dim(2) < 0)
      shape_error("conv3d", "kernel larger than padded input on axis " +
                                std::to_string(ax));
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  conv3d_check(x, w, b, stride, pad);
  const int Cin = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
  const int Cout = w.dim(0), K = w.dim(2);
  const int OX = (X + 2 * pad - K) / stride + 1;
  const int OY = (Y + 2 * pad - K) / stride + 1;
  const int OZ = (Z + 2 * pad - K) / stride + 1;
  const std::int64_t ovox = static_cast<std::int64_t>(OX) * OY * OZ;

  std::vector<double> out(static_cast<std::size_t>(Cout) * ovox);
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  for (int oc = 0; oc < Cout; ++oc)
    std::fill(out.begin() + oc * ovox, out.begin() + (oc + 1) * ovox, bv[oc]);

  for (int oc = 0; oc < Cout; ++oc) {
    for (int ic = 0; ic < Cin; ++ic) {
      const double* wslab =
          &wv[(static_cast<std::size_t>(oc) * Cin + ic) * K * K * K];
      for (int kx = 0; kx < K; ++kx) {
        const TapRange rx = tap_range(X, OX, stride, pad, kx);
        for (int ky = 0; ky < K; ++ky) {
          const TapRange ry = tap_range(Y, OY, stride, pad, ky);
          for (int kz = 0; kz < K; ++kz) {
            const TapRange rz = tap_range(Z, OZ, stride, pad, kz);
            if (rz.lo > rz.hi) continue;
            const double wt = wslab[(kx * K + ky) * K + kz];
            const int n = rz.hi - rz.lo + 1;
            const int iz0 = rz.lo * stride - pad + kz;
            for (int ox = rx.lo; ox <= rx.hi; ++ox) {
              const int ix = ox * stride - pad + kx;
              for (int oy = ry.lo; oy <= ry.hi; ++oy) {
                const int iy = oy * stride - pad + ky;
                const double* src =
                    &xv[((static_cast<std::size_t>(ic) * X + ix) * Y + iy) * Z +
                        iz0];
                double* dst =
                    &out[((static_cast<std::size_t>(oc) * OX + ox) * OY + oy) *
                             OZ +
                         rz.lo];
                if (stride == 1)
                  for (int i = 0; i < n; ++i) dst[i] += wt * src[i];
                else
                  for (int i = 0; i < n; ++i) dst[i] += wt * src[2 * i];
              }
            }
          }
        }
      }
    }
  }

  const bool tr = want_tape({x, w, b});
  Tensor o = finish({Cout, OX, OY, OZ}, std::move(out), tr);
  if (tr) {
    Tape::active()->record("conv3d", o, [x, w, b, o, stride, pad] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      const int Cin = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
      const int Cout = w.dim(0), K = w.dim(2);
      const int OX = o.dim(1), OY = o.dim(2), OZ = o.dim(3);
      const auto& xv = x.data();
      const auto& wv = w.data();

      if (b.track()) {
        auto& gb = b.grad();
        const std::int64_t ovox = static_cast<std::int64_t>(OX) * OY * OZ;
        for (int oc = 0; oc < Cout; ++oc) {
          double s = 0.0;
          for (std::int64_t i = 0; i < ovox; ++i) s += g[oc * ovox + i];
          gb[oc] += s;
        }
      }

      const bool gi = x.track();
      const bool gw = w.track();
      if (!gi && !gw) return;
      std::vector<double>* gxp = gi ? &x.grad() : nullptr;
      std::vector<double>* gwp = gw ? &w.grad() : nullptr;

      for (int oc = 0; oc < Cout; ++oc) {
        for (int ic = 0; ic < Cin; ++ic) {
          const std::size_t wbase =
              (static_cast<std::size_t>(oc) * Cin + ic) * K * K * K;
          for (int kx = 0; kx < K; ++kx) {
            const TapRange rx = tap_range(X, OX, stride, pad, kx);
            for (int ky = 0; ky < K; ++ky) {
              const TapRange ry = tap_range(Y, OY, stride, pad, ky);
              for (int kz = 0; kz < K; ++kz) {
                const TapRange rz = tap_range(Z, OZ, stride, pad, kz);
                if (rz.lo > rz.hi) continue;
                const int n = rz.hi - rz.lo + 1;
                const int iz0 = rz.lo * stride - pad + kz;
                const double wt = wv[wbase + (kx * K + ky) * K + kz];
                double wacc = 0.0;
                for (int ox = rx.lo; ox <= rx.hi; ++ox) {
                  const int ix = ox * stride - pad + kx;
                  for (int oy = ry.lo; oy <= ry.hi; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    const std::size_t xrow =
                        ((static_cast<std::size_t>(ic) * X + ix) * Y + iy) * Z +
                        iz0;
                    const std::size_t orow =
                        ((static_cast<std::size_t>(oc) * OX + ox) * OY + oy) *
                            OZ +
                        rz.lo;
                    const double* gsrc = &g[orow];
                    if (gw) {
                      const double* xsrc = &xv[xrow];
                      double acc = 0.0;
                      if (stride == 1)
                        for (int i = 0; i < n; ++i) acc += gsrc[i] * xsrc[i];
                      else
                        for (int i = 0; i < n; ++i) acc += gsrc[i] * xsrc[2 * i];
                      wacc += acc;
                    }
                    if (gi) {
                      double* gdst = &(*gxp)[xrow];
                      if (stride == 1)
                        for (int i = 0; i < n; ++i) gdst[i] += wt * gsrc[i];
                      else
                        for (int i = 0; i < n; ++i) gdst[2 * i] += wt * gsrc[i];
                    }
                  }
                }
                if (gw) (*gwp)[wbase + (kx * K + ky) * K + kz] += wacc;
              }
            }
          }
        }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// transposed 3-D convolution (zero padding, upsampling by `stride`)

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride) {
  if (x.rank() != 4)
    shape_error("conv_transpose3d",
                "input must be [C,X,Y,Z], got " + shape_str(x.shape()));
  if (w.rank() != 5)
    shape_error("conv_transpose3d",
                "weight must be [Cin,Cout,K,K,K], got " + shape_str(w.shape()));
  if (w.dim(2) != w.dim(3) || w.dim(2) != w.dim(4))
    shape_error("conv_transpose3d",
                "kernel must be cubic, got " + shape_str(w.shape()));
  if (w.dim(0) != x.dim(0))
    shape_error("conv_transpose3d",
                "input channels " + std::to_string(x.dim(0)) +
                    " != weight input channels " + std::to_string(w.dim(0)) +
                    " (weight axis 0)");
  if (b.rank() != 1 || b.dim(0) != w.dim(1))
    shape_error("conv_transpose3d",
                "bias must be [Cout=" + std::to_string(w.dim(1)) + "], got " +
                    shape_str(b.shape()));
  if (stride < 1)
    shape_error("conv_transpose3d", "stride must be >= 1");

  const int Cin = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
  const int Cout = w.dim(1), K = w.dim(2);
  const int OX = (X - 1) * stride + K;
  const int OY = (Y - 1) * stride + K;
  const int OZ = (Z - 1) * stride + K;
  const std::int64_t ovox = static_cast<std::int64_t>(OX) * OY * OZ;

  std::vector<double> out(static_cast<std::size_t>(Cout) * ovox);
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  for (int oc = 0; oc < Cout; ++oc)
    std::fill(out.begin() + oc * ovox, out.begin() + (oc + 1) * ovox, bv[oc]);

  for (int ic = 0; ic < Cin; ++ic) {
    for (int oc = 0; oc < Cout; ++oc) {
      const double* wslab =
          &wv[(static_cast<std::size_t>(ic) * Cout + oc) * K * K * K];
      for (int kx = 0; kx < K; ++kx) {
        for (int ky = 0; ky < K; ++ky) {
          for (int kz = 0; kz < K; ++kz) {
            const double wt = wslab[(kx * K + ky) * K + kz];
            for (int ix = 0; ix < X; ++ix) {
              const int ox = ix * stride + kx;
              for (int iy = 0; iy < Y; ++iy) {
                const int oy = iy * stride + ky;
                const double* src =
                    &xv[((static_cast<std::size_t>(ic) * X + ix) * Y + iy) * Z];
                double* dst =
                    &out[((static_cast<std::size_t>(oc) * OX + ox) * OY + oy) *
                             OZ +
                         kz];
                for (int iz = 0; iz < Z; ++iz) dst[iz * stride] += wt * src[iz];
              }
            }
          }
        }
      }
    }
  }

  const bool tr = want_tape({x, w, b});
  Tensor o = finish({Cout, OX, OY, OZ}, std::move(out), tr);
  if (tr) {
    Tape::active()->record("conv_transpose3d", o, [x, w, b, o, stride] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      const int Cin = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
      const int Cout = w.dim(1), K = w.dim(2);
      const int OX = o.dim(1), OY = o.dim(2), OZ = o.dim(3);
      const auto& xv = x.data();
      const auto& wv = w.data();

      if (b.track()) {
        auto& gb = b.grad();
        const std::int64_t ovox = static_cast<std::int64_t>(OX) * OY * OZ;
        for (int oc = 0; oc < Cout; ++oc) {
          double s = 0.0;
          for (std::int64_t i = 0; i < ovox; ++i) s += g[oc * ovox + i];
          gb[oc] += s;
        }
      }

      const bool gi = x.track();
      const bool gw = w.track();
      if (!gi && !gw) return;
      std::vector<double>* gxp = gi ? &x.grad() : nullptr;
      std::vector<double>* gwp = gw ? &w.grad() : nullptr;

      for (int ic = 0; ic < Cin; ++ic) {
        for (int oc = 0; oc < Cout; ++oc) {
          const std::size_t wbase =
              (static_cast<std::size_t>(ic) * Cout + oc) * K * K * K;
          for (int kx = 0; kx < K; ++kx) {
            for (int ky = 0; ky < K; ++ky) {
              for (int kz = 0; kz < K; ++kz) {
                const double wt = wv[wbase + (kx * K + ky) * K + kz];
                double wacc = 0.0;
                for (int ix = 0; ix < X; ++ix) {
                  const int ox = ix * stride + kx;
                  for (int iy = 0; iy < Y; ++iy) {
                    const int oy = iy * stride + ky;
                    const std::size_t xrow =
                        ((static_cast<std::size_t>(ic) * X + ix) * Y + iy) * Z;
                    const std::size_t orow =
                        ((static_cast<std::size_t>(oc) * OX + ox) * OY + oy) *
                            OZ +
                        kz;
                    const double* gsrc = &g[orow];
                    if (gw) {
                      const double* xsrc = &xv[xrow];
                      double acc = 0.0;
                      for (int iz = 0; iz < Z; ++iz)
                        acc += xsrc[iz] * gsrc[iz * stride];
                      wacc += acc;
                    }
                    if (gi) {
                      double* gdst = &(*gxp)[xrow];
                      for (int iz = 0; iz < Z; ++iz)
                        gdst[iz] += wt * gsrc[iz * stride];
                    }
                  }
                }
                if (gw) (*gwp)[wbase + (kx * K + ky) * K + kz] += wacc;
              }
            }
          }
        }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// 1-D convolution (stride 1)

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
  if (x.rank() != 2)
    shape_error("conv1d", "input must be [C,T], got " + shape_str(x.shape()));
  if (w.rank() != 3)
    shape_error("conv1d",
                "weight must be [Cout,Cin,K], got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(0))
    shape_error("conv1d", "input channels " + std::to_string(x.dim(0)) +
                              " != weight input channels " +
                              std::to_string(w.dim(1)) + " (weight axis 1)");
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    shape_error("conv1d", "bias must be [Cout=" + std::to_string(w.dim(0)) +
                              "], got " + shape_str(b.shape()));
  if (pad < 0) shape_error("conv1d", "negative padding");
  const int Cin = x.dim(0), T = x.dim(1);
  const int Cout = w.dim(0), K = w.dim(2);
  if (T + 2 * pad - K < 0)
    shape_error("conv1d", "kernel larger than padded input");
  const int OT = T + 2 * pad - K + 1;

  std::vector<double> out(static_cast<std::size_t>(Cout) * OT);
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  for (int oc = 0; oc < Cout; ++oc)
    std::fill(out.begin() + oc * OT, out.begin() + (oc + 1) * OT, bv[oc]);
  for (int oc = 0; oc < Cout; ++oc)
    for (int ic = 0; ic < Cin; ++ic)
      for (int k = 0; k < K; ++k) {
        const double wt = wv[(static_cast<std::size_t>(oc) * Cin + ic) * K + k];
        const TapRange r = tap_range(T, OT, 1, pad, k);
        for (int ot = r.lo; ot <= r.hi; ++ot)
          out[oc * OT + ot] += wt * xv[ic * T + ot - pad + k];
      }

  const bool tr = want_tape({x, w, b});
  Tensor o = finish({Cout, OT}, std::move(out), tr);
  if (tr) {
    Tape::active()->record("conv1d", o, [x, w, b, o, pad] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      const int Cin = x.dim(0), T = x.dim(1);
      const int Cout = w.dim(0), K = w.dim(2);
      const int OT = o.dim(1);
      const auto& xv = x.data();
      const auto& wv = w.data();
      if (b.track()) {
        auto& gb = b.grad();
        for (int oc = 0; oc < Cout; ++oc)
          for (int ot = 0; ot < OT; ++ot) gb[oc] += g[oc * OT + ot];
      }
      const bool gi = x.track();
      const bool gw = w.track();
      if (!gi && !gw) return;
      for (int oc = 0; oc < Cout; ++oc)
        for (int ic = 0; ic < Cin; ++ic)
          for (int k = 0; k < K; ++k) {
            const std::size_t wi =
                (static_cast<std::size_t>(oc) * Cin + ic) * K + k;
            const double wt = wv[wi];
            const TapRange r = tap_range(T, OT, 1, pad, k);
            double wacc = 0.0;
            for (int ot = r.lo; ot <= r.hi; ++ot) {
              const int it = ot - pad + k;
              if (gw) wacc += g[oc * OT + ot] * xv[ic * T + it];
              if (gi) x.grad()[ic * T + it] += wt * g[oc * OT + ot];
            }
            if (gw) w.grad()[wi] += wacc;
          }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// fully connected

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 1)
    shape_error("linear", "input must be a vector, got " + shape_str(x.shape()));
  if (w.rank() != 2)
    shape_error("linear", "weight must be [M,N], got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(0))
    shape_error("linear", "input length " + std::to_string(x.dim(0)) +
                              " != weight columns " + std::to_string(w.dim(1)));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    shape_error("linear", "bias must be [M=" + std::to_string(w.dim(0)) +
                              "], got " + shape_str(b.shape()));
  const int m = w.dim(0), n = w.dim(1);
  const auto& xv = x.data();
  const auto& wv = w.data();
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    double s = b.data()[i];
    const double* row = &wv[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) s += row[j] * xv[j];
    out[i] = s;
  }
  const bool tr = want_tape({x, w, b});
  Tensor o = finish({m}, std::move(out), tr);
  if (tr) {
    Tape::active()->record("linear", o, [x, w, b, o] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      const int m = w.dim(0), n = w.dim(1);
      const auto& xv = x.data();
      const auto& wv = w.data();
      if (b.track()) {
        auto& gb = b.grad();
        for (int i = 0; i < m; ++i) gb[i] += g[i];
      }
      if (w.track()) {
        auto& gw = w.grad();
        for (int i = 0; i < m; ++i) {
          double* row = &gw[static_cast<std::size_t>(i) * n];
          for (int j = 0; j < n; ++j) row[j] += g[i] * xv[j];
        }
      }
      if (x.track()) {
        auto& gx = x.grad();
        for (int i = 0; i < m; ++i) {
          const double* row = &wv[static_cast<std::size_t>(i) * n];
          for (int j = 0; j < n; ++j) gx[j] += g[i] * row[j];
        }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// FiLM

Tensor film(const Tensor& m, const Tensor& gamma, const Tensor& beta) {
  if (m.rank() < 1)
    shape_error("film", "feature map must have a channel axis");
  if (gamma.rank() != 1 || beta.rank() != 1)
    shape_error("film", "gamma/beta must be vectors, got " +
                            shape_str(gamma.shape()) + " and " +
                            shape_str(beta.shape()));
  const int c = m.dim(0);
  if (gamma.dim(0) != c || beta.dim(0) != c)
    shape_error("film", "channel count " + std::to_string(c) +
                            " != modulation length gamma " +
                            std::to_string(gamma.dim(0)) + ", beta " +
                            std::to_string(beta.dim(0)));
  const std::size_t slab = m.numel() / c;
  const auto& mv = m.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  std::vector<double> out(mv.size());
  for (int ch = 0; ch < c; ++ch) {
    const double gm = gv[ch], bt = bv[ch];
    const double* src = &mv[ch * slab];
    double* dst = &out[ch * slab];
    for (std::size_t i = 0; i < slab; ++i) dst[i] = gm * src[i] + bt;
  }
  const bool tr = want_tape({m, gamma, beta});
  Tensor o = finish(m.shape(), std::move(out), tr);
  if (tr) {
    Tape::active()->record("film", o, [m, gamma, beta, o, c, slab] {
      if (!o.has_grad()) return;
      const auto& g = o.impl()->grad;
      const auto& mv = m.data();
      const auto& gv = gamma.data();
      if (m.track()) {
        auto& gm = m.grad();
        for (int ch = 0; ch < c; ++ch) {
          const double s = gv[ch];
          for (std::size_t i = 0; i < slab; ++i)
            gm[ch * slab + i] += s * g[ch * slab + i];
        }
      }
      if (gamma.track()) {
        auto& gg = gamma.grad();
        for (int ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (std::size_t i = 0; i < slab; ++i)
            s += g[ch * slab + i] * mv[ch * slab + i];
          gg[ch] += s;
        }
      }
      if (beta.track()) {
        auto& gb = beta.grad();
        for (int ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (std::size_t i = 0; i < slab; ++i) s += g[ch * slab + i];
          gb[ch] += s;
        }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// LSTM cell, composed from the primitives above

LstmState lstm_cell(const Tensor& x, const LstmState& prev,
                    const LstmWeights& w) {
  if (x.rank() != 1)
    shape_error("lstm_cell", "input must be a vector, got " +
                                 shape_str(x.shape()));
  if (prev.h.rank() != 1 || prev.c.rank() != 1 ||
      prev.h.dim(0) != prev.c.dim(0))
    shape_error("lstm_cell", "state vectors must agree, got h " +
                                 shape_str(prev.h.shape()) + ", c " +
                                 shape_str(prev.c.shape()));
  Tensor z = concat({x, prev.h});
  Tensor i = sigmoid(linear(z, w.wi, w.bi));
  Tensor f = sigmoid(linear(z, w.wf, w.bf));
  Tensor g = tanh(linear(z, w.wg, w.bg));
  Tensor o = sigmoid(linear(z, w.wo, w.bo));
  LstmState next;
  next.c = add(mul(f, prev.c), mul(i, g));
  next.h = mul(o, tanh(next.c));
  return next;
}

}  // namespace dynpet
