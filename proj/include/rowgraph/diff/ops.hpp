#pragma once

// The differentiable primitives used by the backbone, the estimation stages
// and the edge head. Convolutions use "same" zero padding and are lowered to a
// single GEMM through an im2col buffer.

// Small products otherwise take a coefficient-wise path whose summation order
// depends on buffer alignment; the packed kernels give bit-identical results
// wherever the heap puts the operands.
#ifndef EIGEN_GEMM_TO_COEFFBASED_THRESHOLD
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#endif
#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "rowgraph/diff/tensor.hpp"

namespace rowgraph::diff {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Left-to-right sum; Eigen's vectorised reductions peel by address.
template <class M>
typename M::Scalar row_sum(const M& m, Eigen::Index r) {
  typename M::Scalar acc{0};
  for (Eigen::Index c = 0; c < m.cols(); ++c) acc += m(r, c);
  return acc;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// col[(c*k + ky)*k + kx][y*W + x] = x[c][y + ky - k/2][x + kx - k/2], zero outside.
template <class T>
void im2col(const T* src, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, T* col) {
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * plane;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(w, w - dx);
        for (long y = 0; y < h; ++y) {
          T* row = dst + y * w;
          const long sy = y + dy;
          if (sy < 0 || sy >= h || x0 >= x1) {
            std::fill(row, row + w, T{0});
            continue;
          }
          const T* srow = src + (c * height + static_cast<std::size_t>(sy)) * width;
          std::fill(row, row + x0, T{0});
          std::memcpy(row + x0, srow + x0 + dx, static_cast<std::size_t>(x1 - x0) * sizeof(T));
          std::fill(row + x1, row + w, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image grid.
template <class T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t k, T* dst) {
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * plane;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(w, w - dx);
        for (long y = 0; y < h; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* row = src + y * w;
          T* drow = dst + (c * height + static_cast<std::size_t>(sy)) * width + dx;
          for (long x = x0; x < x1; ++x) drow[x] += row[x];
        }
      }
    }
  }
}

}  // namespace detail

// Test hook: when set, conv2d's weight gradient is deliberately wrong so the
// gradient-check harness can prove it catches a broken backward pass.
inline std::atomic<bool>& corrupt_conv2d_backward() {
  static std::atomic<bool> flag{false};
  return flag;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  using detail::require;
  require(x.rank() == 3, "conv2d: input must be [C,H,W], got " + to_string(x.shape()));
  require(w.rank() == 4 && w.dim(2) == w.dim(3),
          "conv2d: weights must be [Cout,Cin,k,k], got " + to_string(w.shape()));
  require(w.dim(2) % 2 == 1, "conv2d: kernel size must be odd");
  require(w.dim(1) == x.dim(0), "conv2d: input has " + std::to_string(x.dim(0)) +
                                    " channels but weights expect " + std::to_string(w.dim(1)));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d: bias must be [Cout]");

  const std::size_t cin = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const auto kk = static_cast<Eigen::Index>(cin * k * k);
  const auto n = static_cast<Eigen::Index>(height * width);

  std::vector<T> col;
  const T* colp = x.data().data();
  if (k > 1) {
    col.resize(static_cast<std::size_t>(kk * n));
    detail::im2col(x.data().data(), cin, height, width, k, col.data());
    colp = col.data();
  }
  std::vector<T> out(cout * height * width);
  {
    detail::MapMat<T> y(out.data(), static_cast<Eigen::Index>(cout), n);
    y.noalias() = detail::ConstMapMat<T>(w.data().data(), static_cast<Eigen::Index>(cout), kk) *
                  detail::ConstMapMat<T>(colp, kk, n);
    for (std::size_t o = 0; o < cout; ++o) y.row(static_cast<Eigen::Index>(o)).array() += b[o];
  }
  col.clear();
  col.shrink_to_fit();

  auto backward = [cin, height, width, cout, k, kk, n](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const auto co = static_cast<Eigen::Index>(cout);
    detail::ConstMapMat<T> g(self.grad.data(), co, n);

    if (wn.requires_grad) {
      std::vector<T> col;
      const T* colp = xn.value.data();
      if (k > 1) {
        col.resize(static_cast<std::size_t>(kk * n));
        detail::im2col(xn.value.data(), cin, height, width, k, col.data());
        colp = col.data();
      }
      detail::MapMat<T> dw(wn.ensure_grad().data(), co, kk);
      if (corrupt_conv2d_backward().load()) {
        dw.noalias() += T{1.5} * (g * detail::ConstMapMat<T>(colp, kk, n).transpose());
      } else {
        dw.noalias() += g * detail::ConstMapMat<T>(colp, kk, n).transpose();
      }
    }
    if (bn.requires_grad) {
      auto& db = bn.ensure_grad();
      for (std::size_t o = 0; o < cout; ++o) db[o] += detail::row_sum(g, static_cast<Eigen::Index>(o));
    }
    if (xn.requires_grad) {
      detail::ConstMapMat<T> wm(wn.value.data(), co, kk);
      if (k == 1) {
        detail::MapMat<T> dx(xn.ensure_grad().data(), kk, n);
        dx.noalias() += wm.transpose() * g;
      } else {
        std::vector<T> dcol(static_cast<std::size_t>(kk * n));
        detail::MapMat<T>(dcol.data(), kk, n).noalias() = wm.transpose() * g;
        detail::col2im_add(dcol.data(), cin, height, width, k, xn.ensure_grad().data());
      }
    }
  };
  return make_result<T>({cout, height, width}, std::move(out), {x.node(), w.node(), b.node()},
                        backward, "conv2d");
}

// Input [Cin,L] or a batch [B,Cin,L]; padding never crosses batch items.
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  using detail::require;
  require(x.rank() == 2 || x.rank() == 3,
          "conv1d: input must be [C,L] or [B,C,L], got " + to_string(x.shape()));
  require(w.rank() == 3, "conv1d: weights must be [Cout,Cin,k], got " + to_string(w.shape()));
  require(w.dim(2) % 2 == 1, "conv1d: kernel size must be odd");
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t len = x.dim(batched ? 2 : 1);
  require(w.dim(1) == cin, "conv1d: input has " + std::to_string(cin) +
                               " channels but weights expect " + std::to_string(w.dim(1)));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "conv1d: bias must be [Cout]");
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const long pad = static_cast<long>(k / 2);
  const auto kk = static_cast<Eigen::Index>(cin * k);
  const auto n = static_cast<Eigen::Index>(batch * len);

  // col[c*k + t][bi*L + l] = x[bi][c][l + t - pad]
  auto build_col = [=](const T* src) {
    std::vector<T> col(static_cast<std::size_t>(kk * n), T{0});
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t t = 0; t < k; ++t) {
        T* row = col.data() + (c * k + t) * static_cast<std::size_t>(n);
        const long d = static_cast<long>(t) - pad;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const T* s = src + (bi * cin + c) * len;
          for (std::size_t l = 0; l < len; ++l) {
            const long sl = static_cast<long>(l) + d;
            if (sl >= 0 && sl < static_cast<long>(len)) row[bi * len + l] = s[sl];
          }
        }
      }
    }
    return col;
  };

  const auto col = build_col(x.data().data());
  std::vector<T> y(cout * static_cast<std::size_t>(n));
  detail::MapMat<T>(y.data(), static_cast<Eigen::Index>(cout), n).noalias() =
      detail::ConstMapMat<T>(w.data().data(), static_cast<Eigen::Index>(cout), kk) *
      detail::ConstMapMat<T>(col.data(), kk, n);
  // [Cout, B*L] -> [B, Cout, L]
  std::vector<T> out(y.size());
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t l = 0; l < len; ++l)
        out[(bi * cout + o) * len + l] = y[o * batch * len + bi * len + l] + b[o];

  auto backward = [=](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const auto co = static_cast<Eigen::Index>(cout);
    std::vector<T> g(self.grad.size());
    for (std::size_t bi = 0; bi < batch; ++bi)
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t l = 0; l < len; ++l)
          g[o * batch * len + bi * len + l] = self.grad[(bi * cout + o) * len + l];
    detail::ConstMapMat<T> gm(g.data(), co, n);
    if (wn.requires_grad) {
      const auto c = build_col(xn.value.data());
      detail::MapMat<T>(wn.ensure_grad().data(), co, kk).noalias() +=
          gm * detail::ConstMapMat<T>(c.data(), kk, n).transpose();
    }
    if (bn.requires_grad) {
      auto& db = bn.ensure_grad();
      for (std::size_t o = 0; o < cout; ++o) db[o] += detail::row_sum(gm, static_cast<Eigen::Index>(o));
    }
    if (xn.requires_grad) {
      std::vector<T> dcol(static_cast<std::size_t>(kk * n));
      detail::MapMat<T>(dcol.data(), kk, n).noalias() =
          detail::ConstMapMat<T>(wn.value.data(), co, kk).transpose() * gm;
      auto& dx = xn.ensure_grad();
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t t = 0; t < k; ++t) {
          const T* row = dcol.data() + (c * k + t) * static_cast<std::size_t>(n);
          const long d = static_cast<long>(t) - pad;
          for (std::size_t bi = 0; bi < batch; ++bi) {
            T* dst = dx.data() + (bi * cin + c) * len;
            for (std::size_t l = 0; l < len; ++l) {
              const long sl = static_cast<long>(l) + d;
              if (sl >= 0 && sl < static_cast<long>(len)) dst[sl] += row[bi * len + l];
            }
          }
        }
      }
    }
  };
  Shape shape = batched ? Shape{batch, cout, len} : Shape{cout, len};
  return make_result<T>(std::move(shape), std::move(out), {x.node(), w.node(), b.node()},
                        backward, "conv1d");
}

// 2x2 max pooling, stride 2. Ties go to the first cell in row-major order.
template <class T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  using detail::require;
  require(x.rank() == 3, "maxpool2: input must be [C,H,W], got " + to_string(x.shape()));
  require(x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
          "maxpool2: spatial extents must be even, got " + to_string(x.shape()));
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t oh = height / 2, ow = width / 2;
  std::vector<T> out(channels * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto& v = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = (c * height + 2 * y) * width + 2 * xx;
        const std::size_t cells[4] = {base, base + 1, base + width, base + width + 1};
        std::size_t best = cells[0];
        for (int i = 1; i < 4; ++i)
          if (v[cells[i]] > v[best]) best = cells[i];
        const std::size_t o = (c * oh + y) * ow + xx;
        out[o] = v[best];
        argmax[o] = best;
      }
    }
  }
  auto backward = [argmax = std::move(argmax)](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& dx = xn.ensure_grad();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += self.grad[o];
  };
  return make_result<T>({channels, oh, ow}, std::move(out), {x.node()}, backward, "maxpool2");
}

namespace detail {
// Source taps for 2x bilinear upsampling with half-pixel centers
// (align_corners = false), clamped at the borders.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_hi;
};

inline Taps upsample_taps(std::size_t in) {
  Taps t;
  const std::size_t out = 2 * in;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_hi.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t.lo[o] = std::min(lo, in - 1);
    t.hi[o] = std::min(lo + 1, in - 1);
    t.w_hi[o] = src - static_cast<double>(lo);
  }
  return t;
}
}  // namespace detail

template <class T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x) {
  detail::require(x.rank() == 3,
                  "upsample_bilinear2: input must be [C,H,W], got " + to_string(x.shape()));
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t oh = 2 * height, ow = 2 * width;
  const auto ty = detail::upsample_taps(height);
  const auto tx = detail::upsample_taps(width);
  std::vector<T> out(channels * oh * ow);
  const auto& v = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = v.data() + c * height * width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T wy = static_cast<T>(ty.w_hi[oy]);
      const T* r0 = src + ty.lo[oy] * width;
      const T* r1 = src + ty.hi[oy] * width;
      T* dst = out.data() + (c * oh + oy) * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T wx = static_cast<T>(tx.w_hi[ox]);
        const T top = (T{1} - wx) * r0[tx.lo[ox]] + wx * r0[tx.hi[ox]];
        const T bot = (T{1} - wx) * r1[tx.lo[ox]] + wx * r1[tx.hi[ox]];
        dst[ox] = (T{1} - wy) * top + wy * bot;
      }
    }
  }
  auto backward = [channels, height, width, oh, ow, ty, tx](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t c = 0; c < channels; ++c) {
      T* dst = dx.data() + c * height * width;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const T wy = static_cast<T>(ty.w_hi[oy]);
        T* r0 = dst + ty.lo[oy] * width;
        T* r1 = dst + ty.hi[oy] * width;
        const T* g = self.grad.data() + (c * oh + oy) * ow;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T wx = static_cast<T>(tx.w_hi[ox]);
          r0[tx.lo[ox]] += (T{1} - wy) * (T{1} - wx) * g[ox];
          r0[tx.hi[ox]] += (T{1} - wy) * wx * g[ox];
          r1[tx.lo[ox]] += wy * (T{1} - wx) * g[ox];
          r1[tx.hi[ox]] += wy * wx * g[ox];
        }
      }
    }
  };
  return make_result<T>({channels, oh, ow}, std::move(out), {x.node()}, backward,
                        "upsample_bilinear2");
}

// Subgradient 0 at x == 0.
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto& v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > T{0} ? v[i] : T{0};
  auto backward = [](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& dx = xn.ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xn.value[i] > T{0}) dx[i] += self.grad[i];
  };
  return make_result<T>(x.shape(), std::move(out), {x.node()}, backward, "relu");
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto& v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T{1} / (T{1} + std::exp(-v[i]));
  auto backward = [](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = self.value[i];
      dx[i] += self.grad[i] * s * (T{1} - s);
    }
  };
  return make_result<T>(x.shape(), std::move(out), {x.node()}, backward, "sigmoid");
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  using detail::require;
  require(!parts.empty(), "concat_channels: no inputs");
  const std::size_t height = parts[0].rank() == 3 ? parts[0].dim(1) : 0;
  const std::size_t width = parts[0].rank() == 3 ? parts[0].dim(2) : 0;
  std::size_t channels = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require(p.rank() == 3 && p.dim(1) == height && p.dim(2) == width,
            "concat_channels: spatial extents differ: " + to_string(parts[0].shape()) + " vs " +
                to_string(p.shape()));
    offsets.push_back(channels * height * width);
    channels += p.dim(0);
    parents.push_back(p.node());
  }
  std::vector<T> out;
  out.reserve(channels * height * width);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  auto backward = [offsets](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& pn = *self.parents[i];
      if (!pn.requires_grad) continue;
      auto& dx = pn.ensure_grad();
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += self.grad[offsets[i] + j];
    }
  };
  return make_result<T>({channels, height, width}, std::move(out), std::move(parents), backward,
                        "concat_channels");
}

// Affine map y = W x + b for x of shape [N] or a batch [B,N]; W is [M,N].
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  using detail::require;
  require(x.rank() == 1 || x.rank() == 2, "dense: input must be [N] or [B,N]");
  require(w.rank() == 2, "dense: weights must be [M,N]");
  const bool batched = x.rank() == 2;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t in = x.dim(batched ? 1 : 0);
  require(w.dim(1) == in, "dense: input length " + std::to_string(in) +
                              " does not match weights " + to_string(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "dense: bias must be [M]");
  const std::size_t outn = w.dim(0);
  const auto bi = static_cast<Eigen::Index>(batch);
  const auto ni = static_cast<Eigen::Index>(in);
  const auto mi = static_cast<Eigen::Index>(outn);
  std::vector<T> out(batch * outn);
  detail::MapMat<T> y(out.data(), bi, mi);
  y.noalias() = detail::ConstMapMat<T>(x.data().data(), bi, ni) *
                detail::ConstMapMat<T>(w.data().data(), mi, ni).transpose();
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t o = 0; o < outn; ++o) out[r * outn + o] += b[o];

  auto backward = [bi, ni, mi](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    detail::ConstMapMat<T> g(self.grad.data(), bi, mi);
    if (xn.requires_grad)
      detail::MapMat<T>(xn.ensure_grad().data(), bi, ni).noalias() +=
          g * detail::ConstMapMat<T>(wn.value.data(), mi, ni);
    if (wn.requires_grad)
      detail::MapMat<T>(wn.ensure_grad().data(), mi, ni).noalias() +=
          g.transpose() * detail::ConstMapMat<T>(xn.value.data(), bi, ni);
    if (bn.requires_grad) {
      auto& db = bn.ensure_grad();
      for (Eigen::Index o = 0; o < mi; ++o) {
        T acc{0};
        for (Eigen::Index r = 0; r < bi; ++r) acc += g(r, o);
        db[static_cast<std::size_t>(o)] += acc;
      }
    }
  };
  Shape shape = batched ? Shape{batch, outn} : Shape{outn};
  return make_result<T>(std::move(shape), std::move(out), {x.node(), w.node(), b.node()},
                        backward, "dense");
}

// Channels [begin, begin + count) of a [C,H,W] tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require(x.rank() == 3 && count > 0 && begin + count <= x.dim(0),
                  "slice_channels: range out of bounds for " + to_string(x.shape()));
  const std::size_t plane = x.dim(1) * x.dim(2);
  std::vector<T> out(x.values().begin() + static_cast<long>(begin * plane),
                     x.values().begin() + static_cast<long>((begin + count) * plane));
  auto backward = [offset = begin * plane](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[offset + i] += self.grad[i];
  };
  return make_result<T>({count, x.dim(1), x.dim(2)}, std::move(out), {x.node()}, backward,
                        "slice_channels");
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(numel(shape) == x.size(), "reshape: cannot view " + to_string(x.shape()) +
                                                " as " + to_string(shape));
  auto backward = [](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  };
  return make_result<T>(std::move(shape), x.values(), {x.node()}, backward, "reshape");
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(),
                  "add: shapes differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto backward = [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& d = p->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  };
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, backward, "add");
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  auto backward = [factor](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * self.grad[i];
  };
  return make_result<T>(x.shape(), std::move(out), {x.node()}, backward, "scale");
}

// Sum of x_i * weights_i; turns any tensor into a scalar for gradient checks.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::vector<T> weights) {
  detail::require(weights.size() == x.size(), "weighted_sum: weight count mismatch");
  T total{0};
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * weights[i];
  auto backward = [weights = std::move(weights)](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += weights[i] * self.grad[0];
  };
  return make_result<T>({1}, {total}, {x.node()}, backward, "weighted_sum");
}

// Sum over all positions of the squared difference (no averaging).
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require(pred.shape() == target.shape(), "mse_loss: shapes differ " +
                                                      to_string(pred.shape()) + " vs " +
                                                      to_string(target.shape()));
  T total{0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    total += d * d;
  }
  auto backward = [](Node<T>& self) {
    auto& pn = *self.parents[0];
    const auto& tv = self.parents[1]->value;
    const T g = self.grad[0];
    if (pn.requires_grad) {
      auto& dp = pn.ensure_grad();
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += T{2} * (pn.value[i] - tv[i]) * g;
    }
    auto& tn = *self.parents[1];
    if (tn.requires_grad) {
      auto& dt = tn.ensure_grad();
      for (std::size_t i = 0; i < dt.size(); ++i) dt[i] -= T{2} * (pn.value[i] - tv[i]) * g;
    }
  };
  return make_result<T>({1}, {total}, {pred.node(), target.node()}, backward, "mse_loss");
}

inline constexpr double kBceEpsilon = 1e-7;

// Mean binary cross-entropy, -[y log p + (1-y) log(1-p)], with p clamped to
// [eps, 1-eps]. Labels must be exactly 0 or 1.
template <class T>
Tensor<T> bce_loss(const Tensor<T>& pred, const std::vector<T>& labels) {
  detail::require(labels.size() == pred.size(), "bce_loss: label count mismatch");
  for (T y : labels) {
    if (y != T{0} && y != T{1})
      throw std::invalid_argument("bce_loss: label must be 0 or 1, got " + std::to_string(y));
  }
  const T eps = static_cast<T>(kBceEpsilon);
  const T n = static_cast<T>(pred.size());
  T total{0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = std::clamp(pred[i], eps, T{1} - eps);
    total -= labels[i] * std::log(p) + (T{1} - labels[i]) * std::log(T{1} - p);
  }
  auto backward = [labels, eps, n](Node<T>& self) {
    auto& pn = *self.parents[0];
    auto& dp = pn.ensure_grad();
    for (std::size_t i = 0; i < dp.size(); ++i) {
      const T p = pn.value[i];
      if (p <= eps || p >= T{1} - eps) continue;
      dp[i] += self.grad[0] * (-labels[i] / p + (T{1} - labels[i]) / (T{1} - p)) / n;
    }
  };
  return make_result<T>({1}, {total / n}, {pred.node()}, backward, "bce_loss");
}

}  // namespace rowgraph::diff
