#include "hippo/nn/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>

namespace hippo::nn {

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                 std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
                  std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

void set_num_threads(int threads) {
  if (threads > 0) openblas_set_num_threads(threads);
}

namespace {

// Row (ci, ky, kx) of the column buffer holds the input plane ci shifted by
// (ky - pad, kx - pad), zero outside the image.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* cols) {
  const long pad = static_cast<long>(k / 2);
  const long H = static_cast<long>(h);
  const long W = static_cast<long>(w);
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T* plane = x + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((ci * k + ky) * k + kx) * h * w;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(W, W - dx);
        for (long y = 0; y < H; ++y) {
          T* dst = row + y * W;
          const long sy = y + dy;
          if (sy < 0 || sy >= H || x1 <= x0) {
            std::fill(dst, dst + W, T{});
            continue;
          }
          std::fill(dst, dst + x0, T{});
          std::memcpy(dst + x0, plane + sy * W + x0 + dx, static_cast<std::size_t>(x1 - x0) * sizeof(T));
          std::fill(dst + x1, dst + W, T{});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* x) {
  const long pad = static_cast<long>(k / 2);
  const long H = static_cast<long>(h);
  const long W = static_cast<long>(w);
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T* plane = x + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ci * k + ky) * k + kx) * h * w;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(W, W - dx);
        for (long y = 0; y < H; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* src = row + y * W;
          T* dst = plane + sy * W + dx;
          for (long xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
        }
      }
    }
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape4 xs = x->value.shape();
  const Shape4 ws = weight->value.shape();
  require(ws.h == ws.w && ws.h % 2 == 1, "conv2d: kernel must be square and odd");
  require(xs.c == ws.c, "conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                            std::to_string(ws.c));
  if (bias) require(bias->value.size() == ws.n, "conv2d: bias size mismatch");

  const std::size_t k = ws.h;
  const std::size_t hw = xs.plane();
  const std::size_t kdim = ws.c * k * k;
  Tensor<T> out(Shape4{xs.n, ws.n, xs.h, xs.w});
  std::vector<T> cols(k == 1 ? 0 : kdim * hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* src = x->value.sample(n);
    if (k != 1) {
      im2col(src, xs.c, xs.h, xs.w, k, cols.data());
      src = cols.data();
    }
    T* dst = out.sample(n);
    gemm<T>(false, false, ws.n, hw, kdim, T(1), weight->value.data(), kdim, src, hw, T(0), dst, hw);
    if (bias) {
      for (std::size_t co = 0; co < ws.n; ++co) {
        const T b = bias->value[co];
        T* p = dst + co * hw;
        for (std::size_t i = 0; i < hw; ++i) p[i] += b;
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [xs, ws, k, hw, kdim](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Node<T>& wt = *self.parents[1];
    Node<T>* bs = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    std::vector<T> cols(k == 1 ? 0 : kdim * hw);
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* g = self.grad.sample(n);
      if (wt.requires_grad) {
        const T* src = in.value.sample(n);
        if (k != 1) {
          im2col(src, xs.c, xs.h, xs.w, k, cols.data());
          src = cols.data();
        }
        gemm<T>(false, true, ws.n, kdim, hw, T(1), g, hw, src, hw, T(1), wt.grad.data(), kdim);
      }
      if (bs && bs->requires_grad) {
        for (std::size_t co = 0; co < ws.n; ++co) {
          T s{};
          const T* p = g + co * hw;
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
          bs->grad[co] += s;
        }
      }
      if (in.requires_grad) {
        if (k == 1) {
          gemm<T>(true, false, kdim, hw, ws.n, T(1), wt.value.data(), kdim, g, hw, T(1), in.grad.sample(n), hw);
        } else {
          gemm<T>(true, false, kdim, hw, ws.n, T(1), wt.value.data(), kdim, g, hw, T(0), cols.data(), hw);
          col2im_add(cols.data(), xs.c, xs.h, xs.w, k, in.grad.sample(n));
        }
      }
    }
  });
}

template <typename T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape4 xs = x->value.shape();
  const Shape4 ws = weight->value.shape();
  require(ws.h == 2 && ws.w == 2, "conv_transpose2x2: kernel must be 2x2");
  require(xs.c == ws.n, "conv_transpose2x2: input has " + std::to_string(xs.c) + " channels, weight expects " +
                            std::to_string(ws.n));
  require(bias && bias->value.size() == ws.c, "conv_transpose2x2: bias size mismatch");

  const std::size_t cout = ws.c;
  const std::size_t rows = cout * 4;
  const std::size_t hw = xs.plane();
  const std::size_t oh = xs.h * 2;
  const std::size_t ow = xs.w * 2;
  Tensor<T> out(Shape4{xs.n, cout, oh, ow});
  std::vector<T> y(rows * hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    gemm<T>(true, false, rows, hw, xs.c, T(1), weight->value.data(), rows, x->value.sample(n), hw, T(0), y.data(),
            hw);
    T* dst = out.sample(n);
    for (std::size_t co = 0; co < cout; ++co) {
      const T b = bias->value[co];
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t di = q / 2;
        const std::size_t dj = q % 2;
        const T* src = y.data() + (co * 4 + q) * hw;
        for (std::size_t i = 0; i < xs.h; ++i) {
          for (std::size_t j = 0; j < xs.w; ++j) {
            dst[(co * oh + 2 * i + di) * ow + 2 * j + dj] = src[i * xs.w + j] + b;
          }
        }
      }
    }
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [xs, cout, rows, hw, oh, ow](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Node<T>& wt = *self.parents[1];
    Node<T>& bs = *self.parents[2];
    std::vector<T> dy(rows * hw);
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* g = self.grad.sample(n);
      for (std::size_t co = 0; co < cout; ++co) {
        T bsum{};
        for (std::size_t q = 0; q < 4; ++q) {
          const std::size_t di = q / 2;
          const std::size_t dj = q % 2;
          T* dst = dy.data() + (co * 4 + q) * hw;
          for (std::size_t i = 0; i < xs.h; ++i) {
            for (std::size_t j = 0; j < xs.w; ++j) {
              const T v = g[(co * oh + 2 * i + di) * ow + 2 * j + dj];
              dst[i * xs.w + j] = v;
              bsum += v;
            }
          }
        }
        if (bs.requires_grad) bs.grad[co] += bsum;
      }
      if (wt.requires_grad) {
        gemm<T>(false, true, xs.c, rows, hw, T(1), in.value.sample(n), hw, dy.data(), hw, T(1), wt.grad.data(), rows);
      }
      if (in.requires_grad) {
        gemm<T>(false, false, xs.c, hw, rows, T(1), wt.value.data(), rows, dy.data(), hw, T(1), in.grad.sample(n), hw);
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                  bool training) {
  const Shape4 xs = x->value.shape();
  const std::size_t C = xs.c;
  const std::size_t hw = xs.plane();
  const std::size_t m = xs.n * hw;
  require(gamma->value.size() == C && beta->value.size() == C, "batch_norm: parameter size mismatch");
  if (state.running_mean.size() != C) {
    state.running_mean = Tensor<T>(Shape4{C, 1, 1, 1}, T(0));
    state.running_var = Tensor<T>(Shape4{C, 1, 1, 1}, T(1));
  }
  require(!training || m > 1, "batch_norm: training needs more than one value per channel");

  auto inv_std = std::make_shared<std::vector<T>>(C);
  auto xhat = std::make_shared<Tensor<T>>(xs);
  Tensor<T> out(xs);
  for (std::size_t c = 0; c < C; ++c) {
    T mean;
    T var;
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* p = x->value.sample(n) + c * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* p = x->value.sample(n) + c * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      mean = static_cast<T>(mu);
      var = static_cast<T>(ss / static_cast<double>(m));
      const T unbiased = static_cast<T>(ss / static_cast<double>(m - 1));
      state.running_mean[c] = (T(1) - state.momentum) * state.running_mean[c] + state.momentum * mean;
      state.running_var[c] = (T(1) - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T is = T(1) / std::sqrt(var + state.eps);
    (*inv_std)[c] = is;
    const T g = gamma->value[c];
    const T b = beta->value[c];
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* p = x->value.sample(n) + c * hw;
      T* xh = xhat->sample(n) + c * hw;
      T* o = out.sample(n) + c * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - mean) * is;
        o[i] = g * xh[i] + b;
      }
    }
  }

  return make_result<T>(std::move(out), {x, gamma, beta}, [xs, C, hw, m, training, inv_std, xhat](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Node<T>& ga = *self.parents[1];
    Node<T>& be = *self.parents[2];
    for (std::size_t c = 0; c < C; ++c) {
      double dgamma = 0.0;
      double dbeta = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* g = self.grad.sample(n) + c * hw;
        const T* xh = xhat->sample(n) + c * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          dgamma += static_cast<double>(g[i]) * xh[i];
          dbeta += g[i];
        }
      }
      if (ga.requires_grad) ga.grad[c] += static_cast<T>(dgamma);
      if (be.requires_grad) be.grad[c] += static_cast<T>(dbeta);
      if (!in.requires_grad) continue;
      const T scale = ga.value[c] * (*inv_std)[c];
      const T mean_dbeta = static_cast<T>(dbeta / static_cast<double>(m));
      const T mean_dgamma = static_cast<T>(dgamma / static_cast<double>(m));
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* g = self.grad.sample(n) + c * hw;
        const T* xh = xhat->sample(n) + c * hw;
        T* dx = in.grad.sample(n) + c * hw;
        if (training) {
          for (std::size_t i = 0; i < hw; ++i) dx[i] += scale * (g[i] - mean_dbeta - xh[i] * mean_dgamma);
        } else {
          for (std::size_t i = 0; i < hw; ++i) dx[i] += scale * g[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const auto src = x->value.values();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] > T(0) ? src[i] : T(0);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in.value[i] > T(0)) in.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  // Clamped so outputs stay strictly inside (0, 1) at the precision of T.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  Tensor<T> out(x->value.shape());
  const auto src = x->value.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(src[i])));
    out[i] = std::clamp(static_cast<T>(s), lo, hi);
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      in.grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> max_pool2x2(const Var<T>& x) {
  const Shape4 xs = x->value.shape();
  require(xs.h % 2 == 0 && xs.w % 2 == 0, "max_pool2x2: spatial dims must be even, got " + xs.str());
  const Shape4 os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor<T> out(os);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(os.numel());
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* src = x->value.data() + nc * xs.plane();
    T* dst = out.data() + nc * os.plane();
    std::uint32_t* am = argmax->data() + nc * os.plane();
    for (std::size_t i = 0; i < os.h; ++i) {
      for (std::size_t j = 0; j < os.w; ++j) {
        std::size_t best = (2 * i) * xs.w + 2 * j;
        for (std::size_t q = 1; q < 4; ++q) {
          const std::size_t idx = (2 * i + q / 2) * xs.w + 2 * j + q % 2;
          if (src[idx] > src[best]) best = idx;
        }
        dst[i * os.w + j] = src[best];
        am[i * os.w + j] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [xs, os, argmax](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
      const T* g = self.grad.data() + nc * os.plane();
      const std::uint32_t* am = argmax->data() + nc * os.plane();
      T* dx = in.grad.data() + nc * xs.plane();
      for (std::size_t i = 0; i < os.plane(); ++i) dx[am[i]] += g[i];
    }
  });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  require(factor >= 1, "upsample_nearest: factor must be >= 1");
  if (factor == 1) return x;
  const Shape4 xs = x->value.shape();
  const Shape4 os{xs.n, xs.c, xs.h * factor, xs.w * factor};
  Tensor<T> out(os);
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* src = x->value.data() + nc * xs.plane();
    T* dst = out.data() + nc * os.plane();
    for (std::size_t y = 0; y < os.h; ++y) {
      for (std::size_t xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / factor) * xs.w + xx / factor];
    }
  }
  return make_result<T>(std::move(out), {x}, [xs, os, factor](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
      const T* g = self.grad.data() + nc * os.plane();
      T* dx = in.grad.data() + nc * xs.plane();
      for (std::size_t y = 0; y < os.h; ++y) {
        for (std::size_t xx = 0; xx < os.w; ++xx) dx[(y / factor) * xs.w + xx / factor] += g[y * os.w + xx];
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape4 first = parts.front()->value.shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape4 s = p->value.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: shape mismatch " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  const Shape4 os{first.n, channels, first.h, first.w};
  Tensor<T> out(os);
  const std::size_t hw = first.plane();
  for (std::size_t n = 0; n < os.n; ++n) {
    T* dst = out.sample(n);
    for (const auto& p : parts) {
      const std::size_t len = p->value.shape().c * hw;
      std::memcpy(dst, p->value.sample(n), len * sizeof(T));
      dst += len;
    }
  }
  return make_result<T>(std::move(out), parts, [os, hw](Node<T>& self) {
    for (std::size_t n = 0; n < os.n; ++n) {
      const T* g = self.grad.sample(n);
      for (auto& p : self.parents) {
        const std::size_t len = p->value.shape().c * hw;
        if (p->requires_grad) {
          T* dx = p->grad.sample(n);
          for (std::size_t i = 0; i < len; ++i) dx[i] += g[i];
        }
        g += len;
      }
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.shape() == b->value.shape(),
          "add: shape mismatch " + a->value.shape().str() + " vs " + b->value.shape().str());
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> gate_multiply(const Var<T>& gate, const Var<T>& x) {
  const Shape4 gs = gate->value.shape();
  const Shape4 xs = x->value.shape();
  require(gs.c == 1 && gs.n == xs.n && gs.h == xs.h && gs.w == xs.w,
          "gate_multiply: gate " + gs.str() + " incompatible with " + xs.str());
  Tensor<T> out(xs);
  const std::size_t hw = xs.plane();
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* a = gate->value.sample(n);
    for (std::size_t c = 0; c < xs.c; ++c) {
      const T* src = x->value.sample(n) + c * hw;
      T* dst = out.sample(n) + c * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = a[i] * src[i];
    }
  }
  return make_result<T>(std::move(out), {gate, x}, [xs, hw](Node<T>& self) {
    Node<T>& ga = *self.parents[0];
    Node<T>& in = *self.parents[1];
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* a = ga.value.sample(n);
      for (std::size_t c = 0; c < xs.c; ++c) {
        const T* g = self.grad.sample(n) + c * hw;
        const T* src = in.value.sample(n) + c * hw;
        if (ga.requires_grad) {
          T* da = ga.grad.sample(n);
          for (std::size_t i = 0; i < hw; ++i) da[i] += g[i] * src[i];
        }
        if (in.requires_grad) {
          T* dx = in.grad.sample(n) + c * hw;
          for (std::size_t i = 0; i < hw; ++i) dx[i] += g[i] * a[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x->value.size());
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    (*mask)[i] = u < rate ? T(0) : keep_scale;
    out[i] = x->value[i] * (*mask)[i];
  }
  return make_result<T>(std::move(out), {x}, [mask](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * (*mask)[i];
  });
}

#define HIPPO_INSTANTIATE_OPS(T)                                                                             \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> conv_transpose2x2<T>(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, bool);    \
  template Var<T> relu<T>(const Var<T>&);                                                                  \
  template Var<T> sigmoid<T>(const Var<T>&);                                                               \
  template Var<T> max_pool2x2<T>(const Var<T>&);                                                           \
  template Var<T> upsample_nearest<T>(const Var<T>&, std::size_t);                                         \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                          \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> gate_multiply<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> dropout<T>(const Var<T>&, double, std::mt19937_64&);

HIPPO_INSTANTIATE_OPS(float)
HIPPO_INSTANTIATE_OPS(double)

}  // namespace hippo::nn
