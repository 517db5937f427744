// SPDX-License-Identifier: Apache-2.0
#include "aple/ops.hpp"

#include <cmath>
#include <limits>

#include "aple/error.hpp"

namespace aple::ops {
namespace {

Tensor apply(Graph* g, std::string_view name, std::vector<Tensor> inputs, Shape out_shape,
             ForwardFn forward, BackwardFn backward) {
  Tensor result(std::move(out_shape), forward(inputs));
  if (g == nullptr) return result;
  bool attached = false;
  for (const Tensor& in : inputs) attached = attached || g->is_attached(in);
  if (!attached) return result;
  return g->record(name, std::move(inputs), result, std::move(forward), std::move(backward));
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(std::string_view op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

void require_finite(std::string_view op, std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

// Splits a shape around `axis` into outer * n * inner.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

template <class Fn, class Dfn>
Tensor unary(Graph* g, std::string_view name, const Tensor& x, Fn fn, Dfn dfn) {
  auto fwd = [fn](std::span<const Tensor> in) {
    auto xs = in[0].data();
    std::vector<float> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fn(xs[i]);
    return out;
  };
  auto bwd = [dfn](const Tensor& out, std::span<const float> go, std::span<const Tensor> in,
                   GradRefs gi) {
    if (!gi[0]) return;
    auto xs = in[0].data();
    auto ys = out.data();
    auto& gx = *gi[0];
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += go[i] * dfn(xs[i], ys[i]);
  };
  return apply(g, name, {x}, x.shape(), fwd, bwd);
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;

}  // namespace

Tensor matmul(Graph* g, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
  auto fwd = [r, k, c](std::span<const Tensor> in) {
    auto A = in[0].data();
    auto B = in[1].data();
    std::vector<float> out(r * c);
    std::vector<double> row(c);
    for (std::size_t i = 0; i < r; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        const float* brow = B.data() + p * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += av * brow[j];
      }
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<float>(row[j]);
    }
    return out;
  };
  auto bwd = [r, k, c](const Tensor&, std::span<const float> go, std::span<const Tensor> in,
                       GradRefs gi) {
    auto A = in[0].data();
    auto B = in[1].data();
    if (gi[0]) {
      auto& gA = *gi[0];
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += static_cast<double>(go[i * c + j]) * B[p * c + j];
          gA[i * k + p] += static_cast<float>(acc);
        }
      }
    }
    if (gi[1]) {
      auto& gB = *gi[1];
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const float av = A[i * k + p];
          for (std::size_t j = 0; j < c; ++j) gB[p * c + j] += av * go[i * c + j];
        }
      }
    }
  };
  return apply(g, "matmul", {a, b}, {r, c}, fwd, bwd);
}

Tensor linear(Graph* g, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.rank() != 1 ||
      b.dim(0) != w.dim(1)) {
    throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" +
                         shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
  const std::size_t n = x.dim(0), k = x.dim(1), c = w.dim(1);
  auto fwd = [n, k, c](std::span<const Tensor> in) {
    auto X = in[0].data();
    auto W = in[1].data();
    auto B = in[2].data();
    std::vector<float> out(n * c);
    std::vector<double> row(c);
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double xv = X[i * k + p];
        const float* wrow = W.data() + p * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += xv * wrow[j];
      }
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<float>(row[j] + B[j]);
    }
    return out;
  };
  auto bwd = [n, k, c](const Tensor&, std::span<const float> go, std::span<const Tensor> in,
                       GradRefs gi) {
    auto X = in[0].data();
    auto W = in[1].data();
    if (gi[0]) {
      auto& gX = *gi[0];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += static_cast<double>(go[i * c + j]) * W[p * c + j];
          gX[i * k + p] += static_cast<float>(acc);
        }
      }
    }
    if (gi[1]) {
      auto& gW = *gi[1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const float xv = X[i * k + p];
          for (std::size_t j = 0; j < c; ++j) gW[p * c + j] += xv * go[i * c + j];
        }
      }
    }
    if (gi[2]) {
      auto& gB = *gi[2];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) gB[j] += go[i * c + j];
      }
    }
  };
  return apply(g, "linear", {x, w, b}, {n, c}, fwd, bwd);
}

Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto fwd = [](std::span<const Tensor> in) {
    auto A = in[0].data();
    auto B = in[1].data();
    std::vector<float> out(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    return out;
  };
  auto bwd = [](const Tensor&, std::span<const float> go, std::span<const Tensor>, GradRefs gi) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!gi[k]) continue;
      auto& gx = *gi[k];
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
  };
  return apply(g, "add", {a, b}, a.shape(), fwd, bwd);
}

Tensor sub(Graph* g, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto fwd = [](std::span<const Tensor> in) {
    auto A = in[0].data();
    auto B = in[1].data();
    std::vector<float> out(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
    return out;
  };
  auto bwd = [](const Tensor&, std::span<const float> go, std::span<const Tensor>, GradRefs gi) {
    if (gi[0]) {
      for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
    }
    if (gi[1]) {
      for (std::size_t i = 0; i < go.size(); ++i) (*gi[1])[i] -= go[i];
    }
  };
  return apply(g, "sub", {a, b}, a.shape(), fwd, bwd);
}

Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto fwd = [](std::span<const Tensor> in) {
    auto A = in[0].data();
    auto B = in[1].data();
    std::vector<float> out(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    return out;
  };
  auto bwd = [](const Tensor&, std::span<const float> go, std::span<const Tensor> in,
                GradRefs gi) {
    auto A = in[0].data();
    auto B = in[1].data();
    if (gi[0]) {
      for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i] * B[i];
    }
    if (gi[1]) {
      for (std::size_t i = 0; i < go.size(); ++i) (*gi[1])[i] += go[i] * A[i];
    }
  };
  return apply(g, "mul", {a, b}, a.shape(), fwd, bwd);
}

Tensor scale(Graph* g, const Tensor& x, float s) {
  return unary(
      g, "scale", x, [s](float v) { return v * s; }, [s](float, float) { return s; });
}

Tensor gelu(Graph* g, const Tensor& x) {
  return unary(
      g, "gelu", x,
      [](float v) {
        const float t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        return 0.5f * v * (1.0f + t);
      },
      [](float v, float) {
        const float t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const float dt = kGeluC * (1.0f + 3.0f * kGeluA * v * v);
        return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * dt;
      });
}

Tensor exp(Graph* g, const Tensor& x) {
  return unary(
      g, "exp", x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Tensor log(Graph* g, const Tensor& x) {
  for (float v : x.data()) {
    if (!(v > 0.0f)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      g, "log", x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Tensor layernorm(Graph* g, const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require_rank("layernorm", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layernorm: gain/bias must be [" + std::to_string(d) + "], got " +
                         shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  if (!(eps > 0.0f)) throw UsageError("layernorm: eps must be positive");

  // Row statistics; shared by forward and backward so both see identical values.
  auto stats = [n, d, eps](std::span<const float> X, std::vector<float>& mu,
                           std::vector<float>& rstd) {
    mu.assign(n, 0.0f);
    rstd.assign(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      const float* row = X.data() + i * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += row[j];
      const double m = s / static_cast<double>(d);
      double v = 0.0;
      for (std::size_t j = 0; j < d; ++j) v += (row[j] - m) * (row[j] - m);
      v /= static_cast<double>(d);
      mu[i] = static_cast<float>(m);
      rstd[i] = static_cast<float>(1.0 / std::sqrt(v + eps));
    }
  };

  auto fwd = [n, d, stats](std::span<const Tensor> in) {
    auto X = in[0].data();
    auto G = in[1].data();
    auto B = in[2].data();
    std::vector<float> mu, rstd;
    stats(X, mu, rstd);
    std::vector<float> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        out[i * d + j] = (X[i * d + j] - mu[i]) * rstd[i] * G[j] + B[j];
      }
    }
    return out;
  };
  auto bwd = [n, d, stats](const Tensor&, std::span<const float> go, std::span<const Tensor> in,
                           GradRefs gi) {
    auto X = in[0].data();
    auto G = in[1].data();
    std::vector<float> mu, rstd;
    stats(X, mu, rstd);
    std::vector<float> xhat(d), dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (X[i * d + j] - mu[i]) * rstd[i];
        dxhat[j] = go[i * d + j] * G[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat[j];
      }
      mean_d /= static_cast<double>(d);
      mean_dx /= static_cast<double>(d);
      if (gi[0]) {
        auto& gx = *gi[0];
        for (std::size_t j = 0; j < d; ++j) {
          gx[i * d + j] += static_cast<float>(rstd[i] * (dxhat[j] - mean_d - xhat[j] * mean_dx));
        }
      }
      if (gi[1]) {
        for (std::size_t j = 0; j < d; ++j) (*gi[1])[j] += go[i * d + j] * xhat[j];
      }
      if (gi[2]) {
        for (std::size_t j = 0; j < d; ++j) (*gi[2])[j] += go[i * d + j];
      }
    }
  };
  return apply(g, "layernorm", {x, gain, bias}, x.shape(), fwd, bwd);
}

Tensor softmax(Graph* g, const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  require_finite("softmax", x.data());
  auto fwd = [v](std::span<const Tensor> in) {
    auto X = in[0].data();
    std::vector<float> out(X.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t q = 0; q < v.inner; ++q) {
        const std::size_t base = o * v.n * v.inner + q;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < v.n; ++i) mx = std::max(mx, X[base + i * v.inner]);
        double s = 0.0;
        for (std::size_t i = 0; i < v.n; ++i) s += std::exp(static_cast<double>(X[base + i * v.inner]) - mx);
        for (std::size_t i = 0; i < v.n; ++i) {
          out[base + i * v.inner] =
              static_cast<float>(std::exp(static_cast<double>(X[base + i * v.inner]) - mx) / s);
        }
      }
    }
    return out;
  };
  auto bwd = [v](const Tensor& out, std::span<const float> go, std::span<const Tensor>,
                 GradRefs gi) {
    if (!gi[0]) return;
    auto Y = out.data();
    auto& gx = *gi[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t q = 0; q < v.inner; ++q) {
        const std::size_t base = o * v.n * v.inner + q;
        double dot = 0.0;
        for (std::size_t i = 0; i < v.n; ++i) {
          dot += static_cast<double>(go[base + i * v.inner]) * Y[base + i * v.inner];
        }
        for (std::size_t i = 0; i < v.n; ++i) {
          const std::size_t k = base + i * v.inner;
          gx[k] += static_cast<float>(Y[k] * (go[k] - dot));
        }
      }
    }
  };
  return apply(g, "softmax", {x}, x.shape(), fwd, bwd);
}

Tensor log_softmax(Graph* g, const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  require_finite("log_softmax", x.data());
  auto fwd = [v](std::span<const Tensor> in) {
    auto X = in[0].data();
    std::vector<float> out(X.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t q = 0; q < v.inner; ++q) {
        const std::size_t base = o * v.n * v.inner + q;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < v.n; ++i) mx = std::max(mx, X[base + i * v.inner]);
        double s = 0.0;
        for (std::size_t i = 0; i < v.n; ++i) s += std::exp(static_cast<double>(X[base + i * v.inner]) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t i = 0; i < v.n; ++i) {
          out[base + i * v.inner] = static_cast<float>(X[base + i * v.inner] - lse);
        }
      }
    }
    return out;
  };
  auto bwd = [v](const Tensor& out, std::span<const float> go, std::span<const Tensor>,
                 GradRefs gi) {
    if (!gi[0]) return;
    auto Y = out.data();
    auto& gx = *gi[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t q = 0; q < v.inner; ++q) {
        const std::size_t base = o * v.n * v.inner + q;
        double total = 0.0;
        for (std::size_t i = 0; i < v.n; ++i) total += go[base + i * v.inner];
        for (std::size_t i = 0; i < v.n; ++i) {
          const std::size_t k = base + i * v.inner;
          gx[k] += static_cast<float>(go[k] - std::exp(static_cast<double>(Y[k])) * total);
        }
      }
    }
  };
  return apply(g, "log_softmax", {x}, x.shape(), fwd, bwd);
}

Tensor concat(Graph* g, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no parts");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_str(first) + " and " +
                           shape_str(s) + " along axis " + std::to_string(axis));
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisView v = axis_view(out_shape, axis);

  auto fwd = [v, extents](std::span<const Tensor> in) {
    std::vector<float> out(v.outer * v.n * v.inner);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < in.size(); ++p) {
      auto src = in[p].data();
      const std::size_t chunk = extents[p] * v.inner;
      for (std::size_t o = 0; o < v.outer; ++o) {
        std::copy_n(src.data() + o * chunk, chunk, out.data() + o * v.n * v.inner + offset);
      }
      offset += chunk;
    }
    return out;
  };
  auto bwd = [v, extents](const Tensor&, std::span<const float> go, std::span<const Tensor>,
                          GradRefs gi) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < gi.size(); ++p) {
      const std::size_t chunk = extents[p] * v.inner;
      if (gi[p]) {
        auto& gx = *gi[p];
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t i = 0; i < chunk; ++i) {
            gx[o * chunk + i] += go[o * v.n * v.inner + offset + i];
          }
        }
      }
      offset += chunk;
    }
  };
  return apply(g, "concat", std::vector<Tensor>(parts.begin(), parts.end()), out_shape, fwd, bwd);
}

Tensor slice(Graph* g, const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisView v = axis_view(x.shape(), axis);
  if (length == 0 || start + length > v.n) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of bounds for axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto fwd = [v, start, length](std::span<const Tensor> in) {
    auto X = in[0].data();
    std::vector<float> out(v.outer * length * v.inner);
    const std::size_t chunk = length * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(X.data() + o * v.n * v.inner + start * v.inner, chunk, out.data() + o * chunk);
    }
    return out;
  };
  auto bwd = [v, start, length](const Tensor&, std::span<const float> go, std::span<const Tensor>,
                                GradRefs gi) {
    if (!gi[0]) return;
    auto& gx = *gi[0];
    const std::size_t chunk = length * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < chunk; ++i) {
        gx[o * v.n * v.inner + start * v.inner + i] += go[o * chunk + i];
      }
    }
  };
  return apply(g, "slice", {x}, out_shape, fwd, bwd);
}

Tensor transpose(Graph* g, const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto fwd = [r, c](std::span<const Tensor> in) {
    auto X = in[0].data();
    std::vector<float> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
    }
    return out;
  };
  auto bwd = [r, c](const Tensor&, std::span<const float> go, std::span<const Tensor>,
                    GradRefs gi) {
    if (!gi[0]) return;
    auto& gx = *gi[0];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += go[j * r + i];
    }
  };
  return apply(g, "transpose", {x}, {c, r}, fwd, bwd);
}

Tensor reshape(Graph* g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  auto fwd = [](std::span<const Tensor> in) {
    auto X = in[0].data();
    return std::vector<float>(X.begin(), X.end());
  };
  auto bwd = [](const Tensor&, std::span<const float> go, std::span<const Tensor>, GradRefs gi) {
    if (!gi[0]) return;
    for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
  };
  return apply(g, "reshape", {x}, std::move(shape), fwd, bwd);
}

Tensor sum(Graph* g, const Tensor& x) {
  auto fwd = [](std::span<const Tensor> in) {
    double s = 0.0;
    for (float v : in[0].data()) s += v;
    return std::vector<float>{static_cast<float>(s)};
  };
  auto bwd = [](const Tensor&, std::span<const float> go, std::span<const Tensor>, GradRefs gi) {
    if (!gi[0]) return;
    for (float& v : *gi[0]) v += go[0];
  };
  return apply(g, "sum", {x}, {1}, fwd, bwd);
}

Tensor mean(Graph* g, const Tensor& x) {
  const float inv = 1.0f / static_cast<float>(x.numel());
  const double n = static_cast<double>(x.numel());
  auto fwd = [n](std::span<const Tensor> in) {
    double s = 0.0;
    for (float v : in[0].data()) s += v;
    return std::vector<float>{static_cast<float>(s / n)};
  };
  auto bwd = [inv](const Tensor&, std::span<const float> go, std::span<const Tensor>,
                   GradRefs gi) {
    if (!gi[0]) return;
    for (float& v : *gi[0]) v += go[0] * inv;
  };
  return apply(g, "mean", {x}, {1}, fwd, bwd);
}

Tensor normalize_rows(Graph* g, const Tensor& x) {
  require_rank("normalize_rows", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto norms = [n, d](std::span<const float> X) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(X[i * d + j]) * X[i * d + j];
      out[i] = std::sqrt(s);
    }
    return out;
  };
  const std::vector<double> nx = norms(x.data());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(nx[i] > 0.0f) || !std::isfinite(nx[i])) {
      throw NumericError("normalize_rows: row " + std::to_string(i) + " has zero or non-finite norm");
    }
  }
  auto fwd = [n, d, norms](std::span<const Tensor> in) {
    auto X = in[0].data();
    const std::vector<double> nr = norms(X);
    std::vector<float> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<float>(X[i * d + j] / nr[i]);
    }
    return out;
  };
  auto bwd = [n, d, norms](const Tensor& out, std::span<const float> go,
                           std::span<const Tensor> in, GradRefs gi) {
    if (!gi[0]) return;
    auto Y = out.data();
    const std::vector<double> nr = norms(in[0].data());
    auto& gx = *gi[0];
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(go[i * d + j]) * Y[i * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        gx[i * d + j] += static_cast<float>((go[i * d + j] - Y[i * d + j] * dot) / nr[i]);
      }
    }
  };
  return apply(g, "normalize_rows", {x}, x.shape(), fwd, bwd);
}

}  // namespace aple::ops
