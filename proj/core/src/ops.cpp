#include "maskroute/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maskroute/autograd.hpp"
#include "maskroute/errors.hpp"

namespace maskroute {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// c[M x N] += a[M x K] . b[K x N]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[M x K] += g[M x N] . b[K x N]^T
void gemm_nt_acc(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_acc(g, bt.data(), c, m, n, k);
}

// c[K x N] += a[M x K]^T . g[M x N]
void gemm_tn_acc(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * grow[j];
    }
  }
}

std::size_t resolve_axis(const Tensor& x, int axis) {
  const auto rank = static_cast<int>(x.rank());
  const int resolved = axis < 0 ? axis + rank : axis;
  if (resolved < 0 || resolved >= rank) {
    throw IndexError("axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
  }
  return static_cast<std::size_t>(resolved);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op({m, n}, std::move(out), {a, b},
                   [a, b, m, k, n](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     if (!grads[0].empty())
                       gemm_nt_acc(g.data(), b.data().data(), grads[0].data(), m, k, n);
                     if (!grads[1].empty())
                       gemm_tn_acc(a.data().data(), g.data(), grads[1].data(), m, k, n);
                   });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batches = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batches || b.dim(1) != k) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(batches * m * n, 0.0);
  for (std::size_t g = 0; g < batches; ++g) {
    gemm_acc(a.data().data() + g * m * k, b.data().data() + g * k * n, out.data() + g * m * n, m,
             k, n);
  }
  return record_op({batches, m, n}, std::move(out), {a, b},
                   [a, b, batches, m, k, n](std::span<const double>, std::span<const double> g,
                                            std::span<const GradSpan> grads) {
                     for (std::size_t i = 0; i < batches; ++i) {
                       const double* gi = g.data() + i * m * n;
                       if (!grads[0].empty())
                         gemm_nt_acc(gi, b.data().data() + i * k * n, grads[0].data() + i * m * k,
                                     m, k, n);
                       if (!grads[1].empty())
                         gemm_tn_acc(a.data().data() + i * m * k, gi, grads[1].data() + i * k * n,
                                     m, k, n);
                     }
                   });
}

Tensor transpose_last2(const Tensor& x) {
  require_rank(x, 3, "transpose_last2");
  const std::size_t batches = x.dim(0), r = x.dim(1), c = x.dim(2);
  std::vector<double> out(x.numel());
  const auto src = x.data();
  for (std::size_t g = 0; g < batches; ++g)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[g * r * c + j * r + i] = src[g * r * c + i * c + j];
  return record_op({batches, c, r}, std::move(out), {x},
                   [batches, r, c](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     for (std::size_t b = 0; b < batches; ++b)
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           grads[0][b * r * c + i * c + j] += g[b * r * c + j * r + i];
                   });
}

Tensor swap_axes12(const Tensor& x) {
  require_rank(x, 4, "swap_axes12");
  const std::size_t d0 = x.dim(0), d1 = x.dim(1), d2 = x.dim(2), d3 = x.dim(3);
  std::vector<double> out(x.numel());
  const auto src = x.data();
  for (std::size_t a = 0; a < d0; ++a)
    for (std::size_t b = 0; b < d1; ++b)
      for (std::size_t c = 0; c < d2; ++c) {
        const double* s = src.data() + ((a * d1 + b) * d2 + c) * d3;
        double* o = out.data() + ((a * d2 + c) * d1 + b) * d3;
        std::copy(s, s + d3, o);
      }
  return record_op({d0, d2, d1, d3}, std::move(out), {x},
                   [d0, d1, d2, d3](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     for (std::size_t a = 0; a < d0; ++a)
                       for (std::size_t b = 0; b < d1; ++b)
                         for (std::size_t c = 0; c < d2; ++c) {
                           double* dst = grads[0].data() + ((a * d1 + b) * d2 + c) * d3;
                           const double* gs = g.data() + ((a * d2 + c) * d1 + b) * d3;
                           for (std::size_t e = 0; e < d3; ++e) dst[e] += gs[e];
                         }
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return record_op(std::move(shape), std::move(out), {x},
                   [](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return record_op(a.shape(), std::move(out), {a, b},
                   [](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     for (const auto& dst : grads) {
                       if (dst.empty()) continue;
                       for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return record_op(a.shape(), std::move(out), {a, b},
                   [a, b](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     const auto x = a.data(), y = b.data();
                     if (!grads[0].empty())
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * y[i];
                     if (!grads[1].empty())
                       for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] += g[i] * x[i];
                   });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  const auto src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * factor;
  return record_op(x.shape(), std::move(out), {x},
                   [factor](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * factor;
                   });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match rows of " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  const auto src = x.data(), b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = src[i * n + j] + b[j];
  return record_op(x.shape(), std::move(out), {x, bias},
                   [m, n](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     if (!grads[0].empty())
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                     if (!grads[1].empty())
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) grads[1][j] += g[i * n + j];
                   });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] > 0.0 ? src[i] : 0.0;
  return record_op(x.shape(), std::move(out), {x},
                   [x](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     const auto src = x.data();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (src[i] > 0.0) grads[0][i] += g[i];
                   });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (const double v : x.data()) total += v;
  return record_op({}, {total}, {x}, [](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
    for (auto& v : grads[0]) v += g[0];
  });
}

Tensor mean_axis1(const Tensor& x) {
  require_rank(x, 3, "mean_axis1");
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  if (l == 0) throw ShapeError("mean_axis1: empty middle axis in " + shape_str(x.shape()));
  std::vector<double> out(b * d, 0.0);
  const auto src = x.data();
  const double inv = 1.0 / static_cast<double>(l);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += src[(i * l + t) * d + j];
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= inv;
  }
  return record_op({b, d}, std::move(out), {x},
                   [b, l, d, inv](std::span<const double>, std::span<const double> g, std::span<const GradSpan> grads) {
                     for (std::size_t i = 0; i < b; ++i)
                       for (std::size_t t = 0; t < l; ++t)
                         for (std::size_t j = 0; j < d; ++j)
                           grads[0][(i * l + t) * d + j] += g[i * d + j] * inv;
                   });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = resolve_axis(x, axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.dim(i);
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(ax);

  std::vector<double> out(x.numel());
  const auto src = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, src[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(src[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
    }
  }
  return record_op(x.shape(), std::move(out), {x},
                   [outer, inner, n](std::span<const double> y, std::span<const double> g,
                                     std::span<const GradSpan> grads) {
                     for (std::size_t o = 0; o < outer; ++o) {
                       for (std::size_t in = 0; in < inner; ++in) {
                         const std::size_t base = o * n * inner + in;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < n; ++i)
                           dot += g[base + i * inner] * y[base + i * inner];
                         for (std::size_t i = 0; i < n; ++i)
                           grads[0][base + i * inner] +=
                               y[base + i * inner] * (g[base + i * inner] - dot);
                       }
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                     shape_str(beta.shape()) + " do not match last axis of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = d == 0 ? 0 : x.numel() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto src = x.data(), gm = gamma.data(), bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gm[j] * h + bt[j];
    }
  }
  return record_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat, rstd, rows, d](std::span<const double>, std::span<const double> g,
                                   std::span<const GradSpan> grads) {
        const auto gm = gamma.data();
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* h = xhat->data() + r * d;
          const double* gr = g.data() + r * d;
          if (!grads[1].empty())
            for (std::size_t j = 0; j < d; ++j) grads[1][j] += gr[j] * h[j];
          if (!grads[2].empty())
            for (std::size_t j = 0; j < d; ++j) grads[2][j] += gr[j];
          if (grads[0].empty()) continue;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = gr[j] * gm[j];
            mean_dh += dxhat[j];
            mean_dh_h += dxhat[j] * h[j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          const double rs = (*rstd)[r];
          for (std::size_t j = 0; j < d; ++j)
            grads[0][r * d + j] += rs * (dxhat[j] - mean_dh - h[j] * mean_dh_h);
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  if (b == 0) throw ShapeError("cross_entropy: empty batch");
  for (const int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  const auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = z.data() + i * c;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    double se = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[i * c + j] = e;
      se += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= se;
    total += (mx + std::log(se)) - row[labels[i]];
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return record_op({}, {total / static_cast<double>(b)}, {logits},
                   [probs, ys = std::move(ys), b, c](std::span<const double>,
                                                     std::span<const double> g,
                                                     std::span<const GradSpan> grads) {
                     const double w = g[0] / static_cast<double>(b);
                     for (std::size_t i = 0; i < b; ++i) {
                       for (std::size_t j = 0; j < c; ++j)
                         grads[0][i * c + j] += w * (*probs)[i * c + j];
                       grads[0][i * c + static_cast<std::size_t>(ys[i])] -= w;
                     }
                   });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (const int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(v) + ")");
    }
  }
  std::vector<double> out(ids.size() * d);
  const auto src = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* row = src.data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(row, row + d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return record_op({ids.size(), d}, std::move(out), {table},
                   [idx = std::move(idx), d](std::span<const double>, std::span<const double> g,
                                             std::span<const GradSpan> grads) {
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       double* dst = grads[0].data() + static_cast<std::size_t>(idx[i]) * d;
                       for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
                     }
                   });
}

}  // namespace maskroute
