#include "stas/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::ad {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()),
                                     shape_str(b.shape())));
  }
}

void require_matrix(const char* op, const Tensor& x) {
  if (x.rank() > 2) {
    throw DimensionError(fmt::format("{}: expected a matrix, got {}", op, shape_str(x.shape())));
  }
}

std::size_t resolve_axis(const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int resolved = axis < 0 ? axis + r : axis;
  if (resolved < 0 || resolved >= r) {
    throw IndexError(fmt::format("axis {} invalid for shape {}", axis, shape_str(x.shape())));
  }
  return static_cast<std::size_t>(resolved);
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& forward_derivative) {
  // forward_derivative(v) -> {f(v), f'(v)}
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> deriv(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    auto [f, d] = forward_derivative(xv[i]);
    out[i] = f;
    deriv[i] = d;
  }
  return Tensor::make_node(x.shape(), std::move(out), op, {x.node()},
                           [deriv = std::move(deriv)](TensorImpl& self) {
                             auto& p = *self.parents[0];
                             if (!p.requires_grad) return;
                             auto& g = p.grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv[i];
                           });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_node(a.shape(), std::move(out), "add", {a.node(), b.node()},
                           [](TensorImpl& self) {
                             for (auto& parent : self.parents) {
                               if (!parent->requires_grad) continue;
                               auto& g = parent->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                             }
                           });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_node(a.shape(), std::move(out), "sub", {a.node(), b.node()},
                           [](TensorImpl& self) {
                             const double sign[2] = {1.0, -1.0};
                             for (std::size_t k = 0; k < 2; ++k) {
                               auto& parent = *self.parents[k];
                               if (!parent.requires_grad) continue;
                               auto& g = parent.grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
                             }
                           });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_node(a.shape(), std::move(out), "mul", {a.node(), b.node()},
                           [](TensorImpl& self) {
                             auto& pa = *self.parents[0];
                             auto& pb = *self.parents[1];
                             if (pa.requires_grad) {
                               auto& g = pa.grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
                             }
                             if (pb.requires_grad) {
                               auto& g = pb.grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
                             }
                           });
}

Tensor scale(const Tensor& x, double factor) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return Tensor::make_node(x.shape(), std::move(out), "scale", {x.node()},
                           [factor](TensorImpl& self) {
                             auto& p = *self.parents[0];
                             auto& g = p.grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
                           });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_matrix("add_row", x);
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (row.numel() != n) {
    throw DimensionError(fmt::format("add_row: row {} does not match columns of {}",
                                     shape_str(row.shape()), shape_str(x.shape())));
  }
  const auto xv = x.values();
  const auto rv = row.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + rv[j];
  return Tensor::make_node(x.shape(), std::move(out), "add_row", {x.node(), row.node()},
                           [m, n](TensorImpl& self) {
                             auto& px = *self.parents[0];
                             auto& pr = *self.parents[1];
                             if (px.requires_grad) {
                               auto& g = px.grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                             }
                             if (pr.requires_grad) {
                               auto& g = pr.grad_buffer();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                             }
                           });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw DimensionError(fmt::format("matmul: inner dimensions differ, {} x {}",
                                     shape_str(a.shape()), shape_str(b.shape())));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return Tensor::make_node({m, n}, std::move(out), "matmul", {a.node(), b.node()},
                           [m, k, n](TensorImpl& self) {
                             auto& pa = *self.parents[0];
                             auto& pb = *self.parents[1];
                             if (pa.requires_grad) {
                               // dA = dC * B^T
                               gemm_nt(self.grad.data(), pb.value.data(), pa.grad_buffer().data(), m, n, k);
                             }
                             if (pb.requires_grad) {
                               // dB = A^T * dC
                               gemm_tn(pa.value.data(), self.grad.data(), pb.grad_buffer().data(), m, k, n);
                             }
                           });
}

Tensor transpose(const Tensor& x) {
  require_matrix("transpose", x);
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  const auto xv = x.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  return Tensor::make_node({n, m}, std::move(out), "transpose", {x.node()},
                           [m, n](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
                           });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) {
    const double t = std::tanh(v);
    return std::pair{t, 1.0 - t * t};
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary("gelu", x, [](double v) {
    const double inner = kC * (v + kA * v * v * v);
    const double t = std::tanh(inner);
    const double f = 0.5 * v * (1.0 + t);
    const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
    return std::pair{f, d};
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = resolve_axis(x, axis);
  const AxisSplit s = split_at(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
    }
  }
  return Tensor::make_node(x.shape(), std::move(out), "softmax", {x.node()}, [s](TensorImpl& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          dot += self.grad[idx] * y[idx];
        }
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          g[idx] += y[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t ax = resolve_axis(x, axis);
  const AxisSplit s = split_at(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) total += std::exp(xv[base + j * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = xv[base + j * s.inner] - lse;
    }
  }
  return Tensor::make_node(
      x.shape(), std::move(out), "log_softmax", {x.node()}, [s](TensorImpl& self) {
        auto& g = self.parents[0]->grad_buffer();
        const auto& y = self.value;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            double total = 0.0;
            for (std::size_t j = 0; j < s.len; ++j) total += self.grad[base + j * s.inner];
            for (std::size_t j = 0; j < s.len; ++j) {
              const std::size_t idx = base + j * s.inner;
              g[idx] += self.grad[idx] - std::exp(y[idx]) * total;
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError(fmt::format("layer_norm: gain {} / bias {} do not match {}",
                                     shape_str(gain.shape()), shape_str(bias.shape()),
                                     shape_str(x.shape())));
  }
  const std::size_t m = x.numel() / n;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * rstd[r];
      out[r * n + j] = xhat[r * n + j] * gv[j] + bv[j];
    }
  }
  return Tensor::make_node(
      x.shape(), std::move(out), "layer_norm", {x.node(), gain.node(), bias.node()},
      [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](TensorImpl& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          const double* dy = self.grad.data() + r * n;
          const double* xh = xhat.data() + r * n;
          if (pg.requires_grad) {
            auto& g = pg.grad_buffer();
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j] * xh[j];
          }
          if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j];
          }
          if (px.requires_grad) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = dy[j] * pg.value[j];
              mean_d += d;
              mean_dx += d * xh[j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            auto& g = px.grad_buffer();
            for (std::size_t j = 0; j < n; ++j) {
              const double d = dy[j] * pg.value[j];
              g[r * n + j] += rstd[r] * (d - mean_d - xh[j] * mean_dx);
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     Reduction reduction) {
  require_matrix("cross_entropy", logits);
  const std::size_t m = logits.rows();
  const std::size_t v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError(fmt::format("cross_entropy: {} targets for {} rows", targets.size(), m));
  }
  for (auto t : targets) {
    if (t >= v) throw IndexError(fmt::format("cross_entropy: target {} >= classes {}", t, v));
  }
  const auto lv = logits.values();
  std::vector<double> probs(lv.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = lv.data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double total = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[r * v + j] = std::exp(row[j] - mx);
      total += probs[r * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] /= total;
    loss -= row[targets[r]] - mx - std::log(total);
  }
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(m) : 1.0;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return Tensor::make_node(
      {1}, {loss * norm}, "cross_entropy", {logits.node()},
      [m, v, norm, probs = std::move(probs), tgt = std::move(tgt)](TensorImpl& self) {
        auto& g = self.parents[0]->grad_buffer();
        const double up = self.grad[0] * norm;
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < v; ++j) g[r * v + j] += up * probs[r * v + j];
          g[r * v + tgt[r]] -= up;
        }
      });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return Tensor::make_node({1}, {total}, "sum", {x.node()}, [](TensorImpl& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto xv = x.values();
  const double inv = 1.0 / static_cast<double>(xv.size());
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return Tensor::make_node({1}, {total * inv}, "mean", {x.node()}, [inv](TensorImpl& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0] * inv;
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_matrix("pick", x);
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (index.size() != m) {
    throw DimensionError(fmt::format("pick: {} indices for {} rows", index.size(), m));
  }
  const auto xv = x.values();
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (index[r] >= n) throw IndexError(fmt::format("pick: index {} >= columns {}", index[r], n));
    out[r] = xv[r * n + index[r]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::make_node({m}, std::move(out), "pick", {x.node()},
                           [n, idx = std::move(idx)](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t r = 0; r < idx.size(); ++r) g[r * n + idx[r]] += self.grad[r];
                           });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix("gather_rows", table);
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t rows = table.rows();
  const std::size_t n = table.cols();
  const auto tv = table.values();
  std::vector<double> out(ids.size() * n);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) {
      throw IndexError(fmt::format("gather_rows: row {} >= table rows {}", ids[r], rows));
    }
    std::copy_n(tv.data() + ids[r] * n, n, out.data() + r * n);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return Tensor::make_node({ids.size(), n}, std::move(out), "gather_rows", {table.node()},
                           [n, idx = std::move(idx)](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t r = 0; r < idx.size(); ++r)
                               for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
                           });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t n = parts[0].cols();
  std::size_t total_rows = 0;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p);
    if (p.cols() != n) {
      throw DimensionError(fmt::format("concat_rows: column mismatch {} vs {}",
                                       shape_str(parts[0].shape()), shape_str(p.shape())));
    }
    offsets.push_back(total_rows * n);
    total_rows += p.rows();
    parents.push_back(p.node());
  }
  std::vector<double> out;
  out.reserve(total_rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::make_node({total_rows, n}, std::move(out), "concat_rows", std::move(parents),
                           [offsets = std::move(offsets)](TensorImpl& self) {
                             for (std::size_t k = 0; k < self.parents.size(); ++k) {
                               auto& p = *self.parents[k];
                               if (!p.requires_grad) continue;
                               auto& g = p.grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
                             }
                           });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].rows();
  std::size_t total_cols = 0;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> col_offsets;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (p.rows() != m) {
      throw DimensionError(fmt::format("concat_cols: row mismatch {} vs {}",
                                       shape_str(parts[0].shape()), shape_str(p.shape())));
    }
    col_offsets.push_back(total_cols);
    widths.push_back(p.cols());
    total_cols += p.cols();
    parents.push_back(p.node());
  }
  std::vector<double> out(m * total_cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total_cols + col_offsets[k]);
  }
  return Tensor::make_node(
      {m, total_cols}, std::move(out), "concat_cols", std::move(parents),
      [m, total_cols, col_offsets = std::move(col_offsets), widths = std::move(widths)](TensorImpl& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = *self.parents[k];
          if (!p.requires_grad) continue;
          auto& g = p.grad_buffer();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < widths[k]; ++j)
              g[r * widths[k] + j] += self.grad[r * total_cols + col_offsets[k] + j];
        }
      });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix("slice_rows", x);
  const std::size_t n = x.cols();
  if (count == 0 || start + count > x.rows()) {
    throw IndexError(fmt::format("slice_rows: [{}, {}) outside {}", start, start + count,
                                 shape_str(x.shape())));
  }
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(start * n),
                          xv.begin() + static_cast<std::ptrdiff_t>((start + count) * n));
  return Tensor::make_node({count, n}, std::move(out), "slice_rows", {x.node()},
                           [offset = start * n](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
                           });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix("slice_cols", x);
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (count == 0 || start + count > n) {
    throw IndexError(fmt::format("slice_cols: [{}, {}) outside {}", start, start + count,
                                 shape_str(x.shape())));
  }
  const auto xv = x.values();
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(xv.data() + r * n + start, count, out.data() + r * count);
  return Tensor::make_node({m, count}, std::move(out), "slice_cols", {x.node()},
                           [m, n, start, count](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t r = 0; r < m; ++r)
                               for (std::size_t j = 0; j < count; ++j) g[r * n + start + j] += self.grad[r * count + j];
                           });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError(fmt::format("dropout probability {} not in [0, 1)", p));
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  const auto xv = x.values();
  std::vector<double> mask(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return Tensor::make_node(x.shape(), std::move(out), "dropout", {x.node()},
                           [mask = std::move(mask)](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                           });
}

Tensor additive_scores(const Tensor& query, const Tensor& key, const Tensor& v) {
  require_matrix("additive_scores", query);
  require_matrix("additive_scores", key);
  const std::size_t t_len = query.rows();
  const std::size_t n = key.rows();
  const std::size_t d = query.cols();
  if (key.cols() != d || v.numel() != d) {
    throw DimensionError(fmt::format("additive_scores: query {}, key {}, v {} disagree",
                                     shape_str(query.shape()), shape_str(key.shape()),
                                     shape_str(v.shape())));
  }
  const auto qv = query.values();
  const auto kv = key.values();
  const auto vv = v.values();
  std::vector<double> act(t_len * n * d);
  std::vector<double> out(t_len * n);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      double* a = act.data() + (t * n + i) * d;
      for (std::size_t c = 0; c < d; ++c) {
        a[c] = std::tanh(qv[t * d + c] + kv[i * d + c]);
        s += vv[c] * a[c];
      }
      out[t * n + i] = s;
    }
  }
  return Tensor::make_node(
      {t_len, n}, std::move(out), "additive_scores", {query.node(), key.node(), v.node()},
      [t_len, n, d, act = std::move(act)](TensorImpl& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        std::vector<double>* gq = pq.requires_grad ? &pq.grad_buffer() : nullptr;
        std::vector<double>* gk = pk.requires_grad ? &pk.grad_buffer() : nullptr;
        std::vector<double>* gv = pv.requires_grad ? &pv.grad_buffer() : nullptr;
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t i = 0; i < n; ++i) {
            const double up = self.grad[t * n + i];
            if (up == 0.0) continue;
            const double* a = act.data() + (t * n + i) * d;
            for (std::size_t c = 0; c < d; ++c) {
              if (gv) (*gv)[c] += up * a[c];
              const double inner = up * pv.value[c] * (1.0 - a[c] * a[c]);
              if (gq) (*gq)[t * d + c] += inner;
              if (gk) (*gk)[i * d + c] += inner;
            }
          }
        }
      });
}

}  // namespace stas::ad
