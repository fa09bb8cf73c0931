#include "minikd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace minikd {

namespace {

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> values, bool on_tape) {
  return Tensor::from_values(std::move(shape), std::move(values), on_tape);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool rec = tracing({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl(), b.impl()}, r.impl(),
        [](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          for (std::vector<double>* g : ia) {
            if (!g) continue;
            for (std::size_t i = 0; i < oa.size(); ++i) (*g)[i] += oa[i];
          }
        });
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool rec = tracing({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl(), b.impl()}, r.impl(),
        [](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (ia[0]) {
            for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[i] += oa[i];
          }
          if (ia[1]) {
            for (std::size_t i = 0; i < oa.size(); ++i) (*ia[1])[i] -= oa[i];
          }
        });
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool rec = tracing({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto ad = a.impl(), bd = b.impl();
    Tape::active()->record(
        {ad, bd}, r.impl(),
        [ad, bd](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (ia[0]) {
            for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[i] += oa[i] * bd->values[i];
          }
          if (ia[1]) {
            for (std::size_t i = 0; i < oa.size(); ++i) (*ia[1])[i] += oa[i] * ad->values[i];
          }
        });
  }
  return r;
}

Tensor scale(const Tensor& a, double c) {
  const bool rec = tracing({&a});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [c](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[i] += oa[i] * c;
        });
  }
  return r;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_rank2(a, "add_rowvec");
  if (v.rank() != 1 || v.shape()[0] != a.cols()) {
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) +
                     " does not match columns of " + shape_str(a.shape()));
  }
  const bool rec = tracing({&a, &v});
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] + v.values()[j];
  }
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl(), v.impl()}, r.impl(),
        [m, n](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (ia[0]) {
            for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[i] += oa[i];
          }
          if (ia[1]) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < n; ++j) (*ia[1])[j] += oa[i * n + j];
            }
          }
        });
  }
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const bool rec = tracing({&a, &b});
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Tensor r = make_result({m, n}, std::move(out), rec);
  if (rec) {
    auto ad = a.impl(), bd = b.impl();
    Tape::active()->record(
        {ad, bd}, r.impl(),
        [ad, bd, m, k, n](const std::vector<double>& oa,
                          const std::vector<std::vector<double>*>& ia) {
          if (ia[0]) {  // dA = dC . B^T
            double* ga = ia[0]->data();
            const double* bv2 = bd->values.data();
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < n; ++j) {
                const double g = oa[i * n + j];
                const double* brow = bv2 + j;  // column j of B via stride n
                for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * brow[p * n];
              }
            }
          }
          if (ia[1]) {  // dB = A^T . dC
            double* gb = ia[1]->data();
            const double* av2 = ad->values.data();
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                const double aip = av2[i * k + p];
                const double* orow = oa.data() + i * n;
                double* grow = gb + p * n;
                for (std::size_t j = 0; j < n; ++j) grow[j] += aip * orow[j];
              }
            }
          }
        });
  }
  return r;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const bool rec = tracing({&a});
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  }
  Tensor r = make_result({n, m}, std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [m, n](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) (*ia[0])[i * n + j] += oa[j * m + i];
          }
        });
  }
  return r;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: element count changes from " + shape_str(a.shape()) + " to " +
                     shape_str(shape));
  }
  const bool rec = tracing({&a});
  Tensor r = make_result(std::move(shape), a.values(), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[i] += oa[i];
        });
  }
  return r;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank2(a, "slice_rows");
  if (start + count > a.rows() || count == 0) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_str(a.shape()));
  }
  const std::size_t n = a.cols();
  const bool rec = tracing({&a});
  std::vector<double> out(a.values().begin() + start * n,
                          a.values().begin() + (start + count) * n);
  Tensor r = make_result({count, n}, std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [start, n](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[start * n + i] += oa[i];
        });
  }
  return r;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank2(a, "slice_cols");
  if (start + count > a.cols() || count == 0) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  const bool rec = tracing({&a});
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.values()[i * n + start + j];
  }
  Tensor r = make_result({m, count}, std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [m, n, start, count](const std::vector<double>& oa,
                             const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < count; ++j) {
              (*ia[0])[i * n + start + j] += oa[i * count + j];
            }
          }
        });
  }
  return r;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool rec = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch: " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    total += p.cols();
    rec = rec || tracing({&p});
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = p.values()[i * w + j];
    }
    widths.push_back(w);
    off += w;
  }
  Tensor r = make_result({m, total}, std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorData>> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    Tape::active()->record(
        std::move(ins), r.impl(),
        [m, total, widths](const std::vector<double>& oa,
                           const std::vector<std::vector<double>*>& ia) {
          std::size_t off2 = 0;
          for (std::size_t p = 0; p < widths.size(); ++p) {
            const std::size_t w = widths[p];
            if (ia[p]) {
              for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                  (*ia[p])[i * w + j] += oa[i * total + off2 + j];
                }
              }
            }
            off2 += w;
          }
        });
  }
  return r;
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  const Shape base = parts[0].shape();
  bool rec = false;
  for (const Tensor& p : parts) {
    if (p.shape() != base) {
      throw ShapeError("stack: shape mismatch: " + shape_str(base) + " vs " +
                       shape_str(p.shape()));
    }
    rec = rec || tracing({&p});
  }
  const std::size_t piece = shape_numel(base);
  std::vector<double> out;
  out.reserve(parts.size() * piece);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Shape shape;
  shape.push_back(parts.size());
  shape.insert(shape.end(), base.begin(), base.end());
  Tensor r = make_result(std::move(shape), std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorData>> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    Tape::active()->record(
        std::move(ins), r.impl(),
        [piece](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          for (std::size_t p = 0; p < ia.size(); ++p) {
            if (!ia[p]) continue;
            for (std::size_t i = 0; i < piece; ++i) (*ia[p])[i] += oa[p * piece + i];
          }
        });
  }
  return r;
}

namespace {

Tensor softmax_impl(const Tensor& a, const std::vector<std::uint8_t>* col_valid) {
  require_rank2(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (col_valid && !col_valid->empty() && col_valid->size() != n) {
    throw ShapeError("softmax_rows_masked: mask length " + std::to_string(col_valid->size()) +
                     " does not match columns of " + shape_str(a.shape()));
  }
  const bool masked = col_valid && !col_valid->empty();
  const bool rec = tracing({&a});
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (masked && !(*col_valid)[j]) continue;
      mx = std::max(mx, a.values()[i * n + j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (masked && !(*col_valid)[j]) continue;
      const double e = std::exp(a.values()[i * n + j] - mx);
      out[i * n + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
  }
  Tensor r = make_result({m, n}, std::move(out), rec);
  if (rec) {
    auto rd = r.impl();
    Tape::active()->record(
        {a.impl()}, rd,
        [rd, m, n](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < m; ++i) {
            const double* p = rd->values.data() + i * n;
            const double* g = oa.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * p[j];
            for (std::size_t j = 0; j < n; ++j) (*ia[0])[i * n + j] += p[j] * (g[j] - dot);
          }
        });
  }
  return r;
}

}  // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_impl(a, nullptr); }

Tensor softmax_rows_masked(const Tensor& a, const std::vector<std::uint8_t>& col_valid) {
  return softmax_impl(a, &col_valid);
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(a, "layer_norm");
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.rank() != 1 || gain.shape()[0] != n || bias.rank() != 1 || bias.shape()[0] != n) {
    throw ShapeError("layer_norm: gain/bias must be length-" + std::to_string(n) + " vectors");
  }
  if (eps <= 0) throw std::invalid_argument("layer_norm: eps must be positive");
  const bool rec = tracing({&a, &gain, &bias});
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.values().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat[i * n + j] = xh;
      out[i * n + j] = gain.values()[j] * xh + bias.values()[j];
    }
  }
  Tensor r = make_result({m, n}, std::move(out), rec);
  if (rec) {
    auto gd = gain.impl();
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
    Tape::active()->record(
        {a.impl(), gain.impl(), bias.impl()}, r.impl(),
        [gd, xh, is, m, n](const std::vector<double>& oa,
                           const std::vector<std::vector<double>*>& ia) {
          for (std::size_t i = 0; i < m; ++i) {
            const double* g = oa.data() + i * n;
            const double* x = xh->data() + i * n;
            if (ia[1]) {
              for (std::size_t j = 0; j < n; ++j) (*ia[1])[j] += g[j] * x[j];
            }
            if (ia[2]) {
              for (std::size_t j = 0; j < n; ++j) (*ia[2])[j] += g[j];
            }
            if (ia[0]) {
              double mean_dy = 0.0, mean_dyx = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                const double dy = g[j] * gd->values[j];
                mean_dy += dy;
                mean_dyx += dy * x[j];
              }
              mean_dy /= static_cast<double>(n);
              mean_dyx /= static_cast<double>(n);
              for (std::size_t j = 0; j < n; ++j) {
                const double dy = g[j] * gd->values[j];
                (*ia[0])[i * n + j] += (*is)[i] * (dy - mean_dy - x[j] * mean_dyx);
              }
            }
          }
        });
  }
  return r;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  const bool rec = tracing({&a});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto ad = a.impl();
    Tape::active()->record(
        {ad}, r.impl(),
        [ad](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < oa.size(); ++i) {
            const double x = ad->values[i];
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double d =
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            (*ia[0])[i] += oa[i] * d;
          }
        });
  }
  return r;
}

Tensor tanh_op(const Tensor& a) {
  const bool rec = tracing({&a});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto rd = r.impl();
    Tape::active()->record(
        {a.impl()}, rd,
        [rd](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < oa.size(); ++i) {
            const double y = rd->values[i];
            (*ia[0])[i] += oa[i] * (1.0 - y * y);
          }
        });
  }
  return r;
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const bool rec = tracing({&a});
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv_keep = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double k = keep(rng) ? inv_keep : 0.0;
    (*mask)[i] = k;
    out[i] = a.values()[i] * k;
  }
  Tensor r = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [mask](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < oa.size(); ++i) (*ia[0])[i] += oa[i] * (*mask)[i];
        });
  }
  return r;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "embedding_rows");
  const std::size_t v = table.rows(), d = table.cols();
  if (ids.empty()) throw std::invalid_argument("embedding_rows: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::out_of_range("embedding_rows: id " + std::to_string(id) +
                              " outside table with " + std::to_string(v) + " rows");
    }
  }
  const bool rec = tracing({&table});
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* row = table.values().data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(row, row + d, out.begin() + i * d);
  }
  Tensor r = make_result({ids.size(), d}, std::move(out), rec);
  if (rec) {
    Tape::active()->record(
        {table.impl()}, r.impl(),
        [ids, d](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (std::size_t i = 0; i < ids.size(); ++i) {
            double* grow = ia[0]->data() + static_cast<std::size_t>(ids[i]) * d;
            for (std::size_t j = 0; j < d; ++j) grow[j] += oa[i * d + j];
          }
        });
  }
  return r;
}

Tensor sum_all(const Tensor& a) {
  const bool rec = tracing({&a});
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor r = Tensor::from_values({1}, {s}, rec);
  if (rec) {
    Tape::active()->record(
        {a.impl()}, r.impl(),
        [](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          for (double& g : *ia[0]) g += oa[0];
        });
  }
  return r;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  const bool rec = tracing({&a, &b});
  const std::size_t n = a.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  Tensor r = Tensor::from_values({1}, {s / static_cast<double>(n)}, rec);
  if (rec) {
    auto ad = a.impl(), bd = b.impl();
    Tape::active()->record(
        {ad, bd}, r.impl(),
        [ad, bd, n](const std::vector<double>& oa, const std::vector<std::vector<double>*>& ia) {
          const double c = 2.0 * oa[0] / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = c * (ad->values[i] - bd->values[i]);
            if (ia[0]) (*ia[0])[i] += d;
            if (ia[1]) (*ia[1])[i] -= d;
          }
        });
  }
  return r;
}

namespace {

// Row log-softmax, max-shifted.
void log_softmax_row(const double* row, std::size_t n, double* out) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double denom = 0.0;
  for (std::size_t j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
  const double log_denom = std::log(denom);
  for (std::size_t j = 0; j < n; ++j) out[j] = row[j] - mx - log_denom;
}

}  // namespace

Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits) {
  require_same_shape(p_logits, q_logits, "kl_div");
  require_rank2(p_logits, "kl_div");
  const std::size_t b = p_logits.rows(), c = p_logits.cols();
  if (c < 2) throw ShapeError("kl_div: needs at least 2 classes, got " + shape_str(p_logits.shape()));
  const bool rec = tracing({&p_logits, &q_logits});
  auto logp = std::make_shared<std::vector<double>>(b * c);
  auto logq = std::make_shared<std::vector<double>>(b * c);
  auto row_kl = std::make_shared<std::vector<double>>(b, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    log_softmax_row(p_logits.values().data() + i * c, c, logp->data() + i * c);
    log_softmax_row(q_logits.values().data() + i * c, c, logq->data() + i * c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      s += std::exp((*logp)[i * c + j]) * ((*logp)[i * c + j] - (*logq)[i * c + j]);
    }
    (*row_kl)[i] = s;
    total += s;
  }
  Tensor r = Tensor::from_values({1}, {total / static_cast<double>(b)}, rec);
  if (rec) {
    Tape::active()->record(
        {p_logits.impl(), q_logits.impl()}, r.impl(),
        [logp, logq, row_kl, b, c](const std::vector<double>& oa,
                                   const std::vector<std::vector<double>*>& ia) {
          const double g = oa[0] / static_cast<double>(b);
          for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              const double p = std::exp((*logp)[i * c + j]);
              const double q = std::exp((*logq)[i * c + j]);
              if (ia[0]) {
                (*ia[0])[i * c + j] +=
                    g * p * ((*logp)[i * c + j] - (*logq)[i * c + j] - (*row_kl)[i]);
              }
              if (ia[1]) (*ia[1])[i * c + j] += g * (q - p);
            }
          }
        });
  }
  return r;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank2(logits, "cross_entropy");
  const std::size_t b = logits.rows(), c = logits.cols();
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(c) + ")");
    }
  }
  const bool rec = tracing({&logits});
  auto logq = std::make_shared<std::vector<double>>(b * c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    log_softmax_row(logits.values().data() + i * c, c, logq->data() + i * c);
    total -= (*logq)[i * c + static_cast<std::size_t>(labels[i])];
  }
  Tensor r = Tensor::from_values({1}, {total / static_cast<double>(b)}, rec);
  if (rec) {
    Tape::active()->record(
        {logits.impl()}, r.impl(),
        [logq, labels, b, c](const std::vector<double>& oa,
                             const std::vector<std::vector<double>*>& ia) {
          if (!ia[0]) return;
          const double g = oa[0] / static_cast<double>(b);
          for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              const double q = std::exp((*logq)[i * c + j]);
              const double onehot = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
              (*ia[0])[i * c + j] += g * (q - onehot);
            }
          }
        });
  }
  return r;
}

void fill_trunc_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values_mut()) {
    double x = dist(rng);
    while (std::abs(x) > 2.0 * stddev) x = dist(rng);
    v = x;
  }
}

}  // namespace minikd
