#include "disco/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "disco/kernels.hpp"

namespace disco::ops {
namespace {

Tape& tape_of(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": unbound operand");
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

Tape& tape_of(const Var& a, const char* op) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": unbound operand");
  return a.tape();
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() > 2) {
    throw ShapeError(std::string(op) + ": expected a vector or matrix, got " + shape_to_string(a.shape()));
  }
}

void require_offsets(std::span<const std::size_t> offsets, std::size_t rows, const char* op) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw ShapeError(std::string(op) + ": segment offsets must span [0, " + std::to_string(rows) + "]");
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] <= offsets[s]) throw ShapeError(std::string(op) + ": empty or decreasing segment");
  }
}

// Accumulate `fn(i)` into the gradient slot of `v` when it needs one.
template <typename Fn>
void accumulate(Tape& tape, const Var& v, Fn&& fn) {
  if (!v.needs_grad()) return;
  auto g = tape.grad_of(v).data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += fn(i);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t i) { return g[i]; });
    accumulate(t, b, [&](std::size_t i) { return g[i]; });
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t i) { return g[i]; });
    accumulate(t, b, [&](std::size_t i) { return -g[i]; });
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    accumulate(t, a, [&](std::size_t i) { return g[i] * bv[i]; });
    accumulate(t, b, [&](std::size_t i) { return g[i] * av[i]; });
  });
}

Var scale(const Var& a, double factor) {
  Tape& tape = tape_of(a, "scale");
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return tape.record(std::move(out), {a}, [a, factor](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t i) { return g[i] * factor; });
  });
}

Var exp(const Var& a) {
  Tape& tape = tape_of(a, "exp");
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  return tape.record(out, {a}, [a, y = out](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t i) { return g[i] * y[i]; });
  });
}

Var log(const Var& a) {
  Tape& tape = tape_of(a, "log");
  Tensor out = a.value();
  for (auto& v : out.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive operand " + std::to_string(v));
    v = std::log(v);
  }
  return tape.record(std::move(out), {a}, [a](const Tensor& g, Tape& t) {
    const Tensor& x = a.value();
    accumulate(t, a, [&](std::size_t i) { return g[i] / x[i]; });
  });
}

Var tanh(const Var& a) {
  Tape& tape = tape_of(a, "tanh");
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::tanh(v);
  return tape.record(std::move(out), {a}, [a](const Tensor& g, Tape& t) {
    const Tensor& x = a.value();
    accumulate(t, a, [&](std::size_t i) {
      const double y = std::tanh(x[i]);
      return g[i] * (1.0 - y * y);
    });
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b, "matmul");
  if (a.value().rank() != 2 || b.value().rank() > 2) {
    throw ShapeError("matmul: expected [m,k] x [k,n] or [m,k] x [k], got " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const bool column = b.value().rank() == 1;
  const std::size_t bk = b.shape()[0];
  const std::size_t n = column ? 1 : b.shape()[1];
  if (bk != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out(column ? Shape{m} : Shape{m, n});
  kernels::active().gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g, Tape& t) {
    const auto& kt = kernels::active();
    if (a.needs_grad()) kt.gemm_nt(g.data().data(), b.value().data().data(), t.grad_of(a).data().data(), m, n, k);
    if (b.needs_grad()) kt.gemm_tn(a.value().data().data(), g.data().data(), t.grad_of(b).data().data(), k, m, n);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b, "matmul_nt");
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.value().rows();
  const std::size_t k = a.value().cols();
  const std::size_t n = b.value().rows();
  if (b.value().cols() != k) {
    throw ShapeError("matmul_nt: row lengths differ, " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::active().gemm_nt(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g, Tape& t) {
    const auto& kt = kernels::active();
    if (a.needs_grad()) kt.gemm_nn(g.data().data(), b.value().data().data(), t.grad_of(a).data().data(), m, n, k);
    if (b.needs_grad()) kt.gemm_tn(g.data().data(), a.value().data().data(), t.grad_of(b).data().data(), n, m, k);
  });
}

Var add_rowvec(const Var& a, const Var& v) {
  Tape& tape = tape_of(a, v, "add_rowvec");
  require_matrix(a, "add_rowvec");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  if (v.value().rank() != 1 || v.shape()[0] != n) {
    throw ShapeError("add_rowvec: cannot broadcast " + shape_to_string(v.shape()) + " over rows of " +
                     shape_to_string(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += v.value()[c];
  }
  return tape.record(std::move(out), {a, v}, [a, v, m, n](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t i) { return g[i]; });
    if (v.needs_grad()) {
      auto gv = t.grad_of(v).data();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gv[c] += g[r * n + c];
      }
    }
  });
}

Var sum(const Var& a) {
  Tape& tape = tape_of(a, "sum");
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return tape.record(Tensor::scalar(total), {a}, [a](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t) { return g[0]; });
  });
}

Var mean(const Var& a) {
  Tape& tape = tape_of(a, "mean");
  const double n = static_cast<double>(a.value().size());
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return tape.record(Tensor::scalar(total / n), {a}, [a, n](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t) { return g[0] / n; });
  });
}

Var l2norm(const Var& a) {
  Tape& tape = tape_of(a, "l2norm");
  const double norm = std::sqrt(kernels::sum_squares(a.value().data()));
  return tape.record(Tensor::scalar(norm), {a}, [a, norm](const Tensor& g, Tape& t) {
    if (norm == 0.0) return;
    const Tensor& x = a.value();
    accumulate(t, a, [&](std::size_t i) { return g[0] * x[i] / norm; });
  });
}

Var normalize_rows(const Var& a) {
  Tape& tape = tape_of(a, "normalize_rows");
  require_matrix(a, "normalize_rows");
  const std::size_t m = a.value().rows();
  Tensor out = a.value();
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    auto row = out.row(r);
    norms[r] = std::sqrt(kernels::sum_squares(row));
    if (!(norms[r] > 0.0)) throw NumericError("normalize_rows: zero-norm row " + std::to_string(r) + " (degenerate embedding)");
    for (auto& v : row) v /= norms[r];
  }
  return tape.record(out, {a}, [a, y = out, norms = std::move(norms)](const Tensor& g, Tape& t) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t r = 0; r < norms.size(); ++r) {
      const auto yr = y.row(r);
      const auto gr = g.row(r);
      const double proj = kernels::dot(yr, gr);
      auto out_row = ga.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out_row[c] += (gr[c] - yr[c] * proj) / norms[r];
    }
  });
}

Var logsumexp_rows(const Var& a) {
  Tape& tape = tape_of(a, "logsumexp_rows");
  require_matrix(a, "logsumexp_rows");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  Tensor out({m});
  Tensor softmax({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const auto row = a.value().row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    auto p = softmax.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      p[c] = std::exp(row[c] - mx);
      total += p[c];
    }
    for (auto& v : p) v /= total;
    out[r] = mx + std::log(total);
  }
  return tape.record(std::move(out), {a}, [a, softmax = std::move(softmax), n](const Tensor& g, Tape& t) {
    accumulate(t, a, [&](std::size_t i) { return g[i / n] * softmax[i]; });
  });
}

Var pick(const Var& a, std::span<const std::size_t> columns) {
  Tape& tape = tape_of(a, "pick");
  require_matrix(a, "pick");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  if (columns.size() != m) {
    throw ShapeError("pick: " + std::to_string(columns.size()) + " column indices for " + shape_to_string(a.shape()));
  }
  Tensor out({m});
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  for (std::size_t r = 0; r < m; ++r) {
    if (cols[r] >= n) throw ShapeError("pick: column index out of range for " + shape_to_string(a.shape()));
    out[r] = a.value().at(r, cols[r]);
  }
  return tape.record(std::move(out), {a}, [a, cols = std::move(cols), n](const Tensor& g, Tape& t) {
    if (!a.needs_grad()) return;
    auto ga = t.grad_of(a).data();
    for (std::size_t r = 0; r < cols.size(); ++r) ga[r * n + cols[r]] += g[r];
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  Tape& tape = tape_of(table, "gather_rows");
  if (table.value().rank() != 2) throw ShapeError("gather_rows: table must be [V,d], got " + shape_to_string(table.shape()));
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  Tensor out({ids.size(), d});
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= vocab) {
      throw ShapeError("gather_rows: id " + std::to_string(rows[r]) + " outside table " + shape_to_string(table.shape()));
    }
    const auto src = table.value().row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return tape.record(std::move(out), {table}, [table, rows = std::move(rows)](const Tensor& g, Tape& t) {
    if (!table.needs_grad()) return;
    Tensor& gt = t.grad_of(table);
    for (std::size_t r = 0; r < rows.size(); ++r) kernels::axpy(1.0, g.row(r), gt.row(rows[r]));
  });
}

Var segment_mean(const Var& a, std::span<const std::size_t> offsets) {
  Tape& tape = tape_of(a, "segment_mean");
  if (a.value().rank() != 2) throw ShapeError("segment_mean: expected [t,d], got " + shape_to_string(a.shape()));
  require_offsets(offsets, a.shape()[0], "segment_mean");
  const std::size_t segments = offsets.size() - 1;
  const std::size_t d = a.shape()[1];
  Tensor out({segments, d});
  for (std::size_t s = 0; s < segments; ++s) {
    const double inv = 1.0 / static_cast<double>(offsets[s + 1] - offsets[s]);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) kernels::axpy(inv, a.value().row(r), out.row(s));
  }
  std::vector<std::size_t> bounds(offsets.begin(), offsets.end());
  return tape.record(std::move(out), {a}, [a, bounds = std::move(bounds)](const Tensor& g, Tape& t) {
    if (!a.needs_grad()) return;
    Tensor& ga = t.grad_of(a);
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
      const double inv = 1.0 / static_cast<double>(bounds[s + 1] - bounds[s]);
      for (std::size_t r = bounds[s]; r < bounds[s + 1]; ++r) kernels::axpy(inv, g.row(s), ga.row(r));
    }
  });
}

Var segment_softmax(const Var& scores, std::span<const std::size_t> offsets) {
  Tape& tape = tape_of(scores, "segment_softmax");
  if (scores.value().rank() != 2 || scores.shape()[0] != scores.shape()[1]) {
    throw ShapeError("segment_softmax: expected a square score matrix, got " + shape_to_string(scores.shape()));
  }
  const std::size_t n = scores.shape()[0];
  require_offsets(offsets, n, "segment_softmax");
  Tensor out({n, n});
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t lo = offsets[s];
    const std::size_t hi = offsets[s + 1];
    for (std::size_t r = lo; r < hi; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = lo; c < hi; ++c) mx = std::max(mx, scores.value().at(r, c));
      double total = 0.0;
      for (std::size_t c = lo; c < hi; ++c) {
        out.at(r, c) = std::exp(scores.value().at(r, c) - mx);
        total += out.at(r, c);
      }
      for (std::size_t c = lo; c < hi; ++c) out.at(r, c) /= total;
    }
  }
  std::vector<std::size_t> bounds(offsets.begin(), offsets.end());
  return tape.record(out, {scores}, [scores, p = out, bounds = std::move(bounds)](const Tensor& g, Tape& t) {
    Tensor& gs = t.grad_of(scores);
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
      const std::size_t lo = bounds[s];
      const std::size_t hi = bounds[s + 1];
      for (std::size_t r = lo; r < hi; ++r) {
        double inner = 0.0;
        for (std::size_t c = lo; c < hi; ++c) inner += p.at(r, c) * g.at(r, c);
        for (std::size_t c = lo; c < hi; ++c) gs.at(r, c) += p.at(r, c) * (g.at(r, c) - inner);
      }
    }
  });
}

Var detach(const Var& a) { return tape_of(a, "detach").constant(a.value()); }

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& tape = tape_of(parts.front(), "concat_rows");
  const std::size_t d = parts.front().value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    tape_of(parts.front(), p, "concat_rows");
    require_matrix(p, "concat_rows");
    if (p.value().cols() != d) {
      throw ShapeError("concat_rows: row length mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total += p.value().rows();
  }
  std::vector<double> values;
  values.reserve(total * d);
  for (const auto& p : parts) values.insert(values.end(), p.value().data().begin(), p.value().data().end());
  return tape.record(Tensor({total, d}, std::move(values)), parts, [parts](const Tensor& g, Tape& t) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.value().size();
      if (p.needs_grad()) {
        auto gp = t.grad_of(p).data();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(a, "slice_rows");
  if (a.value().rank() != 2 || count == 0 || begin + count > a.shape()[0]) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + shape_to_string(a.shape()));
  }
  const std::size_t d = a.shape()[1];
  const auto src = a.value().data().subspan(begin * d, count * d);
  Tensor out({count, d}, std::vector<double>(src.begin(), src.end()));
  return tape.record(std::move(out), {a}, [a, begin, d](const Tensor& g, Tape& t) {
    if (!a.needs_grad()) return;
    auto ga = t.grad_of(a).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * d + i] += g[i];
  });
}

}  // namespace disco::ops
