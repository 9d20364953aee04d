#pragma once

// Differentiable primitives over Tape values. Every op validates operand
// shapes (throwing ShapeError naming both shapes) and records itself on the
// operands' tape.

#include <cstddef>
#include <span>
#include <vector>

#include "disco/autodiff.hpp"

namespace disco::ops {

// Element-wise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var exp(const Var& a);
/// Rejects non-positive entries with NumericError.
Var log(const Var& a);
Var tanh(const Var& a);

/// [m,k] x [k,n] -> [m,n]; a rank-1 right operand of length k is a column
/// vector and yields a rank-1 result of length m.
Var matmul(const Var& a, const Var& b);
/// [m,k] x [n,k]^T -> [m,n]
Var matmul_nt(const Var& a, const Var& b);
/// Adds a length-n vector to every row of an [m,n] matrix.
Var add_rowvec(const Var& a, const Var& v);

Var sum(const Var& a);
Var mean(const Var& a);
/// Euclidean norm of all entries, shape [1].
Var l2norm(const Var& a);

/// Divides every row by its Euclidean norm; a zero row raises NumericError.
Var normalize_rows(const Var& a);
/// Row-wise log(sum(exp(row))) computed with max-shift, shape [m].
Var logsumexp_rows(const Var& a);
/// out[i] = a[i, columns[i]], shape [m].
Var pick(const Var& a, std::span<const std::size_t> columns);

/// Rows of `table` selected by `ids`, shape [ids.size(), d].
Var gather_rows(const Var& table, std::span<const std::size_t> ids);
/// Mean of consecutive row ranges: segment s covers rows
/// [offsets[s], offsets[s+1]). offsets must start at 0 and end at rows(a).
Var segment_mean(const Var& a, std::span<const std::size_t> offsets);
/// Softmax of each row of a square [t,t] score matrix restricted to the
/// columns in the same segment as the row; other entries are zero.
Var segment_softmax(const Var& scores, std::span<const std::size_t> offsets);

/// Same value, no gradient flows back through it.
Var detach(const Var& a);

Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);

}  // namespace disco::ops
