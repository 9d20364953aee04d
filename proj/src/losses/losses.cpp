#include "disco/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "disco/encoder.hpp"
#include "disco/kernels.hpp"
#include "disco/ops.hpp"

namespace disco {

Temperature::Temperature(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("temperature must be positive and finite, got " + std::to_string(value));
  }
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine: dimension mismatch [" + std::to_string(u.size()) + "] vs [" + std::to_string(v.size()) + "]");
  }
  const double nu = std::sqrt(kernels::sum_squares(u));
  const double nv = std::sqrt(kernels::sum_squares(v));
  if (!(nu > 0.0) || !(nv > 0.0)) throw NumericError("cosine: zero-norm input (degenerate embedding)");
  return std::clamp(kernels::dot(u, v) / (nu * nv), -1.0, 1.0);
}

namespace {

void require_rows(const Var& a, const Var& b, const char* op) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError(std::string(op) + ": batch mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

Var maybe_project(const Var& h, const std::optional<Var>& projection) {
  return projection ? project(h, *projection) : h;
}

// mean_i [ logsumexp_j logits[i,j] - logits[i,i] ]
Var infonce(const Var& logits) {
  std::vector<std::size_t> diag(logits.shape()[0]);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  return ops::mean(ops::sub(ops::logsumexp_rows(logits), ops::pick(logits, diag)));
}

}  // namespace

Var kd_mse_loss(const Var& student, const Var& teacher, const std::optional<Var>& projection) {
  require_rows(student, teacher, "kd_mse_loss");
  Var s = maybe_project(student, projection);
  if (s.shape() != teacher.shape()) {
    throw ShapeError("kd_mse_loss: student " + shape_to_string(s.shape()) + " vs teacher " +
                     shape_to_string(teacher.shape()));
  }
  Var diff = ops::sub(s, ops::detach(teacher));
  const double dims = static_cast<double>(teacher.shape()[1]);
  return ops::scale(ops::sum(ops::mul(diff, diff)), 1.0 / dims);
}

Var ckd_loss(const Var& student, const Var& teacher, const MemoryBank& bank, Temperature tau,
             const std::optional<Var>& projection) {
  require_rows(student, teacher, "ckd_loss");
  Var s = maybe_project(student, projection);
  if (s.shape() != teacher.shape()) {
    throw ShapeError("ckd_loss: student " + shape_to_string(s.shape()) + " vs teacher " +
                     shape_to_string(teacher.shape()));
  }
  Tape& tape = student.tape();
  Var keys = ops::detach(teacher);
  if (!bank.empty()) {
    if (bank.dim() != teacher.shape()[1]) {
      throw ShapeError("ckd_loss: bank rows of length " + std::to_string(bank.dim()) + " vs teacher " +
                       shape_to_string(teacher.shape()));
    }
    keys = ops::concat_rows({keys, tape.constant(bank.contents())});
  }
  Var logits = ops::matmul_nt(ops::normalize_rows(s), ops::normalize_rows(keys));
  return infonce(ops::scale(logits, 1.0 / tau.value()));
}

Var supervised_cl_loss(const Var& anchors, const Var& positives, const Var& negatives, Temperature tau) {
  require_rows(anchors, positives, "supervised_cl_loss");
  require_rows(anchors, negatives, "supervised_cl_loss");
  if (anchors.shape() != positives.shape() || anchors.shape() != negatives.shape()) {
    throw ShapeError("supervised_cl_loss: dimension mismatch " + shape_to_string(anchors.shape()) + ", " +
                     shape_to_string(positives.shape()) + ", " + shape_to_string(negatives.shape()));
  }
  Var candidates = ops::normalize_rows(ops::concat_rows({positives, negatives}));
  Var logits = ops::matmul_nt(ops::normalize_rows(anchors), candidates);
  return infonce(ops::scale(logits, 1.0 / tau.value()));
}

}  // namespace disco
