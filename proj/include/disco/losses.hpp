#pragma once

// Training objectives.
//
// Batch conventions: embeddings are [N, dim] rows. The MSE objective sums
// over the batch; the contrastive objectives average over the N anchors.
// Teacher embeddings and memory-bank rows enter as constants, so no
// gradient ever reaches the teacher.

#include <optional>
#include <span>

#include "disco/autodiff.hpp"
#include "disco/memory_bank.hpp"

namespace disco {

/// Strictly positive softmax temperature.
class Temperature {
 public:
  explicit Temperature(double value);
  double value() const { return value_; }

 private:
  double value_;
};

inline constexpr double kDefaultTemperature = 0.05;

/// dot(u,v) / (|u||v|), clamped to [-1, 1]. Zero vectors are rejected.
double cosine(std::span<const double> u, std::span<const double> v);

/// sum_i mean_d (proj(hS_i) - hT_i)^2 where proj multiplies by `projection`
/// when given.
Var kd_mse_loss(const Var& student, const Var& teacher, const std::optional<Var>& projection = std::nullopt);

/// InfoNCE between student rows and teacher rows: each student row is
/// scored against every in-batch teacher row plus every bank row, the
/// matching teacher row being the positive.
Var ckd_loss(const Var& student, const Var& teacher, const MemoryBank& bank, Temperature tau,
             const std::optional<Var>& projection = std::nullopt);

/// InfoNCE over (anchor, positive, negative) triples: each anchor is scored
/// against every positive and every negative in the batch.
Var supervised_cl_loss(const Var& anchors, const Var& positives, const Var& negatives, Temperature tau);

}  // namespace disco
