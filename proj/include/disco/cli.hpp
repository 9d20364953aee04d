#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "disco/gradcheck.hpp"

namespace disco::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point shared by the `disco` binary and the tests. `args` excludes
/// the program name. Returns 0 on success, 1 on runtime failure, 2 on a
/// usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

enum class LossKind { kKd, kCkd, kCl };

struct GradCheckTrial {
  std::string label;  // e.g. "ckd+bank+projection"
  GradCheckReport report;
};

/// Random instances of one loss, checked against central differences.
/// `corrupt` doubles every analytic gradient (detector sanity fixture).
std::vector<GradCheckTrial> gradcheck_trials(LossKind kind, std::size_t trials, std::uint64_t seed,
                                             const GradCheckOptions& options, bool corrupt = false);

}  // namespace disco::cli
