#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crossfuse/types.hpp"

namespace crossfuse {

struct CheckResult {
  std::string check;   ///< loss or formula being checked
  std::string tensor;  ///< parameter tensor
  Real error = 0;
  Real tolerance = 0;
  bool pass = false;
};

struct GradCheckOptions {
  Index users = 8;
  Index items = 12;
  Index dim = 4;
  Real step = 1e-6;
  Real tolerance = 1e-5;
  /// Below this combined norm the absolute difference is compared instead
  /// (central differences carry ~1e-8 rounding noise on these instances).
  Real floor = 1e-6;
  Real analytic_tolerance = 1e-10;
};

/// Central differences (f(x + h) - f(x - h)) / 2h of `loss` with respect to
/// every entry of `x`, restoring each entry afterwards.
VectorXr numeric_gradient(const std::function<Real()>& loss, std::span<Real> x, Real step);

/// |a - n| / (|a| + |n|), or |a - n| when |a| + |n| < floor.
Real gradient_error(const VectorXr& analytic, const VectorXr& numeric, Real floor);

/// Every loss against central differences on one random instance.
std::vector<CheckResult> finite_difference_suite(std::uint64_t seed, const GradCheckOptions& opts = {});

/// Closed-form neighbourhood updating directions against the backward
/// passes (max absolute difference).
std::vector<CheckResult> analytic_suite(std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace crossfuse
