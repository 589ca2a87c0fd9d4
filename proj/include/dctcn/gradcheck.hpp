#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dctcn/tensor.hpp"

namespace dctcn {

struct GradCheckResult {
    std::string name;
    std::size_t trials = 0;
    std::size_t elements = 0;
    std::size_t skipped = 0;  // elements sitting on a relu kink
    double max_rel_error = 0.0;
    bool passed = false;
};

/// ||a - n|| / max(||a||, ||n||, floor). The floor keeps tensors whose true
/// gradient is (numerically) zero from dividing roundoff by roundoff.
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-2);

/// Central-difference derivative of loss() with respect to every element of
/// x, evaluated at step h and h/2. Elements where the two estimates
/// disagree by more than kink_tol are flagged (the step crossed a
/// non-differentiable point) and reported as NaN.
Tensor numeric_gradient(const std::function<double()>& loss, Tensor& x, double h = 1e-5, double kink_tol = 1e-6);

/// Every differentiable op plus a full one-block model on randomized small
/// shapes (B <= 3, T <= 9, C <= 6), each over `trials` seeded trials.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t trials = 20, double tol = 1e-5);

} // namespace dctcn
