#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imbk/losses.hpp"

namespace imbk {

// Central finite-difference check of dL/dz. The error is measured on the
// whole gradient vector, ||numeric - analytic|| / max(||numeric||,
// ||analytic||), which keeps near-zero coordinates from drowning the check in
// subtraction noise.
double gradient_rel_error(const std::function<LossResult(const std::vector<double>&)>& loss,
                          const std::vector<double>& z, double step = 1e-5);

struct GradCheckRow {
    std::string loss;
    int trials = 0;
    double worst_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    bool all_pass = false;
};

// Random logits in [-5, 5], random label sets, random rate matrices; checks
// the four differentiable losses (softmax CE, exact-mode concurrent CE, BCE,
// focal) against finite differences.
GradCheckReport run_gradcheck(int max_classes, int trials, std::uint64_t seed,
                              double tolerance = 1e-5, double step = 1e-5);

}  // namespace imbk
