#pragma once

#include <cstdint>
#include <vector>

#include "imbk/rates.hpp"

namespace imbk {

// Multi-hot target over C classes. K = {i | y[i] = 1}, m = |K|.
struct LabelVector {
    std::vector<std::uint8_t> y;

    static LabelVector from_classes(int num_classes, const std::vector<ClassId>& classes);
    std::vector<ClassId> positives() const;
    int count() const;
    int size() const { return static_cast<int>(y.size()); }
};

// Loss value plus dL/dz.
struct LossResult {
    double value = 0.0;
    std::vector<double> gradient;
};

enum class ConcurrentGradMode {
    // Analytic derivative of the concurrent loss; passes finite differences.
    Exact,
    // The formula the loss is usually stated with: the i-not-in-K branch
    // uses sigma*_i and the forward index order r_ij. Not the true derivative
    // of the loss; kept selectable for comparison runs.
    AsPublished,
};

// Stable softmax over logits (max-subtraction), entries sum to 1.
std::vector<double> softmax_probs(const std::vector<double>& z);

// Multi-hot softmax cross entropy: -sum_{i in K} log sigma_i; gradient
// m*sigma_i - [i in K].
LossResult softmax_ce(const std::vector<double>& z, const LabelVector& y);

// Concurrent softmax training loss. sigma*_i divides e^{z_i} by the masked
// denominator sum_{j != i} (1-y_j)(1-r_ij) e^{z_j} + e^{z_i}: suppression from
// co-labeled classes is removed outright and suppression from frequently
// co-labeled classes is weakened by their concurrent rate.
LossResult concurrent_softmax_ce(const std::vector<double>& z, const LabelVector& y,
                                 const RateMatrix& r,
                                 ConcurrentGradMode mode = ConcurrentGradMode::Exact);

// Inference scoring: e^{z_i} / sum_j (1-r_ij) e^{z_j} with the self term kept
// (r_ii = 0). Without rates this is exactly softmax.
std::vector<double> concurrent_softmax_infer(const std::vector<double>& z, const RateMatrix& r);

// Per-class sigmoid cross entropy summed over classes; gradient sigmoid(z)-y.
LossResult bce_loss(const std::vector<double>& z, const LabelVector& y);

// Alpha-balanced focal loss on sigmoid outputs, summed over classes.
LossResult focal_loss(const std::vector<double>& z, const LabelVector& y, double gamma,
                      double alpha);

// Class weights proportional to (1-beta)/(1-beta^{n_i}), normalized to mean 1
// over classes with n_i > 0; zero-count classes get weight 0.
std::vector<double> effective_number_weights(const std::vector<std::int64_t>& counts, double beta);

// softmax_ce with per-positive-class weights: -sum_{i in K} w_i log sigma_i.
LossResult weighted_softmax_ce(const std::vector<double>& z, const LabelVector& y,
                               const std::vector<double>& weights);

}  // namespace imbk
