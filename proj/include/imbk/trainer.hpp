#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imbk/losses.hpp"
#include "imbk/rates.hpp"
#include "imbk/schedule.hpp"
#include "imbk/synth.hpp"

namespace imbk {

// Linear classifier, optionally with one rectified hidden layer. Parameters
// are double precision in memory; checkpoints round to 32-bit floats. With
// has_background set, the output layer carries one extra always-negative
// logit that predict() strips again.
struct Model {
    int num_classes = 0;  // real classes
    int feature_dim = 0;
    int hidden_dim = 0;   // 0 = linear model
    bool has_background = false;
    std::vector<double> w1;  // hidden_dim x feature_dim
    std::vector<double> b1;  // hidden_dim
    std::vector<double> w2;  // num_outputs x (hidden_dim or feature_dim)
    std::vector<double> b2;  // num_outputs

    int num_outputs() const { return num_classes + (has_background ? 1 : 0); }

    bool operator==(const Model& other) const = default;
};

Model init_model(int num_classes, int feature_dim, int hidden_dim, std::uint64_t seed,
                 bool has_background = false);

// z = W2 relu(W1 x + b1) + b2, or W2 x + b2 for the linear model.
std::vector<double> forward(const Model& m, const float* x);

enum class LossKind {
    Softmax,
    Concurrent,
    Bce,
    Focal,
    WeightedSoftmax,  // softmax CE with effective-number class weights
};

struct LossSpec {
    LossKind kind = LossKind::Softmax;
    ConcurrentGradMode grad_mode = ConcurrentGradMode::Exact;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double effective_beta = 0.999;
};

struct TrainOptions {
    double val_fraction = 0.2;
    int hidden_dim = 0;
    bool add_background_class = false;
};

struct EpochMetrics {
    int epoch = 0;
    PhaseKind kind = PhaseKind::Sequential;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_map = 0.0;

    bool operator==(const EpochMetrics& other) const = default;
};

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> metrics;
    std::vector<std::size_t> val_indices;  // held-out instance indices
};

// Runs the plan's phases over the dataset: sequential phases make one seeded
// pass over the training split per epoch, balanced phases draw image batches
// from a soft-balance plan built on that split (every instance of a drawn
// image trains). Targets come from observed labels; the logged per-epoch mAP
// is measured on the held-out split against truth labels with plain softmax
// scoring. SGD with momentum; weight decay folded into the gradient.
TrainResult train(const SynthDataset& ds, const TrainPlan& plan, const LossSpec& loss,
                  const RateMatrix& rates, std::uint64_t seed, const TrainOptions& opts = {});

// Per-instance scores over the real classes: softmax when rates is null,
// otherwise the rate-weakened scoring.
std::vector<std::vector<double>> predict(const Model& m, const FeatureMatrix& features,
                                         const RateMatrix* rates = nullptr);

// Checkpoint: magic "IMDL", u32 num_classes / feature_dim / hidden_dim /
// background flag, then w1, b1, w2, b2 as little-endian 32-bit floats.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

// metrics.log: epoch / phase / lr / train_loss / val_mAP per line.
void save_metrics(const std::vector<EpochMetrics>& metrics, const std::string& path);

}  // namespace imbk
