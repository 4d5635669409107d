#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imbk/rng.hpp"
#include "imbk/taxonomy.hpp"

namespace imbk {

// Per-class sampling probabilities interpolating between the dataset's
// natural frequencies (lambda = 0) and uniform-per-class (lambda = 1):
// p_s(i) proportional to p_a(i)^lambda * p_n(i)^(1-lambda). lambda > 1
// over-corrects toward the tail and is allowed.
struct SamplingPlan {
    double lambda = 0.0;
    std::vector<double> p_n;       // n_i / sum_j n_j
    std::vector<double> p_a;       // 1/C' for classes with images, else 0
    std::vector<double> p_s_norm;  // normalized interpolated probabilities
    std::vector<std::vector<std::string>> class_images;  // distinct ids per class
    std::vector<std::int64_t> counts;                    // n_i
    int num_present = 0;                                 // C': classes with n_i > 0
    std::int64_t total_count = 0;                        // N = sum_j n_j
};

SamplingPlan build_plan(const AnnotationSet& a, double lambda);

// One class index drawn from p_s_norm by inverse-CDF walk.
ClassId draw_class(const SamplingPlan& plan, Rng& rng);

// batch_size image ids: each slot draws a class from p_s_norm, then an image
// uniformly with replacement from that class's list. Deterministic in seed.
std::vector<std::string> sample_batch(const SamplingPlan& plan, int batch_size,
                                      std::uint64_t seed);

// Stateful variant that cycles each class's images without replacement
// (reshuffling per class when its cursor wraps), so a rare class's images all
// get seen before any repeats.
class ClassCursorSampler {
public:
    ClassCursorSampler(const SamplingPlan& plan, std::uint64_t seed);

    std::vector<std::string> next_batch(int batch_size);

private:
    const SamplingPlan& plan_;
    Rng rng_;
    std::vector<std::vector<std::size_t>> order_;  // per-class shuffled index order
    std::vector<std::size_t> cursor_;
};

struct ExposureRow {
    ClassId c = 0;
    std::int64_t n = 0;
    double expected_visits = 0.0;  // per image of this class, per epoch-equivalent
    double neglect_linear = 0.0;   // max(0, 1 - expected_visits)
    double neglect_poisson = 0.0;  // exp(-expected_visits)
};

// Expected per-image visit counts when one epoch-equivalent draws N samples
// from the plan. Classes with no images report zero visits and full neglect.
std::vector<ExposureRow> exposure_report(const SamplingPlan& plan, double epochs_equiv);

// Shannon entropy of p_s_norm in nats. Non-decreasing in lambda on [0, 1].
double plan_entropy(const SamplingPlan& plan);

// TSV: class index, name, n_i, p_n, p_s, expected visits, poisson neglect.
void save_plan_report(const SamplingPlan& plan, const Taxonomy& t, const std::string& path);

}  // namespace imbk
