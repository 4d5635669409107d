#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imbk/rates.hpp"
#include "imbk/taxonomy.hpp"

namespace imbk {

// One configured labeling confusion: an object of leaf class `src` gets
// written down as leaf class `dst` with probability `rate`.
struct ConfusionPair {
    ClassId src = 0;
    ClassId dst = 0;
    double rate = 0.0;

    bool operator==(const ConfusionPair& other) const = default;
};

struct SynthConfig {
    int num_leaf = 20;
    int num_parents = 0;
    int depth = 2;  // levels including the leaf level
    double imbalance_magnitude = 100.0;
    int feature_dim = 64;
    double noise_sigma = 0.1;
    std::vector<ConfusionPair> confusion_pairs;
    // When false a flip replaces the source leaf with the target; when true
    // the target is added next to it, so the confusion shows up as a
    // co-label in the observed data itself.
    bool colabel_flips = false;
    double parent_only_prob = 0.0;
    double multi_leaf_prob = 0.0;
    std::int64_t images = 4000;
    std::uint64_t seed = 1;
};

// Dense row-major float features, one row per instance.
struct FeatureMatrix {
    std::int64_t rows = 0;
    int dim = 0;
    std::vector<float> data;

    const float* row(std::int64_t r) const {
        return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(dim);
    }

    bool operator==(const FeatureMatrix& other) const = default;
};

struct SynthDataset {
    Taxonomy taxonomy;
    FeatureMatrix features;
    AnnotationSet observed;  // labels after confusion flips and leaf drops
    AnnotationSet truth;     // clean labels, aligned with observed by index
    RateMatrix true_rates;   // the configured flip rates, nothing else
    std::vector<ConfusionPair> configured_pairs;
};

// Builds the whole testbed: a taxonomy with `num_leaf` leaves under chains of
// parents, power-law class frequencies whose max/min ratio equals
// imbalance_magnitude, Gaussian features around per-leaf unit-sphere
// prototypes, and observed labels derived from truth by the configured
// confusion flips and parent-only drops. Bit-identical for a fixed config.
SynthDataset generate(const SynthConfig& cfg);

// Per-instance union of truth and observed labels; this is the join the rate
// estimator needs to see a flip as a co-label event.
AnnotationSet joined_annotations(const SynthDataset& ds);

// Max over configured pairs of |estimated - configured| where estimation runs
// on the truth/observed join with no flooring.
double rate_recovery_check(const SynthDataset& ds);

// features.bin: 16-byte header (magic "IMBK", u32 rows, u32 dim, u32 zero),
// then row-major little-endian f32.
void save_features(const FeatureMatrix& f, const std::string& path);
FeatureMatrix load_features(const std::string& path);

// Directory layout: classes.tsv, annotations.jsonl (observed),
// annotations.truth.jsonl, features.bin, rates.true.tsv.
void save_dataset(const SynthDataset& ds, const std::string& dir);
// rates.true.tsv may be absent (true rates then read as all zero).
SynthDataset load_dataset(const std::string& dir);

}  // namespace imbk
