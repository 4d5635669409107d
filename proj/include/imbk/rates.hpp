#pragma once

#include <string>
#include <vector>

#include "imbk/taxonomy.hpp"

namespace imbk {

// Dense C x C matrix of concurrent rates: r(i, j) estimates the probability
// that an object of class i is labeled as class j. Diagonal is 0 by
// convention; consumers supply their own self-term handling.
class RateMatrix {
public:
    RateMatrix() = default;
    explicit RateMatrix(int size) : size_(size), data_(static_cast<std::size_t>(size) * size, 0.0) {}

    int size() const { return size_; }
    double operator()(ClassId i, ClassId j) const {
        return data_[static_cast<std::size_t>(i) * size_ + static_cast<std::size_t>(j)];
    }
    void set(ClassId i, ClassId j, double rate) {
        data_[static_cast<std::size_t>(i) * size_ + static_cast<std::size_t>(j)] = rate;
    }
    const std::vector<double>& raw() const { return data_; }

    bool operator==(const RateMatrix& other) const = default;

private:
    int size_ = 0;
    std::vector<double> data_;
};

enum class HierarchyMode {
    // Leaf/ancestor entries -> 1 so their scores stop suppressing each other.
    RemoveSuppression,
    // The paper's literal wording: leaf/ancestor entries -> 0.
    LiteralZero,
};

enum class RateEstimator {
    InstanceCoLabel,    // an instance carries both labels
    ImageCoOccurrence,  // both labels appear somewhere in the image
};

// r_ij = #(carrying both i and j) / #(carrying i), entries below min_rate
// floored to 0, hierarchy override applied, diagonal forced to 0.
RateMatrix estimate_rates(const AnnotationSet& a, const Taxonomy& t, double min_rate,
                          HierarchyMode mode = HierarchyMode::RemoveSuppression,
                          RateEstimator estimator = RateEstimator::InstanceCoLabel);

// Rewrites every (leaf, strict ancestor) pair in both directions per `mode`.
RateMatrix apply_hierarchy_rule(RateMatrix m, const Taxonomy& t, HierarchyMode mode);

struct ConfusedPair {
    ClassId i;
    ClassId j;
    double rate;

    bool operator==(const ConfusedPair& other) const = default;
};

// k highest nonzero off-diagonal entries excluding hierarchy pairs, rate
// descending, ties broken by (i, j) ascending.
std::vector<ConfusedPair> top_confused_pairs(const RateMatrix& m, const Taxonomy& t, int k);

// r_ij := r_ji := max(r_ij, r_ji). Confusion is bidirectional in the wild even
// when only one direction was measured.
RateMatrix symmetrized(RateMatrix m);

// rates.tsv: i<TAB>j<TAB>rate for nonzero entries, i-major order.
void save_rates(const RateMatrix& m, const std::string& path);
RateMatrix load_rates(const std::string& path, int num_classes);

}  // namespace imbk
