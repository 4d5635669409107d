#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace imbk {

// Dense, contiguous class index in [0, C).
using ClassId = std::int32_t;

constexpr ClassId kNoParent = -1;
constexpr int kMaxDepth = 5;

// Class hierarchy. Depth counts levels: a root has depth 1, and a hierarchy
// of 5 levels means max depth 5. Leaf set = classes nobody points to as
// parent; leaves and parents partition the class set.
class Taxonomy {
public:
    Taxonomy() = default;
    // Validates: acyclic parent links, no dangling ids, depth <= kMaxDepth.
    Taxonomy(std::vector<std::string> names, std::vector<ClassId> parents);

    int num_classes() const { return static_cast<int>(parent_.size()); }
    ClassId parent(ClassId c) const { return parent_[static_cast<std::size_t>(c)]; }
    int depth(ClassId c) const { return depth_[static_cast<std::size_t>(c)]; }
    const std::string& name(ClassId c) const { return names_[static_cast<std::size_t>(c)]; }
    bool is_leaf(ClassId c) const { return is_leaf_[static_cast<std::size_t>(c)]; }
    bool is_root(ClassId c) const { return parent_[static_cast<std::size_t>(c)] == kNoParent; }

    std::vector<ClassId> leaves() const;
    std::vector<ClassId> parents() const;

    // True when `anc` is a strict ancestor of `c`.
    bool is_ancestor(ClassId anc, ClassId c) const;

    bool operator==(const Taxonomy& other) const {
        return names_ == other.names_ && parent_ == other.parent_;
    }

private:
    std::vector<std::string> names_;
    std::vector<ClassId> parent_;
    std::vector<int> depth_;
    std::vector<bool> is_leaf_;
};

// Strict ancestors of c, ordered from immediate parent to root. Empty for roots.
std::vector<ClassId> ancestors(const Taxonomy& t, ClassId c);

// One annotated object. Labels are kept sorted and unique.
struct Instance {
    std::string image_id;
    std::vector<ClassId> labels;

    bool has_label(ClassId c) const;
    bool operator==(const Instance& other) const = default;
};

// Image-level verification state. An image absent from the verified map is
// treated as having every class verified-exist (nothing gets ignored).
struct VerifiedLabels {
    std::vector<ClassId> exist;      // sorted
    std::vector<ClassId> not_exist;  // sorted

    bool operator==(const VerifiedLabels& other) const = default;
};

// Multi-label annotation records plus the per-class image counts n_i that the
// sampling and loss-weighting code consumes.
struct AnnotationSet {
    std::vector<Instance> instances;
    std::unordered_map<std::string, VerifiedLabels> verified;  // images with explicit lists
    int num_classes = 0;

    // n_i: number of distinct images containing class i.
    std::vector<std::int64_t> image_counts;
    // Instance-level counts, kept for diagnostics.
    std::vector<std::int64_t> instance_counts;
    std::int64_t total_images = 0;

    // Recomputes image_counts / instance_counts / total_images from instances.
    void recount();

    bool has_verified_info(const std::string& image_id) const {
        return verified.find(image_id) != verified.end();
    }

    bool operator==(const AnnotationSet& other) const {
        return instances == other.instances && verified == other.verified &&
               num_classes == other.num_classes;
    }
};

struct Counts {
    std::vector<std::int64_t> per_class;  // n_i, distinct images
    std::int64_t total_images = 0;        // N
};

Counts compute_counts(const AnnotationSet& a);

// max n_i / min over classes with n_i > 0. Throws DataError if all zero.
double imbalance_magnitude(const std::vector<std::int64_t>& counts);

// classes.tsv: index<TAB>name<TAB>parent_index, -1 for roots. A header line is
// detected by a non-numeric first field.
Taxonomy load_taxonomy(const std::string& path);
void save_taxonomy(const Taxonomy& t, const std::string& path);

// annotations.jsonl: one object per line with image_id, labels, and optional
// verified_exist / verified_not_exist arrays.
AnnotationSet load_annotations(const std::string& path, int num_classes);
void save_annotations(const AnnotationSet& a, const std::string& path);

// Restriction of `a` to the given instance indices (verified info carried over).
AnnotationSet subset(const AnnotationSet& a, const std::vector<std::size_t>& indices);

}  // namespace imbk
