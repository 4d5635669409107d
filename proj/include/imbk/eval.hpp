#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imbk/taxonomy.hpp"

namespace imbk {

// One scored prediction entry for a single class.
struct ApEntry {
    double score = 0.0;
    bool positive = false;
    bool ignored = false;
};

// Ranking AP: entries sorted by descending score (ties keep input order),
// ignored entries removed, then the mean of precision-at-each-positive.
// Returns nullopt when there are no positives.
std::optional<double> average_precision(const std::vector<ApEntry>& entries);

// Max - min AP over random permutations of tied entries; nonzero values mean
// the score ties are load-bearing.
std::pair<double, double> ap_tie_audit(const std::vector<ApEntry>& entries, int trials,
                                       std::uint64_t seed);

struct EvalReport {
    std::vector<std::optional<double>> per_class_ap;  // nullopt = no positives
    std::vector<std::int64_t> num_pos;
    double map = 0.0;
    std::int64_t ignored_fp_count = 0;  // entries excluded by verification state
};

// Scores one vector per instance, one entry per class. A prediction for class
// c on an instance is positive when c is among the instance's labels; failing
// that it is ignored when the image carries verification lists naming neither
// c as present nor as absent; otherwise negative. mAP averages the classes
// that have positives.
EvalReport evaluate(const std::vector<std::vector<double>>& scores, const AnnotationSet& truth);

// eval-report.tsv: class / num_pos / ap rows, then a final mAP row.
void save_eval_report(const EvalReport& report, const std::string& path);

}  // namespace imbk
