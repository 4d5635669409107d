#include "imbk/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "imbk/errors.hpp"
#include "imbk/rng.hpp"

namespace imbk {

std::optional<double> average_precision(const std::vector<ApEntry>& entries) {
    std::vector<std::size_t> order;
    order.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].ignored) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&entries](std::size_t a, std::size_t b) {
        return entries[a].score > entries[b].score;
    });

    std::int64_t positives_seen = 0;
    std::int64_t seen = 0;
    double precision_sum = 0.0;
    for (std::size_t idx : order) {
        ++seen;
        if (entries[idx].positive) {
            ++positives_seen;
            precision_sum += static_cast<double>(positives_seen) / static_cast<double>(seen);
        }
    }
    if (positives_seen == 0) return std::nullopt;
    return precision_sum / static_cast<double>(positives_seen);
}

std::pair<double, double> ap_tie_audit(const std::vector<ApEntry>& entries, int trials,
                                       std::uint64_t seed) {
    if (trials < 1) throw ConfigError("ap_tie_audit: trials must be >= 1");
    double lo = 2.0, hi = -1.0;
    for (int t = 0; t < trials; ++t) {
        std::vector<ApEntry> shuffled = entries;
        Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(t)));
        rng.shuffle(shuffled);
        const auto ap = average_precision(shuffled);
        if (!ap) throw DataError("ap_tie_audit: no positive entries");
        lo = std::min(lo, *ap);
        hi = std::max(hi, *ap);
    }
    return {lo, hi};
}

EvalReport evaluate(const std::vector<std::vector<double>>& scores, const AnnotationSet& truth) {
    if (scores.size() != truth.instances.size()) {
        throw DataError("evaluate: prediction/annotation count mismatch");
    }
    const int C = truth.num_classes;
    std::vector<std::vector<ApEntry>> per_class(static_cast<std::size_t>(C));

    EvalReport report;
    report.per_class_ap.assign(static_cast<std::size_t>(C), std::nullopt);
    report.num_pos.assign(static_cast<std::size_t>(C), 0);

    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(scores[i].size()) != C) {
            throw DataError("evaluate: score vector length mismatch");
        }
        const Instance& inst = truth.instances[i];
        const auto it = truth.verified.find(inst.image_id);
        for (ClassId c = 0; c < C; ++c) {
            ApEntry e;
            e.score = scores[i][static_cast<std::size_t>(c)];
            if (inst.has_label(c)) {
                e.positive = true;
                ++report.num_pos[static_cast<std::size_t>(c)];
            } else if (it != truth.verified.end()) {
                const bool verified_exist =
                    std::binary_search(it->second.exist.begin(), it->second.exist.end(), c);
                const bool verified_absent = std::binary_search(it->second.not_exist.begin(),
                                                                it->second.not_exist.end(), c);
                if (!verified_exist && !verified_absent) {
                    e.ignored = true;
                    ++report.ignored_fp_count;
                }
            }
            per_class[static_cast<std::size_t>(c)].push_back(e);
        }
    }

    double ap_sum = 0.0;
    int present = 0;
    for (ClassId c = 0; c < C; ++c) {
        const auto ap = average_precision(per_class[static_cast<std::size_t>(c)]);
        report.per_class_ap[static_cast<std::size_t>(c)] = ap;
        if (ap) {
            ap_sum += *ap;
            ++present;
        }
    }
    if (present == 0) throw DataError("evaluate: no class has a positive instance");
    report.map = ap_sum / present;
    return report;
}

void save_eval_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_eval_report: cannot open " + path);
    out << "class\tnum_pos\tap\n";
    char buf[64];
    for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
        out << c << '\t' << report.num_pos[c] << '\t';
        if (report.per_class_ap[c]) {
            std::snprintf(buf, sizeof(buf), "%.6f", *report.per_class_ap[c]);
            out << buf;
        } else {
            out << "NA";
        }
        out << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.6f", report.map);
    out << "mAP\t" << buf << '\n';
    if (!out) throw DataError("save_eval_report: write failed for " + path);
}

}  // namespace imbk
