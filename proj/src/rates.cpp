#include "imbk/rates.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>

#include "imbk/errors.hpp"

namespace imbk {

RateMatrix estimate_rates(const AnnotationSet& a, const Taxonomy& t, double min_rate,
                          HierarchyMode mode, RateEstimator estimator) {
    if (a.instances.empty()) {
        throw DataError("estimate_rates: empty annotation set");
    }
    if (min_rate < 0.0 || min_rate >= 1.0) {
        throw ConfigError("estimate_rates: min_rate must be in [0, 1)");
    }
    const int c = t.num_classes();
    if (a.num_classes != c) {
        throw DataError("estimate_rates: annotation/taxonomy class count mismatch");
    }

    std::vector<std::int64_t> carrier(static_cast<std::size_t>(c), 0);
    std::vector<std::int64_t> joint(static_cast<std::size_t>(c) * c, 0);

    auto tally = [&](const std::vector<ClassId>& labels) {
        for (ClassId i : labels) {
            carrier[static_cast<std::size_t>(i)]++;
            for (ClassId j : labels) {
                if (i != j) joint[static_cast<std::size_t>(i) * c + j]++;
            }
        }
    };

    if (estimator == RateEstimator::InstanceCoLabel) {
        for (const Instance& inst : a.instances) tally(inst.labels);
    } else {
        std::unordered_map<std::string, std::set<ClassId>> per_image;
        for (const Instance& inst : a.instances) {
            per_image[inst.image_id].insert(inst.labels.begin(), inst.labels.end());
        }
        for (const auto& [image_id, labels] : per_image) {
            tally(std::vector<ClassId>(labels.begin(), labels.end()));
        }
    }

    RateMatrix m(c);
    for (ClassId i = 0; i < c; ++i) {
        const std::int64_t n = carrier[static_cast<std::size_t>(i)];
        if (n == 0) continue;
        for (ClassId j = 0; j < c; ++j) {
            if (i == j) continue;
            const double rate =
                static_cast<double>(joint[static_cast<std::size_t>(i) * c + j]) / static_cast<double>(n);
            m.set(i, j, rate >= min_rate ? rate : 0.0);
        }
    }
    return apply_hierarchy_rule(std::move(m), t, mode);
}

RateMatrix apply_hierarchy_rule(RateMatrix m, const Taxonomy& t, HierarchyMode mode) {
    if (m.size() != t.num_classes()) {
        throw DataError("apply_hierarchy_rule: matrix size does not match taxonomy");
    }
    const double value = (mode == HierarchyMode::RemoveSuppression) ? 1.0 : 0.0;
    for (ClassId leaf = 0; leaf < t.num_classes(); ++leaf) {
        if (!t.is_leaf(leaf)) continue;
        for (ClassId anc : ancestors(t, leaf)) {
            m.set(leaf, anc, value);
            m.set(anc, leaf, value);
        }
    }
    return m;
}

std::vector<ConfusedPair> top_confused_pairs(const RateMatrix& m, const Taxonomy& t, int k) {
    if (k < 1) throw ConfigError("top_confused_pairs: k must be >= 1");
    std::vector<ConfusedPair> all;
    for (ClassId i = 0; i < m.size(); ++i) {
        for (ClassId j = 0; j < m.size(); ++j) {
            if (i == j) continue;
            if (t.is_ancestor(i, j) || t.is_ancestor(j, i)) continue;
            const double rate = m(i, j);
            if (rate > 0.0) all.push_back({i, j, rate});
        }
    }
    std::sort(all.begin(), all.end(), [](const ConfusedPair& a, const ConfusedPair& b) {
        if (a.rate != b.rate) return a.rate > b.rate;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
    return all;
}

RateMatrix symmetrized(RateMatrix m) {
    for (ClassId i = 0; i < m.size(); ++i) {
        for (ClassId j = i + 1; j < m.size(); ++j) {
            const double r = std::max(m(i, j), m(j, i));
            m.set(i, j, r);
            m.set(j, i, r);
        }
    }
    return m;
}

void save_rates(const RateMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write rates file: " + path);
    char buf[64];
    for (ClassId i = 0; i < m.size(); ++i) {
        for (ClassId j = 0; j < m.size(); ++j) {
            const double r = m(i, j);
            if (r == 0.0) continue;
            std::snprintf(buf, sizeof(buf), "%.17g", r);
            out << i << '\t' << j << '\t' << buf << '\n';
        }
    }
}

RateMatrix load_rates(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rates file: " + path);
    RateMatrix m(num_classes);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        long i = 0, j = 0;
        double rate = 0.0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto r1 = std::from_chars(p, end, i);
        if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != '\t') {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad rates row");
        }
        auto r2 = std::from_chars(r1.ptr + 1, end, j);
        if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != '\t') {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad rates row");
        }
        auto r3 = std::from_chars(r2.ptr + 1, end, rate);
        if (r3.ec != std::errc()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad rate value");
        }
        if (i < 0 || i >= num_classes || j < 0 || j >= num_classes) {
            throw DataError(path + ":" + std::to_string(line_no) + ": index out of range");
        }
        if (rate < 0.0 || rate > 1.0) {
            throw DataError(path + ":" + std::to_string(line_no) + ": rate out of [0,1]");
        }
        m.set(static_cast<ClassId>(i), static_cast<ClassId>(j), rate);
    }
    return m;
}

}  // namespace imbk
