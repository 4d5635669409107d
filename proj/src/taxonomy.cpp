#include "imbk/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "imbk/errors.hpp"

namespace imbk {

Taxonomy::Taxonomy(std::vector<std::string> names, std::vector<ClassId> parents)
    : names_(std::move(names)), parent_(std::move(parents)) {
    const int c = num_classes();
    if (static_cast<int>(names_.size()) != c) {
        throw DataError("taxonomy: names/parents size mismatch");
    }
    for (ClassId i = 0; i < c; ++i) {
        const ClassId p = parent_[static_cast<std::size_t>(i)];
        if (p != kNoParent && (p < 0 || p >= c)) {
            throw DataError("taxonomy: dangling parent id " + std::to_string(p) +
                            " for class " + std::to_string(i));
        }
        if (p == i) {
            throw DataError("taxonomy: class " + std::to_string(i) + " is its own parent");
        }
    }

    // Depth by walking parent links; a walk longer than C classes is a cycle.
    depth_.assign(static_cast<std::size_t>(c), 0);
    for (ClassId i = 0; i < c; ++i) {
        int d = 1;
        ClassId cur = parent_[static_cast<std::size_t>(i)];
        while (cur != kNoParent) {
            ++d;
            if (d > c) {
                throw DataError("taxonomy: cycle detected through class " + std::to_string(i));
            }
            cur = parent_[static_cast<std::size_t>(cur)];
        }
        if (d > kMaxDepth) {
            throw DataError("taxonomy: depth " + std::to_string(d) + " of class " +
                            std::to_string(i) + " exceeds the " +
                            std::to_string(kMaxDepth) + "-level bound");
        }
        depth_[static_cast<std::size_t>(i)] = d;
    }

    is_leaf_.assign(static_cast<std::size_t>(c), true);
    for (ClassId i = 0; i < c; ++i) {
        const ClassId p = parent_[static_cast<std::size_t>(i)];
        if (p != kNoParent) is_leaf_[static_cast<std::size_t>(p)] = false;
    }
}

std::vector<ClassId> Taxonomy::leaves() const {
    std::vector<ClassId> out;
    for (ClassId i = 0; i < num_classes(); ++i) {
        if (is_leaf(i)) out.push_back(i);
    }
    return out;
}

std::vector<ClassId> Taxonomy::parents() const {
    std::vector<ClassId> out;
    for (ClassId i = 0; i < num_classes(); ++i) {
        if (!is_leaf(i)) out.push_back(i);
    }
    return out;
}

bool Taxonomy::is_ancestor(ClassId anc, ClassId c) const {
    ClassId cur = parent(c);
    while (cur != kNoParent) {
        if (cur == anc) return true;
        cur = parent(cur);
    }
    return false;
}

std::vector<ClassId> ancestors(const Taxonomy& t, ClassId c) {
    std::vector<ClassId> out;
    ClassId cur = t.parent(c);
    while (cur != kNoParent) {
        out.push_back(cur);
        cur = t.parent(cur);
    }
    return out;
}

bool Instance::has_label(ClassId c) const {
    return std::binary_search(labels.begin(), labels.end(), c);
}

void AnnotationSet::recount() {
    const Counts counts = compute_counts(*this);
    image_counts = counts.per_class;
    total_images = counts.total_images;

    instance_counts.assign(static_cast<std::size_t>(num_classes), 0);
    for (const Instance& inst : instances) {
        for (ClassId c : inst.labels) {
            instance_counts[static_cast<std::size_t>(c)]++;
        }
    }
}

Counts compute_counts(const AnnotationSet& a) {
    Counts out;
    out.per_class.assign(static_cast<std::size_t>(a.num_classes), 0);

    // Distinct-image semantics: a class counts once per image regardless of
    // how many instances in that image carry it.
    std::unordered_map<std::string, std::set<ClassId>> per_image;
    for (const Instance& inst : a.instances) {
        auto& labels = per_image[inst.image_id];
        labels.insert(inst.labels.begin(), inst.labels.end());
    }
    for (const auto& [image_id, labels] : per_image) {
        for (ClassId c : labels) {
            out.per_class[static_cast<std::size_t>(c)]++;
        }
    }
    out.total_images = static_cast<std::int64_t>(per_image.size());
    return out;
}

double imbalance_magnitude(const std::vector<std::int64_t>& counts) {
    std::int64_t max_count = 0;
    std::int64_t min_count = 0;
    for (std::int64_t n : counts) {
        if (n <= 0) continue;
        max_count = std::max(max_count, n);
        min_count = (min_count == 0) ? n : std::min(min_count, n);
    }
    if (max_count == 0) {
        throw DataError("imbalance_magnitude: all class counts are zero");
    }
    return static_cast<double>(max_count) / static_cast<double>(min_count);
}

namespace {

bool parse_int(const std::string& s, long& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_tsv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

std::vector<ClassId> sorted_unique(std::vector<ClassId> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

Taxonomy load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open taxonomy file: " + path);

    struct Row {
        long index;
        std::string name;
        long parent;
    };
    std::vector<Row> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_tsv(line);
        if (fields.size() != 3) {
            throw DataError("taxonomy row needs 3 tab-separated fields: " + line);
        }
        long index = 0;
        if (!parse_int(fields[0], index)) {
            if (first) {
                first = false;
                continue;  // header line
            }
            throw DataError("taxonomy: non-numeric index in row: " + line);
        }
        first = false;
        long parent = 0;
        if (!parse_int(fields[2], parent)) {
            throw DataError("taxonomy: non-numeric parent in row: " + line);
        }
        rows.push_back({index, fields[1], parent});
    }

    const std::size_t c = rows.size();
    std::vector<std::string> names(c);
    std::vector<ClassId> parents(c, kNoParent);
    std::vector<bool> seen(c, false);
    for (const Row& r : rows) {
        if (r.index < 0 || static_cast<std::size_t>(r.index) >= c || seen[static_cast<std::size_t>(r.index)]) {
            throw DataError("taxonomy: class indices must be dense and unique; bad index " +
                            std::to_string(r.index));
        }
        seen[static_cast<std::size_t>(r.index)] = true;
        names[static_cast<std::size_t>(r.index)] = r.name;
        parents[static_cast<std::size_t>(r.index)] = static_cast<ClassId>(r.parent);
    }
    return Taxonomy(std::move(names), std::move(parents));
}

void save_taxonomy(const Taxonomy& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write taxonomy file: " + path);
    out << "index\tname\tparent_index\n";
    for (ClassId i = 0; i < t.num_classes(); ++i) {
        out << i << '\t' << t.name(i) << '\t' << t.parent(i) << '\n';
    }
}

AnnotationSet load_annotations(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotations file: " + path);

    AnnotationSet a;
    a.num_classes = num_classes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
        }
        Instance inst;
        inst.image_id = j.at("image_id").get<std::string>();
        for (const auto& v : j.at("labels")) {
            const long c = v.get<long>();
            if (c < 0 || c >= num_classes) {
                throw DataError(path + ":" + std::to_string(line_no) + ": label " +
                                std::to_string(c) + " out of range");
            }
            inst.labels.push_back(static_cast<ClassId>(c));
        }
        if (inst.labels.empty()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": empty label set");
        }
        inst.labels = sorted_unique(std::move(inst.labels));

        if (j.contains("verified_exist") || j.contains("verified_not_exist")) {
            VerifiedLabels& v = a.verified[inst.image_id];
            if (j.contains("verified_exist")) {
                for (const auto& e : j["verified_exist"]) {
                    v.exist.push_back(static_cast<ClassId>(e.get<long>()));
                }
            }
            if (j.contains("verified_not_exist")) {
                for (const auto& e : j["verified_not_exist"]) {
                    v.not_exist.push_back(static_cast<ClassId>(e.get<long>()));
                }
            }
            v.exist = sorted_unique(std::move(v.exist));
            v.not_exist = sorted_unique(std::move(v.not_exist));
            for (ClassId c : v.exist) {
                if (std::binary_search(v.not_exist.begin(), v.not_exist.end(), c)) {
                    throw DataError(path + ":" + std::to_string(line_no) + ": class " +
                                    std::to_string(c) +
                                    " both verified-exist and verified-not-exist");
                }
            }
        }
        a.instances.push_back(std::move(inst));
    }
    a.recount();
    return a;
}

void save_annotations(const AnnotationSet& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write annotations file: " + path);

    // Verified lists belong to the image; emit them on its first record only.
    std::unordered_set<std::string> emitted;
    for (const Instance& inst : a.instances) {
        nlohmann::json j;
        j["image_id"] = inst.image_id;
        j["labels"] = inst.labels;
        const auto it = a.verified.find(inst.image_id);
        if (it != a.verified.end() && emitted.insert(inst.image_id).second) {
            j["verified_exist"] = it->second.exist;
            j["verified_not_exist"] = it->second.not_exist;
        }
        out << j.dump() << '\n';
    }
}

AnnotationSet subset(const AnnotationSet& a, const std::vector<std::size_t>& indices) {
    AnnotationSet out;
    out.num_classes = a.num_classes;
    out.instances.reserve(indices.size());
    for (std::size_t idx : indices) {
        const Instance& inst = a.instances.at(idx);
        out.instances.push_back(inst);
        const auto it = a.verified.find(inst.image_id);
        if (it != a.verified.end()) out.verified[inst.image_id] = it->second;
    }
    out.recount();
    return out;
}

}  // namespace imbk
