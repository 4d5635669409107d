#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imbk/errors.hpp"
#include "imbk/sampling.hpp"
#include "imbk/taxonomy.hpp"

using namespace imbk;

namespace {

// One single-label instance per image; counts[i] images for class i.
AnnotationSet flat_set(const std::vector<std::int64_t>& counts) {
    AnnotationSet a;
    a.num_classes = static_cast<int>(counts.size());
    int next_image = 0;
    for (ClassId c = 0; c < a.num_classes; ++c) {
        for (std::int64_t k = 0; k < counts[static_cast<std::size_t>(c)]; ++k) {
            a.instances.push_back({"img" + std::to_string(next_image++), {c}});
        }
    }
    a.recount();
    return a;
}

}  // namespace

TEST_CASE("lambda zero reproduces natural frequencies") {
    SamplingPlan plan = build_plan(flat_set({9, 1}), 0.0);
    CHECK(plan.p_s_norm[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(plan.p_s_norm[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(plan.num_present == 2);
    CHECK(plan.total_count == 10);
}

TEST_CASE("lambda one is uniform over present classes") {
    SamplingPlan plan = build_plan(flat_set({500, 3, 1, 0}), 1.0);
    CHECK(plan.p_s_norm[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(plan.p_s_norm[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(plan.p_s_norm[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(plan.p_s_norm[3] == 0.0);
    CHECK(plan.num_present == 3);
}

TEST_CASE("intermediate lambda interpolates geometrically") {
    SamplingPlan plan = build_plan(flat_set({9, 1}), 0.7);
    CHECK(plan.p_s_norm[0] == doctest::Approx(0.65907332559603749).epsilon(1e-12));
    CHECK(plan.p_s_norm[1] == doctest::Approx(0.34092667440396251).epsilon(1e-12));
}

TEST_CASE("plan probabilities always sum to one") {
    for (double lambda : {0.0, 0.25, 0.5, 0.7, 1.0, 1.5}) {
        SamplingPlan plan = build_plan(flat_set({1000, 40, 3, 1}), lambda);
        double total = 0.0;
        for (double p : plan.p_s_norm) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("lambda above one over-corrects toward the tail") {
    SamplingPlan plan = build_plan(flat_set({9, 1}), 1.5);
    CHECK(plan.p_s_norm[1] > 0.5);
    CHECK(plan.p_s_norm[0] + plan.p_s_norm[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("plan rejects bad inputs") {
    CHECK_THROWS_AS(build_plan(flat_set({9, 1}), -0.1), ConfigError);
    AnnotationSet empty;
    empty.num_classes = 0;
    CHECK_THROWS_AS(build_plan(empty, 0.5), DataError);
    AnnotationSet hollow;
    hollow.num_classes = 3;
    hollow.recount();
    CHECK_THROWS_AS(build_plan(hollow, 0.5), DataError);
}

TEST_CASE("single present class gets probability one") {
    SamplingPlan plan = build_plan(flat_set({0, 7, 0}), 0.3);
    CHECK(plan.p_s_norm[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan_entropy(plan) == doctest::Approx(0.0));
    Rng rng(5);
    for (int i = 0; i < 100; ++i) CHECK(draw_class(plan, rng) == 1);
}

TEST_CASE("draw_class matches the plan empirically") {
    SamplingPlan plan = build_plan(flat_set({9, 1}), 0.0);
    Rng rng(99);
    const int draws = 60000;
    int hits = 0;
    for (int i = 0; i < draws; ++i) {
        if (draw_class(plan, rng) == 0) ++hits;
    }
    const double expect = 0.9 * draws;
    const double sigma = std::sqrt(draws * 0.9 * 0.1);
    CHECK(std::abs(hits - expect) < 4.0 * sigma);
}

TEST_CASE("sample_batch is deterministic and draws from class lists") {
    AnnotationSet a = flat_set({4, 2});
    SamplingPlan plan = build_plan(a, 1.0);
    std::vector<std::string> b1 = sample_batch(plan, 32, 7);
    std::vector<std::string> b2 = sample_batch(plan, 32, 7);
    CHECK(b1 == b2);
    std::vector<std::string> b3 = sample_batch(plan, 32, 8);
    CHECK(b1 != b3);
    for (const std::string& id : b1) {
        bool known = false;
        for (const auto& imgs : plan.class_images) {
            if (std::find(imgs.begin(), imgs.end(), id) != imgs.end()) known = true;
        }
        CHECK(known);
    }
    CHECK_THROWS_AS(sample_batch(plan, 0, 7), ConfigError);
}

TEST_CASE("class cursor sampler cycles every image before repeating") {
    AnnotationSet a = flat_set({0, 6});
    SamplingPlan plan = build_plan(a, 1.0);
    ClassCursorSampler sampler(plan, 3);
    std::map<std::string, int> seen;
    for (const std::string& id : sampler.next_batch(6)) ++seen[id];
    CHECK(seen.size() == 6);
    for (const auto& [id, n] : seen) {
        (void)id;
        CHECK(n == 1);
    }
    for (const std::string& id : sampler.next_batch(6)) ++seen[id];
    CHECK(seen.size() == 6);
    for (const auto& [id, n] : seen) {
        (void)id;
        CHECK(n == 2);
    }
}

TEST_CASE("exposure at lambda zero visits every image once per epoch") {
    SamplingPlan plan = build_plan(flat_set({100, 10, 1}), 0.0);
    for (const ExposureRow& row : exposure_report(plan, 1.0)) {
        CHECK(row.expected_visits == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(row.neglect_linear == doctest::Approx(0.0));
        CHECK(row.neglect_poisson == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    }
}

TEST_CASE("exposure at lambda one floods the tail") {
    SamplingPlan plan = build_plan(flat_set({9, 1}), 1.0);
    std::vector<ExposureRow> rows = exposure_report(plan, 1.0);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].expected_visits == doctest::Approx(0.55555555555555556).epsilon(1e-12));
    CHECK(rows[1].expected_visits == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(rows[0].neglect_linear == doctest::Approx(1.0 - 0.55555555555555556).epsilon(1e-12));
    CHECK(rows[1].neglect_linear == 0.0);
}

TEST_CASE("exposure on a larger head-tail split") {
    SamplingPlan plan = build_plan(flat_set({1, 336, 336, 335}), 1.0);
    std::vector<ExposureRow> rows = exposure_report(plan, 1.0);
    CHECK(rows[0].expected_visits == doctest::Approx(252.0).epsilon(1e-12));
    CHECK(rows[0].n == 1);
}

TEST_CASE("absent classes report full neglect") {
    SamplingPlan plan = build_plan(flat_set({5, 0, 5}), 0.5);
    std::vector<ExposureRow> rows = exposure_report(plan, 1.0);
    CHECK(rows[1].expected_visits == 0.0);
    CHECK(rows[1].neglect_linear == doctest::Approx(1.0));
    CHECK(rows[1].neglect_poisson == doctest::Approx(1.0));
}

TEST_CASE("plan entropy hits ln C at lambda one and grows with lambda") {
    SamplingPlan plan1 = build_plan(flat_set({1000, 50, 3}), 1.0);
    CHECK(plan_entropy(plan1) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    SamplingPlan plan0 = build_plan(flat_set({9, 1}), 0.0);
    CHECK(plan_entropy(plan0) == doctest::Approx(0.32508297339144824).epsilon(1e-12));

    double prev = -1.0;
    for (double lambda : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
        SamplingPlan plan = build_plan(flat_set({800, 120, 30, 7, 1}), lambda);
        const double h = plan_entropy(plan);
        CHECK(h >= prev - 1e-12);
        prev = h;
    }
}

TEST_CASE("plan report file carries the expected columns") {
    Taxonomy t({"head", "tail"}, {kNoParent, kNoParent});
    SamplingPlan plan = build_plan(flat_set({9, 1}), 1.0);
    const std::string path = "plan_report_test.tsv";
    save_plan_report(plan, t, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "class\tname\tn\tp_n\tp_s\texpected_visits\tneglect_poisson");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        std::istringstream ss(line);
        std::string field;
        int cols = 0;
        while (std::getline(ss, field, '\t')) ++cols;
        CHECK(cols == 7);
    }
    CHECK(rows == 2);
    in.close();
    std::remove(path.c_str());
}
