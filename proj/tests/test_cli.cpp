#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "imbk/cli.hpp"

using namespace imbk;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("imbk");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Last tab-separated value of the summary row "mAP<TAB>value".
double report_map(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line, last;
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    std::istringstream ss(last);
    std::string key;
    double value = 0.0;
    ss >> key >> value;
    REQUIRE(key == "mAP");
    return value;
}

struct TempDir {
    std::string path;
    explicit TempDir(std::string p) : path(std::move(p)) {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

const std::vector<std::string> kSmallGen{
    "--num-leaf", "6",    "--images",      "240", "--feature-dim", "12",
    "--imbalance", "8",   "--noise-sigma", "0.2", "--seed",        "3"};

}  // namespace

TEST_CASE("the full pipeline runs end to end") {
    TempDir data("cli_t_pipeline");
    TempDir res("cli_t_pipeline_run");

    std::vector<std::string> gen{"gen-data", "--out", data.path, "--num-parents", "2",
                                 "--depth",  "2",     "--confusion", "0:1:0.3"};
    gen.insert(gen.end(), kSmallGen.begin(), kSmallGen.end());
    CHECK(run(gen) == 0);
    for (const char* f : {"classes.tsv", "annotations.jsonl", "annotations.truth.jsonl",
                          "features.bin", "rates.true.tsv"}) {
        CHECK(std::filesystem::exists(data.path + "/" + f));
    }

    CHECK(run({"estimate-rates", "--annotations", data.path + "/annotations.jsonl", "--classes",
               data.path + "/classes.tsv", "--out", data.path + "/rates.tsv"}) == 0);
    CHECK(std::filesystem::exists(data.path + "/rates.tsv"));

    CHECK(run({"sample-plan", "--annotations", data.path + "/annotations.jsonl", "--classes",
               data.path + "/classes.tsv", "--out", data.path + "/plan.tsv", "--lambda",
               "0.7"}) == 0);
    CHECK(std::filesystem::exists(data.path + "/plan.tsv"));

    CHECK(run({"train", "--data", data.path, "--out", res.path, "--loss", "concurrent",
               "--rates", data.path + "/rates.tsv", "--epochs", "3", "--seed", "4"}) == 0);
    CHECK(std::filesystem::exists(res.path + "/model.bin"));
    CHECK(std::filesystem::exists(res.path + "/metrics.log"));
    CHECK(std::filesystem::exists(res.path + "/config.echo"));

    CHECK(run({"eval", "--model", res.path + "/model.bin", "--data", data.path, "--out",
               res.path + "/eval-report.tsv", "--mode", "concurrent", "--rates",
               data.path + "/rates.tsv"}) == 0);
    CHECK(std::filesystem::exists(res.path + "/eval-report.tsv"));
}

TEST_CASE("generated datasets are byte-identical across reruns") {
    TempDir a("cli_t_det_a");
    TempDir b("cli_t_det_b");
    std::vector<std::string> gen_a{"gen-data", "--out", a.path};
    gen_a.insert(gen_a.end(), kSmallGen.begin(), kSmallGen.end());
    std::vector<std::string> gen_b{"gen-data", "--out", b.path};
    gen_b.insert(gen_b.end(), kSmallGen.begin(), kSmallGen.end());
    CHECK(run(gen_a) == 0);
    CHECK(run(gen_b) == 0);
    for (const char* f : {"classes.tsv", "annotations.jsonl", "annotations.truth.jsonl",
                          "features.bin", "rates.true.tsv"}) {
        CHECK(slurp(a.path + "/" + f) == slurp(b.path + "/" + f));
    }
}

TEST_CASE("configuration mistakes exit with code two") {
    TempDir d("cli_t_bad");
    CHECK(run({"gen-data", "--out", d.path, "--images", "0"}) == 2);
    CHECK(run({"gen-data", "--out", d.path, "--no-such-flag"}) == 2);
    CHECK(run({"gen-data"}) == 2);                    // missing required --out
    CHECK(run({"train", "--data", d.path}) == 2);     // missing required --out
    CHECK(run({}) == 2);                              // no subcommand
    CHECK(run({"gen-data", "--out", d.path, "--images", "60", "--num-leaf", "6",
               "--confusion", "0:1:notanumber"}) == 2);
    CHECK(run({"train", "--data", "nowhere", "--out", d.path, "--schedule", "warp"}) == 2);
}

TEST_CASE("missing input files exit with code three") {
    TempDir d("cli_t_missing");
    CHECK(run({"estimate-rates", "--annotations", "no_such_file.jsonl", "--classes",
               "no_such_classes.tsv", "--out", d.path + "/rates.tsv"}) == 3);
    CHECK(run({"train", "--data", "no_such_dataset_dir", "--out", d.path}) == 3);
    CHECK(run({"eval", "--model", "no_model.bin", "--data", "no_dir", "--out",
               d.path + "/r.tsv"}) == 3);
}

TEST_CASE("help requests succeed") {
    CHECK(run({"--help"}) == 0);
    CHECK(run({"train", "--help"}) == 0);
}

TEST_CASE("config files feed options and the command line wins") {
    TempDir d("cli_t_config");
    std::filesystem::create_directories(d.path);
    {
        std::ofstream cfg(d.path + "/gen.cfg");
        cfg << "# generator settings\n"
            << "num-leaf=5\n"
            << "images=200\n"
            << "feature-dim=6\n"
            << "seed=9\n";
    }
    CHECK(run({"gen-data", "--config", d.path + "/gen.cfg", "--out", d.path + "/data",
               "--images", "150"}) == 0);
    // 5 classes from the file, plus the header line
    std::string classes = slurp(d.path + "/data/classes.tsv");
    CHECK(std::count(classes.begin(), classes.end(), '\n') == 6);
    // 150 images from the command line, not 200 from the file
    std::string annotations = slurp(d.path + "/data/annotations.jsonl");
    CHECK(std::count(annotations.begin(), annotations.end(), '\n') == 150);

    {
        std::ofstream cfg(d.path + "/bad.cfg");
        cfg << "not-an-option=1\n";
    }
    CHECK(run({"gen-data", "--config", d.path + "/bad.cfg", "--out", d.path + "/data2"}) == 2);
}

TEST_CASE("gradient checking is wired through the command line") {
    CHECK(run({"gradcheck", "--classes", "10", "--trials", "100"}) == 0);
    CHECK(run({"gradcheck", "--classes", "6", "--trials", "40", "--tolerance", "1e-20"}) == 4);
    CHECK(run({"gradcheck", "--classes", "1"}) == 2);
}

TEST_CASE("a fully balanced plan reports equal probabilities") {
    TempDir d("cli_t_plan");
    std::vector<std::string> gen{"gen-data", "--out", d.path + "/data"};
    gen.insert(gen.end(), kSmallGen.begin(), kSmallGen.end());
    CHECK(run(gen) == 0);
    CHECK(run({"sample-plan", "--annotations", d.path + "/data/annotations.jsonl", "--classes",
               d.path + "/data/classes.tsv", "--out", d.path + "/plan.tsv", "--lambda",
               "1"}) == 0);
    std::ifstream in(d.path + "/plan.tsv");
    std::string line;
    std::getline(in, line);  // header
    double first_ps = -1.0;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cls, name, n, p_n, p_s;
        std::getline(ss, cls, '\t');
        std::getline(ss, name, '\t');
        std::getline(ss, n, '\t');
        std::getline(ss, p_n, '\t');
        std::getline(ss, p_s, '\t');
        const double v = std::stod(p_s);
        if (first_ps < 0.0) first_ps = v;
        CHECK(v == doctest::Approx(first_ps).epsilon(1e-9));
        ++rows;
    }
    CHECK(rows == 6);
}

TEST_CASE("a separable dataset trains to high quality through the CLI") {
    TempDir data("cli_t_quality_data");
    TempDir res("cli_t_quality_run");
    CHECK(run({"gen-data", "--out", data.path, "--num-leaf", "8", "--images", "1000",
               "--feature-dim", "32", "--imbalance", "10", "--noise-sigma", "0.1", "--seed",
               "3"}) == 0);
    CHECK(run({"train", "--data", data.path, "--out", res.path, "--schedule", "balanced",
               "--lambda", "0", "--seed", "4"}) == 0);
    CHECK(run({"eval", "--model", res.path + "/model.bin", "--data", data.path, "--out",
               res.path + "/eval-report.tsv"}) == 0);
    CHECK(report_map(res.path + "/eval-report.tsv") > 0.95);
}
