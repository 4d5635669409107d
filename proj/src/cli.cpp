#include "imbk/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imbk/errors.hpp"
#include "imbk/eval.hpp"
#include "imbk/gradcheck.hpp"
#include "imbk/rates.hpp"
#include "imbk/sampling.hpp"
#include "imbk/schedule.hpp"
#include "imbk/synth.hpp"
#include "imbk/taxonomy.hpp"
#include "imbk/trainer.hpp"

namespace imbk {

namespace {

std::vector<ConfusionPair> parse_confusions(const std::string& text) {
    std::vector<ConfusionPair> pairs;
    if (text.empty()) return pairs;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(',', start);
        if (end == std::string::npos) end = text.size();
        const std::string item = text.substr(start, end - start);
        const std::size_t a = item.find(':');
        const std::size_t b = item.find(':', a == std::string::npos ? a : a + 1);
        if (a == std::string::npos || b == std::string::npos) {
            throw ConfigError("confusion pairs must look like src:dst:rate, got '" + item + "'");
        }
        try {
            ConfusionPair p;
            p.src = std::stoi(item.substr(0, a));
            p.dst = std::stoi(item.substr(a + 1, b - a - 1));
            p.rate = std::stod(item.substr(b + 1));
            pairs.push_back(p);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse confusion pair '" + item + "'");
        }
        start = end + 1;
    }
    return pairs;
}

// Applies key=value config files by injecting "--key=value" tokens after the
// subcommand's own arguments, skipping keys the command line already sets.
// CLI11 only reads config files on the app it parses directly, so subcommand
// configs are expanded by hand before parsing.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> tokens) {
    std::size_t sub_pos = tokens.size();
    CLI::App* sub = nullptr;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!tokens[i].empty() && tokens[i][0] != '-') {
            sub = app.get_subcommand_no_throw(tokens[i]);
            sub_pos = i;
            break;
        }
    }
    if (sub == nullptr) return tokens;

    std::vector<std::string> files;
    std::vector<std::string> rest;
    for (std::size_t i = sub_pos + 1; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        if (t == "--config") {
            if (i + 1 >= tokens.size()) throw ConfigError("--config needs a file path");
            files.push_back(tokens[++i]);
        } else if (t.rfind("--config=", 0) == 0) {
            files.push_back(t.substr(9));
        } else {
            rest.push_back(t);
        }
    }
    if (files.empty()) return tokens;

    const auto given = [&rest](const std::string& opt) {
        for (const std::string& t : rest) {
            if (t == opt || t.rfind(opt + "=", 0) == 0) return true;
        }
        return false;
    };

    std::vector<std::string> injected;
    for (const std::string& file : files) {
        std::ifstream in(file);
        if (!in) throw ConfigError("cannot read config file " + file);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string s = CLI::detail::trim_copy(line);
            if (s.empty() || s[0] == '#') continue;
            const std::size_t eq = s.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(file + ":" + std::to_string(lineno) + ": expected key=value");
            }
            const std::string key = CLI::detail::trim_copy(s.substr(0, eq));
            std::string value = CLI::detail::trim_copy(s.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
                value = value.substr(1, value.size() - 2);
            }
            if (key == "config") throw ConfigError(file + ": config files cannot nest");
            const std::string opt = "--" + key;
            if (sub->get_option_no_throw(opt) == nullptr) {
                throw ConfigError(file + ": unknown option '" + key + "' for " +
                                  sub->get_name());
            }
            if (!given(opt)) injected.push_back(opt + "=" + value);
        }
    }
    std::vector<std::string> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
    out.insert(out.end(), rest.begin(), rest.end());
    out.insert(out.end(), injected.begin(), injected.end());
    return out;
}

HierarchyMode parse_hierarchy(const std::string& name) {
    if (name == "remove_suppression") return HierarchyMode::RemoveSuppression;
    if (name == "literal_zero") return HierarchyMode::LiteralZero;
    throw ConfigError("unknown hierarchy mode '" + name + "'");
}

RateEstimator parse_estimator(const std::string& name) {
    if (name == "instance") return RateEstimator::InstanceCoLabel;
    if (name == "image") return RateEstimator::ImageCoOccurrence;
    throw ConfigError("unknown estimator '" + name + "'");
}

LossKind parse_loss(const std::string& name) {
    if (name == "softmax") return LossKind::Softmax;
    if (name == "concurrent") return LossKind::Concurrent;
    if (name == "bce") return LossKind::Bce;
    if (name == "focal") return LossKind::Focal;
    if (name == "weighted_softmax") return LossKind::WeightedSoftmax;
    throw ConfigError("unknown loss '" + name + "'");
}

struct GenDataArgs {
    std::string out;
    SynthConfig cfg;
    std::string confusions;
};

void cmd_gen_data(const GenDataArgs& args) {
    SynthConfig cfg = args.cfg;
    cfg.confusion_pairs = parse_confusions(args.confusions);
    const SynthDataset ds = generate(cfg);
    std::filesystem::create_directories(args.out);
    save_dataset(ds, args.out);

    // Realized leaf imbalance, from the clean labels.
    std::vector<std::int64_t> leaf_counts;
    for (ClassId c : ds.taxonomy.leaves()) {
        leaf_counts.push_back(ds.truth.image_counts[static_cast<std::size_t>(c)]);
    }
    std::printf("gen-data: classes=%d images=%lld leaf_imbalance=%.4g out=%s\n",
                ds.taxonomy.num_classes(), static_cast<long long>(cfg.images),
                imbalance_magnitude(leaf_counts), args.out.c_str());
}

struct EstimateRatesArgs {
    std::string annotations;
    std::string classes;
    std::string out;
    double min_rate = 0.1;
    std::string hierarchy = "remove_suppression";
    std::string estimator = "instance";
    int top_k = 55;
};

void cmd_estimate_rates(const EstimateRatesArgs& args) {
    const Taxonomy t = load_taxonomy(args.classes);
    const AnnotationSet a = load_annotations(args.annotations, t.num_classes());
    const RateMatrix r = estimate_rates(a, t, args.min_rate, parse_hierarchy(args.hierarchy),
                                        parse_estimator(args.estimator));
    save_rates(r, args.out);
    for (const ConfusedPair& p : top_confused_pairs(r, t, args.top_k)) {
        std::printf("%d\t%s\t%d\t%s\t%.6g\n", p.i, t.name(p.i).c_str(), p.j, t.name(p.j).c_str(),
                    p.rate);
    }
    std::printf("estimate-rates: classes=%d instances=%zu out=%s\n", t.num_classes(),
                a.instances.size(), args.out.c_str());
}

struct SamplePlanArgs {
    std::string annotations;
    std::string classes;
    std::string out;
    double lambda = 0.7;
};

void cmd_sample_plan(const SamplePlanArgs& args) {
    const Taxonomy t = load_taxonomy(args.classes);
    const AnnotationSet a = load_annotations(args.annotations, t.num_classes());
    const SamplingPlan plan = build_plan(a, args.lambda);
    save_plan_report(plan, t, args.out);
    std::printf("sample-plan: lambda=%.4g classes_present=%d entropy=%.6g out=%s\n", plan.lambda,
                plan.num_present, plan_entropy(plan), args.out.c_str());
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string rates_path;
    std::string loss = "softmax";
    std::string grad_mode = "exact";
    std::string schedule = "sequential";
    int epochs = 7;
    int pretrain_epochs = 20;
    double lambda = 0.7;
    int batch_size = 16;
    double base_lr_per_sample = 0.00125;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    double val_fraction = 0.2;
    int hidden_dim = 0;
    bool background = false;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double effective_beta = 0.999;
    double min_rate = 0.1;
    std::string hierarchy = "remove_suppression";
    std::uint64_t seed = 1;
};

void echo_train_config(const TrainArgs& args, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path);
    out << "# resolved train configuration\n"
        << "data=" << args.data << '\n'
        << "out=" << args.out << '\n'
        << "rates=" << args.rates_path << '\n'
        << "loss=" << args.loss << '\n'
        << "grad-mode=" << args.grad_mode << '\n'
        << "schedule=" << args.schedule << '\n'
        << "epochs=" << args.epochs << '\n'
        << "pretrain-epochs=" << args.pretrain_epochs << '\n'
        << "lambda=" << args.lambda << '\n'
        << "batch-size=" << args.batch_size << '\n'
        << "base-lr-per-sample=" << args.base_lr_per_sample << '\n'
        << "momentum=" << args.momentum << '\n'
        << "weight-decay=" << args.weight_decay << '\n'
        << "val-fraction=" << args.val_fraction << '\n'
        << "hidden-dim=" << args.hidden_dim << '\n'
        << "background=" << (args.background ? 1 : 0) << '\n'
        << "focal-gamma=" << args.focal_gamma << '\n'
        << "focal-alpha=" << args.focal_alpha << '\n'
        << "effective-beta=" << args.effective_beta << '\n'
        << "min-rate=" << args.min_rate << '\n'
        << "hierarchy=" << args.hierarchy << '\n'
        << "seed=" << args.seed << '\n';
}

RateMatrix resolve_rates(const std::string& path, const SynthDataset& ds, double min_rate,
                         const std::string& hierarchy) {
    if (!path.empty()) return load_rates(path, ds.taxonomy.num_classes());
    return estimate_rates(ds.observed, ds.taxonomy, min_rate, parse_hierarchy(hierarchy));
}

void cmd_train(const TrainArgs& args) {
    // Everything the flags alone determine is validated before any file is
    // touched, so mistakes exit as config errors even when paths are bad too.
    TrainPlan plan;
    if (args.schedule == "sequential") {
        plan = sequential_plan(args.epochs);
    } else if (args.schedule == "balanced") {
        plan = balanced_plan(args.epochs, args.lambda);
    } else if (args.schedule == "hybrid") {
        plan = hybrid_plan(args.pretrain_epochs, args.lambda);
    } else {
        throw ConfigError("unknown schedule '" + args.schedule + "'");
    }
    plan.batch_size = args.batch_size;
    plan.base_lr_per_sample = args.base_lr_per_sample;
    plan.momentum = args.momentum;
    plan.weight_decay = args.weight_decay;

    LossSpec loss;
    loss.kind = parse_loss(args.loss);
    if (args.grad_mode == "exact") {
        loss.grad_mode = ConcurrentGradMode::Exact;
    } else if (args.grad_mode == "as_published") {
        loss.grad_mode = ConcurrentGradMode::AsPublished;
    } else {
        throw ConfigError("unknown grad mode '" + args.grad_mode + "'");
    }
    loss.focal_gamma = args.focal_gamma;
    loss.focal_alpha = args.focal_alpha;
    loss.effective_beta = args.effective_beta;
    parse_hierarchy(args.hierarchy);

    TrainOptions opts;
    opts.val_fraction = args.val_fraction;
    opts.hidden_dim = args.hidden_dim;
    opts.add_background_class = args.background;

    const SynthDataset ds = load_dataset(args.data);
    RateMatrix rates(ds.taxonomy.num_classes());
    if (loss.kind == LossKind::Concurrent) {
        rates = resolve_rates(args.rates_path, ds, args.min_rate, args.hierarchy);
    }

    std::filesystem::create_directories(args.out);
    echo_train_config(args, args.out + "/config.echo");
    const TrainResult result = train(ds, plan, loss, rates, args.seed, opts);
    save_model(result.model, args.out + "/model.bin");
    save_metrics(result.metrics, args.out + "/metrics.log");
    const double final_map = result.metrics.empty() ? 0.0 : result.metrics.back().val_map;
    std::printf("train: epochs=%d final_val_mAP=%.6f out=%s\n", plan.total_epochs(), final_map,
                args.out.c_str());
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string mode = "softmax";
    std::string rates_path;
    double min_rate = 0.1;
    std::string hierarchy = "remove_suppression";
};

void cmd_eval(const EvalArgs& args) {
    if (args.mode != "softmax" && args.mode != "concurrent") {
        throw ConfigError("unknown eval mode '" + args.mode + "'");
    }
    parse_hierarchy(args.hierarchy);
    const SynthDataset ds = load_dataset(args.data);
    const Model model = load_model(args.model);

    std::vector<std::vector<double>> scores;
    if (args.mode == "softmax") {
        scores = predict(model, ds.features, nullptr);
    } else {
        const RateMatrix rates =
            resolve_rates(args.rates_path, ds, args.min_rate, args.hierarchy);
        scores = predict(model, ds.features, &rates);
    }
    const EvalReport report = evaluate(scores, ds.truth);
    save_eval_report(report, args.out);
    std::printf("eval: instances=%zu mAP=%.6f ignored_fp=%lld out=%s\n", scores.size(), report.map,
                static_cast<long long>(report.ignored_fp_count), args.out.c_str());
}

struct GradcheckArgs {
    int classes = 10;
    int trials = 100;
    std::uint64_t seed = 1;
    double tolerance = 1e-5;
    double step = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& args) {
    if (args.classes < 2) throw ConfigError("gradcheck needs at least 2 classes");
    if (args.trials < 1) throw ConfigError("gradcheck needs at least 1 trial");
    const GradCheckReport report = run_gradcheck(args.classes, args.trials, args.seed,
                                                 args.tolerance, args.step);
    for (const GradCheckRow& row : report.rows) {
        std::printf("%s\t%d\t%.3e\t%s\n", row.loss.c_str(), row.trials, row.worst_rel_err,
                    row.pass ? "pass" : "FAIL");
    }
    if (!report.all_pass) {
        throw NumericalError("gradient check failed");
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"long-tail multi-label classification testbed"};
    app.require_subcommand(1);
    // Filled during parse but never read: config files are expanded into argv
    // tokens up front, so this option only exists for --help and validation.
    std::string config_file;

    GenDataArgs gen;
    CLI::App* sub_gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
    sub_gen->add_option("--config", config_file, "key=value file applied before other flags");
    sub_gen->add_option("--out", gen.out, "output directory")->required();
    sub_gen->add_option("--num-leaf", gen.cfg.num_leaf, "leaf classes")->capture_default_str();
    sub_gen->add_option("--num-parents", gen.cfg.num_parents, "parent classes")
        ->capture_default_str();
    sub_gen->add_option("--depth", gen.cfg.depth, "hierarchy levels (max 5)")
        ->capture_default_str();
    sub_gen->add_option("--imbalance", gen.cfg.imbalance_magnitude,
                        "max/min leaf frequency ratio")
        ->capture_default_str();
    sub_gen->add_option("--feature-dim", gen.cfg.feature_dim, "feature dimension")
        ->capture_default_str();
    sub_gen->add_option("--noise-sigma", gen.cfg.noise_sigma, "feature noise stddev")
        ->capture_default_str();
    sub_gen->add_option("--confusion", gen.confusions,
                        "comma-separated src:dst:rate label flips");
    sub_gen->add_flag("--colabel-flips", gen.cfg.colabel_flips,
                      "flips add the confused label instead of replacing");
    sub_gen->add_option("--parent-only-prob", gen.cfg.parent_only_prob,
                        "chance an observed leaf label is dropped")
        ->capture_default_str();
    sub_gen->add_option("--multi-leaf-prob", gen.cfg.multi_leaf_prob,
                        "chance of a second co-labeled leaf")
        ->capture_default_str();
    sub_gen->add_option("--images", gen.cfg.images, "image count")->capture_default_str();
    sub_gen->add_option("--seed", gen.cfg.seed, "generator seed")->capture_default_str();
    sub_gen->callback([&gen] { cmd_gen_data(gen); });

    EstimateRatesArgs est;
    CLI::App* sub_est =
        app.add_subcommand("estimate-rates", "estimate concurrent rates from annotations");
    sub_est->add_option("--config", config_file, "key=value file applied before other flags");
    sub_est->add_option("--annotations", est.annotations, "annotations.jsonl")->required();
    sub_est->add_option("--classes", est.classes, "classes.tsv")->required();
    sub_est->add_option("--out", est.out, "output rates.tsv")->required();
    sub_est->add_option("--min-rate", est.min_rate, "floor below which rates are zeroed")
        ->capture_default_str();
    sub_est->add_option("--hierarchy", est.hierarchy, "remove_suppression|literal_zero")
        ->capture_default_str();
    sub_est->add_option("--estimator", est.estimator, "instance|image")->capture_default_str();
    sub_est->add_option("--top-k", est.top_k, "confused pairs to print")->capture_default_str();
    sub_est->callback([&est] { cmd_estimate_rates(est); });

    SamplePlanArgs sp;
    CLI::App* sub_sp = app.add_subcommand("sample-plan", "report soft-balance probabilities");
    sub_sp->add_option("--config", config_file, "key=value file applied before other flags");
    sub_sp->add_option("--annotations", sp.annotations, "annotations.jsonl")->required();
    sub_sp->add_option("--classes", sp.classes, "classes.tsv")->required();
    sub_sp->add_option("--out", sp.out, "output plan tsv")->required();
    sub_sp->add_option("--lambda", sp.lambda, "balance factor")->capture_default_str();
    sub_sp->callback([&sp] { cmd_sample_plan(sp); });

    TrainArgs tr;
    CLI::App* sub_tr = app.add_subcommand("train", "train a classifier on a dataset directory");
    sub_tr->add_option("--config", config_file, "key=value file applied before other flags");
    sub_tr->add_option("--data", tr.data, "dataset directory from gen-data")->required();
    sub_tr->add_option("--out", tr.out, "output directory")->required();
    sub_tr->add_option("--rates", tr.rates_path,
                       "rates.tsv (estimated from the data when omitted)");
    sub_tr->add_option("--loss", tr.loss, "softmax|concurrent|bce|focal|weighted_softmax")
        ->capture_default_str();
    sub_tr->add_option("--grad-mode", tr.grad_mode, "exact|as_published")->capture_default_str();
    sub_tr->add_option("--schedule", tr.schedule, "sequential|balanced|hybrid")
        ->capture_default_str();
    sub_tr->add_option("--epochs", tr.epochs, "epochs for single-phase schedules")
        ->capture_default_str();
    sub_tr->add_option("--pretrain-epochs", tr.pretrain_epochs, "hybrid first-phase epochs")
        ->capture_default_str();
    sub_tr->add_option("--lambda", tr.lambda, "balance factor for balanced phases")
        ->capture_default_str();
    sub_tr->add_option("--batch-size", tr.batch_size, "images per batch")->capture_default_str();
    sub_tr->add_option("--base-lr-per-sample", tr.base_lr_per_sample, "lr per batch sample")
        ->capture_default_str();
    sub_tr->add_option("--momentum", tr.momentum, "sgd momentum")->capture_default_str();
    sub_tr->add_option("--weight-decay", tr.weight_decay, "l2 added to gradients")
        ->capture_default_str();
    sub_tr->add_option("--val-fraction", tr.val_fraction, "held-out fraction")
        ->capture_default_str();
    sub_tr->add_option("--hidden-dim", tr.hidden_dim, "hidden units (0 = linear)")
        ->capture_default_str();
    sub_tr->add_flag("--background", tr.background, "append an always-negative class");
    sub_tr->add_option("--focal-gamma", tr.focal_gamma, "focal focusing exponent")
        ->capture_default_str();
    sub_tr->add_option("--focal-alpha", tr.focal_alpha, "focal positive weight")
        ->capture_default_str();
    sub_tr->add_option("--effective-beta", tr.effective_beta, "effective-number beta")
        ->capture_default_str();
    sub_tr->add_option("--min-rate", tr.min_rate, "rate floor when estimating")
        ->capture_default_str();
    sub_tr->add_option("--hierarchy", tr.hierarchy, "remove_suppression|literal_zero")
        ->capture_default_str();
    sub_tr->add_option("--seed", tr.seed, "training seed")->capture_default_str();
    sub_tr->callback([&tr] { cmd_train(tr); });

    EvalArgs ev;
    CLI::App* sub_ev = app.add_subcommand("eval", "score a checkpoint against clean labels");
    sub_ev->add_option("--config", config_file, "key=value file applied before other flags");
    sub_ev->add_option("--model", ev.model, "model.bin checkpoint")->required();
    sub_ev->add_option("--data", ev.data, "dataset directory")->required();
    sub_ev->add_option("--out", ev.out, "output eval-report.tsv")->required();
    sub_ev->add_option("--mode", ev.mode, "softmax|concurrent")->capture_default_str();
    sub_ev->add_option("--rates", ev.rates_path,
                       "rates.tsv for concurrent mode (estimated when omitted)");
    sub_ev->add_option("--min-rate", ev.min_rate, "rate floor when estimating")
        ->capture_default_str();
    sub_ev->add_option("--hierarchy", ev.hierarchy, "remove_suppression|literal_zero")
        ->capture_default_str();
    sub_ev->callback([&ev] { cmd_eval(ev); });

    GradcheckArgs gc;
    CLI::App* sub_gc = app.add_subcommand("gradcheck", "finite-difference check of all losses");
    sub_gc->add_option("--config", config_file, "key=value file applied before other flags");
    sub_gc->add_option("--classes", gc.classes, "max classes per case")->capture_default_str();
    sub_gc->add_option("--trials", gc.trials, "random cases")->capture_default_str();
    sub_gc->add_option("--seed", gc.seed, "rng seed")->capture_default_str();
    sub_gc->add_option("--tolerance", gc.tolerance, "max relative error")->capture_default_str();
    sub_gc->add_option("--step", gc.step, "finite-difference step")->capture_default_str();
    sub_gc->callback([&gc] { cmd_gradcheck(gc); });

    try {
        std::vector<std::string> tokens;
        for (int i = 1; i < argc; ++i) tokens.emplace_back(argv[i]);
        tokens = expand_config(app, std::move(tokens));
        std::vector<const char*> cargs;
        cargs.push_back(argc > 0 ? argv[0] : "imbk");
        for (const std::string& t : tokens) cargs.push_back(t.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}

}  // namespace imbk
