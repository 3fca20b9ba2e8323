// Command-line front end for the environment classification toolkit.
// Exit codes: 0 success, 1 pipeline failure (one-line "error: ..." on
// stderr), 2 usage errors.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "envclass/pipeline.hpp"

namespace {

using envclass::SplitGranularity;
using nlohmann::json;

/// Output directories are relative to ENVCLASS_OUT_ROOT when it is set.
std::string apply_out_root(const std::string& out) {
    const char* root = std::getenv("ENVCLASS_OUT_ROOT");
    if (root && *root && !out.empty() && !std::filesystem::path(out).is_absolute()) {
        return (std::filesystem::path(root) / out).string();
    }
    return out;
}

template <typename T>
void override_if(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

/// Values in the config file take precedence over command-line flags.
json load_config_or_empty(const std::string& path) {
    if (path.empty()) return json::object();
    return envclass::pipeline::load_json_file(path);
}

/// Short spellings accepted alongside the canonical option values.
std::string canonical_model(std::string m) {
    if (m == "dt") return "tree";
    if (m == "rf") return "forest";
    return m;
}

std::string canonical_classes(std::string c) {
    if (c == "2") return "2class";
    if (c == "3") return "3class";
    return c;
}

void write_resolved_config(const std::string& out_dir, json resolved,
                           const std::string& config_path, unsigned jobs) {
    envclass::pipeline::ensure_dir(out_dir);
    resolved["config_file"] = config_path.empty() ? json() : json(config_path);
    resolved["jobs"] = jobs;
    envclass::pipeline::write_file(
        (std::filesystem::path(out_dir) / "resolved_config.json").string(),
        resolved.dump(2) + "\n");
}

int run_guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Classify wireless environments (outdoor, indoor interior, indoor near window) "
                 "from passively collected multi-band signal measurements.",
                 "envclass"};
    app.require_subcommand(1);
    app.get_formatter()->column_width(32);

    std::string config_path;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--jobs", jobs,
                   "Upper bound on worker threads (default: all cores; the pipeline "
                   "currently runs sequentially, so results never depend on it)")
        ->check(CLI::PositiveNumber);

    // --- ingest ---
    auto* c_ingest = app.add_subcommand(
        "ingest", "Parse labeled JSON signal exports into a cleaned dataset CSV");
    envclass::pipeline::IngestOptions ingest_opt;
    c_ingest->add_option("--input", ingest_opt.input_dir,
                         "Base directory for relative paths in the labels file");
    c_ingest->add_option("--labels", ingest_opt.labels_path,
                         "CSV mapping export files to labels (path,label[,location])")
        ->required();
    c_ingest->add_option("--out", ingest_opt.out_dir, "Output directory")->required();
    c_ingest->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- extract ---
    auto* c_extract =
        app.add_subcommand("extract", "Extract a feature matrix from a dataset CSV");
    envclass::pipeline::ExtractOptions extract_opt;
    c_extract->add_option("--dataset", extract_opt.dataset_path, "Dataset CSV from ingest/synth")
        ->required();
    c_extract->add_option("--layout", extract_opt.layout_name, "Feature layout")
        ->check(CLI::IsMember({"all72", "no6ghz67", "no6ghznonr40", "best4"}))
        ->capture_default_str();
    c_extract->add_option("--out", extract_opt.out_dir, "Output directory")->required();
    c_extract->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- train ---
    auto* c_train = app.add_subcommand("train", "Train a classifier bundle from a matrix");
    envclass::pipeline::TrainOptions train_opt;
    std::string train_granularity = "record";
    std::string train_feature_sampling = "split";
    c_train->add_option("--matrix", train_opt.matrix_path, "Feature matrix CSV from extract")
        ->required();
    c_train->add_option("--layout", train_opt.expected_layout,
                        "Assert the matrix holds this feature layout")
        ->check(CLI::IsMember({"all72", "no6ghz67", "no6ghznonr40", "best4"}));
    c_train->add_option("--model", train_opt.model_kind, "Model kind (dt and rf are aliases)")
        ->check(CLI::IsMember({"tree", "dt", "forest", "rf", "dnn"}))
        ->required();
    c_train->add_option("--classes", train_opt.classes, "Class scheme (2 and 3 are aliases)")
        ->check(CLI::IsMember({"3class", "2class", "3", "2"}))
        ->capture_default_str();
    c_train
        ->add_option("--feature-sampling", train_feature_sampling,
                     "Forest feature pools: fresh draw per split, or disjoint per tree")
        ->check(CLI::IsMember({"split", "disjoint"}))
        ->capture_default_str();
    c_train->add_option("--granularity", train_granularity, "Split granularity")
        ->check(CLI::IsMember({"record", "session", "window"}))
        ->capture_default_str();
    c_train->add_option("--test-fraction", train_opt.split.test_fraction, "Test fraction")
        ->capture_default_str();
    c_train->add_option("--val-fraction", train_opt.split.val_fraction, "Validation fraction")
        ->capture_default_str();
    c_train->add_option("--seed", train_opt.split.seed, "Master seed (required)")->required();
    c_train->add_option("--max-depth", train_opt.tree.max_depth, "Tree depth limit")
        ->capture_default_str();
    c_train
        ->add_option("--min-samples-leaf", train_opt.tree.min_samples_leaf,
                     "Minimum samples per leaf")
        ->capture_default_str();
    c_train->add_option("--n-trees", train_opt.forest.n_trees, "Trees in the forest")
        ->capture_default_str();
    c_train->add_option("--learning-rate", train_opt.dnn.learning_rate, "Adam learning rate")
        ->capture_default_str();
    c_train->add_option("--batch-size", train_opt.dnn.batch_size, "Mini-batch size")
        ->capture_default_str();
    c_train->add_option("--max-epochs", train_opt.dnn.max_epochs, "Epoch limit")
        ->capture_default_str();
    c_train->add_option("--patience", train_opt.dnn.patience, "Early-stopping patience")
        ->capture_default_str();
    c_train->add_option("--out", train_opt.out_dir, "Output directory")->required();
    c_train->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- evaluate ---
    auto* c_eval = app.add_subcommand(
        "evaluate", "Evaluate a bundle or a routed registry on the train-time test split");
    envclass::pipeline::EvaluateOptions eval_opt;
    auto* e_src = c_eval->add_option_group("model source");
    e_src->add_option("--bundle", eval_opt.bundle_path, "Model bundle JSON");
    auto* e_reg = e_src->add_option("--registry", eval_opt.registry_path,
                                    "Directory of bundles trained from one split");
    e_src->require_option(1);
    c_eval->add_option("--dataset", eval_opt.dataset_path, "The exact training dataset CSV")
        ->required();
    c_eval
        ->add_option("--techniques", eval_opt.techniques,
                     "Comma-separated techniques to score (none, mv, da)")
        ->delimiter(',')
        ->check(CLI::IsMember({"none", "mv", "da"}))
        ->needs(e_reg);
    c_eval
        ->add_option("--classes", eval_opt.classes,
                     "Registry class-scheme filter (default 3class; 2 and 3 are aliases)")
        ->check(CLI::IsMember({"3class", "2class", "3", "2"}))
        ->needs(e_reg);
    c_eval
        ->add_option("--availability", eval_opt.availability,
                     "Judge radio availability per record or per session (default record)")
        ->check(CLI::IsMember({"record", "session"}))
        ->needs(e_reg);
    c_eval->add_option("--out", eval_opt.out_dir, "Output directory")->required();
    c_eval->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- predict ---
    auto* c_predict = app.add_subcommand(
        "predict", "Classify a dataset with one bundle, or route each decision via a registry");
    envclass::pipeline::PredictOptions predict_opt;
    auto* p_src = c_predict->add_option_group("model source");
    p_src->add_option("--bundle", predict_opt.bundle_path, "Model bundle JSON");
    auto* p_reg = p_src->add_option("--registry", predict_opt.registry_path,
                                    "Directory of bundles for availability routing");
    p_src->require_option(1);
    c_predict->add_option("--dataset", predict_opt.dataset_path, "Dataset CSV")->required();
    c_predict
        ->add_option("--technique", predict_opt.technique,
                     "Routed decisions per record (none) or per 30 s window (mv, da)")
        ->check(CLI::IsMember({"none", "mv", "da"}))
        ->needs(p_reg);
    c_predict
        ->add_option("--availability", predict_opt.availability,
                     "Judge radio availability per record or per session (default record)")
        ->check(CLI::IsMember({"record", "session"}))
        ->needs(p_reg);
    c_predict->add_option("--out", predict_opt.out_dir, "Output directory")->required();
    c_predict->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- window-eval ---
    auto* c_weval = app.add_subcommand(
        "window-eval", "Evaluate a bundle on 30 s windows (majority vote or aggregation)");
    envclass::pipeline::WindowEvalOptions weval_opt;
    c_weval->add_option("--bundle", weval_opt.bundle_path, "Bundle trained at window granularity")
        ->required();
    c_weval->add_option("--dataset", weval_opt.dataset_path, "The exact training dataset CSV")
        ->required();
    c_weval->add_option("--technique", weval_opt.technique, "Windowing technique")
        ->check(CLI::IsMember({"mv", "da"}))
        ->capture_default_str();
    c_weval->add_option("--out", weval_opt.out_dir, "Output directory")->required();
    c_weval->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- synth ---
    auto* c_synth =
        app.add_subcommand("synth", "Generate a seeded synthetic labeled dataset");
    envclass::pipeline::SynthOptions synth_opt;
    c_synth
        ->add_option("--sessions-per-label", synth_opt.sessions_per_label,
                     "Sessions per environment class")
        ->capture_default_str();
    c_synth
        ->add_option("--records-per-session", synth_opt.records_per_session,
                     "Records per session (5 s apart)")
        ->capture_default_str();
    c_synth->add_option("--seed", synth_opt.seed, "Master seed (required)")->required();
    c_synth
        ->add_option("--cdf-features", synth_opt.cdf_features,
                     "Comma-separated feature names for a CDF separation report")
        ->delimiter(',');
    c_synth->add_option("--out", synth_opt.out_dir, "Output directory")->required();
    c_synth->add_option("--config", config_path, "JSON config file (overrides flags)");

    // --- reproduce ---
    auto* c_repro = app.add_subcommand(
        "reproduce", "Run the full pipeline end to end and write a checksum manifest");
    envclass::pipeline::ReproduceOptions repro_opt;
    c_repro->add_option("--seed", repro_opt.seed, "Master seed (required)")->required();
    c_repro
        ->add_option("--sessions-per-label", repro_opt.sessions_per_label,
                     "Sessions per environment class")
        ->capture_default_str();
    c_repro
        ->add_option("--records-per-session", repro_opt.records_per_session,
                     "Records per session")
        ->capture_default_str();
    c_repro->add_option("--out", repro_opt.out_dir, "Output directory")->required();
    c_repro->add_option("--config", config_path, "JSON config file (overrides flags)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    json config;
    try {
        config = load_config_or_empty(config_path);
        if (!config.is_object()) throw envclass::Error("config file must hold a JSON object");
        override_if(config, "jobs", jobs);
        if (jobs == 0) throw envclass::Error("jobs must be positive");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    if (*c_ingest) {
        override_if(config, "input", ingest_opt.input_dir);
        override_if(config, "labels", ingest_opt.labels_path);
        override_if(config, "out", ingest_opt.out_dir);
        ingest_opt.out_dir = apply_out_root(ingest_opt.out_dir);
        return run_guarded([&] {
            write_resolved_config(ingest_opt.out_dir, ingest_opt.to_json(), config_path, jobs);
            envclass::pipeline::run_ingest(ingest_opt);
            std::cout << "wrote " << ingest_opt.out_dir << "/dataset.csv\n";
        });
    }
    if (*c_extract) {
        override_if(config, "dataset", extract_opt.dataset_path);
        override_if(config, "layout", extract_opt.layout_name);
        override_if(config, "out", extract_opt.out_dir);
        extract_opt.out_dir = apply_out_root(extract_opt.out_dir);
        return run_guarded([&] {
            write_resolved_config(extract_opt.out_dir, extract_opt.to_json(), config_path, jobs);
            std::string path = envclass::pipeline::run_extract(extract_opt);
            std::cout << "wrote " << path << "\n";
        });
    }
    if (*c_train) {
        override_if(config, "matrix", train_opt.matrix_path);
        override_if(config, "layout", train_opt.expected_layout);
        override_if(config, "model", train_opt.model_kind);
        override_if(config, "classes", train_opt.classes);
        override_if(config, "feature_sampling", train_feature_sampling);
        override_if(config, "granularity", train_granularity);
        override_if(config, "test_fraction", train_opt.split.test_fraction);
        override_if(config, "val_fraction", train_opt.split.val_fraction);
        override_if(config, "seed", train_opt.split.seed);
        override_if(config, "max_depth", train_opt.tree.max_depth);
        override_if(config, "min_samples_leaf", train_opt.tree.min_samples_leaf);
        override_if(config, "n_trees", train_opt.forest.n_trees);
        override_if(config, "learning_rate", train_opt.dnn.learning_rate);
        override_if(config, "batch_size", train_opt.dnn.batch_size);
        override_if(config, "max_epochs", train_opt.dnn.max_epochs);
        override_if(config, "patience", train_opt.dnn.patience);
        override_if(config, "out", train_opt.out_dir);
        train_opt.out_dir = apply_out_root(train_opt.out_dir);
        return run_guarded([&] {
            train_opt.model_kind = canonical_model(train_opt.model_kind);
            train_opt.classes = canonical_classes(train_opt.classes);
            train_opt.split.granularity = envclass::parse_split_granularity(train_granularity);
            train_opt.forest.tree = train_opt.tree;
            train_opt.forest.feature_sampling =
                envclass::parse_feature_sampling(train_feature_sampling);
            write_resolved_config(train_opt.out_dir, train_opt.to_json(), config_path, jobs);
            std::string path = envclass::pipeline::run_train(train_opt);
            std::cout << "wrote " << path << "\n";
        });
    }
    if (*c_eval) {
        override_if(config, "bundle", eval_opt.bundle_path);
        override_if(config, "registry", eval_opt.registry_path);
        override_if(config, "dataset", eval_opt.dataset_path);
        override_if(config, "techniques", eval_opt.techniques);
        override_if(config, "classes", eval_opt.classes);
        override_if(config, "availability", eval_opt.availability);
        override_if(config, "out", eval_opt.out_dir);
        eval_opt.out_dir = apply_out_root(eval_opt.out_dir);
        return run_guarded([&] {
            eval_opt.classes = canonical_classes(eval_opt.classes);
            write_resolved_config(eval_opt.out_dir, eval_opt.to_json(), config_path, jobs);
            envclass::pipeline::run_evaluate(eval_opt);
            std::cout << "wrote " << eval_opt.out_dir << "/metrics.json\n";
        });
    }
    if (*c_predict) {
        override_if(config, "bundle", predict_opt.bundle_path);
        override_if(config, "registry", predict_opt.registry_path);
        override_if(config, "dataset", predict_opt.dataset_path);
        override_if(config, "technique", predict_opt.technique);
        override_if(config, "availability", predict_opt.availability);
        override_if(config, "out", predict_opt.out_dir);
        predict_opt.out_dir = apply_out_root(predict_opt.out_dir);
        return run_guarded([&] {
            write_resolved_config(predict_opt.out_dir, predict_opt.to_json(), config_path, jobs);
            std::string path = envclass::pipeline::run_predict(predict_opt);
            std::cout << "wrote " << path << "\n";
        });
    }
    if (*c_weval) {
        override_if(config, "bundle", weval_opt.bundle_path);
        override_if(config, "dataset", weval_opt.dataset_path);
        override_if(config, "technique", weval_opt.technique);
        override_if(config, "out", weval_opt.out_dir);
        weval_opt.out_dir = apply_out_root(weval_opt.out_dir);
        return run_guarded([&] {
            write_resolved_config(weval_opt.out_dir, weval_opt.to_json(), config_path, jobs);
            envclass::pipeline::run_window_eval(weval_opt);
            std::cout << "wrote " << weval_opt.out_dir << "/metrics.json\n";
        });
    }
    if (*c_synth) {
        override_if(config, "sessions_per_label", synth_opt.sessions_per_label);
        override_if(config, "records_per_session", synth_opt.records_per_session);
        override_if(config, "seed", synth_opt.seed);
        override_if(config, "cdf_features", synth_opt.cdf_features);
        override_if(config, "invert_horizontal_accuracy",
                    synth_opt.invert_horizontal_accuracy);
        if (config.contains("profiles")) synth_opt.profile_overrides = config.at("profiles");
        override_if(config, "out", synth_opt.out_dir);
        synth_opt.out_dir = apply_out_root(synth_opt.out_dir);
        return run_guarded([&] {
            write_resolved_config(synth_opt.out_dir, synth_opt.to_json(), config_path, jobs);
            std::string path = envclass::pipeline::run_synth(synth_opt);
            std::cout << "wrote " << path << "\n";
        });
    }
    if (*c_repro) {
        override_if(config, "seed", repro_opt.seed);
        override_if(config, "sessions_per_label", repro_opt.sessions_per_label);
        override_if(config, "records_per_session", repro_opt.records_per_session);
        override_if(config, "out", repro_opt.out_dir);
        repro_opt.out_dir = apply_out_root(repro_opt.out_dir);
        return run_guarded([&] {
            write_resolved_config(repro_opt.out_dir, repro_opt.to_json(), config_path, jobs);
            envclass::pipeline::run_reproduce(repro_opt);
            std::cout << "wrote " << repro_opt.out_dir << "/manifest.json\n";
        });
    }
    std::cerr << "error: no subcommand selected\n";
    return 2;
}
