// Command-line front end for the training-set-reduction toolkit.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 runtime
// numerical error (training divergence).

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "tsr/tsr.hpp"

namespace {

struct DataFlags {
    std::string path;
    std::string label_column = "label";
    int label_index = -1;
    bool header = true;
    int discretize_bins = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", path, "input dataset CSV")->required();
        cmd->add_option("--label", label_column, "label column name (with --header)");
        cmd->add_option("--label-index", label_index, "label column position (0-based)");
        cmd->add_flag("--header,!--no-header", header, "first row is a header (default: yes)");
        cmd->add_option("--discretize-bins", discretize_bins,
                        "treat labels as continuous and bin them");
    }

    tsr::Dataset load() const {
        tsr::CsvSchema schema;
        schema.label_name = header ? label_column : std::string{};
        schema.label_index = label_index;
        schema.has_header = header;
        schema.discretize_bins = discretize_bins;
        return tsr::load_csv(path, schema);
    }
};

tsr::NetworkSpec network_for(const std::string& config_path, const tsr::Dataset& ds) {
    if (!config_path.empty()) {
        const tsr::ExperimentConfig cfg = tsr::load_config(config_path);
        if (!cfg.network.layers.empty()) return cfg.network;
    }
    return tsr::default_network(ds);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"training-set reduction toolkit"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* generate = app.add_subcommand("generate", "write a synthetic blob dataset as CSV");
    std::size_t gen_n = 500, gen_dim = 16;
    int gen_classes = 10;
    double gen_spread = 1.0;
    std::uint64_t gen_seed = 1;
    std::string gen_out = "dataset.csv";
    generate->add_option("--n-per-class", gen_n, "samples per class");
    generate->add_option("--classes", gen_classes, "number of classes");
    generate->add_option("--dim", gen_dim, "feature dimension");
    generate->add_option("--spread", gen_spread, "gaussian spread");
    generate->add_option("--seed", gen_seed, "generator seed");
    generate->add_option("--out", gen_out, "output CSV path");

    // ---- reduce ----
    auto* reduce = app.add_subcommand("reduce", "select a reduced subset of a dataset");
    DataFlags reduce_data;
    reduce_data.attach(reduce);
    std::string reduce_strategy = "random";
    double reduce_fraction = 0.1;
    std::uint64_t reduce_seed = 1;
    std::string reduce_out_plan, reduce_out_data, reduce_config;
    std::size_t reduce_profile_seeds = 10, reduce_restarts = 10;
    bool reduce_low_loss = false;
    reduce->add_option("--strategy", reduce_strategy, "random | distance | loss")
        ->check(CLI::IsMember({"random", "distance", "loss"}));
    reduce->add_option("--fraction", reduce_fraction, "kept fraction in (0,1)")->required();
    reduce->add_option("--seed", reduce_seed, "strategy seed");
    reduce->add_option("--out-plan", reduce_out_plan, "plan CSV path");
    reduce->add_option("--out-data", reduce_out_data, "reduced dataset CSV path");
    reduce->add_option("--config", reduce_config, "config JSON supplying the network (loss strategy)");
    reduce->add_option("--profile-seeds", reduce_profile_seeds, "seeds for the loss profile");
    reduce->add_option("--restarts", reduce_restarts, "k-means restarts (distance strategy)");
    reduce->add_flag("--low-loss", reduce_low_loss, "select lowest- instead of highest-loss samples");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a network and record the loss curve");
    DataFlags train_data;
    train_data.attach(train_cmd);
    double train_val_fraction = 0.2;
    std::uint64_t train_seed = 1;
    std::size_t train_epochs = 50, train_batch = 32;
    double train_lr = 0.05;
    std::string train_loss = "cross_entropy", train_out = "curve.csv", train_config;
    train_cmd->add_option("--val-fraction", train_val_fraction, "validation split fraction");
    train_cmd->add_option("--seed", train_seed, "init/shuffle/split seed");
    train_cmd->add_option("--epochs", train_epochs, "training epochs");
    train_cmd->add_option("--batch", train_batch, "mini-batch size");
    train_cmd->add_option("--lr", train_lr, "learning rate");
    train_cmd->add_option("--loss", train_loss, "cross_entropy | mse")
        ->check(CLI::IsMember({"cross_entropy", "mse"}));
    train_cmd->add_option("--out", train_out, "curve CSV path");
    train_cmd->add_option("--config", train_config, "config JSON supplying the network");

    // ---- fit ----
    auto* fit_cmd = app.add_subcommand("fit", "fit a curve model to a recorded loss curve");
    std::string fit_curve, fit_model = "exp", fit_column, fit_out = "fit.csv";
    fit_cmd->add_option("--curve", fit_curve, "curve CSV from `train`")->required();
    fit_cmd->add_option("--model", fit_model, "exp | poly5")
        ->check(CLI::IsMember({"exp", "poly5"}));
    fit_cmd->add_option("--column", fit_column, "train | val (default: train for exp, val for poly5)")
        ->check(CLI::IsMember({"train", "val"}));
    fit_cmd->add_option("--out", fit_out, "fit CSV path");

    // ---- compare ----
    auto* compare = app.add_subcommand("compare", "parameter-MSE similarity of two fits");
    std::string compare_ref, compare_cand;
    compare->add_option("--ref", compare_ref, "reference fit CSV")->required();
    compare->add_option("--cand", compare_cand, "candidate fit CSV")->required();

    // ---- experiment ----
    auto* experiment = app.add_subcommand("experiment", "run the full strategy-by-size matrix");
    std::string exp_config, exp_out_dir = "experiment_out";
    std::uint64_t exp_seed = 0;
    bool exp_seed_set = false;
    std::size_t exp_workers = 0;
    bool exp_quiet = false;
    experiment->add_option("--config", exp_config, "experiment config JSON");
    experiment->add_option("--out-dir", exp_out_dir, "output directory");
    experiment->add_option("--seed", exp_seed, "override base_seed")
        ->trigger_on_parse()
        ->each([&](const std::string&) { exp_seed_set = true; });
    experiment->add_option("--workers", exp_workers, "parallel training workers");
    experiment->add_flag("--quiet", exp_quiet, "suppress progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*generate) {
            const tsr::Dataset ds =
                tsr::generate_blobs(gen_n, gen_classes, gen_dim, gen_spread, gen_seed);
            tsr::save_csv(ds, gen_out);
            std::cout << "wrote " << ds.size() << " samples (" << gen_classes << " classes) to "
                      << gen_out << "\n";
        } else if (*reduce) {
            const tsr::Dataset ds = reduce_data.load();
            const tsr::QuotaPlan quotas =
                tsr::compute_quotas(tsr::class_distribution(ds), reduce_fraction);
            tsr::ReductionPlan plan;
            if (reduce_strategy == "random") {
                plan = tsr::reduce_random(ds, quotas, reduce_seed);
            } else if (reduce_strategy == "distance") {
                tsr::KMeansConfig kcfg;
                kcfg.restarts = reduce_restarts;
                plan = tsr::reduce_distance(ds, quotas, kcfg, reduce_seed);
            } else {
                const tsr::NetworkSpec spec = network_for(reduce_config, ds);
                std::vector<std::uint64_t> seeds(reduce_profile_seeds);
                for (std::size_t j = 0; j < seeds.size(); ++j) {
                    seeds[j] = reduce_seed + tsr::kProfileSeedOffset + j;
                }
                const tsr::LossProfile profile =
                    tsr::initial_loss_profile(spec, ds, seeds, tsr::LossKind::cross_entropy);
                plan = tsr::reduce_loss_based(profile, ds, quotas,
                                              reduce_low_loss ? tsr::LossSelect::lowest
                                                              : tsr::LossSelect::highest);
            }
            if (!reduce_out_plan.empty()) tsr::write_plan_csv(plan, ds, reduce_out_plan);
            if (!reduce_out_data.empty()) tsr::save_csv(tsr::apply(plan, ds), reduce_out_data);
            std::cout << "selected " << plan.selected.size() << "/" << ds.size() << " samples ("
                      << reduce_strategy << ")\n";
        } else if (*train_cmd) {
            const tsr::Dataset ds = train_data.load();
            const tsr::SplitResult parts = tsr::split(ds, train_val_fraction, train_seed);
            const tsr::NetworkSpec spec = network_for(train_config, ds);
            tsr::TrainConfig cfg;
            cfg.epochs = train_epochs;
            cfg.batch_size = train_batch;
            cfg.learning_rate = train_lr;
            cfg.loss = train_loss == "mse" ? tsr::LossKind::mse : tsr::LossKind::cross_entropy;
            cfg.init_seed = train_seed;
            cfg.shuffle_seed = train_seed + tsr::kShuffleSeedOffset;
            const tsr::LossCurve curve = tsr::train(spec, parts.train, parts.validation, cfg);
            tsr::write_curve_csv(curve, train_out);
            std::cout << "trained " << curve.epochs() << " epochs; final train loss "
                      << (curve.train_loss.empty() ? 0.0 : curve.train_loss.back()) << "; curve in "
                      << train_out << "\n";
        } else if (*fit_cmd) {
            const tsr::LossCurve curve = tsr::read_curve_csv(fit_curve);
            if (fit_column.empty()) fit_column = fit_model == "exp" ? "train" : "val";
            const std::vector<double>& series =
                fit_column == "train" ? curve.train_loss : curve.val_loss;
            const tsr::FitOutcome outcome = fit_model == "exp"
                                                ? tsr::fit_exponential(series)
                                                : tsr::fit_poly5(series);
            tsr::write_fit_csv(outcome, fit_out);
            std::cout << fit_model << " fit on " << fit_column << " column: "
                      << tsr::fit_status_name(outcome.status) << "\n";
        } else if (*compare) {
            const tsr::FitOutcome ref = tsr::read_fit_csv(compare_ref);
            const tsr::FitOutcome cand = tsr::read_fit_csv(compare_cand);
            const auto score = tsr::similarity(ref, cand);
            std::cout << (score ? tsr::csv::format_double(score->value) : std::string("---"))
                      << "\n";
        } else if (*experiment) {
            tsr::ExperimentConfig cfg =
                exp_config.empty() ? tsr::ExperimentConfig{} : tsr::load_config(exp_config);
            if (exp_seed_set) cfg.base_seed = exp_seed;
            if (exp_workers > 0) cfg.workers = exp_workers;
            const tsr::ProgressFn progress =
                exp_quiet ? tsr::ProgressFn{}
                          : [](const std::string& msg) { std::cerr << "[tsr] " << msg << "\n"; };
            tsr::run_to_directory(cfg, exp_out_dir, progress);
            std::cout << "experiment complete; results in " << exp_out_dir << "\n";
        }
    } catch (const tsr::NonFiniteLoss& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const tsr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
