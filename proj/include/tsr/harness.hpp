#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tsr/curves.hpp"
#include "tsr/dataset.hpp"
#include "tsr/errors.hpp"
#include "tsr/nnet.hpp"
#include "tsr/reduction.hpp"

namespace tsr {

// Seed derivation for an experiment with base seed B:
//   repetition r trains with init_seed B+r and shuffle_seed B+10000+r
//   (identical for full-size and reduced runs, so curve differences come
//   from the data subset, not the seed policy);
//   random plans use B+r per repetition;
//   the distance plan clusters with B+20000;
//   loss profiles use the fixed set B+30000 .. B+30000+profile_seeds-1.
constexpr std::uint64_t kShuffleSeedOffset = 10000;
constexpr std::uint64_t kDistanceSeedOffset = 20000;
constexpr std::uint64_t kProfileSeedOffset = 30000;

enum class FitMode { average_then_fit, fit_then_average };

struct DatasetSource {
    std::string csv_path;  // empty -> synthetic blobs
    CsvSchema schema{.label_name = "label", .label_index = -1, .has_header = true};
    BlobsParams blobs{.n_per_class = 500, .num_classes = 10, .dim = 16, .spread = 1.0, .seed = 1};
    double val_fraction = 0.2;
};

struct ExperimentConfig {
    DatasetSource dataset;
    NetworkSpec network;  // empty layer list -> default net sized from the data
    TrainConfig training;
    std::vector<Strategy> strategies{Strategy::distance, Strategy::loss, Strategy::random};
    std::vector<double> fractions{0.005, 0.01, 0.05, 0.10, 0.30, 0.50, 0.70};
    std::size_t repetitions = 40;
    std::uint64_t base_seed = 1;
    std::size_t profile_seeds = 10;
    FitMode fit_mode = FitMode::average_then_fit;
    KMeansConfig kmeans;
    std::size_t workers = 1;
};

/// One training run inside an experiment. `strategy` is empty for the
/// full-size reference runs (fraction 1).
struct RunRecord {
    std::optional<Strategy> strategy;
    double fraction = 1.0;
    std::size_t repetition = 0;
    TrainConfig config_used;
    LossCurve curve;
    std::size_t train_size = 0;
};

struct PlanRecord {
    Strategy strategy;
    double fraction = 0.0;
    std::optional<std::size_t> repetition;  // set for per-repetition (random) plans
    ReductionPlan plan;
};

struct SimilarityCell {
    std::optional<double> train;
    std::optional<double> val;
};

/// Table-1-shaped score matrix: one row per fraction, one column group per
/// strategy, train and validation scores per cell. Empty optionals render
/// as "---" (fit failed).
struct SimilarityTable {
    std::vector<double> fractions;
    std::vector<Strategy> strategies;
    std::vector<std::vector<SimilarityCell>> cells;  // [fraction][strategy]
};

struct ExperimentResult {
    SimilarityTable table;
    std::vector<RunRecord> records;
    std::vector<PlanRecord> plans;
    FitOutcome reference_train_fit;
    FitOutcome reference_val_fit;
    LossCurve reference_mean;
};

using ProgressFn = std::function<void(const std::string&)>;

namespace detail {

inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& body) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline std::string fraction_label(double f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", f);
    return buf;
}

inline std::optional<std::vector<double>> mean_fit_params(const std::vector<FitOutcome>& fits) {
    if (fits.empty()) return std::nullopt;
    for (const FitOutcome& f : fits) {
        if (!f.ok()) return std::nullopt;
    }
    std::vector<double> mean(fits.front().params.size(), 0.0);
    for (const FitOutcome& f : fits) {
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f.params[i];
    }
    for (double& v : mean) v /= static_cast<double>(fits.size());
    return mean;
}

inline std::optional<double> param_mse(const std::optional<std::vector<double>>& a,
                                       const std::optional<std::vector<double>>& b) {
    if (!a || !b) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) {
        const double d = (*a)[i] - (*b)[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a->size());
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.fractions.empty()) throw QuotaInfeasible("experiment needs at least one fraction");
    double prev = 0.0;
    for (double f : cfg.fractions) {
        if (!(f > 0.0 && f < 1.0)) throw QuotaInfeasible("fractions must lie strictly in (0,1)");
        if (f <= prev) throw QuotaInfeasible("fractions must be strictly ascending");
        prev = f;
    }
    if (cfg.repetitions == 0) throw QuotaInfeasible("repetitions must be at least 1");
    if (cfg.strategies.empty()) throw QuotaInfeasible("experiment needs at least one strategy");
    for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
        for (std::size_t j = i + 1; j < cfg.strategies.size(); ++j) {
            if (cfg.strategies[i] == cfg.strategies[j]) {
                throw QuotaInfeasible("duplicate strategy in experiment config");
            }
        }
    }
    if (cfg.profile_seeds == 0) throw QuotaInfeasible("profile_seeds must be at least 1");
    if (!(cfg.dataset.val_fraction > 0.0 && cfg.dataset.val_fraction < 1.0)) {
        throw QuotaInfeasible("val_fraction must lie strictly in (0,1)");
    }
}

inline Dataset dataset_from_source(const DatasetSource& src) {
    if (!src.csv_path.empty()) return load_csv(src.csv_path, src.schema);
    return generate_blobs(src.blobs.n_per_class, src.blobs.num_classes, src.blobs.dim,
                          src.blobs.spread, src.blobs.seed);
}

/// Default network when the config leaves it unspecified: one hidden dense
/// layer of 64 units with ReLU, then a softmax head sized to the classes.
inline NetworkSpec default_network(const Dataset& ds) {
    NetworkSpec spec;
    spec.input_shape = Shape::flat(ds.dim());
    spec.layers = {Dense{ds.dim(), 64}, Act{ActKind::relu},
                   Dense{64, static_cast<std::size_t>(ds.num_classes)}, SoftmaxHead{}};
    return spec;
}

inline ExperimentConfig resolve_config(ExperimentConfig cfg, const Dataset& full) {
    if (cfg.network.layers.empty()) cfg.network = default_network(full);
    validate_spec(cfg.network);
    validate_config(cfg);
    return cfg;
}

/// The full protocol: reference runs on the complete training split, then one
/// cell per (strategy, fraction) trained with the identical TrainConfig and
/// seed schedule, averaged over repetitions, fitted, and scored against the
/// reference fits. Deterministic end to end for a fixed config.
inline ExperimentResult run_experiment_on(const ExperimentConfig& raw_cfg, const Dataset& full,
                                          const ProgressFn& progress = {}) {
    const ExperimentConfig cfg = resolve_config(raw_cfg, full);
    const SplitResult parts = split(full, cfg.dataset.val_fraction, cfg.base_seed);
    const Dataset& train_set = parts.train;
    const Dataset& val_set = parts.validation;
    const ClassDistribution train_dist = class_distribution(train_set);

    const auto say = [&](const std::string& msg) {
        if (progress) progress(msg);
    };

    // Loss profile is fraction-independent; compute it once if needed.
    LossProfile profile;
    const bool wants_loss = std::find(cfg.strategies.begin(), cfg.strategies.end(),
                                      Strategy::loss) != cfg.strategies.end();
    if (wants_loss) {
        say("profiling initial losses over " + std::to_string(cfg.profile_seeds) + " seeds");
        std::vector<std::uint64_t> seeds(cfg.profile_seeds);
        for (std::size_t j = 0; j < cfg.profile_seeds; ++j) {
            seeds[j] = cfg.base_seed + kProfileSeedOffset + j;
        }
        profile = initial_loss_profile(cfg.network, train_set, seeds, cfg.training.loss);
    }

    // Build every training job up front: reference runs first, then one run
    // per (strategy, fraction, repetition). Reduced datasets are shared
    // between jobs where the plan is deterministic.
    ExperimentResult result;
    std::vector<Dataset> pools;  // index 0 = full training split
    pools.push_back(train_set);

    struct Job {
        std::size_t pool;
        std::optional<Strategy> strategy;
        double fraction;
        std::size_t repetition;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
        jobs.push_back({0, std::nullopt, 1.0, r});
    }

    for (Strategy strategy : cfg.strategies) {
        for (double fraction : cfg.fractions) {
            const QuotaPlan quotas = compute_quotas(train_dist, fraction);
            if (strategy == Strategy::random) {
                for (std::size_t r = 0; r < cfg.repetitions; ++r) {
                    ReductionPlan plan = reduce_random(train_set, quotas, cfg.base_seed + r);
                    pools.push_back(apply(plan, train_set));
                    result.plans.push_back({strategy, fraction, r, std::move(plan)});
                    jobs.push_back({pools.size() - 1, strategy, fraction, r});
                }
            } else {
                say(std::string("planning ") + strategy_name(strategy) + " at fraction " +
                    detail::fraction_label(fraction));
                ReductionPlan plan =
                    strategy == Strategy::distance
                        ? reduce_distance(train_set, quotas, cfg.kmeans,
                                          cfg.base_seed + kDistanceSeedOffset)
                        : reduce_loss_based(profile, train_set, quotas);
                pools.push_back(apply(plan, train_set));
                result.plans.push_back({strategy, fraction, std::nullopt, std::move(plan)});
                for (std::size_t r = 0; r < cfg.repetitions; ++r) {
                    jobs.push_back({pools.size() - 1, strategy, fraction, r});
                }
            }
        }
    }

    say("training " + std::to_string(jobs.size()) + " runs");
    result.records.resize(jobs.size());
    std::atomic<std::size_t> done{0};
    detail::parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
        const Job& job = jobs[i];
        TrainConfig tc = cfg.training;
        tc.init_seed = cfg.base_seed + job.repetition;
        tc.shuffle_seed = cfg.base_seed + kShuffleSeedOffset + job.repetition;
        RunRecord rec;
        rec.strategy = job.strategy;
        rec.fraction = job.fraction;
        rec.repetition = job.repetition;
        rec.config_used = tc;
        rec.train_size = pools[job.pool].size();
        try {
            rec.curve = train(cfg.network, pools[job.pool], val_set, tc);
        } catch (const Error& e) {
            throw Error(std::string(e.what()) + " [" +
                        (job.strategy ? strategy_name(*job.strategy) : "full") + ", fraction " +
                        detail::fraction_label(job.fraction) + ", repetition " +
                        std::to_string(job.repetition) + "]");
        }
        result.records[i] = std::move(rec);
        const std::size_t d = done.fetch_add(1) + 1;
        if (d % 25 == 0) say("finished " + std::to_string(d) + "/" + std::to_string(jobs.size()));
    });

    // Aggregate per cell in (strategy, fraction) order; records are already
    // slot-addressed so worker scheduling cannot affect the outcome.
    const auto cell_curves = [&](std::optional<Strategy> strategy, double fraction) {
        std::vector<LossCurve> curves;
        for (const RunRecord& rec : result.records) {
            if (rec.strategy == strategy && rec.fraction == fraction) curves.push_back(rec.curve);
        }
        return curves;
    };

    const std::vector<LossCurve> ref_curves = cell_curves(std::nullopt, 1.0);
    result.reference_mean = mean_curve(ref_curves);
    result.reference_train_fit = fit_exponential(result.reference_mean.train_loss);
    result.reference_val_fit = fit_poly5(result.reference_mean.val_loss);

    std::vector<FitOutcome> ref_train_runs, ref_val_runs;
    for (const LossCurve& c : ref_curves) {
        ref_train_runs.push_back(fit_exponential(c.train_loss));
        ref_val_runs.push_back(fit_poly5(c.val_loss));
    }

    result.table.fractions = cfg.fractions;
    result.table.strategies = cfg.strategies;
    result.table.cells.assign(cfg.fractions.size(),
                              std::vector<SimilarityCell>(cfg.strategies.size()));
    for (std::size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
        for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
            const std::vector<LossCurve> curves = cell_curves(cfg.strategies[si], cfg.fractions[fi]);
            SimilarityCell& cell = result.table.cells[fi][si];
            if (cfg.fit_mode == FitMode::average_then_fit) {
                const LossCurve mean = mean_curve(curves);
                const FitOutcome train_fit = fit_exponential(mean.train_loss);
                const FitOutcome val_fit = fit_poly5(mean.val_loss);
                if (const auto s = similarity(result.reference_train_fit, train_fit)) {
                    cell.train = s->value;
                }
                if (const auto s = similarity(result.reference_val_fit, val_fit)) {
                    cell.val = s->value;
                }
            } else {
                std::vector<FitOutcome> train_fits, val_fits;
                for (const LossCurve& c : curves) {
                    train_fits.push_back(fit_exponential(c.train_loss));
                    val_fits.push_back(fit_poly5(c.val_loss));
                }
                cell.train = detail::param_mse(detail::mean_fit_params(ref_train_runs),
                                               detail::mean_fit_params(train_fits));
                cell.val = detail::param_mse(detail::mean_fit_params(ref_val_runs),
                                             detail::mean_fit_params(val_fits));
            }
        }
    }
    return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
    return run_experiment_on(cfg, dataset_from_source(cfg.dataset), progress);
}

enum class TableKind { train, val };

inline void write_table_csv(const SimilarityTable& table, TableKind kind, const std::string& path) {
    std::string out = "fraction";
    for (Strategy s : table.strategies) out += std::string(",") + strategy_name(s);
    out += "\n";
    for (std::size_t fi = 0; fi < table.fractions.size(); ++fi) {
        out += csv::format_double(table.fractions[fi]);
        for (std::size_t si = 0; si < table.strategies.size(); ++si) {
            const auto& v = kind == TableKind::train ? table.cells[fi][si].train
                                                     : table.cells[fi][si].val;
            out += ",";
            out += v ? csv::format_double(*v) : "---";
        }
        out += "\n";
    }
    csv::write_file(path, out);
}

inline SimilarityTable read_table_csv(const std::string& path, TableKind kind) {
    const std::vector<std::string> lines = csv::read_lines(path);
    if (lines.empty()) throw FormatError("empty table file: " + path);
    const auto header = csv::split_line(lines[0]);
    if (header.size() < 2 || header[0] != "fraction") throw FormatError("bad table header");

    SimilarityTable table;
    for (std::size_t c = 1; c < header.size(); ++c) {
        table.strategies.push_back(strategy_from_name(header[c]));
    }
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto cells = csv::split_line(lines[li]);
        if (cells.size() != header.size()) throw FormatError("ragged table row", li + 1);
        double fraction = 0.0;
        if (!csv::try_parse_double(cells[0], fraction)) throw FormatError("bad fraction", li + 1);
        table.fractions.push_back(fraction);
        std::vector<SimilarityCell> row(table.strategies.size());
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c] == "---") continue;
            double v = 0.0;
            if (!csv::try_parse_double(cells[c], v)) throw FormatError("bad score", li + 1);
            (kind == TableKind::train ? row[c - 1].train : row[c - 1].val) = v;
        }
        table.cells.push_back(std::move(row));
    }
    return table;
}

/// Markdown rendering of the whole matrix, train columns then validation
/// columns, one row per fraction.
inline void write_table_markdown(const SimilarityTable& table, const std::string& path) {
    std::string out = "| Size |";
    for (Strategy s : table.strategies) {
        out += std::string(" ") + strategy_name(s) + " (train) |";
    }
    for (Strategy s : table.strategies) {
        out += std::string(" ") + strategy_name(s) + " (val) |";
    }
    out += "\n|---|";
    for (std::size_t i = 0; i < 2 * table.strategies.size(); ++i) out += "---|";
    out += "\n";
    for (std::size_t fi = 0; fi < table.fractions.size(); ++fi) {
        out += "| " + detail::fraction_label(table.fractions[fi]) + " |";
        for (std::size_t si = 0; si < table.strategies.size(); ++si) {
            const auto& v = table.cells[fi][si].train;
            out += " " + (v ? csv::format_double(*v) : std::string("---")) + " |";
        }
        for (std::size_t si = 0; si < table.strategies.size(); ++si) {
            const auto& v = table.cells[fi][si].val;
            out += " " + (v ? csv::format_double(*v) : std::string("---")) + " |";
        }
        out += "\n";
    }
    csv::write_file(path, out);
}

/// One file per (strategy, fraction) cell plus `curves_full.csv` for the
/// reference: averaged curve first, then the per-repetition curves.
inline void emit_curves(const std::vector<RunRecord>& records, const std::string& out_dir) {
    if (records.empty()) throw LengthMismatch("no run records to emit");
    namespace fs = std::filesystem;

    struct Group {
        std::string name;
        std::vector<const RunRecord*> runs;
    };
    std::vector<Group> groups;
    for (const RunRecord& rec : records) {
        const std::string name =
            rec.strategy ? std::string("curves_") + strategy_name(*rec.strategy) + "_" +
                               detail::fraction_label(rec.fraction) + ".csv"
                         : std::string("curves_full.csv");
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Group& g) { return g.name == name; });
        if (it == groups.end()) {
            groups.push_back({name, {}});
            it = groups.end() - 1;
        }
        it->runs.push_back(&rec);
    }

    for (Group& group : groups) {
        std::sort(group.runs.begin(), group.runs.end(),
                  [](const RunRecord* a, const RunRecord* b) { return a->repetition < b->repetition; });
        std::vector<LossCurve> curves;
        for (const RunRecord* r : group.runs) curves.push_back(r->curve);
        const LossCurve mean = mean_curve(curves);

        std::string out = "epoch,train_mean,val_mean";
        for (const RunRecord* r : group.runs) {
            out += ",train_rep" + std::to_string(r->repetition) + ",val_rep" +
                   std::to_string(r->repetition);
        }
        out += "\n";
        for (std::size_t e = 0; e < mean.epochs(); ++e) {
            out += std::to_string(e + 1) + "," + csv::format_double(mean.train_loss[e]) + "," +
                   csv::format_double(mean.val_loss[e]);
            for (const RunRecord* r : group.runs) {
                out += "," + csv::format_double(r->curve.train_loss[e]) + "," +
                       csv::format_double(r->curve.val_loss[e]);
            }
            out += "\n";
        }
        csv::write_file((fs::path(out_dir) / group.name).string(), out);
    }
}

// ---- config file (JSON) ----

namespace detail {

inline nlohmann::json layer_to_json(const Layer& layer) {
    nlohmann::json j;
    if (const auto* d = std::get_if<Dense>(&layer)) {
        j["type"] = "dense";
        j["in"] = d->in;
        j["out"] = d->out;
    } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
        j["type"] = "conv2d";
        j["in_channels"] = c->in_channels;
        j["out_channels"] = c->out_channels;
        j["kernel"] = c->kernel;
        j["stride"] = c->stride;
    } else if (const auto* p = std::get_if<MaxPool2D>(&layer)) {
        j["type"] = "maxpool2d";
        j["window"] = p->window;
        j["stride"] = pool_stride(*p);
    } else if (const auto* a = std::get_if<Act>(&layer)) {
        j["type"] = a->kind == ActKind::relu ? "relu"
                    : a->kind == ActKind::sigmoid ? "sigmoid"
                                                  : "tanh";
    } else {
        j["type"] = "softmax";
    }
    return j;
}

inline Layer layer_from_json(const nlohmann::json& j) {
    const std::string type = j.value("type", "");
    if (type == "dense") return Dense{j.value("in", std::size_t{0}), j.value("out", std::size_t{0})};
    if (type == "conv2d") {
        return Conv2D{j.value("in_channels", std::size_t{0}), j.value("out_channels", std::size_t{0}),
                      j.value("kernel", std::size_t{0}), j.value("stride", std::size_t{1})};
    }
    if (type == "maxpool2d") {
        return MaxPool2D{j.value("window", std::size_t{0}), j.value("stride", std::size_t{0})};
    }
    if (type == "relu") return Act{ActKind::relu};
    if (type == "sigmoid") return Act{ActKind::sigmoid};
    if (type == "tanh") return Act{ActKind::tanh};
    if (type == "softmax") return SoftmaxHead{};
    throw FormatError("unknown layer type '" + type + "'");
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["dataset"]["csv_path"] = cfg.dataset.csv_path;
    j["dataset"]["label_column"] = cfg.dataset.schema.label_name;
    j["dataset"]["label_index"] = cfg.dataset.schema.label_index;
    j["dataset"]["has_header"] = cfg.dataset.schema.has_header;
    j["dataset"]["discretize_bins"] = cfg.dataset.schema.discretize_bins;
    j["dataset"]["blobs"] = {{"n_per_class", cfg.dataset.blobs.n_per_class},
                             {"num_classes", cfg.dataset.blobs.num_classes},
                             {"dim", cfg.dataset.blobs.dim},
                             {"spread", cfg.dataset.blobs.spread},
                             {"seed", cfg.dataset.blobs.seed}};
    j["dataset"]["val_fraction"] = cfg.dataset.val_fraction;

    j["network"]["input_shape"] = cfg.network.input_shape.dims;
    j["network"]["layers"] = nlohmann::json::array();
    for (const Layer& layer : cfg.network.layers) {
        j["network"]["layers"].push_back(detail::layer_to_json(layer));
    }

    j["training"]["epochs"] = cfg.training.epochs;
    j["training"]["batch_size"] = cfg.training.batch_size;
    j["training"]["learning_rate"] = cfg.training.learning_rate;
    j["training"]["loss"] = cfg.training.loss == LossKind::cross_entropy ? "cross_entropy" : "mse";

    j["experiment"]["strategies"] = nlohmann::json::array();
    for (Strategy s : cfg.strategies) j["experiment"]["strategies"].push_back(strategy_name(s));
    j["experiment"]["fractions"] = cfg.fractions;
    j["experiment"]["repetitions"] = cfg.repetitions;
    j["experiment"]["base_seed"] = cfg.base_seed;
    j["experiment"]["profile_seeds"] = cfg.profile_seeds;
    j["experiment"]["fit_mode"] =
        cfg.fit_mode == FitMode::average_then_fit ? "average_then_fit" : "fit_then_average";
    j["experiment"]["kmeans"] = {{"restarts", cfg.kmeans.restarts},
                                 {"max_iters", cfg.kmeans.max_iters},
                                 {"tolerance", cfg.kmeans.tolerance}};
    j["experiment"]["workers"] = cfg.workers;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.csv_path = d.value("csv_path", cfg.dataset.csv_path);
        cfg.dataset.schema.label_name = d.value("label_column", cfg.dataset.schema.label_name);
        cfg.dataset.schema.label_index = d.value("label_index", cfg.dataset.schema.label_index);
        cfg.dataset.schema.has_header = d.value("has_header", cfg.dataset.schema.has_header);
        cfg.dataset.schema.discretize_bins =
            d.value("discretize_bins", cfg.dataset.schema.discretize_bins);
        if (d.contains("blobs")) {
            const auto& b = d.at("blobs");
            cfg.dataset.blobs.n_per_class = b.value("n_per_class", cfg.dataset.blobs.n_per_class);
            cfg.dataset.blobs.num_classes = b.value("num_classes", cfg.dataset.blobs.num_classes);
            cfg.dataset.blobs.dim = b.value("dim", cfg.dataset.blobs.dim);
            cfg.dataset.blobs.spread = b.value("spread", cfg.dataset.blobs.spread);
            cfg.dataset.blobs.seed = b.value("seed", cfg.dataset.blobs.seed);
        }
        cfg.dataset.val_fraction = d.value("val_fraction", cfg.dataset.val_fraction);
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        if (n.contains("input_shape")) {
            cfg.network.input_shape.dims = n.at("input_shape").get<std::vector<std::size_t>>();
        }
        if (n.contains("layers") && !n.at("layers").empty()) {
            for (const auto& lj : n.at("layers")) {
                cfg.network.layers.push_back(detail::layer_from_json(lj));
            }
            if (cfg.network.input_shape.dims.empty()) {
                throw FormatError("network.layers given without network.input_shape");
            }
        }
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        cfg.training.epochs = t.value("epochs", cfg.training.epochs);
        cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
        cfg.training.learning_rate = t.value("learning_rate", cfg.training.learning_rate);
        const std::string loss = t.value("loss", std::string("cross_entropy"));
        if (loss == "cross_entropy") {
            cfg.training.loss = LossKind::cross_entropy;
        } else if (loss == "mse") {
            cfg.training.loss = LossKind::mse;
        } else {
            throw FormatError("unknown loss '" + loss + "'");
        }
    }
    if (j.contains("experiment")) {
        const auto& e = j.at("experiment");
        if (e.contains("strategies")) {
            cfg.strategies.clear();
            for (const auto& s : e.at("strategies")) {
                cfg.strategies.push_back(strategy_from_name(s.get<std::string>()));
            }
        }
        if (e.contains("fractions")) cfg.fractions = e.at("fractions").get<std::vector<double>>();
        cfg.repetitions = e.value("repetitions", cfg.repetitions);
        cfg.base_seed = e.value("base_seed", cfg.base_seed);
        cfg.profile_seeds = e.value("profile_seeds", cfg.profile_seeds);
        const std::string mode = e.value("fit_mode", std::string("average_then_fit"));
        if (mode == "average_then_fit") {
            cfg.fit_mode = FitMode::average_then_fit;
        } else if (mode == "fit_then_average") {
            cfg.fit_mode = FitMode::fit_then_average;
        } else {
            throw FormatError("unknown fit_mode '" + mode + "'");
        }
        if (e.contains("kmeans")) {
            const auto& k = e.at("kmeans");
            cfg.kmeans.restarts = k.value("restarts", cfg.kmeans.restarts);
            cfg.kmeans.max_iters = k.value("max_iters", cfg.kmeans.max_iters);
            cfg.kmeans.tolerance = k.value("tolerance", cfg.kmeans.tolerance);
        }
        cfg.workers = e.value("workers", cfg.workers);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

/// Runs the experiment and writes the output directory layout: the resolved
/// config echo, both score tables, the markdown matrix, per-cell curve files
/// and the reduction plans.
inline ExperimentResult run_to_directory(const ExperimentConfig& cfg, const std::string& out_dir,
                                         const ProgressFn& progress = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "plans");

    const Dataset full = dataset_from_source(cfg.dataset);
    const ExperimentConfig resolved = resolve_config(cfg, full);
    csv::write_file((fs::path(out_dir) / "config.json").string(),
                    config_to_json(resolved).dump(2) + "\n");

    ExperimentResult result = run_experiment_on(resolved, full, progress);

    write_table_csv(result.table, TableKind::train, (fs::path(out_dir) / "table_train.csv").string());
    write_table_csv(result.table, TableKind::val, (fs::path(out_dir) / "table_val.csv").string());
    write_table_markdown(result.table, (fs::path(out_dir) / "table.md").string());
    emit_curves(result.records, out_dir);

    const SplitResult parts = split(full, resolved.dataset.val_fraction, resolved.base_seed);
    for (const PlanRecord& pr : result.plans) {
        std::string name = std::string("plan_") + strategy_name(pr.strategy) + "_" +
                           detail::fraction_label(pr.fraction);
        if (pr.repetition) name += "_rep" + std::to_string(*pr.repetition);
        write_plan_csv(pr.plan, parts.train, (fs::path(out_dir) / "plans" / (name + ".csv")).string());
    }
    return result;
}

}  // namespace tsr
