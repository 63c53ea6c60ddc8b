#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsr/dataset.hpp"
#include "tsr/errors.hpp"
#include "tsr/matrix.hpp"
#include "tsr/nnet.hpp"
#include "tsr/rng.hpp"

namespace tsr {

enum class Strategy { random, distance, loss };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::distance: return "distance";
        case Strategy::loss: return "loss";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
    if (name == "random") return Strategy::random;
    if (name == "distance") return Strategy::distance;
    if (name == "loss") return Strategy::loss;
    throw FormatError("unknown strategy '" + name + "'");
}

/// The selected sample indices (sorted, referring to the source dataset) for
/// one reduction, together with the quotas they satisfy.
struct ReductionPlan {
    std::vector<std::size_t> selected;
    Strategy strategy = Strategy::random;
    QuotaPlan quotas;
};

struct KMeansConfig {
    std::size_t restarts = 10;
    std::size_t max_iters = 300;
    double tolerance = 1e-6;  // relative inertia change
};

/// Mean of per-seed min-max-normalized initial losses, per sample.
struct LossProfile {
    std::vector<double> mean_normalized_loss;
    std::vector<std::uint64_t> seeds_used;
};

struct KMeansResult {
    Matrix centroids;                   // k x dim
    std::vector<std::size_t> assignment;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

namespace detail {

struct LloydRun {
    Matrix centroids;
    std::vector<std::size_t> assignment;
    double inertia = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

inline void assign_points(const Matrix& points, const Matrix& centroids,
                          std::vector<std::size_t>& assignment) {
    for (std::size_t i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        assignment[i] = best_c;
    }
}

// Empty clusters steal the point currently farthest from its own centroid.
// Donor clusters must keep at least one member; ties go to the lowest index.
inline void repair_empty_clusters(const Matrix& points, const Matrix& centroids,
                                  std::vector<std::size_t>& assignment, std::size_t k) {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignment) sizes[a]++;
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] > 0) continue;
        double worst = -1.0;
        std::size_t victim = points.rows();
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (sizes[assignment[i]] <= 1) continue;
            const double d = squared_distance(points.row(i), centroids.row(assignment[i]));
            if (d > worst) {
                worst = d;
                victim = i;
            }
        }
        sizes[assignment[victim]]--;
        assignment[victim] = c;
        sizes[c] = 1;
    }
}

inline LloydRun lloyd(const Matrix& points, std::size_t k, const KMeansConfig& cfg, Rng& rng) {
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();
    LloydRun run;
    run.centroids = Matrix(k, dim);
    run.assignment.assign(n, 0);

    // k-means++ seeding: first center uniform, the rest D^2-weighted. When
    // all remaining squared distances are zero (duplicate points), fall back
    // to the lowest unchosen index.
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(n, false);
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    chosen[first] = true;
    std::copy(points.row(first).begin(), points.row(first).end(), run.centroids.row(0).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), run.centroids.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick;
        if (total > 0.0) {
            pick = rng.weighted(d2);
        } else {
            pick = 0;
            while (chosen[pick]) pick++;
        }
        chosen[pick] = true;
        std::copy(points.row(pick).begin(), points.row(pick).end(), run.centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points.row(i), run.centroids.row(c)));
        }
    }

    double prev_inertia = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        assign_points(points, run.centroids, run.assignment);
        repair_empty_clusters(points, run.centroids, run.assignment, k);

        run.centroids = Matrix(k, dim, 0.0);
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sizes[run.assignment[i]]++;
            auto crow = run.centroids.row(run.assignment[i]);
            const auto prow = points.row(i);
            for (std::size_t d = 0; d < dim; ++d) crow[d] += prow[d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            auto crow = run.centroids.row(c);
            for (std::size_t d = 0; d < dim; ++d) crow[d] /= static_cast<double>(sizes[c]);
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            inertia += squared_distance(points.row(i), run.centroids.row(run.assignment[i]));
        }
        run.trace.push_back(inertia);
        run.inertia = inertia;

        if (prev_inertia < std::numeric_limits<double>::infinity()) {
            const double rel =
                (prev_inertia - inertia) / std::max(prev_inertia, std::numeric_limits<double>::min());
            if (rel < cfg.tolerance) break;
        }
        if (inertia == 0.0) break;
        prev_inertia = inertia;
    }
    return run;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs by final
/// inertia. Restart r draws from a fresh stream seeded with seed + r, so a
/// multi-restart run reproduces the best of the matching single-restart runs.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, const KMeansConfig& cfg,
                           std::uint64_t seed) {
    if (k == 0) throw TooFewPoints("k must be positive");
    if (k > points.rows()) {
        throw TooFewPoints("k=" + std::to_string(k) + " exceeds " + std::to_string(points.rows()) +
                           " points");
    }
    if (cfg.restarts == 0) throw TooFewPoints("kmeans needs at least one restart");

    detail::LloydRun best;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        Rng rng(seed + r);
        detail::LloydRun run = detail::lloyd(points, k, cfg, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return KMeansResult{std::move(best.centroids), std::move(best.assignment), best.inertia,
                        std::move(best.trace)};
}

inline void validate_plan(const ReductionPlan& plan, const Dataset& ds) {
    if (plan.selected.size() != plan.quotas.total) {
        throw QuotaInfeasible("plan size does not match quota total");
    }
    if (plan.selected.size() >= ds.size()) {
        throw QuotaInfeasible("plan must select a strict subset");
    }
    std::vector<std::size_t> per_class(plan.quotas.per_class.size(), 0);
    std::size_t prev = 0;
    bool first = true;
    for (std::size_t idx : plan.selected) {
        if (idx >= ds.size()) throw IndexError("plan references missing index " + std::to_string(idx));
        if (!first && idx <= prev) throw IndexError("plan indices must be sorted and unique");
        prev = idx;
        first = false;
        per_class[static_cast<std::size_t>(ds.samples[idx].label)]++;
    }
    if (per_class != plan.quotas.per_class) {
        throw QuotaInfeasible("selected per-class counts do not match quotas");
    }
}

/// Uniform sampling without replacement within each class.
inline ReductionPlan reduce_random(const Dataset& ds, const QuotaPlan& quotas, std::uint64_t seed) {
    validate_quotas(quotas, class_distribution(ds));
    Rng rng(seed);
    ReductionPlan plan;
    plan.strategy = Strategy::random;
    plan.quotas = quotas;
    auto by_class = detail::indices_by_class(ds);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        rng.shuffle(by_class[c]);
        plan.selected.insert(plan.selected.end(), by_class[c].begin(),
                             by_class[c].begin() + static_cast<std::ptrdiff_t>(quotas.per_class[c]));
    }
    std::sort(plan.selected.begin(), plan.selected.end());
    return plan;
}

namespace detail {

// Maps each centroid (in cluster-id order) to the nearest still-unselected
// point; ties and already-taken points fall through to the next nearest by
// ascending point index.
inline std::vector<std::size_t> nearest_unique_points(const Matrix& points,
                                                      const Matrix& centroids) {
    std::vector<bool> taken(points.rows(), false);
    std::vector<std::size_t> picks;
    picks.reserve(centroids.rows());
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = points.rows();
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (taken[i]) continue;
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        taken[best_i] = true;
        picks.push_back(best_i);
    }
    return picks;
}

}  // namespace detail

/// Per class: k-means with k equal to the class quota, then each centroid is
/// replaced by its nearest real sample, so the plan only contains original
/// samples.
inline ReductionPlan reduce_distance(const Dataset& ds, const QuotaPlan& quotas,
                                     const KMeansConfig& cfg, std::uint64_t seed) {
    validate_quotas(quotas, class_distribution(ds));
    ReductionPlan plan;
    plan.strategy = Strategy::distance;
    plan.quotas = quotas;
    const auto by_class = detail::indices_by_class(ds);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const std::vector<std::size_t>& members = by_class[c];
        const std::size_t quota = quotas.per_class[c];
        if (quota == 0) continue;
        if (quota == members.size()) {
            plan.selected.insert(plan.selected.end(), members.begin(), members.end());
            continue;
        }
        Matrix points(members.size(), ds.dim());
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto& f = ds.samples[members[i]].features;
            std::copy(f.begin(), f.end(), points.row(i).begin());
        }
        const KMeansResult clusters = kmeans(points, quota, cfg, mix_seed(seed, c));
        for (std::size_t pick : detail::nearest_unique_points(points, clusters.centroids)) {
            plan.selected.push_back(members[pick]);
        }
    }
    std::sort(plan.selected.begin(), plan.selected.end());
    return plan;
}

/// Initial loss of every sample under freshly initialized, untrained models,
/// min-max normalized per seed and averaged. Per-sample sums run in value
/// order, so the profile does not depend on the order of the seed list.
inline LossProfile initial_loss_profile(const NetworkSpec& spec, const Dataset& ds,
                                        const std::vector<std::uint64_t>& seeds, LossKind loss) {
    if (seeds.empty()) throw TooFewPoints("loss profile needs at least one seed");
    std::vector<std::vector<double>> per_seed;
    per_seed.reserve(seeds.size());
    for (std::uint64_t seed : seeds) {
        const Parameters params = init(spec, seed);
        std::vector<double> v = per_sample_losses(params, spec, ds, loss);
        const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
        const double mn = *mn_it, mx = *mx_it;
        if (mx > mn) {
            for (double& x : v) x = (x - mn) / (mx - mn);
        } else {
            std::fill(v.begin(), v.end(), 0.0);
        }
        per_seed.push_back(std::move(v));
    }

    LossProfile profile;
    profile.seeds_used = seeds;
    profile.mean_normalized_loss.resize(ds.size());
    std::vector<double> vals(seeds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t s = 0; s < per_seed.size(); ++s) vals[s] = per_seed[s][i];
        std::sort(vals.begin(), vals.end());
        profile.mean_normalized_loss[i] =
            std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(seeds.size());
    }
    return profile;
}

enum class LossSelect { highest, lowest };

/// Per class, the quota-many samples with the highest (default) mean
/// normalized initial loss; ties by lowest index.
inline ReductionPlan reduce_loss_based(const LossProfile& profile, const Dataset& ds,
                                       const QuotaPlan& quotas,
                                       LossSelect select = LossSelect::highest) {
    if (profile.mean_normalized_loss.size() != ds.size()) {
        throw LengthMismatch("loss profile length does not match dataset size");
    }
    validate_quotas(quotas, class_distribution(ds));
    ReductionPlan plan;
    plan.strategy = Strategy::loss;
    plan.quotas = quotas;
    auto by_class = detail::indices_by_class(ds);
    const auto& score = profile.mean_normalized_loss;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            if (score[a] != score[b]) {
                return select == LossSelect::highest ? score[a] > score[b] : score[a] < score[b];
            }
            return a < b;
        });
        plan.selected.insert(plan.selected.end(), members.begin(),
                             members.begin() + static_cast<std::ptrdiff_t>(quotas.per_class[c]));
    }
    std::sort(plan.selected.begin(), plan.selected.end());
    return plan;
}

/// Materializes the reduced dataset; origins of the source samples carry
/// over so the reduced set stays traceable.
inline Dataset apply(const ReductionPlan& plan, const Dataset& ds) {
    validate_plan(plan, ds);
    return detail::subset_by_indices(ds, plan.selected);
}

/// Plan export for audit/replay: `original_index,label,strategy`.
inline void write_plan_csv(const ReductionPlan& plan, const Dataset& ds, const std::string& path) {
    std::string out = "original_index,label,strategy\n";
    for (std::size_t idx : plan.selected) {
        out += std::to_string(ds.samples[idx].origin) + "," +
               std::to_string(ds.samples[idx].label) + "," + strategy_name(plan.strategy) + "\n";
    }
    csv::write_file(path, out);
}

/// Re-reads a plan against the dataset it was produced from, resolving origin
/// ids back to dataset indices and rebuilding the quota plan from the labels.
inline ReductionPlan read_plan_csv(const std::string& path, const Dataset& ds) {
    const std::vector<std::string> lines = csv::read_lines(path);
    if (lines.empty()) throw FormatError("empty plan file: " + path);

    std::unordered_map<std::size_t, std::size_t> origin_to_index;
    origin_to_index.reserve(ds.size());
    for (const Sample& s : ds.samples) origin_to_index[s.origin] = s.index;

    ReductionPlan plan;
    plan.quotas.per_class.assign(static_cast<std::size_t>(std::max(ds.num_classes, 0)), 0);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto cells = csv::split_line(lines[li]);
        if (cells.size() != 3) throw FormatError("plan row needs 3 cells", li + 1);
        double origin = 0.0;
        if (!csv::try_parse_double(cells[0], origin)) throw FormatError("bad original_index", li + 1);
        const auto it = origin_to_index.find(static_cast<std::size_t>(origin));
        if (it == origin_to_index.end()) {
            throw IndexError("plan references origin " + cells[0] + " absent from dataset");
        }
        plan.selected.push_back(it->second);
        plan.strategy = strategy_from_name(cells[2]);
        plan.quotas.per_class[static_cast<std::size_t>(ds.samples[it->second].label)]++;
        plan.quotas.total++;
    }
    std::sort(plan.selected.begin(), plan.selected.end());
    validate_plan(plan, ds);
    return plan;
}

}  // namespace tsr
