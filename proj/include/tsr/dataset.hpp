#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tsr/csv.hpp"
#include "tsr/errors.hpp"
#include "tsr/matrix.hpp"
#include "tsr/rng.hpp"

namespace tsr {

/// One labelled instance. `index` is the dense position inside the owning
/// dataset; `origin` is the id the sample had in the dataset it was first
/// loaded or generated into, preserved across splits and reductions.
struct Sample {
    std::size_t index = 0;
    std::size_t origin = 0;
    std::vector<double> features;
    int label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    Shape feature_shape;

    std::size_t size() const { return samples.size(); }
    std::size_t dim() const { return feature_shape.size(); }
    bool empty() const { return samples.empty(); }
};

/// Per-class sample counts, indexed by class id.
struct ClassDistribution {
    std::vector<std::size_t> counts;

    std::size_t total() const {
        return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    }
    std::size_t nonempty_classes() const {
        std::size_t n = 0;
        for (std::size_t c : counts) n += (c > 0);
        return n;
    }
};

/// Target per-class sample counts for a reduced set.
struct QuotaPlan {
    std::vector<std::size_t> per_class;
    std::size_t total = 0;
};

inline ClassDistribution class_distribution(const Dataset& ds) {
    ClassDistribution dist;
    dist.counts.assign(static_cast<std::size_t>(std::max(ds.num_classes, 0)), 0);
    for (const Sample& s : ds.samples) {
        dist.counts[static_cast<std::size_t>(s.label)]++;
    }
    return dist;
}

inline std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

// Largest-remainder (Hamilton) apportionment of fraction*N seats over the
// class counts, with one seat guaranteed to every nonempty class. Seats in
// excess of a class's count spill over to the next class in remainder order.
inline QuotaPlan compute_quotas(const ClassDistribution& dist, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw QuotaInfeasible("fraction must lie strictly in (0,1)");
    }
    const std::size_t n = dist.total();
    if (n == 0) throw QuotaInfeasible("cannot reduce an empty distribution");

    const std::size_t total = round_half_up(fraction * static_cast<double>(n));
    const std::size_t nonempty = dist.nonempty_classes();
    if (total < nonempty) {
        throw QuotaInfeasible("target size " + std::to_string(total) + " cannot keep all " +
                              std::to_string(nonempty) + " nonempty classes");
    }
    if (total >= n) {
        throw QuotaInfeasible("rounded target size equals the full set; no strict subset");
    }

    const std::size_t k = dist.counts.size();
    QuotaPlan plan;
    plan.per_class.assign(k, 0);
    plan.total = total;

    // Minimum one per nonempty class, then Hamilton on the remaining seats
    // with per-class quantities fraction*count - 1.
    std::vector<double> remainder(k, 0.0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (dist.counts[c] == 0) continue;
        const double q = std::max(fraction * static_cast<double>(dist.counts[c]) - 1.0, 0.0);
        const std::size_t base = static_cast<std::size_t>(std::floor(q));
        plan.per_class[c] = 1 + base;
        remainder[c] = q - static_cast<double>(base);
        assigned += plan.per_class[c];
    }

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        return a < b;  // tie by ascending class id
    });

    std::size_t remaining = total - assigned;
    while (remaining > 0) {
        bool granted = false;
        for (std::size_t c : order) {
            if (remaining == 0) break;
            if (dist.counts[c] == 0 || plan.per_class[c] >= dist.counts[c]) continue;
            plan.per_class[c]++;
            remaining--;
            granted = true;
        }
        if (!granted) throw QuotaInfeasible("quota seats exceed available samples");
    }
    return plan;
}

/// Quotas are valid for a dataset when every class can supply its quota and
/// the result is a strict subset.
inline void validate_quotas(const QuotaPlan& quotas, const ClassDistribution& dist) {
    if (quotas.per_class.size() != dist.counts.size()) {
        throw QuotaInfeasible("quota plan has wrong class count");
    }
    std::size_t sum = 0;
    for (std::size_t c = 0; c < quotas.per_class.size(); ++c) {
        if (quotas.per_class[c] > dist.counts[c]) {
            throw QuotaInfeasible("class " + std::to_string(c) + " quota exceeds its size");
        }
        sum += quotas.per_class[c];
    }
    if (sum != quotas.total) throw QuotaInfeasible("quota total does not match per-class sum");
    if (quotas.total >= dist.total()) {
        throw QuotaInfeasible("quota must select a strict subset");
    }
}

struct DiscretizeResult {
    std::vector<int> labels;
    std::vector<double> edges;  // bins + 1 entries
};

// Equal-width bins over [min, max]; each bin is half-open except the last,
// which is closed so the maximum lands in bin bins-1.
inline DiscretizeResult discretize(const std::vector<double>& values, int bins) {
    if (bins < 2) throw DegenerateRange("discretize needs at least 2 bins");
    if (values.empty()) throw DegenerateRange("discretize needs a non-empty value vector");
    for (double v : values) {
        if (!std::isfinite(v)) throw DegenerateRange("discretize requires finite values");
    }
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mn == mx) throw DegenerateRange("all values identical; no range to discretize");

    DiscretizeResult res;
    const double width = (mx - mn) / bins;
    res.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b) {
        res.edges[static_cast<std::size_t>(b)] = mn + width * b;
    }
    res.edges.back() = mx;

    res.labels.reserve(values.size());
    for (double v : values) {
        int b = static_cast<int>(std::floor((v - mn) / width));
        b = std::clamp(b, 0, bins - 1);
        res.labels.push_back(b);
    }
    return res;
}

/// Column layout of an input CSV. The label column is picked by name (needs a
/// header) or by 0-based position. A column literally named "index" in the
/// header carries sample ids and is not treated as a feature. Setting
/// `discretize_bins` > 0 parses the label column as continuous and bins it.
struct CsvSchema {
    std::string label_name = "label";
    int label_index = -1;  // used when label_name is empty or there is no header
    bool has_header = false;
    int discretize_bins = 0;
};

namespace detail {

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    double v = 0.0;
    if (!csv::try_parse_double(cell, v)) {
        throw FormatError("non-numeric cell '" + cell + "' in column " + std::to_string(col), row);
    }
    return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    const std::vector<std::string> lines = csv::read_lines(path);

    std::size_t first_data_line = 0;
    std::vector<std::string> header;
    if (schema.has_header) {
        if (lines.empty()) throw FormatError("empty file: " + path);
        header = csv::split_line(lines[0]);
        first_data_line = 1;
    }

    // Locate label and optional index columns.
    int label_col = schema.label_index;
    int index_col = -1;
    if (schema.has_header) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (!schema.label_name.empty() && header[i] == schema.label_name) {
                label_col = static_cast<int>(i);
            }
            if (header[i] == "index") index_col = static_cast<int>(i);
        }
    }
    if (label_col < 0) {
        throw FormatError(schema.label_name.empty()
                              ? "no label column designated"
                              : "label column '" + schema.label_name + "' not found in header");
    }

    Dataset ds;
    std::vector<double> raw_labels;
    std::size_t arity = 0;
    for (std::size_t li = first_data_line; li < lines.size(); ++li) {
        if (lines[li].empty() && li + 1 == lines.size()) break;  // trailing newline
        const std::size_t row = li + 1;
        const std::vector<std::string> cells = csv::split_line(lines[li]);
        if (ds.samples.empty()) {
            arity = cells.size();
            if (static_cast<std::size_t>(label_col) >= arity) {
                throw FormatError("label column out of range", row);
            }
        } else if (cells.size() != arity) {
            throw FormatError("ragged row: expected " + std::to_string(arity) + " cells, got " +
                                  std::to_string(cells.size()),
                              row);
        }

        Sample s;
        s.index = ds.samples.size();
        s.origin = s.index;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = detail::parse_cell(cells[c], row, c);
            if (static_cast<int>(c) == label_col) {
                raw_labels.push_back(v);
            } else if (static_cast<int>(c) == index_col) {
                s.origin = static_cast<std::size_t>(v);
            } else {
                s.features.push_back(v);
            }
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw FormatError("empty file: " + path);

    if (schema.discretize_bins > 0) {
        const DiscretizeResult disc = discretize(raw_labels, schema.discretize_bins);
        for (std::size_t i = 0; i < ds.samples.size(); ++i) ds.samples[i].label = disc.labels[i];
        ds.num_classes = schema.discretize_bins;
    } else {
        int max_label = 0;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            const double v = raw_labels[i];
            if (v != std::floor(v) || v < 0) {
                throw FormatError("label '" + csv::format_double(v) +
                                  "' is not a non-negative integer; use discretize for "
                                  "continuous labels");
            }
            ds.samples[i].label = static_cast<int>(v);
            max_label = std::max(max_label, ds.samples[i].label);
        }
        ds.num_classes = max_label + 1;
    }
    ds.feature_shape = Shape::flat(ds.samples.front().features.size());
    return ds;
}

/// Writes `index,label,f0..f(d-1)` with a header row. `index` is the sample's
/// origin id so reduced and split sets stay traceable to their source.
inline void save_csv(const Dataset& ds, const std::string& path) {
    std::string out = "index,label";
    for (std::size_t d = 0; d < ds.dim(); ++d) out += ",f" + std::to_string(d);
    out += "\n";
    for (const Sample& s : ds.samples) {
        out += std::to_string(s.origin) + "," + std::to_string(s.label);
        for (double f : s.features) out += "," + csv::format_double(f);
        out += "\n";
    }
    csv::write_file(path, out);
}

struct BlobsParams {
    std::size_t n_per_class = 100;
    int num_classes = 2;
    std::size_t dim = 2;
    double spread = 1.0;
    std::uint64_t seed = 0;
};

// Class centers sit on the coordinate axes at multiples of 6*spread, so every
// pair of centers is at least 6 standard deviations apart.
inline std::vector<double> blob_center(int cls, std::size_t dim, double spread) {
    std::vector<double> center(dim, 0.0);
    const std::size_t axis = static_cast<std::size_t>(cls) % dim;
    const double level = static_cast<double>(static_cast<std::size_t>(cls) / dim + 1);
    center[axis] = 6.0 * spread * level;
    return center;
}

inline Dataset generate_blobs(std::size_t n_per_class, int num_classes, std::size_t dim,
                              double spread, std::uint64_t seed) {
    if (n_per_class == 0 || num_classes <= 0 || dim == 0) {
        throw DegenerateRange("blob counts must be positive");
    }
    if (!(spread > 0.0)) throw DegenerateRange("blob spread must be positive");

    Rng rng(seed);
    Dataset ds;
    ds.num_classes = num_classes;
    ds.feature_shape = Shape::flat(dim);
    ds.samples.reserve(n_per_class * static_cast<std::size_t>(num_classes));
    for (int cls = 0; cls < num_classes; ++cls) {
        const std::vector<double> center = blob_center(cls, dim, spread);
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Sample s;
            s.index = ds.samples.size();
            s.origin = s.index;
            s.label = cls;
            s.features.resize(dim);
            for (std::size_t d = 0; d < dim; ++d) {
                s.features[d] = rng.normal(center[d], spread);
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

namespace detail {

inline Dataset subset_by_indices(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.feature_shape = ds.feature_shape;
    out.samples.reserve(indices.size());
    for (std::size_t idx : indices) {
        Sample s = ds.samples[idx];
        s.index = out.samples.size();
        out.samples.push_back(std::move(s));
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(std::max(ds.num_classes, 0)));
    for (const Sample& s : ds.samples) {
        by_class[static_cast<std::size_t>(s.label)].push_back(s.index);
    }
    return by_class;
}

}  // namespace detail

struct SplitResult {
    Dataset train;
    Dataset validation;
};

// Stratified split: the validation set takes a per-class quota computed from
// val_fraction, drawn without replacement. Both halves keep ascending source
// order, so the split is a pure function of (dataset, val_fraction, seed).
inline SplitResult split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    const ClassDistribution dist = class_distribution(ds);
    const QuotaPlan quotas = compute_quotas(dist, val_fraction);

    Rng rng(seed);
    std::vector<bool> in_val(ds.size(), false);
    auto by_class = detail::indices_by_class(ds);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        rng.shuffle(by_class[c]);
        for (std::size_t i = 0; i < quotas.per_class[c]; ++i) in_val[by_class[c][i]] = true;
    }

    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        (in_val[i] ? val_idx : train_idx).push_back(i);
    }
    return SplitResult{detail::subset_by_indices(ds, train_idx),
                       detail::subset_by_indices(ds, val_idx)};
}

}  // namespace tsr
