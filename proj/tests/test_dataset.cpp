#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "tsr/dataset.hpp"

using namespace tsr;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = std::string("/tmp/tsr_test_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("load_csv reads a small headerless file") {
    const auto path = write_temp("small.csv", "1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n7.0,8.0,1\n");
    CsvSchema schema;
    schema.label_name.clear();
    schema.label_index = 2;
    const Dataset ds = load_csv(path, schema);
    CHECK(ds.size() == 4);
    CHECK(ds.num_classes == 2);
    CHECK(ds.feature_shape == Shape::flat(2));
    CHECK(ds.samples[0].features == std::vector<double>{1.0, 2.0});
    CHECK(ds.samples[1].label == 1);
    CHECK(ds.samples[3].features == std::vector<double>{7.0, 8.0});
}

TEST_CASE("load_csv reports the row of a non-numeric cell") {
    const auto path = write_temp("bad.csv", "1,2,0\n3,4,1\n5,oops,0\n7,8,1\n");
    CsvSchema schema;
    schema.label_name.clear();
    schema.label_index = 2;
    try {
        load_csv(path, schema);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.row() == 3);
    }
}

TEST_CASE("load_csv rejects an empty file") {
    const auto path = write_temp("empty.csv", "");
    CsvSchema schema;
    schema.label_name.clear();
    schema.label_index = 0;
    CHECK_THROWS_AS(load_csv(path, schema), FormatError);
}

TEST_CASE("load_csv rejects ragged rows") {
    const auto path = write_temp("ragged.csv", "1,2,0\n3,4\n");
    CsvSchema schema;
    schema.label_name.clear();
    schema.label_index = 2;
    try {
        load_csv(path, schema);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.row() == 2);
    }
}

TEST_CASE("load_csv resolves label and index columns from the header") {
    const auto path = write_temp("hdr.csv", "index,label,f0,f1\n10,1,0.5,0.25\n11,0,1.5,2.5\n");
    CsvSchema schema;
    schema.has_header = true;
    const Dataset ds = load_csv(path, schema);
    CHECK(ds.size() == 2);
    CHECK(ds.samples[0].origin == 10);
    CHECK(ds.samples[1].origin == 11);
    CHECK(ds.samples[0].features == std::vector<double>{0.5, 0.25});
    CHECK(ds.samples[0].label == 1);
}

TEST_CASE("load_csv bins continuous labels on request") {
    const auto path = write_temp("cont.csv", "0.5,0.1\n1.5,2.0\n2.5,3.9\n3.5,4.0\n");
    CsvSchema schema;
    schema.label_name.clear();
    schema.label_index = 1;
    schema.discretize_bins = 2;
    const Dataset ds = load_csv(path, schema);
    CHECK(ds.num_classes == 2);
    CHECK(ds.samples[0].label == 0);
    CHECK(ds.samples[1].label == 0);
    CHECK(ds.samples[2].label == 1);
    CHECK(ds.samples[3].label == 1);

    // Without binning the same file is rejected: labels are not integers.
    schema.discretize_bins = 0;
    CHECK_THROWS_AS(load_csv(path, schema), FormatError);
}

TEST_CASE("save_csv then load_csv round-trips a dataset") {
    const Dataset ds = generate_blobs(5, 3, 4, 0.7, 21);
    const std::string path = "/tmp/tsr_test_roundtrip.csv";
    save_csv(ds, path);
    CsvSchema schema;
    schema.has_header = true;
    const Dataset back = load_csv(path, schema);
    REQUIRE(back.size() == ds.size());
    CHECK(back.num_classes == ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].features == ds.samples[i].features);
        CHECK(back.samples[i].label == ds.samples[i].label);
        CHECK(back.samples[i].origin == ds.samples[i].origin);
    }
}

TEST_CASE("generate_blobs is deterministic per seed") {
    const Dataset a = generate_blobs(100, 10, 8, 1.0, 7);
    const Dataset b = generate_blobs(100, 10, 8, 1.0, 7);
    REQUIRE(a.size() == 1000);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].features == b.samples[i].features);
        CHECK(a.samples[i].label == b.samples[i].label);
    }
    const Dataset c = generate_blobs(100, 10, 8, 1.0, 8);
    CHECK(a.samples[0].features != c.samples[0].features);
}

TEST_CASE("generate_blobs smallest case") {
    const Dataset ds = generate_blobs(1, 2, 2, 0.1, 0);
    REQUIRE(ds.size() == 2);
    CHECK(ds.samples[0].label == 0);
    CHECK(ds.samples[1].label == 1);
    CHECK(ds.num_classes == 2);
}

TEST_CASE("generate_blobs class means are separated beyond the spread") {
    // Oracle: recompute the empirical per-class means from the samples and
    // check all pairwise distances.
    const double spread = 0.5;
    for (std::uint64_t seed : {0ULL, 3ULL, 99ULL}) {
        const Dataset ds = generate_blobs(50, 3, 2, spread, seed);
        std::vector<std::vector<double>> means(3, std::vector<double>(2, 0.0));
        std::vector<std::size_t> counts(3, 0);
        for (const Sample& s : ds.samples) {
            counts[static_cast<std::size_t>(s.label)]++;
            for (std::size_t d = 0; d < 2; ++d) {
                means[static_cast<std::size_t>(s.label)][d] += s.features[d];
            }
        }
        for (int c = 0; c < 3; ++c) {
            REQUIRE(counts[static_cast<std::size_t>(c)] == 50);
            for (std::size_t d = 0; d < 2; ++d) means[static_cast<std::size_t>(c)][d] /= 50.0;
        }
        for (int c1 = 0; c1 < 3; ++c1) {
            for (int c2 = c1 + 1; c2 < 3; ++c2) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < 2; ++d) {
                    const double diff = means[static_cast<std::size_t>(c1)][d] -
                                        means[static_cast<std::size_t>(c2)][d];
                    d2 += diff * diff;
                }
                CHECK(std::sqrt(d2) > spread);
            }
        }
    }
}

TEST_CASE("discretize splits a half-open range") {
    const DiscretizeResult res = discretize({0.0, 0.5, 1.0}, 2);
    CHECK(res.labels == std::vector<int>{0, 1, 1});
    REQUIRE(res.edges.size() == 3);
    CHECK(res.edges[0] == doctest::Approx(0.0));
    CHECK(res.edges[1] == doctest::Approx(0.5));
    CHECK(res.edges[2] == doctest::Approx(1.0));
}

TEST_CASE("discretize rejects a degenerate range") {
    CHECK_THROWS_AS(discretize({3.0, 3.0, 3.0}, 2), DegenerateRange);
    CHECK_THROWS_AS(discretize({}, 2), DegenerateRange);
}

TEST_CASE("discretize spreads 0..99 evenly over 10 bins") {
    std::vector<double> values(100);
    for (int i = 0; i < 100; ++i) values[static_cast<std::size_t>(i)] = i;
    const DiscretizeResult res = discretize(values, 10);
    // Brute-force count per bin.
    std::vector<int> counts(10, 0);
    for (int label : res.labels) counts[static_cast<std::size_t>(label)]++;
    for (int c : counts) CHECK(c == 10);
}

TEST_CASE("discretize is order-preserving") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> values(40);
        for (double& v : values) v = rng.uniform(-10.0, 10.0);
        const int bins = 2 + static_cast<int>(rng.below(8));
        const DiscretizeResult res = discretize(values, bins);
        for (std::size_t i = 0; i < values.size(); ++i) {
            for (std::size_t j = 0; j < values.size(); ++j) {
                if (values[i] <= values[j]) CHECK(res.labels[i] <= res.labels[j]);
            }
        }
    }
}

TEST_CASE("class_distribution counts") {
    const Dataset balanced = generate_blobs(100, 10, 4, 1.0, 3);
    const ClassDistribution dist = class_distribution(balanced);
    REQUIRE(dist.counts.size() == 10);
    for (std::size_t c : dist.counts) CHECK(c == 100);

    Dataset tiny;
    tiny.num_classes = 2;
    tiny.feature_shape = Shape::flat(1);
    for (int label : {0, 0, 1}) {
        Sample s;
        s.index = tiny.samples.size();
        s.origin = s.index;
        s.features = {0.0};
        s.label = label;
        tiny.samples.push_back(s);
    }
    const ClassDistribution td = class_distribution(tiny);
    CHECK(td.counts == std::vector<std::size_t>{2, 1});

    Dataset empty;
    empty.num_classes = 3;
    const ClassDistribution ed = class_distribution(empty);
    CHECK(ed.counts == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("compute_quotas matches the full-scale benchmark row") {
    ClassDistribution dist;
    dist.counts.assign(10, 5000);
    const QuotaPlan plan = compute_quotas(dist, 0.005);
    CHECK(plan.total == 250);
    for (std::size_t q : plan.per_class) CHECK(q == 25);
}

TEST_CASE("compute_quotas is exactly proportional when possible") {
    ClassDistribution dist;
    dist.counts = {100, 100};
    const QuotaPlan plan = compute_quotas(dist, 0.10);
    CHECK(plan.total == 20);
    CHECK(plan.per_class == std::vector<std::size_t>{10, 10});
}

TEST_CASE("compute_quotas hands the remainder seat to the larger remainder") {
    // fraction 0.5 of {A:3, B:2}: total round-half-up(2.5) = 3, raw quotas
    // 1.5/1.0, floors 1/1, seat goes to A.
    ClassDistribution dist;
    dist.counts = {3, 2};
    const QuotaPlan plan = compute_quotas(dist, 0.5);
    CHECK(plan.total == 3);
    CHECK(plan.per_class == std::vector<std::size_t>{2, 1});
}

TEST_CASE("compute_quotas keeps every nonempty class or refuses") {
    ClassDistribution dist;
    dist.counts = {1, 19};
    const QuotaPlan plan = compute_quotas(dist, 0.25);
    CHECK(plan.total == 5);
    CHECK(plan.per_class == std::vector<std::size_t>{1, 4});

    ClassDistribution many;
    many.counts.assign(10, 10);  // N=100, 1% -> 1 seat < 10 classes
    CHECK_THROWS_AS(compute_quotas(many, 0.01), QuotaInfeasible);
}

TEST_CASE("compute_quotas rejects out-of-range fractions") {
    ClassDistribution dist;
    dist.counts = {10, 10};
    CHECK_THROWS_AS(compute_quotas(dist, 0.0), QuotaInfeasible);
    CHECK_THROWS_AS(compute_quotas(dist, 1.0), QuotaInfeasible);
    CHECK_THROWS_AS(compute_quotas(dist, -0.2), QuotaInfeasible);
}

TEST_CASE("compute_quotas apportionment properties over random distributions") {
    Rng rng(11);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + rng.below(8);
        ClassDistribution dist;
        dist.counts.resize(k);
        for (std::size_t& c : dist.counts) c = rng.below(200);
        const double fraction = rng.uniform(0.01, 0.99);
        const std::size_t n = dist.total();
        if (n == 0) continue;

        QuotaPlan plan;
        try {
            plan = compute_quotas(dist, fraction);
        } catch (const QuotaInfeasible&) {
            continue;
        }
        checked++;
        CHECK(plan.total == round_half_up(fraction * static_cast<double>(n)));
        std::size_t sum = 0;
        for (std::size_t c = 0; c < k; ++c) {
            sum += plan.per_class[c];
            CHECK(plan.per_class[c] <= dist.counts[c]);
            if (dist.counts[c] > 0) CHECK(plan.per_class[c] >= 1);
            // Apportionment error below one seat, except the minimum-one bump.
            const double raw = fraction * static_cast<double>(dist.counts[c]);
            const double err = std::abs(static_cast<double>(plan.per_class[c]) - raw);
            CHECK((err < 1.0 + 1e-9 || (raw < 1.0 && plan.per_class[c] == 1)));
        }
        CHECK(sum == plan.total);
    }
    CHECK(checked > 300);
}

TEST_CASE("split stratifies exactly and covers the dataset") {
    const Dataset ds = generate_blobs(100, 10, 4, 1.0, 17);
    const SplitResult parts = split(ds, 0.2, 5);
    CHECK(parts.train.size() == 800);
    CHECK(parts.validation.size() == 200);
    const ClassDistribution vd = class_distribution(parts.validation);
    for (std::size_t c : vd.counts) CHECK(c == 20);

    // Disjoint-and-covering oracle over origin ids.
    std::set<std::size_t> seen;
    for (const Sample& s : parts.train.samples) CHECK(seen.insert(s.origin).second);
    for (const Sample& s : parts.validation.samples) CHECK(seen.insert(s.origin).second);
    CHECK(seen.size() == 1000);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 999);
}

TEST_CASE("split is deterministic per seed") {
    const Dataset ds = generate_blobs(30, 3, 2, 1.0, 2);
    const SplitResult a = split(ds, 0.25, 9);
    const SplitResult b = split(ds, 0.25, 9);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train.samples[i].origin == b.train.samples[i].origin);
    }
    const SplitResult c = split(ds, 0.25, 10);
    bool all_same = a.validation.size() == c.validation.size();
    if (all_same) {
        all_same = false;
        for (std::size_t i = 0; i < a.validation.size(); ++i) {
            if (a.validation.samples[i].origin != c.validation.samples[i].origin) break;
            if (i + 1 == a.validation.size()) all_same = true;
        }
    }
    CHECK_FALSE(all_same);
}
