#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "wavefuse/dataset.hpp"
#include "wavefuse/learner.hpp"
#include "wavefuse/metrics.hpp"

using namespace wavefuse;

namespace {

Dataset with_class_counts(const std::vector<std::size_t>& counts, std::size_t dim = 2) {
    Dataset d;
    d.num_classes = static_cast<int>(counts.size());
    std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    d.features = Matrix(n, dim);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            d.features(d.labels.size(), 0) = static_cast<double>(d.labels.size());
            d.labels.push_back(static_cast<int>(c));
        }
    }
    return d;
}

IndexList iota_indices(std::size_t n) {
    IndexList out(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

std::vector<std::size_t> labeled_class_counts(const Dataset& d, const PoolState& pool) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(d.num_classes), 0);
    for (auto i : pool.labeled) ++counts[static_cast<std::size_t>(d.labels[i])];
    return counts;
}

void expect_canonical(const PoolState& pool, const IndexList& train) {
    EXPECT_TRUE(std::is_sorted(pool.labeled.begin(), pool.labeled.end()));
    EXPECT_TRUE(std::is_sorted(pool.unlabeled.begin(), pool.unlabeled.end()));
    IndexList both;
    std::set_intersection(pool.labeled.begin(), pool.labeled.end(), pool.unlabeled.begin(), pool.unlabeled.end(),
                          std::back_inserter(both));
    EXPECT_TRUE(both.empty());
    IndexList all;
    std::merge(pool.labeled.begin(), pool.labeled.end(), pool.unlabeled.begin(), pool.unlabeled.end(),
               std::back_inserter(all));
    IndexList sorted_train = train;
    std::sort(sorted_train.begin(), sorted_train.end());
    EXPECT_EQ(all, sorted_train);
}

}  // namespace

TEST(StratifiedInit, BalancedClassesSplitEvenly) {
    const auto d = with_class_counts({50, 50});
    const auto pool = stratified_init(d, iota_indices(100), 10, 1);
    EXPECT_EQ(pool.labeled.size(), 10u);
    EXPECT_EQ(labeled_class_counts(d, pool), (std::vector<std::size_t>{5, 5}));
    EXPECT_EQ(pool.round, 0u);
    expect_canonical(pool, iota_indices(100));
}

TEST(StratifiedInit, ImbalancedProfileUsesLargestRemainder) {
    // 49.3 / 10.1 / 27.3 / 5.3 / 8.1 percent of 1000 samples; n0 = 40.
    // Exact shares 19.72, 4.04, 10.92, 2.12, 3.20 -> floors 19,4,10,2,3 (38);
    // the two leftover seats go to .92 (class 2) and .72 (class 0).
    const auto d = with_class_counts({493, 101, 273, 53, 80});
    const auto pool = stratified_init(d, iota_indices(1000), 40, 7);
    EXPECT_EQ(labeled_class_counts(d, pool), (std::vector<std::size_t>{20, 4, 11, 2, 3}));
}

TEST(StratifiedInit, MinimumOnePerClass) {
    const auto d = with_class_counts({90, 5, 3, 1, 1});
    const auto pool = stratified_init(d, iota_indices(100), 5, 3);
    EXPECT_EQ(labeled_class_counts(d, pool), (std::vector<std::size_t>{1, 1, 1, 1, 1}));
}

TEST(StratifiedInit, Errors) {
    const auto d = with_class_counts({10, 10, 10});
    try {
        stratified_init(d, iota_indices(30), 2, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::infeasible_stratification);
    }
    IndexList without_last(iota_indices(20));
    try {
        stratified_init(d, without_last, 5, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_class);
    }
}

TEST(StratifiedInit, DeterministicPerSeed) {
    const auto d = with_class_counts({40, 30, 30});
    EXPECT_EQ(stratified_init(d, iota_indices(100), 12, 5), stratified_init(d, iota_indices(100), 12, 5));
    EXPECT_NE(stratified_init(d, iota_indices(100), 12, 5).labeled,
              stratified_init(d, iota_indices(100), 12, 6).labeled);
}

TEST(StratifiedInit, QuotasWithinOneOfProportional) {
    Rng rng(2024);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t k = 2 + uniform_index(rng, 5);
        std::vector<std::size_t> counts(k);
        std::size_t total = 0;
        for (auto& c : counts) total += (c = 1 + uniform_index(rng, 200));
        const std::size_t n0 = k + uniform_index(rng, total - k + 1);
        const auto q = stratified_quotas(counts, n0);
        EXPECT_EQ(std::accumulate(q.begin(), q.end(), std::size_t{0}), n0);
        bool lifted = false;
        for (std::size_t c = 0; c < k; ++c) {
            lifted |= static_cast<double>(n0) * static_cast<double>(counts[c]) < static_cast<double>(total);
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double exact = static_cast<double>(n0) * static_cast<double>(counts[c]) / static_cast<double>(total);
            EXPECT_GE(q[c], 1u);
            EXPECT_LE(q[c], counts[c]);
            // The one-per-class minimum can force larger deviations when it binds.
            if (!lifted || exact < 1.0) {
                EXPECT_LT(std::abs(static_cast<double>(q[c]) - exact), 1.0)
                    << "trial " << trial << " class " << c << " n0 " << n0;
            }
        }
    }
}

TEST(UpdatePools, MovesBatchAndAdvancesRound) {
    const PoolState pool{{0}, {1, 2}, 3};
    const std::vector<std::size_t> batch{2};
    const auto next = update_pools(pool, batch);
    EXPECT_EQ(next.labeled, (IndexList{0, 2}));
    EXPECT_EQ(next.unlabeled, (IndexList{1}));
    EXPECT_EQ(next.round, 4u);
}

TEST(UpdatePools, EmptyBatchOnlyAdvancesRound) {
    const PoolState pool{{0}, {1, 2}, 0};
    const auto next = update_pools(pool, {});
    EXPECT_EQ(next.labeled, pool.labeled);
    EXPECT_EQ(next.unlabeled, pool.unlabeled);
    EXPECT_EQ(next.round, 1u);
}

TEST(UpdatePools, RejectsStaleAndDuplicateSelections) {
    const PoolState pool{{0}, {1, 2}, 0};
    const std::vector<std::size_t> stale{0};
    const std::vector<std::size_t> dup{1, 1};
    try {
        update_pools(pool, stale);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::stale_selection);
    }
    try {
        update_pools(pool, dup);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::duplicate_selection);
    }
}

TEST(UpdatePools, RandomSequencesPreserveDisjointCoverage) {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + uniform_index(rng, 60);
        const auto d = with_class_counts({n / 2 + 1, n - n / 2 + 1});
        const auto train = iota_indices(d.size());
        PoolState pool = stratified_init(d, train, 2, trial);
        while (!pool.unlabeled.empty()) {
            const std::size_t take = uniform_index(rng, pool.unlabeled.size() + 1);
            const auto picks = sample_without_replacement(pool.unlabeled.size(), take, rng);
            IndexList batch;
            for (auto p : picks) batch.push_back(pool.unlabeled[p]);
            const auto before = pool.round;
            pool = update_pools(pool, batch);
            EXPECT_EQ(pool.round, before + 1);
            expect_canonical(pool, train);
        }
    }
}

TEST(GenerateBlobs, ZeroStdevCollapsesToCenters) {
    BlobSpec spec{{{{1.0, 2.0}, 0.0, 3}, {{-4.0, 5.0}, 0.0, 2}}};
    const auto d = generate_blobs(spec, 11);
    ASSERT_EQ(d.size(), 5u);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& center = spec.classes[static_cast<std::size_t>(d.labels[i])].center;
        EXPECT_EQ(d.features(i, 0), center[0]);
        EXPECT_EQ(d.features(i, 1), center[1]);
    }
}

TEST(GenerateBlobs, DeterministicGivenSeed) {
    BlobSpec spec{{{{0.0, 0.0, 0.0}, 1.0, 20}, {{3.0, 0.0, 1.0}, 0.5, 10}}};
    const auto a = generate_blobs(spec, 4);
    const auto b = generate_blobs(spec, 4);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.features, generate_blobs(spec, 5).features);
}

TEST(GenerateBlobs, WellSeparatedClassesAreLearnable) {
    // Centers 10 sigma apart; 10 samples per class.
    BlobSpec spec{{{{0.0, 0.0}, 1.0, 10}, {{10.0, 0.0}, 1.0, 10}}};
    const auto d = generate_blobs(spec, 8);
    TrainConfig cfg;
    cfg.hidden_dim = 8;
    cfg.dropout_p = 0.0;
    cfg.epochs = 100;
    cfg.learning_rate = 0.05;
    const auto train_idx = iota_indices(d.size());
    const auto params = train(d, train_idx, cfg);
    const auto preds = predict_labels(predict_proba(params, d.features));
    EXPECT_GE(accuracy(preds, d.labels), 0.99);
}

TEST(GenerateBlobs, RejectsInvalidSpec) {
    BlobSpec one_class{{{{0.0}, 1.0, 3}}};
    EXPECT_THROW(generate_blobs(one_class, 0), Error);
    BlobSpec ragged{{{{0.0}, 1.0, 3}, {{0.0, 1.0}, 1.0, 3}}};
    EXPECT_THROW(generate_blobs(ragged, 0), Error);
    BlobSpec negative{{{{0.0}, -1.0, 3}, {{1.0}, 1.0, 3}}};
    EXPECT_THROW(generate_blobs(negative, 0), Error);
}

TEST(ImbalancedBlobs, CountsFollowProportions) {
    const std::vector<double> props{49.3, 10.1, 27.3, 5.3, 8.1};
    const auto spec = imbalanced_blob_spec(props, 2000, 10, 1.5, 1.0, 3);
    std::vector<std::size_t> counts;
    for (const auto& c : spec.classes) counts.push_back(c.count);
    EXPECT_EQ(spec.total(), 2000u);
    // 2000 * p / 100.1 = 985.01, 201.80, 545.45, 105.89, 161.84 -> floors sum 1997,
    // leftovers to .89 (class 3), .84 (class 4), .80 (class 1).
    EXPECT_EQ(counts, (std::vector<std::size_t>{985, 202, 545, 106, 162}));
}

TEST(LoadCsv, RemapsLabelsContiguously) {
    std::istringstream in("f0,f1,label\n1.5,2,2\n-3,4e-1,7\n0,0,2\n");
    const auto loaded = parse_csv(in);
    EXPECT_EQ(loaded.dataset.num_classes, 2);
    EXPECT_EQ(loaded.dataset.labels, (std::vector<int>{0, 1, 0}));
    EXPECT_EQ(loaded.original_labels, (std::vector<long long>{2, 7}));
    EXPECT_DOUBLE_EQ(loaded.dataset.features(1, 1), 0.4);
    EXPECT_EQ(loaded.dataset.features.rows(), 3u);
}

TEST(LoadCsv, EmptyAndHeaderOnlyFilesRejected) {
    std::istringstream empty("");
    try {
        parse_csv(empty);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
    }
    std::istringstream header_only("f0,label\n");
    try {
        parse_csv(header_only);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_dataset);
    }
}

TEST(LoadCsv, ParseErrorsNameTheRow) {
    std::istringstream bad_cell("f0,f1,label\n1,2,0\n1,abc,1\n");
    try {
        parse_csv(bad_cell);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
    std::istringstream ragged("f0,f1,label\n1,2,0\n1,1\n");
    try {
        parse_csv(ragged);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
    std::istringstream no_label("f0,f1\n1,2\n");
    EXPECT_THROW(parse_csv(no_label), Error);
}

TEST(LoadCsv, RoundTripIsExact) {
    BlobSpec spec{{{{0.1, -2.0}, 1.3, 7}, {{5.0, 1.0 / 3.0}, 0.7, 6}}};
    const auto d = generate_blobs(spec, 21);
    std::stringstream buf;
    write_csv(d, buf);
    const auto back = parse_csv(buf);
    EXPECT_EQ(back.dataset.features, d.features);
    EXPECT_EQ(back.dataset.labels, d.labels);
}

TEST(StratifiedFolds, OneOfEachClassPerFold) {
    const auto d = with_class_counts({5, 5});
    const auto folds = stratified_folds(d, 5, 1);
    ASSERT_EQ(folds.size(), 5u);
    for (const auto& f : folds) {
        ASSERT_EQ(f.test.size(), 2u);
        EXPECT_NE(d.labels[f.test[0]], d.labels[f.test[1]]);
    }
}

TEST(StratifiedFolds, PartitionAndProportions) {
    const auto d = with_class_counts({37, 11, 23});
    const std::size_t k = 4;
    const auto folds = stratified_folds(d, k, 9);
    std::vector<int> seen(d.size(), 0);
    for (const auto& f : folds) {
        for (auto i : f.test) ++seen[i];
        EXPECT_EQ(f.train.size() + f.test.size(), d.size());
        std::vector<std::size_t> counts(3, 0);
        for (auto i : f.test) ++counts[static_cast<std::size_t>(d.labels[i])];
        const std::vector<double> global{37.0, 11.0, 23.0};
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_LE(std::abs(static_cast<double>(counts[c]) - global[c] / static_cast<double>(k)), 1.0);
        }
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

TEST(StratifiedFolds, DeterministicAndValidated) {
    const auto d = with_class_counts({6, 9});
    const auto a = stratified_folds(d, 3, 4);
    const auto b = stratified_folds(d, 3, 4);
    for (std::size_t f = 0; f < a.size(); ++f) EXPECT_EQ(a[f].test, b[f].test);
    try {
        stratified_folds(d, 7, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::infeasible_stratification);
    }
}

TEST(StratifiedSplit, HoldsOutRequestedFraction) {
    const auto d = with_class_counts({80, 20});
    const auto split = stratified_split(d, 0.2, 3);
    EXPECT_EQ(split.test.size(), 20u);
    EXPECT_EQ(split.train.size(), 80u);
    std::size_t minority = 0;
    for (auto i : split.test) minority += d.labels[i] == 1;
    EXPECT_EQ(minority, 4u);
}
