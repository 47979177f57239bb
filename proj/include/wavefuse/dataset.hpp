#pragma once

// Datasets, splits and pool bookkeeping for pool-based active learning.
//
// Index sets (PoolState::labeled / unlabeled, split indices) are always kept
// sorted ascending so run artifacts compare byte-for-byte.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wavefuse/error.hpp"
#include "wavefuse/matrix.hpp"
#include "wavefuse/random.hpp"

namespace wavefuse {

using IndexList = std::vector<std::size_t>;

struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major, entries 0/1
};

struct Dataset {
    Matrix features;          // N x d
    std::vector<int> labels;  // N, values in [0, num_classes)
    int num_classes = 0;
    std::vector<BinaryMask> masks;  // segmentation utilities only; usually empty

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    void validate() const {
        if (labels.empty()) throw Error(ErrorKind::invalid_dataset, "dataset has no samples (N >= 1 required)");
        if (features.rows() != labels.size()) {
            throw Error(ErrorKind::invalid_dataset, "feature rows and label count differ");
        }
        if (features.cols() < 1) throw Error(ErrorKind::invalid_dataset, "feature dimension must be >= 1");
        if (num_classes < 2) throw Error(ErrorKind::invalid_dataset, "at least two classes required");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= num_classes) {
                throw Error(ErrorKind::invalid_dataset, "label out of range at sample " + std::to_string(i));
            }
        }
        for (double v : features.data()) {
            if (!std::isfinite(v)) throw Error(ErrorKind::invalid_dataset, "non-finite feature value");
        }
        if (!masks.empty() && masks.size() != labels.size()) {
            throw Error(ErrorKind::invalid_dataset, "mask count must match sample count");
        }
    }
};

struct PoolState {
    IndexList labeled;
    IndexList unlabeled;
    std::size_t round = 0;

    friend bool operator==(const PoolState&, const PoolState&) = default;
};

struct BlobClass {
    std::vector<double> center;
    double stdev = 1.0;
    std::size_t count = 1;
};

struct BlobSpec {
    std::vector<BlobClass> classes;

    std::size_t total() const noexcept {
        std::size_t n = 0;
        for (const auto& c : classes) n += c.count;
        return n;
    }

    void validate() const {
        if (classes.size() < 2) throw Error(ErrorKind::config, "blob spec needs at least two classes");
        const std::size_t d = classes.front().center.size();
        if (d < 1) throw Error(ErrorKind::config, "blob centers must have dimension >= 1");
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const auto& cls = classes[c];
            const std::string where = "blob class " + std::to_string(c);
            if (cls.center.size() != d) throw Error(ErrorKind::config, where + ": inconsistent center dimension");
            if (!(cls.stdev >= 0.0) || !std::isfinite(cls.stdev)) {
                throw Error(ErrorKind::config, where + ": stdev must be finite and >= 0");
            }
            if (cls.count < 1) throw Error(ErrorKind::config, where + ": count must be >= 1");
            for (double v : cls.center) {
                if (!std::isfinite(v)) throw Error(ErrorKind::config, where + ": non-finite center");
            }
        }
    }
};

struct Split {
    IndexList train;
    IndexList test;
};

namespace detail {

inline std::vector<IndexList> members_by_class(const Dataset& data, std::span<const std::size_t> indices) {
    std::vector<IndexList> members(static_cast<std::size_t>(data.num_classes));
    for (std::size_t idx : indices) {
        if (idx >= data.size()) throw Error(ErrorKind::shape, "index " + std::to_string(idx) + " out of range");
        members[static_cast<std::size_t>(data.labels[idx])].push_back(idx);
    }
    for (auto& m : members) std::sort(m.begin(), m.end());
    return members;
}

// Hamilton / largest-remainder apportionment of `total` seats by `weights`.
// Ties in the fractional part go to the lower index.
inline std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> seats(weights.size(), 0);
    if (weights.empty() || total == 0 || sum <= 0.0) return seats;
    std::vector<double> frac(weights.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / sum;
        const double fl = std::floor(exact + 1e-9);
        seats[i] = static_cast<std::size_t>(fl);
        frac[i] = exact - fl;
        assigned += seats[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) seats[order[k % order.size()]] += 1;
    return seats;
}

}  // namespace detail

// Per-class quotas for a stratified draw of n0 samples: largest remainder on
// class frequencies, then every class lifted to at least one sample.
inline std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> class_counts, std::size_t n0) {
    const std::size_t k = class_counts.size();
    std::size_t total = 0;
    for (auto c : class_counts) total += c;
    if (n0 < k) {
        throw Error(ErrorKind::infeasible_stratification,
                    "n0=" + std::to_string(n0) + " is smaller than the class count " + std::to_string(k));
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (class_counts[c] == 0) throw Error(ErrorKind::missing_class, "class " + std::to_string(c) + " has no samples");
    }
    if (n0 > total) {
        throw Error(ErrorKind::infeasible_stratification,
                    "n0=" + std::to_string(n0) + " exceeds the " + std::to_string(total) + " available samples");
    }
    std::vector<double> weights(class_counts.begin(), class_counts.end());
    auto quotas = detail::largest_remainder(weights, n0);

    std::vector<double> exact(k);
    for (std::size_t c = 0; c < k; ++c) exact[c] = static_cast<double>(n0) * weights[c] / static_cast<double>(total);
    for (std::size_t c = 0; c < k; ++c) {
        if (quotas[c] > 0) continue;
        // Take the seat from the class holding the most surplus over its exact share.
        std::size_t donor = k;
        for (std::size_t j = 0; j < k; ++j) {
            if (quotas[j] < 2) continue;
            const double surplus = static_cast<double>(quotas[j]) - exact[j];
            if (donor == k || surplus > static_cast<double>(quotas[donor]) - exact[donor]) donor = j;
        }
        quotas[donor] -= 1;
        quotas[c] = 1;
    }
    return quotas;
}

inline PoolState stratified_init(const Dataset& data, std::span<const std::size_t> train_indices, std::size_t n0,
                                 std::uint64_t seed) {
    const auto members = detail::members_by_class(data, train_indices);
    std::vector<std::size_t> counts;
    for (const auto& m : members) counts.push_back(m.size());
    const auto quotas = stratified_quotas(counts, n0);

    Rng rng(derive_seed(seed, {0x5715a7ULL}));
    PoolState pool;
    for (std::size_t c = 0; c < members.size(); ++c) {
        IndexList shuffled = members[c];
        shuffle(std::span<std::size_t>(shuffled), rng);
        pool.labeled.insert(pool.labeled.end(), shuffled.begin(),
                            shuffled.begin() + static_cast<std::ptrdiff_t>(quotas[c]));
    }
    std::sort(pool.labeled.begin(), pool.labeled.end());
    IndexList train(train_indices.begin(), train_indices.end());
    std::sort(train.begin(), train.end());
    std::set_difference(train.begin(), train.end(), pool.labeled.begin(), pool.labeled.end(),
                        std::back_inserter(pool.unlabeled));
    return pool;
}

inline PoolState update_pools(const PoolState& pool, std::span<const std::size_t> batch) {
    IndexList sorted(batch.begin(), batch.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorKind::duplicate_selection,
                    "index " + std::to_string(*std::adjacent_find(sorted.begin(), sorted.end())) +
                        " selected twice");
    }
    for (std::size_t idx : sorted) {
        if (!std::binary_search(pool.unlabeled.begin(), pool.unlabeled.end(), idx)) {
            throw Error(ErrorKind::stale_selection, "index " + std::to_string(idx) + " is not in the unlabeled pool");
        }
    }
    PoolState next;
    next.round = pool.round + 1;
    std::merge(pool.labeled.begin(), pool.labeled.end(), sorted.begin(), sorted.end(),
               std::back_inserter(next.labeled));
    std::set_difference(pool.unlabeled.begin(), pool.unlabeled.end(), sorted.begin(), sorted.end(),
                        std::back_inserter(next.unlabeled));
    return next;
}

inline Dataset generate_blobs(const BlobSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t d = spec.classes.front().center.size();
    Dataset data;
    data.num_classes = static_cast<int>(spec.classes.size());
    data.features = Matrix(spec.total(), d);
    data.labels.reserve(spec.total());
    Rng rng(derive_seed(seed, {0xb10bULL}));
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        const auto& cls = spec.classes[c];
        for (std::size_t i = 0; i < cls.count; ++i, ++row) {
            for (std::size_t j = 0; j < d; ++j) {
                data.features(row, j) = cls.center[j] + cls.stdev * standard_normal(rng);
            }
            data.labels.push_back(static_cast<int>(c));
        }
    }
    return data;
}

// Class-imbalanced blobs: per-class counts by largest remainder on the given
// proportions, centers drawn from N(0, spread^2 I) with a seed of their own.
inline BlobSpec imbalanced_blob_spec(std::span<const double> proportions, std::size_t total, std::size_t dim,
                                     double center_spread, double stdev, std::uint64_t center_seed) {
    if (proportions.size() < 2) throw Error(ErrorKind::config, "need at least two class proportions");
    if (total < proportions.size()) throw Error(ErrorKind::config, "total smaller than class count");
    std::vector<std::size_t> counts = detail::largest_remainder(proportions, total);
    // Lift empty classes by taking from the largest one.
    for (auto& c : counts) {
        if (c == 0) {
            auto largest = std::max_element(counts.begin(), counts.end());
            *largest -= 1;
            c = 1;
        }
    }
    Rng rng(derive_seed(center_seed, {0xce47e5ULL}));
    BlobSpec spec;
    for (std::size_t c = 0; c < proportions.size(); ++c) {
        BlobClass cls;
        cls.center.resize(dim);
        for (auto& v : cls.center) v = center_spread * standard_normal(rng);
        cls.stdev = stdev;
        cls.count = counts[c];
        spec.classes.push_back(std::move(cls));
    }
    return spec;
}

struct LoadedCsv {
    Dataset dataset;
    std::vector<long long> original_labels;  // original_labels[k] was remapped to k
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view cell, T& out) {
    cell = trim(cell);
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace detail

inline LoadedCsv parse_csv(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t width = 0;
    std::size_t label_col = 0;
    std::vector<double> values;
    std::vector<long long> raw_labels;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::trim(line);
        if (view.empty()) continue;
        const auto cells = detail::split_commas(view);
        if (!have_header) {
            width = cells.size();
            auto it = std::find_if(cells.begin(), cells.end(),
                                   [](std::string_view c) { return detail::trim(c) == "label"; });
            if (it == cells.end()) throw Error(ErrorKind::parse, source + ": header has no 'label' column");
            if (width < 2) throw Error(ErrorKind::parse, source + ": header has no feature columns");
            label_col = static_cast<std::size_t>(it - cells.begin());
            have_header = true;
            continue;
        }
        const std::string where = source + ": row " + std::to_string(line_no);
        if (cells.size() != width) {
            throw Error(ErrorKind::parse, where + " has " + std::to_string(cells.size()) + " cells, expected " +
                                              std::to_string(width));
        }
        for (std::size_t j = 0; j < width; ++j) {
            if (j == label_col) {
                long long lab = 0;
                if (!detail::parse_number(cells[j], lab)) {
                    throw Error(ErrorKind::parse, where + ": label '" + std::string(cells[j]) + "' is not an integer");
                }
                raw_labels.push_back(lab);
            } else {
                double v = 0.0;
                if (!detail::parse_number(cells[j], v) || !std::isfinite(v)) {
                    throw Error(ErrorKind::parse,
                                where + ", column " + std::to_string(j) + ": non-numeric value '" +
                                    std::string(cells[j]) + "'");
                }
                values.push_back(v);
            }
        }
    }
    if (!have_header) throw Error(ErrorKind::parse, source + ": empty file");

    LoadedCsv out;
    std::vector<long long> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    out.original_labels = distinct;

    const std::size_t d = width - 1;
    auto& data = out.dataset;
    data.num_classes = static_cast<int>(distinct.size());
    data.features = Matrix(raw_labels.size(), d);
    std::copy(values.begin(), values.end(), data.features.data().begin());
    data.labels.reserve(raw_labels.size());
    for (long long lab : raw_labels) {
        data.labels.push_back(
            static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), lab) - distinct.begin()));
    }
    data.validate();
    return out;
}

inline LoadedCsv load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path);
    return parse_csv(in, path);
}

inline std::string format_double(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Writes the dataset with full round-trip precision.
inline void write_csv(const Dataset& data, std::ostream& out) {
    for (std::size_t j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.features.row(i)) out << format_double(v, 17) << ',';
        out << data.labels[i] << '\n';
    }
}

inline std::vector<Split> stratified_folds(const Dataset& data, std::size_t k_folds, std::uint64_t seed) {
    if (k_folds < 2) throw Error(ErrorKind::config, "k_folds must be >= 2");
    IndexList all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto members = detail::members_by_class(data, all);
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (members[c].size() < k_folds) {
            throw Error(ErrorKind::infeasible_stratification,
                        "class " + std::to_string(c) + " has " + std::to_string(members[c].size()) +
                            " samples, fewer than k_folds=" + std::to_string(k_folds));
        }
    }
    Rng rng(derive_seed(seed, {0xf01d5ULL}));
    std::vector<IndexList> fold_members(k_folds);
    std::size_t next_fold = 0;
    for (const auto& m : members) {
        IndexList shuffled = m;
        shuffle(std::span<std::size_t>(shuffled), rng);
        for (std::size_t idx : shuffled) {
            fold_members[next_fold].push_back(idx);
            next_fold = (next_fold + 1) % k_folds;
        }
    }
    std::vector<Split> folds(k_folds);
    for (std::size_t f = 0; f < k_folds; ++f) {
        folds[f].test = fold_members[f];
        std::sort(folds[f].test.begin(), folds[f].test.end());
        std::set_difference(all.begin(), all.end(), folds[f].test.begin(), folds[f].test.end(),
                            std::back_inserter(folds[f].train));
    }
    return folds;
}

// Single stratified holdout split; every class keeps at least one training sample.
inline Split stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error(ErrorKind::config, "test_fraction must lie in (0, 1)");
    }
    IndexList all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto members = detail::members_by_class(data, all);
    std::vector<double> weights;
    for (const auto& m : members) weights.push_back(static_cast<double>(m.size()));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
    auto test_counts = detail::largest_remainder(weights, n_test);
    Rng rng(derive_seed(seed, {0x5b117ULL}));
    Split split;
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (members[c].empty()) continue;
        const std::size_t take = std::min(test_counts[c], members[c].size() - 1);
        IndexList shuffled = members[c];
        shuffle(std::span<std::size_t>(shuffled), rng);
        split.test.insert(split.test.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(take));
        split.train.insert(split.train.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(take), shuffled.end());
    }
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

}  // namespace wavefuse
