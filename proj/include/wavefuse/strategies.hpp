#pragma once

// Acquisition scores and batch selectors.
//
// Selectors work on row positions of the matrices they are given; callers map
// positions back to dataset indices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"
#include "wavefuse/learner.hpp"
#include "wavefuse/matrix.hpp"
#include "wavefuse/random.hpp"

namespace wavefuse {

enum class Strategy { bald, badge, entropy, coreset, margin, random };

inline constexpr std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::bald: return "bald";
        case Strategy::badge: return "badge";
        case Strategy::entropy: return "entropy";
        case Strategy::coreset: return "coreset";
        case Strategy::margin: return "margin";
        case Strategy::random: return "random";
    }
    return "unknown";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
    for (auto s : {Strategy::bald, Strategy::badge, Strategy::entropy, Strategy::coreset, Strategy::margin,
                   Strategy::random}) {
        if (to_string(s) == name) return s;
    }
    return std::nullopt;
}

using ScoreVector = std::vector<double>;

struct SelectionResult {
    IndexList chosen;  // in selection order
    Strategy strategy = Strategy::random;
    double covering_radius = std::numeric_limits<double>::quiet_NaN();  // k-center only
};

inline constexpr double bald_clamp_tolerance = 1e-9;

inline double entropy(std::span<const double> p) noexcept {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

inline ScoreVector entropy_scores(const Matrix& probs) {
    ScoreVector scores(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) scores[i] = entropy(probs.row(i));
    return scores;
}

// Negative gap between the two largest probabilities; higher is more uncertain.
inline ScoreVector margin_scores(const Matrix& probs) {
    if (probs.cols() < 2) throw Error(ErrorKind::shape, "margin needs at least two classes");
    ScoreVector scores(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double first = -1.0, second = -1.0;
        for (double v : probs.row(i)) {
            if (v > first) {
                second = first;
                first = v;
            } else if (v > second) {
                second = v;
            }
        }
        scores[i] = -(first - second);
    }
    return scores;
}

// Mutual information between prediction and dropout mask: entropy of the mean
// prediction minus the mean per-pass entropy.
inline ScoreVector bald_scores(const McStack& stack) {
    const std::size_t m = stack.passes();
    ScoreVector scores(stack.samples());
    std::vector<double> mean(stack.classes());
    for (std::size_t i = 0; i < stack.samples(); ++i) {
        std::fill(mean.begin(), mean.end(), 0.0);
        double mean_entropy = 0.0;
        for (std::size_t pass = 0; pass < m; ++pass) {
            const auto r = stack.row(pass, i);
            for (std::size_t c = 0; c < r.size(); ++c) mean[c] += r[c];
            mean_entropy += entropy(r);
        }
        for (auto& v : mean) v /= static_cast<double>(m);
        double score = entropy(mean) - mean_entropy / static_cast<double>(m);
        if (score < 0.0 && score >= -bald_clamp_tolerance) score = 0.0;
        scores[i] = score;
    }
    return scores;
}

// Image-level BALD for segmentation: the stack holds M x U x K pixel
// probabilities of a single image; returns the spatial mean of pixel scores.
inline double bald_pixelwise(const McStack& pixel_stack) {
    if (pixel_stack.samples() < 1) throw Error(ErrorKind::shape, "pixelwise BALD needs at least one pixel");
    const auto per_pixel = bald_scores(pixel_stack);
    return std::accumulate(per_pixel.begin(), per_pixel.end(), 0.0) / static_cast<double>(per_pixel.size());
}

// The k highest scores, ties to the lower candidate index. `candidates` is
// aligned with `scores`; returned indices are candidate values.
inline SelectionResult top_k(std::span<const double> scores, std::span<const std::size_t> candidates, std::size_t k,
                             Strategy strategy = Strategy::entropy) {
    if (scores.size() != candidates.size()) throw Error(ErrorKind::shape, "scores and candidates differ in length");
    if (k > candidates.size()) {
        throw Error(ErrorKind::budget, "k=" + std::to_string(k) + " exceeds " + std::to_string(candidates.size()) +
                                           " candidates");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return candidates[a] < candidates[b];
                      });
    SelectionResult out;
    out.strategy = strategy;
    for (std::size_t i = 0; i < k; ++i) out.chosen.push_back(candidates[order[i]]);
    return out;
}

// Max over pool rows of the distance to the nearest center row.
inline double covering_radius(const Matrix& centers, const Matrix& pool) {
    if (pool.rows() == 0) return 0.0;
    if (centers.rows() == 0) return std::numeric_limits<double>::infinity();
    double radius = 0.0;
    for (std::size_t i = 0; i < pool.rows(); ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.rows(); ++c) {
            nearest = std::min(nearest, squared_distance(pool.row(i), centers.row(c)));
        }
        radius = std::max(radius, nearest);
    }
    return std::sqrt(radius);
}

// Greedy farthest-first traversal for k-center: each pick maximizes the
// distance to the nearest of the labeled points and earlier picks. With no
// labeled points the first pick is position 0. Ties go to the lower position.
inline SelectionResult kcenter_select(const Matrix& labeled_emb, const Matrix& unlabeled_emb, std::size_t b) {
    const std::size_t n = unlabeled_emb.rows();
    if (b > n) {
        throw Error(ErrorKind::budget, "budget " + std::to_string(b) + " exceeds pool of " + std::to_string(n));
    }
    if (!labeled_emb.empty() && n > 0 && labeled_emb.cols() != unlabeled_emb.cols()) {
        throw Error(ErrorKind::shape, "labeled and unlabeled embeddings differ in width");
    }
    SelectionResult out;
    out.strategy = Strategy::coreset;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < labeled_emb.rows(); ++c) {
            nearest[i] = std::min(nearest[i], squared_distance(unlabeled_emb.row(i), labeled_emb.row(c)));
        }
    }
    auto absorb = [&](std::size_t pick) {
        out.chosen.push_back(pick);
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(unlabeled_emb.row(i), unlabeled_emb.row(pick)));
        }
        nearest[pick] = 0.0;
    };
    for (std::size_t step = 0; step < b; ++step) {
        if (step == 0 && labeled_emb.rows() == 0) {
            absorb(0);
            continue;
        }
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (nearest[i] > 0.0 && (best == n || nearest[i] > nearest[best])) best = i;
        }
        if (best == n) {
            // Every remaining point coincides with a center; take the lowest unpicked.
            for (std::size_t i = 0; i < n && best == n; ++i) {
                if (std::find(out.chosen.begin(), out.chosen.end(), i) == out.chosen.end()) best = i;
            }
        }
        absorb(best);
    }
    double radius = 0.0;
    for (double d : nearest) radius = std::max(radius, d);
    out.covering_radius = n == 0 ? 0.0 : std::sqrt(radius);
    return out;
}

// k-means++ (D^2) seeding used as a batch selector: the first center is
// uniform, each further center is drawn with probability proportional to the
// squared distance to its nearest chosen center. If all remaining mass is
// zero (duplicates of chosen points) the rest is filled uniformly at random.
inline SelectionResult kmeanspp_select(const Matrix& embeddings, std::size_t b, std::uint64_t seed,
                                       Strategy strategy = Strategy::badge) {
    const std::size_t n = embeddings.rows();
    if (b > n) {
        throw Error(ErrorKind::budget, "budget " + std::to_string(b) + " exceeds pool of " + std::to_string(n));
    }
    SelectionResult out;
    out.strategy = strategy;
    if (b == 0) return out;
    Rng rng(derive_seed(seed, {0x6b6d7070ULL}));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    auto absorb = [&](std::size_t pick) {
        out.chosen.push_back(pick);
        taken[pick] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(embeddings.row(i), embeddings.row(pick)));
        }
    };
    absorb(uniform_index(rng, n));
    while (out.chosen.size() < b) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i]) total += d2[i];
        }
        if (!(total > 0.0)) {
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i]) rest.push_back(i);
            }
            absorb(rest[uniform_index(rng, rest.size())]);
            continue;
        }
        const double target = uniform01(rng) * total;
        double cumulative = 0.0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i] || d2[i] <= 0.0) continue;
            cumulative += d2[i];
            pick = i;
            if (cumulative > target) break;
        }
        absorb(pick);
    }
    return out;
}

inline SelectionResult badge_select(const Matrix& grad_embeddings, std::size_t b, std::uint64_t seed) {
    return kmeanspp_select(grad_embeddings, b, seed, Strategy::badge);
}

// Uniform sample of b positions out of [0, n) without replacement.
inline SelectionResult random_select(std::size_t n, std::size_t b, std::uint64_t seed) {
    if (b > n) {
        throw Error(ErrorKind::budget, "budget " + std::to_string(b) + " exceeds pool of " + std::to_string(n));
    }
    Rng rng(derive_seed(seed, {0x4a4dULL}));
    SelectionResult out;
    out.strategy = Strategy::random;
    out.chosen = sample_without_replacement(n, b, rng);
    return out;
}

}  // namespace wavefuse
