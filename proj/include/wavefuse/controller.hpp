#pragma once

// Fusion controller: phase-shifted sinusoidal priors per strategy, an EMA
// performance trace per strategy, temperature softmax fusion, bounded
// normalization, annealed round parameters, epsilon exploration and
// budget apportionment. Also the alternating baseline schedule and the
// assembly of one round's batch from per-strategy quotas.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"
#include "wavefuse/learner.hpp"
#include "wavefuse/matrix.hpp"
#include "wavefuse/random.hpp"
#include "wavefuse/strategies.hpp"

namespace wavefuse {

struct ControllerConfig {
    double alpha0 = 0.3;
    double alpha_min = 0.02;
    double beta = 0.30;
    double tau0 = 0.7;
    double tau_min = 0.25;
    double eps0 = 0.10;
    double eps_min = 0.02;
    double weight_floor = 0.05;
    double weight_cap = 0.8;
    double dominance = 0.6;
    std::vector<Strategy> strategy_order{Strategy::bald, Strategy::badge, Strategy::entropy, Strategy::coreset};

    std::size_t num_strategies() const noexcept { return strategy_order.size(); }
    double upper_bound() const noexcept { return std::min(weight_cap, dominance); }

    void validate() const {
        auto fail = [](const std::string& key, const std::string& why) {
            throw Error(ErrorKind::config, "controller." + key + ": " + why);
        };
        const auto s = static_cast<double>(num_strategies());
        if (num_strategies() < 2) fail("strategy_order", "at least two strategies required");
        for (std::size_t i = 0; i < strategy_order.size(); ++i) {
            for (std::size_t j = i + 1; j < strategy_order.size(); ++j) {
                if (strategy_order[i] == strategy_order[j]) {
                    fail("strategy_order", "duplicate strategy '" + std::string(to_string(strategy_order[i])) + "'");
                }
            }
        }
        if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) fail("alpha0", "must lie in [0, 1]");
        if (!(alpha_min >= 0.0 && alpha_min <= alpha0)) fail("alpha_min", "must lie in [0, alpha0]");
        if (!(beta >= 0.0 && beta <= 1.0)) fail("beta", "must lie in [0, 1]");
        if (!(tau0 > 0.0) || !std::isfinite(tau0)) fail("tau0", "must be > 0");
        if (!(tau_min > 0.0) || !std::isfinite(tau_min)) fail("tau_min", "must be > 0");
        if (!(eps0 >= 0.0 && eps0 <= 1.0)) fail("eps0", "must lie in [0, 1]");
        if (!(eps_min >= 0.0 && eps_min <= 1.0)) fail("eps_min", "must lie in [0, 1]");
        if (!(weight_floor >= 0.0) || weight_floor * s > 1.0 + 1e-12) {
            fail("weight_floor", "must satisfy 0 <= weight_floor * S <= 1");
        }
        if (!(weight_cap <= 1.0) || weight_cap * s < 1.0 - 1e-12) {
            fail("weight_cap", "must satisfy weight_cap * S >= 1 and weight_cap <= 1");
        }
        if (!(dominance >= weight_floor && dominance <= weight_cap)) {
            fail("dominance", "must lie in [weight_floor, weight_cap]");
        }
        if (dominance * s < 1.0 - 1e-12) fail("dominance", "must satisfy dominance * S >= 1");
    }
};

struct ControllerState {
    std::vector<double> omega;  // EMA trace per strategy
    std::size_t t = 0;

    friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct Quotas {
    std::vector<std::size_t> per_strategy;
    std::size_t exploration = 0;

    std::size_t total() const noexcept {
        return std::accumulate(per_strategy.begin(), per_strategy.end(), exploration);
    }
    friend bool operator==(const Quotas&, const Quotas&) = default;
};

struct RoundParameters {
    double alpha = 0.0;
    double tau = 1.0;
    double eps = 0.0;
};

// psi_s(t) = sin(2 pi t / T + 2 pi s / S) + 1 for s = 1..S.
inline std::vector<double> sinusoidal_prior(std::size_t t, std::size_t rounds, std::size_t num_strategies) {
    if (rounds < 1) throw Error(ErrorKind::config, "rounds must be >= 1");
    std::vector<double> psi(num_strategies);
    const double two_pi = 2.0 * std::numbers::pi;
    // Reduce t modulo T first so psi(t) and psi(t + T) are bitwise equal.
    const double phase = two_pi * static_cast<double>(t % rounds) / static_cast<double>(rounds);
    for (std::size_t s = 1; s <= num_strategies; ++s) {
        const double offset = two_pi * static_cast<double>(s) / static_cast<double>(num_strategies);
        psi[s - 1] = std::clamp(std::sin(phase + offset) + 1.0, 0.0, 2.0);
    }
    return psi;
}

// EMA update for strategies flagged active; inactive traces carry over.
inline ControllerState update_performance_trace(const ControllerState& state, std::span<const double> observed,
                                                const std::vector<bool>& active, double beta) {
    if (observed.size() != state.omega.size() || active.size() != state.omega.size()) {
        throw Error(ErrorKind::shape, "performance vectors must have one entry per strategy");
    }
    ControllerState next = state;
    next.t = state.t + 1;
    for (std::size_t s = 0; s < state.omega.size(); ++s) {
        if (active[s]) next.omega[s] = beta * observed[s] + (1.0 - beta) * state.omega[s];
    }
    return next;
}

inline std::vector<double> softmax(std::span<const double> values, double temperature) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / temperature;
    softmax_inplace(out);
    return out;
}

// alpha * psi + (1 - alpha) * softmax(omega / tau), not yet normalized.
inline std::vector<double> fuse_weights(std::span<const double> psi, std::span<const double> omega, double alpha,
                                        double tau) {
    if (psi.size() != omega.size()) throw Error(ErrorKind::shape, "prior and trace lengths differ");
    if (!(tau > 0.0)) throw Error(ErrorKind::config, "temperature must be > 0");
    const auto soft = softmax(omega, tau);
    std::vector<double> raw(psi.size());
    for (std::size_t s = 0; s < raw.size(); ++s) raw[s] = alpha * psi[s] + (1.0 - alpha) * soft[s];
    return raw;
}

// Normalize to the simplex, then water-fill: every entry becomes
// clamp(lambda * w_s, floor, min(cap, dominance)) for one common scale
// lambda chosen so the result sums to 1. If even an unbounded lambda leaves
// mass over (entries with zero weight stuck at floor), those zero entries
// share the remainder evenly.
inline std::vector<double> normalize_clamp(std::span<const double> raw, double floor, double cap, double dominance) {
    const std::size_t n = raw.size();
    double sum = 0.0;
    for (double v : raw) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::degenerate_weights, "raw weights must be finite and >= 0");
        sum += v;
    }
    if (n == 0 || !(sum > 0.0)) throw Error(ErrorKind::degenerate_weights, "raw weights sum to zero");
    const double hi = std::min(cap, dominance);
    const double lo = floor;
    if (lo * static_cast<double>(n) > 1.0 + 1e-12 || hi * static_cast<double>(n) < 1.0 - 1e-12 || lo > hi) {
        throw Error(ErrorKind::config, "weight bounds admit no normalized vector");
    }
    std::vector<double> base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = raw[i] / sum;

    std::vector<double> w(n);
    std::size_t positive = 0;
    for (double v : base) positive += v > 0.0 ? 1 : 0;
    if (positive == n && static_cast<double>(n) * hi <= 1.0) return std::vector<double>(n, hi);
    if (static_cast<double>(positive) * hi + static_cast<double>(n - positive) * lo <= 1.0) {
        const double share = (1.0 - static_cast<double>(positive) * hi) / static_cast<double>(n - positive);
        for (std::size_t i = 0; i < n; ++i) w[i] = base[i] > 0.0 ? hi : share;
        return w;
    }

    // The clamped total is piecewise linear in lambda with kinks at lo/w and
    // hi/w; find the segment where it crosses 1 and solve there.
    std::vector<double> kinks;
    for (double v : base) {
        if (v > 0.0) {
            kinks.push_back(lo / v);
            kinks.push_back(hi / v);
        }
    }
    std::sort(kinks.begin(), kinks.end());
    auto total_at = [&](double lambda) {
        double t = 0.0;
        for (double v : base) t += std::clamp(lambda * v, lo, hi);
        return t;
    };
    double left = 0.0;
    for (double k : kinks) {
        if (total_at(k) >= 1.0) break;
        left = k;
    }
    const auto next = std::upper_bound(kinks.begin(), kinks.end(), left);
    const double right = next == kinks.end() ? left + 1.0 : *next;
    const double mid = 0.5 * (left + right);
    double pinned = 0.0, slope = 0.0;
    for (double v : base) {
        const double x = mid * v;
        if (x <= lo) {
            pinned += lo;
        } else if (x >= hi) {
            pinned += hi;
        } else {
            slope += v;
        }
    }
    const double lambda = slope > 0.0 ? (1.0 - pinned) / slope : left;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = mid * base[i];
        w[i] = x <= lo ? lo : x >= hi ? hi : std::clamp(lambda * base[i], lo, hi);
    }
    return w;
}

// Reserve round(eps * b) slots for exploration, then give each strategy
// floor((b - e) * w_s) and hand leftover slots out by largest fractional
// part (ties to the lower strategy index).
inline Quotas apportion_budget(std::span<const double> weights, std::size_t b, double eps) {
    if (b < 1) throw Error(ErrorKind::budget, "round budget must be >= 1");
    if (!(eps >= 0.0 && eps <= 1.0)) throw Error(ErrorKind::config, "exploration rate must lie in [0, 1]");
    Quotas q;
    q.exploration = static_cast<std::size_t>(std::llround(eps * static_cast<double>(b)));
    q.per_strategy = detail::largest_remainder(weights, b - q.exploration);
    return q;
}

// Linear schedules from the initial value at t = 1 to the floor at t = T.
inline RoundParameters anneal(const ControllerConfig& config, std::size_t t, std::size_t rounds) {
    const double progress =
        rounds <= 1 ? 0.0 : std::clamp((static_cast<double>(t) - 1.0) / (static_cast<double>(rounds) - 1.0), 0.0, 1.0);
    auto lerp = [progress](double from, double to) { return from + (to - from) * progress; };
    return {lerp(config.alpha0, config.alpha_min), lerp(config.tau0, config.tau_min), lerp(config.eps0, config.eps_min)};
}

struct Attribution {
    std::vector<double> omega;
    std::vector<bool> active;
};

// Credit each strategy with the round's metric change scaled by its budget
// share times S: omega_s = clip(m_prev + S (q_s / b)(m_curr - m_prev), 0, 1).
inline Attribution attribute_performance(double m_prev, double m_curr, const Quotas& quotas, std::size_t b) {
    if (b < 1) throw Error(ErrorKind::budget, "round budget must be >= 1");
    const auto s = static_cast<double>(quotas.per_strategy.size());
    Attribution out;
    for (std::size_t q : quotas.per_strategy) {
        const double share = static_cast<double>(q) / static_cast<double>(b);
        out.omega.push_back(std::clamp(m_prev + s * share * (m_curr - m_prev), 0.0, 1.0));
        out.active.push_back(q > 0);
    }
    return out;
}

// One-hot weights cycling through the strategy order, starting at t = 1.
inline std::vector<double> alternating_schedule(std::size_t t, std::size_t num_strategies) {
    if (t < 1) throw Error(ErrorKind::config, "rounds are numbered from 1");
    std::vector<double> w(num_strategies, 0.0);
    w[(t - 1) % num_strategies] = 1.0;
    return w;
}

// Everything the strategies might need about the current unlabeled pool, row
// aligned with PoolState::unlabeled. Only the fields used by strategies with a
// nonzero quota need to be filled.
struct AcquisitionInputs {
    Matrix probs;           // |U| x K, dropout off
    McStack mc;             // M x |U| x K
    Matrix grad_embedding;  // |U| x K*D
    Matrix labeled_embedding;    // |L| x D
    Matrix unlabeled_embedding;  // |U| x D
};

struct BatchSelection {
    IndexList chosen;                   // dataset indices in pick order
    std::vector<SelectionResult> parts;  // per strategy, dataset indices, execution order
    IndexList exploration;
};

// Runs one strategy over the pool positions not yet taken this round.
inline SelectionResult run_strategy(Strategy strategy, std::size_t quota, const AcquisitionInputs& in,
                                    std::span<const std::size_t> remaining, std::span<const std::size_t> taken,
                                    std::uint64_t seed) {
    auto need_rows = [&](std::size_t rows, const char* what) {
        if (rows < remaining.size() + taken.size()) {
            throw Error(ErrorKind::shape, std::string("acquisition inputs lack ") + what);
        }
    };
    auto pick_scores = [&](const ScoreVector& all) {
        ScoreVector sub;
        sub.reserve(remaining.size());
        for (auto pos : remaining) sub.push_back(all[pos]);
        return top_k(sub, remaining, quota, strategy);
    };
    auto map_back = [&](SelectionResult r) {
        for (auto& c : r.chosen) c = remaining[c];
        return r;
    };
    switch (strategy) {
        case Strategy::entropy:
            need_rows(in.probs.rows(), "probabilities");
            return pick_scores(entropy_scores(in.probs));
        case Strategy::margin:
            need_rows(in.probs.rows(), "probabilities");
            return pick_scores(margin_scores(in.probs));
        case Strategy::bald:
            need_rows(in.mc.samples(), "an MC-dropout stack");
            return pick_scores(bald_scores(in.mc));
        case Strategy::badge:
            need_rows(in.grad_embedding.rows(), "gradient embeddings");
            return map_back(badge_select(in.grad_embedding.gather(remaining), quota, seed));
        case Strategy::coreset: {
            need_rows(in.unlabeled_embedding.rows(), "unlabeled embeddings");
            Matrix centers(in.labeled_embedding.rows() + taken.size(), in.unlabeled_embedding.cols());
            for (std::size_t i = 0; i < in.labeled_embedding.rows(); ++i) {
                std::copy_n(in.labeled_embedding.row(i).begin(), centers.cols(), centers.row(i).begin());
            }
            for (std::size_t i = 0; i < taken.size(); ++i) {
                std::copy_n(in.unlabeled_embedding.row(taken[i]).begin(), centers.cols(),
                            centers.row(in.labeled_embedding.rows() + i).begin());
            }
            return map_back(kcenter_select(centers, in.unlabeled_embedding.gather(remaining), quota));
        }
        case Strategy::random:
            return map_back(random_select(remaining.size(), quota, seed));
    }
    throw Error(ErrorKind::config, "unknown strategy");
}

// Strategies run in descending quota order (ties keep the given order), each
// over the pool minus what earlier strategies took this round; exploration
// picks are uniform over what is left and run last.
inline BatchSelection select_round_batch(const PoolState& pool, std::span<const Strategy> strategies,
                                         const Quotas& quotas, const AcquisitionInputs& inputs, std::uint64_t seed) {
    if (quotas.per_strategy.size() != strategies.size()) {
        throw Error(ErrorKind::shape, "one quota per strategy required");
    }
    const std::size_t n = pool.unlabeled.size();
    const std::size_t b = quotas.total();
    if (b > n) {
        throw Error(ErrorKind::budget, "round budget " + std::to_string(b) + " exceeds unlabeled pool of " +
                                           std::to_string(n));
    }
    std::vector<std::size_t> order(strategies.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
        return quotas.per_strategy[a] > quotas.per_strategy[c];
    });

    std::vector<char> used(n, 0);
    IndexList taken;  // pool positions, pick order
    auto remaining_positions = [&] {
        IndexList rest;
        rest.reserve(n - taken.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!used[i]) rest.push_back(i);
        }
        return rest;
    };

    BatchSelection out;
    for (std::size_t slot : order) {
        const std::size_t quota = quotas.per_strategy[slot];
        if (quota == 0) continue;
        const auto strategy = strategies[slot];
        const auto rest = remaining_positions();
        auto part = run_strategy(strategy, quota, inputs, rest, taken,
                                 derive_seed(seed, {static_cast<std::uint64_t>(strategy) + 1}));
        for (auto pos : part.chosen) {
            used[pos] = 1;
            taken.push_back(pos);
            out.chosen.push_back(pool.unlabeled[pos]);
        }
        for (auto& c : part.chosen) c = pool.unlabeled[c];
        out.parts.push_back(std::move(part));
    }
    if (quotas.exploration > 0) {
        const auto rest = remaining_positions();
        const auto pick = random_select(rest.size(), quotas.exploration, derive_seed(seed, {0xe4910eULL}));
        for (auto p : pick.chosen) {
            used[rest[p]] = 1;
            taken.push_back(rest[p]);
            out.chosen.push_back(pool.unlabeled[rest[p]]);
            out.exploration.push_back(pool.unlabeled[rest[p]]);
        }
    }
    return out;
}

// Per-round plan produced by the controller.
struct RoundPlan {
    std::size_t t = 0;
    RoundParameters params;
    std::vector<double> psi;
    std::vector<double> raw;
    std::vector<double> weights;
    Quotas quotas;
};

// Owns the EMA traces of one run and turns them into round plans.
class FusionController {
public:
    FusionController(ControllerConfig config, std::size_t rounds, double initial_metric)
        : config_(std::move(config)), rounds_(rounds) {
        config_.validate();
        if (rounds_ < 1) throw Error(ErrorKind::config, "rounds must be >= 1");
        state_.omega.assign(config_.num_strategies(), initial_metric);
    }

    const ControllerConfig& config() const noexcept { return config_; }
    const ControllerState& state() const noexcept { return state_; }

    RoundPlan plan(std::size_t t, std::size_t b) const {
        RoundPlan plan;
        plan.t = t;
        plan.params = anneal(config_, t, rounds_);
        plan.psi = sinusoidal_prior(t, rounds_, config_.num_strategies());
        plan.raw = fuse_weights(plan.psi, state_.omega, plan.params.alpha, plan.params.tau);
        try {
            plan.weights = normalize_clamp(plan.raw, config_.weight_floor, config_.weight_cap, config_.dominance);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::degenerate_weights) throw;
            const std::vector<double> uniform(config_.num_strategies(), 1.0);
            plan.weights = normalize_clamp(uniform, config_.weight_floor, config_.weight_cap, config_.dominance);
        }
        plan.quotas = apportion_budget(plan.weights, b, plan.params.eps);
        return plan;
    }

    Attribution observe(double m_prev, double m_curr, const Quotas& quotas, std::size_t b) {
        auto attribution = attribute_performance(m_prev, m_curr, quotas, b);
        state_ = update_performance_trace(state_, attribution.omega, attribution.active, config_.beta);
        return attribution;
    }

private:
    ControllerConfig config_;
    std::size_t rounds_;
    ControllerState state_;
};

}  // namespace wavefuse
