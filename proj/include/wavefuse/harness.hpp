#pragma once

// The active-learning loop for every method, plus multi-run aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wavefuse/controller.hpp"
#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"
#include "wavefuse/learner.hpp"
#include "wavefuse/metrics.hpp"
#include "wavefuse/stats.hpp"
#include "wavefuse/strategies.hpp"

namespace wavefuse {

enum class MethodKind { single, alternating, wavefuse };

struct Method {
    MethodKind kind = MethodKind::single;
    Strategy strategy = Strategy::random;  // single-strategy methods only

    std::string id() const {
        switch (kind) {
            case MethodKind::alternating: return "alternating";
            case MethodKind::wavefuse: return "wavefuse";
            case MethodKind::single: break;
        }
        return std::string(to_string(strategy));
    }

    static Method parse(std::string_view name) {
        if (name == "wavefuse") return {MethodKind::wavefuse, Strategy::random};
        if (name == "alternating") return {MethodKind::alternating, Strategy::random};
        if (auto s = parse_strategy(name)) return {MethodKind::single, *s};
        throw Error(ErrorKind::config, "unknown method '" + std::string(name) + "'");
    }

    friend bool operator==(const Method&, const Method&) = default;
};

enum class MetricKind { accuracy, f1 };

inline std::string_view to_string(MetricKind m) noexcept { return m == MetricKind::accuracy ? "accuracy" : "f1"; }

inline MetricKind parse_metric(std::string_view name) {
    if (name == "accuracy") return MetricKind::accuracy;
    if (name == "f1") return MetricKind::f1;
    throw Error(ErrorKind::config, "unknown metric '" + std::string(name) + "' (expected accuracy or f1)");
}

struct LoopConfig {
    std::size_t rounds = 10;
    std::size_t budget = 40;
    std::size_t init_size = 40;
    std::size_t mc_passes = 10;
    MetricKind metric = MetricKind::accuracy;
    bool standardize = true;

    void validate() const {
        if (rounds < 1) throw Error(ErrorKind::config, "loop.rounds must be >= 1");
        if (budget < 1) throw Error(ErrorKind::config, "loop.budget must be >= 1");
        if (init_size < 1) throw Error(ErrorKind::config, "loop.init_size must be >= 1");
        if (mc_passes < 2) throw Error(ErrorKind::config, "model.mc_passes must be >= 2");
    }
};

struct ExperimentSettings {
    TrainConfig train;
    ControllerConfig controller;
    LoopConfig loop;
};

struct EvalMetrics {
    double accuracy = 0.0;
    double f1 = 0.0;

    double get(MetricKind m) const noexcept { return m == MetricKind::accuracy ? accuracy : f1; }
};

struct RoundRecord {
    std::size_t round = 0;
    std::size_t n_labeled = 0;
    std::vector<Strategy> strategies;
    std::vector<double> psi;             // WaveFuse only
    std::vector<double> weights;
    std::vector<std::size_t> quotas;
    std::size_t exploration = 0;
    RoundParameters params;              // WaveFuse only
    std::vector<double> omega_used;      // WaveFuse only; trace fused into this round's weights
    std::vector<double> omega_observed;  // WaveFuse only; NaN for inactive strategies
    std::vector<double> omega_trace;     // WaveFuse only; trace after this round's update
    IndexList selected;                  // dataset indices in pick order
    double coreset_radius = std::numeric_limits<double>::quiet_NaN();
    EvalMetrics metrics;
};

struct RunResult {
    std::string method;
    std::uint64_t seed = 0;
    std::size_t fold = 0;
    EvalMetrics initial;  // model trained on the initial labeled set
    IndexList initial_labeled;
    std::vector<RoundRecord> rounds;
    bool stopped_early = false;

    EvalMetrics final_metrics() const { return rounds.empty() ? initial : rounds.back().metrics; }
};

namespace detail {

// Z-score features with statistics of the training split only.
inline Dataset standardized(const Dataset& data, const IndexList& train) {
    Dataset out = data;
    const std::size_t d = data.dim();
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (auto i : train) mean += data.features(i, j);
        mean /= static_cast<double>(train.size());
        double var = 0.0;
        for (auto i : train) var += (data.features(i, j) - mean) * (data.features(i, j) - mean);
        const double sd = std::sqrt(var / static_cast<double>(train.size()));
        const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
        for (std::size_t i = 0; i < data.size(); ++i) out.features(i, j) = (data.features(i, j) - mean) * scale;
    }
    return out;
}

inline EvalMetrics evaluate(const MlpParams& params, const Dataset& data, const IndexList& test) {
    const auto probs = predict_proba(params, data.features.gather(test));
    const auto preds = predict_labels(probs);
    std::vector<int> labels;
    labels.reserve(test.size());
    for (auto i : test) labels.push_back(data.labels[i]);
    return {accuracy(preds, labels), f1_score(preds, labels, data.num_classes)};
}

inline void check_isolation(const PoolState& pool, const IndexList& test) {
    for (const IndexList* side : {&pool.labeled, &pool.unlabeled}) {
        IndexList both;
        std::set_intersection(side->begin(), side->end(), test.begin(), test.end(), std::back_inserter(both));
        if (!both.empty()) {
            throw Error(ErrorKind::stale_selection, "test index " + std::to_string(both.front()) + " entered the pool");
        }
    }
}

enum : std::uint64_t { tag_init = 1, tag_train = 2, tag_select = 3, tag_mc = 4 };

}  // namespace detail

inline AcquisitionInputs acquisition_inputs(const MlpParams& model, const Dataset& data, const PoolState& pool,
                                            std::span<const Strategy> strategies, const Quotas& quotas,
                                            std::size_t mc_passes, std::uint64_t mc_seed) {
    bool need_probs = false, need_mc = false, need_grad = false, need_emb = false;
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        if (quotas.per_strategy[s] == 0) continue;
        switch (strategies[s]) {
            case Strategy::entropy:
            case Strategy::margin: need_probs = true; break;
            case Strategy::bald: need_mc = true; break;
            case Strategy::badge: need_grad = true; break;
            case Strategy::coreset: need_emb = true; break;
            case Strategy::random: break;
        }
    }
    AcquisitionInputs in;
    if (!(need_probs || need_mc || need_grad || need_emb)) return in;
    const Matrix unlabeled = data.features.gather(pool.unlabeled);
    if (need_probs || need_grad) in.probs = predict_proba(model, unlabeled);
    if (need_mc) in.mc = mc_dropout_predict(model, unlabeled, mc_passes, mc_seed);
    if (need_grad || need_emb) in.unlabeled_embedding = penultimate_embeddings(model, unlabeled);
    if (need_grad) in.grad_embedding = gradient_embeddings_from(in.probs, in.unlabeled_embedding);
    if (need_emb) in.labeled_embedding = penultimate_embeddings(model, data.features.gather(pool.labeled));
    return in;
}

// Per round: select a batch with the current model, grow the labeled set,
// retrain from scratch with a round-derived seed, evaluate on the held-out
// split, and (WaveFuse) feed the metric change back into the controller.
inline RunResult run_active_learning(const Dataset& raw_data, const Split& split, const Method& method,
                                     const ExperimentSettings& settings, std::uint64_t seed, std::size_t fold = 0) {
    raw_data.validate();
    settings.loop.validate();
    settings.train.validate();
    if (method.kind != MethodKind::single) settings.controller.validate();
    if (split.train.empty() || split.test.empty()) throw Error(ErrorKind::config, "split needs train and test samples");

    const auto& loop = settings.loop;
    const Dataset data = loop.standardize ? detail::standardized(raw_data, split.train) : raw_data;
    auto round_seed = [&](std::uint64_t tag, std::size_t t) { return derive_seed(seed, {fold, t, tag}); };

    RunResult result;
    result.method = method.id();
    result.seed = seed;
    result.fold = fold;

    PoolState pool = stratified_init(data, split.train, loop.init_size, round_seed(detail::tag_init, 0));
    detail::check_isolation(pool, split.test);
    result.initial_labeled = pool.labeled;

    auto train_round = [&](std::size_t t) {
        TrainConfig cfg = settings.train;
        cfg.seed = round_seed(detail::tag_train, t);
        return train(data, pool.labeled, cfg);
    };
    MlpParams model = train_round(0);
    result.initial = detail::evaluate(model, data, split.test);

    std::vector<Strategy> strategies;
    switch (method.kind) {
        case MethodKind::single: strategies = {method.strategy}; break;
        case MethodKind::alternating:
        case MethodKind::wavefuse: strategies = settings.controller.strategy_order; break;
    }
    std::optional<FusionController> controller;
    if (method.kind == MethodKind::wavefuse) {
        controller.emplace(settings.controller, loop.rounds, result.initial.get(loop.metric));
    }

    double previous_metric = result.initial.get(loop.metric);
    for (std::size_t t = 1; t <= loop.rounds; ++t) {
        if (pool.unlabeled.empty()) {
            result.stopped_early = true;
            break;
        }
        const std::size_t b = std::min(loop.budget, pool.unlabeled.size());
        RoundRecord record;
        record.round = t;
        record.strategies = strategies;
        Quotas quotas;
        switch (method.kind) {
            case MethodKind::single:
                record.weights = {1.0};
                quotas.per_strategy = {b};
                break;
            case MethodKind::alternating:
                record.weights = alternating_schedule(t, strategies.size());
                quotas = apportion_budget(record.weights, b, 0.0);
                break;
            case MethodKind::wavefuse: {
                record.omega_used = controller->state().omega;
                auto plan = controller->plan(t, b);
                record.psi = std::move(plan.psi);
                record.weights = std::move(plan.weights);
                record.params = plan.params;
                quotas = std::move(plan.quotas);
                break;
            }
        }
        record.quotas = quotas.per_strategy;
        record.exploration = quotas.exploration;

        const auto inputs = acquisition_inputs(model, data, pool, strategies, quotas, loop.mc_passes,
                                               round_seed(detail::tag_mc, t));
        const auto batch = select_round_batch(pool, strategies, quotas, inputs, round_seed(detail::tag_select, t));
        for (const auto& part : batch.parts) {
            if (part.strategy == Strategy::coreset) record.coreset_radius = part.covering_radius;
        }
        record.selected = batch.chosen;
        pool = update_pools(pool, batch.chosen);
        detail::check_isolation(pool, split.test);
        record.n_labeled = pool.labeled.size();

        model = train_round(t);
        record.metrics = detail::evaluate(model, data, split.test);
        const double current = record.metrics.get(loop.metric);
        if (controller) {
            const auto attribution = controller->observe(previous_metric, current, quotas, b);
            for (std::size_t s = 0; s < strategies.size(); ++s) {
                record.omega_observed.push_back(attribution.active[s] ? attribution.omega[s]
                                                                      : std::numeric_limits<double>::quiet_NaN());
            }
            record.omega_trace = controller->state().omega;
        }
        previous_metric = current;
        result.rounds.push_back(std::move(record));
    }
    if (result.rounds.size() < loop.rounds) result.stopped_early = true;
    return result;
}

struct SummaryRow {
    std::string method;
    std::size_t round = 0;
    MetricKind metric = MetricKind::accuracy;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n_runs = 0;
    bool single_run = false;  // std is reported as 0 when only one run exists
};

// Mean and sample std of each metric per method and round, across runs.
inline std::vector<SummaryRow> aggregate_runs(std::span<const RunResult> results) {
    std::vector<std::string> methods;
    std::map<std::string, std::vector<const RunResult*>> by_method;
    for (const auto& r : results) {
        if (!by_method.contains(r.method)) methods.push_back(r.method);
        by_method[r.method].push_back(&r);
    }
    std::vector<SummaryRow> rows;
    for (const auto& method : methods) {
        const auto& runs = by_method[method];
        const std::size_t n_rounds = runs.front()->rounds.size();
        for (const auto* run : runs) {
            if (run->rounds.size() != n_rounds) {
                throw Error(ErrorKind::aggregation, "runs of method '" + method + "' have different round counts");
            }
            for (std::size_t i = 0; i < n_rounds; ++i) {
                if (run->rounds[i].round != runs.front()->rounds[i].round) {
                    throw Error(ErrorKind::aggregation, "runs of method '" + method + "' have misaligned rounds");
                }
            }
        }
        for (std::size_t i = 0; i < n_rounds; ++i) {
            for (auto metric : {MetricKind::accuracy, MetricKind::f1}) {
                std::vector<double> values;
                for (const auto* run : runs) values.push_back(run->rounds[i].metrics.get(metric));
                // Fixed summation order keeps the result independent of run order.
                std::sort(values.begin(), values.end());
                const auto ms = mean_std(values);
                rows.push_back({method, runs.front()->rounds[i].round, metric, ms.mean, ms.std, values.size(),
                                values.size() == 1});
            }
        }
    }
    return rows;
}

}  // namespace wavefuse
