#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "clcrec/corpus.hpp"
#include "clcrec/errors.hpp"
#include "clcrec/objective.hpp"

namespace clcrec {

struct ScenarioSpec {
    enum Kind { Warm, Cold, All };
    enum Split { Val, Test };
    Kind kind = All;
    Split split = Val;
    std::size_t k = 10;
};

inline std::string to_string(ScenarioSpec::Kind k) {
    switch (k) {
        case ScenarioSpec::Warm: return "warm";
        case ScenarioSpec::Cold: return "cold";
        default: return "all";
    }
}

inline std::string to_string(ScenarioSpec::Split s) {
    return s == ScenarioSpec::Val ? "val" : "test";
}

struct PerUserMetrics {
    Index user;
    double recall;
    double ndcg;
};

struct MetricsReport {
    double recall_at_k = 0.0;
    double ndcg_at_k = 0.0;
    std::size_t n_users_evaluated = 0;
    ScenarioSpec scenario;
    std::vector<PerUserMetrics> per_user;
};

// Cold items have no trained embedding; they are scored through the feature
// encoder. Raw dot matches the hybrid-trained density ratio; cosine is an
// ablation switch.
enum class ColdScore { Dot, Cosine };

inline Vec score_items(ForwardContext& ctx, const SplitBundle& bundle, Index user,
                       std::span<const Index> candidates,
                       ColdScore cold_score = ColdScore::Dot) {
    if (candidates.empty()) throw ContractError("score_items: no candidates");
    const auto zu = ctx.z_user(user);
    Vec scores(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const Index item = candidates[c];
        if (bundle.is_cold(item)) {
            const auto f = ctx.feat(item);
            scores[c] = cold_score == ColdScore::Dot ? dot(zu, f) : cosine(zu, f);
        } else {
            scores[c] = dot(zu, ctx.z_item(item));
        }
    }
    return scores;
}

// Full ranking over the candidates, ties broken by ascending item index.
// recall = |topK intersect relevant| / |relevant|;
// DCG uses gain 1/log2(rank+1) with ranks starting at 1.
inline std::pair<double, double> rank_metrics(std::span<const double> scores,
                                              std::span<const Index> candidates,
                                              const std::vector<Index>& relevant,
                                              std::size_t k) {
    if (relevant.empty()) throw ContractError("rank_metrics: empty relevant set");
    if (scores.size() != candidates.size()) {
        throw ContractError("rank_metrics: scores/candidates size mismatch");
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
    });
    const std::size_t top = std::min(k, order.size());
    std::size_t hits = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
        if (std::binary_search(relevant.begin(), relevant.end(),
                               candidates[order[r]])) {
            ++hits;
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) {
        idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    const double recall =
        static_cast<double>(hits) / static_cast<double>(relevant.size());
    return {recall, dcg > 0.0 ? dcg / idcg : 0.0};
}

namespace detail {

inline std::vector<std::vector<Index>> positives_by_user(
    const std::vector<Interaction>& list, Index n_users) {
    std::vector<std::vector<Index>> out(n_users);
    for (const auto& o : list) out[o.user].push_back(o.item);
    for (auto& v : out) std::sort(v.begin(), v.end());
    return out;
}

}  // namespace detail

// Full-ranking evaluation over one scenario. Users with no relevant items in
// the scenario's split are skipped.
inline MetricsReport evaluate(ForwardContext& ctx, const SplitBundle& bundle,
                              const ScenarioSpec& spec,
                              ColdScore cold_score = ColdScore::Dot) {
    if (spec.k < 1) throw ConfigError("evaluate: K must be >= 1");
    const bool val = spec.split == ScenarioSpec::Val;
    const auto& warm_truth = val ? bundle.warm_val : bundle.warm_test;
    const auto& cold_truth = val ? bundle.cold_val : bundle.cold_test;
    const auto& cold_candidates =
        val ? bundle.cold_val_items : bundle.cold_test_items;

    std::vector<std::vector<Index>> relevant(bundle.n_users);
    if (spec.kind != ScenarioSpec::Cold) {
        for (const auto& o : warm_truth) relevant[o.user].push_back(o.item);
    }
    if (spec.kind != ScenarioSpec::Warm) {
        for (const auto& o : cold_truth) relevant[o.user].push_back(o.item);
    }
    for (auto& v : relevant) std::sort(v.begin(), v.end());

    MetricsReport report;
    report.scenario = spec;
    double recall_sum = 0.0;
    double ndcg_sum = 0.0;
    std::vector<Index> candidates;
    for (Index u = 0; u < bundle.n_users; ++u) {
        if (relevant[u].empty()) continue;
        candidates.clear();
        if (spec.kind != ScenarioSpec::Cold) {
            const auto& pos = bundle.user_pos[u];
            for (Index i : bundle.warm_items) {
                if (!std::binary_search(pos.begin(), pos.end(), i)) {
                    candidates.push_back(i);
                }
            }
        }
        if (spec.kind != ScenarioSpec::Warm) {
            candidates.insert(candidates.end(), cold_candidates.begin(),
                              cold_candidates.end());
        }
        const Vec scores = score_items(ctx, bundle, u, candidates, cold_score);
        const auto [recall, ndcg] =
            rank_metrics(scores, candidates, relevant[u], spec.k);
        recall_sum += recall;
        ndcg_sum += ndcg;
        report.per_user.push_back({u, recall, ndcg});
    }
    report.n_users_evaluated = report.per_user.size();
    if (report.n_users_evaluated == 0) {
        throw DataError("evaluate: no evaluable users in scenario " +
                        to_string(spec.kind) + "/" + to_string(spec.split));
    }
    report.recall_at_k = recall_sum / static_cast<double>(report.n_users_evaluated);
    report.ndcg_at_k = ndcg_sum / static_cast<double>(report.n_users_evaluated);
    return report;
}

}  // namespace clcrec
