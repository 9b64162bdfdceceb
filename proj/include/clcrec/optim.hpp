#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clcrec/corpus.hpp"
#include "clcrec/errors.hpp"
#include "clcrec/eval.hpp"
#include "clcrec/model.hpp"
#include "clcrec/objective.hpp"

namespace clcrec {

struct AdamState {
    Matrix m_embed, v_embed;
    Matrix m_w1, v_w1;
    Vec m_b1, v_b1;
    Matrix m_w2, v_w2;
    Vec m_b2, v_b2;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState like(const ParameterSet& p) {
        AdamState s;
        s.m_embed = Matrix(p.embed.rows(), p.embed.cols());
        s.v_embed = Matrix(p.embed.rows(), p.embed.cols());
        s.m_w1 = Matrix(p.w1.rows(), p.w1.cols());
        s.v_w1 = Matrix(p.w1.rows(), p.w1.cols());
        s.m_b1.assign(p.b1.size(), 0.0);
        s.v_b1.assign(p.b1.size(), 0.0);
        s.m_w2 = Matrix(p.w2.rows(), p.w2.cols());
        s.v_w2 = Matrix(p.w2.rows(), p.w2.cols());
        s.m_b2.assign(p.b2.size(), 0.0);
        s.v_b2.assign(p.b2.size(), 0.0);
        return s;
    }
};

namespace detail {

inline void adam_update(double* p, double* m, double* v, const double* g,
                        std::size_t n, const AdamState& s, double lr,
                        double bc1, double bc2) {
    for (std::size_t k = 0; k < n; ++k) {
        m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g[k];
        v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g[k] * g[k];
        p[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + s.eps);
    }
}

}  // namespace detail

// Bias-corrected Adam. Embedding rows are updated lazily: only rows with a
// nonzero gradient this step move (their moments keep the global step count).
inline void adam_step(ParameterSet& params, const Gradients& grads,
                      AdamState& state, double lr) {
    if (lr <= 0.0) throw ConfigError("adam_step: lr must be positive");
    if (grads.embed.rows() != params.embed.rows() ||
        grads.embed.cols() != params.embed.cols() ||
        grads.dw1.size() != params.w1.size() ||
        grads.dw2.size() != params.w2.size() ||
        grads.db1.size() != params.b1.size() ||
        grads.db2.size() != params.b2.size()) {
        throw ContractError("adam_step: gradient/parameter shape mismatch");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    const std::size_t d = params.embed.cols();
    for (std::size_t r : grads.touched_rows) {
        detail::adam_update(params.embed.row(r).data(),
                            state.m_embed.row(r).data(),
                            state.v_embed.row(r).data(), grads.embed.row(r).data(),
                            d, state, lr, bc1, bc2);
    }
    detail::adam_update(params.w1.data(), state.m_w1.data(), state.v_w1.data(),
                        grads.dw1.data(), params.w1.size(), state, lr, bc1, bc2);
    detail::adam_update(params.b1.data(), state.m_b1.data(), state.v_b1.data(),
                        grads.db1.data(), params.b1.size(), state, lr, bc1, bc2);
    detail::adam_update(params.w2.data(), state.m_w2.data(), state.v_w2.data(),
                        grads.dw2.data(), params.w2.size(), state, lr, bc1, bc2);
    detail::adam_update(params.b2.data(), state.m_b2.data(), state.v_b2.data(),
                        grads.db2.data(), params.b2.size(), state, lr, bc1, bc2);
}

struct TrainOptions {
    EncoderKind encoder;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 256;
    ObjectiveConfig objective;
    double rho = 0.5;
    std::size_t k_ui = 128;
    std::size_t k_re = 256;
    double lr = 1e-3;
    std::size_t batch_size = 1024;
    int max_epochs = 1000;
    int patience = 10;
    std::size_t top_k = 10;
    ColdScore cold_score = ColdScore::Dot;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double l_ui = 0.0;
    double l_re = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
    double grad_mag = 0.0;
    double recall_warm = 0.0;
    double recall_cold = 0.0;
    double recall_all = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    int stopped_epoch = -1;
    double best_recall = -1.0;
    ParameterSet best_params;
};

inline void to_json(nlohmann::json& j, const EpochStats& s) {
    j = {{"epoch", s.epoch},         {"l_ui", s.l_ui},
         {"l_re", s.l_re},           {"l_reg", s.l_reg},
         {"total", s.total},         {"grad_mag", s.grad_mag},
         {"recall_warm", s.recall_warm}, {"recall_cold", s.recall_cold},
         {"recall_all", s.recall_all}};
}

inline void to_json(nlohmann::json& j, const TrainReport& r) {
    j = {{"best_epoch", r.best_epoch},
         {"stopped_epoch", r.stopped_epoch},
         {"best_recall", r.best_recall},
         {"history", r.history}};
}

namespace detail {

inline double scenario_recall(ForwardContext& ctx, const SplitBundle& bundle,
                              ScenarioSpec::Kind kind, std::size_t k,
                              ColdScore cold_score) {
    try {
        return evaluate(ctx, bundle, {kind, ScenarioSpec::Val, k}, cold_score)
            .recall_at_k;
    } catch (const DataError&) {
        return 0.0;  // scenario has no evaluable users in this split
    }
}

}  // namespace detail

// Shuffled mini-batch epochs with per-epoch all-scenario validation recall@K
// and early stopping. Deterministic under a fixed seed: single-threaded, all
// randomness from named substreams of opts.seed.
inline TrainReport train(const SplitBundle& bundle, const FeatureMatrix& features,
                         const TrainOptions& opts,
                         std::ostream* metrics_stream = nullptr) {
    ModelDims dims{bundle.n_users, bundle.n_items, opts.embed_dim,
                   opts.hidden_dim, features.dim()};
    Rng init_rng = substream(opts.seed, "init");
    Rng batch_rng = substream(opts.seed, "batch");
    Rng neg_rng = substream(opts.seed, "negatives");
    Rng hybrid_rng = substream(opts.seed, "hybrid");

    ParameterSet params = xavier_init(dims, init_rng);
    AdamState adam = AdamState::like(params);
    GraphAdjacency graph;
    const GraphAdjacency* graph_ptr = nullptr;
    if (opts.encoder.kind == EncoderKind::LightGCN) {
        graph = GraphAdjacency::build(bundle);
        graph_ptr = &graph;
    }

    TrainReport report;
    report.best_params = params;
    std::vector<Interaction> order = bundle.train;

    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        detail::shuffle_vec(order, batch_rng);
        EpochStats stats;
        stats.epoch = epoch;
        std::size_t n_steps = 0;
        for (std::size_t off = 0; off < order.size(); off += opts.batch_size) {
            const std::size_t len = std::min(opts.batch_size, order.size() - off);
            const Batch batch =
                make_batch(bundle, {order.data() + off, len}, opts.k_ui,
                           opts.k_re, opts.rho, neg_rng, hybrid_rng);
            ForwardContext ctx =
                make_context(params, features, opts.encoder, graph_ptr);
            const LossBreakdown loss = loss_total(batch, ctx, opts.objective);
            const double gmag =
                ui_grad_magnitude(batch, ctx, opts.objective.tau_ui);
            if (!std::isfinite(loss.total)) {
                throw NumericError("non-finite loss at epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(n_steps));
            }
            const Gradients grads = backward(batch, params, features,
                                             opts.encoder, graph_ptr,
                                             opts.objective);
            adam_step(params, grads, adam, opts.lr);
            stats.l_ui += loss.l_ui;
            stats.l_re += loss.l_re;
            stats.l_reg += loss.l_reg;
            stats.total += loss.total;
            stats.grad_mag += gmag;
            if (metrics_stream) {
                nlohmann::json line = {{"epoch", epoch},   {"step", n_steps},
                                       {"l_ui", loss.l_ui}, {"l_re", loss.l_re},
                                       {"l_reg", loss.l_reg}, {"total", loss.total},
                                       {"grad_mag", gmag}};
                *metrics_stream << line.dump() << '\n';
            }
            ++n_steps;
        }
        if (n_steps > 0) {
            stats.l_ui /= n_steps;
            stats.l_re /= n_steps;
            stats.l_reg /= n_steps;
            stats.total /= n_steps;
            stats.grad_mag /= n_steps;
        }

        ForwardContext val_ctx =
            make_context(params, features, opts.encoder, graph_ptr);
        stats.recall_warm = detail::scenario_recall(
            val_ctx, bundle, ScenarioSpec::Warm, opts.top_k, opts.cold_score);
        stats.recall_cold = detail::scenario_recall(
            val_ctx, bundle, ScenarioSpec::Cold, opts.top_k, opts.cold_score);
        stats.recall_all = detail::scenario_recall(
            val_ctx, bundle, ScenarioSpec::All, opts.top_k, opts.cold_score);
        report.history.push_back(stats);
        report.stopped_epoch = epoch;

        if (stats.recall_all > report.best_recall) {  // ties keep the earliest
            report.best_recall = stats.recall_all;
            report.best_epoch = epoch;
            report.best_params = params;
        } else if (epoch - report.best_epoch >= opts.patience) {
            break;
        }
    }
    return report;
}

// Compares backward() to central finite differences of the total loss over
// every parameter coordinate. Independent of the gradient code path: only
// loss_total is used on the perturbed points.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
};

inline GradCheckResult finite_diff_check(const SplitBundle& bundle,
                                         const FeatureMatrix& features,
                                         const TrainOptions& opts,
                                         std::size_t trials,
                                         double step = 1e-5) {
    ModelDims dims{bundle.n_users, bundle.n_items, opts.embed_dim,
                   opts.hidden_dim, features.dim()};
    Rng init_rng = substream(opts.seed, "gradcheck-init");
    Rng neg_rng = substream(opts.seed, "gradcheck-neg");
    Rng hybrid_rng = substream(opts.seed, "gradcheck-hybrid");
    Rng pick_rng = substream(opts.seed, "gradcheck-pick");

    GraphAdjacency graph;
    const GraphAdjacency* graph_ptr = nullptr;
    if (opts.encoder.kind == EncoderKind::LightGCN) {
        graph = GraphAdjacency::build(bundle);
        graph_ptr = &graph;
    }

    GradCheckResult result;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        ParameterSet params = xavier_init(dims, init_rng);
        // keep scores in a well-conditioned range for the difference quotient
        for (std::size_t k = 0; k < params.embed.size(); ++k) {
            params.embed.data()[k] *= 0.25;
        }
        std::vector<Interaction> positives;
        const std::size_t n_pos = 2 + uniform_index(pick_rng, 3);
        for (std::size_t k = 0; k < n_pos; ++k) {
            positives.push_back(
                bundle.train[uniform_index(pick_rng, bundle.train.size())]);
        }
        const Batch batch = make_batch(bundle, positives, opts.k_ui, opts.k_re,
                                       opts.rho, neg_rng, hybrid_rng);

        const Gradients grads = backward(batch, params, features, opts.encoder,
                                         graph_ptr, opts.objective);
        auto loss_at = [&](const ParameterSet& p) {
            ForwardContext ctx =
                make_context(p, features, opts.encoder, graph_ptr);
            return loss_total(batch, ctx, opts.objective).total;
        };
        auto check = [&](double* values, const double* analytic, std::size_t n,
                         const char* name, ParameterSet& p) {
            for (std::size_t k = 0; k < n; ++k) {
                const double saved = values[k];
                values[k] = saved + step;
                const double up = loss_at(p);
                values[k] = saved - step;
                const double down = loss_at(p);
                values[k] = saved;
                const double numeric = (up - down) / (2.0 * step);
                // below the difference-quotient noise floor both values are
                // indistinguishable from zero (some coordinates cancel exactly)
                if (std::fabs(analytic[k]) < 1e-6 && std::fabs(numeric) < 1e-6) {
                    continue;
                }
                const double rel =
                    std::fabs(analytic[k] - numeric) /
                    std::max({std::fabs(analytic[k]), std::fabs(numeric), 1e-8});
                if (rel > result.max_rel_error) {
                    result.max_rel_error = rel;
                    result.worst_tensor = name;
                }
            }
        };
        ParameterSet p = params;
        check(p.embed.data(), grads.embed.data(), p.embed.size(), "embed", p);
        check(p.w1.data(), grads.dw1.data(), p.w1.size(), "w1", p);
        check(p.b1.data(), grads.db1.data(), p.b1.size(), "b1", p);
        check(p.w2.data(), grads.dw2.data(), p.w2.size(), "w2", p);
        check(p.b2.data(), grads.db2.data(), p.b2.size(), "b2", p);
    }
    return result;
}

}  // namespace clcrec
