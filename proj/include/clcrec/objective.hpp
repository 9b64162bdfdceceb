#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <unordered_map>
#include <vector>

#include "clcrec/corpus.hpp"
#include "clcrec/errors.hpp"
#include "clcrec/matrix.hpp"
#include "clcrec/model.hpp"
#include "clcrec/rng.hpp"

namespace clcrec {

// One training example: a user, an interacted item, sampled negatives for the
// two contrastive terms, and per-occurrence hybrid flags (positive first,
// then the ui negatives in order).
struct BatchEntry {
    Index user;
    Index pos_item;
    std::vector<Index> ui_negatives;
    std::vector<Index> re_negatives;
    std::vector<bool> hybrid_flags;  // length 1 + |ui_negatives|
};

struct Batch {
    std::vector<BatchEntry> entries;
};

struct LossBreakdown {
    double l_ui = 0.0;
    double l_re = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
};

struct Gradients {
    Matrix embed;  // rows untouched by the batch stay exactly zero
    std::vector<std::size_t> touched_rows;  // sorted
    Matrix dw1;
    Vec db1;
    Matrix dw2;
    Vec db2;
};

struct ObjectiveConfig {
    double tau_ui = 0.1;
    double tau_re = 0.1;
    double lambda = 0.5;
    double eta = 1e-4;
};

inline constexpr double kNormEps = 1e-12;

// g(z_i, z_u) = exp(z_i . z_u / tau). May saturate standalone; the losses
// work in log space and never evaluate it directly.
inline double density_g(std::span<const double> z_u, std::span<const double> z_i,
                        double tau) {
    if (tau <= 0.0) throw ConfigError("density_g: tau must be positive");
    return std::exp(dot(z_u, z_i) / tau);
}

inline double stable_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a) + kNormEps);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    return dot(a, b) / (stable_norm(a) * stable_norm(b));
}

// h(z_i, f_j) = exp(cos(z_i, f_j) / tau); bounded in [exp(-1/tau), exp(1/tau)].
inline double density_h(std::span<const double> z_i, std::span<const double> f_j,
                        double tau) {
    if (tau <= 0.0) throw ConfigError("density_h: tau must be positive");
    return std::exp(cosine(z_i, f_j) / tau);
}

// Summation happens in sorted order, so the result is invariant under any
// permutation of the scores (the losses promise this exactly).
inline double log_sum_exp(std::span<const double> s) {
    const double m = *std::max_element(s.begin(), s.end());
    std::vector<double> terms(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) terms[k] = std::exp(s[k] - m);
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double v : terms) acc += v;
    return m + std::log(acc);
}

// Collaborative embeddings for every node under the configured encoder.
inline Matrix compute_collaborative(const ParameterSet& params,
                                    const EncoderKind& encoder,
                                    const GraphAdjacency* graph) {
    if (encoder.kind == EncoderKind::LightGCN) {
        if (graph == nullptr) {
            throw ContractError("LightGCN encoder requires a graph");
        }
        return encode_lightgcn(params, *graph, encoder.layers);
    }
    return params.embed;
}

// Forward state shared by the losses: all-node collaborative embeddings plus
// a lazy per-item MLP cache for feature representations.
class ForwardContext {
public:
    ForwardContext(const ParameterSet& params, const FeatureMatrix& features,
                   Matrix z)
        : params_(params), features_(features), z_(std::move(z)) {}

    const ParameterSet& params() const { return params_; }
    const FeatureMatrix& features() const { return features_; }
    const Matrix& z() const { return z_; }

    std::span<const double> z_user(Index u) const {
        return z_.row(params_.user_row(u));
    }
    std::span<const double> z_item(Index i) const {
        return z_.row(params_.item_row(i));
    }
    const MlpCache& mlp(Index item) {
        auto it = f_cache_.find(item);
        if (it == f_cache_.end()) {
            it = f_cache_
                     .emplace(item,
                              feature_forward(params_, features_.rows.row(item)))
                     .first;
        }
        return it->second;
    }
    std::span<const double> feat(Index item) { return mlp(item).out; }

private:
    const ParameterSet& params_;
    const FeatureMatrix& features_;
    Matrix z_;
    std::unordered_map<Index, MlpCache> f_cache_;
};

inline ForwardContext make_context(const ParameterSet& params,
                                   const FeatureMatrix& features,
                                   const EncoderKind& encoder,
                                   const GraphAdjacency* graph) {
    return ForwardContext(params, features,
                          compute_collaborative(params, encoder, graph));
}

namespace detail {

// item representation inside the U-I density ratio: collaborative embedding,
// or the feature representation when the hybrid flag is set
inline std::span<const double> ui_repr(ForwardContext& ctx, Index item,
                                       bool hybrid) {
    return hybrid ? ctx.feat(item) : ctx.z_item(item);
}

inline std::vector<double> ui_scores(ForwardContext& ctx, const BatchEntry& e,
                                     double tau) {
    std::vector<double> s(1 + e.ui_negatives.size());
    const auto zu = ctx.z_user(e.user);
    s[0] = dot(zu, ui_repr(ctx, e.pos_item, e.hybrid_flags[0])) / tau;
    for (std::size_t k = 0; k < e.ui_negatives.size(); ++k) {
        s[1 + k] =
            dot(zu, ui_repr(ctx, e.ui_negatives[k], e.hybrid_flags[1 + k])) / tau;
    }
    return s;
}

inline std::vector<double> re_scores(ForwardContext& ctx, const BatchEntry& e,
                                     double tau) {
    std::vector<double> s(1 + e.re_negatives.size());
    const auto anchor = ctx.z_item(e.pos_item);
    s[0] = cosine(anchor, ctx.feat(e.pos_item)) / tau;
    for (std::size_t k = 0; k < e.re_negatives.size(); ++k) {
        s[1 + k] = cosine(anchor, ctx.feat(e.re_negatives[k])) / tau;
    }
    return s;
}

inline std::vector<double> softmax(std::span<const double> s) {
    const double lse = log_sum_exp(s);
    std::vector<double> p(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) p[k] = std::exp(s[k] - lse);
    return p;
}

}  // namespace detail

// -ln softmax of the positive pair's score among the sampled negatives,
// averaged over the batch.
inline double loss_ui(const Batch& batch, ForwardContext& ctx, double tau) {
    if (batch.entries.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& e : batch.entries) {
        const auto s = detail::ui_scores(ctx, e, tau);
        acc += log_sum_exp(s) - s[0];
    }
    return acc / static_cast<double>(batch.entries.size());
}

// Self-discrimination: the anchor's own feature representation against other
// items' representations, scored by cosine against z_i.
inline double loss_re(const Batch& batch, ForwardContext& ctx, double tau) {
    if (batch.entries.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& e : batch.entries) {
        const auto s = detail::re_scores(ctx, e, tau);
        acc += log_sum_exp(s) - s[0];
    }
    return acc / static_cast<double>(batch.entries.size());
}

// mean of -ln sigma(z_u.z_i - z_u.z_j); requires exactly one negative
inline double loss_bpr(const Batch& batch, ForwardContext& ctx) {
    if (batch.entries.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& e : batch.entries) {
        if (e.ui_negatives.size() != 1) {
            throw ContractError("loss_bpr: exactly one negative per entry");
        }
        const auto zu = ctx.z_user(e.user);
        const double margin =
            dot(zu, ctx.z_item(e.pos_item)) - dot(zu, ctx.z_item(e.ui_negatives[0]));
        // -ln sigma(m) = softplus(-m), stable in both tails
        acc += margin > 0.0 ? std::log1p(std::exp(-margin))
                            : -margin + std::log1p(std::exp(margin));
    }
    return acc / static_cast<double>(batch.entries.size());
}

// embedding rows whose parameters this batch touches (for the L2 term)
inline std::vector<std::size_t> touched_embed_rows(const Batch& batch,
                                                   const ParameterSet& params) {
    std::vector<std::size_t> rows;
    for (const auto& e : batch.entries) {
        rows.push_back(params.user_row(e.user));
        rows.push_back(params.item_row(e.pos_item));
        for (Index j : e.ui_negatives) rows.push_back(params.item_row(j));
        for (Index j : e.re_negatives) rows.push_back(params.item_row(j));
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return rows;
}

// batch-scoped L2: embedding rows in the batch plus every MLP tensor
inline double loss_reg(const Batch& batch, const ParameterSet& params) {
    double acc = squared_frobenius(params.w1) + squared_norm(params.b1) +
                 squared_frobenius(params.w2) + squared_norm(params.b2);
    for (std::size_t r : touched_embed_rows(batch, params)) {
        acc += dot(params.embed.row(r), params.embed.row(r));
    }
    return acc;
}

inline LossBreakdown loss_total(const Batch& batch, ForwardContext& ctx,
                                const ObjectiveConfig& cfg) {
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0) {
        throw ConfigError("lambda must lie in [0,1]");
    }
    if (cfg.eta < 0.0) throw ConfigError("eta must be >= 0");
    LossBreakdown out;
    out.l_ui = loss_ui(batch, ctx, cfg.tau_ui);
    out.l_re = loss_re(batch, ctx, cfg.tau_re);
    out.l_reg = loss_reg(batch, ctx.params());
    out.total = cfg.lambda * out.l_re + (1.0 - cfg.lambda) * out.l_ui +
                cfg.eta * out.l_reg;
    return out;
}

namespace detail {

// d cos(a,b) / da with the smoothed norm sqrt(a.a + eps)
inline void add_cosine_grad_a(std::span<const double> a, std::span<const double> b,
                              double coef, std::span<double> out) {
    const double na = stable_norm(a);
    const double nb = stable_norm(b);
    const double c = dot(a, b) / (na * nb);
    for (std::size_t k = 0; k < a.size(); ++k) {
        out[k] += coef * (b[k] / (na * nb) - c * a[k] / (na * na));
    }
}

}  // namespace detail

// Exact gradient of loss_total over every parameter. Embedding gradients are
// accumulated on the collaborative embeddings first, then pulled back through
// the encoder (identity for MF, mean of adjacency powers for LightGCN).
inline Gradients backward(const Batch& batch, const ParameterSet& params,
                          const FeatureMatrix& features,
                          const EncoderKind& encoder, const GraphAdjacency* graph,
                          const ObjectiveConfig& cfg) {
    ForwardContext ctx = make_context(params, features, encoder, graph);

    Gradients g;
    g.embed = Matrix(params.embed.rows(), params.embed.cols());
    g.dw1 = Matrix(params.w1.rows(), params.w1.cols());
    g.db1.assign(params.b1.size(), 0.0);
    g.dw2 = Matrix(params.w2.rows(), params.w2.cols());
    g.db2.assign(params.b2.size(), 0.0);
    if (batch.entries.empty()) return g;

    const double inv_batch = 1.0 / static_cast<double>(batch.entries.size());
    Matrix dz(params.embed.rows(), params.embed.cols());
    std::unordered_map<Index, Vec> dfeat;
    auto dfeat_of = [&](Index item) -> Vec& {
        auto it = dfeat.find(item);
        if (it == dfeat.end()) {
            it = dfeat.emplace(item, Vec(params.embed.cols(), 0.0)).first;
        }
        return it->second;
    };

    // U-I term
    const double w_ui = (1.0 - cfg.lambda) * inv_batch;
    if (w_ui != 0.0) {
        for (const auto& e : batch.entries) {
            const auto s = detail::ui_scores(ctx, e, cfg.tau_ui);
            const auto p = detail::softmax(s);
            const auto zu = ctx.z_user(e.user);
            auto dzu = dz.row(params.user_row(e.user));
            for (std::size_t k = 0; k < s.size(); ++k) {
                const double coef =
                    w_ui * (p[k] - (k == 0 ? 1.0 : 0.0)) / cfg.tau_ui;
                const Index item = k == 0 ? e.pos_item : e.ui_negatives[k - 1];
                const bool hybrid = e.hybrid_flags[k];
                axpy(coef, detail::ui_repr(ctx, item, hybrid), dzu);
                if (hybrid) {
                    axpy(coef, zu, dfeat_of(item));
                } else {
                    axpy(coef, zu, dz.row(params.item_row(item)));
                }
            }
        }
    }

    // R-E term
    const double w_re = cfg.lambda * inv_batch;
    if (w_re != 0.0) {
        for (const auto& e : batch.entries) {
            const auto s = detail::re_scores(ctx, e, cfg.tau_re);
            const auto p = detail::softmax(s);
            const auto anchor = ctx.z_item(e.pos_item);
            auto danchor = dz.row(params.item_row(e.pos_item));
            for (std::size_t k = 0; k < s.size(); ++k) {
                const double coef =
                    w_re * (p[k] - (k == 0 ? 1.0 : 0.0)) / cfg.tau_re;
                const Index item = k == 0 ? e.pos_item : e.re_negatives[k - 1];
                const auto f = ctx.feat(item);
                detail::add_cosine_grad_a(anchor, f, coef, danchor);
                detail::add_cosine_grad_a(f, anchor, coef, dfeat_of(item));
            }
        }
    }

    // MLP backprop for every item whose feature representation was used
    for (auto& [item, df] : dfeat) {
        feature_backward(params, features.rows.row(item), ctx.mlp(item), df,
                         g.dw1, g.db1, g.dw2, g.db2);
    }

    // encoder pullback: collaborative-embedding gradients -> embedding table
    if (encoder.kind == EncoderKind::LightGCN) {
        Matrix acc = dz;
        Matrix cur = std::move(dz);
        for (int l = 0; l < encoder.layers; ++l) {
            cur = graph->propagate(cur);  // normalized adjacency is symmetric
            for (std::size_t k = 0; k < acc.size(); ++k) {
                acc.data()[k] += cur.data()[k];
            }
        }
        const double inv = 1.0 / (encoder.layers + 1);
        for (std::size_t k = 0; k < acc.size(); ++k) {
            g.embed.data()[k] = acc.data()[k] * inv;
        }
    } else {
        g.embed = std::move(dz);
    }

    // batch-scoped L2 penalty acts on raw parameters
    for (std::size_t r : touched_embed_rows(batch, params)) {
        axpy(2.0 * cfg.eta, params.embed.row(r), g.embed.row(r));
    }
    if (cfg.eta != 0.0) {
        for (std::size_t k = 0; k < g.dw1.size(); ++k) {
            g.dw1.data()[k] += 2.0 * cfg.eta * params.w1.data()[k];
        }
        for (std::size_t k = 0; k < g.db1.size(); ++k) {
            g.db1[k] += 2.0 * cfg.eta * params.b1[k];
        }
        for (std::size_t k = 0; k < g.dw2.size(); ++k) {
            g.dw2.data()[k] += 2.0 * cfg.eta * params.w2.data()[k];
        }
        for (std::size_t k = 0; k < g.db2.size(); ++k) {
            g.db2[k] += 2.0 * cfg.eta * params.b2[k];
        }
    }

    for (std::size_t r = 0; r < g.embed.rows(); ++r) {
        const auto row = g.embed.row(r);
        if (std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; })) {
            g.touched_rows.push_back(r);
        }
    }
    return g;
}

inline double mean_row_norm(const std::vector<Vec>& rows) {
    if (rows.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& r : rows) acc += norm2(r);
    return acc / static_cast<double>(rows.size());
}

// Mean Euclidean norm of the per-entry U-I gradient with respect to the
// user's collaborative embedding.
inline double ui_grad_magnitude(const Batch& batch, ForwardContext& ctx,
                                double tau) {
    std::vector<Vec> per_user;
    per_user.reserve(batch.entries.size());
    for (const auto& e : batch.entries) {
        const auto s = detail::ui_scores(ctx, e, tau);
        const auto p = detail::softmax(s);
        Vec grad(ctx.z().cols(), 0.0);
        for (std::size_t k = 0; k < s.size(); ++k) {
            const double coef = (p[k] - (k == 0 ? 1.0 : 0.0)) / tau;
            const Index item = k == 0 ? e.pos_item : e.ui_negatives[k - 1];
            axpy(coef, detail::ui_repr(ctx, item, e.hybrid_flags[k]), grad);
        }
        per_user.push_back(std::move(grad));
    }
    return mean_row_norm(per_user);
}

// Draws negatives and hybrid flags for a slice of training interactions.
inline Batch make_batch(const SplitBundle& bundle,
                        std::span<const Interaction> positives, std::size_t k_ui,
                        std::size_t k_re, double rho, Rng& neg_rng,
                        Rng& hybrid_rng) {
    Batch batch;
    batch.entries.reserve(positives.size());
    for (const auto& o : positives) {
        BatchEntry e;
        e.user = o.user;
        e.pos_item = o.item;
        e.ui_negatives = sample_negatives(bundle, o.user, k_ui, neg_rng);
        e.re_negatives = sample_negatives(bundle, o.user, k_re, neg_rng);
        e.hybrid_flags.resize(1 + k_ui);
        for (std::size_t k = 0; k < e.hybrid_flags.size(); ++k) {
            e.hybrid_flags[k] = bernoulli(hybrid_rng, rho);
        }
        batch.entries.push_back(std::move(e));
    }
    return batch;
}

}  // namespace clcrec
