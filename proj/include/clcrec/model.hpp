#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clcrec/corpus.hpp"
#include "clcrec/errors.hpp"
#include "clcrec/matrix.hpp"
#include "clcrec/rng.hpp"

namespace clcrec {

struct EncoderKind {
    enum Kind : std::uint8_t { MF, LightGCN };
    Kind kind = MF;
    int layers = 2;  // LightGCN propagation depth

    bool operator==(const EncoderKind&) const = default;
};

struct ModelDims {
    Index n_users = 0;
    Index n_items = 0;
    std::size_t embed_dim = 64;   // d
    std::size_t hidden_dim = 256; // H
    std::size_t feat_dim = 0;     // D
};

// Embedding table rows: users occupy [0, n_users), items occupy
// [n_users, n_users + n_items).
struct ParameterSet {
    Matrix embed;  // (n_users + n_items) x d
    Matrix w1;     // H x D
    Vec b1;        // H
    Matrix w2;     // d x H
    Vec b2;        // d
    Index n_users = 0;
    Index n_items = 0;

    std::size_t user_row(Index u) const { return u; }
    std::size_t item_row(Index i) const { return n_users + i; }

    bool operator==(const ParameterSet&) const = default;
};

inline ParameterSet xavier_init(const ModelDims& dims, Rng& rng) {
    if (dims.embed_dim == 0 || dims.hidden_dim == 0 || dims.feat_dim == 0) {
        throw ConfigError("xavier_init: dimensions must be positive");
    }
    ParameterSet p;
    p.n_users = dims.n_users;
    p.n_items = dims.n_items;
    auto bound = [](std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    };
    auto fill = [&](Matrix& m, double b) {
        for (std::size_t k = 0; k < m.size(); ++k) {
            m.data()[k] = uniform_real(rng, -b, b);
        }
    };
    p.embed = Matrix(dims.n_users + dims.n_items, dims.embed_dim);
    fill(p.embed, bound(dims.embed_dim, dims.embed_dim));
    p.w1 = Matrix(dims.hidden_dim, dims.feat_dim);
    fill(p.w1, bound(dims.feat_dim, dims.hidden_dim));
    p.b1.assign(dims.hidden_dim, 0.0);
    p.w2 = Matrix(dims.embed_dim, dims.hidden_dim);
    fill(p.w2, bound(dims.hidden_dim, dims.embed_dim));
    p.b2.assign(dims.embed_dim, 0.0);
    return p;
}

// z = e: the MF encoder is the identity on the embedding row.
inline Vec encode_mf(const ParameterSet& params, std::size_t row) {
    if (row >= params.embed.rows()) {
        throw ContractError("encode_mf: row " + std::to_string(row) +
                            " out of range");
    }
    const auto r = params.embed.row(row);
    return Vec(r.begin(), r.end());
}

// Bipartite interaction graph over embedding-table rows, with the symmetric
// normalization 1/sqrt(|N_u||N_i|) per edge, built from training
// interactions only.
struct GraphAdjacency {
    std::vector<std::vector<std::pair<std::size_t, double>>> neighbors;

    static GraphAdjacency build(const SplitBundle& bundle) {
        GraphAdjacency g;
        g.neighbors.resize(bundle.n_users + bundle.n_items);
        for (Index u = 0; u < bundle.n_users; ++u) {
            const auto& items = bundle.user_pos[u];
            for (Index i : items) {
                const double coef =
                    1.0 / std::sqrt(static_cast<double>(items.size()) *
                                    static_cast<double>(bundle.item_pos[i].size()));
                const std::size_t item_node = bundle.n_users + i;
                g.neighbors[u].emplace_back(item_node, coef);
                g.neighbors[item_node].emplace_back(u, coef);
            }
        }
        return g;
    }

    // one propagation step: out[n] = sum over neighbors m of coef * in[m]
    Matrix propagate(const Matrix& in) const {
        Matrix out(in.rows(), in.cols());
        for (std::size_t n = 0; n < neighbors.size(); ++n) {
            auto dst = out.row(n);
            for (const auto& [m, coef] : neighbors[n]) {
                axpy(coef, in.row(m), dst);
            }
        }
        return out;
    }
};

// Layer-wise propagation with mean readout over layers 0..L.
inline Matrix encode_lightgcn(const ParameterSet& params,
                              const GraphAdjacency& graph, int layers) {
    if (layers < 1) throw ConfigError("encode_lightgcn: layers must be >= 1");
    Matrix acc = params.embed;
    Matrix cur = params.embed;
    for (int l = 0; l < layers; ++l) {
        cur = graph.propagate(cur);
        for (std::size_t k = 0; k < acc.size(); ++k) {
            acc.data()[k] += cur.data()[k];
        }
    }
    const double inv = 1.0 / (layers + 1);
    for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] *= inv;
    return acc;
}

inline double leaky_relu(double a) { return a >= 0.0 ? a : 0.2 * a; }
inline double leaky_relu_grad(double a) { return a >= 0.0 ? 1.0 : 0.2; }

// Forward activations kept for backprop.
struct MlpCache {
    Vec pre;     // W1 x + b1
    Vec hidden;  // leaky_relu(pre)
    Vec out;     // W2 hidden + b2
};

inline MlpCache feature_forward(const ParameterSet& params,
                                std::span<const double> x) {
    MlpCache c;
    c.pre = affine(params.w1, params.b1, x);
    c.hidden.resize(c.pre.size());
    std::transform(c.pre.begin(), c.pre.end(), c.hidden.begin(), leaky_relu);
    c.out = affine(params.w2, params.b2, c.hidden);
    return c;
}

// f = W2 phi(W1 x + b1) + b2 with phi = leaky rectifier, slope 0.2.
inline Vec encode_feature(const ParameterSet& params, std::span<const double> x) {
    if (x.size() != params.w1.cols()) {
        throw ContractError("encode_feature: expected input of length " +
                            std::to_string(params.w1.cols()) + ", got " +
                            std::to_string(x.size()));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw NumericError("encode_feature: non-finite input");
    }
    return feature_forward(params, x).out;
}

// Accumulates d(loss)/d(W1,b1,W2,b2) and returns d(loss)/dx is not needed.
inline void feature_backward(const ParameterSet& params,
                             std::span<const double> x, const MlpCache& cache,
                             std::span<const double> dout, Matrix& dw1, Vec& db1,
                             Matrix& dw2, Vec& db2) {
    const std::size_t hidden = cache.hidden.size();
    Vec dhidden(hidden, 0.0);
    for (std::size_t r = 0; r < dout.size(); ++r) {
        axpy(dout[r], cache.hidden, dw2.row(r));
        db2[r] += dout[r];
        axpy(dout[r], params.w2.row(r), dhidden);
    }
    for (std::size_t h = 0; h < hidden; ++h) {
        const double da = dhidden[h] * leaky_relu_grad(cache.pre[h]);
        axpy(da, x, dw1.row(h));
        db1[h] += da;
    }
}

// --- parameter snapshots ---------------------------------------------------

namespace detail {

// explicit little-endian byte order, independent of host
inline void write_u64(std::ofstream& out, std::uint64_t v) {
    char buf[8];
    for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(buf, 8);
}

inline std::uint64_t read_u64(std::ifstream& in) {
    char buf[8] = {};
    in.read(buf, 8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[k])) << (8 * k);
    }
    return v;
}

inline void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        write_u64(out, std::bit_cast<std::uint64_t>(p[k]));
    }
}

inline void read_doubles(std::ifstream& in, double* p, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        p[k] = std::bit_cast<double>(read_u64(in));
    }
}

}  // namespace detail

inline constexpr std::uint64_t kSnapshotMagic = 0x434c435245433031ULL;  // "CLCREC01"

struct SnapshotHeader {
    EncoderKind encoder;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

inline void save_snapshot(const std::filesystem::path& path,
                          const ParameterSet& params, const SnapshotHeader& hdr) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write snapshot " + path.string());
    detail::write_u64(out, kSnapshotMagic);
    detail::write_u64(out, params.n_users);
    detail::write_u64(out, params.n_items);
    detail::write_u64(out, params.embed.cols());
    detail::write_u64(out, params.w1.rows());
    detail::write_u64(out, params.w1.cols());
    detail::write_u64(out, hdr.encoder.kind);
    detail::write_u64(out, static_cast<std::uint64_t>(hdr.encoder.layers));
    detail::write_u64(out, hdr.seed);
    detail::write_u64(out, hdr.config_hash);
    detail::write_doubles(out, params.embed.data(), params.embed.size());
    detail::write_doubles(out, params.w1.data(), params.w1.size());
    detail::write_doubles(out, params.b1.data(), params.b1.size());
    detail::write_doubles(out, params.w2.data(), params.w2.size());
    detail::write_doubles(out, params.b2.data(), params.b2.size());
}

inline std::pair<ParameterSet, SnapshotHeader> load_snapshot(
    const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open snapshot " + path.string());
    if (detail::read_u64(in) != kSnapshotMagic) {
        throw ArtifactMismatch("not a parameter snapshot: " + path.string());
    }
    ParameterSet p;
    p.n_users = static_cast<Index>(detail::read_u64(in));
    p.n_items = static_cast<Index>(detail::read_u64(in));
    const std::size_t d = detail::read_u64(in);
    const std::size_t hidden = detail::read_u64(in);
    const std::size_t feat = detail::read_u64(in);
    SnapshotHeader hdr;
    hdr.encoder.kind = static_cast<EncoderKind::Kind>(detail::read_u64(in));
    hdr.encoder.layers = static_cast<int>(detail::read_u64(in));
    hdr.seed = detail::read_u64(in);
    hdr.config_hash = detail::read_u64(in);
    p.embed = Matrix(p.n_users + p.n_items, d);
    p.w1 = Matrix(hidden, feat);
    p.b1.resize(hidden);
    p.w2 = Matrix(d, hidden);
    p.b2.resize(d);
    detail::read_doubles(in, p.embed.data(), p.embed.size());
    detail::read_doubles(in, p.w1.data(), p.w1.size());
    detail::read_doubles(in, p.b1.data(), p.b1.size());
    detail::read_doubles(in, p.w2.data(), p.w2.size());
    detail::read_doubles(in, p.b2.data(), p.b2.size());
    if (!in) throw ArtifactMismatch("truncated snapshot: " + path.string());
    return {std::move(p), hdr};
}

}  // namespace clcrec
