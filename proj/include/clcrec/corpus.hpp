#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "clcrec/errors.hpp"
#include "clcrec/matrix.hpp"
#include "clcrec/rng.hpp"

namespace clcrec {

using Index = std::uint32_t;

struct Interaction {
    Index user;
    Index item;
    bool operator==(const Interaction&) const = default;
};

// Raw interaction records with contiguous index maps. External IDs are
// assigned indices in first-appearance order, so loading is deterministic.
struct InteractionLog {
    std::vector<Interaction> interactions;
    Index n_users = 0;
    Index n_items = 0;
    std::vector<std::string> user_ids;  // index -> external ID
    std::vector<std::string> item_ids;
    std::unordered_map<std::string, Index> user_id_map;
    std::unordered_map<std::string, Index> item_id_map;
};

struct SplitBundle {
    std::vector<Interaction> train;
    std::vector<Interaction> warm_val;
    std::vector<Interaction> warm_test;
    std::vector<Interaction> cold_val;   // ground truth against cold_val_items
    std::vector<Interaction> cold_test;  // ground truth against cold_test_items
    std::vector<Index> cold_items;       // sorted
    std::vector<Index> cold_val_items;   // sorted, disjoint halves of cold_items
    std::vector<Index> cold_test_items;  // sorted
    std::vector<Index> warm_items;       // sorted complement of cold_items
    std::vector<std::vector<Index>> user_pos;  // per-user sorted train items (N_u)
    std::vector<std::vector<Index>> item_pos;  // per-item sorted train users (N_i)
    Index n_users = 0;
    Index n_items = 0;
    double cold_fraction = 0.0;
    std::uint64_t seed = 0;

    bool is_cold(Index item) const {
        return std::binary_search(cold_items.begin(), cold_items.end(), item);
    }
    bool is_train_positive(Index user, Index item) const {
        const auto& pos = user_pos[user];
        return std::binary_search(pos.begin(), pos.end(), item);
    }
    bool operator==(const SplitBundle&) const = default;
};

// Item content vectors, one row per item index.
struct FeatureMatrix {
    Matrix rows;  // n_items x D
    std::size_t dim() const { return rows.cols(); }
};

struct SyntheticTruth {
    Matrix user_factors;  // n_users x k
    Matrix item_factors;  // n_items x k
    Matrix projection;    // k x D
    std::vector<Index> cold_items;
};

inline InteractionLog load_interactions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open interactions file: " + path.string());
    InteractionLog log;
    std::unordered_set<std::uint64_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
            line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError("interactions " + path.string() + ": line " +
                             std::to_string(lineno) +
                             ": expected 'user<TAB>item', got '" + line + "'");
        }
        const std::string uid = line.substr(0, tab);
        const std::string iid = line.substr(tab + 1);
        auto [uit, unew] = log.user_id_map.try_emplace(uid, log.n_users);
        if (unew) {
            log.user_ids.push_back(uid);
            ++log.n_users;
        }
        auto [iit, inew] = log.item_id_map.try_emplace(iid, log.n_items);
        if (inew) {
            log.item_ids.push_back(iid);
            ++log.n_items;
        }
        const std::uint64_t key =
            (static_cast<std::uint64_t>(uit->second) << 32) | iit->second;
        if (seen.insert(key).second) {
            log.interactions.push_back({uit->second, iit->second});
        }
    }
    if (log.interactions.empty()) {
        throw DataError("empty corpus: " + path.string());
    }
    return log;
}

inline FeatureMatrix load_features(const std::filesystem::path& path,
                                   const InteractionLog& log) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open features file: " + path.string());
    std::vector<Vec> by_item(log.n_items);
    std::vector<bool> have(log.n_items, false);
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("features " + path.string() + ": line " +
                             std::to_string(lineno) +
                             ": expected 'item<TAB>v1,v2,...'");
        }
        const std::string iid = line.substr(0, tab);
        const auto it = log.item_id_map.find(iid);
        if (it == log.item_id_map.end()) continue;  // feature for unseen item
        Vec row;
        std::stringstream values(line.substr(tab + 1));
        std::string tok;
        while (std::getline(values, tok, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(tok, &used);
                if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
                row.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("features " + path.string() + ": line " +
                                 std::to_string(lineno) + ": bad float '" + tok + "'");
            }
        }
        if (row.empty()) {
            throw ParseError("features " + path.string() + ": line " +
                             std::to_string(lineno) + ": no values");
        }
        if (dim == 0) {
            dim = row.size();
        } else if (row.size() != dim) {
            throw DataError("feature dimension mismatch at line " +
                            std::to_string(lineno) + ": got " +
                            std::to_string(row.size()) + ", expected " +
                            std::to_string(dim));
        }
        have[it->second] = true;
        by_item[it->second] = std::move(row);
    }
    for (Index i = 0; i < log.n_items; ++i) {
        if (!have[i]) {
            throw DataError("missing feature row for item '" + log.item_ids[i] + "'");
        }
    }
    FeatureMatrix feats;
    feats.rows = Matrix(log.n_items, dim);
    for (Index i = 0; i < log.n_items; ++i) {
        std::copy(by_item[i].begin(), by_item[i].end(), feats.rows.row(i).begin());
    }
    return feats;
}

namespace detail {

template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
    }
}

}  // namespace detail

// Warm interactions are split 8:1:1 per user; items in the cold set lose all
// their interactions from train/warm and keep them as cold evaluation ground
// truth. `forced_cold`, when nonempty, overrides the random cold sample
// (used by synthetic generation so the truth knows the cold set).
inline SplitBundle make_split(const InteractionLog& log, double cold_fraction,
                              std::uint64_t seed,
                              std::vector<Index> forced_cold = {}) {
    if (log.interactions.empty()) throw DataError("make_split: empty log");
    if (forced_cold.empty() && (cold_fraction <= 0.0 || cold_fraction >= 1.0)) {
        throw ConfigError("cold_fraction must lie in (0,1), got " +
                          std::to_string(cold_fraction));
    }
    SplitBundle b;
    b.n_users = log.n_users;
    b.n_items = log.n_items;
    b.cold_fraction = cold_fraction;
    b.seed = seed;

    Rng split_rng = substream(seed, "split");
    if (!forced_cold.empty()) {
        b.cold_items = std::move(forced_cold);
        std::sort(b.cold_items.begin(), b.cold_items.end());
    } else {
        const auto n_cold = static_cast<std::size_t>(
            cold_fraction * static_cast<double>(log.n_items));
        if (n_cold >= log.n_items) {
            throw ConfigError("cold_fraction leaves no warm items");
        }
        std::vector<Index> all(log.n_items);
        std::iota(all.begin(), all.end(), Index{0});
        // partial Fisher-Yates: first n_cold entries become the cold sample
        for (std::size_t i = 0; i < n_cold; ++i) {
            std::swap(all[i], all[i + uniform_index(split_rng, log.n_items - i)]);
        }
        b.cold_items.assign(all.begin(), all.begin() + n_cold);
        std::sort(b.cold_items.begin(), b.cold_items.end());
    }

    {
        std::vector<Index> halves = b.cold_items;
        detail::shuffle_vec(halves, split_rng);
        const std::size_t n_val = (halves.size() + 1) / 2;
        b.cold_val_items.assign(halves.begin(), halves.begin() + n_val);
        b.cold_test_items.assign(halves.begin() + n_val, halves.end());
        std::sort(b.cold_val_items.begin(), b.cold_val_items.end());
        std::sort(b.cold_test_items.begin(), b.cold_test_items.end());
    }

    b.warm_items.reserve(log.n_items - b.cold_items.size());
    for (Index i = 0; i < log.n_items; ++i) {
        if (!std::binary_search(b.cold_items.begin(), b.cold_items.end(), i)) {
            b.warm_items.push_back(i);
        }
    }

    std::vector<std::vector<Interaction>> warm_by_user(log.n_users);
    for (const auto& o : log.interactions) {
        if (std::binary_search(b.cold_val_items.begin(), b.cold_val_items.end(),
                               o.item)) {
            b.cold_val.push_back(o);
        } else if (std::binary_search(b.cold_test_items.begin(),
                                      b.cold_test_items.end(), o.item)) {
            b.cold_test.push_back(o);
        } else {
            warm_by_user[o.user].push_back(o);
        }
    }

    Rng ratio_rng = substream(seed, "split-8-1-1");
    for (Index u = 0; u < log.n_users; ++u) {
        auto& own = warm_by_user[u];
        const std::size_t n = own.size();
        if (n == 0) continue;
        if (n < 3) {
            // cannot satisfy 8:1:1; everything trains
            b.train.insert(b.train.end(), own.begin(), own.end());
            continue;
        }
        detail::shuffle_vec(own, ratio_rng);
        const std::size_t n_val = std::max<std::size_t>(1, n / 10);
        const std::size_t n_test = std::max<std::size_t>(1, n / 10);
        const std::size_t n_train = n - n_val - n_test;
        b.train.insert(b.train.end(), own.begin(), own.begin() + n_train);
        b.warm_val.insert(b.warm_val.end(), own.begin() + n_train,
                          own.begin() + n_train + n_val);
        b.warm_test.insert(b.warm_test.end(), own.begin() + n_train + n_val,
                           own.end());
    }

    b.user_pos.resize(log.n_users);
    b.item_pos.resize(log.n_items);
    for (const auto& o : b.train) {
        b.user_pos[o.user].push_back(o.item);
        b.item_pos[o.item].push_back(o.user);
    }
    for (auto& v : b.user_pos) std::sort(v.begin(), v.end());
    for (auto& v : b.item_pos) std::sort(v.begin(), v.end());
    return b;
}

// K warm items outside the user's training positives, uniform with
// replacement (rejection over the warm pool).
inline std::vector<Index> sample_negatives(const SplitBundle& bundle, Index user,
                                           std::size_t k, Rng& rng) {
    const auto& pos = bundle.user_pos[user];
    if (pos.size() >= bundle.warm_items.size()) {
        throw DataError("no negative available: user " + std::to_string(user) +
                        " interacted with every warm item");
    }
    std::vector<Index> out;
    out.reserve(k);
    while (out.size() < k) {
        const Index cand =
            bundle.warm_items[uniform_index(rng, bundle.warm_items.size())];
        if (!std::binary_search(pos.begin(), pos.end(), cand)) {
            out.push_back(cand);
        }
    }
    return out;
}

struct SyntheticDataset {
    InteractionLog log;
    FeatureMatrix features;
    SyntheticTruth truth;
};

// Desk-scale dataset with recoverable ground truth: latent factors drive both
// the interactions (top-`per_user` by noisy inner product) and the content
// features (linear projection of item factors plus noise). Items
// [n_warm, n_warm+n_cold) are designated cold; pass truth.cold_items to
// make_split as the forced cold set.
inline SyntheticDataset gen_synthetic(Index n_users, Index n_warm, Index n_cold,
                                      std::size_t k, std::size_t d_feat,
                                      std::size_t per_user, double noise,
                                      std::uint64_t seed) {
    if (n_users < 1 || n_warm < 1 || n_cold < 1 || k < 1 || per_user < 1) {
        throw ConfigError("gen_synthetic: all counts must be >= 1");
    }
    if (k > d_feat) throw ConfigError("gen_synthetic: k must be <= D");
    const Index n_items = n_warm + n_cold;
    Rng rng = substream(seed, "synth");

    SyntheticDataset out;
    auto& truth = out.truth;
    truth.user_factors = Matrix(n_users, k);
    truth.item_factors = Matrix(n_items, k);
    truth.projection = Matrix(k, d_feat);
    for (std::size_t j = 0; j < truth.user_factors.size(); ++j) {
        truth.user_factors.data()[j] = standard_normal(rng);
    }
    for (std::size_t j = 0; j < truth.item_factors.size(); ++j) {
        truth.item_factors.data()[j] = standard_normal(rng);
    }
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(k));
    for (std::size_t j = 0; j < truth.projection.size(); ++j) {
        truth.projection.data()[j] = standard_normal(rng) * proj_scale;
    }
    truth.cold_items.resize(n_cold);
    std::iota(truth.cold_items.begin(), truth.cold_items.end(), n_warm);

    out.features.rows = Matrix(n_items, d_feat);
    for (Index i = 0; i < n_items; ++i) {
        auto row = out.features.rows.row(i);
        for (std::size_t c = 0; c < d_feat; ++c) {
            double v = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                v += truth.item_factors(i, l) * truth.projection(l, c);
            }
            row[c] = v + noise * standard_normal(rng);
        }
    }

    auto& log = out.log;
    log.n_users = n_users;
    log.n_items = n_items;
    for (Index u = 0; u < n_users; ++u) {
        log.user_ids.push_back("u" + std::to_string(u));
        log.user_id_map.emplace(log.user_ids.back(), u);
    }
    for (Index i = 0; i < n_items; ++i) {
        log.item_ids.push_back("i" + std::to_string(i));
        log.item_id_map.emplace(log.item_ids.back(), i);
    }

    std::vector<std::pair<double, Index>> scored(n_items);
    for (Index u = 0; u < n_users; ++u) {
        for (Index i = 0; i < n_items; ++i) {
            const double affinity =
                dot(truth.user_factors.row(u), truth.item_factors.row(i));
            scored[i] = {affinity + noise * standard_normal(rng), i};
        }
        const std::size_t take = std::min<std::size_t>(per_user, n_items);
        std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                          [](const auto& a, const auto& b) {
                              return a.first > b.first ||
                                     (a.first == b.first && a.second < b.second);
                          });
        for (std::size_t r = 0; r < take; ++r) {
            log.interactions.push_back({u, scored[r].second});
        }
    }
    return out;
}

inline void write_interactions(const std::filesystem::path& path,
                               const std::vector<Interaction>& list,
                               const InteractionLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& o : list) {
        out << log.user_ids[o.user] << '\t' << log.item_ids[o.item] << '\n';
    }
}

inline void write_features(const std::filesystem::path& path,
                           const FeatureMatrix& feats, const InteractionLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    for (Index i = 0; i < log.n_items; ++i) {
        out << log.item_ids[i] << '\t';
        const auto row = feats.rows.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << row[c];
        }
        out << '\n';
    }
}

// Manifest + three interaction files; enough to rebuild the bundle
// bit-exactly given the original log.
inline void save_split(const std::filesystem::path& dir, const SplitBundle& bundle,
                       const InteractionLog& log) {
    std::filesystem::create_directories(dir);
    write_interactions(dir / "train.tsv", bundle.train, log);
    write_interactions(dir / "warm_val.tsv", bundle.warm_val, log);
    write_interactions(dir / "warm_test.tsv", bundle.warm_test, log);
    nlohmann::json manifest;
    manifest["seed"] = bundle.seed;
    manifest["cold_fraction"] = bundle.cold_fraction;
    auto ids = [&](const std::vector<Index>& items) {
        std::vector<std::string> v;
        v.reserve(items.size());
        for (Index i : items) v.push_back(log.item_ids[i]);
        return v;
    };
    manifest["cold_val_items"] = ids(bundle.cold_val_items);
    manifest["cold_test_items"] = ids(bundle.cold_test_items);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

inline SplitBundle load_split(const std::filesystem::path& dir,
                              const InteractionLog& log) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("cannot open manifest in " + dir.string());
    nlohmann::json manifest;
    in >> manifest;

    SplitBundle b;
    b.n_users = log.n_users;
    b.n_items = log.n_items;
    b.seed = manifest.at("seed").get<std::uint64_t>();
    b.cold_fraction = manifest.at("cold_fraction").get<double>();
    auto items = [&](const char* key) {
        std::vector<Index> v;
        for (const auto& id : manifest.at(key)) {
            const auto it = log.item_id_map.find(id.get<std::string>());
            if (it == log.item_id_map.end()) {
                throw ArtifactMismatch("manifest item '" + id.get<std::string>() +
                                       "' not present in interaction log");
            }
            v.push_back(it->second);
        }
        std::sort(v.begin(), v.end());
        return v;
    };
    b.cold_val_items = items("cold_val_items");
    b.cold_test_items = items("cold_test_items");
    b.cold_items = b.cold_val_items;
    b.cold_items.insert(b.cold_items.end(), b.cold_test_items.begin(),
                        b.cold_test_items.end());
    std::sort(b.cold_items.begin(), b.cold_items.end());

    for (Index i = 0; i < log.n_items; ++i) {
        if (!std::binary_search(b.cold_items.begin(), b.cold_items.end(), i)) {
            b.warm_items.push_back(i);
        }
    }
    for (const auto& o : log.interactions) {
        if (std::binary_search(b.cold_val_items.begin(), b.cold_val_items.end(),
                               o.item)) {
            b.cold_val.push_back(o);
        } else if (std::binary_search(b.cold_test_items.begin(),
                                      b.cold_test_items.end(), o.item)) {
            b.cold_test.push_back(o);
        }
    }
    auto read_list = [&](const char* name) {
        std::vector<Interaction> list;
        std::ifstream f(dir / name);
        if (!f) throw DataError("cannot open split file " + (dir / name).string());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            const auto uit = log.user_id_map.find(line.substr(0, tab));
            const auto iit = log.item_id_map.find(line.substr(tab + 1));
            if (tab == std::string::npos || uit == log.user_id_map.end() ||
                iit == log.item_id_map.end()) {
                throw ArtifactMismatch("split file " + std::string(name) +
                                       ": line not in interaction log: " + line);
            }
            list.push_back({uit->second, iit->second});
        }
        return list;
    };
    b.train = read_list("train.tsv");
    b.warm_val = read_list("warm_val.tsv");
    b.warm_test = read_list("warm_test.tsv");

    b.user_pos.resize(log.n_users);
    b.item_pos.resize(log.n_items);
    for (const auto& o : b.train) {
        b.user_pos[o.user].push_back(o.item);
        b.item_pos[o.item].push_back(o.user);
    }
    for (auto& v : b.user_pos) std::sort(v.begin(), v.end());
    for (auto& v : b.item_pos) std::sort(v.begin(), v.end());
    return b;
}

}  // namespace clcrec
