#pragma once

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "clcrec/clcrec.hpp"

namespace testutil {

// scratch directory removed on destruction
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("clcrec_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

inline std::filesystem::path write_file(const std::filesystem::path& dir,
                                        const std::string& name,
                                        const std::string& content) {
    const auto p = dir / name;
    std::ofstream out(p);
    out << content;
    return p;
}

// hand-built bundle over explicit train edges, no val/test content
inline clcrec::SplitBundle tiny_bundle(
    clcrec::Index n_users, clcrec::Index n_items,
    const std::vector<clcrec::Interaction>& train,
    const std::vector<clcrec::Index>& cold = {}) {
    clcrec::SplitBundle b;
    b.n_users = n_users;
    b.n_items = n_items;
    b.train = train;
    b.cold_items = cold;
    std::sort(b.cold_items.begin(), b.cold_items.end());
    for (clcrec::Index i = 0; i < n_items; ++i) {
        if (!std::binary_search(b.cold_items.begin(), b.cold_items.end(), i)) {
            b.warm_items.push_back(i);
        }
    }
    b.user_pos.resize(n_users);
    b.item_pos.resize(n_items);
    for (const auto& o : train) {
        b.user_pos[o.user].push_back(o.item);
        b.item_pos[o.item].push_back(o.user);
    }
    for (auto& v : b.user_pos) std::sort(v.begin(), v.end());
    for (auto& v : b.item_pos) std::sort(v.begin(), v.end());
    return b;
}

inline clcrec::FeatureMatrix random_features(clcrec::Index n_items,
                                             std::size_t dim, clcrec::Rng& rng) {
    clcrec::FeatureMatrix f;
    f.rows = clcrec::Matrix(n_items, dim);
    for (std::size_t k = 0; k < f.rows.size(); ++k) {
        f.rows.data()[k] = clcrec::standard_normal(rng);
    }
    return f;
}

}  // namespace testutil
