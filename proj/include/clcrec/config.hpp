#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "clcrec/errors.hpp"
#include "clcrec/eval.hpp"
#include "clcrec/model.hpp"
#include "clcrec/optim.hpp"
#include "clcrec/rng.hpp"

namespace clcrec {

// Everything a run needs, in one place. Serialized as a sectioned key-value
// file; CLI flags override file values.
struct TrainConfig {
    // [corpus]
    std::string interactions;
    std::string features;
    double cold_fraction = 0.15;
    // [model]
    EncoderKind encoder;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 256;
    // [objective]
    double tau_ui = 0.1;
    double tau_re = 0.1;
    double lambda = 0.5;
    double eta = 1e-4;
    double rho = 0.5;
    std::size_t k_ui = 128;
    std::size_t k_re = 256;
    // [optim]
    double lr = 1e-3;
    std::size_t batch_size = 1024;
    int max_epochs = 1000;
    int patience = 10;
    // [eval]
    std::size_t top_k = 10;
    ColdScore cold_score = ColdScore::Dot;
    // [run]
    std::uint64_t seed = 0;
    std::string out_dir;

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
        if (rho < 0.0 || rho > 1.0) throw ConfigError("rho must lie in [0,1]");
        if (tau_ui <= 0.0 || tau_re <= 0.0) throw ConfigError("temperatures must be positive");
        if (k_ui < 1 || k_re < 1) throw ConfigError("negative counts must be >= 1");
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        if (encoder.kind == EncoderKind::LightGCN && encoder.layers < 1) {
            throw ConfigError("lightgcn layers must be >= 1");
        }
    }

    TrainOptions options() const {
        TrainOptions o;
        o.encoder = encoder;
        o.embed_dim = embed_dim;
        o.hidden_dim = hidden_dim;
        o.objective = {tau_ui, tau_re, lambda, eta};
        o.rho = rho;
        o.k_ui = k_ui;
        o.k_re = k_re;
        o.lr = lr;
        o.batch_size = batch_size;
        o.max_epochs = max_epochs;
        o.patience = patience;
        o.top_k = top_k;
        o.cold_score = cold_score;
        o.seed = seed;
        return o;
    }

    // identity of the trained artifact: structural fields only
    std::uint64_t hash(Index n_users, Index n_items, std::size_t feat_dim) const {
        std::ostringstream s;
        s << "encoder=" << (encoder.kind == EncoderKind::MF ? "mf" : "lightgcn")
          << ";layers=" << encoder.layers << ";d=" << embed_dim
          << ";h=" << hidden_dim << ";feat=" << feat_dim
          << ";users=" << n_users << ";items=" << n_items << ";seed=" << seed;
        return fnv1a(s.str());
    }

    bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    TrainConfig cfg;
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ": line " + std::to_string(lineno) +
                              ": expected key=value");
        }
        const std::string key = section + "." + detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        try {
            if (key == "corpus.interactions") cfg.interactions = value;
            else if (key == "corpus.features") cfg.features = value;
            else if (key == "corpus.cold_fraction") cfg.cold_fraction = std::stod(value);
            else if (key == "model.encoder") {
                if (value == "mf") cfg.encoder.kind = EncoderKind::MF;
                else if (value == "lightgcn") cfg.encoder.kind = EncoderKind::LightGCN;
                else throw ConfigError("unknown encoder '" + value + "'");
            }
            else if (key == "model.layers") cfg.encoder.layers = std::stoi(value);
            else if (key == "model.embed_dim") cfg.embed_dim = std::stoul(value);
            else if (key == "model.hidden_dim") cfg.hidden_dim = std::stoul(value);
            else if (key == "objective.tau_ui") cfg.tau_ui = std::stod(value);
            else if (key == "objective.tau_re") cfg.tau_re = std::stod(value);
            else if (key == "objective.lambda") cfg.lambda = std::stod(value);
            else if (key == "objective.eta") cfg.eta = std::stod(value);
            else if (key == "objective.rho") cfg.rho = std::stod(value);
            else if (key == "objective.k_ui") cfg.k_ui = std::stoul(value);
            else if (key == "objective.k_re") cfg.k_re = std::stoul(value);
            else if (key == "optim.lr") cfg.lr = std::stod(value);
            else if (key == "optim.batch_size") cfg.batch_size = std::stoul(value);
            else if (key == "optim.max_epochs") cfg.max_epochs = std::stoi(value);
            else if (key == "optim.patience") cfg.patience = std::stoi(value);
            else if (key == "eval.top_k") cfg.top_k = std::stoul(value);
            else if (key == "eval.cold_score") {
                if (value == "dot") cfg.cold_score = ColdScore::Dot;
                else if (value == "cosine") cfg.cold_score = ColdScore::Cosine;
                else throw ConfigError("unknown cold_score '" + value + "'");
            }
            else if (key == "run.seed") cfg.seed = std::stoull(value);
            else if (key == "run.out") cfg.out_dir = value;
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(path.string() + ": line " + std::to_string(lineno) +
                              ": bad value '" + value + "' for " + key);
        }
    }
    return cfg;
}

inline void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path.string());
    out.precision(17);
    out << "[corpus]\n"
        << "interactions = " << cfg.interactions << "\n"
        << "features = " << cfg.features << "\n"
        << "cold_fraction = " << cfg.cold_fraction << "\n\n"
        << "[model]\n"
        << "encoder = " << (cfg.encoder.kind == EncoderKind::MF ? "mf" : "lightgcn") << "\n"
        << "layers = " << cfg.encoder.layers << "\n"
        << "embed_dim = " << cfg.embed_dim << "\n"
        << "hidden_dim = " << cfg.hidden_dim << "\n\n"
        << "[objective]\n"
        << "tau_ui = " << cfg.tau_ui << "\n"
        << "tau_re = " << cfg.tau_re << "\n"
        << "lambda = " << cfg.lambda << "\n"
        << "eta = " << cfg.eta << "\n"
        << "rho = " << cfg.rho << "\n"
        << "k_ui = " << cfg.k_ui << "\n"
        << "k_re = " << cfg.k_re << "\n\n"
        << "[optim]\n"
        << "lr = " << cfg.lr << "\n"
        << "batch_size = " << cfg.batch_size << "\n"
        << "max_epochs = " << cfg.max_epochs << "\n"
        << "patience = " << cfg.patience << "\n\n"
        << "[eval]\n"
        << "top_k = " << cfg.top_k << "\n"
        << "cold_score = " << (cfg.cold_score == ColdScore::Dot ? "dot" : "cosine") << "\n\n"
        << "[run]\n"
        << "seed = " << cfg.seed << "\n"
        << "out = " << cfg.out_dir << "\n";
}

}  // namespace clcrec
