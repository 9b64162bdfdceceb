// clcrec: cold-start recommendation training and evaluation CLI.
//
// Subcommands: synth, split, train, eval, gradcheck, export-figs.
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 artifact
// mismatch, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clcrec/clcrec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
    std::uint32_t users = 200;
    std::uint32_t warm = 300;
    std::uint32_t cold = 100;
    std::size_t latent_dim = 8;
    std::size_t feat_dim = 32;
    std::size_t per_user = 20;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    const auto data = clcrec::gen_synthetic(a.users, a.warm, a.cold, a.latent_dim,
                                            a.feat_dim, a.per_user, a.noise, a.seed);
    fs::create_directories(a.out);
    clcrec::write_interactions(fs::path(a.out) / "interactions.tsv",
                               data.log.interactions, data.log);
    clcrec::write_features(fs::path(a.out) / "features.tsv", data.features,
                           data.log);
    json truth;
    truth["seed"] = a.seed;
    truth["latent_dim"] = a.latent_dim;
    truth["noise"] = a.noise;
    std::vector<std::string> cold_ids;
    for (clcrec::Index i : data.truth.cold_items) {
        cold_ids.push_back(data.log.item_ids[i]);
    }
    truth["cold_items"] = cold_ids;
    auto matrix_json = [](const clcrec::Matrix& m) {
        std::vector<std::vector<double>> rows;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            rows.emplace_back(m.row(r).begin(), m.row(r).end());
        }
        return rows;
    };
    truth["user_factors"] = matrix_json(data.truth.user_factors);
    truth["item_factors"] = matrix_json(data.truth.item_factors);
    truth["projection"] = matrix_json(data.truth.projection);
    std::ofstream out(fs::path(a.out) / "truth.json");
    out << truth.dump() << '\n';
    std::cout << "synth: " << data.log.n_users << " users, " << data.log.n_items
              << " items, " << data.log.interactions.size()
              << " interactions -> " << a.out << "\n";
    return 0;
}

struct SplitArgs {
    std::string interactions;
    double cold_fraction = 0.15;
    std::uint64_t seed = 0;
    std::string out;
    std::string cold_items_file;  // optional forced cold set (one item ID per line)
};

int cmd_split(const SplitArgs& a) {
    const auto log = clcrec::load_interactions(a.interactions);
    std::vector<clcrec::Index> forced;
    if (!a.cold_items_file.empty()) {
        std::ifstream in(a.cold_items_file);
        if (!in) throw clcrec::ConfigError("cannot open --cold-items file");
        std::string id;
        while (std::getline(in, id)) {
            if (id.empty()) continue;
            const auto it = log.item_id_map.find(id);
            if (it == log.item_id_map.end()) {
                throw clcrec::ArtifactMismatch("cold item '" + id +
                                               "' not in interaction log");
            }
            forced.push_back(it->second);
        }
    }
    const auto bundle =
        clcrec::make_split(log, a.cold_fraction, a.seed, std::move(forced));
    clcrec::save_split(a.out, bundle, log);
    std::cout << "split: " << bundle.train.size() << " train, "
              << bundle.warm_val.size() << " warm_val, "
              << bundle.warm_test.size() << " warm_test, "
              << bundle.cold_items.size() << " cold items -> " << a.out << "\n";
    return 0;
}

struct LoadedRun {
    clcrec::InteractionLog log;
    clcrec::FeatureMatrix features;
    clcrec::SplitBundle bundle;
};

LoadedRun load_run_inputs(const clcrec::TrainConfig& cfg,
                          const std::string& split_dir) {
    LoadedRun r;
    r.log = clcrec::load_interactions(cfg.interactions);
    r.features = clcrec::load_features(cfg.features, r.log);
    r.bundle = clcrec::load_split(split_dir, r.log);
    return r;
}

void run_one_training(const clcrec::TrainConfig& cfg, const LoadedRun& data,
                      const fs::path& out) {
    fs::create_directories(out);
    std::ofstream metrics(out / "metrics.jsonl");
    const auto report = clcrec::train(data.bundle, data.features, cfg.options(),
                                      &metrics);
    json jreport = report;
    std::ofstream rf(out / "report.json");
    rf << jreport.dump(2) << '\n';
    clcrec::SnapshotHeader hdr;
    hdr.encoder = cfg.encoder;
    hdr.seed = cfg.seed;
    hdr.config_hash =
        cfg.hash(data.log.n_users, data.log.n_items, data.features.dim());
    clcrec::save_snapshot(out / "snapshot.bin", report.best_params, hdr);
    clcrec::save_config(out / "config.ini", cfg);
}

std::map<std::string, std::vector<double>> parse_value_lists(
    const std::vector<std::string>& specs) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& spec : specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            throw clcrec::ConfigError("expected param=v1,v2,...: " + spec);
        }
        const std::string key = spec.substr(0, eq);
        std::stringstream vals(spec.substr(eq + 1));
        std::string tok;
        while (std::getline(vals, tok, ',')) {
            try {
                out[key].push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw clcrec::ConfigError("bad value '" + tok + "' in " + spec);
            }
        }
        if (out[key].empty()) {
            throw clcrec::ConfigError("no values given for " + key);
        }
    }
    return out;
}

void apply_param(clcrec::TrainConfig& cfg, const std::string& key, double v) {
    if (key == "lr") cfg.lr = v;
    else if (key == "eta") cfg.eta = v;
    else if (key == "lambda") cfg.lambda = v;
    else if (key == "rho") cfg.rho = v;
    else if (key == "tau_ui") cfg.tau_ui = v;
    else if (key == "tau_re") cfg.tau_re = v;
    else if (key == "k_ui") cfg.k_ui = static_cast<std::size_t>(v);
    else if (key == "k_re") cfg.k_re = static_cast<std::size_t>(v);
    else throw clcrec::ConfigError("unknown sweep/grid parameter '" + key + "'");
}

int cmd_train(clcrec::TrainConfig cfg, const std::string& split_dir,
              const std::vector<std::string>& grid_specs) {
    cfg.validate();
    const LoadedRun data = load_run_inputs(cfg, split_dir);
    const fs::path out = cfg.out_dir;

    if (grid_specs.empty()) {
        run_one_training(cfg, data, out);
        std::cout << "train: report and snapshot written to " << out << "\n";
        return 0;
    }

    const auto grid = parse_value_lists(grid_specs);
    std::vector<clcrec::TrainConfig> candidates{cfg};
    for (const auto& [key, values] : grid) {
        std::vector<clcrec::TrainConfig> next;
        for (const auto& base : candidates) {
            for (double v : values) {
                clcrec::TrainConfig c = base;
                apply_param(c, key, v);
                next.push_back(c);
            }
        }
        candidates = std::move(next);
    }
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const fs::path run_dir = out / ("grid_" + std::to_string(i));
        run_one_training(candidates[i], data, run_dir);
        std::ifstream rf(run_dir / "report.json");
        json report;
        rf >> report;
        const double recall = report.at("best_recall").get<double>();
        std::cout << "grid_" << i << ": best validation recall@" << cfg.top_k
                  << " = " << recall << "\n";
        if (recall > best) {
            best = recall;
            best_idx = i;
        }
    }
    // winner republished at the output root
    run_one_training(candidates[best_idx], data, out);
    std::cout << "train: selected grid_" << best_idx << " (recall " << best
              << ") -> " << out << "\n";
    return 0;
}

struct EvalArgs {
    std::string config;
    std::string snapshot;
    std::string split_dir;
    bool all_scenarios = false;
    std::string scenario = "all";
    std::string part = "test";
    std::string out;
    bool per_user = false;
};

int cmd_eval(const EvalArgs& a) {
    const auto cfg = clcrec::load_config(a.config);
    cfg.validate();
    const LoadedRun data = load_run_inputs(cfg, a.split_dir);
    auto [params, hdr] = clcrec::load_snapshot(a.snapshot);
    const std::uint64_t expected =
        cfg.hash(data.log.n_users, data.log.n_items, data.features.dim());
    if (hdr.config_hash != expected) {
        throw clcrec::ArtifactMismatch(
            "snapshot was trained under a different config (hash mismatch)");
    }

    clcrec::GraphAdjacency graph;
    const clcrec::GraphAdjacency* graph_ptr = nullptr;
    if (cfg.encoder.kind == clcrec::EncoderKind::LightGCN) {
        graph = clcrec::GraphAdjacency::build(data.bundle);
        graph_ptr = &graph;
    }
    clcrec::ForwardContext ctx =
        clcrec::make_context(params, data.features, cfg.encoder, graph_ptr);

    std::vector<clcrec::ScenarioSpec> specs;
    auto kind_of = [](const std::string& s) {
        if (s == "warm") return clcrec::ScenarioSpec::Warm;
        if (s == "cold") return clcrec::ScenarioSpec::Cold;
        if (s == "all") return clcrec::ScenarioSpec::All;
        throw clcrec::ConfigError("unknown scenario '" + s + "'");
    };
    auto split_of = [](const std::string& s) {
        if (s == "val") return clcrec::ScenarioSpec::Val;
        if (s == "test") return clcrec::ScenarioSpec::Test;
        throw clcrec::ConfigError("unknown split '" + s + "'");
    };
    if (a.all_scenarios) {
        for (auto kind : {clcrec::ScenarioSpec::Warm, clcrec::ScenarioSpec::Cold,
                          clcrec::ScenarioSpec::All}) {
            for (auto split : {clcrec::ScenarioSpec::Val, clcrec::ScenarioSpec::Test}) {
                specs.push_back({kind, split, cfg.top_k});
            }
        }
    } else {
        specs.push_back({kind_of(a.scenario), split_of(a.part), cfg.top_k});
    }

    fs::create_directories(a.out);
    json results = json::array();
    for (const auto& spec : specs) {
        const auto report =
            clcrec::evaluate(ctx, data.bundle, spec, cfg.cold_score);
        json entry = {{"scenario", clcrec::to_string(spec.kind)},
                      {"split", clcrec::to_string(spec.split)},
                      {"k", spec.k},
                      {"recall", report.recall_at_k},
                      {"ndcg", report.ndcg_at_k},
                      {"n_users", report.n_users_evaluated}};
        results.push_back(entry);
        std::cout << clcrec::to_string(spec.kind) << "/"
                  << clcrec::to_string(spec.split) << " recall@" << spec.k << "="
                  << report.recall_at_k << " ndcg@" << spec.k << "="
                  << report.ndcg_at_k << "\n";
        if (a.per_user) {
            std::ofstream csv(fs::path(a.out) /
                              ("per_user_" + clcrec::to_string(spec.kind) + "_" +
                               clcrec::to_string(spec.split) + ".csv"));
            csv << "user_id,recall,ndcg\n";
            for (const auto& m : report.per_user) {
                csv << data.log.user_ids[m.user] << ',' << m.recall << ','
                    << m.ndcg << '\n';
            }
        }
    }
    std::ofstream out(fs::path(a.out) / "metrics.json");
    out << results.dump(2) << '\n';
    return 0;
}

struct GradcheckArgs {
    std::size_t trials = 100;
    std::uint64_t seed = 11;
    double threshold = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    // 10-user / 16-item instance covering both encoders and the full
    // rho x lambda grid
    const auto data = clcrec::gen_synthetic(10, 12, 4, 3, 6, 4, 0.2, a.seed);
    const auto bundle =
        clcrec::make_split(data.log, 0.25, a.seed, data.truth.cold_items);

    double worst = 0.0;
    std::string worst_desc;
    const std::vector<clcrec::EncoderKind> encoders = {
        {clcrec::EncoderKind::MF, 2}, {clcrec::EncoderKind::LightGCN, 2}};
    const std::vector<double> rhos = {0.0, 0.5, 1.0};
    const std::vector<double> lambdas = {0.0, 0.5, 1.0};
    const std::size_t cells = encoders.size() * rhos.size() * lambdas.size();
    const std::size_t trials_per_cell = std::max<std::size_t>(1, a.trials / cells);
    for (const auto& encoder : encoders) {
        for (double rho : rhos) {
            for (double lambda : lambdas) {
                clcrec::TrainOptions opts;
                opts.encoder = encoder;
                opts.embed_dim = 4;
                opts.hidden_dim = 8;
                opts.objective = {0.5, 0.5, lambda, 1e-3};
                opts.rho = rho;
                opts.k_ui = 3;
                opts.k_re = 3;
                opts.seed = a.seed + static_cast<std::uint64_t>(rho * 10) +
                            static_cast<std::uint64_t>(lambda * 100) +
                            (encoder.kind == clcrec::EncoderKind::MF ? 0 : 1000);
                const auto res = clcrec::finite_diff_check(bundle, data.features,
                                                           opts, trials_per_cell);
                if (res.max_rel_error > worst) {
                    worst = res.max_rel_error;
                    worst_desc = res.worst_tensor + " (encoder=" +
                                 (encoder.kind == clcrec::EncoderKind::MF
                                      ? "mf"
                                      : "lightgcn") +
                                 " rho=" + std::to_string(rho) +
                                 " lambda=" + std::to_string(lambda) + ")";
                }
            }
        }
    }
    std::cout << "gradcheck: max relative error " << worst << "\n";
    if (worst >= a.threshold) {
        std::cout << "gradcheck: FAIL, worst tensor " << worst_desc << "\n";
        return 1;
    }
    std::cout << "gradcheck: PASS\n";
    return 0;
}

struct ExportArgs {
    std::vector<std::string> runs;
    std::vector<std::string> sweeps;
    std::string config;
    std::string split_dir;
    std::string out;
};

void export_run_csv(std::ofstream& csv, const std::string& run_id,
                    const fs::path& run_dir) {
    std::ifstream rf(run_dir / "report.json");
    if (!rf) throw clcrec::DataError("missing report.json in " + run_dir.string());
    json report;
    rf >> report;
    for (const auto& row : report.at("history")) {
        const int epoch = row.at("epoch").get<int>();
        for (const char* metric :
             {"l_ui", "l_re", "l_reg", "total", "grad_mag", "recall_warm",
              "recall_cold", "recall_all"}) {
            csv << run_id << ',' << epoch << ',' << metric << ','
                << row.at(metric).get<double>() << '\n';
        }
    }
}

int cmd_export_figs(const ExportArgs& a) {
    fs::create_directories(a.out);
    std::ofstream csv(fs::path(a.out) / "series.csv");
    csv.precision(17);
    csv << "run_id,epoch,metric,value\n";
    for (const auto& run : a.runs) {
        export_run_csv(csv, fs::path(run).filename().string(), run);
    }
    if (!a.sweeps.empty()) {
        if (a.config.empty() || a.split_dir.empty()) {
            throw clcrec::ConfigError("--sweep requires --config and --split");
        }
        auto base = clcrec::load_config(a.config);
        base.validate();
        const LoadedRun data = load_run_inputs(base, a.split_dir);
        const auto sweeps = parse_value_lists(a.sweeps);
        for (const auto& [key, values] : sweeps) {
            for (double v : values) {
                clcrec::TrainConfig cfg = base;
                apply_param(cfg, key, v);
                std::ostringstream run_id;
                run_id << "sweep_" << key << "_" << v;
                const fs::path run_dir = fs::path(a.out) / run_id.str();
                run_one_training(cfg, data, run_dir);
                export_run_csv(csv, run_id.str(), run_dir);
            }
        }
    }
    std::cout << "export-figs: series written to "
              << (fs::path(a.out) / "series.csv") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CLCRec cold-start recommendation toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--users", synth.users, "number of users");
    synth_cmd->add_option("--warm", synth.warm, "number of warm items");
    synth_cmd->add_option("--cold", synth.cold, "number of cold items");
    synth_cmd->add_option("--latent-dim", synth.latent_dim, "latent dimension");
    synth_cmd->add_option("--feat-dim", synth.feat_dim, "feature dimension");
    synth_cmd->add_option("--per-user", synth.per_user, "interactions per user");
    synth_cmd->add_option("--noise", synth.noise, "noise scale");
    synth_cmd->add_option("--seed", synth.seed, "root seed");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();

    SplitArgs split;
    auto* split_cmd = app.add_subcommand("split", "build a warm/cold split");
    split_cmd->add_option("--interactions", split.interactions)->required();
    split_cmd->add_option("--cold-fraction", split.cold_fraction,
                          "fraction of items held out as cold");
    split_cmd->add_option("--seed", split.seed, "root seed");
    split_cmd->add_option("--cold-items", split.cold_items_file,
                          "file of item IDs forced cold");
    split_cmd->add_option("--out", split.out, "output directory")->required();

    std::string train_config, train_split, train_out;
    std::vector<std::string> grid_specs;
    clcrec::TrainConfig overrides;
    bool has_seed = false, has_out = false;
    std::uint64_t seed_val = 0;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", train_config, "config file")->required();
    train_cmd->add_option("--split", train_split, "split manifest directory")
        ->required();
    train_cmd->add_option("--seed", seed_val)->each([&](const std::string&) {
        has_seed = true;
    });
    train_cmd->add_option("--out", train_out)->each([&](const std::string&) {
        has_out = true;
    });
    train_cmd->add_option("--grid", grid_specs,
                          "grid search, e.g. --grid lr=0.0001,0.001");
    std::map<std::string, std::string> flag_overrides;
    for (const char* key : {"lambda", "rho", "lr", "eta", "tau_ui", "tau_re"}) {
        train_cmd->add_option("--" + std::string(key), flag_overrides[key]);
    }
    std::string encoder_flag;
    int layers_flag = -1;
    int max_epochs_flag = -1;
    train_cmd->add_option("--encoder", encoder_flag, "mf or lightgcn");
    train_cmd->add_option("--layers", layers_flag, "lightgcn depth");
    train_cmd->add_option("--max-epochs", max_epochs_flag);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a snapshot");
    eval_cmd->add_option("--config", eval_args.config)->required();
    eval_cmd->add_option("--snapshot", eval_args.snapshot)->required();
    eval_cmd->add_option("--split", eval_args.split_dir)->required();
    eval_cmd->add_flag("--all", eval_args.all_scenarios,
                       "all scenario x split combinations");
    eval_cmd->add_option("--scenario", eval_args.scenario, "warm|cold|all");
    eval_cmd->add_option("--part", eval_args.part, "val|test");
    eval_cmd->add_flag("--per-user", eval_args.per_user, "write per-user CSV");
    eval_cmd->add_option("--out", eval_args.out)->required();

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck",
                                      "finite-difference gradient verification");
    gc_cmd->add_option("--trials", gc.trials);
    gc_cmd->add_option("--seed", gc.seed);

    ExportArgs ex;
    auto* ex_cmd = app.add_subcommand("export-figs", "export tidy CSV series");
    ex_cmd->add_option("--run", ex.runs, "run directory (repeatable)");
    ex_cmd->add_option("--sweep", ex.sweeps,
                       "train a sweep, e.g. --sweep rho=0,0.2,0.5");
    ex_cmd->add_option("--config", ex.config);
    ex_cmd->add_option("--split", ex.split_dir);
    ex_cmd->add_option("--out", ex.out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) return cmd_synth(synth);
        if (*split_cmd) return cmd_split(split);
        if (*train_cmd) {
            auto cfg = clcrec::load_config(train_config);
            if (has_seed) cfg.seed = seed_val;
            if (has_out) cfg.out_dir = train_out;
            for (const auto& [key, value] : flag_overrides) {
                if (!value.empty()) apply_param(cfg, key, std::stod(value));
            }
            if (!encoder_flag.empty()) {
                if (encoder_flag == "mf") cfg.encoder.kind = clcrec::EncoderKind::MF;
                else if (encoder_flag == "lightgcn")
                    cfg.encoder.kind = clcrec::EncoderKind::LightGCN;
                else throw clcrec::ConfigError("unknown encoder '" + encoder_flag + "'");
            }
            if (layers_flag > 0) cfg.encoder.layers = layers_flag;
            if (max_epochs_flag >= 0) cfg.max_epochs = max_epochs_flag;
            if (cfg.out_dir.empty()) {
                throw clcrec::ConfigError("no output directory (--out or run.out)");
            }
            return cmd_train(cfg, train_split, grid_specs);
        }
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*gc_cmd) return cmd_gradcheck(gc);
        if (*ex_cmd) return cmd_export_figs(ex);
    } catch (const clcrec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const clcrec::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const clcrec::ArtifactMismatch& e) {
        std::cerr << "artifact mismatch: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
