#pragma once

// Subcommand implementations behind the CLI: simulate, train (with resumable
// checkpoints), evaluate, ablate and bound. Kept header-level so the test
// suite drives them in-process.

#include "datcgan/config.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace datcgan::commands {

namespace fs = std::filesystem;
using config::RunConfig;

// ---------------------------------------------------------------------------
// data loading and splits
// ---------------------------------------------------------------------------

struct DataBundle {
    markets::ReturnPanel full;
    markets::ReturnPanel train;
    markets::AnchorRange eval_range;  // anchors on `full`
};

inline markets::ReturnPanel simulate_full_panel(const RunConfig& cfg) {
    const auto& sim = cfg.data.simulated;
    return markets::simulate_panel(sim.dgp(), sim.T, sim.burn_in, cfg.seed);
}

inline std::pair<int, int> date_row_range(const markets::ReturnPanel& panel, const std::string& start,
                                          const std::string& end) {
    require(!panel.dates.empty(), "date split requested but the panel has no date index");
    int lo = -1, hi = -1;
    for (int t = 0; t < panel.T(); ++t) {
        if (lo < 0 && panel.dates[t] >= start) lo = t;
        if (panel.dates[t] <= end) hi = t;
    }
    require(lo >= 0 && hi >= lo, "no panel rows inside [" + start + ", " + end + "]");
    return {lo, hi};
}

inline DataBundle load_data(const RunConfig& cfg) {
    DataBundle out;
    if (cfg.data.source == "simulated") {
        out.full = simulate_full_panel(cfg);
        const int split = cfg.data.simulated.split_index();
        out.train = out.full.prefix(split);
        out.eval_range = {split, out.full.T() - 1};
    } else {
        out.full = markets::load_etf_csv(cfg.data.csv.path, cfg.data.csv.tickers);
        const auto [tlo, thi] = date_row_range(out.full, cfg.data.csv.train_start, cfg.data.csv.train_end);
        (void)tlo;
        out.train = out.full.prefix(thi + 1);
        const auto [elo, ehi] = date_row_range(out.full, cfg.data.csv.eval_start, cfg.data.csv.eval_end);
        out.eval_range = {elo, ehi};
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

inline std::string step_prefix(long step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%08ld", step);
    return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write " + path);
    out << text;
    require(out.good(), "write failed: " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_checkpoint(const std::string& dir, const RunConfig& cfg, gan::Trainer& trainer) {
    const std::string prefix = (fs::path(dir) / step_prefix(trainer.step())).string();
    write_text(prefix + ".generator.json", gan::generator_to_json(trainer.generator()).dump(2) + "\n");
    write_text(prefix + ".discriminators.json",
               gan::discriminators_to_json(trainer.discriminators()).dump(2) + "\n");
    nlohmann::json manifest;
    manifest["version"] = config::kVersion;
    manifest["step"] = trainer.step();
    manifest["variant"] = gan::to_string(cfg.train.variant);
    manifest["config_hash"] = config::config_hash(cfg);
    manifest["rng"] = trainer.rng().serialize();
    manifest["optimizer_state"] = trainer.optimizer_state();
    manifest["files"] = {{"generator", fs::path(prefix).filename().string() + ".generator.json"},
                         {"discriminators", fs::path(prefix).filename().string() + ".discriminators.json"}};
    write_text(prefix + ".manifest.json", manifest.dump(2) + "\n");
}

struct LoadedCheckpoint {
    long step = 0;
    std::string variant;
    std::string config_hash;
    std::string rng_state;
    nlohmann::json optimizer_state;
    gan::GeneratorBank gen;
    gan::DiscriminatorBank disc;
};

inline LoadedCheckpoint load_checkpoint(const std::string& manifest_path) {
    const auto manifest = nlohmann::json::parse(read_text(manifest_path));
    LoadedCheckpoint ck;
    ck.step = manifest.at("step").get<long>();
    ck.variant = manifest.at("variant").get<std::string>();
    ck.config_hash = manifest.at("config_hash").get<std::string>();
    ck.rng_state = manifest.at("rng").get<std::string>();
    if (manifest.contains("optimizer_state")) ck.optimizer_state = manifest.at("optimizer_state");
    const fs::path dir = fs::path(manifest_path).parent_path();
    const auto& files = manifest.at("files");
    ck.gen = gan::generator_from_json(
        nlohmann::json::parse(read_text((dir / files.at("generator").get<std::string>()).string())));
    ck.disc = gan::discriminators_from_json(
        nlohmann::json::parse(read_text((dir / files.at("discriminators").get<std::string>()).string())));
    return ck;
}

inline std::vector<std::string> find_manifests(const std::string& dir_or_file) {
    if (!fs::is_directory(dir_or_file)) {
        require(fs::exists(dir_or_file), "no such checkpoint: " + dir_or_file);
        return {dir_or_file};
    }
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir_or_file)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("step_") && name.ends_with(".manifest.json")) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    require(!out.empty(), "no checkpoints found under " + dir_or_file);
    return out;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

inline std::string cmd_simulate(const RunConfig& cfg, std::string out_path = "") {
    require(cfg.data.source == "simulated", "simulate requires data.source = simulated");
    const auto panel = simulate_full_panel(cfg);
    if (out_path.empty()) out_path = (fs::path(cfg.resolved_output_dir()) / "panel.csv").string();
    fs::create_directories(fs::path(out_path).parent_path());
    markets::write_panel_csv(panel, out_path);
    config::write_provenance(cfg, out_path, "simulate");
    return out_path;
}

inline std::string cmd_train(const RunConfig& cfg, const std::string& resume_manifest = "") {
    const std::string dir = cfg.resolved_output_dir();
    fs::create_directories(dir);
    const DataBundle data = load_data(cfg);
    gan::Trainer trainer(data.train, cfg.train, cfg.decision, cfg.windows);

    if (!resume_manifest.empty()) {
        auto ck = load_checkpoint(resume_manifest);
        require(ck.config_hash == config::config_hash(cfg),
                "resume: checkpoint was produced by a different configuration (hash mismatch)");
        trainer.restore(std::move(ck.gen), std::move(ck.disc), Rng::deserialize(ck.rng_state), ck.step);
        trainer.restore_optimizer_state(ck.optimizer_state);
    } else {
        write_checkpoint(dir, cfg, trainer);  // step 0
    }

    std::ofstream log_out((fs::path(dir) / "trainlog.jsonl").string(), std::ios::app);
    std::size_t logged = trainer.log().entries.size();
    while (trainer.step() < cfg.train.batches) {
        trainer.run_batch();
        if (trainer.step() % cfg.checkpoint_interval == 0 || trainer.step() == cfg.train.batches)
            write_checkpoint(dir, cfg, trainer);
        for (; logged < trainer.log().entries.size(); ++logged)
            log_out << trainer.log().entry_json(trainer.log().entries[logged]).dump() << "\n";
    }
    config::write_provenance(cfg, (fs::path(dir) / "run").string(), "train");
    return dir;
}

inline transport::WassersteinReport evaluate_checkpoints(const RunConfig& cfg,
                                                         const std::vector<std::string>& manifests,
                                                         bool oracle_replay = false) {
    const DataBundle data = load_data(cfg);
    transport::WassersteinReport combined;
    for (const auto& path : manifests) {
        const auto ck = load_checkpoint(path);
        const auto source =
            oracle_replay ? transport::replay_source() : transport::generator_source(ck.gen);
        auto report = transport::evaluate_with(source, data.full, data.eval_range, cfg.decision,
                                               cfg.windows, cfg.evaluate, ck.step);
        combined.append(report);
    }
    return combined;
}

inline std::string cmd_evaluate(const RunConfig& cfg, const std::string& checkpoints,
                                std::string out_csv = "", bool oracle_replay = false) {
    const auto manifests = find_manifests(checkpoints);
    const auto report = evaluate_checkpoints(cfg, manifests, oracle_replay);
    if (out_csv.empty()) out_csv = (fs::path(cfg.resolved_output_dir()) / "wasserstein.csv").string();
    fs::create_directories(fs::path(out_csv).parent_path());
    transport::write_report_csv(report, out_csv, /*include_variant=*/false);
    config::write_provenance(cfg, out_csv, "evaluate");
    return out_csv;
}

// Trains every ablation variant off a shared data seed with per-variant
// model seeds, evaluates each checkpoint series and merges one report.
inline std::string cmd_ablate(const RunConfig& cfg) {
    const std::string root = cfg.resolved_output_dir();
    fs::create_directories(root);
    transport::WassersteinReport combined;
    for (std::size_t vi = 0; vi < gan::all_variants().size(); ++vi) {
        const gan::Variant v = gan::all_variants()[vi];
        RunConfig vc = cfg;
        vc.train.variant = v;
        vc.output_dir = (fs::path(cfg.output_dir) / "variants" / gan::to_string(v)).string();
        vc.train.seed = fnv1a64(gan::to_string(v)) ^ cfg.seed;  // model seed; data seed stays cfg.seed
        const std::string dir = cmd_train(vc);
        auto report = evaluate_checkpoints(vc, find_manifests(dir));
        report.tag_variant(gan::to_string(v));
        combined.append(report);
    }
    const std::string out_csv = (fs::path(root) / "ablation.csv").string();
    transport::write_report_csv(combined, out_csv, /*include_variant=*/true);
    config::write_provenance(cfg, out_csv, "ablate");
    return out_csv;
}

struct BoundOutput {
    nlohmann::json json;
    std::string table;
};

inline BoundOutput cmd_bound(const RunConfig& cfg) {
    const auto& in = cfg.bound.inputs;
    const auto lemma = bounds::lemma1_bounds(in.B_r, in.tau, in.phi, in.d);
    const auto prob = bounds::theorem1_failure_prob(in);

    std::function<double(int)> beta;
    double tail = 0.0;
    int grid_n = cfg.bound.beta.grid_n;
    if (cfg.bound.beta.type == "geometric") {
        const double rho = cfg.bound.beta.rho;
        require(rho >= 0.0 && rho < 1.0, "bound.beta.rho must lie in [0,1) for a summable tail");
        beta = [rho](int k) { return std::pow(rho, k); };
        tail = std::pow(rho, grid_n + 1) / (1.0 - rho);
    } else {
        const auto values = cfg.bound.beta.values;
        require(!values.empty(), "bound.beta.values must not be empty for type=grid");
        grid_n = static_cast<int>(values.size());
        beta = [values](int k) { return (k >= 1 && k <= static_cast<int>(values.size())) ? values[k - 1] : 0.0; };
    }
    const auto mixing = bounds::mixing_matrix_norm(beta, grid_n, in.K, tail);

    nlohmann::json j;
    j["lemma1"] = {{"u_abs", lemma.u_abs},
                   {"sigma_entry_abs", lemma.sigma_entry_abs},
                   {"h_eig_max", lemma.h_eig_max},
                   {"h_eig_min", lemma.h_eig_min},
                   {"lambda_abs", lemma.lambda_abs},
                   {"w_norm", lemma.w_norm},
                   {"p_abs", lemma.p_abs},
                   {"utility_abs", lemma.utility_abs}};
    j["theorem1"] = {{"b_star", in.b_star()},
                     {"log_failure_bound", prob.log_value},
                     {"failure_probability_bound", prob.probability},
                     {"success_probability_bound", 1.0 - prob.probability}};
    j["mixing"] = {{"h_inf_bound", mixing.bound}, {"exact_row_max", mixing.exact_row_max}};
    if (cfg.bound.target_delta > 0.0) {
        j["required_samples"] = bounds::required_samples(in, cfg.bound.target_delta);
        j["target_delta"] = cfg.bound.target_delta;
    }

    char buf[256];
    std::string table;
    auto push = [&](const char* name, double v) {
        std::snprintf(buf, sizeof(buf), "  %-28s %.6g\n", name, v);
        table += buf;
    };
    table += "decision-chain support bounds (B_r = " + double_to_text(in.B_r) + "):\n";
    push("|u_hat| <=", lemma.u_abs);
    push("|sigma_hat entry| <=", lemma.sigma_entry_abs);
    push("lambda_max(H) <=", lemma.h_eig_max);
    push("lambda_min(H) >=", lemma.h_eig_min);
    push("|lambda| <=", lemma.lambda_abs);
    push("||w|| <=", lemma.w_norm);
    push("|p| <=", lemma.p_abs);
    push("|U| <=", lemma.utility_abs);
    table += "generalization bound:\n";
    push("B_*", in.b_star());
    push("log failure bound", prob.log_value);
    push("failure probability <=", prob.probability);
    table += "mixing:\n";
    push("||H_n||_inf <=", mixing.bound);
    push("exact row max", mixing.exact_row_max);
    if (cfg.bound.target_delta > 0.0) {
        table += "sample-size inversion:\n";
        push("required I", static_cast<double>(j["required_samples"].get<long long>()));
    }

    BoundOutput out{std::move(j), std::move(table)};
    const std::string dir = cfg.resolved_output_dir();
    fs::create_directories(dir);
    const std::string json_path = (fs::path(dir) / "bound.json").string();
    write_text(json_path, out.json.dump(2) + "\n");
    config::write_provenance(cfg, json_path, "bound");
    return out;
}

}  // namespace datcgan::commands
