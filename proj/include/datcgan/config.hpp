#pragma once

// Run configuration: one JSON document with strict unknown-key rejection,
// flag overrides applied on top by the CLI, and provenance sidecars that can
// reproduce any artifact byte for byte.

#include "datcgan/bounds.hpp"
#include "datcgan/common.hpp"
#include "datcgan/evaluate.hpp"
#include "datcgan/gan.hpp"
#include "datcgan/markets.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace datcgan::config {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                       const std::string& scope) {
    require(j.is_object(), "config: expected an object at " + scope);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key()))
            fail("config: unknown key '" + it.key() + "' in " + scope);
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

struct SimulatedDataConfig {
    int T = 2048;
    int burn_in = 100;
    int d = 4;
    std::vector<double> b{0.3, 0.1, 0.2, 0.1, 0.1};
    std::vector<double> zetas{0.55, 0.74, 0.86, 0.92};
    std::vector<double> mu;           // defaults to zeros(d)
    std::vector<std::vector<double>> sigma;  // defaults to the tridiagonal 0.6 spec
    double nu = 100.0;
    double train_fraction = 0.75;

    markets::DGPParams dgp() const {
        markets::DGPParams p;
        require(b.size() == 5, "config: data.simulated.b must have 5 coefficients");
        require(zetas.size() == 4, "config: data.simulated.zetas must have 4 entries");
        for (int i = 0; i < 5; ++i) p.b[i] = b[i];
        for (int i = 0; i < 4; ++i) p.zetas[i] = zetas[i];
        p.noise.nu = nu;
        p.noise.mu = Vec::Zero(d);
        if (!mu.empty()) {
            require(static_cast<int>(mu.size()) == d, "config: noise mu length != d");
            for (int i = 0; i < d; ++i) p.noise.mu(i) = mu[i];
        }
        if (sigma.empty()) {
            p.noise.sigma = Mat::Identity(d, d);
            for (int i = 0; i + 1 < d; ++i) {
                p.noise.sigma(i, i + 1) = 0.6;
                p.noise.sigma(i + 1, i) = 0.6;
            }
        } else {
            require(static_cast<int>(sigma.size()) == d, "config: noise sigma must be d x d");
            p.noise.sigma = Mat(d, d);
            for (int i = 0; i < d; ++i) {
                require(static_cast<int>(sigma[i].size()) == d, "config: noise sigma must be d x d");
                for (int j = 0; j < d; ++j) p.noise.sigma(i, j) = sigma[i][j];
            }
        }
        p.validate();
        return p;
    }

    int split_index() const {
        const int split = static_cast<int>(train_fraction * T);
        require(split > 0 && split < T, "config: train_fraction leaves an empty split");
        return split;
    }
};

struct CsvDataConfig {
    std::string path;
    std::vector<std::string> tickers{"XLB", "XLE", "XLF", "XLI"};
    std::string train_start = "1999-01-01";
    std::string train_end = "2006-12-31";
    std::string eval_start = "2007-01-01";
    std::string eval_end = "2016-12-31";
};

struct DataConfig {
    std::string source = "simulated";  // simulated | csv
    SimulatedDataConfig simulated;
    CsvDataConfig csv;
};

struct BetaConfig {
    std::string type = "geometric";   // geometric | grid
    double rho = 0.5;                 // geometric: beta(k) = rho^k
    std::vector<double> values;       // grid: beta(1..n)
    int grid_n = 64;
};

struct BoundConfig {
    bounds::BoundInputs inputs;
    BetaConfig beta;
    double target_delta = 0.0;  // > 0 requests a required-samples inversion
};

struct RunConfig {
    std::uint64_t seed = 7;
    std::string output_dir = "runs/out";
    DataConfig data;
    gan::TrainConfig train;
    decision::DecisionParams decision;
    markets::Windows windows = markets::kDefaultWindows;
    transport::EvalSettings evaluate;
    int checkpoint_interval = 500;
    BoundConfig bound;

    std::string resolved_output_dir() const {
        std::filesystem::path p(output_dir);
        if (p.is_relative()) {
            if (const char* root = std::getenv("DATCGAN_OUTPUT_ROOT")) p = std::filesystem::path(root) / p;
        }
        return p.string();
    }
};

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig cfg;
    detail::check_keys(j, {"seed", "output_dir", "data", "train", "decision", "conditioning_windows",
                           "evaluate", "checkpoint_interval", "bound"},
                       "top level");
    detail::read(j, "seed", cfg.seed);
    detail::read(j, "output_dir", cfg.output_dir);
    detail::read(j, "checkpoint_interval", cfg.checkpoint_interval);
    require(cfg.checkpoint_interval >= 1, "config: checkpoint_interval must be >= 1");

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::check_keys(d, {"source", "simulated", "csv"}, "data");
        detail::read(d, "source", cfg.data.source);
        require(cfg.data.source == "simulated" || cfg.data.source == "csv",
                "config: data.source must be 'simulated' or 'csv'");
        if (d.contains("simulated")) {
            const auto& s = d.at("simulated");
            detail::check_keys(
                s, {"T", "burn_in", "d", "b", "zetas", "mu", "sigma", "nu", "train_fraction"},
                "data.simulated");
            auto& sim = cfg.data.simulated;
            detail::read(s, "T", sim.T);
            detail::read(s, "burn_in", sim.burn_in);
            detail::read(s, "d", sim.d);
            detail::read(s, "b", sim.b);
            detail::read(s, "zetas", sim.zetas);
            detail::read(s, "mu", sim.mu);
            detail::read(s, "sigma", sim.sigma);
            detail::read(s, "nu", sim.nu);
            detail::read(s, "train_fraction", sim.train_fraction);
        }
        if (d.contains("csv")) {
            const auto& c = d.at("csv");
            detail::check_keys(c, {"path", "tickers", "train_start", "train_end", "eval_start", "eval_end"},
                               "data.csv");
            auto& csv = cfg.data.csv;
            detail::read(c, "path", csv.path);
            detail::read(c, "tickers", csv.tickers);
            detail::read(c, "train_start", csv.train_start);
            detail::read(c, "train_end", csv.train_end);
            detail::read(c, "eval_start", csv.eval_start);
            detail::read(c, "eval_end", csv.eval_end);
            require(csv.train_start <= csv.train_end && csv.train_end < csv.eval_start &&
                        csv.eval_start <= csv.eval_end,
                    "config: split dates must be ordered train_start<=train_end<eval_start<=eval_end");
        }
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t, {"alpha", "decay_base", "s_d", "s_g", "clip_lb", "clip_ub", "k",
                               "batch_size", "batches", "variant", "quantities", "optimizer",
                               "rmsprop_decay", "rmsprop_eps", "log_interval", "noise_dim",
                               "generator_hidden", "discriminator_hidden"},
                           "train");
        auto& tc = cfg.train;
        detail::read(t, "alpha", tc.alpha);
        detail::read(t, "decay_base", tc.decay_base);
        detail::read(t, "s_d", tc.s_d);
        detail::read(t, "s_g", tc.s_g);
        detail::read(t, "clip_lb", tc.clip_lb);
        detail::read(t, "clip_ub", tc.clip_ub);
        detail::read(t, "k", tc.K);
        detail::read(t, "batch_size", tc.batch_size);
        detail::read(t, "batches", tc.batches);
        if (t.contains("variant")) tc.variant = gan::variant_from_string(t.at("variant").get<std::string>());
        if (t.contains("quantities")) {
            tc.quantities.clear();
            for (const auto& q : t.at("quantities"))
                tc.quantities.push_back(gan::quantity_from_string(q.get<std::string>()));
            require(!tc.quantities.empty(), "config: train.quantities must not be empty");
        }
        if (t.contains("optimizer"))
            tc.optimizer = gan::optimizer_from_string(t.at("optimizer").get<std::string>());
        detail::read(t, "rmsprop_decay", tc.rmsprop_decay);
        detail::read(t, "rmsprop_eps", tc.rmsprop_eps);
        detail::read(t, "log_interval", tc.log_interval);
        detail::read(t, "noise_dim", tc.noise_dim);
        detail::read(t, "generator_hidden", tc.generator_hidden);
        detail::read(t, "discriminator_hidden", tc.discriminator_hidden);
    }
    cfg.train.seed = cfg.seed;

    if (j.contains("decision")) {
        const auto& d = j.at("decision");
        detail::check_keys(d, {"phi", "tau", "zeta", "paper_literal_weights"}, "decision");
        detail::read(d, "phi", cfg.decision.phi);
        detail::read(d, "tau", cfg.decision.tau);
        detail::read(d, "zeta", cfg.decision.zeta);
        detail::read(d, "paper_literal_weights", cfg.decision.paper_literal_weights);
    }

    if (j.contains("conditioning_windows")) {
        const auto& w = j.at("conditioning_windows");
        require(w.is_array() && w.size() == 4, "config: conditioning_windows must have 4 entries");
        for (int i = 0; i < 4; ++i) cfg.windows[i] = w[i].get<int>();
    }

    if (j.contains("evaluate")) {
        const auto& e = j.at("evaluate");
        detail::check_keys(e, {"k", "return_steps", "estimator_steps", "utility_steps", "lp_cap",
                               "sinkhorn_eps_factor", "sinkhorn_check", "draws_per_anchor"},
                           "evaluate");
        auto& ev = cfg.evaluate;
        detail::read(e, "k", ev.K);
        detail::read(e, "return_steps", ev.return_steps);
        detail::read(e, "estimator_steps", ev.estimator_steps);
        detail::read(e, "utility_steps", ev.utility_steps);
        detail::read(e, "lp_cap", ev.lp_cap_per_side);
        detail::read(e, "sinkhorn_eps_factor", ev.sinkhorn_eps_factor);
        detail::read(e, "sinkhorn_check", ev.sinkhorn_check);
        detail::read(e, "draws_per_anchor", ev.draws_per_anchor);
    }
    cfg.evaluate.seed = cfg.seed ^ 0xE7A1u;

    if (j.contains("bound")) {
        const auto& b = j.at("bound");
        detail::check_keys(b, {"b_r", "b_x", "b_f", "tau", "phi", "d", "k", "delta_beta", "l",
                               "l_tilde", "p", "i", "m", "eps", "c", "beta", "target_delta"},
                           "bound");
        auto& in = cfg.bound.inputs;
        detail::read(b, "b_r", in.B_r);
        detail::read(b, "b_x", in.B_x);
        detail::read(b, "b_f", in.B_f);
        detail::read(b, "tau", in.tau);
        detail::read(b, "phi", in.phi);
        detail::read(b, "d", in.d);
        detail::read(b, "k", in.K);
        detail::read(b, "delta_beta", in.delta_beta);
        detail::read(b, "l", in.L);
        detail::read(b, "l_tilde", in.L_tilde);
        detail::read(b, "p", in.p);
        detail::read(b, "i", in.I);
        detail::read(b, "m", in.M);
        detail::read(b, "eps", in.eps);
        detail::read(b, "c", in.C);
        detail::read(b, "target_delta", cfg.bound.target_delta);
        if (b.contains("beta")) {
            const auto& bb = b.at("beta");
            detail::check_keys(bb, {"type", "rho", "values", "grid_n"}, "bound.beta");
            detail::read(bb, "type", cfg.bound.beta.type);
            detail::read(bb, "rho", cfg.bound.beta.rho);
            detail::read(bb, "values", cfg.bound.beta.values);
            detail::read(bb, "grid_n", cfg.bound.beta.grid_n);
            require(cfg.bound.beta.type == "geometric" || cfg.bound.beta.type == "grid",
                    "config: bound.beta.type must be 'geometric' or 'grid'");
        }
    }

    cfg.train.validate();
    cfg.decision.validate();
    cfg.evaluate.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);  // allow comments
    // a provenance sidecar embeds the config under "config"
    if (j.contains("config") && j.contains("config_hash")) return parse_config(j.at("config"));
    return parse_config(j);
}

// Canonical JSON of the full effective configuration; hashing this is the
// provenance key.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    {
        nlohmann::json d;
        d["source"] = cfg.data.source;
        nlohmann::json s;
        const auto& sim = cfg.data.simulated;
        s["T"] = sim.T;
        s["burn_in"] = sim.burn_in;
        s["d"] = sim.d;
        s["b"] = sim.b;
        s["zetas"] = sim.zetas;
        if (!sim.mu.empty()) s["mu"] = sim.mu;
        if (!sim.sigma.empty()) s["sigma"] = sim.sigma;
        s["nu"] = sim.nu;
        s["train_fraction"] = sim.train_fraction;
        d["simulated"] = std::move(s);
        nlohmann::json c;
        const auto& csv = cfg.data.csv;
        c["path"] = csv.path;
        c["tickers"] = csv.tickers;
        c["train_start"] = csv.train_start;
        c["train_end"] = csv.train_end;
        c["eval_start"] = csv.eval_start;
        c["eval_end"] = csv.eval_end;
        d["csv"] = std::move(c);
        j["data"] = std::move(d);
    }
    {
        nlohmann::json t;
        const auto& tc = cfg.train;
        t["alpha"] = tc.alpha;
        t["decay_base"] = tc.decay_base;
        t["s_d"] = tc.s_d;
        t["s_g"] = tc.s_g;
        t["clip_lb"] = tc.clip_lb;
        t["clip_ub"] = tc.clip_ub;
        t["k"] = tc.K;
        t["batch_size"] = tc.batch_size;
        t["batches"] = tc.batches;
        t["variant"] = gan::to_string(tc.variant);
        std::vector<std::string> qs;
        for (auto q : tc.quantities) qs.push_back(gan::to_string(q));
        t["quantities"] = qs;
        t["optimizer"] = gan::to_string(tc.optimizer);
        t["rmsprop_decay"] = tc.rmsprop_decay;
        t["rmsprop_eps"] = tc.rmsprop_eps;
        t["log_interval"] = tc.log_interval;
        t["noise_dim"] = tc.noise_dim;
        t["generator_hidden"] = tc.generator_hidden;
        t["discriminator_hidden"] = tc.discriminator_hidden;
        j["train"] = std::move(t);
    }
    {
        nlohmann::json d;
        d["phi"] = cfg.decision.phi;
        d["tau"] = cfg.decision.tau;
        d["zeta"] = cfg.decision.zeta;
        d["paper_literal_weights"] = cfg.decision.paper_literal_weights;
        j["decision"] = std::move(d);
    }
    j["conditioning_windows"] = cfg.windows;
    {
        nlohmann::json e;
        const auto& ev = cfg.evaluate;
        e["k"] = ev.K;
        e["return_steps"] = ev.return_steps;
        e["estimator_steps"] = ev.estimator_steps;
        e["utility_steps"] = ev.utility_steps;
        e["lp_cap"] = ev.lp_cap_per_side;
        e["sinkhorn_eps_factor"] = ev.sinkhorn_eps_factor;
        e["sinkhorn_check"] = ev.sinkhorn_check;
        e["draws_per_anchor"] = ev.draws_per_anchor;
        j["evaluate"] = std::move(e);
    }
    {
        nlohmann::json b;
        const auto& in = cfg.bound.inputs;
        b["b_r"] = in.B_r;
        b["b_x"] = in.B_x;
        b["b_f"] = in.B_f;
        b["tau"] = in.tau;
        b["phi"] = in.phi;
        b["d"] = in.d;
        b["k"] = in.K;
        b["delta_beta"] = in.delta_beta;
        b["l"] = in.L;
        b["l_tilde"] = in.L_tilde;
        b["p"] = in.p;
        b["i"] = in.I;
        b["m"] = in.M;
        b["eps"] = in.eps;
        b["c"] = in.C;
        nlohmann::json bb;
        bb["type"] = cfg.bound.beta.type;
        bb["rho"] = cfg.bound.beta.rho;
        bb["values"] = cfg.bound.beta.values;
        bb["grid_n"] = cfg.bound.beta.grid_n;
        b["beta"] = std::move(bb);
        b["target_delta"] = cfg.bound.target_delta;
        j["bound"] = std::move(b);
    }
    return j;
}

inline std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(config_to_json(cfg).dump())); }

// Sidecar next to every artifact: rerunning the same command with the sidecar
// as the config reproduces the artifact byte for byte.
inline void write_provenance(const RunConfig& cfg, const std::string& artifact_path,
                             const std::string& command) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config_hash"] = config_hash(cfg);
    j["config"] = config_to_json(cfg);
    std::ofstream out(artifact_path + ".provenance.json");
    require(out.good(), "cannot write provenance sidecar for " + artifact_path);
    out << j.dump(2) << "\n";
}

}  // namespace datcgan::config
