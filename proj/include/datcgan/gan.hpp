#pragma once

// The decision-aware conditional WGAN: per-asset generators, per-step
// return discriminators, per-(quantity, step) decision discriminators, the
// weighted surrogate losses and the alternating clip-train loop. Synthetic
// decision quantities are always computed from generated blocks through the
// same chain as the real data, with the EMA state seeded from the anchor.

#include "datcgan/common.hpp"
#include "datcgan/decision.hpp"
#include "datcgan/markets.hpp"
#include "datcgan/rng.hpp"
#include "datcgan/sampler.hpp"
#include "datcgan/tensor_nn.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace datcgan::gan {

// ---------------------------------------------------------------------------
// variants and decision quantities
// ---------------------------------------------------------------------------

enum class Variant { RetUtility, Ret, OneStep, Single, Utility };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::RetUtility: return "ret_utility";
        case Variant::Ret: return "ret";
        case Variant::OneStep: return "one_step";
        case Variant::Single: return "single";
        case Variant::Utility: return "utility";
    }
    fail("unreachable variant");
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "ret_utility") return Variant::RetUtility;
    if (s == "ret") return Variant::Ret;
    if (s == "one_step") return Variant::OneStep;
    if (s == "single") return Variant::Single;
    if (s == "utility") return Variant::Utility;
    fail("unknown variant: " + s + " (expected ret_utility|ret|one_step|single|utility)");
}

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::RetUtility, Variant::Ret, Variant::OneStep,
                                        Variant::Single, Variant::Utility};
    return v;
}

// Decision quantities that can carry a trained loss term. Utility is the
// default; the others are available through configuration.
enum class Quantity { Mean, Covariance, Precision, Weights, PortfolioReturn, Utility };

inline std::string to_string(Quantity q) {
    switch (q) {
        case Quantity::Mean: return "mean";
        case Quantity::Covariance: return "covariance";
        case Quantity::Precision: return "precision";
        case Quantity::Weights: return "weights";
        case Quantity::PortfolioReturn: return "portfolio_return";
        case Quantity::Utility: return "utility";
    }
    fail("unreachable quantity");
}

inline Quantity quantity_from_string(const std::string& s) {
    if (s == "mean") return Quantity::Mean;
    if (s == "covariance") return Quantity::Covariance;
    if (s == "precision") return Quantity::Precision;
    if (s == "weights") return Quantity::Weights;
    if (s == "portfolio_return") return Quantity::PortfolioReturn;
    if (s == "utility") return Quantity::Utility;
    fail("unknown quantity: " + s);
}

inline int sym_dim(int d) { return d * (d + 1) / 2; }

inline int quantity_dim(Quantity q, int d) {
    switch (q) {
        case Quantity::Mean: return d;
        case Quantity::Covariance: return sym_dim(d);
        case Quantity::Precision: return sym_dim(d);
        case Quantity::Weights: return d;
        case Quantity::PortfolioReturn: return 1;
        case Quantity::Utility: return 1;
    }
    fail("unreachable quantity");
}

// Upper-triangle (row-major, diagonal included) vectorization of a symmetric
// matrix; the form discriminators and evaluation pools consume.
inline Vec sym_upper_vec(const Mat& m) {
    const int d = static_cast<int>(m.rows());
    Vec v(sym_dim(d));
    int idx = 0;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) v(idx++) = m(i, j);
    return v;
}

inline Vec quantity_value(Quantity q, const decision::ChainStep& step) {
    switch (q) {
        case Quantity::Mean: return step.u_hat;
        case Quantity::Covariance: return sym_upper_vec(step.sigma_hat);
        case Quantity::Precision: return sym_upper_vec(step.h_hat);
        case Quantity::Weights: return step.w;
        case Quantity::PortfolioReturn: return Vec::Constant(1, step.p);
        case Quantity::Utility: return Vec::Constant(1, step.U);
    }
    fail("unreachable quantity");
}

// Scatter a gradient on the vectorized quantity back into chain adjoints.
inline void quantity_adjoint(Quantity q, const Vec& qbar, int d, decision::StepAdjoint& adj) {
    auto ensure_vec = [&](Vec& v) {
        if (v.size() == 0) v = Vec::Zero(d);
    };
    auto ensure_mat = [&](Mat& m) {
        if (m.size() == 0) m = Mat::Zero(d, d);
    };
    switch (q) {
        case Quantity::Mean:
            ensure_vec(adj.u_hat);
            adj.u_hat += qbar;
            return;
        case Quantity::Covariance: {
            ensure_mat(adj.sigma_hat);
            int idx = 0;
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) adj.sigma_hat(i, j) += qbar(idx++);
            return;
        }
        case Quantity::Precision: {
            ensure_mat(adj.h_hat);
            int idx = 0;
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) adj.h_hat(i, j) += qbar(idx++);
            return;
        }
        case Quantity::Weights:
            ensure_vec(adj.w);
            adj.w += qbar;
            return;
        case Quantity::PortfolioReturn:
            adj.p += qbar(0);
            return;
        case Quantity::Utility:
            adj.U += qbar(0);
            return;
    }
    fail("unreachable quantity");
}

// Which loss terms a variant trains. Single replaces the separate terms with
// one discriminator per step over the concatenated (returns, utility) vector.
struct LossMask {
    bool returns_term = false;
    bool single_concat = false;
    std::vector<Quantity> quantities;  // empty unless quantity terms are trained
    int K = 1;                         // effective look-ahead
};

inline LossMask make_variant(Variant v, int K, std::vector<Quantity> configured = {Quantity::Utility}) {
    require(K >= 1, "make_variant: K must be >= 1");
    LossMask m;
    m.K = K;
    switch (v) {
        case Variant::RetUtility:
            m.returns_term = true;
            m.quantities = std::move(configured);
            break;
        case Variant::Ret:
            m.returns_term = true;
            break;
        case Variant::OneStep:
            m.returns_term = true;
            m.quantities = std::move(configured);
            m.K = 1;
            break;
        case Variant::Single:
            m.single_concat = true;
            break;
        case Variant::Utility:
            m.quantities = std::move(configured);
            break;
    }
    return m;
}

// ---------------------------------------------------------------------------
// banks
// ---------------------------------------------------------------------------

struct GeneratorBank {
    std::vector<nn::Net> nets;  // one per asset, input = features + noise
    int feature_dim = 5;
    int noise_dim = 8;

    int d() const { return static_cast<int>(nets.size()); }

    static GeneratorBank build(int d, int feature_dim, int noise_dim, int hidden, Rng& rng) {
        GeneratorBank g;
        g.feature_dim = feature_dim;
        g.noise_dim = noise_dim;
        const std::vector<int> dims{feature_dim + noise_dim, hidden, 1};
        for (int a = 0; a < d; ++a) {
            nn::Net net = nn::Net::dense(dims, nn::Activation::ReLU, nn::Activation::Identity);
            net.init_uniform(rng);
            g.nets.push_back(std::move(net));
        }
        return g;
    }

    double param_squared_norm() const {
        double s = 0;
        for (const auto& n : nets) s += n.param_squared_norm();
        return s;
    }
};

struct DiscriminatorBank {
    std::vector<nn::Net> ret;                      // per k, or empty
    std::vector<std::vector<nn::Net>> quant;       // [quantity][k]
    std::vector<Quantity> quant_kinds;             // parallel to `quant`
    std::vector<nn::Net> single;                   // per k, or empty

    // M -> hidden -> 1, ReLU hidden, identity output
    static DiscriminatorBank build(const LossMask& mask, int d, int cond_dim, int hidden, Rng& rng) {
        DiscriminatorBank b;
        auto make = [&](int quantity_dim) {
            const std::vector<int> dims{quantity_dim + cond_dim, hidden, 1};
            nn::Net net = nn::Net::dense(dims, nn::Activation::ReLU, nn::Activation::Identity);
            net.init_uniform(rng);
            return net;
        };
        if (mask.returns_term)
            for (int k = 0; k < mask.K; ++k) b.ret.push_back(make(d));
        for (Quantity q : mask.quantities) {
            std::vector<nn::Net> nets;
            for (int k = 0; k < mask.K; ++k) nets.push_back(make(quantity_dim(q, d)));
            b.quant.push_back(std::move(nets));
            b.quant_kinds.push_back(q);
        }
        if (mask.single_concat)
            for (int k = 0; k < mask.K; ++k) b.single.push_back(make(d + 1));
        return b;
    }

    void clip_all(double lb, double ub) {
        for (auto& n : ret) n.clip_params(lb, ub);
        for (auto& group : quant)
            for (auto& n : group) n.clip_params(lb, ub);
        for (auto& n : single) n.clip_params(lb, ub);
    }

    bool all_within(double lb, double ub) const {
        for (const auto& n : ret)
            if (!n.all_params_within(lb, ub)) return false;
        for (const auto& group : quant)
            for (const auto& n : group)
                if (!n.all_params_within(lb, ub)) return false;
        for (const auto& n : single)
            if (!n.all_params_within(lb, ub)) return false;
        return true;
    }

    double param_squared_norm() const {
        double s = 0;
        for (const auto& n : ret) s += n.param_squared_norm();
        for (const auto& group : quant)
            for (const auto& n : group) s += n.param_squared_norm();
        for (const auto& n : single) s += n.param_squared_norm();
        return s;
    }
};

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

enum class Optimizer { Sgd, RmsProp };

inline std::string to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "rmsprop"; }

inline Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "rmsprop") return Optimizer::RmsProp;
    fail("unknown optimizer: " + s);
}

struct TrainConfig {
    double alpha = 1e-5;
    double decay_base = 0.8;  // omega_k = lambda_{j,k} = decay_base^k
    int s_d = 1;
    int s_g = 5;
    double clip_lb = -0.5;
    double clip_ub = 0.5;
    int K = 4;
    int batch_size = 32;  // I
    long batches = 0;     // N
    Variant variant = Variant::RetUtility;
    std::vector<Quantity> quantities{Quantity::Utility};
    Optimizer optimizer = Optimizer::Sgd;
    double rmsprop_decay = 0.9;
    double rmsprop_eps = 1e-8;
    int log_interval = 100;
    std::uint64_t seed = 0;
    int noise_dim = 8;
    int generator_hidden = 4;
    int discriminator_hidden = 8;

    void validate() const {
        require(alpha > 0.0, "alpha must be > 0");
        require(decay_base > 0.0 && decay_base <= 1.0, "decay base must lie in (0,1]");
        require(s_d >= 1 && s_g >= 1, "s_d and s_g must be >= 1");
        require(clip_lb < clip_ub, "clip bounds must satisfy lb < ub");
        require(K >= 1, "K must be >= 1");
        require(batch_size >= 1, "batch size must be >= 1");
        require(batches >= 0, "batch count must be >= 0");
        require(log_interval >= 1, "log interval must be >= 1");
        require(noise_dim >= 1 && generator_hidden >= 1 && discriminator_hidden >= 1,
                "network dims must be >= 1");
    }

    double term_weight(int k) const { return std::pow(decay_base, k); }  // k is 1-based
};

struct TrainLogEntry {
    long step = 0;
    std::map<std::string, double> disc_terms;  // "returns_k1" -> L~ value
    double disc_objective = 0.0;
    double gen_objective = 0.0;
    double wall_ms = 0.0;
    double gen_param_norm = 0.0;
    double disc_param_norm = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;

    nlohmann::json entry_json(const TrainLogEntry& e) const {
        nlohmann::json j;
        j["step"] = e.step;
        j["disc_terms"] = e.disc_terms;
        j["disc_objective"] = e.disc_objective;
        j["gen_objective"] = e.gen_objective;
        j["wall_ms"] = e.wall_ms;
        j["gen_param_norm"] = e.gen_param_norm;
        j["disc_param_norm"] = e.disc_param_norm;
        return j;
    }
};

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

struct GeneratedBlock {
    Mat returns;                            // K x d
    std::vector<std::vector<nn::Tape>> tapes;  // [K][d], filled when traced
};

// noise[k] is d x noise_dim; every step conditions on the same x_t.
inline GeneratedBlock generate_block_with_noise(const GeneratorBank& gen,
                                                const markets::ConditioningState& cond,
                                                const std::vector<Mat>& noise, bool traced) {
    const int K = static_cast<int>(noise.size());
    const int d = gen.d();
    require(cond.d() == d, "generate_block: conditioning dim mismatch");
    require(static_cast<int>(cond.features.cols()) == gen.feature_dim,
            "generate_block: feature dim mismatch");
    GeneratedBlock out;
    out.returns = Mat(K, d);
    if (traced) out.tapes.assign(K, std::vector<nn::Tape>(d));
    Vec input(gen.feature_dim + gen.noise_dim);
    for (int k = 0; k < K; ++k) {
        require(noise[k].rows() == d && noise[k].cols() == gen.noise_dim,
                "generate_block: noise shape mismatch");
        for (int a = 0; a < d; ++a) {
            input.head(gen.feature_dim) = cond.asset_features(a);
            input.tail(gen.noise_dim) = noise[k].row(a).transpose();
            nn::Tape* tape = traced ? &out.tapes[k][a] : nullptr;
            out.returns(k, a) = gen.nets[a].forward(input, tape)(0);
        }
    }
    require(out.returns.allFinite(), "generate_block: non-finite generator output");
    return out;
}

inline std::vector<Mat> draw_noise(int K, int d, int noise_dim, Rng& rng) {
    std::vector<Mat> noise(K);
    for (int k = 0; k < K; ++k) {
        noise[k] = Mat(d, noise_dim);
        for (int a = 0; a < d; ++a)
            for (int z = 0; z < noise_dim; ++z) noise[k](a, z) = rng.normal();
    }
    return noise;
}

inline Mat generate_block(const GeneratorBank& gen, const markets::ConditioningState& cond, int K,
                          Rng& rng) {
    return generate_block_with_noise(gen, cond, draw_noise(K, gen.d(), gen.noise_dim, rng), false)
        .returns;
}

// ---------------------------------------------------------------------------
// surrogate losses
// ---------------------------------------------------------------------------

struct LossTerm {
    std::string name;  // "returns", "utility", ..., "single"
    int k = 1;         // 1-based step
    double weight = 0.0;
    double e_real = 0.0;
    double e_synth = 0.0;

    double l_tilde() const { return e_real - e_synth; }
};

struct LossReport {
    std::vector<LossTerm> terms;
    double disc_objective = 0.0;  // sum_k w_k (E_real - E_synth)
    double gen_objective = 0.0;   // -sum_k w_k E_synth

    bool finite() const {
        for (const auto& t : terms)
            if (!std::isfinite(t.e_real) || !std::isfinite(t.e_synth)) return false;
        return std::isfinite(disc_objective) && std::isfinite(gen_objective);
    }

    const LossTerm* find(const std::string& name, int k) const {
        for (const auto& t : terms)
            if (t.name == name && t.k == k) return &t;
        return nullptr;
    }
};

namespace detail {

inline Vec disc_input(const Vec& quantity, const Vec& cond_flat) {
    Vec in(quantity.size() + cond_flat.size());
    in.head(quantity.size()) = quantity;
    in.tail(cond_flat.size()) = cond_flat;
    return in;
}

inline Vec single_quantity(const Mat& block, const std::vector<decision::ChainStep>& chain, int k) {
    const int d = static_cast<int>(block.cols());
    Vec v(d + 1);
    v.head(d) = block.row(k).transpose();
    v(d) = chain[static_cast<std::size_t>(k)].U;
    return v;
}

}  // namespace detail

// One batch worth of data, shared by loss evaluation and both update phases.
struct Batch {
    std::vector<int> anchors;
    std::vector<const markets::ConditioningState*> cond;
    std::vector<Mat> real_blocks;
    std::vector<const std::vector<decision::ChainStep>*> real_chains;
    std::vector<GeneratedBlock> synth_blocks;
    std::vector<std::vector<decision::ChainStep>> synth_chains;

    int size() const { return static_cast<int>(anchors.size()); }
};

// Sample means of the discriminator outputs on real and synthetic data for
// every active loss term, plus the two objectives they induce.
inline LossReport surrogate_losses(const DiscriminatorBank& disc, const LossMask& mask,
                                   const TrainConfig& cfg, const Batch& batch) {
    const int I = batch.size();
    require(I > 0, "surrogate_losses: empty batch");
    LossReport rep;
    auto mean_pair = [&](const nn::Net& net, auto&& real_vec, auto&& synth_vec) {
        double er = 0.0, es = 0.0;
        for (int i = 0; i < I; ++i) {
            const Vec cflat = batch.cond[i]->flat();
            er += net.forward(detail::disc_input(real_vec(i), cflat))(0);
            es += net.forward(detail::disc_input(synth_vec(i), cflat))(0);
        }
        return std::make_pair(er / I, es / I);
    };

    for (int k = 0; k < mask.K; ++k) {
        if (mask.returns_term) {
            auto [er, es] = mean_pair(
                disc.ret[k], [&](int i) { return Vec(batch.real_blocks[i].row(k).transpose()); },
                [&](int i) { return Vec(batch.synth_blocks[i].returns.row(k).transpose()); });
            rep.terms.push_back({"returns", k + 1, cfg.term_weight(k + 1), er, es});
        }
        for (std::size_t j = 0; j < disc.quant_kinds.size(); ++j) {
            const Quantity q = disc.quant_kinds[j];
            auto [er, es] = mean_pair(
                disc.quant[j][k],
                [&](int i) { return quantity_value(q, (*batch.real_chains[i])[k]); },
                [&](int i) { return quantity_value(q, batch.synth_chains[i][k]); });
            rep.terms.push_back({to_string(q), k + 1, cfg.term_weight(k + 1), er, es});
        }
        if (mask.single_concat) {
            auto [er, es] = mean_pair(
                disc.single[k],
                [&](int i) { return detail::single_quantity(batch.real_blocks[i], *batch.real_chains[i], k); },
                [&](int i) {
                    return detail::single_quantity(batch.synth_blocks[i].returns, batch.synth_chains[i], k);
                });
            rep.terms.push_back({"single", k + 1, cfg.term_weight(k + 1), er, es});
        }
    }
    for (const auto& t : rep.terms) {
        rep.disc_objective += t.weight * t.l_tilde();
        rep.gen_objective -= t.weight * t.e_synth;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

class Trainer {
public:
    Trainer(const markets::ReturnPanel& panel, const TrainConfig& cfg,
            const decision::DecisionParams& params, const markets::Windows& windows)
        : cfg_(cfg),
          params_(params),
          mask_(make_variant(cfg.variant, cfg.K, cfg.quantities)),
          ctx_(panel, mask_.K, windows, params),
          rng_(cfg.seed) {
        cfg_.validate();
        params_.validate();
        const int d = panel.d();
        cond_dim_ = d * 5;
        Rng init_rng = Rng(cfg.seed).fork(0x494e4954);  // independent init stream
        gen_ = GeneratorBank::build(d, 5, cfg.noise_dim, cfg.generator_hidden, init_rng);
        disc_ = DiscriminatorBank::build(mask_, d, cond_dim_, cfg.discriminator_hidden, init_rng);
        if (cfg_.optimizer == Optimizer::RmsProp) init_optimizers();
    }

    const GeneratorBank& generator() const { return gen_; }
    const DiscriminatorBank& discriminators() const { return disc_; }
    GeneratorBank& mutable_generator() { return gen_; }
    const LossMask& mask() const { return mask_; }
    const TrainLog& log() const { return log_; }
    long step() const { return step_; }
    Rng& rng() { return rng_; }
    const decision::DecisionParams& params() const { return params_; }

    void restore(GeneratorBank gen, DiscriminatorBank disc, Rng rng, long step) {
        gen_ = std::move(gen);
        disc_ = std::move(disc);
        rng_ = rng;
        step_ = step;
    }

    // One outer iteration: s_d discriminator epochs then s_g generator epochs.
    void run_batch() {
        const auto t0 = std::chrono::steady_clock::now();
        for (int s = 0; s < cfg_.s_d; ++s) {
            sample_batch();
            regenerate_synthetic(false);
            discriminator_update();
        }
        LossReport report;
        for (int s = 0; s < cfg_.s_g; ++s) {
            regenerate_synthetic(true);
            report = generator_update();
        }
        ++step_;
        if (!report.finite())
            fail("non-finite loss at step " + std::to_string(step_) + "; batch dump: " + dump_batch());
        if (step_ % cfg_.log_interval == 0) {
            TrainLogEntry e;
            e.step = step_;
            for (const auto& t : report.terms) e.disc_terms[t.name + "_k" + std::to_string(t.k)] = t.l_tilde();
            e.disc_objective = report.disc_objective;
            e.gen_objective = report.gen_objective;
            e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            e.gen_param_norm = std::sqrt(gen_.param_squared_norm());
            e.disc_param_norm = std::sqrt(disc_.param_squared_norm());
            log_.entries.push_back(std::move(e));
        }
    }

    void run(long batches) {
        for (long n = 0; n < batches; ++n) run_batch();
    }

    LossReport losses_on_current_batch() { return surrogate_losses(disc_, mask_, cfg_, batch_); }

    const Batch& batch() const { return batch_; }

    // test hook: replace the generated blocks with copies of the real blocks
    void couple_synthetic_to_real() {
        for (int i = 0; i < batch_.size(); ++i) {
            batch_.synth_blocks[i].returns = batch_.real_blocks[i];
            batch_.synth_blocks[i].tapes.clear();
            batch_.synth_chains[i] =
                decision::decision_chain(batch_.real_blocks[i], *batch_.cond[i], params_);
        }
    }

    void sample_batch() {
        batch_ = Batch{};
        batch_.anchors = ctx_.draw_anchors(cfg_.batch_size, rng_);
        for (int t : batch_.anchors) {
            batch_.cond.push_back(&ctx_.conditioning(t));
            batch_.real_blocks.push_back(ctx_.real_block(t));
            batch_.real_chains.push_back(&ctx_.real_chain(t));
        }
        batch_.synth_blocks.resize(batch_.size());
        batch_.synth_chains.resize(batch_.size());
    }

    void regenerate_synthetic(bool traced) {
        for (int i = 0; i < batch_.size(); ++i) {
            batch_.synth_blocks[i] = generate_block_with_noise(
                gen_, *batch_.cond[i], draw_noise(mask_.K, gen_.d(), gen_.noise_dim, rng_), traced);
            batch_.synth_chains[i] =
                decision::decision_chain(batch_.synth_blocks[i].returns, *batch_.cond[i], params_);
        }
    }

    // Gradient ascent on E_real - E_synth per term with per-term weight, then
    // clip. The generator is never clipped.
    void discriminator_update() {
        const int I = batch_.size();
        for (int k = 0; k < mask_.K; ++k) {
            if (mask_.returns_term) {
                ascend(disc_ret_opt_, k, disc_.ret[k], cfg_.term_weight(k + 1),
                       [&](int i) { return Vec(batch_.real_blocks[i].row(k).transpose()); },
                       [&](int i) { return Vec(batch_.synth_blocks[i].returns.row(k).transpose()); }, I);
            }
            for (std::size_t j = 0; j < disc_.quant_kinds.size(); ++j) {
                const Quantity q = disc_.quant_kinds[j];
                ascend(disc_quant_opt_.empty() ? nullptr : &disc_quant_opt_[j][k], disc_.quant[j][k],
                       cfg_.term_weight(k + 1),
                       [&](int i) { return quantity_value(q, (*batch_.real_chains[i])[k]); },
                       [&](int i) { return quantity_value(q, batch_.synth_chains[i][k]); }, I);
            }
            if (mask_.single_concat) {
                ascend(disc_single_opt_, k, disc_.single[k], cfg_.term_weight(k + 1),
                       [&](int i) {
                           return detail::single_quantity(batch_.real_blocks[i], *batch_.real_chains[i], k);
                       },
                       [&](int i) {
                           return detail::single_quantity(batch_.synth_blocks[i].returns,
                                                          batch_.synth_chains[i], k);
                       },
                       I);
            }
        }
    }

    // Descend the generator loss -sum_k w_k E^G_k - sum_{j,k} l_jk E^{f,G}_jk
    // through the discriminators and the decision chain.
    LossReport generator_update() {
        const int I = batch_.size();
        const int d = gen_.d();
        LossReport report = surrogate_losses(disc_, mask_, cfg_, batch_);

        std::vector<nn::Gradients> gen_grads(d);
        bool grads_init = false;

        for (int i = 0; i < I; ++i) {
            const Vec cflat = batch_.cond[i]->flat();
            Mat rbar = Mat::Zero(mask_.K, d);
            std::vector<decision::StepAdjoint> adj(mask_.K);
            bool any_chain_adj = false;

            for (int k = 0; k < mask_.K; ++k) {
                const double wk = cfg_.term_weight(k + 1);
                if (mask_.returns_term) {
                    nn::Tape tape;
                    const Vec in =
                        detail::disc_input(batch_.synth_blocks[i].returns.row(k).transpose(), cflat);
                    disc_.ret[k].forward(in, &tape);
                    const Vec igrad = disc_.ret[k].backward(tape, Vec::Ones(1)).input;
                    rbar.row(k) += (-wk / I) * igrad.head(d).transpose();
                }
                for (std::size_t j = 0; j < disc_.quant_kinds.size(); ++j) {
                    const Quantity q = disc_.quant_kinds[j];
                    nn::Tape tape;
                    const Vec qv = quantity_value(q, batch_.synth_chains[i][k]);
                    disc_.quant[j][k].forward(detail::disc_input(qv, cflat), &tape);
                    const Vec igrad = disc_.quant[j][k].backward(tape, Vec::Ones(1)).input;
                    quantity_adjoint(q, (-wk / I) * igrad.head(qv.size()), d, adj[k]);
                    any_chain_adj = true;
                }
                if (mask_.single_concat) {
                    nn::Tape tape;
                    const Vec qv =
                        detail::single_quantity(batch_.synth_blocks[i].returns, batch_.synth_chains[i], k);
                    disc_.single[k].forward(detail::disc_input(qv, cflat), &tape);
                    const Vec igrad = disc_.single[k].backward(tape, Vec::Ones(1)).input;
                    rbar.row(k) += (-wk / I) * igrad.head(d).transpose();
                    adj[k].U += (-wk / I) * igrad(d);
                    any_chain_adj = true;
                }
            }
            if (any_chain_adj) {
                rbar += decision::decision_chain_backward(batch_.synth_blocks[i].returns, *batch_.cond[i],
                                                          params_, batch_.synth_chains[i], adj);
            }
            // push r'-gradients through the per-asset generators
            for (int k = 0; k < mask_.K; ++k) {
                for (int a = 0; a < d; ++a) {
                    const double g = rbar(k, a);
                    if (g == 0.0) continue;
                    auto grads =
                        gen_.nets[a].backward(batch_.synth_blocks[i].tapes[k][a], Vec::Constant(1, g));
                    if (!grads_init) {
                        for (int aa = 0; aa < d; ++aa) gen_grads[aa] = zeros_like(gen_.nets[aa]);
                        grads_init = true;
                    }
                    accumulate(gen_grads[a], grads);
                }
            }
        }
        if (grads_init) {
            for (int a = 0; a < d; ++a) {
                if (cfg_.optimizer == Optimizer::RmsProp)
                    gen_opt_[a].step(gen_.nets[a], gen_grads[a], cfg_.alpha, nn::StepDirection::Descent);
                else
                    gen_.nets[a].sgd_step(gen_grads[a], cfg_.alpha, nn::StepDirection::Descent);
            }
        }
        return report;
    }

    nlohmann::json optimizer_state() const {
        nlohmann::json j;
        if (cfg_.optimizer != Optimizer::RmsProp) return j;
        auto dump = [](const std::vector<nn::RmsProp>& v) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& o : v) arr.push_back(o.to_json());
            return arr;
        };
        j["generator"] = dump(gen_opt_);
        j["ret"] = dump(disc_ret_opt_);
        nlohmann::json q = nlohmann::json::array();
        for (const auto& group : disc_quant_opt_) q.push_back(dump(group));
        j["quant"] = std::move(q);
        j["single"] = dump(disc_single_opt_);
        return j;
    }

    void restore_optimizer_state(const nlohmann::json& j) {
        if (cfg_.optimizer != Optimizer::RmsProp || j.is_null() || j.empty()) return;
        auto load = [&](const nlohmann::json& arr) {
            std::vector<nn::RmsProp> v;
            for (const auto& e : arr) v.push_back(nn::RmsProp::from_json(e, cfg_.rmsprop_decay, cfg_.rmsprop_eps));
            return v;
        };
        gen_opt_ = load(j.at("generator"));
        disc_ret_opt_ = load(j.at("ret"));
        disc_quant_opt_.clear();
        for (const auto& group : j.at("quant")) disc_quant_opt_.push_back(load(group));
        disc_single_opt_ = load(j.at("single"));
    }

private:
    static nn::Gradients zeros_like(const nn::Net& net) {
        nn::Gradients g;
        for (const auto& l : net.layers())
            g.layers.push_back({Mat::Zero(l.weights.rows(), l.weights.cols()), Vec::Zero(l.bias.size())});
        g.input = Vec::Zero(net.input_dim());
        return g;
    }

    static void accumulate(nn::Gradients& acc, const nn::Gradients& g) {
        for (std::size_t i = 0; i < acc.layers.size(); ++i) {
            acc.layers[i].weights += g.layers[i].weights;
            acc.layers[i].bias += g.layers[i].bias;
        }
        acc.input += g.input;
    }

    void init_optimizers() {
        gen_opt_.assign(gen_.d(), nn::RmsProp(cfg_.rmsprop_decay, cfg_.rmsprop_eps));
        disc_ret_opt_.assign(disc_.ret.size(), nn::RmsProp(cfg_.rmsprop_decay, cfg_.rmsprop_eps));
        disc_quant_opt_.clear();
        for (const auto& group : disc_.quant)
            disc_quant_opt_.emplace_back(group.size(), nn::RmsProp(cfg_.rmsprop_decay, cfg_.rmsprop_eps));
        disc_single_opt_.assign(disc_.single.size(), nn::RmsProp(cfg_.rmsprop_decay, cfg_.rmsprop_eps));
    }

    template <typename RealFn, typename SynthFn>
    void ascend(std::vector<nn::RmsProp>& opts, int k, nn::Net& net, double weight, RealFn real_vec,
                SynthFn synth_vec, int I) {
        ascend(opts.empty() ? nullptr : &opts[k], net, weight, real_vec, synth_vec, I);
    }

    template <typename RealFn, typename SynthFn>
    void ascend(nn::RmsProp* opt, nn::Net& net, double weight, RealFn real_vec, SynthFn synth_vec,
                int I) {
        nn::Gradients acc = zeros_like(net);
        nn::Tape tape;
        for (int i = 0; i < I; ++i) {
            const Vec cflat = batch_.cond[i]->flat();
            net.forward(detail::disc_input(real_vec(i), cflat), &tape);
            accumulate(acc, net.backward(tape, Vec::Constant(1, 1.0 / I)));
            net.forward(detail::disc_input(synth_vec(i), cflat), &tape);
            accumulate(acc, net.backward(tape, Vec::Constant(1, -1.0 / I)));
        }
        if (cfg_.optimizer == Optimizer::RmsProp && opt)
            opt->step(net, acc, cfg_.alpha * weight, nn::StepDirection::Ascent);
        else
            net.sgd_step(acc, cfg_.alpha * weight, nn::StepDirection::Ascent);
        net.clip_params(cfg_.clip_lb, cfg_.clip_ub);
    }

    std::string dump_batch() const {
        nlohmann::json j;
        j["anchors"] = batch_.anchors;
        j["gen_param_norm"] = std::sqrt(gen_.param_squared_norm());
        j["disc_param_norm"] = std::sqrt(disc_.param_squared_norm());
        return j.dump();
    }

    TrainConfig cfg_;
    decision::DecisionParams params_;
    LossMask mask_;
    markets::PanelContext ctx_;
    Rng rng_;
    int cond_dim_ = 0;
    GeneratorBank gen_;
    DiscriminatorBank disc_;
    Batch batch_;
    TrainLog log_;
    long step_ = 0;

    std::vector<nn::RmsProp> gen_opt_;
    std::vector<nn::RmsProp> disc_ret_opt_;
    std::vector<std::vector<nn::RmsProp>> disc_quant_opt_;
    std::vector<nn::RmsProp> disc_single_opt_;
};

struct TrainResult {
    GeneratorBank gen;
    DiscriminatorBank disc;
    TrainLog log;
};

inline TrainResult train(const markets::ReturnPanel& panel, const TrainConfig& cfg,
                         const decision::DecisionParams& params,
                         const markets::Windows& windows = markets::kDefaultWindows) {
    Trainer trainer(panel, cfg, params, windows);
    trainer.run(cfg.batches);
    return {trainer.generator(), trainer.discriminators(), trainer.log()};
}

// ---------------------------------------------------------------------------
// checkpoint serialization
// ---------------------------------------------------------------------------

inline nlohmann::json bank_to_json(const std::vector<nn::Net>& nets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& n : nets) arr.push_back(n.to_json());
    return arr;
}

inline std::vector<nn::Net> bank_from_json(const nlohmann::json& arr) {
    std::vector<nn::Net> nets;
    for (const auto& j : arr) nets.push_back(nn::Net::from_json(j));
    return nets;
}

inline nlohmann::json generator_to_json(const GeneratorBank& g) {
    nlohmann::json j;
    j["feature_dim"] = g.feature_dim;
    j["noise_dim"] = g.noise_dim;
    j["nets"] = bank_to_json(g.nets);
    return j;
}

inline GeneratorBank generator_from_json(const nlohmann::json& j) {
    GeneratorBank g;
    g.feature_dim = j.at("feature_dim").get<int>();
    g.noise_dim = j.at("noise_dim").get<int>();
    g.nets = bank_from_json(j.at("nets"));
    return g;
}

inline nlohmann::json discriminators_to_json(const DiscriminatorBank& d) {
    nlohmann::json j;
    j["ret"] = bank_to_json(d.ret);
    nlohmann::json quant = nlohmann::json::array();
    for (std::size_t i = 0; i < d.quant.size(); ++i) {
        nlohmann::json g;
        g["quantity"] = to_string(d.quant_kinds[i]);
        g["nets"] = bank_to_json(d.quant[i]);
        quant.push_back(std::move(g));
    }
    j["quant"] = std::move(quant);
    j["single"] = bank_to_json(d.single);
    return j;
}

inline DiscriminatorBank discriminators_from_json(const nlohmann::json& j) {
    DiscriminatorBank d;
    d.ret = bank_from_json(j.at("ret"));
    for (const auto& g : j.at("quant")) {
        d.quant_kinds.push_back(quantity_from_string(g.at("quantity").get<std::string>()));
        d.quant.push_back(bank_from_json(g.at("nets")));
    }
    d.single = bank_from_json(j.at("single"));
    return d;
}

}  // namespace datcgan::gan
