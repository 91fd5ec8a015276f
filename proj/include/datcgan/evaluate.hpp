#pragma once

// Wasserstein evaluation of a generator checkpoint against held-out data.
// For every anchor in the evaluation range one (or more) synthetic block is
// rolled out under the same conditioning as the real block; chain quantities
// are pooled across anchors and compared pool-to-pool.
//
// Step conventions in the report: returns at step k compare r_{t+k} with
// r'_{t,k}; precision and weights at step k compare the estimates computed
// from the first k block returns (so with K=4 their informative steps are
// 1..3, matching the reported step set {1,3}).

#include "datcgan/decision.hpp"
#include "datcgan/gan.hpp"
#include "datcgan/markets.hpp"
#include "datcgan/sampler.hpp"
#include "datcgan/transport.hpp"

#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace datcgan::transport {

struct EvalSettings {
    int K = 4;  // rollout length; independent of the training K
    std::vector<int> return_steps{1, 4};
    std::vector<int> estimator_steps{1, 3};
    std::vector<int> utility_steps{};  // off by default
    int lp_cap_per_side = 512;
    double sinkhorn_eps_factor = 0.05;  // eps = factor * median pairwise cost
    bool sinkhorn_check = false;        // emit a sinkhorn row next to each exact row
    int draws_per_anchor = 1;
    std::uint64_t seed = 0;

    void validate() const {
        require(K >= 1, "evaluate: K must be >= 1");
        require(lp_cap_per_side >= 2, "evaluate: LP cap must be >= 2");
        require(sinkhorn_eps_factor > 0.0, "evaluate: sinkhorn eps factor must be > 0");
        require(draws_per_anchor >= 1, "evaluate: draws per anchor must be >= 1");
        for (int k : return_steps) require(k >= 1 && k <= K, "evaluate: return step outside 1..K");
        for (int k : estimator_steps)
            require(k >= 1 && k <= K - 1, "evaluate: estimator step outside 1..K-1");
        for (int k : utility_steps) require(k >= 1 && k <= K, "evaluate: utility step outside 1..K");
    }
};

struct ReportRow {
    std::string variant;  // empty unless tagged by the caller
    long checkpoint_step = 0;
    std::string quantity;
    int k = 0;
    std::string solver;
    double distance = 0.0;
    int n_real = 0;
    int n_synth = 0;
    double eps = 0.0;  // sinkhorn regularization, 0 otherwise
};

struct WassersteinReport {
    std::vector<ReportRow> rows;

    void tag_variant(const std::string& v) {
        for (auto& r : rows) r.variant = v;
    }

    void append(const WassersteinReport& other) {
        rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    }
};

inline void write_report_csv(const WassersteinReport& report, const std::string& path,
                             bool include_variant) {
    std::ofstream out(path);
    require(out.good(), "cannot write report CSV: " + path);
    if (include_variant) out << "variant,";
    out << "checkpoint_step,quantity,k,solver,distance,n_real,n_synth,eps\n";
    for (const auto& r : report.rows) {
        if (include_variant) out << r.variant << ',';
        out << r.checkpoint_step << ',' << r.quantity << ',' << r.k << ',' << r.solver << ','
            << double_to_text(r.distance) << ',' << r.n_real << ',' << r.n_synth << ','
            << double_to_text(r.eps) << "\n";
    }
    require(out.good(), "write failed: " + path);
}

namespace detail {

struct Pools {
    // one matrix per report step; rows are pooled samples
    std::vector<int> steps;
    std::vector<Mat> real;
    std::vector<Mat> synth;
};

inline void measure_pool(WassersteinReport& report, long checkpoint_step, const std::string& quantity,
                         int k, const Mat& real, const Mat& synth, const EvalSettings& st, Rng& rng) {
    ReportRow row;
    row.checkpoint_step = checkpoint_step;
    row.quantity = quantity;
    row.k = k;
    row.n_real = static_cast<int>(real.rows());
    row.n_synth = static_cast<int>(synth.rows());
    if (real.cols() == 1) {
        std::vector<double> a(real.data(), real.data() + real.rows());
        std::vector<double> b(synth.data(), synth.data() + synth.rows());
        row.solver = "sorted-1d";
        row.distance = w1_sorted(a, b);
        report.rows.push_back(row);
        return;
    }
    const Mat ra = subsample_rows(real, st.lp_cap_per_side, rng);
    const Mat rb = subsample_rows(synth, st.lp_cap_per_side, rng);
    const PointCloud ca = PointCloud::from_rows(ra);
    const PointCloud cb = PointCloud::from_rows(rb);
    row.solver = "exact";
    row.distance = w_exact(ca, cb, static_cast<long>(st.lp_cap_per_side) * st.lp_cap_per_side).distance;
    row.n_real = ca.n();
    row.n_synth = cb.n();
    report.rows.push_back(row);
    if (st.sinkhorn_check) {
        ReportRow sk = row;
        sk.solver = "sinkhorn";
        sk.eps = st.sinkhorn_eps_factor * median_cost(euclidean_cost(ca, cb));
        sk.distance = w_sinkhorn(ca, cb, sk.eps).distance;
        report.rows.push_back(sk);
    }
}

}  // namespace detail

// Block source: (conditioning, real block, K, rng) -> K x d synthetic block.
// The default wraps a GeneratorBank; tests use a replay oracle that copies
// the real block to pin all distances at zero.
using BlockSource = std::function<Mat(const markets::ConditioningState&, const Mat&, int, Rng&)>;

inline BlockSource generator_source(const gan::GeneratorBank& gen) {
    return [&gen](const markets::ConditioningState& cond, const Mat&, int K, Rng& rng) {
        return gan::generate_block(gen, cond, K, rng);
    };
}

inline BlockSource replay_source() {
    return [](const markets::ConditioningState&, const Mat& real_block, int K, Rng&) {
        return Mat(real_block.topRows(K));
    };
}

inline WassersteinReport evaluate_with(const BlockSource& source, const markets::ReturnPanel& panel,
                                       markets::AnchorRange eval_range,
                                       const decision::DecisionParams& params,
                                       const markets::Windows& windows, const EvalSettings& settings,
                                       long checkpoint_step) {
    settings.validate();
    markets::PanelContext ctx(panel, settings.K, windows, params, eval_range);
    const int d = panel.d();
    const int anchors = ctx.range().size();
    const int pool = anchors * settings.draws_per_anchor;

    auto pools_for = [&](const std::vector<int>& steps, int dim) {
        detail::Pools p;
        p.steps = steps;
        p.real.assign(steps.size(), Mat(pool, dim));
        p.synth.assign(steps.size(), Mat(pool, dim));
        return p;
    };
    detail::Pools returns = pools_for(settings.return_steps, d);
    detail::Pools precision = pools_for(settings.estimator_steps, gan::sym_dim(d));
    detail::Pools weights = pools_for(settings.estimator_steps, d);
    detail::Pools utility = pools_for(settings.utility_steps, 1);

    Rng rng(settings.seed);
    int row = 0;
    for (int t = ctx.range().lo; t <= ctx.range().hi; ++t) {
        const auto& cond = ctx.conditioning(t);
        const Mat real_block = ctx.real_block(t);
        const auto& real_chain = ctx.real_chain(t);
        for (int draw = 0; draw < settings.draws_per_anchor; ++draw, ++row) {
            const Mat synth_block = source(cond, real_block, settings.K, rng);
            const auto synth_chain = decision::decision_chain(synth_block, cond, params);

            for (std::size_t si = 0; si < returns.steps.size(); ++si) {
                const int k = returns.steps[si];
                returns.real[si].row(row) = real_block.row(k - 1);
                returns.synth[si].row(row) = synth_block.row(k - 1);
            }
            for (std::size_t si = 0; si < precision.steps.size(); ++si) {
                const int k = precision.steps[si];  // estimate from R_{t,k} = chain step k+1
                precision.real[si].row(row) = gan::sym_upper_vec(real_chain[k].h_hat).transpose();
                precision.synth[si].row(row) = gan::sym_upper_vec(synth_chain[k].h_hat).transpose();
                weights.real[si].row(row) = real_chain[k].w.transpose();
                weights.synth[si].row(row) = synth_chain[k].w.transpose();
            }
            for (std::size_t si = 0; si < utility.steps.size(); ++si) {
                const int k = utility.steps[si];
                utility.real[si](row, 0) = real_chain[k - 1].U;
                utility.synth[si](row, 0) = synth_chain[k - 1].U;
            }
        }
    }

    WassersteinReport report;
    auto measure_all = [&](const std::string& name, const detail::Pools& p) {
        for (std::size_t si = 0; si < p.steps.size(); ++si)
            detail::measure_pool(report, checkpoint_step, name, p.steps[si], p.real[si], p.synth[si],
                                 settings, rng);
    };
    measure_all("returns", returns);
    measure_all("precision", precision);
    measure_all("weights", weights);
    measure_all("utility", utility);
    return report;
}

inline WassersteinReport evaluate(const gan::GeneratorBank& gen, const markets::ReturnPanel& panel,
                                  markets::AnchorRange eval_range,
                                  const decision::DecisionParams& params,
                                  const markets::Windows& windows, const EvalSettings& settings,
                                  long checkpoint_step) {
    return evaluate_with(generator_source(gen), panel, eval_range, params, windows, settings,
                         checkpoint_step);
}

}  // namespace datcgan::transport
