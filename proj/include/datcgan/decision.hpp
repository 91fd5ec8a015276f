#pragma once

// The mean-variance decision chain evaluated on a K-step block of returns:
// EMA estimators (u_hat, sigma_hat), shrinkage precision h_hat, budget-
// constrained weights w, realized portfolio return p and utility U. The same
// chain runs on real and synthetic blocks; a companion analytic backward pass
// propagates adjoints of any chain quantity to every block return, which the
// generator update needs.

#include "datcgan/common.hpp"
#include "datcgan/markets.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

namespace datcgan::decision {

struct DecisionParams {
    double phi = 1.0;    // risk preference, > 0
    double tau = 0.01;   // shrinkage weight, (0,1)
    double zeta = 0.74;  // estimator smoothing, (0,1)
    bool paper_literal_weights = false;

    void validate() const {
        require(phi > 0.0, "phi must be > 0");
        require(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
        require(zeta > 0.0 && zeta < 1.0, "zeta must lie in (0,1)");
    }
};

struct ChainStep {
    Vec u_hat;
    Mat sigma_hat;
    Mat h_hat;
    Vec w;
    double p = 0.0;
    double U = 0.0;
    // cached for the backward pass
    double lambda = 0.0;
    double ones_h_ones = 0.0;
};

// Incoming adjoints for one step; leave fields empty/zero for unused slots.
struct StepAdjoint {
    Vec u_hat;      // size d or empty
    Mat sigma_hat;  // d x d or empty
    Mat h_hat;      // d x d or empty
    Vec w;          // size d or empty
    double p = 0.0;
    double U = 0.0;
};

inline std::pair<Vec, Mat> estimators_from_state(const markets::MAState& state) {
    Vec u = state.mean;
    Mat sigma = state.outer - u * u.transpose();
    return {std::move(u), std::move(sigma)};
}

// Folds r_new into the EMA state, then reads off the estimators:
// u_hat = zeta*MA_prev + (1-zeta)*r_new, sigma_hat = MA(r r^T) - u_hat u_hat^T.
inline std::pair<Vec, Mat> update_estimators(markets::MAState& state, const Vec& r_new) {
    require(r_new.size() == state.d(), "update_estimators: dimension mismatch");
    state.fold(r_new);
    return estimators_from_state(state);
}

// h_hat = ((1-tau) sym(sigma_hat) + tau I)^{-1}; SPD for any PSD input. A
// chain-produced sigma_hat is PSD exactly, but at extreme input scales
// roundoff can push an eigenvalue below zero; the guard clamps the spectrum
// and inverts analytically instead of failing.
inline Mat shrink_precision(const Mat& sigma_hat, double tau) {
    require(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
    require(sigma_hat.rows() == sigma_hat.cols(), "sigma_hat must be square");
    require(sigma_hat.allFinite(), "shrink_precision: non-finite covariance");
    const int d = static_cast<int>(sigma_hat.rows());
    const Mat sym = 0.5 * (sigma_hat + sigma_hat.transpose());
    const Mat a = (1.0 - tau) * sym + tau * Mat::Identity(d, d);
    Eigen::LLT<Mat> llt(a);
    if (llt.info() == Eigen::Success) return llt.solve(Mat::Identity(d, d));
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    require(es.info() == Eigen::Success, "shrink_precision: eigendecomposition failed");
    const Vec lam = es.eigenvalues().cwiseMax(0.0);
    const Vec inv = ((1.0 - tau) * lam.array() + tau).inverse();
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

struct WeightsSolution {
    Vec w;
    double lambda = 0.0;
    double ones_h_ones = 0.0;
};

// KKT solution of max_w w^T u - phi w^T S w s.t. 1^T w = 1, with S^{-1} = H:
// w = (1/(2 phi)) H (u - lambda 1), lambda = (1^T H u - 2 phi) / (1^T H 1).
inline WeightsSolution mean_variance_weights(const Vec& u_hat, const Mat& h_hat, double phi) {
    require(phi > 0.0, "phi must be > 0");
    require(h_hat.rows() == h_hat.cols() && h_hat.rows() == u_hat.size(), "weights: dim mismatch");
    const int d = static_cast<int>(u_hat.size());
    const Vec ones = Vec::Ones(d);
    const Vec h_ones = h_hat * ones;
    const double s = h_ones.sum();
    require(s > 0.0, "weights: 1^T H 1 <= 0 (H not SPD?)");
    WeightsSolution sol;
    sol.ones_h_ones = s;
    sol.lambda = (ones.dot(h_hat * u_hat) - 2.0 * phi) / s;
    sol.w = (h_hat * (u_hat - sol.lambda * ones)) / (2.0 * phi);
    return sol;
}

// The closed form as printed in the source derivation; violates the budget
// constraint by a factor of 4 (w^T 1 = 4). Kept behind a flag for comparison.
inline Vec mean_variance_weights_paper_literal(const Vec& u_hat, const Mat& h_hat, double phi) {
    const int d = static_cast<int>(u_hat.size());
    const Vec ones = Vec::Ones(d);
    const double s = ones.dot(h_hat * ones);
    require(s > 0.0, "weights: 1^T H 1 <= 0");
    const Vec shift = (ones.dot(h_hat * u_hat) * ones - 2.0 * phi * ones) / s;
    return (2.0 / phi) * (h_hat * (u_hat - shift));
}

inline std::pair<double, double> realize(const Vec& w, const Vec& r_realized, double phi) {
    require(w.size() == r_realized.size(), "realize: dim mismatch");
    const double p = w.dot(r_realized);
    return {p, p - phi * p * p};
}

// Forward chain over a K x d block (row k-1 holds r_{t+k}). Estimators at
// step k see returns only through step k-1; weights are decided before
// r_{t+k} is revealed and realized on it.
inline std::vector<ChainStep> decision_chain(const Mat& block, const markets::ConditioningState& cond,
                                             const DecisionParams& params) {
    params.validate();
    const int K = static_cast<int>(block.rows());
    const int d = static_cast<int>(block.cols());
    require(d == cond.d(), "decision_chain: block/conditioning dim mismatch");
    require(cond.ma_state.d() == d, "decision_chain: MA state dim mismatch");
    require(block.allFinite(), "decision_chain: non-finite block");

    markets::MAState state = cond.ma_state;
    state.zeta = params.zeta;

    std::vector<ChainStep> steps;
    steps.reserve(K);
    for (int k = 0; k < K; ++k) {
        ChainStep step;
        std::tie(step.u_hat, step.sigma_hat) = estimators_from_state(state);
        step.h_hat = shrink_precision(step.sigma_hat, params.tau);
        if (params.paper_literal_weights) {
            step.w = mean_variance_weights_paper_literal(step.u_hat, step.h_hat, params.phi);
            auto sol = mean_variance_weights(step.u_hat, step.h_hat, params.phi);
            step.lambda = sol.lambda;
            step.ones_h_ones = sol.ones_h_ones;
        } else {
            auto sol = mean_variance_weights(step.u_hat, step.h_hat, params.phi);
            step.w = std::move(sol.w);
            step.lambda = sol.lambda;
            step.ones_h_ones = sol.ones_h_ones;
        }
        const Vec r_k = block.row(k).transpose();
        std::tie(step.p, step.U) = realize(step.w, r_k, params.phi);
        steps.push_back(std::move(step));
        state.fold(r_k);
    }
    return steps;
}

// Reverse-mode pass: given per-step adjoints, returns d<adjoints, outputs>/dr
// for every block entry (K x d). Only valid for the KKT weight path.
inline Mat decision_chain_backward(const Mat& block, const markets::ConditioningState& cond,
                                   const DecisionParams& params, const std::vector<ChainStep>& steps,
                                   const std::vector<StepAdjoint>& adjoints) {
    require(!params.paper_literal_weights, "chain backward only supports the KKT weight solution");
    const int K = static_cast<int>(block.rows());
    const int d = static_cast<int>(block.cols());
    require(static_cast<int>(steps.size()) == K && static_cast<int>(adjoints.size()) == K,
            "chain backward: step/adjoint count mismatch");

    const double zeta = params.zeta;
    const double tau = params.tau;
    const double c = 1.0 / (2.0 * params.phi);
    const Vec ones = Vec::Ones(d);

    Mat rbar = Mat::Zero(K, d);
    Vec state_mean_bar = Vec::Zero(d);    // adjoint of the EMA mean after the fold at step k
    Mat state_outer_bar = Mat::Zero(d, d);

    for (int k = K - 1; k >= 0; --k) {
        const ChainStep& st = steps[k];
        const StepAdjoint& adj = adjoints[k];
        const Vec r_k = block.row(k).transpose();

        // Un-fold r_k: state' = zeta*state + (1-zeta)*{r, r r^T}.
        rbar.row(k) += ((1.0 - zeta) *
                        (state_mean_bar + (state_outer_bar + state_outer_bar.transpose()) * r_k))
                           .transpose();
        state_mean_bar *= zeta;
        state_outer_bar *= zeta;

        // U = p - phi p^2, p = w^T r_k.
        const double pbar = adj.p + adj.U * (1.0 - 2.0 * params.phi * st.p);
        rbar.row(k) += (pbar * st.w).transpose();
        Vec wbar = pbar * r_k;
        if (adj.w.size() > 0) wbar += adj.w;

        // w = c H y, y = u - lambda 1, lambda = (1^T H u - 2 phi)/s.
        const Vec h_wbar = st.h_hat * wbar;
        const Vec h_ones = st.h_hat * ones;
        const double a = h_wbar.sum();  // wbar^T H 1
        const double s = st.ones_h_ones;
        Vec ubar = c * (h_wbar - (a / s) * h_ones);
        const Vec y = st.u_hat - st.lambda * ones;
        Mat hbar = c * (wbar * y.transpose()) - (c * a / s) * (ones * st.u_hat.transpose()) +
                   (c * a * st.lambda / s) * (ones * ones.transpose());
        if (adj.h_hat.size() > 0) hbar += adj.h_hat;

        // H = A^{-1} with A = (1-tau) sym(Sigma) + tau I.
        const Mat abar = -(st.h_hat * hbar * st.h_hat);
        Mat sigbar = (1.0 - tau) * 0.5 * (abar + abar.transpose());
        if (adj.sigma_hat.size() > 0) sigbar += adj.sigma_hat;

        // Sigma = M - u u^T.
        ubar -= (sigbar + sigbar.transpose()) * st.u_hat;
        if (adj.u_hat.size() > 0) ubar += adj.u_hat;

        // u and M are the pre-fold EMA state at step k.
        state_mean_bar += ubar;
        state_outer_bar += sigbar;
    }
    return rbar;
}

// Convenience wrapper for the common generator-update case: adjoints on the
// utilities only.
inline Mat utility_gradients(const Mat& block, const markets::ConditioningState& cond,
                             const DecisionParams& params, const std::vector<ChainStep>& steps,
                             const Vec& u_bar_per_step) {
    std::vector<StepAdjoint> adj(steps.size());
    require(u_bar_per_step.size() == static_cast<int>(steps.size()), "utility_gradients: size mismatch");
    for (std::size_t k = 0; k < steps.size(); ++k) adj[k].U = u_bar_per_step(static_cast<int>(k));
    return decision_chain_backward(block, cond, params, steps, adj);
}

}  // namespace datcgan::decision
