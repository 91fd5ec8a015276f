#pragma once

// Theory-as-code: boundedness constants for the decision chain and the
// generalization-bound calculator, evaluated in log space so parameter
// magnitudes up to ~1e300 neither overflow nor underflow.

#include "datcgan/common.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace datcgan::bounds {

// Support bounds for every decision-chain output, driven only by the return
// bound B_r and the decision parameters. The eigenvalue floor is the printed
// Frobenius-norm argument; the downstream caps compose from it.
struct Lemma1Bounds {
    double u_abs = 0.0;           // |u_hat_i| <= B_r
    double sigma_entry_abs = 0.0; // |sigma_hat_ij| <= 2 B_r^2
    double h_eig_max = 0.0;       // lambda_max(H) <= 1/tau
    double h_eig_min = 0.0;       // lambda_min(H) >= 1/(sqrt((1-tau)^2 B_r^2 + tau^2) d)
    double lambda_abs = 0.0;      // KKT multiplier cap
    double w_norm = 0.0;          // ||w||_2 cap
    double p_abs = 0.0;           // |w^T r| cap
    double utility_abs = 0.0;     // |p - phi p^2| cap
};

inline Lemma1Bounds lemma1_bounds(double B_r, double tau, double phi, int d) {
    require(B_r > 0.0, "B_r must be > 0");
    require(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
    require(phi > 0.0, "phi must be > 0");
    require(d >= 1, "d must be >= 1");

    Lemma1Bounds b;
    b.u_abs = B_r;
    b.sigma_entry_abs = 2.0 * B_r * B_r;
    b.h_eig_max = 1.0 / tau;
    b.h_eig_min = 1.0 / (std::sqrt((1.0 - tau) * (1.0 - tau) * B_r * B_r + tau * tau) * d);

    const double sqrt_d = std::sqrt(static_cast<double>(d));
    const double u_norm = sqrt_d * b.u_abs;
    // |1^T H u| <= sqrt(d) lambda_max ||u||, 1^T H 1 >= d lambda_min
    b.lambda_abs = (sqrt_d * b.h_eig_max * u_norm + 2.0 * phi) / (d * b.h_eig_min);
    b.w_norm = (b.h_eig_max / (2.0 * phi)) * (u_norm + b.lambda_abs * sqrt_d);
    b.p_abs = b.w_norm * sqrt_d * B_r;
    b.utility_abs = b.p_abs + phi * b.p_abs * b.p_abs;
    return b;
}

struct BoundInputs {
    double B_r = 1.0;
    double B_x = 1.0;
    double B_f = 1.0;
    double tau = 0.01;
    double phi = 1.0;
    int d = 4;
    int K = 4;
    double delta_beta = 1.0;  // sum_k beta(k)
    double L = 1.0;           // parameter-Lipschitz constant of the nets
    double L_tilde = 1.0;     // input-Lipschitz constant of the discriminators
    double p = 100.0;         // discriminator parameter count
    double I = 1e6;           // sample count
    double M = 10.0;          // training iterations
    double eps = 0.1;         // target accuracy
    double C = 1.0;           // universal constant, exposed as a parameter

    void validate() const {
        require(B_r > 0 && B_x > 0 && B_f > 0, "support bounds must be positive");
        require(tau > 0 && tau < 1, "tau must lie in (0,1)");
        require(phi > 0, "phi must be > 0");
        require(d >= 1 && K >= 1, "d and K must be >= 1");
        require(delta_beta >= 0, "delta_beta must be nonnegative");
        require(L > 0 && L_tilde > 0, "Lipschitz constants must be positive");
        require(p > 0 && I > 0 && M >= 0, "p, I must be positive and M nonnegative");
        require(eps > 0, "eps must be > 0");
        require(C > 0, "C must be > 0");
    }

    double b_star() const {
        return std::sqrt(B_f * B_f + B_x * B_x) * (static_cast<double>(K) + delta_beta);
    }
};

struct FailureProb {
    double log_value = 0.0;  // log of C exp(p log(pL/eps)) (1+M) exp(-I eps^2/(L~^2 B*^2))
    double probability = 0.0;  // exp(log_value) clamped to [0,1]
};

// C exp(p log(pL/eps)) (1+M) exp(-I eps^2 / (L~^2 B*^2)), evaluated as a sum
// of logs. The concentration exponent is itself formed in log space so that
// I ~ 1e300 or eps ~ 1e-300 stay finite.
inline FailureProb theorem1_failure_prob(const BoundInputs& in) {
    in.validate();
    const double log_net = in.p * (std::log(in.p) + std::log(in.L) - std::log(in.eps));
    const double log_iter = std::log1p(in.M);
    const double log_bstar = 0.5 * std::log(in.B_f * in.B_f + in.B_x * in.B_x) +
                             std::log(static_cast<double>(in.K) + in.delta_beta);
    const double log_exponent =
        std::log(in.I) + 2.0 * std::log(in.eps) - 2.0 * std::log(in.L_tilde) - 2.0 * log_bstar;
    // exponent = -exp(log_exponent); saturates to -inf for huge samples
    const double exponent = (log_exponent > 709.0) ? -std::numeric_limits<double>::infinity()
                                                   : -std::exp(log_exponent);
    FailureProb out;
    out.log_value = std::log(in.C) + log_net + log_iter + exponent;
    out.probability = out.log_value >= 0.0 ? 1.0 : std::exp(out.log_value);
    return out;
}

// Smallest integer I with failure probability <= delta, by doubling then
// bisection (the bound is monotone decreasing in I).
inline long long required_samples(BoundInputs in, double delta) {
    require(delta > 0.0 && delta <= 1.0, "delta must lie in (0,1]");
    auto prob_at = [&](long long i) {
        in.I = static_cast<double>(i);
        return theorem1_failure_prob(in).probability;
    };
    if (prob_at(1) <= delta) return 1;
    long long hi = 2;
    while (prob_at(hi) > delta) {
        require(hi < (1LL << 62), "required_samples: no feasible I below 2^62");
        hi *= 2;
    }
    long long lo = hi / 2;  // prob(lo) > delta, prob(hi) <= delta
    while (hi - lo > 1) {
        const long long mid = lo + (hi - lo) / 2;
        if (prob_at(mid) <= delta) hi = mid;
        else lo = mid;
    }
    return hi;
}

struct MixingNorm {
    double bound = 0.0;         // min(n, K + sum_k beta(k))
    double exact_row_max = 0.0; // max_i 1 + sum_{j>i} eta_bar_{i,j} on the grid
};

// ||H_n||_inf for the block dependency matrix: entries 1 on and within K-1 of
// the diagonal, beta(|j-i-K+1|) beyond. The closed-form cap is K + Delta_beta
// with Delta_beta = sum_{k>=1} beta(k); `tail_beyond_grid` supplies the mass
// past the n evaluated lags (0 for tabulated coefficients).
inline MixingNorm mixing_matrix_norm(const std::function<double(int)>& beta, int n, int K,
                                     double tail_beyond_grid = 0.0) {
    require(n >= 1 && K >= 1, "mixing_matrix_norm: n and K must be >= 1");
    require(std::isfinite(tail_beyond_grid) && tail_beyond_grid >= 0.0,
            "mixing_matrix_norm: divergent or negative beta tail");
    MixingNorm out;
    double grid_mass = 0.0;
    for (int k = 1; k <= n; ++k) {
        const double v = beta(k);
        require(v >= 0.0 && std::isfinite(v), "mixing coefficients must be nonnegative and finite");
        grid_mass += v;
    }
    // exact row sums of the upper-triangular dependency matrix
    double best = 1.0;
    for (int i = 1; i <= n; ++i) {
        double row = 1.0;
        for (int j = i + 1; j <= n; ++j) {
            const int gap = j - i;
            row += (gap <= K - 1) ? 1.0 : beta(gap - K + 1);
        }
        best = std::max(best, row);
    }
    out.exact_row_max = best;
    const double delta_beta = grid_mass + tail_beyond_grid;
    out.bound = std::min(static_cast<double>(n), static_cast<double>(K) + delta_beta);
    return out;
}

}  // namespace datcgan::bounds
