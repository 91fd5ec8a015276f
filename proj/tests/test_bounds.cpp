#include "datcgan/bounds.hpp"

#include "datcgan/decision.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <mpfr.h>

using namespace datcgan;
using namespace datcgan::bounds;

namespace {

// 256-bit evaluation of the failure-probability log, term by term.
double theorem1_log_mpfr(const BoundInputs& in) {
    mpfr_t acc, t1, t2;
    mpfr_inits2(256, acc, t1, t2, static_cast<mpfr_ptr>(nullptr));
    // log C
    mpfr_set_d(acc, in.C, MPFR_RNDN);
    mpfr_log(acc, acc, MPFR_RNDN);
    // + p log(p L / eps)
    mpfr_set_d(t1, in.p * in.L / in.eps, MPFR_RNDN);
    mpfr_log(t1, t1, MPFR_RNDN);
    mpfr_mul_d(t1, t1, in.p, MPFR_RNDN);
    mpfr_add(acc, acc, t1, MPFR_RNDN);
    // + log(1 + M)
    mpfr_set_d(t1, 1.0 + in.M, MPFR_RNDN);
    mpfr_log(t1, t1, MPFR_RNDN);
    mpfr_add(acc, acc, t1, MPFR_RNDN);
    // - I eps^2 / (L~^2 B*^2)
    const double bstar = std::sqrt(in.B_f * in.B_f + in.B_x * in.B_x) * (in.K + in.delta_beta);
    mpfr_set_d(t1, in.I, MPFR_RNDN);
    mpfr_mul_d(t1, t1, in.eps, MPFR_RNDN);
    mpfr_mul_d(t1, t1, in.eps, MPFR_RNDN);
    mpfr_set_d(t2, in.L_tilde * in.L_tilde * bstar * bstar, MPFR_RNDN);
    mpfr_div(t1, t1, t2, MPFR_RNDN);
    mpfr_sub(acc, acc, t1, MPFR_RNDN);
    const double out = mpfr_get_d(acc, MPFR_RNDN);
    mpfr_clears(acc, t1, t2, static_cast<mpfr_ptr>(nullptr));
    return out;
}

}  // namespace

TEST_CASE("precision eigenvalue cap is 1/tau") {
    const auto b = lemma1_bounds(1.0, 0.01, 1.0, 4);
    REQUIRE(b.h_eig_max == Catch::Approx(100.0).margin(1e-12));
}

TEST_CASE("eigenvalue floor matches the printed formula") {
    const auto b = lemma1_bounds(1.0, 0.01, 1.0, 4);
    const double want = 1.0 / (std::sqrt(0.9801 + 0.0001) * 4.0);
    REQUIRE(b.h_eig_min == Catch::Approx(want).margin(1e-12));
    REQUIRE(b.h_eig_min == Catch::Approx(0.2525).margin(1e-3));

    // cross-check against eigen-decompositions of candidate worst covariances
    for (double scale : {0.0, 0.25, 0.5, 0.9}) {
        const Mat sigma = Mat::Identity(4, 4) * scale;
        const Mat h = decision::shrink_precision(sigma, 0.01);
        Eigen::SelfAdjointEigenSolver<Mat> es(h);
        REQUIRE(es.eigenvalues().minCoeff() >= b.h_eig_min - 1e-12);
    }
}

TEST_CASE("decision-chain outputs respect the lemma bounds on random bounded blocks") {
    Rng rng(71);
    decision::DecisionParams params;
    const int d = 4, K = 4;
    const auto lim = lemma1_bounds(1.0, params.tau, params.phi, d);
    for (int rep = 0; rep < 1000; ++rep) {
        markets::ConditioningState cond;
        cond.t = 50;
        cond.features = Mat::Zero(d, 5);
        cond.ma_state = markets::MAState::zero(d, params.zeta);
        for (int i = 0; i < 6; ++i) {
            Vec r(d);
            for (int a = 0; a < d; ++a) r(a) = rng.uniform(-1.0, 1.0);
            cond.ma_state.fold(r);
        }
        Mat block(K, d);
        for (int k = 0; k < K; ++k)
            for (int a = 0; a < d; ++a) block(k, a) = rng.uniform(-1.0, 1.0);
        const auto steps = decision::decision_chain(block, cond, params);
        for (const auto& st : steps) {
            REQUIRE(st.u_hat.cwiseAbs().maxCoeff() <= lim.u_abs + 1e-12);
            REQUIRE(st.sigma_hat.cwiseAbs().maxCoeff() <= lim.sigma_entry_abs + 1e-12);
            Eigen::SelfAdjointEigenSolver<Mat> es(st.h_hat);
            REQUIRE(es.eigenvalues().maxCoeff() <= lim.h_eig_max + 1e-9);
            REQUIRE(es.eigenvalues().minCoeff() >= lim.h_eig_min - 1e-12);
            REQUIRE(std::abs(st.lambda) <= lim.lambda_abs + 1e-9);
            REQUIRE(st.w.norm() <= lim.w_norm + 1e-9);
            REQUIRE(std::abs(st.p) <= lim.p_abs + 1e-9);
            REQUIRE(std::abs(st.U) <= lim.utility_abs + 1e-9);
        }
    }
}

TEST_CASE("failure bound vanishes as the sample count grows") {
    BoundInputs in;
    double prev = 2.0;
    for (double i : {1e4, 1e5, 1e6, 1e7, 1e8}) {
        in.I = i;
        const auto fp = theorem1_failure_prob(in);
        REQUIRE(fp.probability <= prev);
        prev = fp.probability;
    }
    in.I = 1e12;
    REQUIRE(theorem1_failure_prob(in).probability == 0.0);
}

TEST_CASE("doubling the iteration count at most doubles the bound") {
    BoundInputs in;
    in.I = 4e6;  // in the regime where the bound is not clamped
    in.eps = 0.2;
    const double m = 10.0;
    in.M = m;
    const auto p1 = theorem1_failure_prob(in);
    in.M = 2.0 * m;
    const auto p2 = theorem1_failure_prob(in);
    REQUIRE(p2.log_value - p1.log_value == Catch::Approx(std::log((1.0 + 2.0 * m) / (1.0 + m))).margin(1e-12));
    REQUIRE(std::exp(p2.log_value - p1.log_value) <= 2.0);
}

TEST_CASE("filled-in instance matches the high-precision oracle") {
    BoundInputs in;  // p=100, L=1, eps=0.1, M=10, I=1e6, L~=1, Bf=Bx=1, K=4, delta_beta=1
    const auto got = theorem1_failure_prob(in);
    const double want = theorem1_log_mpfr(in);
    REQUIRE(got.log_value == Catch::Approx(want).epsilon(1e-12));
    REQUIRE(got.probability == 1.0);  // this instance is vacuous: log_value >> 0

    // a non-vacuous instance: the exponent lands strictly inside (0,1)
    in.I = 3.5e6;
    const auto tight = theorem1_failure_prob(in);
    REQUIRE(tight.log_value == Catch::Approx(theorem1_log_mpfr(in)).epsilon(1e-12));
    REQUIRE(tight.probability > 0.0);
    REQUIRE(tight.probability < 1.0);
}

TEST_CASE("monotonicity in every stated direction") {
    Rng rng(83);
    for (int rep = 0; rep < 500; ++rep) {
        BoundInputs in;
        in.p = rng.uniform(1.0, 1e4);
        in.I = rng.uniform(1e2, 1e10);
        in.M = rng.uniform(0.0, 1e6);
        in.K = 1 + static_cast<int>(rng.below(16));
        in.delta_beta = rng.uniform(0.0, 10.0);
        in.eps = rng.uniform(1e-4, 1.0);
        in.L = rng.uniform(0.1, 10.0);
        in.L_tilde = rng.uniform(0.1, 10.0);
        const double base = theorem1_failure_prob(in).log_value;

        BoundInputs v = in;
        v.I *= 2.0;
        REQUIRE(theorem1_failure_prob(v).log_value <= base + 1e-9);
        v = in;
        v.M *= 2.0;
        v.M += 1.0;
        REQUIRE(theorem1_failure_prob(v).log_value >= base - 1e-9);
        v = in;
        v.p *= 2.0;
        REQUIRE(theorem1_failure_prob(v).log_value >= base - 1e-9);
        v = in;
        v.K += 1;
        REQUIRE(theorem1_failure_prob(v).log_value >= base - 1e-9);
        v = in;
        v.delta_beta += 1.0;
        REQUIRE(theorem1_failure_prob(v).log_value >= base - 1e-9);
        v = in;
        v.eps *= 0.5;
        REQUIRE(theorem1_failure_prob(v).log_value >= base - 1e-9);
    }
}

TEST_CASE("log-space evaluation survives magnitudes of 1e300") {
    BoundInputs in;
    in.I = 1e300;
    in.eps = 1e-300;
    in.p = 1e300;
    in.L = 1e300;
    in.M = 1e300;
    const auto fp = theorem1_failure_prob(in);
    REQUIRE(!std::isnan(fp.log_value));
    REQUIRE(fp.probability >= 0.0);
    REQUIRE(fp.probability <= 1.0);

    in = BoundInputs{};
    in.I = 1e300;
    in.eps = 1.0;
    REQUIRE(theorem1_failure_prob(in).probability == 0.0);
}

TEST_CASE("required samples satisfies the bisection contract") {
    Rng rng(91);
    for (int rep = 0; rep < 100; ++rep) {
        BoundInputs in;
        in.p = rng.uniform(1.0, 50.0);
        in.eps = rng.uniform(0.05, 0.5);
        in.M = rng.uniform(0.0, 100.0);
        const double delta = rng.uniform(1e-6, 0.5);
        const long long i_star = required_samples(in, delta);
        in.I = static_cast<double>(i_star);
        REQUIRE(theorem1_failure_prob(in).probability <= delta);
        if (i_star > 1) {
            in.I = static_cast<double>(i_star - 1);
            REQUIRE(theorem1_failure_prob(in).probability > delta);
        }
    }
}

TEST_CASE("vacuous target needs a single sample") {
    BoundInputs in;
    REQUIRE(required_samples(in, 1.0) == 1);
}

TEST_CASE("halving eps roughly quadruples the required sample count") {
    BoundInputs in;
    in.p = 20.0;
    in.M = 50.0;
    in.eps = 0.2;
    const long long i1 = required_samples(in, 1e-3);
    in.eps = 0.1;
    const long long i2 = required_samples(in, 1e-3);
    // the eps^-2 concentration factor dominates; the eps-net factor nudges it above 4x
    REQUIRE(static_cast<double>(i2) / static_cast<double>(i1) > 3.5);
    REQUIRE(static_cast<double>(i2) / static_cast<double>(i1) < 6.0);
}

TEST_CASE("mixing norm closed forms") {
    const auto iid = mixing_matrix_norm([](int) { return 0.0; }, 50, 1);
    REQUIRE(iid.bound == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(iid.exact_row_max == Catch::Approx(1.0).margin(1e-12));

    const int n = 60;
    const auto geo = mixing_matrix_norm([](int k) { return std::pow(2.0, -k); }, n, 4,
                                        std::pow(2.0, -n));  // analytic tail of the geometric series
    REQUIRE(geo.bound == Catch::Approx(5.0).margin(1e-9));
    REQUIRE(geo.exact_row_max <= geo.bound + 1e-12);
}

TEST_CASE("exact row max never exceeds the closed-form cap on random summable grids") {
    Rng rng(97);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 10 + static_cast<int>(rng.below(60));
        const int K = 1 + static_cast<int>(rng.below(6));
        std::vector<double> grid(n + 1, 0.0);
        double decay = rng.uniform(0.2, 0.9);
        double v = rng.uniform(0.0, 1.0);
        for (int k = 1; k <= n; ++k) {
            grid[k] = v;
            v *= decay;
        }
        const auto norm = mixing_matrix_norm([&](int k) { return grid[k]; }, n, K);
        REQUIRE(norm.exact_row_max <= norm.bound + 1e-9);
    }
}

TEST_CASE("divergent tails are rejected") {
    REQUIRE_THROWS_AS(mixing_matrix_norm([](int) { return 1.0; }, 10, 2,
                                         std::numeric_limits<double>::infinity()),
                      Error);
}
