#include "datcgan/transport.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace datcgan;
using namespace datcgan::transport;

namespace {

PointCloud random_cloud(int n, int dim, Rng& rng, double scale = 1.0) {
    Mat pts(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) pts(i, j) = rng.uniform(-scale, scale);
    return PointCloud::from_rows(std::move(pts));
}

std::vector<double> random_scalars(int n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

}  // namespace

TEST_CASE("w1_sorted basics") {
    std::vector<double> a{0.3, -1.0, 2.0};
    REQUIRE(w1_sorted(a, a) == 0.0);
    REQUIRE(w1_sorted({0.0, 1.0}, {1.0, 2.0}) == Catch::Approx(1.0).margin(1e-15));
    // translation property
    Rng rng(3);
    auto x = random_scalars(101, rng);
    auto y = x;
    for (auto& v : y) v += 0.77;
    REQUIRE(w1_sorted(x, y) == Catch::Approx(0.77).margin(1e-12));
    REQUIRE_THROWS_AS(w1_sorted({}, {1.0}), Error);
}

TEST_CASE("w1_sorted handles unequal counts via quantile resampling") {
    Rng rng(5);
    auto x = random_scalars(400, rng);
    auto y = random_scalars(300, rng);
    const double got = w1_sorted(x, y);
    std::vector<std::pair<double, double>> ax, bx;
    for (double v : x) ax.push_back({v, 1.0 / x.size()});
    for (double v : y) bx.push_back({v, 1.0 / y.size()});
    const double want = oracles::w1_cdf_oracle(ax, bx);
    REQUIRE(got == Catch::Approx(want).margin(0.02));
}

TEST_CASE("identical clouds transport for free along the diagonal") {
    Rng rng(7);
    const PointCloud a = random_cloud(9, 3, rng);
    const auto res = w_exact(a, a);
    REQUIRE(res.distance == Catch::Approx(0.0).margin(1e-12));
    for (int i = 0; i < a.n(); ++i)
        REQUIRE(res.plan(i, i) == Catch::Approx(1.0 / a.n()).margin(1e-12));
}

TEST_CASE("hand 3x3 instance solves to the identity plan") {
    Mat cost(3, 3);
    cost << 1, 2, 3, 2, 1, 2, 3, 2, 1;
    const Vec u = Vec::Constant(3, 1.0 / 3.0);
    const auto res = w_exact_from_cost(cost, u, u);
    REQUIRE(res.distance == Catch::Approx(1.0).margin(1e-12));
    for (int i = 0; i < 3; ++i) REQUIRE(res.plan(i, i) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    // brute force over all 3! permutation plans agrees
    REQUIRE(oracles::ot_bruteforce_uniform(cost) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("exact solver equals brute-force permutation minimum on small uniform clouds") {
    Rng rng(11);
    for (int n = 2; n <= 6; ++n) {
        for (int rep = 0; rep < 30; ++rep) {
            const PointCloud a = random_cloud(n, 1 + static_cast<int>(rng.below(4)), rng);
            const PointCloud b = random_cloud(n, a.dim(), rng);
            const auto res = w_exact(a, b);
            const double want = oracles::ot_bruteforce_uniform(euclidean_cost(a, b));
            REQUIRE(res.distance == Catch::Approx(want).margin(1e-9));
        }
    }
}

TEST_CASE("exact solver agrees with the sorted 1-D route") {
    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 20 + static_cast<int>(rng.below(30));
        auto xs = random_scalars(n, rng);
        auto ys = random_scalars(n, rng);
        Mat ax(n, 1), bx(n, 1);
        for (int i = 0; i < n; ++i) {
            ax(i, 0) = xs[i];
            bx(i, 0) = ys[i];
        }
        const auto res = w_exact(PointCloud::from_rows(ax), PointCloud::from_rows(bx));
        REQUIRE(res.distance == Catch::Approx(w1_sorted(xs, ys)).margin(1e-9));
    }
}

TEST_CASE("exact solver handles nonuniform masses (1-D CDF oracle)") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 8, m = 13;
        PointCloud a = random_cloud(n, 1, rng);
        PointCloud b = random_cloud(m, 1, rng);
        Vec wa(n), wb(m);
        for (int i = 0; i < n; ++i) wa(i) = rng.uniform(0.1, 1.0);
        for (int j = 0; j < m; ++j) wb(j) = rng.uniform(0.1, 1.0);
        a.mass = wa / wa.sum();
        b.mass = wb / wb.sum();
        const auto res = w_exact(a, b);
        std::vector<std::pair<double, double>> ao, bo;
        for (int i = 0; i < n; ++i) ao.push_back({a.points(i, 0), a.mass(i)});
        for (int j = 0; j < m; ++j) bo.push_back({b.points(j, 0), b.mass(j)});
        REQUIRE(res.distance == Catch::Approx(oracles::w1_cdf_oracle(ao, bo)).margin(1e-9));
    }
}

TEST_CASE("plan marginals and duality gap are tight") {
    Rng rng(19);
    for (int rep = 0; rep < 8; ++rep) {
        const int n = 25 + static_cast<int>(rng.below(40));
        const int m = 25 + static_cast<int>(rng.below(40));
        const PointCloud a = random_cloud(n, 4, rng);
        const PointCloud b = random_cloud(m, 4, rng);
        const auto res = w_exact(a, b);
        const Vec row = res.plan.rowwise().sum();
        const Vec col = res.plan.colwise().sum().transpose();
        REQUIRE((row - a.masses()).cwiseAbs().maxCoeff() < 1e-9);
        REQUIRE((col - b.masses()).cwiseAbs().maxCoeff() < 1e-9);
        REQUIRE(std::abs(res.primal_objective - res.dual_objective) < 1e-9);
    }
}

TEST_CASE("metric axioms on samples") {
    Rng rng(23);
    const PointCloud a = random_cloud(18, 3, rng);
    const PointCloud b = random_cloud(18, 3, rng);
    const PointCloud c = random_cloud(18, 3, rng);
    const double ab = w_exact(a, b).distance;
    const double ba = w_exact(b, a).distance;
    const double ac = w_exact(a, c).distance;
    const double cb = w_exact(c, b).distance;
    REQUIRE(std::abs(ab - ba) < 1e-9);
    REQUIRE(ab <= ac + cb + 1e-9);
}

TEST_CASE("lp cap exceeded points the caller at sinkhorn") {
    Rng rng(29);
    const PointCloud a = random_cloud(40, 2, rng);
    const PointCloud b = random_cloud(40, 2, rng);
    REQUIRE_THROWS_WITH(w_exact(a, b, 100), Catch::Matchers::ContainsSubstring("w_sinkhorn"));
}

TEST_CASE("sinkhorn on identical clouds collapses with eps") {
    Rng rng(31);
    const PointCloud a = random_cloud(24, 3, rng);
    const double med = median_cost(euclidean_cost(a, a));
    double prev = std::numeric_limits<double>::infinity();
    for (double factor : {0.5, 0.1, 0.01}) {
        const auto res = w_sinkhorn(a, a, factor * med);
        REQUIRE(res.distance >= 0.0);
        REQUIRE(res.distance <= prev + 1e-12);
        prev = res.distance;
    }
    REQUIRE(prev < 0.05 * med);
}

TEST_CASE("sinkhorn tracks the exact solver within 2 percent at small eps") {
    Rng rng(37);
    const PointCloud a = random_cloud(64, 4, rng);
    const PointCloud b = random_cloud(64, 4, rng);
    const auto exact = w_exact(a, b);
    const double med = median_cost(euclidean_cost(a, b));
    const auto sk = w_sinkhorn(a, b, 1e-3 * med);
    REQUIRE(sk.converged);
    REQUIRE(std::abs(sk.distance - exact.distance) / exact.distance < 0.02);
}

TEST_CASE("decreasing eps shrinks the gap to exact monotonically") {
    Rng rng(41);
    const PointCloud a = random_cloud(32, 3, rng);
    const PointCloud b = random_cloud(32, 3, rng);
    const auto exact = w_exact(a, b);
    const double med = median_cost(euclidean_cost(a, b));
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double factor : {0.3, 0.1, 0.03, 0.01}) {
        const auto sk = w_sinkhorn(a, b, factor * med);
        const double gap = std::abs(sk.distance - exact.distance);
        REQUIRE(gap <= prev_gap + 1e-7);
        prev_gap = gap;
    }
}

TEST_CASE("sinkhorn flags non-convergence but still reports a feasible-plan cost") {
    Rng rng(43);
    const PointCloud a = random_cloud(24, 2, rng);
    const PointCloud b = random_cloud(24, 2, rng);
    const auto sk = w_sinkhorn(a, b, 1e-4, 3, 1e-12);  // 3 iterations cannot converge
    REQUIRE_FALSE(sk.converged);
    REQUIRE(std::isfinite(sk.distance));
    REQUIRE(sk.distance >= 0.0);
}

TEST_CASE("subsample_rows is seeded and bounded") {
    Rng rng(47);
    Mat rows(100, 2);
    for (int i = 0; i < 100; ++i) {
        rows(i, 0) = i;
        rows(i, 1) = -i;
    }
    Rng r1(9), r2(9);
    const Mat s1 = subsample_rows(rows, 10, r1);
    const Mat s2 = subsample_rows(rows, 10, r2);
    REQUIRE(s1 == s2);
    REQUIRE(s1.rows() == 10);
    const Mat all = subsample_rows(rows, 200, r1);
    REQUIRE(all.rows() == 100);
}
