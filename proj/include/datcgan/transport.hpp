#pragma once

// Empirical Wasserstein distances between sample clouds under Euclidean
// ground cost. Three routes:
//   w1_sorted  - exact W1 for 1-D uniform empiricals (order statistics)
//   w_exact    - the discrete OT linear program, solved to optimality by a
//                primal network simplex on the dense bipartite graph
//   w_sinkhorn - entropically regularized approximation with eps-annealing;
//                reports the unregularized cost of a rounded feasible plan
//
// The network simplex follows the classic spanning-tree implementation
// (parent/thread/rev-thread arrays, block-search pivot, strongly feasible
// leaving-arc rule) used by LEMON-derived transport codes.

#include "datcgan/common.hpp"
#include "datcgan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace datcgan::transport {

struct PointCloud {
    Mat points;  // n x m
    Vec mass;    // size n, or empty for uniform 1/n

    int n() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }

    Vec masses() const {
        if (mass.size() == 0) return Vec::Constant(n(), 1.0 / n());
        return mass;
    }

    void validate() const {
        require(n() > 0, "point cloud is empty");
        require(points.allFinite(), "point cloud has non-finite coordinates");
        if (mass.size() > 0) {
            require(mass.size() == n(), "mass vector length mismatch");
            require((mass.array() >= 0.0).all(), "point masses must be nonnegative");
            require(std::abs(mass.sum() - 1.0) <= 1e-12, "point masses must sum to 1");
        }
    }

    static PointCloud from_rows(Mat rows) {
        PointCloud c;
        c.points = std::move(rows);
        return c;
    }
};

inline Mat euclidean_cost(const PointCloud& a, const PointCloud& b) {
    Mat c(a.n(), b.n());
    for (int i = 0; i < a.n(); ++i)
        for (int j = 0; j < b.n(); ++j) c(i, j) = (a.points.row(i) - b.points.row(j)).norm();
    return c;
}

inline double median_cost(const Mat& cost) {
    std::vector<double> v(cost.data(), cost.data() + cost.size());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

// Exact W1 between two 1-D uniform empiricals with equal counts: mean
// absolute difference of order statistics. Unequal counts are equalized by
// deterministic quantile-grid resampling.
inline double w1_sorted(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "w1_sorted: empty input");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() != b.size()) {
        const int n = static_cast<int>(std::max(a.size(), b.size()));
        auto resample = [n](const std::vector<double>& s) {
            std::vector<double> out(n);
            for (int i = 0; i < n; ++i) {
                const double q = (i + 0.5) / n;
                const double pos = q * static_cast<double>(s.size()) - 0.5;
                const int lo = std::clamp(static_cast<int>(std::floor(pos)), 0, static_cast<int>(s.size()) - 1);
                const int hi = std::min(lo + 1, static_cast<int>(s.size()) - 1);
                const double frac = std::clamp(pos - lo, 0.0, 1.0);
                out[i] = (1.0 - frac) * s[lo] + frac * s[hi];
            }
            return out;
        };
        a = resample(a);
        b = resample(b);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

struct ExactResult {
    double distance = 0.0;
    Mat plan;                 // n_a x n_b
    Vec potential_a;          // dual alpha (alpha_i + beta_j <= c_ij)
    Vec potential_b;          // dual beta
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    long pivots = 0;
};

namespace detail {

// Primal network simplex for the balanced, uncapacitated transportation
// problem on the dense bipartite graph. Nodes: 0..n-1 supplies, n..n+m-1
// demands, plus an artificial root.
class TransportSimplex {
public:
    TransportSimplex(const Mat& cost, const Vec& supply, const Vec& demand)
        : n_(static_cast<int>(supply.size())),
          m_(static_cast<int>(demand.size())),
          node_count_(n_ + m_ + 1),
          arc_count_(static_cast<long>(n_) * m_),
          cost_(&cost) {
        supplies_.resize(node_count_);
        for (int i = 0; i < n_; ++i) supplies_[i] = supply(i);
        // rescale demand so the instance is numerically balanced
        const double scale = supply.sum() / demand.sum();
        for (int j = 0; j < m_; ++j) supplies_[n_ + j] = -demand(j) * scale;
    }

    void run(long max_pivots) {
        init_tree();
        pivots_ = 0;
        while (find_entering()) {
            require(++pivots_ <= max_pivots, "network simplex exceeded the pivot budget");
            join_ = find_join();
            find_leaving(join_);
            require(delta_ < std::numeric_limits<double>::infinity(),
                    "network simplex: unbounded cycle (unbalanced instance?)");
            apply_flow(join_);
            if (leaving_arc_ != entering_arc_) {
                update_tree();
                update_potentials();
            }
        }
    }

    long pivots() const { return pivots_; }
    double flow(int i, int j) const { return flows_[static_cast<long>(i) * m_ + j]; }
    double potential(int node) const { return pis_[node]; }

private:
    int src(long arc) const { return static_cast<int>(arc / m_); }
    int dst(long arc) const { return static_cast<int>(arc % m_) + n_; }
    double arc_cost(long arc) const { return (*cost_)(src(arc), static_cast<int>(arc % m_)); }

    int arc_src(long arc) const { return arc < arc_count_ ? src(arc) : art_src_[arc - arc_count_]; }
    int arc_dst(long arc) const { return arc < arc_count_ ? dst(arc) : art_dst_[arc - arc_count_]; }
    double cost_of(long arc) const { return arc < arc_count_ ? arc_cost(arc) : art_cost_; }

    void init_tree() {
        const long all_arcs = arc_count_ + node_count_ - 1;
        flows_.assign(all_arcs, 0.0);
        state_.assign(all_arcs, kLower);
        pis_.assign(node_count_, 0.0);
        parent_.assign(node_count_, -1);
        pred_arc_.assign(node_count_, -1);
        forward_.assign(node_count_, 0);
        thread_.assign(node_count_, 0);
        rev_thread_.assign(node_count_, 0);
        succ_count_.assign(node_count_, 0);
        last_succ_.assign(node_count_, 0);
        art_src_.assign(node_count_ - 1, 0);
        art_dst_.assign(node_count_ - 1, 0);

        double max_c = 0.0;
        for (long a = 0; a < arc_count_; ++a) max_c = std::max(max_c, std::abs(arc_cost(a)));
        art_cost_ = (max_c + 1.0) * node_count_;

        const int root = node_count_ - 1;
        parent_[root] = -1;
        pred_arc_[root] = -1;
        thread_[root] = 0;
        rev_thread_[0] = root;
        succ_count_[root] = node_count_;
        last_succ_[root] = root - 1;
        pis_[root] = 0.0;

        for (int u = 0; u < node_count_ - 1; ++u) {
            parent_[u] = root;
            const long e = arc_count_ + u;
            pred_arc_[u] = e;
            thread_[u] = u + 1;
            rev_thread_[u + 1] = u;
            succ_count_[u] = 1;
            last_succ_[u] = u;
            state_[e] = kTree;
            if (supplies_[u] >= 0) {
                forward_[u] = 1;
                pis_[u] = 0.0;
                art_src_[u] = u;
                art_dst_[u] = root;
                flows_[e] = supplies_[u];
            } else {
                forward_[u] = 0;
                pis_[u] = art_cost_;
                art_src_[u] = root;
                art_dst_[u] = u;
                flows_[e] = -supplies_[u];
            }
        }

        next_arc_ = 0;
        block_size_ = std::max(static_cast<long>(std::sqrt(static_cast<double>(arc_count_))), 10L);
    }

    double reduced_cost(long arc) const { return cost_of(arc) + pis_[arc_src(arc)] - pis_[arc_dst(arc)]; }

    bool find_entering() {
        double best = 0.0;
        long e = next_arc_;
        long counter = block_size_;
        const double tol = 1e-14;
        for (long scanned = 0; scanned < arc_count_; ++scanned, ++e) {
            if (e == arc_count_) e = 0;
            if (state_[e] != kLower) continue;
            const double rc = reduced_cost(e);
            if (rc < best) {
                best = rc;
                entering_arc_ = e;
            }
            if (--counter == 0) {
                if (accept(best)) {
                    next_arc_ = e;
                    return true;
                }
                counter = block_size_;
            }
        }
        if (accept(best)) {
            next_arc_ = e;
            return true;
        }
        return false;
    }

    bool accept(double best) const {
        if (!(best < 0.0)) return false;
        const double scale = std::max({std::abs(pis_[arc_src(entering_arc_)]),
                                       std::abs(pis_[arc_dst(entering_arc_)]),
                                       std::abs(cost_of(entering_arc_)), 1.0});
        return best < -1e-14 * scale;
    }

    int find_join() const {
        int u = arc_src(entering_arc_);
        int v = arc_dst(entering_arc_);
        while (u != v) {
            if (succ_count_[u] < succ_count_[v]) u = parent_[u];
            else v = parent_[v];
        }
        return u;
    }

    // Min-ratio search along both tree paths of the cycle; the tie-break
    // (< on the first path, <= on the second) keeps the tree strongly
    // feasible so degenerate pivots cannot cycle.
    void find_leaving(int join) {
        first_ = arc_src(entering_arc_);
        second_ = arc_dst(entering_arc_);
        delta_ = std::numeric_limits<double>::infinity();
        int result = 0;
        for (int u = first_; u != join; u = parent_[u]) {
            const double d = forward_[u] ? flows_[pred_arc_[u]] : std::numeric_limits<double>::infinity();
            if (d < delta_) {
                delta_ = d;
                u_out_ = u;
                result = 1;
            }
        }
        for (int u = second_; u != join; u = parent_[u]) {
            const double d = forward_[u] ? std::numeric_limits<double>::infinity() : flows_[pred_arc_[u]];
            if (d <= delta_) {
                delta_ = d;
                u_out_ = u;
                result = 2;
            }
        }
        if (result == 1) {
            u_in_ = first_;
            v_in_ = second_;
        } else {
            u_in_ = second_;
            v_in_ = first_;
        }
        leaving_arc_ = result == 0 ? entering_arc_ : pred_arc_[u_out_];
    }

    void apply_flow(int join) {
        if (delta_ > 0.0) {
            flows_[entering_arc_] += delta_;
            for (int u = arc_src(entering_arc_); u != join; u = parent_[u])
                flows_[pred_arc_[u]] += forward_[u] ? -delta_ : delta_;
            for (int u = arc_dst(entering_arc_); u != join; u = parent_[u])
                flows_[pred_arc_[u]] += forward_[u] ? delta_ : -delta_;
        }
        if (leaving_arc_ != entering_arc_) {
            state_[entering_arc_] = kTree;
            state_[leaving_arc_] = kLower;
            flows_[leaving_arc_] = 0.0;  // exact, avoids residual dust
        }
    }

    void update_tree() {
        int u = last_succ_[u_in_];
        const int old_rev_thread = rev_thread_[u_out_];
        const int old_succ_count = succ_count_[u_out_];
        const int old_last_succ = last_succ_[u_out_];
        const int v_out = parent_[u_out_];
        int right = thread_[u];
        int last = (old_rev_thread == v_in_) ? thread_[last_succ_[u_out_]] : thread_[v_in_];

        thread_[v_in_] = u_in_;
        dirty_revs_.clear();
        dirty_revs_.push_back(v_in_);
        int stem = u_in_;
        int par_stem = v_in_;
        while (stem != u_out_) {
            const int new_stem = parent_[stem];
            thread_[u] = new_stem;
            dirty_revs_.push_back(u);

            const int w = rev_thread_[stem];
            thread_[w] = right;
            rev_thread_[right] = w;

            parent_[stem] = par_stem;
            par_stem = stem;
            stem = new_stem;

            u = (last_succ_[stem] == last_succ_[par_stem]) ? rev_thread_[par_stem] : last_succ_[stem];
            right = thread_[u];
        }
        parent_[u_out_] = par_stem;
        thread_[u] = last;
        rev_thread_[last] = u;
        last_succ_[u_out_] = u;

        if (old_rev_thread != v_in_) {
            thread_[old_rev_thread] = right;
            rev_thread_[right] = old_rev_thread;
        }
        for (int node : dirty_revs_) rev_thread_[thread_[node]] = node;

        int tmp_sc = 0;
        int tmp_ls = last_succ_[u_out_];
        int w = u_out_;
        while (w != u_in_) {
            const int p = parent_[w];
            pred_arc_[w] = pred_arc_[p];
            forward_[w] = !forward_[p];
            tmp_sc += succ_count_[w] - succ_count_[p];
            succ_count_[w] = tmp_sc;
            last_succ_[p] = tmp_ls;
            w = p;
        }
        pred_arc_[u_in_] = entering_arc_;
        forward_[u_in_] = (u_in_ == arc_src(entering_arc_));
        succ_count_[u_in_] = old_succ_count;

        int up_limit_in = -1;
        int up_limit_out = -1;
        if (last_succ_[join_] == v_in_) up_limit_out = join_;
        else up_limit_in = join_;

        for (int node = v_in_; node != up_limit_in && last_succ_[node] == v_in_; node = parent_[node])
            last_succ_[node] = last_succ_[u_out_];
        if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
            for (int node = v_out; node != up_limit_out && last_succ_[node] == old_last_succ;
                 node = parent_[node])
                last_succ_[node] = old_rev_thread;
        } else {
            for (int node = v_out; node != up_limit_out && last_succ_[node] == old_last_succ;
                 node = parent_[node])
                last_succ_[node] = last_succ_[u_out_];
        }
        for (int node = v_in_; node != join_; node = parent_[node]) succ_count_[node] += old_succ_count;
        for (int node = v_out; node != join_; node = parent_[node]) succ_count_[node] -= old_succ_count;
    }

    void update_potentials() {
        const double sigma = forward_[u_in_] ? pis_[v_in_] - pis_[u_in_] - cost_of(pred_arc_[u_in_])
                                             : pis_[v_in_] - pis_[u_in_] + cost_of(pred_arc_[u_in_]);
        const int end = thread_[last_succ_[u_in_]];
        for (int u = u_in_; u != end; u = thread_[u]) pis_[u] += sigma;
    }

    static constexpr char kLower = 0;
    static constexpr char kTree = 1;

    int n_, m_, node_count_;
    long arc_count_;
    const Mat* cost_;
    double art_cost_ = 0.0;

    std::vector<double> supplies_, flows_, pis_;
    std::vector<char> state_, forward_;
    std::vector<int> parent_, thread_, rev_thread_, succ_count_, last_succ_, art_src_, art_dst_;
    std::vector<long> pred_arc_;
    std::vector<int> dirty_revs_;

    long next_arc_ = 0;
    long block_size_ = 0;
    long pivots_ = 0;
    long entering_arc_ = -1;
    long leaving_arc_ = -1;
    double delta_ = 0.0;
    int first_ = 0, second_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, join_ = 0;
};

}  // namespace detail

// LP solve on an explicit cost matrix; the general entry point behind
// w_exact, also usable with non-Euclidean costs.
inline ExactResult w_exact_from_cost(const Mat& cost, const Vec& ma, const Vec& mb) {
    const int n = static_cast<int>(ma.size());
    const int m = static_cast<int>(mb.size());
    require(cost.rows() == n && cost.cols() == m, "w_exact: cost matrix shape mismatch");
    require((ma.array() > 0.0).all() && (mb.array() > 0.0).all(),
            "w_exact: zero-mass points are not supported");

    detail::TransportSimplex simplex(cost, ma, mb);
    simplex.run(200L * static_cast<long>(n + m) * std::max(n, m) + 10000L);

    ExactResult res;
    res.plan = Mat(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) res.plan(i, j) = simplex.flow(i, j);
    res.primal_objective = (res.plan.array() * cost.array()).sum();
    res.distance = res.primal_objective;
    res.potential_a = Vec(n);
    res.potential_b = Vec(m);
    for (int i = 0; i < n; ++i) res.potential_a(i) = -simplex.potential(i);
    for (int j = 0; j < m; ++j) res.potential_b(j) = simplex.potential(n + j);
    res.dual_objective = res.potential_a.dot(ma) + res.potential_b.dot(mb);
    res.pivots = simplex.pivots();
    return res;
}

// Solves the discrete OT LP to optimality. Throws when n_a * n_b exceeds the
// cap; callers with larger pools should subsample or use w_sinkhorn.
inline ExactResult w_exact(const PointCloud& a, const PointCloud& b, long lp_cap = 512L * 512L) {
    a.validate();
    b.validate();
    require(a.dim() == b.dim(), "w_exact: dimension mismatch between clouds");
    require(static_cast<long>(a.n()) * b.n() <= lp_cap,
            "w_exact: instance exceeds the LP cap (" + std::to_string(a.n()) + "x" + std::to_string(b.n()) +
                "); subsample or use w_sinkhorn");
    return w_exact_from_cost(euclidean_cost(a, b), a.masses(), b.masses());
}

struct SinkhornResult {
    double distance = 0.0;
    double eps = 0.0;
    bool converged = false;
    int iterations = 0;
    double marginal_violation = 0.0;  // L1, before rounding
};

// Log-domain Sinkhorn with eps annealing, returning the unregularized cost
// of the plan rounded onto the transport polytope, so the reported value is
// always the cost of an exactly feasible plan. The default tol reflects that
// rounding: a 1e-4 marginal defect perturbs the rounded cost by well under
// the entropic bias itself.
inline SinkhornResult w_sinkhorn(const PointCloud& a, const PointCloud& b, double eps,
                                 int max_iter = 20000, double tol = 1e-4) {
    a.validate();
    b.validate();
    require(eps > 0.0, "w_sinkhorn: eps must be positive");
    require(a.dim() == b.dim(), "w_sinkhorn: dimension mismatch between clouds");

    const int n = a.n();
    const int m = b.n();
    const Mat cost = euclidean_cost(a, b);
    const Vec ma = a.masses();
    const Vec mb = b.masses();
    const Eigen::ArrayXd log_a = ma.array().log();
    const Eigen::ArrayXd log_b = mb.array().log();

    Eigen::ArrayXd f = Eigen::ArrayXd::Zero(n);
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(m);
    Eigen::ArrayXXd scaled(n, m);  // (f_i + g_j - C_ij)/eps workspace

    auto refresh = [&](double cur_eps) {
        scaled = -cost.array();
        scaled.colwise() += f;
        scaled.rowwise() += g.transpose();
        scaled /= cur_eps;
    };
    auto lse_rows = [&](double cur_eps) {
        // f_i <- f_i + eps(log a_i - LSE_j((f_i + g_j - C_ij)/eps))
        refresh(cur_eps);
        const Eigen::ArrayXd mx = scaled.rowwise().maxCoeff();
        const Eigen::ArrayXd lse = (scaled.colwise() - mx).exp().rowwise().sum().log() + mx;
        f += cur_eps * (log_a - lse);
    };
    auto lse_cols = [&](double cur_eps) {
        refresh(cur_eps);
        const Eigen::ArrayXd mx = scaled.colwise().maxCoeff().transpose();
        const Eigen::ArrayXd lse =
            (scaled.rowwise() - mx.transpose()).exp().colwise().sum().log().transpose() + mx;
        g += cur_eps * (log_b - lse);
    };
    auto row_violation = [&](double cur_eps) {
        // after a column update the column marginals are exact; measure rows
        refresh(cur_eps);
        return (scaled.exp().rowwise().sum() - ma.array()).abs().sum();
    };

    SinkhornResult res;
    res.eps = eps;
    const double eps0 = std::max(eps, std::max(cost.maxCoeff(), 1e-12) * 0.5);
    double cur_eps = eps0;
    int it = 0;
    res.marginal_violation = std::numeric_limits<double>::infinity();
    for (;;) {
        const bool final_stage = cur_eps <= eps * (1.0 + 1e-12);
        const double stage_tol = final_stage ? tol : 1e-3;
        while (it < max_iter) {
            lse_rows(cur_eps);
            lse_cols(cur_eps);
            ++it;
            if (it % 4 == 0 || it == max_iter) {
                res.marginal_violation = row_violation(cur_eps);
                if (res.marginal_violation <= stage_tol) break;
            }
        }
        if (final_stage || it >= max_iter) {
            cur_eps = final_stage ? cur_eps : eps;  // materialize at the target eps regardless
            if (!final_stage) {
                lse_rows(eps);
                lse_cols(eps);
            }
            res.marginal_violation = row_violation(eps);
            break;
        }
        // anneal toward the target, warm-starting the potentials
        cur_eps = std::max(eps, cur_eps * 0.5);
    }
    res.converged = res.marginal_violation <= tol;
    res.iterations = it;

    // materialize the plan at the final eps and round it onto the polytope
    Mat plan(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / cur_eps);

    for (int i = 0; i < n; ++i) {
        const double rs = plan.row(i).sum();
        if (rs > ma(i) && rs > 0.0) plan.row(i) *= ma(i) / rs;
    }
    for (int j = 0; j < m; ++j) {
        const double cs = plan.col(j).sum();
        if (cs > mb(j) && cs > 0.0) plan.col(j) *= mb(j) / cs;
    }
    const Vec err_a = ma - plan.rowwise().sum();
    const Vec err_b = mb - plan.colwise().sum().transpose();
    const double ea = err_a.cwiseAbs().sum();
    if (ea > 0.0) plan += (err_a * err_b.transpose()) / ea;

    res.distance = (plan.array() * cost.array()).sum();
    return res;
}

// Seeded uniform subsample of up to `cap` rows, used when pools exceed the
// LP cap.
inline Mat subsample_rows(const Mat& rows, int cap, Rng& rng) {
    const int n = static_cast<int>(rows.rows());
    if (n <= cap) return rows;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < cap; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    Mat out(cap, rows.cols());
    for (int i = 0; i < cap; ++i) out.row(i) = rows.row(idx[i]);
    return out;
}

}  // namespace datcgan::transport
