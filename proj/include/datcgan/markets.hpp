#pragma once

// Data layer: return panels, exponential-moving-average state, conditioning
// features, the simulated data-generating process, multivariate-t noise and
// CSV ingestion/export.

#include "datcgan/common.hpp"
#include "datcgan/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace datcgan::markets {

struct ReturnPanel {
    Mat returns;                     // T x d, daily simple returns
    std::vector<std::string> dates;  // empty or size T, ISO-8601

    int T() const { return static_cast<int>(returns.rows()); }
    int d() const { return static_cast<int>(returns.cols()); }
    Vec row(int t) const { return returns.row(t).transpose(); }

    void validate() const {
        require(returns.allFinite(), "ReturnPanel contains non-finite entries");
        require(dates.empty() || static_cast<int>(dates.size()) == T(), "ReturnPanel date index length mismatch");
    }

    std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a64(returns.data(), sizeof(double) * static_cast<std::size_t>(returns.size()));
        for (const auto& s : dates) h = fnv1a64(s.data(), s.size(), h);
        return h;
    }

    // Rows [0, t_end) as an independent panel; used for train/eval splits.
    ReturnPanel prefix(int t_end) const {
        require(t_end >= 0 && t_end <= T(), "prefix: bad split index");
        ReturnPanel p;
        p.returns = returns.topRows(t_end);
        if (!dates.empty()) p.dates.assign(dates.begin(), dates.begin() + t_end);
        return p;
    }
};

// EMA state of r and of the outer product r r^T under one smoothing
// parameter; the pair the decision-chain estimators run on. `t` is the index
// of the last folded panel row (-1 before anything is folded).
struct MAState {
    double zeta = 0.74;
    Vec mean;
    Mat outer;
    int t = -1;

    static MAState zero(int d, double zeta) {
        MAState s;
        s.zeta = zeta;
        s.mean = Vec::Zero(d);
        s.outer = Mat::Zero(d, d);
        return s;
    }

    void fold(const Vec& r) {
        mean = zeta * mean + (1.0 - zeta) * r;
        outer = zeta * outer + (1.0 - zeta) * (r * r.transpose());
        ++t;
    }

    int d() const { return static_cast<int>(mean.size()); }
};

struct ConditioningState {
    Mat features;  // d x 5: last-day return + 4 trailing means
    MAState ma_state;
    int t = -1;

    int d() const { return static_cast<int>(features.rows()); }

    Vec asset_features(int asset) const { return features.row(asset).transpose(); }

    // Row-major flattening; the conditioning vector discriminators see.
    Vec flat() const {
        Vec v(features.size());
        int idx = 0;
        for (int a = 0; a < features.rows(); ++a)
            for (int f = 0; f < features.cols(); ++f) v(idx++) = features(a, f);
        return v;
    }
};

struct MvtSpec {
    Vec mu;
    Mat sigma;
    double nu = 100.0;
};

struct DGPParams {
    std::array<double, 5> b{0.3, 0.1, 0.2, 0.1, 0.1};
    std::array<double, 4> zetas{0.55, 0.74, 0.86, 0.92};
    MvtSpec noise;

    void validate() const {
        require(noise.nu > 2.0, "DGP noise dof must exceed 2 (variance undefined otherwise)");
        for (double z : zetas) require(z > 0.0 && z < 1.0, "DGP smoothing parameters must lie in (0,1)");
        require(noise.sigma.rows() == noise.sigma.cols() && noise.sigma.rows() == noise.mu.size(),
                "DGP noise shape matrix / location dims inconsistent");
    }
};

inline MvtSpec paper_noise_spec() {
    MvtSpec s;
    s.mu = Vec::Zero(4);
    s.sigma = Mat::Identity(4, 4);
    for (int i = 0; i + 1 < 4; ++i) {
        s.sigma(i, i + 1) = 0.6;
        s.sigma(i + 1, i) = 0.6;
    }
    s.nu = 100.0;
    return s;
}

// Cholesky that reports the failing leading minor on non-SPD input.
inline Mat cholesky_lower(const Mat& a) {
    require(a.rows() == a.cols(), "cholesky: matrix not square");
    const int n = static_cast<int>(a.rows());
    Mat L = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (int k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
        if (!(diag > 0.0))
            fail("matrix is not positive definite: leading minor of order " + std::to_string(j + 1) +
                 " is not positive");
        L(j, j) = std::sqrt(diag);
        for (int i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (int k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
            L(i, j) = v / L(j, j);
        }
    }
    return L;
}

// n draws of mu + L z sqrt(nu / chi2_nu), one row per draw.
inline Mat sample_mvt(const MvtSpec& spec, int n, Rng& rng) {
    require(spec.nu > 0.0, "multivariate t requires nu > 0");
    const int d = static_cast<int>(spec.mu.size());
    const Mat L = cholesky_lower(spec.sigma);
    Mat out(n, d);
    for (int i = 0; i < n; ++i) {
        const Vec z = rng.normal_vec(d);
        const double w = std::sqrt(spec.nu / rng.chi_squared(spec.nu));
        out.row(i) = (spec.mu + w * (L * z)).transpose();
    }
    return out;
}

// r_{t+1} = b0 r_t + sum_i b_i MA_{zeta_i}(r_t) + eps_t, with eps supplied
// row by row. MA states start at zero; the first burn_in rows are dropped.
inline ReturnPanel simulate_panel_with_noise(const DGPParams& params, const Mat& noise, int burn_in) {
    params.validate();
    const int total = static_cast<int>(noise.rows());
    const int d = static_cast<int>(noise.cols());
    require(burn_in >= 0 && total > burn_in, "noise rows must exceed burn_in");

    Vec r = Vec::Zero(d);
    std::array<Vec, 4> ma;
    ma.fill(Vec::Zero(d));

    ReturnPanel panel;
    panel.returns = Mat(total - burn_in, d);
    for (int t = 0; t < total; ++t) {
        Vec next = params.b[0] * r;
        for (int i = 0; i < 4; ++i) next += params.b[i + 1] * ma[i];
        next += noise.row(t).transpose();
        for (int i = 0; i < 4; ++i) ma[i] = params.zetas[i] * ma[i] + (1.0 - params.zetas[i]) * r;
        r = next;
        if (t >= burn_in) panel.returns.row(t - burn_in) = r.transpose();
    }
    panel.validate();
    return panel;
}

inline ReturnPanel simulate_panel(const DGPParams& params, int T, int burn_in, std::uint64_t seed) {
    require(T >= 1, "simulate_panel: T must be >= 1");
    Rng rng(seed);
    const Mat noise = sample_mvt(params.noise, T + burn_in, rng);
    return simulate_panel_with_noise(params, noise, burn_in);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, int line_no, const std::string& path) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (!end || *end != '\0' || end == s.c_str() || !std::isfinite(v))
        fail(path + ": unparsable numeric field '" + s + "' at line " + std::to_string(line_no));
    return v;
}

}  // namespace detail

// Long-format price CSV `date,ticker,close`. Returns are close_t/close_{t-1}-1
// per ticker, inner-joined on dates where every requested ticker is present,
// ascending by date.
inline ReturnPanel load_etf_csv(const std::string& path, const std::vector<std::string>& tickers) {
    require(!tickers.empty(), "load_etf_csv: no tickers requested");
    std::ifstream in(path);
    require(in.good(), "cannot open CSV: " + path);

    std::string line;
    int line_no = 0;
    require(static_cast<bool>(std::getline(in, line)), path + ": empty file");
    ++line_no;
    {
        auto header = detail::split_csv_line(line);
        require(header.size() == 3 && header[0] == "date" && header[1] == "ticker" && header[2] == "close",
                path + ": expected header 'date,ticker,close'");
    }

    std::map<std::string, int> ticker_col;
    for (std::size_t i = 0; i < tickers.size(); ++i) ticker_col[tickers[i]] = static_cast<int>(i);

    // date -> per-ticker close
    std::map<std::string, std::map<int, double>> closes;
    std::set<std::string> seen_tickers;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3) fail(path + ": unparsable row (expected 3 fields) at line " + std::to_string(line_no));
        seen_tickers.insert(fields[1]);
        auto it = ticker_col.find(fields[1]);
        if (it == ticker_col.end()) continue;
        const double close = detail::parse_double(fields[2], line_no, path);
        auto [slot, inserted] = closes[fields[0]].emplace(it->second, close);
        (void)slot;
        if (!inserted)
            fail(path + ": duplicate (date,ticker) pair (" + fields[0] + "," + fields[1] + ") at line " +
                 std::to_string(line_no));
    }
    for (const auto& t : tickers)
        if (!seen_tickers.count(t)) fail(path + ": missing ticker '" + t + "'");

    std::vector<std::string> dates;
    std::vector<std::map<int, double>*> rows;
    for (auto& [date, row] : closes) {
        if (row.size() == tickers.size()) {  // all tickers present on this date
            dates.push_back(date);
            rows.push_back(&row);
        }
    }
    if (dates.size() < 2) fail(path + ": fewer than 2 common dates across requested tickers");

    const int d = static_cast<int>(tickers.size());
    ReturnPanel panel;
    panel.returns = Mat(static_cast<int>(dates.size()) - 1, d);
    for (std::size_t i = 1; i < dates.size(); ++i) {
        for (int a = 0; a < d; ++a) {
            const double prev = rows[i - 1]->at(a);
            const double cur = rows[i]->at(a);
            require(prev != 0.0, path + ": zero close for " + tickers[a] + " on " + dates[i - 1]);
            panel.returns(static_cast<int>(i) - 1, a) = cur / prev - 1.0;
        }
        panel.dates.push_back(dates[i]);
    }
    panel.validate();
    return panel;
}

// Wide-format panel CSV `date,r_1..r_d`, 17 significant digits.
inline void write_panel_csv(const ReturnPanel& panel, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot write CSV: " + path);
    out << "date";
    for (int a = 0; a < panel.d(); ++a) out << ",r_" << (a + 1);
    out << "\n";
    for (int t = 0; t < panel.T(); ++t) {
        out << (panel.dates.empty() ? std::to_string(t) : panel.dates[t]);
        for (int a = 0; a < panel.d(); ++a) out << ',' << double_to_text(panel.returns(t, a));
        out << "\n";
    }
    require(out.good(), "write failed: " + path);
}

inline ReturnPanel load_panel_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open CSV: " + path);
    std::string line;
    int line_no = 0;
    require(static_cast<bool>(std::getline(in, line)), path + ": empty file");
    ++line_no;
    const auto header = detail::split_csv_line(line);
    require(header.size() >= 2 && header[0] == "date", path + ": expected header 'date,r_1..r_d'");
    const int d = static_cast<int>(header.size()) - 1;

    std::vector<std::string> dates;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != d + 1)
            fail(path + ": unparsable row (expected " + std::to_string(d + 1) + " fields) at line " +
                 std::to_string(line_no));
        dates.push_back(fields[0]);
        for (int a = 0; a < d; ++a) values.push_back(detail::parse_double(fields[a + 1], line_no, path));
    }
    require(!dates.empty(), path + ": no data rows");
    ReturnPanel panel;
    panel.returns = Mat(static_cast<int>(dates.size()), d);
    for (std::size_t t = 0; t < dates.size(); ++t)
        for (int a = 0; a < d; ++a) panel.returns(static_cast<int>(t), a) = values[t * d + a];
    panel.dates = std::move(dates);
    panel.validate();
    return panel;
}

using Windows = std::array<int, 4>;
inline constexpr Windows kDefaultWindows{2, 5, 10, 21};

inline int max_window(const Windows& w) { return *std::max_element(w.begin(), w.end()); }

// Five features per asset at time t: r_t plus trailing means over the four
// windows (window w averages rows t-w+1..t). MA state is the zeta-EMA evolved
// from the panel start through row t.
inline ConditioningState build_conditioning(const ReturnPanel& panel, int t, const Windows& windows,
                                            double zeta) {
    for (int w : windows) require(w >= 1, "conditioning windows must be >= 1");
    require(t >= max_window(windows) && t < panel.T(),
            "build_conditioning: t=" + std::to_string(t) + " outside valid range [" +
                std::to_string(max_window(windows)) + ", " + std::to_string(panel.T() - 1) + "]");

    ConditioningState state;
    state.t = t;
    const int d = panel.d();
    state.features = Mat(d, 5);
    state.features.col(0) = panel.returns.row(t).transpose();
    for (int wi = 0; wi < 4; ++wi) {
        const int w = windows[wi];
        Vec mean = Vec::Zero(d);
        for (int s = t - w + 1; s <= t; ++s) mean += panel.returns.row(s).transpose();
        state.features.col(wi + 1) = mean / static_cast<double>(w);
    }

    state.ma_state = MAState::zero(d, zeta);
    for (int s = 0; s <= t; ++s) state.ma_state.fold(panel.row(s));
    state.ma_state.t = t;
    return state;
}

}  // namespace datcgan::markets
