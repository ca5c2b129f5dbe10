#include "pxrl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pxrl/rng.hpp"

namespace pxrl {

RateMap rate_map(const ActivationDump& dump, int unit, int cond) {
    if (unit < 0 || unit >= dump.units)
        throw ContractError("rate_map: unit " + std::to_string(unit) + " out of range");
    RateMap map;
    map.rate.resize(dump.states);
    map.occupancy.resize(dump.states);
    double total = 0.0;
    std::string missing;
    for (int s = 0; s < dump.states; ++s) {
        const double v = dump.visit(s, cond);
        if (v <= 0.0) missing += (missing.empty() ? "" : ",") + std::to_string(s);
        total += v;
    }
    if (!missing.empty())
        throw ContractError("rate_map: states never visited in the evaluation rollout: " + missing);
    for (int s = 0; s < dump.states; ++s) {
        map.rate[s] = dump.value(unit, s, cond);
        map.occupancy[s] = dump.visit(s, cond) / total;
    }
    return map;
}

double spatial_information(const RateMap& map) {
    double mean_rate = 0.0;
    for (size_t i = 0; i < map.rate.size(); ++i) {
        if (map.rate[i] < 0.0)
            throw ContractError("spatial_information: negative activation at state " + std::to_string(i));
        mean_rate += map.occupancy[i] * map.rate[i];
    }
    if (mean_rate <= 0.0) return 0.0;
    double si = 0.0;
    for (size_t i = 0; i < map.rate.size(); ++i) {
        const double lam = map.rate[i];
        if (lam <= 0.0) continue;  // zero-rate states contribute 0
        const double ratio = lam / mean_rate;
        si += map.occupancy[i] * ratio * std::log2(ratio);
    }
    return si;
}

double silent_fraction(const ActivationDump& dump, double threshold) {
    int silent = 0;
    for (int u = 0; u < dump.units; ++u) {
        bool all_quiet = true;
        for (int s = 0; s < dump.states && all_quiet; ++s)
            for (int c = 0; c < dump.conds; ++c)
                if (std::fabs(dump.value(u, s, c)) >= threshold) {
                    all_quiet = false;
                    break;
                }
        if (all_quiet) ++silent;
    }
    return static_cast<double>(silent) / dump.units;
}

CosineResult cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    CosineResult r;
    const bool za = na == 0.0, zb = nb == 0.0;
    if (za && zb) return {1.0, true};  // collapsed pair convention
    if (za || zb) return {0.0, true};
    r.value = dot / (std::sqrt(na) * std::sqrt(nb));
    return r;
}

namespace {

std::vector<double> z_vec(const ZSeries& series, int k, int s) {
    const float* p = series.z(k, s);
    return std::vector<double>(p, p + series.dz);
}

}  // namespace

std::vector<double> pairwise_cosine_trajectory(const ZSeries& series, int n_pairs,
                                               uint64_t pair_seed, int* flagged_pairs) {
    if (series.checkpoints < 1) throw ContractError("pairwise_cosine_trajectory: no checkpoints");
    Rng rng(pair_seed);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        int a = rng.uniform_int(series.states);
        int b = rng.uniform_int(series.states - 1);
        if (b >= a) ++b;  // distinct states
        pairs.push_back({a, b});
    }
    if (flagged_pairs) *flagged_pairs = 0;
    std::vector<double> out(series.checkpoints, 0.0);
    for (int k = 0; k < series.checkpoints; ++k) {
        double acc = 0.0;
        for (auto [a, b] : pairs) {
            const auto r = cosine_similarity(z_vec(series, k, a), z_vec(series, k, b));
            acc += r.value;
            if (r.flagged && flagged_pairs) ++*flagged_pairs;
        }
        out[k] = acc / n_pairs;
    }
    return out;
}

CornerSeparation corner_separation(const ZSeries& series, int side) {
    auto find_state = [&](int x, int y) {
        for (int s = 0; s < series.states; ++s)
            if (series.state_x[s] == x && series.state_y[s] == y) return s;
        throw ContractError("corner_separation: corner state not present in series");
    };
    const int c0 = find_state(0, 0), c1 = find_state(side - 1, 0);
    const int c2 = find_state(0, side - 1), c3 = find_state(side - 1, side - 1);
    CornerSeparation out;
    out.pairs = {std::pair{c0, c1}, {c0, c2}, {c0, c3}, {c1, c2}, {c1, c3}, {c2, c3}};
    out.series.resize(series.checkpoints);
    for (int k = 0; k < series.checkpoints; ++k)
        for (int p = 0; p < 6; ++p)
            out.series[k][p] =
                cosine_similarity(z_vec(series, k, out.pairs[p].first), z_vec(series, k, out.pairs[p].second)).value;
    return out;
}

// --- PCA ---------------------------------------------------------------------

namespace {

// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues and fills V column-orthonormal with eigenvectors.
std::vector<double> jacobi_eigen(std::vector<double> a, int n, std::vector<double>& v) {
    v.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[static_cast<size_t>(p) * n + q] * a[static_cast<size_t>(p) * n + q];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<size_t>(p) * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a[static_cast<size_t>(p) * n + p];
                const double aqq = a[static_cast<size_t>(q) * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<size_t>(k) * n + p];
                    const double akq = a[static_cast<size_t>(k) * n + q];
                    a[static_cast<size_t>(k) * n + p] = c * akp - s * akq;
                    a[static_cast<size_t>(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<size_t>(p) * n + k];
                    const double aqk = a[static_cast<size_t>(q) * n + k];
                    a[static_cast<size_t>(p) * n + k] = c * apk - s * aqk;
                    a[static_cast<size_t>(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v[static_cast<size_t>(k) * n + p];
                    const double vkq = v[static_cast<size_t>(k) * n + q];
                    v[static_cast<size_t>(k) * n + p] = c * vkp - s * vkq;
                    v[static_cast<size_t>(k) * n + q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> eig(n);
    for (int i = 0; i < n; ++i) eig[i] = a[static_cast<size_t>(i) * n + i];
    return eig;
}

}  // namespace

Pca3Result pca3(const std::vector<float>& z_by_state, int states, int dz) {
    if (states < 4) throw ContractError("pca3: need at least 4 distinct states");
    std::vector<double> centered(static_cast<size_t>(states) * dz);
    std::vector<double> mean(dz, 0.0);
    for (int s = 0; s < states; ++s)
        for (int d = 0; d < dz; ++d) mean[d] += z_by_state[static_cast<size_t>(s) * dz + d];
    for (auto& m : mean) m /= states;
    for (int s = 0; s < states; ++s)
        for (int d = 0; d < dz; ++d)
            centered[static_cast<size_t>(s) * dz + d] = z_by_state[static_cast<size_t>(s) * dz + d] - mean[d];

    std::vector<double> cov(static_cast<size_t>(dz) * dz, 0.0);
    for (int i = 0; i < dz; ++i)
        for (int j = i; j < dz; ++j) {
            double acc = 0.0;
            for (int s = 0; s < states; ++s)
                acc += centered[static_cast<size_t>(s) * dz + i] * centered[static_cast<size_t>(s) * dz + j];
            acc /= states - 1;
            cov[static_cast<size_t>(i) * dz + j] = acc;
            cov[static_cast<size_t>(j) * dz + i] = acc;
        }

    std::vector<double> vecs;
    auto eig = jacobi_eigen(cov, dz, vecs);
    std::vector<int> order(dz);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return eig[a] > eig[b]; });

    double total = 0.0;
    for (double e : eig) total += std::max(e, 0.0);

    Pca3Result out;
    out.states = states;
    out.coords.assign(static_cast<size_t>(states) * 3, 0.0);
    const double rank_tol = 1e-9 * std::max(total, 1.0);
    int available = 0;
    for (int c = 0; c < 3 && c < dz; ++c)
        if (eig[order[c]] > rank_tol) ++available;
    out.low_rank = available < 3;

    out.axes.assign(3, std::vector<double>(dz, 0.0));
    for (int c = 0; c < 3 && c < dz; ++c) {
        const int col = order[c];
        out.explained_variance_ratio[c] = total > 0.0 ? std::max(eig[col], 0.0) / total : 0.0;
        for (int d = 0; d < dz; ++d)
            out.axes[c][d] = vecs[static_cast<size_t>(d) * dz + order[c]];
        if (eig[col] <= rank_tol) continue;  // pad zeros beyond the rank
        for (int s = 0; s < states; ++s) {
            double acc = 0.0;
            for (int d = 0; d < dz; ++d)
                acc += centered[static_cast<size_t>(s) * dz + d] * vecs[static_cast<size_t>(d) * dz + col];
            out.coords[static_cast<size_t>(s) * 3 + c] = acc;
        }
    }
    return out;
}

// --- ring analyses ------------------------------------------------------------

namespace {

struct Peak {
    int index = -1;
    bool tie = false;
    bool flat = false;
};

Peak ring_peak(const ActivationDump& dump, int unit) {
    Peak p;
    float best = -1e30f;
    float worst = 1e30f;
    for (int s = 0; s < dump.states; ++s) {
        const float v = dump.value(unit, s);
        if (v > best) {
            best = v;
            p.index = s;
            p.tie = false;
        } else if (v == best) {
            p.tie = true;
        }
        worst = std::min(worst, v);
    }
    p.flat = best - worst < 1e-9f;
    return p;
}

double signed_ring_fraction(int from, int to, int n) {
    int d = (to - from) % n;
    if (d < 0) d += n;
    if (d > n / 2) d -= n;
    return static_cast<double>(d) / n;
}

}  // namespace

PeakShiftResult field_peak_shift(const ActivationDump& pre, const ActivationDump& post) {
    if (pre.units != post.units || pre.states != post.states)
        throw ContractError("field_peak_shift: dump shapes differ");
    PeakShiftResult out;
    for (int u = 0; u < pre.units; ++u) {
        const Peak a = ring_peak(pre, u);
        const Peak b = ring_peak(post, u);
        if (a.flat || b.flat) {
            ++out.excluded_flat;
            continue;
        }
        out.units.push_back(u);
        out.tie_flagged.push_back(a.tie || b.tie);
        out.shifts.push_back(signed_ring_fraction(a.index, b.index, pre.states));
    }
    out.median = out.shifts.empty() ? 0.0 : median_of(out.shifts);
    return out;
}

RewardDistanceResult peak_reward_distances(const ActivationDump& maps, int reward_state) {
    if (reward_state < 0 || reward_state >= maps.states)
        throw ContractError("peak_reward_distances: reward state out of range");
    RewardDistanceResult out;
    for (int u = 0; u < maps.units; ++u) {
        const Peak p = ring_peak(maps, u);
        if (p.flat) {
            ++out.excluded_flat;
            continue;
        }
        out.units.push_back(u);
        out.distances.push_back(signed_ring_fraction(reward_state, p.index, maps.states));
    }
    out.median = out.distances.empty() ? 0.0 : median_of(out.distances);
    return out;
}

std::vector<CosineResult> split_similarity_profile(const ActivationDump& dump) {
    if (dump.conds != 2) throw ContractError("split_similarity_profile: dump needs 2 conditions");
    std::vector<CosineResult> out(dump.states);
    for (int s = 0; s < dump.states; ++s) {
        std::vector<double> left(dump.units), right(dump.units);
        for (int u = 0; u < dump.units; ++u) {
            left[u] = dump.value(u, s, 0);
            right[u] = dump.value(u, s, 1);
        }
        out[s] = cosine_similarity(left, right);
    }
    return out;
}

SelectivityResult selectivity_index(const ActivationDump& dump) {
    if (dump.conds != 2) throw ContractError("selectivity_index: dump needs 2 conditions");
    SelectivityResult out;
    for (int u = 0; u < dump.units; ++u) {
        double rv = 0.0, ra = 0.0;
        for (int s = 0; s < dump.states; ++s) {
            rv += dump.value(u, s, 0);
            ra += dump.value(u, s, 1);
        }
        rv /= dump.states;
        ra /= dump.states;
        if (rv + ra < 1e-6) {
            ++out.excluded;
            continue;
        }
        out.units.push_back(u);
        out.index.push_back((rv - ra) / (rv + ra));
    }
    return out;
}

std::array<double, 3> swap_response_delta(const ActivationDump& pre, const ActivationDump& post,
                                          int unit, const std::array<int, 3>& p_states,
                                          const std::array<int, 3>& n_states) {
    std::array<double, 3> delta{};
    for (int k = 0; k < 3; ++k) {
        const double before = pre.value(unit, p_states[k]) - pre.value(unit, n_states[k]);
        const double after = post.value(unit, p_states[k]) - post.value(unit, n_states[k]);
        delta[k] = after - before;
    }
    return delta;
}

// --- statistics ------------------------------------------------------------------

namespace {

double gammln(double x) {
    static const double cof[6] = {76.18009172947146,  -86.50532032941677, 24.01409824083091,
                                  -1.231739572450155, 0.1208650973866179e-2, -0.5395239384953e-5};
    double y = x, tmp = x + 5.5;
    tmp -= (x + 0.5) * std::log(tmp);
    double ser = 1.000000000190015;
    for (int j = 0; j < 6; ++j) ser += cof[j] / ++y;
    return -tmp + std::log(2.5066282746310005 * ser / x);
}

double betacf(double a, double b, double x) {
    const double eps = 3e-12, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(gammln(a + b) - gammln(a) - gammln(b) + a * std::log(x) +
                               b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// two-sided p for Student's t with df degrees of freedom
double t_p_two(double t, double df) {
    if (df <= 0.0) return 1.0;
    return betai(df / 2.0, 0.5, df / (df + t * t));
}

double variance(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return v.size() > 1 ? acc / (v.size() - 1) : 0.0;
}

}  // namespace

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw ContractError("welch_t_test: need >= 2 samples per group");
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = variance(a, ma) / a.size();
    const double vb = variance(b, mb) / b.size();
    TTestResult r;
    if (va + vb == 0.0) {
        r.t = ma == mb ? 0.0 : (ma > mb ? 1e30 : -1e30);
        r.df = static_cast<double>(a.size() + b.size() - 2);
    } else {
        r.t = (ma - mb) / std::sqrt(va + vb);
        r.df = (va + vb) * (va + vb) /
               (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
    }
    r.p_two = t_p_two(r.t, r.df);
    r.p_one_greater = r.t > 0.0 ? r.p_two / 2.0 : 1.0 - r.p_two / 2.0;
    return r;
}

TTestResult paired_t_test(const std::vector<double>& pre, const std::vector<double>& post) {
    if (pre.size() != post.size() || pre.size() < 2)
        throw ContractError("paired_t_test: need matched samples, >= 2 pairs");
    std::vector<double> diff(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) diff[i] = post[i] - pre[i];
    const double m = mean_of(diff);
    const double sd = std::sqrt(variance(diff, m));
    TTestResult r;
    r.df = static_cast<double>(diff.size() - 1);
    if (sd == 0.0) {
        r.t = m == 0.0 ? 0.0 : (m > 0.0 ? 1e30 : -1e30);
    } else {
        r.t = m / (sd / std::sqrt(static_cast<double>(diff.size())));
    }
    r.p_two = t_p_two(r.t, r.df);
    r.p_one_greater = r.t > 0.0 ? r.p_two / 2.0 : 1.0 - r.p_two / 2.0;
    return r;
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("spearman_rho: need matched samples");
    const auto rx = ranks_with_ties(x);
    const auto ry = ranks_with_ties(y);
    const double mx = mean_of(rx), my = mean_of(ry);
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) return 0.0;
    return num / std::sqrt(dx * dy);
}

double median_of(std::vector<double> v) {
    if (v.empty()) throw ContractError("median_of: empty sample");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw ContractError("mean_of: empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double sem_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    if (v.size() < 2) return 0.0;
    return std::sqrt(variance(v, m) / v.size());
}

}  // namespace pxrl
