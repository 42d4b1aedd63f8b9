#ifndef KAWASAKI_TOYMODEL_HPP
#define KAWASAKI_TOYMODEL_HPP

// The birth-death caricature xi on quasi-square dimensions and the
// aggregated arrival chain zeta, with exact solvers and Monte Carlo runners.

#include "kawasaki/params.hpp"
#include "kawasaki/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace kawasaki {

enum class ChainMode { Cycling, History };

/// States are indexed 0 = (0,0), 1 = (2,2), ..., last = (ell_c, ell_c).
struct ChainSpec {
    ChainMode mode = ChainMode::History;
    double beta = 0;
    std::vector<QuasiSquare> states;
    std::vector<double> up;
    std::vector<double> down;
    std::vector<bool> absorbing;

    int size() const { return static_cast<int>(states.size()); }
    int last() const { return size() - 1; }
    double stay(int i) const { return 1.0 - up[i] - down[i]; }

    int index_of(QuasiSquare q) const {
        for (int i = 0; i < size(); ++i)
            if (states[i] == q) return i;
        throw std::out_of_range("state " + to_string(q) + " is not in the chain");
    }
};

namespace detail {

inline ChainSpec xi_probabilities(const ModelParams& p, ChainMode mode, double beta) {
    const DerivedParams dp = derive(p);
    ChainSpec s;
    s.mode = mode;
    s.beta = beta;
    s.states.push_back({0, 0});
    for (QuasiSquare q{2, 2};; q = next_quasi_square(q)) {
        s.states.push_back(q);
        if (q.l1 == dp.ell_c && q.l2 == dp.ell_c) break;
    }
    const int n = s.size();
    s.up.assign(n, 0.0);
    s.down.assign(n, 0.0);
    s.absorbing.assign(n, false);
    s.absorbing[n - 1] = true;
    if (mode == ChainMode::History) {
        s.absorbing[0] = true;
    } else {
        s.up[0] = std::exp(-(dp.r00 - p.Delta) * beta);
    }
    for (int i = 1; i < n - 1; ++i) {
        s.up[i] = std::exp(-(p.Delta - p.U) * beta);
        s.down[i] = std::exp(-(resistance(s.states[i].l1, s.states[i].l2, p.U, p.Delta) - p.Delta) * beta);
    }
    return s;
}

inline bool admissible(const ChainSpec& s) {
    for (int i = 0; i < s.size(); ++i)
        if (!(s.up[i] + s.down[i] <= 1.0)) return false;
    return true;
}

}  // namespace detail

/// Builds xi at the inverse temperature p.beta.
inline ChainSpec build_xi(const ModelParams& p, ChainMode mode) {
    ChainSpec s = detail::xi_probabilities(p, mode, p.beta);
    if (detail::admissible(s)) return s;
    // Exponents are positive except possibly r(0,0) - Delta, so u + d decreases in beta.
    double hi = p.beta;
    for (int i = 0; i < 200 && !detail::admissible(detail::xi_probabilities(p, mode, hi)); ++i) hi *= 2;
    if (!detail::admissible(detail::xi_probabilities(p, mode, hi)))
        throw ParamError("xi has u + d > 1 at every beta (r(0,0) <= Delta)");
    double lo = p.beta;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (detail::admissible(detail::xi_probabilities(p, mode, mid)) ? hi : lo) = mid;
    }
    std::ostringstream os;
    os << "xi transition probabilities exceed 1 at beta = " << p.beta << "; minimal admissible beta is "
       << hi;
    throw ParamError(os.str());
}

/// P(reach the last state before (0,0) | start), closed-form gambler's ruin.
inline double absorption_prob(const ChainSpec& s, int start) {
    if (s.mode != ChainMode::History) throw std::invalid_argument("absorption_prob needs a history-mode chain");
    const int m = s.size() - 2;  // transient states 1..m
    if (start <= 0) return 0.0;
    if (start >= m + 1) return 1.0;
    // h(i) = S(i) / S(m+1), S(i) = sum_{k=0}^{i-1} prod_{j=1}^{k} rho_j, rho_j = d_j / u_j.
    double prod = 1.0, partial = 0.0, at_start = 0.0;
    for (int k = 0; k <= m; ++k) {
        if (k > 0) prod *= s.down[k] / s.up[k];
        partial += prod;
        if (k == start - 1) at_start = partial;
    }
    return at_start / partial;
}

namespace detail {

// Rows of (I - Q) restricted to transient states, each divided by u_i + d_i.
inline Eigen::MatrixXd transient_system(const ChainSpec& s, std::vector<int>& transient,
                                        std::vector<double>& scale) {
    transient.clear();
    for (int i = 0; i < s.size(); ++i)
        if (!s.absorbing[i]) transient.push_back(i);
    const int n = static_cast<int>(transient.size());
    std::vector<int> pos(s.size(), -1);
    for (int k = 0; k < n; ++k) pos[transient[k]] = k;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    scale.assign(n, 1.0);
    for (int k = 0; k < n; ++k) {
        const int i = transient[k];
        const double out = s.up[i] + s.down[i];
        if (!(out > 0)) throw std::domain_error("transient state never moves");
        scale[k] = out;
        A(k, k) = 1.0;
        if (i + 1 < s.size() && pos[i + 1] >= 0) A(k, pos[i + 1]) -= s.up[i] / out;
        if (i - 1 >= 0 && pos[i - 1] >= 0) A(k, pos[i - 1]) -= s.down[i] / out;
    }
    return A;
}

}  // namespace detail

/// Same probability by solving (I - Q) h = b.
inline double absorption_prob_linear(const ChainSpec& s, int start) {
    if (s.mode != ChainMode::History) throw std::invalid_argument("absorption_prob needs a history-mode chain");
    if (s.absorbing[start]) return start == s.last() ? 1.0 : 0.0;
    std::vector<int> tr;
    std::vector<double> scale;
    const Eigen::MatrixXd A = detail::transient_system(s, tr, scale);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<int>(tr.size()));
    for (std::size_t k = 0; k < tr.size(); ++k)
        if (tr[k] + 1 == s.last()) b(static_cast<int>(k)) = s.up[tr[k]] / scale[k];
    const Eigen::VectorXd h = A.partialPivLu().solve(b);
    for (std::size_t k = 0; k < tr.size(); ++k)
        if (tr[k] == start) return h(static_cast<int>(k));
    return 0.0;
}

/// Expected number of steps until absorption, self-loops included.
inline double mean_absorption_time(const ChainSpec& s, int start) {
    if (s.mode != ChainMode::History) throw std::invalid_argument("mean_absorption_time needs a history-mode chain");
    if (s.absorbing[start]) return 0.0;
    std::vector<int> tr;
    std::vector<double> scale;
    const Eigen::MatrixXd A = detail::transient_system(s, tr, scale);
    Eigen::VectorXd b(static_cast<int>(tr.size()));
    for (std::size_t k = 0; k < tr.size(); ++k) b(static_cast<int>(k)) = 1.0 / scale[k];
    const Eigen::VectorXd t = A.partialPivLu().solve(b);
    for (std::size_t k = 0; k < tr.size(); ++k)
        if (tr[k] == start) return t(static_cast<int>(k));
    return 0.0;
}

// --- Monte Carlo ------------------------------------------------------------------

/// Performs one xi step from state i. Self-loops are part of the step.
inline int xi_step(const ChainSpec& s, int i, Rng& rng) {
    if (s.absorbing[i]) return i;
    const double u = uniform01(rng);
    if (u < s.up[i]) return i + 1;
    if (u < s.up[i] + s.down[i]) return i - 1;
    return i;
}

struct XiRun {
    std::int64_t steps = 0;
    int final_state = 0;
    bool truncated = false;
};

/// Runs xi from `start` until absorption; runs of self-loops are drawn as one geometric variate.
inline XiRun simulate_xi(const ChainSpec& s, int start, Rng& rng,
                         std::int64_t max_steps = std::numeric_limits<std::int64_t>::max()) {
    XiRun run;
    int i = start;
    while (!s.absorbing[i]) {
        const double move = s.up[i] + s.down[i];
        if (move < 1.0) {
            std::geometric_distribution<std::int64_t> wait(move);
            run.steps += wait(rng);
        }
        run.steps += 1;
        if (run.steps > max_steps) {
            run.steps = max_steps;
            run.truncated = true;
            break;
        }
        i = uniform01(rng) * move < s.up[i] ? i + 1 : i - 1;
    }
    run.final_state = i;
    return run;
}

struct ZetaResult {
    std::int64_t steps = 0;  // steps until the first success
    bool success = false;
    bool truncated = false;
    std::int64_t arrivals = 0;
    std::int64_t failed = 0;
    std::int64_t live_at_end = 0;
    std::int64_t max_live = 0;
};

/// Aggregated chain: every step advances each live history of xi (history
/// mode) and then adds Poisson(a) new histories at (2,2).
inline ZetaResult simulate_zeta(const ChainSpec& s, double a, Rng& rng, std::int64_t max_steps) {
    if (s.mode != ChainMode::History) throw std::invalid_argument("zeta runs history-mode chains");
    if (!(a >= 0)) throw std::invalid_argument("arrival mean must be >= 0");
    ZetaResult r;
    std::vector<int> live;
    std::poisson_distribution<std::int64_t> arrivals(a > 0 ? a : 1.0);
    while (r.steps < max_steps) {
        ++r.steps;
        std::size_t keep = 0;
        for (std::size_t k = 0; k < live.size(); ++k) {
            const int next = xi_step(s, live[k], rng);
            if (next == s.last()) {
                r.success = true;
            } else if (next == 0) {
                ++r.failed;
                continue;
            }
            live[keep++] = next;
        }
        live.resize(keep);
        if (r.success) break;
        const std::int64_t n = a > 0 ? arrivals(rng) : 0;
        r.arrivals += n;
        live.insert(live.end(), static_cast<std::size_t>(n), 1);
        r.max_live = std::max<std::int64_t>(r.max_live, static_cast<std::int64_t>(live.size()));
    }
    r.truncated = !r.success;
    r.live_at_end = static_cast<std::int64_t>(live.size());
    return r;
}

}  // namespace kawasaki

#endif
