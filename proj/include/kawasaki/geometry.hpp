#ifndef KAWASAKI_GEOMETRY_HPP
#define KAWASAKI_GEOMETRY_HPP

// Droplet geometry: clusters and quasi-squares, circumscribed rectangles,
// free / sleeping particles, thickened sets and the cloud merge map.

#include "kawasaki/lattice.hpp"
#include "kawasaki/params.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

namespace kawasaki {

/// Raised when a set is too large relative to the torus to unwrap unambiguously.
class WrapAmbiguity : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inclusive integer rectangle [x0, x1] x [y0, y1]. On a torus the corner
/// (x0, y0) is the anchor in [0, L) and the far corner may exceed L - 1.
struct Rectangle {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    bool contains(const Rectangle& o) const {
        return x0 <= o.x0 && o.x1 <= x1 && y0 <= o.y0 && o.y1 <= y1;
    }
    bool contains(Site s) const { return x0 <= s.x && s.x <= x1 && y0 <= s.y && s.y <= y1; }

    friend bool operator==(const Rectangle&, const Rectangle&) = default;
    friend auto operator<=>(const Rectangle&, const Rectangle&) = default;
};

inline Rectangle hull(const Rectangle& a, const Rectangle& b) {
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

inline int interval_gap(int a0, int a1, int b0, int b1) { return std::max({0, b0 - a1, a0 - b1}); }

/// l-infinity distance between the lattice point sets of two rectangles on Z^2.
inline int rect_dist(const Rectangle& a, const Rectangle& b) {
    return std::max(interval_gap(a.x0, a.x1, b.x0, b.x1), interval_gap(a.y0, a.y1, b.y0, b.y1));
}

namespace detail {

// Shift k*L minimising the gap between [b0, b1] + shift and [a0, a1].
inline int best_shift(int a0, int a1, int b0, int b1, int L) {
    int best = 0, best_gap = std::numeric_limits<int>::max();
    const int base = (a0 - b0) / L;
    for (int k = base - 2; k <= base + 2; ++k) {
        const int g = interval_gap(a0, a1, b0 + k * L, b1 + k * L);
        if (g < best_gap) {
            best_gap = g;
            best = k * L;
        }
    }
    return best;
}

inline bool too_wide(int extent, int L) { return 2 * (extent - 1) >= L; }

inline Rectangle normalize_anchor(Rectangle r, int L) {
    const int sx = wrap(r.x0, L) - r.x0, sy = wrap(r.y0, L) - r.y0;
    return {r.x0 + sx, r.y0 + sy, r.x1 + sx, r.y1 + sy};
}

// Smallest circular arc covering the given coordinates: (start, width).
inline std::pair<int, int> covering_arc(std::vector<int> c, int L) {
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    const int m = static_cast<int>(c.size());
    int best_gap = -1, start = c[0];
    for (int i = 0; i < m; ++i) {
        const int next = i + 1 < m ? c[i + 1] : c[0] + L;
        const int gap = next - c[i];
        if (gap > best_gap) {
            best_gap = gap;
            start = c[(i + 1) % m];
        }
    }
    return {start, L - best_gap + 1};
}

}  // namespace detail

/// Torus distance between rectangles (L = 0: the plane Z^2).
inline int rect_dist(const Rectangle& a, const Rectangle& b, int L) {
    if (L <= 0) return rect_dist(a, b);
    const int sx = detail::best_shift(a.x0, a.x1, b.x0, b.x1, L);
    const int sy = detail::best_shift(a.y0, a.y1, b.y0, b.y1, L);
    return std::max(interval_gap(a.x0, a.x1, b.x0 + sx, b.x1 + sx),
                    interval_gap(a.y0, a.y1, b.y0 + sy, b.y1 + sy));
}

/// Smallest axis-aligned rectangle containing the sites (L = 0: plane).
inline Rectangle circumscribed_rectangle(const std::vector<Site>& sites, int L = 0) {
    if (sites.empty()) throw std::invalid_argument("circumscribed_rectangle of an empty set");
    if (L <= 0) {
        Rectangle r{sites[0].x, sites[0].y, sites[0].x, sites[0].y};
        for (Site s : sites) r = hull(r, Rectangle{s.x, s.y, s.x, s.y});
        return r;
    }
    std::vector<int> xs, ys;
    xs.reserve(sites.size());
    ys.reserve(sites.size());
    for (Site s : sites) {
        xs.push_back(wrap(s.x, L));
        ys.push_back(wrap(s.y, L));
    }
    auto [x0, w] = detail::covering_arc(std::move(xs), L);
    auto [y0, h] = detail::covering_arc(std::move(ys), L);
    if (detail::too_wide(w, L) || detail::too_wide(h, L))
        throw WrapAmbiguity("set diameter reaches half the torus side");
    return {x0, y0, x0 + w - 1, y0 + h - 1};
}

// --- clusters --------------------------------------------------------------------

struct Cluster {
    std::vector<int> sites;  // site indices, ascending
    int volume = 0;
    std::optional<Rectangle> rc;  // empty when the cluster wraps ambiguously
    std::optional<QuasiSquare> quasi_square;
    double cx = 0, cy = 0;  // baricenter in unwrapped rc coordinates
};

struct Clusterisation {
    std::vector<Cluster> clusters;
    std::vector<int> singles;     // occupied sites without occupied neighbours
    std::vector<int> cluster_of;  // per site: cluster index or -1

    int max_volume() const {
        int v = singles.empty() ? 0 : 1;
        for (const auto& c : clusters) v = std::max(v, c.volume);
        return v;
    }
};

/// Geometry of one connected set of sites.
inline Cluster describe_cluster(const Configuration& config, std::vector<int> sites) {
    Cluster cl;
    std::sort(sites.begin(), sites.end());
    cl.volume = static_cast<int>(sites.size());
    std::vector<Site> pts;
    pts.reserve(sites.size());
    for (int s : sites) pts.push_back(config.site(s));
    cl.sites = std::move(sites);
    try {
        Rectangle rc = circumscribed_rectangle(pts, config.L());
        cl.rc = rc;
        if (rc.area() == cl.volume) {
            const int a = std::min(rc.width(), rc.height()), b = std::max(rc.width(), rc.height());
            if (is_quasi_square(a, b)) cl.quasi_square = QuasiSquare{a, b};
        }
        const int L = config.L();
        double sx = 0, sy = 0;
        for (Site p : pts) {
            sx += rc.x0 + wrap(p.x - rc.x0, L);
            sy += rc.y0 + wrap(p.y - rc.y0, L);
        }
        cl.cx = sx / cl.volume;
        cl.cy = sy / cl.volume;
    } catch (const WrapAmbiguity&) {
        cl.rc.reset();
    }
    return cl;
}

inline Clusterisation clusterise(const Configuration& config) {
    Clusterisation out;
    out.cluster_of.assign(config.sites(), -1);
    ClusterProbe probe(config.sites());
    std::vector<std::uint8_t> seen(config.sites(), 0);
    for (int i = 0; i < config.sites(); ++i) {
        if (!config.occupied(i) || seen[i]) continue;
        probe.volume(config, i);
        for (int s : probe.sites()) seen[s] = 1;
        if (probe.sites().size() == 1) {
            out.singles.push_back(i);
            continue;
        }
        const int id = static_cast<int>(out.clusters.size());
        for (int s : probe.sites()) out.cluster_of[s] = id;
        out.clusters.push_back(describe_cluster(config, probe.sites()));
    }
    return out;
}

inline bool in_R(const Configuration& config, const DerivedParams& dp) {
    return max_component_volume(config) <= dp.max_subcritical_volume;
}

inline bool in_Rprime(const Configuration& config, const DerivedParams& dp) {
    const auto cl = clusterise(config);
    int oversized = 0;
    for (const auto& c : cl.clusters) {
        if (c.volume <= dp.max_subcritical_volume) continue;
        if (++oversized > 1 || !(c.volume < dp.lambda_beta / 8)) return false;
    }
    return true;
}

// --- free particles ------------------------------------------------------------------

enum class Freeness { Clusterised, Free, Trapped };

inline const char* to_string(Freeness f) {
    switch (f) {
        case Freeness::Clusterised: return "clusterised";
        case Freeness::Free: return "free";
        case Freeness::Trapped: return "trapped";
    }
    return "?";
}

/// One step of the peeling certificate: particle `id` escapes along `path`
/// (site indices, start first) in round `round`.
struct Escape {
    int id = -1;
    int round = 0;
    std::vector<int> path;
};

struct FreenessReport {
    int window = 0;
    std::map<int, Freeness> status;
    std::vector<Escape> order;
    std::map<int, int> trapped_reach;  // trapped id -> sites its walk could reach

    Freeness of(int id) const { return status.at(id); }
    bool is_free(int id) const { return of(id) == Freeness::Free; }
};

namespace detail {

// Escape search for the particle at `start` with obstacles `present` (which
// includes the particle itself at `start`). Returns the path or empty.
class EscapeSearch {
public:
    std::vector<int> run(const Configuration& c, const std::vector<std::uint8_t>& present, int start,
                         int w, int* reached = nullptr) {
        const int L = c.L();
        w = std::min(w, L / 2);  // a wider target would wrap back towards the start
        const int side = 2 * w + 1;
        parent_.assign(static_cast<std::size_t>(side) * side, -2);
        queue_.clear();
        const Site s0 = c.site(start);
        auto site_of = [&](int off) {
            const int ox = off % side - w, oy = off / side - w;
            return wrap(s0.y + oy, L) * L + wrap(s0.x + ox, L);
        };
        auto clean = [&](int site) {
            if (site == start) return true;
            if (present[site]) return false;
            for (int n : c.neighbours(site))
                if (n != start && present[n]) return false;
            return true;
        };
        const int origin = w * side + w;
        parent_[origin] = -1;
        queue_.push_back(origin);
        for (std::size_t head = 0; head < queue_.size(); ++head) {
            const int off = queue_[head];
            const int ox = off % side - w, oy = off / side - w;
            if (std::max(std::abs(ox), std::abs(oy)) == w) {
                std::vector<int> path;
                for (int p = off; p != -1; p = parent_[p]) path.push_back(site_of(p));
                std::reverse(path.begin(), path.end());
                if (reached) *reached = static_cast<int>(head + 1);
                return path;
            }
            for (int k = 0; k < 4; ++k) {
                const int nx = ox + kDx[k], ny = oy + kDy[k];
                if (std::abs(nx) > w || std::abs(ny) > w) continue;
                const int noff = (ny + w) * side + (nx + w);
                if (parent_[noff] != -2) continue;
                if (!clean(site_of(noff))) {
                    parent_[noff] = -3;
                    continue;
                }
                parent_[noff] = off;
                queue_.push_back(noff);
            }
        }
        if (reached) *reached = static_cast<int>(queue_.size());
        return {};
    }

private:
    std::vector<int> parent_;
    std::vector<int> queue_;
};

// Iterative peeling over `candidates` (site indices of non-clusterised
// particles). `present` holds all obstacles and is updated as particles leave.
inline void peel(const Configuration& c, std::vector<std::uint8_t>& present,
                 std::vector<int> candidates, int w, FreenessReport& report) {
    EscapeSearch search;
    int round = 0;
    for (;;) {
        std::vector<std::pair<int, std::vector<int>>> freed;
        std::vector<int> stuck;
        for (int s : candidates) {
            int reached = 0;
            auto path = search.run(c, present, s, w, &reached);
            if (path.empty()) {
                stuck.push_back(s);
                report.trapped_reach[c.id_at(s)] = reached;
            } else {
                freed.emplace_back(s, std::move(path));
            }
        }
        if (freed.empty()) {
            for (int s : stuck) report.status[c.id_at(s)] = Freeness::Trapped;
            return;
        }
        for (auto& [s, path] : freed) {
            present[s] = 0;
            const int id = c.id_at(s);
            report.status[id] = Freeness::Free;
            report.trapped_reach.erase(id);
            report.order.push_back({id, round, std::move(path)});
        }
        candidates = std::move(stuck);
        ++round;
    }
}

}  // namespace detail

/// Iterative-peeling freeness with escape window w.
inline FreenessReport free_particles(const Configuration& c, int w = 10) {
    if (w < 2) throw std::invalid_argument("freeness window must be >= 2");
    FreenessReport report;
    report.window = w;
    std::vector<std::uint8_t> present(c.occupancy().begin(), c.occupancy().end());
    std::vector<int> candidates;
    for (auto [id, s] : c.particles()) {
        if (c.occupied_neighbours(s) > 0) {
            report.status[id] = Freeness::Clusterised;
        } else {
            candidates.push_back(s);
        }
    }
    detail::peel(c, present, std::move(candidates), w, report);
    return report;
}

/// Replays the escape certificate on a copy of the occupancy: each path must
/// step between neighbours through empty sites that touch no remaining particle.
inline bool verify_escapes(const Configuration& c, const FreenessReport& report) {
    std::vector<std::uint8_t> occ(c.occupancy().begin(), c.occupancy().end());
    for (const auto& e : report.order) {
        if (e.path.empty() || c.locate(e.id) != e.path.front()) return false;
        const int start = e.path.front();
        occ[start] = 0;
        for (std::size_t i = 1; i < e.path.size(); ++i) {
            const int s = e.path[i];
            if (!c.adjacent(e.path[i - 1], s) || occ[s]) return false;
            for (int n : c.neighbours(s))
                if (occ[n]) return false;
        }
        if (torus_dist(c.site(start), c.site(e.path.back()), c.L()) <
            std::min(report.window, c.L() / 2))
            return false;
    }
    return true;
}

struct StatusChange {
    int id = -1;
    std::optional<Freeness> before;  // empty for a particle seen for the first time
    Freeness after = Freeness::Clusterised;
};

/// Freeness maintained under single moves: after a move only non-clusterised
/// particles within distance w + 1 of the two changed sites are re-evaluated.
class FreenessTracker {
public:
    explicit FreenessTracker(int w = 10) : w_(w) {
        if (w < 2) throw std::invalid_argument("freeness window must be >= 2");
    }

    int window() const { return w_; }

    /// Full sweep. Returns the status changes.
    std::vector<StatusChange> sweep(const Configuration& c) {
        FreenessReport r = free_particles(c, w_);
        return absorb(c, r, /*all=*/true);
    }

    /// Local re-evaluation after the move from -> to. Returns the status changes.
    std::vector<StatusChange> after_move(const Configuration& c, int from, int to) {
        ensure_size(c);
        present_[from] = 0;
        present_[to] = 1;
        const int L = c.L();
        const int r = w_ + 1;
        std::vector<int> candidates;
        FreenessReport report;
        report.window = w_;
        if (++cur_ == 0) {
            std::fill(stamp_.begin(), stamp_.end(), 0);
            cur_ = 1;
        }
        for (int centre : {from, to}) {
            const Site cs = c.site(centre);
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int s = wrap(cs.y + dy, L) * L + wrap(cs.x + dx, L);
                    if (stamp_[s] == cur_ || !c.occupied(s)) continue;
                    stamp_[s] = cur_;
                    if (c.occupied_neighbours(s) > 0) {
                        report.status[c.id_at(s)] = Freeness::Clusterised;
                        present_[s] = 1;
                    } else {
                        candidates.push_back(s);
                        present_[s] = 1;
                    }
                }
        }
        detail::peel(c, present_, std::move(candidates), w_, report);
        return absorb(c, report, /*all=*/false);
    }

    Freeness status(int id) const { return status_.at(id); }
    const std::map<int, Freeness>& statuses() const { return status_; }

    FreenessReport report() const {
        FreenessReport r;
        r.window = w_;
        r.status = status_;
        return r;
    }

private:
    void ensure_size(const Configuration& c) {
        if (static_cast<int>(stamp_.size()) != c.sites()) stamp_.assign(c.sites(), 0);
        if (static_cast<int>(present_.size()) != c.sites()) present_.assign(c.sites(), 0);
    }

    std::vector<StatusChange> absorb(const Configuration& c, const FreenessReport& r, bool all) {
        ensure_size(c);
        std::vector<StatusChange> changed;
        auto note = [&](int id, Freeness st) {
            auto it = status_.find(id);
            if (it == status_.end()) {
                changed.push_back({id, std::nullopt, st});
            } else if (it->second != st) {
                changed.push_back({id, it->second, st});
            }
        };
        if (all) {
            std::fill(present_.begin(), present_.end(), 0);
            std::map<int, Freeness> fresh;
            for (auto [id, st] : r.status) {
                note(id, st);
                fresh[id] = st;
            }
            status_ = std::move(fresh);
        } else {
            for (auto [id, st] : r.status) {
                note(id, st);
                status_[id] = st;
            }
        }
        for (auto [id, st] : r.status) {
            const int s = c.locate(id);
            present_[s] = st == Freeness::Free ? 0 : 1;
        }
        return changed;
    }

    int w_;
    std::map<int, Freeness> status_;
    std::vector<std::uint8_t> present_;
    std::vector<unsigned> stamp_;
    unsigned cur_ = 0;
};

// --- sleeping particles ---------------------------------------------------------------

/// A particle sleeps at time t when it was not free during [t - e^{D beta}, t].
class SleepState {
public:
    explicit SleepState(double sleep_after = 1.0) : sleep_after_(sleep_after) {}

    double sleep_after() const { return sleep_after_; }
    double last_update() const { return last_update_; }

    /// Registers a particle. `asleep` starts it with no free time on record.
    void add(int id, double t, bool asleep = false) {
        if (entries_.count(id)) throw std::invalid_argument("particle " + std::to_string(id) + " already tracked");
        entries_[id] = {asleep ? -std::numeric_limits<double>::infinity() : t, !asleep};
    }

    bool tracks(int id) const { return entries_.count(id) != 0; }

    /// Records the free/non-free status of one particle observed at time t.
    void observe(int id, bool is_free, double t) {
        auto it = entries_.find(id);
        if (it == entries_.end()) throw std::out_of_range("unknown particle id " + std::to_string(id));
        if (t < last_update_) throw std::invalid_argument("sleep updates must be time ordered");
        if (is_free) it->second.last_free = t;
        it->second.free_now = is_free;
        last_update_ = t;
    }

    /// last_free_time := t for every particle the report calls free.
    void update(const FreenessReport& report, double t) {
        if (t < last_update_) throw std::invalid_argument("sleep updates must be time ordered");
        for (auto [id, st] : report.status) {
            if (!entries_.count(id)) throw std::out_of_range("unknown particle id " + std::to_string(id));
        }
        for (auto [id, st] : report.status) observe(id, st == Freeness::Free, t);
        last_update_ = t;
    }

    double last_free_time(int id) const { return entries_.at(id).last_free; }

    bool sleeping(int id, double t) const {
        const auto& e = entries_.at(id);
        return !e.free_now && t - e.last_free >= sleep_after_;
    }
    bool active(int id, double t) const { return !sleeping(id, t); }

    const auto& entries() const { return entries_; }

private:
    struct Entry {
        double last_free;
        bool free_now;
    };
    double sleep_after_;
    double last_update_ = -std::numeric_limits<double>::infinity();
    std::map<int, Entry> entries_;
};

inline SleepState update_sleep(SleepState sleep, const FreenessReport& report, double t) {
    sleep.update(report, t);
    return sleep;
}

/// Maximum number of active particles over square tiles of side ceil(e^{S beta / 2}).
inline int active_box_diagnostic(const Configuration& c, const SleepState& sleep, double S_exponent,
                                 double beta, double t) {
    const int side = std::max(1, static_cast<int>(std::ceil(std::exp(S_exponent * beta / 2))));
    const int per_row = (c.L() + side - 1) / side;
    std::vector<int> counts(static_cast<std::size_t>(per_row) * per_row, 0);
    int best = 0;
    for (auto [id, s] : c.particles()) {
        if (!sleep.tracks(id) || sleep.sleeping(id, t)) continue;
        const Site p = c.site(s);
        int& n = counts[(p.y / side) * per_row + p.x / side];
        best = std::max(best, ++n);
    }
    return best;
}

// --- thickening and clouds -----------------------------------------------------------

struct Thickened {
    std::vector<int> sites;  // ascending site indices
    int radius = 0;          // integer l-infinity radius used
    bool whole_torus = false;
};

/// All sites within closed l-infinity distance e^{s beta / 2} of A.
inline Thickened thicken(const std::vector<int>& A, double s, double beta, int L) {
    if (s < 0) throw std::invalid_argument("thickening exponent must be >= 0");
    Thickened out;
    out.radius = static_cast<int>(std::floor(std::exp(s * beta / 2) + 1e-12));
    if (A.empty()) return out;
    if (2 * out.radius + 1 >= L) {
        out.whole_torus = true;
        out.sites.resize(static_cast<std::size_t>(L) * L);
        std::iota(out.sites.begin(), out.sites.end(), 0);
        return out;
    }
    std::vector<std::uint8_t> mark(static_cast<std::size_t>(L) * L, 0);
    for (int a : A) {
        const int ax = a % L, ay = a / L;
        for (int dy = -out.radius; dy <= out.radius; ++dy)
            for (int dx = -out.radius; dx <= out.radius; ++dx)
                mark[wrap(ay + dy, L) * L + wrap(ax + dx, L)] = 1;
    }
    for (int i = 0; i < L * L; ++i)
        if (mark[i]) out.sites.push_back(i);
    return out;
}

struct CloudSet {
    std::vector<Rectangle> rectangles;  // sorted
    double sigma = 0;
    int iterations = 0;
};

namespace detail {

struct DisjointSets {
    explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
    std::vector<int> parent;
};

// One application of the merge map: classes of the "distance < sigma" chain
// relation, each replaced by the circumscribed rectangle of its union.
inline std::vector<Rectangle> merge_once(const std::vector<Rectangle>& rects, double sigma, int L) {
    const int n = static_cast<int>(rects.size());
    DisjointSets ds(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rect_dist(rects[i], rects[j], L) < sigma) ds.unite(i, j);
    std::map<int, std::vector<int>> classes;
    for (int i = 0; i < n; ++i) classes[ds.find(i)].push_back(i);
    std::vector<Rectangle> out;
    for (auto& [root, members] : classes) {
        if (L <= 0) {
            Rectangle h = rects[members[0]];
            for (int m : members) h = hull(h, rects[m]);
            out.push_back(h);
            continue;
        }
        // Place each member at the image nearest to an already placed one.
        std::vector<Rectangle> placed{rects[members[0]]};
        std::vector<int> pending(members.begin() + 1, members.end());
        while (!pending.empty()) {
            bool progress = false;
            for (std::size_t k = 0; k < pending.size(); ++k) {
                const Rectangle& r = rects[pending[k]];
                for (const Rectangle& p : placed) {
                    if (!(rect_dist(p, r, L) < sigma)) continue;
                    const int sx = best_shift(p.x0, p.x1, r.x0, r.x1, L);
                    const int sy = best_shift(p.y0, p.y1, r.y0, r.y1, L);
                    placed.push_back({r.x0 + sx, r.y0 + sy, r.x1 + sx, r.y1 + sy});
                    pending.erase(pending.begin() + static_cast<long>(k));
                    progress = true;
                    break;
                }
                if (progress) break;
            }
            if (!progress) throw std::logic_error("merge class is not connected");
        }
        Rectangle h = placed[0];
        for (const auto& p : placed) h = hull(h, p);
        if (too_wide(h.width(), L) || too_wide(h.height(), L))
            throw WrapAmbiguity("cloud reaches half the torus side");
        out.push_back(normalize_anchor(h, L));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Fixed point of the merge map with merge distance sigma (L = 0: plane).
inline CloudSet aggregate_clouds(std::vector<Rectangle> rects, double sigma, int L = 0) {
    if (!(sigma > 0)) throw std::invalid_argument("merge distance must be > 0");
    std::sort(rects.begin(), rects.end());
    CloudSet out;
    out.sigma = sigma;
    for (;;) {
        auto next = detail::merge_once(rects, sigma, L);
        ++out.iterations;
        if (next == rects) break;
        rects = std::move(next);
    }
    out.rectangles = std::move(rects);
    return out;
}

/// Cloud radius r_j = exp(beta/2 (theta - kappa sum_{i<=j} 2^{-i})).
inline double cloud_schedule(int j, double theta, double kappa, double beta) {
    if (j < 0) throw std::invalid_argument("cloud index must be >= 0");
    double r = std::exp((theta - kappa) * beta / 2);
    for (int i = 1; i <= j; ++i) r *= std::exp(-(kappa / std::ldexp(1.0, i)) * beta / 2);
    return r;
}

}  // namespace kawasaki

#endif
