#ifndef KAWASAKI_HARNESS_HPP
#define KAWASAKI_HARNESS_HPP

// Nucleation experiments: replica driver, exit classification, tube
// detection, cloud/history decomposition, scaling fit and record files.

#include "kawasaki/config.hpp"
#include "kawasaki/geometry.hpp"
#include "kawasaki/gibbs.hpp"
#include "kawasaki/kmc.hpp"
#include "kawasaki/lattice.hpp"
#include "kawasaki/params.hpp"
#include "kawasaki/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace kawasaki {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ExitMode { Growth, Coalescence, Truncated };

inline const char* to_string(ExitMode m) {
    switch (m) {
        case ExitMode::Growth: return "growth";
        case ExitMode::Coalescence: return "coalescence";
        case ExitMode::Truncated: return "truncated";
    }
    return "?";
}

inline ExitMode exit_mode_from(const std::string& s) {
    if (s == "growth") return ExitMode::Growth;
    if (s == "coalescence") return ExitMode::Coalescence;
    if (s == "truncated") return ExitMode::Truncated;
    throw ParseError("unknown exit mode '" + s + "'", 0);
}

class ClassificationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- exit classification -------------------------------------------------------------

struct ExitClass {
    ExitMode mode = ExitMode::Growth;
    int volume = 0;         // volume of the cluster formed by the move
    int real_clusters = 0;  // components of volume >= 2 joined by the move
};

/// Classifies the move (from -> to) applied to `pre`. The new cluster minus the
/// moved particle splits into components; two or more of volume >= 2 means coalescence.
inline ExitClass classify_exit_move(const Configuration& pre, int from, int to) {
    Configuration post = pre;
    post.apply_exchange(from, to);
    ClusterProbe probe(post.sites());
    ExitClass out;
    out.volume = probe.volume(post, to);
    std::set<int> rest(probe.sites().begin(), probe.sites().end());
    rest.erase(to);
    std::set<int> seen;
    for (int s : rest) {
        if (seen.count(s)) continue;
        int size = 0;
        std::vector<int> stack{s};
        seen.insert(s);
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            ++size;
            for (int n : post.neighbours(v))
                if (rest.count(n) && seen.insert(n).second) stack.push_back(n);
        }
        if (size >= 2) ++out.real_clusters;
    }
    out.mode = out.real_clusters >= 2 ? ExitMode::Coalescence : ExitMode::Growth;
    return out;
}

/// Replays the log to the first move that leaves R and classifies it.
inline ExitClass classify_exit(const TrajectoryLog& log, const DerivedParams& dp) {
    Configuration c = log.initial;
    if (max_component_volume(c) > dp.max_subcritical_volume)
        throw ClassificationError("trajectory starts outside R");
    ClusterProbe probe(c.sites());
    for (const auto& r : log.records) {
        c.apply_exchange(r.from, r.to);
        c.set_time(r.t);
        if (probe.volume(c, r.to, dp.max_subcritical_volume + 1) > dp.max_subcritical_volume) {
            Configuration pre = c;
            pre.apply_exchange(r.to, r.from);
            return classify_exit_move(pre, r.from, r.to);
        }
    }
    throw ClassificationError("trajectory does not exit R");
}

// --- quasi-square episodes ------------------------------------------------------------

struct Episode {
    Rectangle rect;
    QuasiSquare dims;
    double start = 0;
    double end = kInf;  // kInf: still present when the log ends
};

/// Tracks time intervals during which each quasi-square cluster exists.
class EpisodeTracker {
public:
    explicit EpisodeTracker(const Configuration& initial) : probe_(initial.sites()) {
        for (const auto& cl : clusterise(initial).clusters)
            if (cl.quasi_square) open(*cl.rc, *cl.quasi_square, initial.time());
    }

    /// Call with the pre-move configuration.
    void before(const Configuration& pre, int from, int to) {
        pending_.clear();
        collect(pre, from, pending_);
        for (int n : pre.neighbours(to))
            if (n != from) collect(pre, n, pending_);
    }

    /// Call with the post-move configuration and the event time.
    void after(const Configuration& post, int from, int to, double t) {
        std::vector<std::pair<Rectangle, QuasiSquare>> now;
        collect(post, to, now);
        for (int n : post.neighbours(from)) collect(post, n, now);
        for (const auto& [r, q] : pending_)
            if (!contains(now, r)) close(r, t);
        for (const auto& [r, q] : now)
            if (!contains(pending_, r)) open(r, q, t);
    }

    const std::vector<Episode>& episodes() const { return episodes_; }

private:
    static bool contains(const std::vector<std::pair<Rectangle, QuasiSquare>>& v, const Rectangle& r) {
        for (const auto& e : v)
            if (e.first == r) return true;
        return false;
    }

    void collect(const Configuration& c, int site, std::vector<std::pair<Rectangle, QuasiSquare>>& out) {
        if (!c.occupied(site)) return;
        const int v = probe_.volume(c, site);
        if (v < 2) return;
        Cluster cl = describe_cluster(c, probe_.sites());
        if (!cl.quasi_square || contains(out, *cl.rc)) return;
        out.emplace_back(*cl.rc, *cl.quasi_square);
    }

    void open(const Rectangle& r, QuasiSquare q, double t) {
        if (open_.count(r)) return;
        open_[r] = episodes_.size();
        episodes_.push_back({r, q, t, kInf});
    }

    void close(const Rectangle& r, double t) {
        auto it = open_.find(r);
        if (it == open_.end()) return;
        episodes_[it->second].end = t;
        open_.erase(it);
    }

    ClusterProbe probe_;
    std::map<Rectangle, std::size_t> open_;
    std::vector<Episode> episodes_;
    std::vector<std::pair<Rectangle, QuasiSquare>> pending_;
};

// --- tube of typical trajectories -----------------------------------------------------

struct TubeOptions {
    std::vector<double> deltas;  // empty: the params delta
    int target_side = 0;         // 0: max(ell_c + 2, floor(sqrt(lambda/8)))
    int centre_volume = 0;       // 0: the exit volume ell_c (ell_c - 1) + 3
};

struct TubeStage {
    QuasiSquare dims;
    double time = 0;  // tau_last (subcritical) or tau_first (supercritical)
};

struct TubeReport {
    bool exited = false;
    bool aborted = false;  // wrap ambiguity in the centring cluster
    std::string note;
    double tau_exit = kInf;
    int exit_from = -1, exit_to = -1;
    ExitClass exit;
    Site centre{-1, -1};
    int box_side = 0;
    std::vector<TubeStage> subcritical;
    std::vector<TubeStage> supercritical;
    std::vector<std::pair<double, bool>> t_delta;
    std::vector<std::pair<double, std::string>> missing;  // first failing stage per delta
    std::vector<std::pair<double, bool>> subcritical_pass;
};

namespace detail {

inline bool rect_in_box(const Rectangle& r, Site c, int side, int L) {
    const int lo = -(side - 1) / 2, hi = side - 1 + lo;
    auto fits = [&](int a0, int len, int centre) {
        int off = wrap(a0 - centre, L);
        if (off > L / 2) off -= L;
        return off >= lo && off + len - 1 <= hi;
    };
    return fits(r.x0, r.width(), c.x) && fits(r.y0, r.height(), c.y);
}

inline std::string stage_label(QuasiSquare q, bool sub) {
    return std::string(sub ? "tau_last(" : "tau(") + std::to_string(q.l1) + "," + std::to_string(q.l2) + ")";
}

}  // namespace detail

inline int default_target_side(const DerivedParams& dp) {
    const int paper = static_cast<int>(std::floor(std::sqrt(dp.lambda_beta / 8)));
    return std::max(dp.ell_c + 2, paper);
}

/// Checks the chain of inequalities for one delta; returns the first failing stage or "".
inline std::string check_tube(const TubeReport& t, const ModelParams& p, const DerivedParams& dp, double delta,
                              bool subcritical_only) {
    const double beta = p.beta;
    double prev = t.tau_exit - std::exp((dp.theta + delta) * beta);
    std::string prev_label = "window start";
    for (const auto& s : t.subcritical) {
        if (!(prev < s.time)) return detail::stage_label(s.dims, true) + (s.time == -kInf ? " missing" : " out of order");
        prev = s.time;
        prev_label = detail::stage_label(s.dims, true);
    }
    if (!(prev < t.tau_exit)) return "tau_exit not after " + prev_label;
    if (subcritical_only) return "";
    prev = t.tau_exit;
    bool first = true;
    for (const auto& s : t.supercritical) {
        const bool ok = first ? prev <= s.time : prev < s.time;
        if (!ok || s.time == kInf) return detail::stage_label(s.dims, false) + (s.time == kInf ? " missing" : " out of order");
        prev = s.time;
        first = false;
    }
    if (!(prev < t.tau_exit + std::exp((2 * p.Delta - p.U + delta) * beta))) return "growth window exceeded";
    return "";
}

/// Replays the trajectory: exit from R, its classification, Lambda_{R^c} and the tube times.
inline TubeReport detect_tube(const TrajectoryLog& log, const ModelParams& p, const TubeOptions& opt = {}) {
    const DerivedParams dp = derive(p);
    TubeReport t;
    const int exit_volume = dp.max_subcritical_volume + 1;
    const int centre_volume = opt.centre_volume > 0 ? opt.centre_volume : exit_volume;
    Configuration c = log.initial;
    const int L = c.L();
    if (max_component_volume(c) >= exit_volume) {
        t.note = "initial configuration outside R";
        return t;
    }
    EpisodeTracker tracker(c);
    ClusterProbe probe(c.sites());
    bool centred = false;
    for (const auto& r : log.records) {
        tracker.before(c, r.from, r.to);
        c.apply_exchange(r.from, r.to);
        c.set_time(r.t);
        tracker.after(c, r.from, r.to, r.t);
        if (t.exited && centred) continue;
        const int v = probe.volume(c, r.to, std::max(exit_volume, centre_volume));
        if (!t.exited && v >= exit_volume) {
            t.exited = true;
            t.tau_exit = r.t;
            t.exit_from = r.from;
            t.exit_to = r.to;
            Configuration pre = c;
            pre.apply_exchange(r.to, r.from);
            t.exit = classify_exit_move(pre, r.from, r.to);
        }
        if (!centred && v >= centre_volume) {
            centred = true;
            const Cluster cl = describe_cluster(c, probe.sites());
            if (!cl.rc) {
                t.aborted = true;
                t.note = "centring cluster wraps the torus";
            } else {
                t.centre = {wrap(static_cast<int>(std::lround(cl.cx)), L), wrap(static_cast<int>(std::lround(cl.cy)), L)};
            }
        }
    }
    if (!t.exited) {
        t.note = "trajectory does not exit R";
        return t;
    }
    if (!centred) {
        t.aborted = true;
        t.note = "no cluster reached the centring volume";
    }
    const double area = std::min(std::exp(dp.theta * p.beta), static_cast<double>(L) * L / 4);
    t.box_side = std::max(1, static_cast<int>(std::floor(std::sqrt(area) + 1e-9)));
    const auto& eps = tracker.episodes();
    auto in_box = [&](const Episode& e) { return !t.aborted && detail::rect_in_box(e.rect, t.centre, t.box_side, L); };
    for (QuasiSquare q{2, 2}; q.l1 < dp.ell_c; q = next_quasi_square(q)) {
        double last = -kInf;
        for (const auto& e : eps)
            if (e.dims == q && e.start <= t.tau_exit && in_box(e)) last = std::max(last, std::min(e.end, t.tau_exit));
        t.subcritical.push_back({q, last});
    }
    const int side = opt.target_side > 0 ? opt.target_side : default_target_side(dp);
    for (QuasiSquare q{dp.ell_c, dp.ell_c}; q.l1 <= side && !(q.l1 == side && q.l2 > side);
         q = next_quasi_square(q)) {
        double first = kInf;
        for (const auto& e : eps)
            if (e.dims == q && e.end > t.tau_exit && in_box(e)) first = std::min(first, std::max(e.start, t.tau_exit));
        t.supercritical.push_back({q, first});
    }
    std::vector<double> deltas = opt.deltas.empty() ? std::vector<double>{dp.delta} : opt.deltas;
    for (double d : deltas) {
        const std::string miss = t.aborted ? "analysis aborted" : check_tube(t, p, dp, d, false);
        t.t_delta.emplace_back(d, miss.empty());
        t.missing.emplace_back(d, miss);
        t.subcritical_pass.emplace_back(d, !t.aborted && check_tube(t, p, dp, d, true).empty());
    }
    return t;
}

// --- clouds and histories ----------------------------------------------------------------

struct HistoryOptions {
    std::optional<double> epoch_period;  // default e^{(Delta - alpha) beta}
    std::optional<double> radius;        // overrides r_j
    int window = 10;
    int max_epochs = 100000;
};

enum class HistoryOutcome { Alive, Died, Merged, Success };

inline const char* to_string(HistoryOutcome o) {
    switch (o) {
        case HistoryOutcome::Alive: return "alive";
        case HistoryOutcome::Died: return "died";
        case HistoryOutcome::Merged: return "merged";
        case HistoryOutcome::Success: return "success";
    }
    return "?";
}

struct CloudView {
    Rectangle rect;
    int history = -1;
    std::optional<QuasiSquare> smallest;
    int tracked = -1;  // longest-asleep particle of the smallest quasi-square
    bool success = false;
};

struct EpochView {
    int index = 0;
    double time = 0;
    double radius = 0;
    bool skipped = false;
    std::vector<CloudView> clouds;
};

struct HistoryEvent {
    enum Kind { Birth, Death, Success } kind = Birth;
    int history = -1;
    int epoch = 0;
    double time = 0;
};

struct HistoryCensus {
    int id = -1;
    int birth_epoch = 0;
    double birth_time = 0;
    int end_epoch = -1;
    double end_time = kInf;
    HistoryOutcome outcome = HistoryOutcome::Alive;
    std::vector<QuasiSquare> path;  // smallest quasi-square per epoch
};

struct HistoryDecomposition {
    std::vector<EpochView> epochs;
    std::vector<HistoryEvent> events;
    std::vector<HistoryCensus> histories;
    int skipped_epochs = 0;

    int count(HistoryOutcome o) const {
        return static_cast<int>(std::count_if(histories.begin(), histories.end(),
                                              [&](const HistoryCensus& h) { return h.outcome == o; }));
    }
};

namespace detail {

inline bool rect_holds(const Rectangle& r, Site s, int L) {
    return wrap(s.x - r.x0, L) < r.width() && wrap(s.y - r.y0, L) < r.height();
}

class HistoryBuilder {
public:
    HistoryBuilder(const ModelParams& p, const HistoryOptions& opt, int L)
        : p_(p), dp_(derive(p)), opt_(opt), L_(L) {}

    void epoch(const Configuration& c, const SleepState& sleep, const FreenessTracker& ft, int j, double t,
               HistoryDecomposition& out) {
        EpochView view;
        view.index = j;
        view.time = t;
        view.radius = opt_.radius ? *opt_.radius : cloud_schedule(j, dp_.theta, dp_.kappa, p_.beta);
        const int R = static_cast<int>(std::floor(view.radius));
        std::vector<Rectangle> seeds;
        for (auto [id, st] : ft.statuses())
            if (st == Freeness::Clusterised && sleep.sleeping(id, t)) {
                const Site s = c.site(c.locate(id));
                seeds.push_back({s.x - R, s.y - R, s.x + R, s.y + R});
            }
        CloudSet clouds;
        if (!seeds.empty()) {
            try {
                for (auto& r : seeds)
                    if (too_wide(r.width(), L_)) throw WrapAmbiguity("cloud seed wider than half the torus");
                clouds = aggregate_clouds(seeds, view.radius, L_);
            } catch (const WrapAmbiguity&) {
                view.skipped = true;
                ++out.skipped_epochs;
                out.epochs.push_back(std::move(view));
                return;
            }
        }
        const Clusterisation cl = clusterise(c);
        for (const auto& rect : clouds.rectangles) {
            CloudView cv;
            cv.rect = rect;
            double best_sleep = kInf;
            for (const auto& k : cl.clusters) {
                if (!std::any_of(k.sites.begin(), k.sites.end(),
                                 [&](int s) { return rect_holds(rect, c.site(s), L_); }))
                    continue;
                if (k.volume > dp_.max_subcritical_volume || (k.quasi_square && k.quasi_square->l1 >= dp_.ell_c))
                    cv.success = true;
                const std::optional<QuasiSquare> held =
                    k.quasi_square && k.quasi_square->l1 >= 2 ? k.quasi_square : inscribed(c, k);
                if (!held) continue;
                int rep = -1;
                double rep_time = kInf;
                for (int s : k.sites) {
                    const int id = c.id_at(s);
                    if (!sleep.sleeping(id, t)) continue;
                    const double lf = sleep.last_free_time(id);
                    if (rep < 0 || lf < rep_time || (lf == rep_time && id < rep)) {
                        rep = id;
                        rep_time = lf;
                    }
                }
                if (rep < 0) continue;
                const auto q = *held;
                const bool smaller = !cv.smallest || q.l1 * q.l2 < cv.smallest->l1 * cv.smallest->l2 ||
                                     (q.l1 * q.l2 == cv.smallest->l1 * cv.smallest->l2 && q < *cv.smallest);
                if (smaller || (q == *cv.smallest && rep_time < best_sleep)) {
                    cv.smallest = q;
                    cv.tracked = rep;
                    best_sleep = rep_time;
                }
            }
            view.clouds.push_back(cv);
        }
        link(c, sleep, j, t, view, out);
        out.epochs.push_back(std::move(view));
    }

private:
    // Largest fully occupied quasi-square with l1 >= 2 inside a cluster that is not one itself.
    std::optional<QuasiSquare> inscribed(const Configuration& c, const Cluster& k) const {
        std::optional<QuasiSquare> best;
        const int L = c.L();
        const int cap = static_cast<int>(std::sqrt(static_cast<double>(k.volume))) + 1;
        auto filled = [&](Site o, int w, int h) {
            for (int dy = 0; dy < h; ++dy)
                for (int dx = 0; dx < w; ++dx)
                    if (!c.occupied(c.index({wrap(o.x + dx, L), wrap(o.y + dy, L)}))) return false;
            return true;
        };
        for (int s : k.sites) {
            const Site o = c.site(s);
            for (int l1 = 2; l1 <= cap; ++l1)
                for (int l2 : {l1, l1 + 1}) {
                    if (best && l1 * l2 <= best->l1 * best->l2) continue;
                    if (l1 > L / 2 || l2 > L / 2) continue;
                    if (filled(o, l1, l2) || filled(o, l2, l1)) best = QuasiSquare{l1, l2};
                }
        }
        return best;
    }

    void link(const Configuration& c, const SleepState& sleep, int j, double t, EpochView& view,
              HistoryDecomposition& out) {
        auto cloud_of = [&](int id) {
            const int s = c.locate(id);
            if (s < 0) return -1;
            for (std::size_t k = 0; k < view.clouds.size(); ++k)
                if (rect_holds(view.clouds[k].rect, c.site(s), L_)) return static_cast<int>(k);
            return -1;
        };
        auto end = [&](int h, HistoryOutcome o) {
            auto& rec = out.histories[h];
            rec.outcome = o;
            rec.end_epoch = j;
            rec.end_time = t;
            out.events.push_back({o == HistoryOutcome::Success ? HistoryEvent::Success : HistoryEvent::Death, h, j, t});
        };
        std::map<int, int> next_live;
        for (const auto& [h, tracked] : live_) {
            const bool done = out.histories[h].outcome == HistoryOutcome::Success;
            const int k = sleep.tracks(tracked) && sleep.sleeping(tracked, t) ? cloud_of(tracked) : -1;
            if (k < 0) {
                if (!done) end(h, HistoryOutcome::Died);
                continue;
            }
            CloudView& cv = view.clouds[k];
            if (cv.history >= 0) {
                if (!done) end(h, HistoryOutcome::Merged);
                continue;
            }
            cv.history = h;
            if (done) {
                if (cv.tracked >= 0) next_live[h] = cv.tracked;
                continue;
            }
            if (!cv.smallest && !cv.success) {
                end(h, HistoryOutcome::Died);
                continue;
            }
            if (cv.smallest) out.histories[h].path.push_back(*cv.smallest);
            if (cv.success) end(h, HistoryOutcome::Success);
            next_live[h] = cv.tracked >= 0 ? cv.tracked : tracked;
        }
        for (auto& cv : view.clouds) {
            if (cv.history >= 0 || !cv.smallest) continue;
            const int h = static_cast<int>(out.histories.size());
            HistoryCensus rec;
            rec.id = h;
            rec.birth_epoch = j;
            rec.birth_time = t;
            rec.path.push_back(*cv.smallest);
            out.histories.push_back(rec);
            out.events.push_back({HistoryEvent::Birth, h, j, t});
            cv.history = h;
            if (cv.success) end(h, HistoryOutcome::Success);
            next_live[h] = cv.tracked;
        }
        live_ = std::move(next_live);
    }

    ModelParams p_;
    DerivedParams dp_;
    HistoryOptions opt_;
    int L_;
    std::map<int, int> live_;  // history -> tracked particle id
};

inline void apply_changes(SleepState& sleep, const std::vector<StatusChange>& changes, double t) {
    for (const auto& ch : changes) {
        if (!sleep.tracks(ch.id)) sleep.add(ch.id, t);
        if (ch.before == Freeness::Free && ch.after != Freeness::Free) sleep.observe(ch.id, true, t);
        sleep.observe(ch.id, ch.after == Freeness::Free, t);
    }
}

}  // namespace detail

/// Offline cloud/history reconstruction over fixed analysis epochs.
inline HistoryDecomposition history_decomposition(const TrajectoryLog& log, const ModelParams& p,
                                                  const HistoryOptions& opt = {}) {
    const DerivedParams dp = derive(p);
    HistoryDecomposition out;
    Configuration c = log.initial;
    const double t0 = c.time();
    const double period = opt.epoch_period ? *opt.epoch_period : std::exp((p.Delta - dp.alpha) * p.beta);
    if (!(period > 0)) throw std::invalid_argument("epoch period must be > 0");
    FreenessTracker ft(opt.window);
    ft.sweep(c);
    SleepState sleep(std::exp(dp.D * p.beta));
    {
        const Clusterisation cl = clusterise(c);
        for (auto [id, s] : c.particles()) {
            const int k = cl.cluster_of[s];
            const bool asleep = k >= 0 && cl.clusters[k].quasi_square && cl.clusters[k].quasi_square->l1 >= 2;
            sleep.add(id, t0, asleep);
            sleep.observe(id, ft.status(id) == Freeness::Free, t0);
        }
    }
    detail::HistoryBuilder builder(p, opt, c.L());
    const double t_end = std::max(log.end_time, log.records.empty() ? t0 : log.records.back().t);
    int j = 0;
    auto run_epochs = [&](double before) {
        while (j < opt.max_epochs) {
            const double te = t0 + j * period;
            if (!(te < before) || te > t_end) return;
            if (j > 0) detail::apply_changes(sleep, ft.sweep(c), te);
            builder.epoch(c, sleep, ft, j, te, out);
            ++j;
        }
    };
    for (const auto& r : log.records) {
        run_epochs(r.t);
        c.apply_exchange(r.from, r.to);
        c.set_time(r.t);
        detail::apply_changes(sleep, ft.after_move(c, r.from, r.to), r.t);
    }
    run_epochs(std::nextafter(t_end, kInf));
    return out;
}

// --- parameters carried in log headers ------------------------------------------------

inline void put_params(std::map<std::string, std::string>& h, const ModelParams& p) {
    h["U"] = format_double(p.U);
    h["Delta"] = format_double(p.Delta);
    h["beta"] = format_double(p.beta);
    h["Theta"] = format_double(p.Theta);
    auto opt = [&](const char* k, const std::optional<double>& v) {
        if (v) h[k] = format_double(*v);
    };
    opt("alpha", p.alpha);
    opt("d", p.d);
    opt("kappa", p.kappa);
    opt("delta", p.delta);
    opt("C_star", p.C_star);
    if (p.lambda_choice == LambdaChoice::Constant) {
        h["lambda"] = "constant";
        h["lambda_constant"] = format_double(p.lambda_constant);
    }
}

inline ModelParams params_from_header(const std::map<std::string, std::string>& h) {
    std::string text;
    for (const auto& [k, v] : h) text += k + " = " + v + "\n";
    KeyValueFile kv = KeyValueFile::parse_string(text);
    if (!kv.has("U") || !kv.has("Delta") || !kv.has("beta"))
        throw ParseError("log header lacks model parameters (U, Delta, beta)", 0);
    return model_params_from(kv);
}

// --- experiment plans and records ---------------------------------------------------

struct ExperimentPlan {
    ModelParams params;  // beta is taken from the grid
    std::vector<double> betas;
    int replicas = 50;
    int target_exits = 0;  // > 0: add replicas in batches until this many exits or max_replicas
    int max_replicas = 0;
    std::uint64_t seed = 1;
    std::optional<double> horizon;           // absolute horizon for every beta
    std::optional<double> horizon_exponent;  // horizon = exp((Gamma - Theta_eff + h) beta); default 3 delta
    std::int64_t event_cap = 500'000'000;
    double sample_period = 1.0;
    bool follow_up = true;  // keep simulating after the exit for the supercritical tube
    SamplerSchedule sampler;
    std::vector<double> deltas;
    int target_side = 0;
    int centre_volume = 0;
    int threads = 0;
    std::string out_dir;
    bool save_logs = false;
};

inline ExperimentPlan plan_from(const KeyValueFile& kv) {
    ExperimentPlan plan;
    plan.params = model_params_from(kv);
    plan.betas = kv.get_list("betas");
    plan.replicas = kv.get_int("replicas", 50);
    plan.target_exits = kv.get_int("target_exits", 0);
    plan.max_replicas = kv.get_int("max_replicas", 0);
    plan.seed = static_cast<std::uint64_t>(kv.get_double("seed", 1));
    plan.horizon = kv.get_optional("horizon");
    plan.horizon_exponent = kv.get_optional("horizon_exponent");
    plan.event_cap = static_cast<std::int64_t>(kv.get_double("event_cap", 5e8));
    plan.sample_period = kv.get_double("sample_period", 1.0);
    plan.follow_up = kv.get_int("follow_up", 1) != 0;
    plan.sampler.burn_in = static_cast<std::uint64_t>(kv.get_double("burn_in", 0));
    plan.sampler.thinning = static_cast<std::uint64_t>(kv.get_double("thinning", 0));
    if (kv.has("deltas")) plan.deltas = kv.get_list("deltas");
    plan.target_side = kv.get_int("target_side", 0);
    plan.centre_volume = kv.get_int("centre_volume", 0);
    plan.threads = kv.get_int("threads", 0);
    plan.out_dir = kv.has("out") ? kv.get_string("out") : "";
    plan.save_logs = kv.get_int("save_logs", 0) != 0;
    return plan;
}

inline void validate_plan(const ExperimentPlan& plan) {
    if (plan.betas.empty()) throw ParamError("plan needs at least one beta");
    if (plan.replicas < 1) throw ParamError("replicas must be >= 1");
    if (plan.target_exits < 0 || plan.max_replicas < 0) throw ParamError("target_exits and max_replicas must be >= 0");
    if (plan.event_cap < 1) throw ParamError("event_cap must be >= 1");
    for (double b : plan.betas) {
        ModelParams p = plan.params;
        p.beta = b;
        validate(p, true);
    }
}

struct NucleationRecord {
    int beta_index = 0;
    double beta = 0;
    int replica = 0;
    std::uint64_t seed = 0;
    int L = 0;
    double Theta_eff = 0;
    int N = 0;
    int ell_c = 0;
    double tau_exit = kInf;
    ExitMode mode = ExitMode::Truncated;
    int exit_volume = 0;
    bool volume_anomaly = false;  // growth exit whose cluster is not exactly ell_c(ell_c-1)+3
    Site centre{-1, -1};
    std::int64_t events = 0;
    double end_time = 0;
    std::string stop;
    std::vector<TubeStage> tube;
    bool tube_aborted = false;
    std::vector<std::pair<double, bool>> t_delta;
    std::vector<std::pair<double, bool>> subcritical_pass;
    double Gamma = 0, theta = 0, two_delta_minus_u = 0;
    int samples = 0;
    int sample_violations = 0;  // sampled times outside R before the exit (must stay 0)
};

inline double default_horizon(const ExperimentPlan& plan, double beta, double Theta_eff) {
    if (plan.horizon) return *plan.horizon;
    ModelParams p = plan.params;
    p.beta = beta;
    const DerivedParams dp = derive(p);
    const double h = plan.horizon_exponent ? *plan.horizon_exponent : 3 * dp.delta;
    return std::exp((dp.Gamma - Theta_eff + h) * beta);
}

/// One replica: X(0) from mu_R, dynamics to the exit from R (or the horizon),
/// optional follow-up, then the trajectory analysis.
inline NucleationRecord run_replica(const ExperimentPlan& plan, int beta_index, int replica,
                                    TrajectoryLog* keep_log = nullptr) {
    ModelParams p = plan.params;
    p.beta = plan.betas.at(beta_index);
    const DerivedParams dp = derive(p);
    NucleationRecord rec;
    rec.beta_index = beta_index;
    rec.beta = p.beta;
    rec.replica = replica;
    rec.seed = stream_seed(plan.seed, replica_stream(beta_index, replica));
    const LatticeSide side = lattice_side(p.Theta, p.beta, 2 * dp.ell_c);
    rec.L = side.L;
    rec.Theta_eff = side.Theta_eff;
    rec.ell_c = dp.ell_c;
    rec.Gamma = dp.Gamma;
    rec.theta = dp.theta;
    rec.two_delta_minus_u = 2 * p.Delta - p.U;
    Rng rng(rec.seed);
    Configuration x0 = sample_muR(p, side.L, rng, plan.sampler);
    if (!in_R(x0, dp)) throw std::logic_error("mu_R sampler produced a configuration outside R");
    rec.N = x0.N();

    const double horizon = default_horizon(plan, p.beta, side.Theta_eff);
    Simulator sim(std::move(x0), p.U, p.beta);
    StopRule stop = StopRule::exit_from_R(dp.max_subcritical_volume, horizon);
    stop.event_cap = plan.event_cap;
    Observers obs;
    if (plan.sample_period > 0) {
        obs.sample_period = plan.sample_period;
        obs.on_sample = [&](const Simulator& s, double) {
            ++rec.samples;
            if (!in_R(s.config(), dp)) ++rec.sample_violations;
        };
    }
    TrajectoryLog log = rec.N > 0 ? run_until(sim, stop, rng, obs) : TrajectoryLog{};
    if (rec.N == 0) {
        log.initial = sim.config();
        log.reason = StopReason::Frozen;
        log.end_time = 0;
    }
    rec.events = static_cast<std::int64_t>(log.records.size());
    rec.stop = to_string(log.reason);
    const bool exited = log.reason == StopReason::ClusterVolume;
    if (exited && plan.follow_up) {
        StopRule more = StopRule::until(sim.config().time() + std::exp((2 * p.Delta - p.U + dp.delta) * p.beta));
        more.event_cap = plan.event_cap;
        if (sim.total_rate() > 0) {
            TrajectoryLog tail = run_until(sim, more, rng);
            log.records.insert(log.records.end(), tail.records.begin(), tail.records.end());
            log.end_time = tail.end_time;
        }
    }
    rec.end_time = log.end_time;
    if (exited) {
        TubeOptions topt;
        topt.deltas = plan.deltas;
        topt.target_side = plan.target_side;
        topt.centre_volume = plan.centre_volume;
        const TubeReport tube = detect_tube(log, p, topt);
        rec.tau_exit = tube.tau_exit;
        rec.mode = tube.exit.mode;
        rec.exit_volume = tube.exit.volume;
        rec.volume_anomaly = rec.mode == ExitMode::Growth && tube.exit.volume != dp.max_subcritical_volume + 1;
        rec.centre = tube.centre;
        rec.tube_aborted = tube.aborted;
        rec.tube = tube.subcritical;
        rec.tube.insert(rec.tube.end(), tube.supercritical.begin(), tube.supercritical.end());
        rec.t_delta = tube.t_delta;
        rec.subcritical_pass = tube.subcritical_pass;
    }
    put_params(log.header, p);
    log.header["seed"] = std::to_string(rec.seed);
    if (keep_log) *keep_log = std::move(log);
    return rec;
}

/// Runs every (beta, replica) pair of the plan on a pool of threads.
/// `on_log` (optional) receives each trajectory; it is called under a lock.
inline std::vector<NucleationRecord> run_nucleation(
    const ExperimentPlan& plan,
    const std::function<void(const NucleationRecord&, const TrajectoryLog&)>& on_log = {}) {
    validate_plan(plan);
    const int threads = plan.threads > 0 ? plan.threads : std::max(1u, std::thread::hardware_concurrency());
    std::vector<NucleationRecord> all;
    std::mutex mu;
    auto run_batch = [&](const std::vector<std::pair<int, int>>& jobs) {
        std::vector<NucleationRecord> out(jobs.size());
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        auto worker = [&] {
            for (;;) {
                const std::size_t k = next++;
                if (k >= jobs.size()) return;
                try {
                    TrajectoryLog log;
                    out[k] = run_replica(plan, jobs[k].first, jobs[k].second, on_log ? &log : nullptr);
                    if (on_log) {
                        std::lock_guard<std::mutex> lock(mu);
                        on_log(out[k], log);
                    }
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int i = 0; i < std::min<int>(threads, static_cast<int>(jobs.size())); ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        if (error) std::rethrow_exception(error);
        return out;
    };
    for (int b = 0; b < static_cast<int>(plan.betas.size()); ++b) {
        int done = 0, exits = 0;
        const int cap = plan.target_exits > 0 ? std::max(plan.max_replicas, plan.replicas) : plan.replicas;
        int batch = plan.replicas;
        while (done < cap) {
            std::vector<std::pair<int, int>> jobs;
            for (int r = done; r < std::min(cap, done + batch); ++r) jobs.emplace_back(b, r);
            auto part = run_batch(jobs);
            for (const auto& rec : part) exits += rec.mode != ExitMode::Truncated;
            done += static_cast<int>(jobs.size());
            all.insert(all.end(), part.begin(), part.end());
            if (plan.target_exits <= 0 || exits >= plan.target_exits) break;
            // Size the next batch from the observed exit fraction.
            const double frac = std::max(0.05, static_cast<double>(exits) / done);
            batch = std::max(threads, static_cast<int>(std::ceil((plan.target_exits - exits) / frac)));
        }
    }
    return all;
}

// --- record files ----------------------------------------------------------------------

inline const std::string& records_header() {
    static const std::string h =
        "beta_index,beta,replica,seed,L,Theta_eff,N,ell_c,tau_exit,exit_mode,exit_volume,volume_anomaly,"
        "centre_x,centre_y,events,end_time,stop,tube,tube_aborted,subcritical_pass,t_delta,Gamma,theta,"
        "two_delta_minus_u,samples,sample_violations";
    return h;
}

namespace detail {

inline std::string fmt_time(double t) {
    if (t == kInf) return "inf";
    if (t == -kInf) return "-inf";
    return format_double(t);
}

inline double parse_time(const std::string& s, int line) {
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    return parse_double(s, line, "time");
}

inline std::string fmt_flags(const std::vector<std::pair<double, bool>>& v) {
    std::string out;
    for (const auto& [d, ok] : v) {
        if (!out.empty()) out += ';';
        out += format_double(d) + ":" + (ok ? "1" : "0");
    }
    return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<std::pair<double, bool>> parse_flags(const std::string& s, int line) {
    std::vector<std::pair<double, bool>> out;
    if (s.empty()) return out;
    for (const auto& item : split(s, ';')) {
        const auto kv = split(item, ':');
        if (kv.size() != 2) throw ParseError("bad flag entry '" + item + "'", line);
        out.emplace_back(parse_double(kv[0], line, "delta"), kv[1] == "1");
    }
    return out;
}

}  // namespace detail

inline std::string write_records_csv(const std::vector<NucleationRecord>& recs) {
    std::ostringstream os;
    os << records_header() << '\n';
    for (const auto& r : recs) {
        std::string tube;
        for (const auto& s : r.tube) {
            if (!tube.empty()) tube += ';';
            tube += to_string(s.dims) + ":" + detail::fmt_time(s.time);
        }
        os << r.beta_index << ',' << format_double(r.beta) << ',' << r.replica << ',' << r.seed << ',' << r.L << ','
           << format_double(r.Theta_eff) << ',' << r.N << ',' << r.ell_c << ',' << detail::fmt_time(r.tau_exit) << ','
           << to_string(r.mode) << ',' << r.exit_volume << ',' << (r.volume_anomaly ? 1 : 0) << ',' << r.centre.x
           << ',' << r.centre.y << ',' << r.events << ',' << format_double(r.end_time) << ',' << r.stop << ','
           << tube << ',' << (r.tube_aborted ? 1 : 0) << ',' << detail::fmt_flags(r.subcritical_pass) << ','
           << detail::fmt_flags(r.t_delta) << ',' << format_double(r.Gamma) << ',' << format_double(r.theta) << ','
           << format_double(r.two_delta_minus_u) << ',' << r.samples << ',' << r.sample_violations << '\n';
    }
    return os.str();
}

inline std::vector<NucleationRecord> read_records_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line) || detail::trim(line) != records_header())
        throw ParseError("missing or unexpected records header", 1);
    ++lineno;
    std::vector<NucleationRecord> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 26) throw ParseError("expected 26 fields, got " + std::to_string(f.size()), lineno);
        NucleationRecord r;
        auto num = [&](int i) { return detail::parse_double(f[i], lineno, "field " + std::to_string(i)); };
        r.beta_index = static_cast<int>(num(0));
        r.beta = num(1);
        r.replica = static_cast<int>(num(2));
        r.seed = std::stoull(f[3]);
        r.L = static_cast<int>(num(4));
        r.Theta_eff = num(5);
        r.N = static_cast<int>(num(6));
        r.ell_c = static_cast<int>(num(7));
        r.tau_exit = detail::parse_time(f[8], lineno);
        r.mode = exit_mode_from(f[9]);
        r.exit_volume = static_cast<int>(num(10));
        r.volume_anomaly = f[11] == "1";
        r.centre = {static_cast<int>(num(12)), static_cast<int>(num(13))};
        r.events = static_cast<std::int64_t>(num(14));
        r.end_time = num(15);
        r.stop = f[16];
        if (!f[17].empty()) {
            for (const auto& item : detail::split(f[17], ';')) {
                const auto kv = detail::split(item, ':');
                const auto dims = detail::split(kv.at(0), 'x');
                if (kv.size() != 2 || dims.size() != 2) throw ParseError("bad tube entry '" + item + "'", lineno);
                r.tube.push_back({{std::stoi(dims[0]), std::stoi(dims[1])}, detail::parse_time(kv[1], lineno)});
            }
        }
        r.tube_aborted = f[18] == "1";
        r.subcritical_pass = detail::parse_flags(f[19], lineno);
        r.t_delta = detail::parse_flags(f[20], lineno);
        r.Gamma = num(21);
        r.theta = num(22);
        r.two_delta_minus_u = num(23);
        r.samples = static_cast<int>(num(24));
        r.sample_violations = static_cast<int>(num(25));
        out.push_back(std::move(r));
    }
    return out;
}

/// Re-evaluates the tube inequalities of a stored record for another delta.
inline std::pair<bool, bool> evaluate_tube(const NucleationRecord& r, int ell_c, double delta) {
    if (r.mode != ExitMode::Growth || r.tube_aborted) return {false, false};
    double prev = r.tau_exit - std::exp((r.theta + delta) * r.beta);
    bool sub = true;
    std::size_t i = 0;
    for (; i < r.tube.size() && r.tube[i].dims.l1 < ell_c; ++i) {
        if (!(prev < r.tube[i].time)) sub = false;
        prev = r.tube[i].time;
    }
    if (!(prev < r.tau_exit)) sub = false;
    bool full = sub;
    prev = r.tau_exit;
    for (std::size_t k = i; k < r.tube.size(); ++k) {
        const double t = r.tube[k].time;
        if (t == kInf || !(k == i ? prev <= t : prev < t)) full = false;
        prev = t;
    }
    if (!(prev < r.tau_exit + std::exp((r.two_delta_minus_u + delta) * r.beta))) full = false;
    return {sub, full};
}

// --- scaling report -------------------------------------------------------------------

/// Sample quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct BetaSummary {
    double beta = 0;
    int total = 0;
    int exits = 0;
    int growth = 0;
    int coalescence = 0;
    int truncated = 0;
    double median = std::numeric_limits<double>::quiet_NaN();
    double q25 = std::numeric_limits<double>::quiet_NaN();
    double q75 = std::numeric_limits<double>::quiet_NaN();
    double mean_Theta_eff = 0;
    double coalescence_fraction = std::numeric_limits<double>::quiet_NaN();
    double subcritical_pass_rate = std::numeric_limits<double>::quiet_NaN();
    double tube_pass_rate = std::numeric_limits<double>::quiet_NaN();
    int volume_anomalies = 0;
};

struct ScalingReport {
    std::vector<BetaSummary> per_beta;
    bool fitted = false;
    double slope = 0, intercept = 0;
    double target = 0;  // Gamma - mean Theta_eff over the fitted betas
    bool medians_increase = false;
    bool coalescence_nonincreasing = false;
    bool subcritical_pass_nondecreasing = false;
    double delta = 0;
    std::string note;
};

inline std::pair<double, double> least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

inline ScalingReport scaling_fit(const std::vector<NucleationRecord>& recs, int ell_c, double delta,
                                 int min_per_beta = 20) {
    ScalingReport rep;
    rep.delta = delta;
    std::map<double, std::vector<const NucleationRecord*>> by_beta;
    for (const auto& r : recs) by_beta[r.beta].push_back(&r);
    double gamma_sum = 0;
    int gamma_n = 0;
    for (const auto& [beta, rs] : by_beta) {
        BetaSummary s;
        s.beta = beta;
        s.total = static_cast<int>(rs.size());
        std::vector<double> taus;
        double theta_sum = 0;
        int sub_pass = 0, full_pass = 0;
        for (const auto* r : rs) {
            theta_sum += r->Theta_eff;
            if (r->mode == ExitMode::Truncated) {
                ++s.truncated;
                continue;
            }
            taus.push_back(r->tau_exit);
            gamma_sum += r->Gamma;
            ++gamma_n;
            if (r->mode == ExitMode::Coalescence) {
                ++s.coalescence;
                continue;
            }
            ++s.growth;
            if (r->volume_anomaly) ++s.volume_anomalies;
            const auto [sub, full] = evaluate_tube(*r, ell_c, delta);
            sub_pass += sub;
            full_pass += full;
        }
        s.exits = static_cast<int>(taus.size());
        s.mean_Theta_eff = theta_sum / s.total;
        if (!taus.empty()) {
            s.median = quantile(taus, 0.5);
            s.q25 = quantile(taus, 0.25);
            s.q75 = quantile(taus, 0.75);
            s.coalescence_fraction = static_cast<double>(s.coalescence) / s.exits;
        }
        if (s.growth > 0) {
            s.subcritical_pass_rate = static_cast<double>(sub_pass) / s.growth;
            s.tube_pass_rate = static_cast<double>(full_pass) / s.growth;
        }
        rep.per_beta.push_back(s);
    }
    std::vector<double> xs, ys;
    double theta_sum = 0;
    for (const auto& s : rep.per_beta)
        if (s.exits >= min_per_beta) {
            xs.push_back(s.beta);
            ys.push_back(std::log(s.median));
            theta_sum += s.mean_Theta_eff;
        }
    if (xs.size() >= 2) {
        std::tie(rep.slope, rep.intercept) = least_squares(xs, ys);
        rep.fitted = true;
        rep.target = (gamma_n ? gamma_sum / gamma_n : 0) - theta_sum / static_cast<double>(xs.size());
    } else {
        rep.note = "fit omitted: need at least 2 beta values with " + std::to_string(min_per_beta) + " exits each";
    }
    auto monotone = [&](auto field, bool increasing, bool strict) {
        double prev = increasing ? -kInf : kInf;
        for (const auto& s : rep.per_beta) {
            const double v = field(s);
            if (std::isnan(v)) return false;
            if (increasing ? (strict ? !(v > prev) : !(v >= prev)) : !(v <= prev)) return false;
            prev = v;
        }
        return !rep.per_beta.empty();
    };
    rep.medians_increase = monotone([](const BetaSummary& s) { return s.median; }, true, true);
    rep.coalescence_nonincreasing = monotone([](const BetaSummary& s) { return s.coalescence_fraction; }, false, false);
    rep.subcritical_pass_nondecreasing =
        monotone([](const BetaSummary& s) { return s.subcritical_pass_rate; }, true, false);
    return rep;
}

}  // namespace kawasaki

#endif
