#ifndef KAWASAKI_KMC_HPP
#define KAWASAKI_KMC_HPP

// Continuous-time Kawasaki dynamics with Metropolis rates exp(-beta [dH]_+),
// sampled rejection-free. Every ordered move (occupied x -> empty neighbour y)
// lives in one of four rate classes k = [dH]_+ / U; a class is picked with
// probability count_k e^{-k beta U} / R and a member uniformly inside it.

#include "kawasaki/io.hpp"
#include "kawasaki/lattice.hpp"
#include "kawasaki/rng.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kawasaki {

class FrozenError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Moves are encoded as from_site * 4 + direction.
inline int move_code(int from, int dir) { return from * 4 + dir; }

class EventList {
public:
    EventList() = default;
    explicit EventList(int sites) : pos_(static_cast<std::size_t>(sites) * 4, -1),
                                    bucket_(static_cast<std::size_t>(sites) * 4, -1) {}

    /// Puts `move` into class k, or removes it when k < 0.
    void assign(int move, int k) {
        const int old = bucket_[move];
        if (old == k) return;
        if (old >= 0) {
            auto& b = buckets_[old];
            const int p = pos_[move];
            const int last = b.back();
            b[p] = last;
            pos_[last] = p;
            b.pop_back();
        }
        bucket_[move] = static_cast<std::int8_t>(k);
        if (k >= 0) {
            pos_[move] = static_cast<int>(buckets_[k].size());
            buckets_[k].push_back(move);
        } else {
            pos_[move] = -1;
        }
    }

    int bucket_of(int move) const { return bucket_[move]; }
    int count(int k) const { return static_cast<int>(buckets_[k].size()); }
    int member(int k, int i) const { return buckets_[k][i]; }
    int size() const { return count(0) + count(1) + count(2) + count(3); }

    /// Same moves in the same classes, regardless of storage order.
    friend bool operator==(const EventList& a, const EventList& b) { return a.bucket_ == b.bucket_; }

private:
    std::array<std::vector<int>, 4> buckets_;
    std::vector<int> pos_;
    std::vector<std::int8_t> bucket_;
};

/// Rate class of a move, or -1 when it is not a valid exchange.
inline int move_class(const Configuration& c, int move) {
    const int from = move / 4;
    const int to = c.neighbours(from)[move % 4];
    if (!c.occupied(from) || c.occupied(to)) return -1;
    const int dh = delta_energy_units(c, from, to);
    return dh > 0 ? dh : 0;
}

inline EventList build_event_list(const Configuration& c) {
    EventList ev(c.sites());
    for (int s = 0; s < c.sites(); ++s) {
        if (!c.occupied(s)) continue;
        for (int k = 0; k < 4; ++k) ev.assign(move_code(s, k), move_class(c, move_code(s, k)));
    }
    return ev;
}

/// Metropolis rate c(x, y, eta) for an arbitrary valid exchange.
inline double exchange_rate(const Configuration& c, int from, int to, double U, double beta) {
    const int dh = delta_energy_units(c, from, to);
    return dh > 0 ? std::exp(-beta * U * dh) : 1.0;
}

struct Event {
    double time = 0;  // clock after the move
    double dt = 0;
    int from = -1;
    int to = -1;
    int pid = -1;
    int dH = 0;  // energy change in units of U
};

class Simulator {
public:
    Simulator(Configuration c, double U, double beta)
        : config_(std::move(c)), U_(U), beta_(beta), stamp_(config_.sites(), 0) {
        for (int k = 0; k < 4; ++k) rate_[k] = std::exp(-beta * U * k);
        events_ = build_event_list(config_);
    }

    const Configuration& config() const { return config_; }
    Configuration& mutable_config() { return config_; }
    const EventList& events() const { return events_; }
    double U() const { return U_; }
    double beta() const { return beta_; }
    double class_rate(int k) const { return rate_[k]; }

    double total_rate() const {
        double r = 0;
        for (int k = 0; k < 4; ++k) r += events_.count(k) * rate_[k];
        return r;
    }

    Event step(Rng& rng) {
        auto e = step_until(rng, std::numeric_limits<double>::infinity());
        return *e;
    }

    /// Samples the next event; if it would fall after `horizon` the clock is
    /// set to the horizon and nothing moves (exact by memorylessness).
    /// `before_move`, when given, is called with the event time while the
    /// configuration still holds the pre-move state.
    std::optional<Event> step_until(Rng& rng, double horizon,
                                    const std::function<void(double)>& before_move = {}) {
        const double R = total_rate();
        if (!(R > 0)) throw FrozenError("no particle has an empty neighbour");
        const double dt = exponential(rng, R);
        if (config_.time() + dt > horizon) {
            config_.set_time(horizon);
            return std::nullopt;
        }
        if (before_move) before_move(config_.time() + dt);
        double pick = uniform01(rng) * R;
        int k = 0;
        for (; k < 3; ++k) {
            const double w = events_.count(k) * rate_[k];
            if (pick < w) break;
            pick -= w;
        }
        while (events_.count(k) == 0) --k;  // rounding at the top end
        const int n = events_.count(k);
        int i = static_cast<int>(uniform01(rng) * n);
        if (i >= n) i = n - 1;
        const int move = events_.member(k, i);
        return apply(move, dt);
    }

    /// Applies an explicit move (used when replaying logs).
    Event apply_move(int from, int to, double dt) {
        const auto& n = config_.neighbours(from);
        for (int d = 0; d < 4; ++d)
            if (n[d] == to) return apply(move_code(from, d), dt);
        throw MoveError("sites are not nearest neighbours");
    }

private:
    Event apply(int move, double dt) {
        Event e;
        e.from = move / 4;
        e.to = config_.neighbours(e.from)[move % 4];
        e.dH = delta_energy_units(config_, e.from, e.to);
        e.pid = config_.id_at(e.from);
        e.dt = dt;
        config_.apply_exchange(e.from, e.to);
        config_.advance(dt);
        e.time = config_.time();
        rebucket(e.from, e.to);
        return e;
    }

    // Rates can only change for moves with an endpoint adjacent to a changed
    // site; every source within l-infinity distance 2 of either is revisited.
    void rebucket(int a, int b) {
        if (++cur_ == 0) {
            std::fill(stamp_.begin(), stamp_.end(), 0);
            cur_ = 1;
        }
        const int L = config_.L();
        for (int centre : {a, b}) {
            const Site c = config_.site(centre);
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    const int s = wrap(c.y + dy, L) * L + wrap(c.x + dx, L);
                    if (stamp_[s] == cur_) continue;
                    stamp_[s] = cur_;
                    for (int k = 0; k < 4; ++k) {
                        const int m = move_code(s, k);
                        events_.assign(m, move_class(config_, m));
                    }
                }
        }
    }

    Configuration config_;
    double U_;
    double beta_;
    std::array<double, 4> rate_{};
    EventList events_;
    std::vector<unsigned> stamp_;
    unsigned cur_ = 0;
};

// --- trajectories ------------------------------------------------------------

enum class StopReason { Horizon, ClusterVolume, EventCap, Frozen };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::Horizon: return "horizon";
        case StopReason::ClusterVolume: return "cluster";
        case StopReason::EventCap: return "eventcap";
        case StopReason::Frozen: return "frozen";
    }
    return "?";
}

inline StopReason stop_reason_from(const std::string& s) {
    if (s == "horizon") return StopReason::Horizon;
    if (s == "cluster") return StopReason::ClusterVolume;
    if (s == "eventcap") return StopReason::EventCap;
    if (s == "frozen") return StopReason::Frozen;
    throw ParseError("unknown stop reason '" + s + "'", 0);
}

struct StopRule {
    double horizon = std::numeric_limits<double>::infinity();
    /// Stop once some component reaches this volume (exit from R uses max_subcritical_volume + 1).
    std::optional<int> cluster_volume;
    std::optional<std::int64_t> event_cap;

    static StopRule until(double T) { return {T, std::nullopt, std::nullopt}; }
    static StopRule exit_from_R(int max_subcritical_volume, double T = std::numeric_limits<double>::infinity()) {
        return {T, max_subcritical_volume + 1, std::nullopt};
    }
};

struct LogRecord {
    double t = 0;
    int from = -1;
    int to = -1;
    int pid = -1;
    int dH = 0;
    friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

struct TrajectoryLog {
    Configuration initial{2};
    std::vector<LogRecord> records;
    StopReason reason = StopReason::Horizon;
    bool truncated = false;
    double end_time = 0;
    /// Free-form `key value` metadata carried in the file header (model parameters, seed).
    std::map<std::string, std::string> header;
};

struct Observers {
    std::function<void(const Simulator&, const Event&)> on_event;
    double sample_period = 0;  // <= 0 disables sampling
    std::function<void(const Simulator&, double)> on_sample;
};

namespace detail {

inline bool reached_volume(const Configuration& c, ClusterProbe& probe, int site, int v) {
    return probe.volume(c, site, v) >= v;
}

}  // namespace detail

/// Simulates until the stop rule fires. Records every event when `record` is set.
inline TrajectoryLog run_until(Simulator& sim, const StopRule& stop, Rng& rng,
                               const Observers& obs = {}, bool record = true) {
    TrajectoryLog log;
    log.initial = sim.config();
    const Configuration& c = sim.config();
    ClusterProbe probe(c.sites());

    // Sample times strictly before an event see the pre-move state.
    double next_sample = c.time();
    const bool sampling = obs.sample_period > 0 && obs.on_sample;
    auto sample_before = [&](double t) {
        while (next_sample < t) {
            obs.on_sample(sim, next_sample);
            next_sample += obs.sample_period;
        }
    };
    auto sample_through = [&](double t) {
        if (!sampling) return;
        sample_before(t);
        if (next_sample == t) sample_before(std::nextafter(t, std::numeric_limits<double>::infinity()));
    };
    std::function<void(double)> before_move;
    if (sampling) before_move = sample_before;

    auto finish = [&](StopReason r) {
        log.reason = r;
        log.truncated = r == StopReason::EventCap;
        log.end_time = c.time();
        return log;
    };

    if (stop.cluster_volume && max_component_volume(c) >= *stop.cluster_volume)
        return finish(StopReason::ClusterVolume);
    if (!(stop.horizon > c.time())) {
        sample_through(c.time());
        return finish(StopReason::Horizon);
    }

    std::int64_t n = 0;
    for (;;) {
        if (stop.event_cap && n >= *stop.event_cap) return finish(StopReason::EventCap);
        if (!(sim.total_rate() > 0)) return finish(StopReason::Frozen);
        std::optional<Event> e = sim.step_until(rng, stop.horizon, before_move);
        if (!e) {
            sample_through(stop.horizon);
            return finish(StopReason::Horizon);
        }
        ++n;
        if (record) log.records.push_back({e->time, e->from, e->to, e->pid, e->dH});
        if (obs.on_event) obs.on_event(sim, *e);
        if (stop.cluster_volume && detail::reached_volume(c, probe, e->to, *stop.cluster_volume))
            return finish(StopReason::ClusterVolume);
    }
}

// --- log files -----------------------------------------------------------------

inline std::string write_log(const TrajectoryLog& log) {
    std::ostringstream os;
    os << "# kawasaki-trajectory v1\n";
    for (const auto& [k, v] : log.header) os << "# meta " << k << ' ' << v << '\n';
    os << "# stop " << to_string(log.reason) << " truncated " << (log.truncated ? 1 : 0)
       << " end " << format_double(log.end_time) << " events " << log.records.size() << '\n';
    std::istringstream snap(snapshot_write(log.initial));
    std::string line;
    while (std::getline(snap, line)) os << "# init " << line << '\n';
    const int L = log.initial.L();
    for (const auto& r : log.records) {
        os << format_double(r.t) << ' ' << r.from % L << ' ' << r.from / L << ' ' << r.to % L << ' '
           << r.to / L << ' ' << r.pid << ' ' << r.dH << '\n';
    }
    return os.str();
}

inline void save_log(const TrajectoryLog& log, const std::string& path) {
    write_text_file(path, write_log(log));
}

inline TrajectoryLog read_log(const std::string& text) {
    TrajectoryLog log;
    std::istringstream in(text);
    std::string line;
    std::ostringstream init;
    int lineno = 0;
    bool have_stop = false;
    std::vector<std::string> body;
    std::vector<int> body_lines;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        if (line[0] == '#') {
            std::istringstream h(line.substr(1));
            std::string tag;
            h >> tag;
            if (tag == "meta") {
                std::string k, v;
                h >> k;
                std::getline(h, v);
                log.header[k] = detail::trim(v);
            } else if (tag == "stop") {
                std::string reason, kt, ke, kv;
                int trunc = 0;
                std::string end;
                std::size_t events = 0;
                if (!(h >> reason >> kt >> trunc >> ke >> end >> kv >> events))
                    throw ParseError("malformed stop header", lineno);
                log.reason = stop_reason_from(reason);
                log.truncated = trunc != 0;
                log.end_time = detail::parse_double(end, lineno, "end");
                have_stop = true;
            } else if (tag == "init") {
                std::string rest;
                std::getline(h, rest);
                init << detail::trim(rest) << '\n';
            }
            continue;
        }
        body.push_back(line);
        body_lines.push_back(lineno);
    }
    if (!have_stop) throw ParseError("missing '# stop' header", 0);
    try {
        log.initial = snapshot_read(init.str());
    } catch (const ParseError& e) {
        throw ParseError(std::string("initial snapshot: ") + e.what(), 0);
    }
    const int L = log.initial.L();
    log.records.reserve(body.size());
    double last = log.initial.time();
    for (std::size_t i = 0; i < body.size(); ++i) {
        std::istringstream r(body[i]);
        std::string t;
        int fx, fy, tx, ty, pid, dh;
        if (!(r >> t >> fx >> fy >> tx >> ty >> pid >> dh))
            throw ParseError("expected 't from_x from_y to_x to_y pid dH'", body_lines[i]);
        LogRecord rec{detail::parse_double(t, body_lines[i], "t"), wrap(fy, L) * L + wrap(fx, L),
                      wrap(ty, L) * L + wrap(tx, L), pid, dh};
        if (rec.t < last) throw ParseError("times must be nondecreasing", body_lines[i]);
        last = rec.t;
        log.records.push_back(rec);
    }
    return log;
}

inline TrajectoryLog load_log(const std::string& path) { return read_log(read_text_file(path)); }

/// Replays a log, invoking `visit(config_before, record)` before each move is applied.
template <typename Visit>
Configuration replay(const TrajectoryLog& log, Visit&& visit) {
    Configuration c = log.initial;
    for (const auto& r : log.records) {
        visit(static_cast<const Configuration&>(c), r);
        c.apply_exchange(r.from, r.to);
        c.set_time(r.t);
    }
    return c;
}

}  // namespace kawasaki

#endif
