#ifndef KAWASAKI_LATTICE_HPP
#define KAWASAKI_LATTICE_HPP

// Periodic L x L occupancy grid with stable particle identities.
//
// Energies are kept as integer bond counts; H = -U * bonds. A bond is an
// occupied nearest-neighbour pair counted once (right and up of each site).

#include "kawasaki/config.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kawasaki {

class MoveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Site {
    int x = 0;
    int y = 0;
    friend bool operator==(const Site&, const Site&) = default;
    friend auto operator<=>(const Site&, const Site&) = default;
};

inline int wrap(int v, int L) {
    v %= L;
    return v < 0 ? v + L : v;
}

/// Minimum-image signed offset b - a on a circle of length L, in [-L/2, L/2).
inline int min_image(int a, int b, int L) {
    int d = wrap(b - a, L);
    return d >= (L + 1) / 2 ? d - L : d;
}

/// l-infinity torus distance.
inline int torus_dist(Site a, Site b, int L) {
    return std::max(std::abs(min_image(a.x, b.x, L)), std::abs(min_image(a.y, b.y, L)));
}

// Direction order: +x, +y, -x, -y. Opposite of k is k ^ 2.
inline constexpr std::array<int, 4> kDx{1, 0, -1, 0};
inline constexpr std::array<int, 4> kDy{0, 1, 0, -1};

class Configuration {
public:
    explicit Configuration(int L = 2) : L_(L) {
        if (L < 2) throw std::invalid_argument("lattice side must be >= 2");
        occ_.assign(static_cast<std::size_t>(L) * L, 0);
        id_.assign(occ_.size(), -1);
        nbr_.resize(occ_.size());
        for (int y = 0; y < L; ++y)
            for (int x = 0; x < L; ++x) {
                auto& n = nbr_[y * L + x];
                for (int k = 0; k < 4; ++k) n[k] = wrap(y + kDy[k], L) * L + wrap(x + kDx[k], L);
            }
    }

    int L() const { return L_; }
    int sites() const { return static_cast<int>(occ_.size()); }
    int N() const { return N_; }
    double time() const { return time_; }
    std::int64_t bonds() const { return bonds_; }

    void set_time(double t) { time_ = t; }
    void advance(double dt) {
        if (!(dt >= 0)) throw std::invalid_argument("clock cannot move backwards");
        time_ += dt;
    }

    Site normalize(Site s) const { return {wrap(s.x, L_), wrap(s.y, L_)}; }
    int index(Site s) const {
        s = normalize(s);
        return s.y * L_ + s.x;
    }
    Site site(int idx) const { return {idx % L_, idx / L_}; }

    bool occupied(int idx) const { return occ_[idx] != 0; }
    bool occupied(Site s) const { return occupied(index(s)); }
    int id_at(int idx) const { return id_[idx]; }
    int id_at(Site s) const { return id_at(index(s)); }

    const std::array<int, 4>& neighbours(int idx) const { return nbr_[idx]; }

    int occupied_neighbours(int idx) const {
        const auto& n = nbr_[idx];
        return occ_[n[0]] + occ_[n[1]] + occ_[n[2]] + occ_[n[3]];
    }

    /// Site index of particle `id`, or -1.
    int locate(int id) const {
        if (id < 0 || id >= static_cast<int>(where_.size())) return -1;
        return where_[id];
    }

    int next_id() const { return static_cast<int>(where_.size()); }

    int add_particle(Site s, int id = -1) {
        const int idx = index(s);
        if (occ_[idx]) throw MoveError("site already occupied");
        if (id < 0) id = next_id();
        if (id > (1 << 28)) throw std::invalid_argument("particle id too large");
        if (id < static_cast<int>(where_.size()) && where_[id] >= 0)
            throw std::invalid_argument("duplicate particle id " + std::to_string(id));
        if (id >= static_cast<int>(where_.size())) where_.resize(id + 1, -1);
        bonds_ += bonds_at(idx);
        occ_[idx] = 1;
        id_[idx] = id;
        where_[id] = idx;
        ++N_;
        return id;
    }

    void remove_particle(Site s) {
        const int idx = index(s);
        if (!occ_[idx]) throw MoveError("no particle to remove");
        occ_[idx] = 0;
        bonds_ -= bonds_at(idx);
        where_[id_[idx]] = -1;
        id_[idx] = -1;
        --N_;
    }

    /// Moves the particle at `from` to the empty neighbour `to`; identity travels with it.
    void apply_exchange(int from, int to) {
        check_move(from, to);
        const int before = occupied_neighbours(from);
        occ_[from] = 0;
        const int after = occupied_neighbours(to);
        occ_[to] = 1;
        bonds_ += after - before;
        const int pid = id_[from];
        id_[to] = pid;
        id_[from] = -1;
        where_[pid] = to;
    }
    void apply_exchange(Site from, Site to) { apply_exchange(index(from), index(to)); }

    bool adjacent(int a, int b) const {
        const auto& n = nbr_[a];
        return n[0] == b || n[1] == b || n[2] == b || n[3] == b;
    }

    void check_move(int from, int to) const {
        if (!adjacent(from, to)) throw MoveError("sites are not nearest neighbours");
        if (!occ_[from]) throw MoveError("source site is empty");
        if (occ_[to]) throw MoveError("target site is occupied");
    }

    /// (id, site index) pairs sorted by id.
    std::vector<std::pair<int, int>> particles() const {
        std::vector<std::pair<int, int>> out;
        out.reserve(N_);
        for (int id = 0; id < static_cast<int>(where_.size()); ++id)
            if (where_[id] >= 0) out.emplace_back(id, where_[id]);
        return out;
    }

    const std::vector<std::uint8_t>& occupancy() const { return occ_; }

    friend bool operator==(const Configuration& a, const Configuration& b) {
        return a.L_ == b.L_ && a.occ_ == b.occ_ && a.id_ == b.id_ && a.time_ == b.time_;
    }

private:
    // Bonds that site idx would form with its occupied neighbours (with
    // multiplicity on the degenerate L = 2 torus).
    int bonds_at(int idx) const { return occupied_neighbours(idx); }

    int L_;
    int N_ = 0;
    double time_ = 0.0;
    std::int64_t bonds_ = 0;
    std::vector<std::uint8_t> occ_;
    std::vector<int> id_;
    std::vector<int> where_;
    std::vector<std::array<int, 4>> nbr_;
};

/// Bond count recomputed from scratch.
inline std::int64_t count_bonds(const Configuration& c) {
    std::int64_t b = 0;
    for (int i = 0; i < c.sites(); ++i)
        if (c.occupied(i)) b += c.occupied(c.neighbours(i)[0]) + c.occupied(c.neighbours(i)[1]);
    return b;
}

inline double energy(const Configuration& c, double U) {
    return -U * static_cast<double>(count_bonds(c));
}

/// H(after) - H(before) in units of U for moving the particle at `from` to `to`.
inline int delta_energy_units(const Configuration& c, int from, int to) {
    c.check_move(from, to);
    const int n_from = c.occupied_neighbours(from);  // `to` is empty
    int n_to = 0;
    for (int n : c.neighbours(to))
        if (n != from) n_to += c.occupied(n);
    return n_from - n_to;
}

inline double delta_energy(const Configuration& c, Site from, Site to, double U) {
    return U * delta_energy_units(c, c.index(from), c.index(to));
}

/// Reusable flood fill over occupied nearest-neighbour components.
class ClusterProbe {
public:
    explicit ClusterProbe(int sites = 0) : stamp_(sites, 0) {}

    /// Size of the occupied component containing idx (0 if empty), stopping
    /// early once `cap` sites have been found. sites() holds what was visited.
    int volume(const Configuration& c, int idx, int cap = 1 << 30) {
        if (static_cast<int>(stamp_.size()) != c.sites()) stamp_.assign(c.sites(), 0);
        sites_.clear();
        if (!c.occupied(idx)) return 0;
        if (++cur_ == 0) {
            std::fill(stamp_.begin(), stamp_.end(), 0);
            cur_ = 1;
        }
        stamp_[idx] = cur_;
        sites_.push_back(idx);
        for (std::size_t head = 0; head < sites_.size(); ++head) {
            if (static_cast<int>(sites_.size()) >= cap) break;
            for (int n : c.neighbours(sites_[head])) {
                if (c.occupied(n) && stamp_[n] != cur_) {
                    stamp_[n] = cur_;
                    sites_.push_back(n);
                }
            }
        }
        return static_cast<int>(sites_.size());
    }

    /// True if idx was reached by the last fill.
    bool visited(int idx) const { return stamp_[idx] == cur_; }

    const std::vector<int>& sites() const { return sites_; }

private:
    std::vector<unsigned> stamp_;
    unsigned cur_ = 0;
    std::vector<int> sites_;
};

/// Largest nearest-neighbour component (singletons count as volume 1).
inline int max_component_volume(const Configuration& c) {
    ClusterProbe probe(c.sites());
    std::vector<std::uint8_t> seen(c.sites(), 0);
    int best = 0;
    for (int i = 0; i < c.sites(); ++i) {
        if (!c.occupied(i) || seen[i]) continue;
        best = std::max(best, probe.volume(c, i));
        for (int s : probe.sites()) seen[s] = 1;
    }
    return best;
}

// --- snapshots ---------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void snapshot_write(const Configuration& c, std::ostream& out) {
    out << "L " << c.L() << " N " << c.N() << " t " << format_double(c.time()) << '\n';
    for (auto [id, idx] : c.particles()) {
        Site s = c.site(idx);
        out << id << ' ' << s.x << ' ' << s.y << '\n';
    }
}

inline std::string snapshot_write(const Configuration& c) {
    std::ostringstream os;
    snapshot_write(c, os);
    return os.str();
}

namespace detail {

inline Configuration parse_snapshot_header(const std::string& line, int lineno, int& N) {
    std::istringstream in(line);
    std::string kL, kN, kt;
    int L = 0;
    std::string tstr;
    if (!(in >> kL >> L >> kN >> N >> kt >> tstr) || kL != "L" || kN != "N" || kt != "t")
        throw ParseError("expected header 'L <int> N <int> t <float>'", lineno);
    std::string extra;
    if (in >> extra) throw ParseError("trailing text in header", lineno);
    if (L < 2) throw ParseError("lattice side must be >= 2", lineno);
    if (N < 0 || N > L * L) throw ParseError("particle count out of range", lineno);
    Configuration c(L);
    c.set_time(parse_double(tstr, lineno, "t"));
    return c;
}

inline void parse_particle_line(Configuration& c, const std::string& line, int lineno,
                                int& last_id) {
    std::istringstream in(line);
    int id = 0, x = 0, y = 0;
    if (!(in >> id >> x >> y)) throw ParseError("expected 'id x y'", lineno);
    std::string extra;
    if (in >> extra) throw ParseError("trailing text after particle", lineno);
    if (id < 0) throw ParseError("negative particle id", lineno);
    if (id <= last_id) throw ParseError("particle ids must be strictly increasing", lineno);
    if (x < 0 || y < 0 || x >= c.L() || y >= c.L()) throw ParseError("site outside lattice", lineno);
    if (c.occupied(Site{x, y})) throw ParseError("site occupied twice", lineno);
    c.add_particle({x, y}, id);
    last_id = id;
}

}  // namespace detail

/// Reads one snapshot; stops after the N particle lines.
inline Configuration snapshot_read(std::istream& in, int* lines_consumed = nullptr) {
    std::string line;
    int lineno = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            if (!detail::trim(line).empty()) return true;
        }
        return false;
    };
    if (!next_line()) throw ParseError("empty snapshot", lineno);
    int N = 0;
    Configuration c = detail::parse_snapshot_header(line, lineno, N);
    int last_id = -1;
    for (int k = 0; k < N; ++k) {
        if (!next_line()) throw ParseError("snapshot truncated: expected " + std::to_string(N) +
                                               " particles", lineno + 1);
        detail::parse_particle_line(c, line, lineno, last_id);
    }
    if (lines_consumed) *lines_consumed = lineno;
    return c;
}

inline Configuration snapshot_read(const std::string& text) {
    std::istringstream in(text);
    Configuration c = snapshot_read(in);
    std::string rest;
    int extra_line = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++extra_line;
        if (!detail::trim(line).empty())
            throw ParseError("unexpected content after snapshot", c.N() + 1 + extra_line);
    }
    return c;
}

}  // namespace kawasaki

#endif
