#ifndef KAWASAKI_GIBBS_HPP
#define KAWASAKI_GIBBS_HPP

// Exact Gibbs measures on tiny tori (all 2^{L^2} occupancies) and the
// birth/death Metropolis sampler for the restricted measure mu_R.

#include "kawasaki/lattice.hpp"
#include "kawasaki/params.hpp"
#include "kawasaki/rng.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kawasaki {

enum class MeasureMode { Canonical, GrandCanonical, Restricted };

inline const char* to_string(MeasureMode m) {
    switch (m) {
        case MeasureMode::Canonical: return "canonical";
        case MeasureMode::GrandCanonical: return "grand-canonical";
        case MeasureMode::Restricted: return "restricted";
    }
    return "?";
}

inline MeasureMode measure_mode_from(const std::string& s) {
    if (s == "canonical") return MeasureMode::Canonical;
    if (s == "grand-canonical" || s == "gc") return MeasureMode::GrandCanonical;
    if (s == "restricted" || s == "R") return MeasureMode::Restricted;
    throw ParamError("unknown measure mode '" + s + "' (canonical|grand-canonical|restricted)");
}

/// Energies used by the measures. U may be zero here, unlike in ModelParams.
struct GibbsParams {
    double U = 1.0;
    double Delta = 1.6;
    double beta = 1.0;
    int max_volume = 8;  // largest admissible cluster in restricted mode
    int N = 0;           // particle number in canonical mode

    static GibbsParams from(const ModelParams& p) {
        const DerivedParams dp = derive(p);
        GibbsParams g;
        g.U = p.U;
        g.Delta = p.Delta;
        g.beta = p.beta;
        g.max_volume = dp.max_subcritical_volume;
        return g;
    }
};

inline constexpr int kMaxEnumerationSites = 24;

struct ExactMeasure {
    int L = 0;
    MeasureMode mode = MeasureMode::GrandCanonical;
    GibbsParams params;
    std::vector<std::pair<std::uint32_t, double>> weights;  // (code, weight), ascending code
    double Z = 0;

    double probability(std::uint32_t code) const {
        auto it = std::lower_bound(weights.begin(), weights.end(), std::make_pair(code, -1.0));
        if (it == weights.end() || it->first != code) return 0.0;
        return it->second / Z;
    }
};

/// Bit i of the code is the occupancy of site index i.
inline std::uint32_t code_of(const Configuration& c) {
    if (c.sites() > 32) throw CapacityError("configuration codes need at most 32 sites");
    std::uint32_t code = 0;
    for (int i = 0; i < c.sites(); ++i)
        if (c.occupied(i)) code |= 1u << i;
    return code;
}

inline Configuration config_from_code(int L, std::uint32_t code) {
    Configuration c(L);
    for (int i = 0; i < L * L; ++i)
        if (code >> i & 1u) c.add_particle(c.site(i));
    return c;
}

namespace detail {

struct BitLattice {
    explicit BitLattice(int L) : L(L), nbr(static_cast<std::size_t>(L) * L) {
        Configuration c(L);
        for (int i = 0; i < L * L; ++i) {
            nbr[i] = c.neighbours(i);
            for (int n : nbr[i]) mask[i] |= 1u << n;
        }
    }

    // Bonds counted as in count_bonds: right and up neighbour of every site.
    int bonds(std::uint32_t code) const {
        int b = 0;
        for (int i = 0; i < L * L; ++i)
            if (code >> i & 1u) b += (code >> nbr[i][0] & 1u) + (code >> nbr[i][1] & 1u);
        return b;
    }

    int max_component(std::uint32_t code) const {
        int best = 0;
        std::uint32_t left = code;
        while (left) {
            std::uint32_t comp = left & (~left + 1);
            std::uint32_t frontier = comp;
            while (frontier) {
                std::uint32_t grown = 0;
                for (std::uint32_t f = frontier; f; f &= f - 1) grown |= mask[std::countr_zero(f)];
                grown &= code & ~comp;
                comp |= grown;
                frontier = grown;
            }
            best = std::max(best, std::popcount(comp));
            left &= ~comp;
        }
        return best;
    }

    int L;
    std::vector<std::array<int, 4>> nbr;
    std::array<std::uint32_t, 32> mask{};
};

}  // namespace detail

/// Enumerates the measure on the L x L torus (L^2 <= 24).
inline ExactMeasure enumerate_measure(int L, MeasureMode mode, const GibbsParams& gp) {
    if (L < 2) throw ParamError("lattice side must be >= 2");
    if (L * L > kMaxEnumerationSites)
        throw CapacityError("enumeration needs L^2 <= " + std::to_string(kMaxEnumerationSites) + ", got L=" +
                            std::to_string(L));
    if (mode == MeasureMode::Canonical && (gp.N < 0 || gp.N > L * L))
        throw ParamError("canonical particle number out of range");
    detail::BitLattice lat(L);
    ExactMeasure m;
    m.L = L;
    m.mode = mode;
    m.params = gp;
    const std::uint32_t end = 1u << (L * L);
    for (std::uint32_t code = 0; code < end; ++code) {
        const int n = std::popcount(code);
        if (mode == MeasureMode::Canonical && n != gp.N) continue;
        if (mode == MeasureMode::Restricted && lat.max_component(code) > gp.max_volume) continue;
        const double H = -gp.U * lat.bonds(code);
        const double w = mode == MeasureMode::Canonical ? std::exp(-gp.beta * H)
                                                        : std::exp(-gp.beta * (H + gp.Delta * n));
        m.weights.emplace_back(code, w);
        m.Z += w;
    }
    return m;
}

/// Single-site birth/death Metropolis chain reversible for mu_R.
class MuRSampler {
public:
    MuRSampler(const GibbsParams& gp, int L) : gp_(gp), config_(L), probe_(L * L) {}

    const Configuration& config() const { return config_; }
    std::uint64_t proposals() const { return proposals_; }
    std::uint64_t accepted() const { return accepted_; }

    /// Acceptance probability of toggling `site` in the current state (0 when it leaves R).
    double acceptance(int site) {
        const int n = config_.occupied_neighbours(site);
        double dE;
        if (config_.occupied(site)) {
            dE = gp_.U * n - gp_.Delta;
        } else {
            if (n > 0 && !fits_after_adding(site)) return 0.0;
            dE = -gp_.U * n + gp_.Delta;
        }
        return dE <= 0 ? 1.0 : std::exp(-gp_.beta * dE);
    }

    void propose(Rng& rng) {
        ++proposals_;
        int site = static_cast<int>(uniform01(rng) * config_.sites());
        if (site >= config_.sites()) site = config_.sites() - 1;
        if (uniform01(rng) < acceptance(site)) {
            toggle(site);
            ++accepted_;
        }
    }

    void run(Rng& rng, std::uint64_t n) {
        for (std::uint64_t i = 0; i < n; ++i) propose(rng);
    }

    void toggle(int site) {
        if (config_.occupied(site)) {
            config_.remove_particle(config_.site(site));
        } else {
            config_.add_particle(config_.site(site), site);  // id = site keeps ids bounded
        }
    }

    /// Current state with particle ids renumbered in site order.
    Configuration snapshot() const {
        Configuration c(config_.L());
        for (int i = 0; i < c.sites(); ++i)
            if (config_.occupied(i)) c.add_particle(c.site(i));
        return c;
    }

private:
    bool fits_after_adding(int site) {
        config_.add_particle(config_.site(site), site);
        const bool ok = probe_.volume(config_, site, gp_.max_volume + 1) <= gp_.max_volume;
        config_.remove_particle(config_.site(site));
        return ok;
    }

    GibbsParams gp_;
    Configuration config_;
    ClusterProbe probe_;
    std::uint64_t proposals_ = 0;
    std::uint64_t accepted_ = 0;
};

struct SamplerSchedule {
    std::uint64_t burn_in = 0;   // 0: ten proposals per site
    std::uint64_t thinning = 0;  // 0: one proposal per site

    std::uint64_t burn_in_for(int L) const { return burn_in ? burn_in : 10ull * L * L; }
    std::uint64_t thinning_for(int L) const { return thinning ? thinning : 1ull * L * L; }
};

/// One draw from mu_R after burn-in from the empty configuration.
inline Configuration sample_muR(const ModelParams& p, int L, Rng& rng, SamplerSchedule sched = {}) {
    validate(p);
    const DerivedParams dp = derive(p);
    if (L < 2 * dp.ell_c) throw ParamError("mu_R sampling needs L >= 2 ell_c = " + std::to_string(2 * dp.ell_c));
    MuRSampler s(GibbsParams::from(p), L);
    s.run(rng, sched.burn_in_for(L));
    return s.snapshot();
}

/// `count` thinned draws from one chain.
inline std::vector<Configuration> sample_muR(const ModelParams& p, int L, Rng& rng, int count,
                                             SamplerSchedule sched = {}) {
    validate(p);
    const DerivedParams dp = derive(p);
    if (L < 2 * dp.ell_c) throw ParamError("mu_R sampling needs L >= 2 ell_c = " + std::to_string(2 * dp.ell_c));
    MuRSampler s(GibbsParams::from(p), L);
    s.run(rng, sched.burn_in_for(L));
    std::vector<Configuration> out;
    for (int i = 0; i < count; ++i) {
        if (i > 0) s.run(rng, sched.thinning_for(L));
        out.push_back(s.snapshot());
    }
    return out;
}

}  // namespace kawasaki

#endif
