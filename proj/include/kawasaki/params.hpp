#ifndef KAWASAKI_PARAMS_HPP
#define KAWASAKI_PARAMS_HPP

// Model constants of the two-dimensional Kawasaki lattice gas and every
// scalar quantity derived from them.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace kawasaki {

/// Raised when a parameter leaves its admissible range. The message names the bound.
class ParamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a requested lattice or enumeration exceeds a configured cap.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LambdaChoice { SqrtLog, Constant };

struct ModelParams {
    double U = 1.0;
    double Delta = 1.6;
    double beta = 1.0;
    double Theta = 2.4;
    // Small tuning exponents. Unset means "use the default for this (U, Delta)".
    std::optional<double> alpha;
    std::optional<double> d;
    std::optional<double> kappa;
    std::optional<double> delta;
    std::optional<double> C_star;
    LambdaChoice lambda_choice = LambdaChoice::SqrtLog;
    double lambda_constant = 1.0;

    double alpha_or_default() const;
    double d_or_default() const;
    double kappa_or_default() const;
    double delta_or_default() const;
};

struct QuasiSquare {
    int l1 = 0;
    int l2 = 0;
    friend bool operator==(const QuasiSquare&, const QuasiSquare&) = default;
    friend auto operator<=>(const QuasiSquare&, const QuasiSquare&) = default;
};

inline std::string to_string(QuasiSquare q) {
    return std::to_string(q.l1) + "x" + std::to_string(q.l2);
}

inline bool is_quasi_square(int l1, int l2) { return 1 <= l1 && l1 <= l2 && l2 <= l1 + 1; }

/// Successor in the increasing quasi-square sequence: (l1,l2) -> (l2, l1+1).
inline QuasiSquare next_quasi_square(QuasiSquare q) { return {q.l2, q.l1 + 1}; }

struct DerivedParams {
    double eps = 0;          // 2U - Delta
    int ell_c = 0;           // critical side length
    double Gamma = 0;        // formation energy of the critical droplet
    double gamma = 0;        // (Delta - U) - (ell_c - 2) eps
    double theta = 0;        // resistance of the largest subcritical quasi-square
    double D = 0;            // U + d
    double Delta_plus = 0;   // Delta + alpha
    double S = 0;            // (4 Delta - theta)/3 - alpha
    double r00 = 0;          // 4 Delta - 2U - Theta
    double a_beta = 0;       // mean number of new histories per toy step
    double lambda_beta = 0;
    double C_star = 0;
    double alpha = 0, d = 0, kappa = 0, delta = 0;
    int max_subcritical_volume = 0;  // ell_c (ell_c - 1) + 2
    std::pair<double, double> theta_window;  // (Delta, Gamma - (2 Delta - U))
    std::map<QuasiSquare, double> r_table;
};

namespace detail {

inline void check_regime(double U, double Delta) {
    if (!(U > 0)) throw ParamError("U must be > 0 (got " + std::to_string(U) + ")");
    if (!(Delta > 1.5 * U))
        throw ParamError("Delta must exceed 3U/2 = " + std::to_string(1.5 * U) +
                         " (got " + std::to_string(Delta) + ")");
    if (!(Delta < 2 * U))
        throw ParamError("Delta must be below 2U = " + std::to_string(2 * U) + " (got " +
                         std::to_string(Delta) + ")");
}

// Small exponents default to the stated value, halved as needed to stay below
// the ordering bound (2U - Delta)/4.
inline double small_default(double stated, double U, double Delta) {
    const double bound = (2 * U - Delta) / 4;
    return stated < bound ? stated : bound / 2;
}

}  // namespace detail

inline double ModelParams::alpha_or_default() const {
    return alpha ? *alpha : detail::small_default(0.05 * U, U, Delta);
}
inline double ModelParams::d_or_default() const {
    return d ? *d : detail::small_default(0.1 * U, U, Delta);
}
inline double ModelParams::kappa_or_default() const {
    return kappa ? *kappa : detail::small_default(0.1 * U, U, Delta);
}
inline double ModelParams::delta_or_default() const {
    return delta ? *delta : detail::small_default(0.05 * U, U, Delta);
}

/// ceil(U / (2U - Delta)).
inline int critical_length(double U, double Delta) {
    detail::check_regime(U, Delta);
    const double ratio = U / (2 * U - Delta);
    if (!(ratio < 1e6)) throw ParamError("critical length exceeds 10^6 (Delta too close to 2U)");
    auto lc = static_cast<int>(std::ceil(ratio));
    // Guard against ratio landing a hair above an integer through rounding.
    if (std::abs(ratio - std::round(ratio)) < 1e-12) lc = static_cast<int>(std::round(ratio));
    if (lc <= 2) throw ParamError("critical length must exceed 2 (Delta too close to 3U/2)");
    return lc;
}

inline double critical_energy(double U, double Delta) {
    const double lc = critical_length(U, Delta);
    return -U * ((lc - 1) * (lc - 1) + lc * (lc - 2) + 1) + Delta * (lc * (lc - 1) + 2);
}

/// Resistance of the l1 x l2 quasi-square.
inline double resistance(int l1, int l2, double U, double Delta) {
    if (!is_quasi_square(l1, l2))
        throw std::domain_error("resistance: (" + std::to_string(l1) + "," + std::to_string(l2) +
                                ") is not a quasi-square");
    const double grow = (2 * U - Delta) * l1 - U + 2 * Delta - U;
    const double cap = 2 * Delta - U;
    return grow < cap ? grow : cap;
}

inline double lambda_of_beta(double beta, LambdaChoice choice, double constant = 1.0) {
    if (choice == LambdaChoice::Constant) return constant;
    const double lb = beta > 0 ? std::log(beta) : 0.0;
    return std::sqrt(lb > 1.0 ? lb : 1.0);
}

inline void validate(const ModelParams& p, bool lattice_experiment = false) {
    detail::check_regime(p.U, p.Delta);
    if (!(p.beta > 0)) throw ParamError("beta must be > 0");
    const double bound = (2 * p.U - p.Delta) / 4;
    auto small = [&](const char* name, double v) {
        if (!(v > 0)) throw ParamError(std::string(name) + " must be > 0");
        if (!(v < bound))
            throw ParamError(std::string(name) + " must be below (2U - Delta)/4 = " +
                             std::to_string(bound) + " (got " + std::to_string(v) + ")");
    };
    small("alpha", p.alpha_or_default());
    small("d", p.d_or_default());
    small("kappa", p.kappa_or_default());
    small("delta", p.delta_or_default());
    if (lattice_experiment) {
        const double G = critical_energy(p.U, p.Delta);
        const double hi = G - (2 * p.Delta - p.U);
        if (!(p.Theta > p.Delta && p.Theta < hi)) {
            std::ostringstream os;
            os << "Theta must lie in (Delta, Gamma - (2 Delta - U)) = (" << p.Delta << ", " << hi
               << ") (got " << p.Theta << ")";
            throw ParamError(os.str());
        }
    }
}

inline DerivedParams derive(const ModelParams& p) {
    validate(p, false);
    DerivedParams out;
    const double U = p.U, Delta = p.Delta, beta = p.beta;
    out.eps = 2 * U - Delta;
    out.ell_c = critical_length(U, Delta);
    out.Gamma = critical_energy(U, Delta);
    out.gamma = (Delta - U) - (out.ell_c - 2) * out.eps;
    if (!(out.gamma > 0)) throw ParamError("gap exponent gamma must be > 0");
    out.theta = 2 * Delta - U - out.gamma;
    out.alpha = p.alpha_or_default();
    out.d = p.d_or_default();
    out.kappa = p.kappa_or_default();
    out.delta = p.delta_or_default();
    out.D = U + out.d;
    out.Delta_plus = Delta + out.alpha;
    out.S = (4 * Delta - out.theta) / 3 - out.alpha;
    out.r00 = 4 * Delta - 2 * U - p.Theta;
    out.a_beta = std::exp((p.Theta - 3 * Delta + 2 * U) * beta);
    out.lambda_beta = lambda_of_beta(beta, p.lambda_choice, p.lambda_constant);
    out.C_star = p.C_star ? *p.C_star : out.Gamma + 1;
    out.max_subcritical_volume = out.ell_c * (out.ell_c - 1) + 2;
    out.theta_window = {Delta, out.Gamma - (2 * Delta - U)};
    for (int l1 = 1; l1 <= out.ell_c + 2; ++l1) {
        out.r_table[{l1, l1}] = resistance(l1, l1, U, Delta);
        out.r_table[{l1, l1 + 1}] = resistance(l1, l1 + 1, U, Delta);
    }
    return out;
}

struct LatticeSide {
    int L = 0;
    double Theta_eff = 0;
};

/// L = round(exp(Theta beta / 2)), raised to min_side when smaller. Theta_eff = ln(L^2)/beta.
inline LatticeSide lattice_side(double Theta, double beta, int min_side = 0,
                                std::int64_t max_sites = std::int64_t{1} << 26) {
    if (!(beta > 0)) throw ParamError("beta must be > 0");
    const double raw = std::exp(Theta * beta / 2);
    if (!(raw * raw <= static_cast<double>(max_sites)))
        throw CapacityError("lattice of side " + std::to_string(raw) +
                            " exceeds the site cap " + std::to_string(max_sites));
    int L = static_cast<int>(std::lround(raw));
    if (L < min_side) L = min_side;
    if (L < 2) L = 2;
    if (static_cast<std::int64_t>(L) * L > max_sites)
        throw CapacityError("lattice side " + std::to_string(L) + " exceeds the site cap " +
                            std::to_string(max_sites));
    return {L, std::log(static_cast<double>(L) * L) / beta};
}

}  // namespace kawasaki

#endif
