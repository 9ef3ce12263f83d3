// protocol.hpp: thermal preparation, post-selected edge measurement, free
// evolution, probe exposure and readout on dense density matrices.
//
// This is the reference implementation: everything is a full D x D matrix.
// kernel.hpp evaluates the same quantities fast for scans.

#pragma once

#include "spinsense/operator_algebra.hpp"
#include "spinsense/noise.hpp"
#include "spinsense/spin_models.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace spinsense {

enum class SelectMode { Raw, Conditional };

inline const char* to_string(SelectMode m) { return m == SelectMode::Raw ? "raw" : "conditional"; }

struct ProtocolConfig {
    double beta = 10.0;
    double theta = std::numbers::pi / 2;
    double phi = 0.0;
    double theta_p = std::numbers::pi / 2;
    double phi_p = std::numbers::pi / 2;
    double t_star = 0.0;
    double t_int = 1000.0 * std::numbers::pi;
    double omega = 1e-6;
    SelectMode mode = SelectMode::Conditional;
    int measure_site = 1;
    int traced_site = -1;  // -1 means N

    void validate() const {
        if (!(beta >= 0.0)) throw std::invalid_argument("ProtocolConfig: beta must be >= 0");
        if (!(t_star >= 0.0) || !std::isfinite(t_star)) throw std::invalid_argument("ProtocolConfig: tStar must be >= 0");
        if (!(t_int >= 0.0) || !std::isfinite(t_int)) throw std::invalid_argument("ProtocolConfig: tInt must be >= 0");
        if (!std::isfinite(omega)) throw std::invalid_argument("ProtocolConfig: omega must be finite");
        for (double th : {theta, theta_p})
            if (!(th >= 0.0 && th <= std::numbers::pi + 1e-12))
                throw std::invalid_argument("ProtocolConfig: theta must lie in [0, pi]");
        for (double ph : {phi, phi_p})
            if (!(ph >= 0.0 && ph < 2.0 * std::numbers::pi + 1e-12))
                throw std::invalid_argument("ProtocolConfig: phi must lie in [0, 2pi)");
    }
};

// Thrown when conditional post-selection has (numerically) zero probability.
class DegenerateBranch : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline constexpr double kMinBranchProbability = 1e-14;

// ---------------------------- measurement ----------------------------------

struct MeasurementSetting {
    double theta = 0.0;
    double phi = 0.0;
    Eigen::Matrix2cd p;       // |mu><mu|
    Eigen::Matrix2cd p_perp;  // |mu_perp><mu_perp|

    // Bloch vector n with P = (I + n . sigma)/2.
    Eigen::Vector3d bloch() const {
        return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
    }
};

inline MeasurementSetting projectors(double theta, double phi) {
    if (!std::isfinite(theta) || !std::isfinite(phi)) throw std::invalid_argument("projectors: angles must be finite");
    MeasurementSetting m;
    m.theta = theta;
    m.phi = phi;
    Eigen::Vector2cd mu(std::cos(theta / 2), std::polar(1.0, phi) * std::sin(theta / 2));
    Eigen::Vector2cd perp(-std::polar(1.0, -phi) * std::sin(theta / 2), std::cos(theta / 2));
    m.p = mu * mu.adjoint();
    m.p_perp = perp * perp.adjoint();
    return m;
}

// Embeds a one-qubit operator at `site` of an n-site chain.
inline OperatorMatrix embed_site(int n, int site, const Eigen::Matrix2cd& op) {
    if (site < 1 || site > n) throw std::out_of_range("embed_site: site out of range");
    const auto d = static_cast<Eigen::Index>(dimension_for(n));
    const auto mask = site_mask(n, site);
    CMatrix m = CMatrix::Zero(d, d);
    for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(d); ++b) {
        const int bit = (b & mask) ? 1 : 0;
        const auto flipped = b ^ mask;
        m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) = op(bit, bit);
        m(static_cast<Eigen::Index>(flipped), static_cast<Eigen::Index>(b)) = op(1 - bit, bit);
    }
    return OperatorMatrix(std::move(m));
}

struct MeasuredState {
    DensityState state;
    double probability = 0.0;
};

inline MeasuredState measure_site(const DensityState& rho, int site, const MeasurementSetting& setting,
                                  SelectMode mode) {
    const int n = rho.site_count();
    if (site < 1 || site > n) throw std::out_of_range("measure_site: site out of range");
    const CMatrix p = embed_site(n, site, setting.p).matrix();
    CMatrix out = p * rho.matrix() * p;
    out = 0.5 * (out + out.adjoint()).eval();
    const double prob = std::clamp(out.trace().real(), 0.0, 1.0);
    if (mode == SelectMode::Conditional) {
        if (prob < kMinBranchProbability) throw DegenerateBranch("measure_site: post-selection probability below 1e-14");
        out /= out.trace().real();
        return {DensityState(std::move(out), 1.0), prob};
    }
    const double w = out.trace().real();
    return {DensityState(std::move(out), std::clamp(w, 0.0, 1.0)), prob};
}

// ---------------------------- thermal state --------------------------------

inline DensityState thermal_state(const SpectralDecomposition& sd, double beta) {
    if (!(beta >= 0.0)) throw std::invalid_argument("thermal_state: beta must be >= 0");
    const double e0 = sd.eigenvalues.minCoeff();
    RVector w = (-beta * (sd.eigenvalues.array() - e0)).exp().matrix();
    w /= w.sum();
    CMatrix rho = sd.basis * w.cast<Complex>().asDiagonal() * sd.basis.adjoint();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    const double tr = rho.trace().real();
    rho /= tr;
    return DensityState(std::move(rho), 1.0);
}

// ---------------------------- protocol -------------------------------------

namespace detail {

inline int traced_site(const ModelSpec& spec, const ProtocolConfig& cfg) {
    return cfg.traced_site < 0 ? spec.n : cfg.traced_site;
}

inline DensityState evolve(const DensityState& rho, const OperatorMatrix& u) {
    CMatrix out = u.matrix() * rho.matrix() * u.matrix().adjoint();
    out = 0.5 * (out + out.adjoint()).eval();
    return DensityState(std::move(out), rho.trace_weight());
}

}  // namespace detail

struct PreparedState {
    DensityState state;        // rho(t*) (trace = first-click probability in raw mode)
    double click_probability;  // Tr(P rho_th)
};

inline PreparedState prepare_sensor_state(const ModelSpec& spec, const ProtocolConfig& cfg) {
    spec.validate();
    cfg.validate();
    const auto sd = spectral(build_xyz(spec));
    const auto rho_th = thermal_state(sd, cfg.beta);
    auto measured = measure_site(rho_th, cfg.measure_site, projectors(cfg.theta, cfg.phi), cfg.mode);
    auto state = detail::evolve(measured.state, propagator(sd, cfg.t_star));
    return {std::move(state), measured.probability};
}

// Projector onto the (N-1)-site GHZ state (|0..0> + |1..1>)/sqrt(2).
inline CMatrix ghz_projector(int n_sites) {
    const auto d = static_cast<Eigen::Index>(dimension_for(n_sites));
    CVector ghz = CVector::Zero(d);
    ghz(0) = ghz(d - 1) = 1.0 / std::sqrt(2.0);
    return ghz * ghz.adjoint();
}

// <GHZ| Tr_traced(rho(t*)) |GHZ>; unnormalized in raw mode.
inline double ghz_fidelity(const ModelSpec& spec, const ProtocolConfig& cfg) {
    if (spec.n < 3) throw std::invalid_argument("ghz_fidelity: N must be >= 3");
    const auto prepared = prepare_sensor_state(spec, cfg);
    const auto reduced = partial_trace_site(prepared.state, detail::traced_site(spec, cfg));
    const Complex f = (ghz_projector(spec.n - 1).cwiseProduct(reduced.matrix().transpose())).sum();
    return f.real();
}

// (1/2N) sum_i Tr(rho sigma^z_i), for normalized states.
inline double magnetization_density(const DensityState& rho, int n_sites) {
    if (rho.site_count() != n_sites) throw std::invalid_argument("magnetization_density: dimension mismatch");
    if (std::abs(rho.trace_weight() - 1.0) > 1e-12)
        throw std::invalid_argument("magnetization_density: state must be normalized");
    const RVector m = magnetization_diagonal(n_sites);
    const double v = (rho.matrix().diagonal().real().array() * m.array()).sum() / n_sites;
    return std::clamp(v, -0.5, 0.5);
}

// ---------------------------- uncertainty ----------------------------------

inline double sql_limit(int n, double t_int) {
    if (n < 1 || !(t_int > 0.0)) throw std::invalid_argument("sql_limit: need N >= 1 and tInt > 0");
    return 1.0 / std::sqrt(n * t_int);
}

inline double hl_limit(int n, double t_int) {
    if (n < 1 || !(t_int > 0.0)) throw std::invalid_argument("hl_limit: need N >= 1 and tInt > 0");
    return 1.0 / (n * std::sqrt(t_int));
}

struct SensingOutcome {
    double p = 0.0;
    double dp_domega = 0.0;
    double scaled_uncertainty = std::numeric_limits<double>::infinity();
    double sql = 0.0;
    double hl = 0.0;
    bool beats_sql = false;
    bool derivative_valid = false;
    bool step_stable = true;  // half-step derivative agrees to 0.1%
};

inline double derivative_step(double omega) { return std::max(1e-2 * std::abs(omega), 1e-9); }

// Assembles an outcome from p(omega) evaluated at omega, omega +- eps and omega +- eps/2.
template <class ProbabilityFn>
SensingOutcome outcome_from(ProbabilityFn&& p_of, double omega, double t_int, int n_sites) {
    SensingOutcome out;
    out.sql = sql_limit(n_sites, t_int);
    out.hl = hl_limit(n_sites, t_int);
    const double eps = derivative_step(omega);
    out.p = std::clamp(p_of(omega), 0.0, 1.0);
    out.dp_domega = (p_of(omega + eps) - p_of(omega - eps)) / (2.0 * eps);
    // Below the larger of 1e-14 t_int and the roundoff level of the difference
    // quotient the slope is indistinguishable from zero.
    const double floor = std::max(1e-14 * t_int, 1e2 * std::numeric_limits<double>::epsilon() / eps);
    out.derivative_valid = std::abs(out.dp_domega) >= floor && std::isfinite(out.dp_domega);
    if (!out.derivative_valid) return out;
    out.scaled_uncertainty = std::sqrt(out.p * (1.0 - out.p) * t_int) / std::abs(out.dp_domega);
    const double dp_half = (p_of(omega + eps / 2) - p_of(omega - eps / 2)) / eps;
    if (std::abs(dp_half) > 0.0) {
        const double u_half = std::sqrt(out.p * (1.0 - out.p) * t_int) / std::abs(dp_half);
        out.step_stable = std::abs(u_half - out.scaled_uncertainty) <= 1e-3 * out.scaled_uncertainty;
    } else {
        out.step_stable = false;
    }
    out.beats_sql = out.scaled_uncertainty < out.sql;
    return out;
}

namespace detail {

inline DensityState probe_segment(const DensityState& rho, const ModelSpec& spec, double omega, double t_int,
                                  const DephasingSpec* noise) {
    const OperatorMatrix h = build_interaction(spec) + build_probe(spec.n, omega);
    const auto u = propagator(spectral(h), t_int);
    auto out = evolve(rho, u);
    if (noise) out = dephasing_channel(out, t_int, noise->t_dph);
    return out;
}

}  // namespace detail

// p = Tr(P' U_total P rho_th P U_total^dagger), U_total = U_t* U_probe U_t*.
// With a dephasing spec the probe segment lasts tIntOpen and is followed by the channel.
inline double readout_probability(const ModelSpec& spec, const ProtocolConfig& cfg,
                                  const DephasingSpec* noise = nullptr) {
    spec.validate();
    cfg.validate();
    const auto sd = spectral(build_xyz(spec));
    const auto u = propagator(sd, cfg.t_star);
    const auto rho_th = thermal_state(sd, cfg.beta);
    auto measured = measure_site(rho_th, cfg.measure_site, projectors(cfg.theta, cfg.phi), cfg.mode);
    auto rho = detail::evolve(measured.state, u);
    const double t_probe = noise ? noise->t_int_open : cfg.t_int;
    rho = detail::probe_segment(rho, spec, cfg.omega, t_probe, noise);
    rho = detail::evolve(rho, u);
    const CMatrix q = embed_site(spec.n, cfg.measure_site, projectors(cfg.theta_p, cfg.phi_p).p).matrix();
    const double p = (q.cwiseProduct(rho.matrix().transpose())).sum().real();
    return std::clamp(p, 0.0, 1.0);
}

inline SensingOutcome uncertainty(const ModelSpec& spec, const ProtocolConfig& cfg,
                                  const DephasingSpec* noise = nullptr) {
    const double t_probe = noise ? noise->t_int_open : cfg.t_int;
    if (!(t_probe > 0.0)) throw std::invalid_argument("uncertainty: tInt must be > 0");
    auto p_of = [&](double w) {
        ProtocolConfig c = cfg;
        c.omega = w;
        return readout_probability(spec, c, noise);
    };
    return outcome_from(p_of, cfg.omega, t_probe, spec.n);
}

}  // namespace spinsense
