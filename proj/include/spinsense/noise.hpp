// noise.hpp: quenched transverse-field disorder and the Gaussian-decay
// z-dephasing channel applied during the probe segment.

#pragma once

#include "spinsense/operator_algebra.hpp"
#include "spinsense/parallel.hpp"
#include "spinsense/spin_models.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace spinsense {

// ---------------------------- disorder -------------------------------------

enum class DisorderKind { Gaussian, Uniform };

inline const char* to_string(DisorderKind k) { return k == DisorderKind::Gaussian ? "gaussian" : "uniform"; }

struct DisorderSpec {
    DisorderKind kind = DisorderKind::Gaussian;
    double mean = 0.25;
    double sigma = 0.0;
    int realizations = 1;
    std::uint64_t seed = 0;

    // Uniform bounds from sigma = (b - a) / sqrt(12).
    double lower() const { return mean - sigma * std::sqrt(3.0); }
    double upper() const { return mean + sigma * std::sqrt(3.0); }

    void validate() const {
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("DisorderSpec: sigma must be >= 0");
        if (!std::isfinite(mean)) throw std::invalid_argument("DisorderSpec: mean must be finite");
        if (realizations < 1) throw std::invalid_argument("DisorderSpec: realizations must be >= 1");
    }
};

namespace detail {

// Independent engine per (seed, realization): draws never depend on the
// order in which realizations are evaluated.
inline std::mt19937_64 realization_engine(std::uint64_t seed, std::uint64_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    return std::mt19937_64(seq);
}

// Uniform in (0, 1], built from 53 random bits so the result is the same on
// every standard library.
inline double unit_open(std::mt19937_64& eng) {
    return (static_cast<double>(eng() >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

inline std::vector<double> sample_fields(const DisorderSpec& dspec, int n, int k) {
    dspec.validate();
    if (n < 1) throw std::invalid_argument("sample_fields: N must be >= 1");
    if (k < 0 || k >= dspec.realizations) throw std::out_of_range("sample_fields: realization index out of range");
    std::vector<double> h(static_cast<std::size_t>(n), dspec.mean);
    if (dspec.sigma == 0.0) return h;
    auto eng = detail::realization_engine(dspec.seed, static_cast<std::uint64_t>(k));
    for (auto& v : h) {
        // Two uniforms per site keep the stream layout identical for both kinds.
        const double u1 = detail::unit_open(eng);
        const double u2 = detail::unit_open(eng);
        if (dspec.kind == DisorderKind::Gaussian) {
            v = dspec.mean + dspec.sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        } else {
            v = dspec.lower() + (dspec.upper() - dspec.lower()) * (1.0 - u1);
        }
    }
    return h;
}

struct QuenchedEstimate {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std_error = 0.0;
    int used = 0;
    int excluded = 0;
    double drift = 0.0;  // change of the cumulative mean over the last batch
    bool converged = false;
    std::vector<double> batch_means;  // cumulative mean after each batch
};

inline constexpr int kQuenchedBatch = 50;
inline constexpr double kQuenchedDrift = 1e-6;

// Aggregates per-realization values in index order. nullopt marks an excluded
// realization (invalid derivative).
inline QuenchedEstimate aggregate_quenched(const std::vector<std::optional<double>>& values) {
    QuenchedEstimate q;
    // Sums are taken relative to the first valid value so a constant input
    // reproduces that value exactly.
    double ref = 0.0, sum = 0.0;
    for (const auto& v : values)
        if (v) {
            ref = *v;
            break;
        }
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k]) {
            sum += *values[k] - ref;
            ++q.used;
        } else {
            ++q.excluded;
        }
        const bool boundary = (k + 1) % kQuenchedBatch == 0 || k + 1 == values.size();
        if (boundary && q.used > 0) q.batch_means.push_back(ref + sum / q.used);
    }
    if (q.used == 0) return q;
    q.mean = ref + sum / q.used;
    if (q.used > 1) {
        // Two-pass variance keeps the constant-input case exactly zero.
        double ss = 0.0;
        for (const auto& v : values)
            if (v) ss += (*v - q.mean) * (*v - q.mean);
        q.std_error = std::sqrt(ss / (q.used - 1) / q.used);
    }
    if (q.batch_means.size() >= 2) {
        q.drift = std::abs(q.batch_means.back() - q.batch_means[q.batch_means.size() - 2]);
        q.converged = q.drift < kQuenchedDrift;
    } else {
        q.drift = q.std_error;
        q.converged = q.std_error < kQuenchedDrift;
    }
    return q;
}

inline QuenchedEstimate quenched_average(const std::function<std::optional<double>(int)>& evaluate,
                                         const DisorderSpec& dspec, int workers = 1) {
    dspec.validate();
    const auto values = parallel_map<std::optional<double>>(static_cast<std::size_t>(dspec.realizations), workers,
                                                            [&](std::size_t k) { return evaluate(static_cast<int>(k)); });
    return aggregate_quenched(values);
}

// ---------------------------- dephasing ------------------------------------

struct DephasingSpec {
    double t_dph = 1e4;
    double t_int_open = 1646.0;

    void validate() const {
        if (!(t_dph > 0.0)) throw std::invalid_argument("DephasingSpec: tDph must be > 0");
        if (!(t_int_open >= 0.0) || !std::isfinite(t_int_open))
            throw std::invalid_argument("DephasingSpec: tIntOpen must be >= 0");
    }
    // The closed form assumes tIntOpen well below tDph.
    bool zeno_warning() const { return t_int_open / t_dph > 0.5; }
};

// p' = (1 + exp(-(t/tDph)^2)) / 2.
inline double dephasing_keep_probability(double t, double t_dph) {
    if (!(t_dph > 0.0)) throw std::invalid_argument("dephasing_keep_probability: tDph must be > 0");
    if (std::isinf(t)) return 0.5;
    return 0.5 * (1.0 + std::exp(-(t / t_dph) * (t / t_dph)));
}

// M_n(rho) = p' rho + (1 - p') sigma^z_n rho sigma^z_n on one site.
inline DensityState dephase_site(const DensityState& rho, int site, double p_keep) {
    const int n = rho.site_count();
    if (site < 1 || site > n) throw std::out_of_range("dephase_site: site out of range");
    const auto mask = site_mask(n, site);
    const double off = 2.0 * p_keep - 1.0;
    CMatrix out = rho.matrix();
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r)
            if ((static_cast<std::uint64_t>(r ^ c) & mask) != 0) out(r, c) *= off;
    return DensityState(std::move(out), rho.trace_weight());
}

inline DensityState dephasing_channel(const DensityState& rho, double t, double t_dph) {
    const double p_keep = dephasing_keep_probability(t, t_dph);
    DensityState out = rho;
    for (int site = rho.site_count(); site >= 1; --site) out = dephase_site(out, site, p_keep);
    return out;
}

// Unitary evolution under H_int + H_probe for tIntOpen, then the channel.
inline DensityState noisy_probe_segment(const DensityState& rho, const ModelSpec& spec, double omega,
                                        const DephasingSpec& dspec) {
    dspec.validate();
    if (rho.site_count() != spec.n) throw std::invalid_argument("noisy_probe_segment: dimension mismatch");
    const OperatorMatrix h = build_interaction(spec) + build_probe(spec.n, omega);
    const CMatrix u = propagator(spectral(h), dspec.t_int_open).matrix();
    CMatrix evolved = u * rho.matrix() * u.adjoint();
    evolved = 0.5 * (evolved + evolved.adjoint()).eval();
    return dephasing_channel(DensityState(std::move(evolved), rho.trace_weight()), dspec.t_int_open, dspec.t_dph);
}

}  // namespace spinsense
