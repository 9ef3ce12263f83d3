// kernel.hpp: fast evaluation of the sensing protocol for scans over t*,
// omega, probe time and dephasing strength.
//
// Every sensor Hamiltonian here commutes with the global flip G = prod sigma^x,
// so it is diagonalized in the two parity sectors (dimension D/2 each). Per t*
// the engine forms, in the computational basis,
//     X = U P rho_th P U^dagger      (prepared state)
//     Y = U^dagger Q U               (readout projector pulled back)
// and then p(omega, tau) = Tr(Y V X V^dagger) with V the probe propagator. In a
// basis where V is diagonal this is sum_ab conj(Y_ab) X_ab f_a conj(f_b), an
// O(D^2) evaluation reused for every omega, tau and dephasing strength.

#pragma once

#include "spinsense/noise.hpp"
#include "spinsense/operator_algebra.hpp"
#include "spinsense/protocol.hpp"
#include "spinsense/spin_models.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace spinsense {

struct EngineOptions {
    double branch_cutoff = 1e-12;  // Gibbs weights below this are dropped
    double bloch_snap = 1e-14;     // Bloch components below this count as zero
};

// Fast-path protocol evaluator for one (model, beta, measurement pair, mode).
class SensorEngine {
public:
    // Basis-dependent state at one t*, in the computational basis.
    struct Slice {
        double t_star = 0.0;
        CMatrix x;
        CMatrix y;
    };

    SensorEngine(const ModelSpec& spec, double beta, const MeasurementSetting& first,
                 const MeasurementSetting& readout, SelectMode mode, EngineOptions opts = {})
        : spec_(spec), beta_(beta), mode_(mode), opts_(opts) {
        spec_.validate();
        if (!(beta >= 0.0)) throw std::invalid_argument("SensorEngine: beta must be >= 0");
        n_ = spec_.n;
        d_ = static_cast<Eigen::Index>(dimension_for(n_));
        h_ = d_ / 2;
        diagonalize();
        first_ = snapped(first.bloch());
        readout_ = snapped(readout.bloch());
        build_site_paulis();
        build_prepared();
        build_readout();
        build_probe_frame();
    }

    SensorEngine(const ModelSpec& spec, const ProtocolConfig& cfg, EngineOptions opts = {})
        : SensorEngine(spec, cfg.beta, projectors(cfg.theta, cfg.phi), projectors(cfg.theta_p, cfg.phi_p), cfg.mode,
                       opts) {
        if (cfg.measure_site != 1 || (cfg.traced_site != -1 && cfg.traced_site != spec.n))
            throw std::invalid_argument("SensorEngine: only measure_site = 1 and traced_site = N are supported");
    }

    int site_count() const { return n_; }
    SelectMode mode() const { return mode_; }
    const ModelSpec& spec() const { return spec_; }
    // Tr(P rho_th), independent of t*.
    double click_probability() const { return click_; }
    // Eigenvalues of the sensor Hamiltonian, ascending.
    RVector eigenvalues() const {
        RVector e(d_);
        e << lam_[0], lam_[1];
        std::sort(e.data(), e.data() + e.size());
        return e;
    }
    // Number of Gibbs branches kept after truncation.
    int kept_branches() const { return kept_; }

    // ---------------- cheap O(D^2) observables of rho(t*) ----------------

    // <GHZ| Tr_N rho(t*) |GHZ>; unnormalized in raw mode.
    double fidelity(double t) const {
        const CVector ph = phases(t, +1);
        double f = 0.0;
        for (const auto& g : ghz_) {
            const CVector h = ph.cwiseProduct(g.cast<Complex>());
            f += (h.adjoint() * (rho1_ * h))(0).real();
        }
        return f;
    }

    // Magnetization density of the protocol state prepared from the spin-down
    // half of the thermal ensemble (the symmetric ensemble gives exactly zero).
    double magnetization(double t) const {
        std::call_once(mag_once_, [this] { build_magnetization_kernel(); });
        const CVector ph = phases(t, -1);
        const Complex v = (ph.transpose() * (mag_kernel_ * ph.conjugate()))(0);
        return std::clamp(v.real() / n_, -0.5, 0.5);
    }

    // ---------------- per-t* slices ----------------

    Slice slice(double t) const {
        if (!std::isfinite(t) || t < 0.0) throw std::invalid_argument("SensorEngine::slice: t* must be finite and >= 0");
        Slice s;
        s.t_star = t;
        const auto xs = to_sector(rho1_blocks_, t, -1);
        const auto ys = to_sector(read_blocks_, t, +1);
        s.x = to_computational(xs, 0.0);
        s.y = to_computational(ys, 0.5);
        return s;
    }

    // Readout probability at probe frequency omega and exposure tau, with
    // optional dephasing time (infinity = noiseless).
    double probability(const Slice& s, double omega, double tau,
                       double t_dph = std::numeric_limits<double>::infinity()) const {
        const auto k = kernel(s, omega, tau, t_dph);
        return std::clamp(evaluate(k, omega, tau), 0.0, 1.0);
    }

    SensingOutcome outcome(const Slice& s, double omega, double tau,
                           double t_dph = std::numeric_limits<double>::infinity()) const {
        if (!(tau > 0.0)) throw std::invalid_argument("SensorEngine::outcome: probe time must be > 0");
        if (frame_kind_ == FrameKind::PerOmega) {
            auto p_of = [&](double w) { return evaluate(kernel(s, w, tau, t_dph), w, tau); };
            return outcome_from(p_of, omega, tau, n_);
        }
        const auto k = kernel(s, omega, tau, t_dph);
        auto p_of = [&](double w) { return evaluate(k, w, tau); };
        return outcome_from(p_of, omega, tau, n_);
    }

    // Convenience: full evaluation at one t*.
    SensingOutcome outcome_at(double t, double omega, double tau,
                              double t_dph = std::numeric_limits<double>::infinity()) const {
        return outcome(slice(t), omega, tau, t_dph);
    }

private:
    enum class FrameKind { Computational, MagnetizationBlocks, PerOmega };

    struct Block {
        RMatrix re, im;
        bool present = false;
    };
    using BlockGrid = std::array<std::array<Block, 2>, 2>;  // [row sector][col sector], 0 = even

    struct Frame {
        RMatrix w;       // columns: probe eigenvectors in computational basis
        RVector energy;  // eigenvalues of H_int + omega M
    };

    // ---------------- setup ----------------

    Eigen::Vector3d snapped(Eigen::Vector3d v) const {
        for (int i = 0; i < 3; ++i)
            if (std::abs(v(i)) < opts_.bloch_snap) v(i) = 0.0;
        return v;
    }

    void diagonalize() {
        const RMatrix h = sensor_hamiltonian_real(spec_);
        // H_s(a,b) = H(a,b) + s H(a, complement b) for a, b with site-1 bit 0.
        const RMatrix tl = h.topLeftCorner(h_, h_);
        const RMatrix tr = h.topRightCorner(h_, h_).rowwise().reverse();
        for (int s = 0; s < 2; ++s) {
            RMatrix hs = s == 0 ? RMatrix(tl + tr) : RMatrix(tl - tr);
            hs = 0.5 * (hs + hs.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<RMatrix> es(hs);
            if (es.info() != Eigen::Success) throw std::runtime_error("SensorEngine: eigensolver failed");
            lam_[s] = es.eigenvalues();
            u_[s] = es.eigenvectors();
        }
        const double e0 = std::min(lam_[0].minCoeff(), lam_[1].minCoeff());
        double z = 0.0;
        for (int s = 0; s < 2; ++s) {
            w_[s] = (-beta_ * (lam_[s].array() - e0)).exp().matrix();
            z += w_[s].sum();
        }
        kept_ = 0;
        for (int s = 0; s < 2; ++s) {
            w_[s] /= z;
            for (Eigen::Index i = 0; i < h_; ++i) {
                if (w_[s](i) < opts_.branch_cutoff) w_[s](i) = 0.0;
                else ++kept_;
            }
        }
        const double kept_sum = w_[0].sum() + w_[1].sum();
        for (int s = 0; s < 2; ++s) w_[s] /= kept_sum;
        lam_all_.resize(d_);
        lam_all_ << lam_[0], lam_[1];
    }

    // Full eigenvector matrix in the computational basis; column i < D/2 is
    // even sector, i >= D/2 odd.
    RMatrix full_basis() const {
        RMatrix v = RMatrix::Zero(d_, d_);
        const double r = 1.0 / std::sqrt(2.0);
        for (int s = 0; s < 2; ++s) {
            const double sign = s == 0 ? 1.0 : -1.0;
            v.block(0, s * h_, h_, h_) = r * u_[s];
            v.block(h_, s * h_, h_, h_) = (sign * r) * u_[s].colwise().reverse();
        }
        return v;
    }

    // sigma^{x,y,z} on site 1 in the sector eigenbasis (full D x D, complex).
    void build_site_paulis() {
        const Eigen::Index rest = h_ - 1;
        // Row permutation r -> r XOR rest applied to u.
        std::array<RMatrix, 2> up;
        for (int s = 0; s < 2; ++s) {
            up[s].resize(h_, h_);
            for (Eigen::Index r = 0; r < h_; ++r) up[s].row(r) = u_[s].row(r ^ rest);
        }
        sx_ = CMatrix::Zero(d_, d_);
        sy_ = CMatrix::Zero(d_, d_);
        sz_ = CMatrix::Zero(d_, d_);
        for (int s = 0; s < 2; ++s) {
            const double sign = s == 0 ? 1.0 : -1.0;
            const int o = 1 - s;
            // sigma^x |l,s> = s |l^rest, s>
            sx_.block(s * h_, s * h_, h_, h_) = (sign * (u_[s].transpose() * up[s])).cast<Complex>();
            // sigma^z |l,s> = |l, -s>
            sz_.block(o * h_, s * h_, h_, h_) = (u_[o].transpose() * u_[s]).cast<Complex>();
            // sigma^y |l,s> = -i s |l^rest, -s>
            sy_.block(o * h_, s * h_, h_, h_) = Complex(0.0, -sign) * (u_[o].transpose() * up[s]).cast<Complex>();
        }
    }

    CMatrix bloch_operator(const Eigen::Vector3d& n) const {
        CMatrix m = CMatrix::Zero(d_, d_);
        if (n(0) != 0.0) m += n(0) * sx_;
        if (n(1) != 0.0) m += n(1) * sy_;
        if (n(2) != 0.0) m += n(2) * sz_;
        return m;
    }

    BlockGrid split(const CMatrix& m) const {
        BlockGrid g;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                auto blk = m.block(r * h_, c * h_, h_, h_);
                if (max_abs(blk) == 0.0) continue;
                g[r][c].re = blk.real();
                g[r][c].im = blk.imag();
                g[r][c].present = true;
            }
        return g;
    }

    void build_prepared() {
        const CMatrix p = 0.5 * (CMatrix::Identity(d_, d_) + bloch_operator(first_));
        RVector w(d_);
        w << w_[0], w_[1];
        const CMatrix pw = p * w.cast<Complex>().asDiagonal();
        rho1_ = pw * p;
        rho1_ = 0.5 * (rho1_ + rho1_.adjoint()).eval();
        click_ = rho1_.trace().real();
        if (mode_ == SelectMode::Conditional) {
            if (click_ < kMinBranchProbability)
                throw DegenerateBranch("SensorEngine: post-selection probability below 1e-14");
            rho1_ /= click_;
        }
        rho1_blocks_ = split(rho1_);

        // GHZ vectors of the first N-1 sites (site N free) in the eigenbasis.
        const RMatrix v = full_basis();
        for (int last = 0; last < 2; ++last) {
            const Eigen::Index zeros = last, ones = (d_ - 2) + last;
            ghz_[static_cast<std::size_t>(last)] = (v.row(zeros) + v.row(ones)).transpose() / std::sqrt(2.0);
        }

    }

    // Spin-down half of the thermal ensemble: configurations with more down
    // than up spins; balanced configurations enter with amplitude 1/2.
    void build_magnetization_kernel() const {
        const RMatrix v = full_basis();
        RVector pi(d_);
        for (Eigen::Index b = 0; b < d_; ++b) {
            const int down = std::popcount(static_cast<std::uint64_t>(b));
            pi(b) = 2 * down > n_ ? 1.0 : (2 * down == n_ ? 0.5 : 0.0);
        }
        RVector w(d_);
        w << w_[0], w_[1];
        const RMatrix b = v.transpose() * pi.asDiagonal() * v;  // V^T Pi V
        const RMatrix rho_b = b * w.asDiagonal() * b;
        const CMatrix p = 0.5 * (CMatrix::Identity(d_, d_) + bloch_operator(first_));
        CMatrix r1 = p * rho_b.cast<Complex>() * p;
        r1 /= r1.trace().real();
        const RVector m = magnetization_diagonal(n_);
        const RMatrix g = v.transpose() * m.asDiagonal() * v;
        mag_kernel_ = r1.cwiseProduct(g.transpose().cast<Complex>());
    }

    void build_readout() {
        // Q = I/2 + (n . sigma)/2; the identity part is added in to_computational.
        const CMatrix s = 0.5 * bloch_operator(readout_);
        read_blocks_ = split(s);
    }

    void build_probe_frame() {
        e_int_ = RMatrix(detail::interaction_real(spec_)).diagonal();
        mvec_ = magnetization_diagonal(n_);
        if (spec_.is_ising()) {
            frame_kind_ = FrameKind::Computational;
            return;
        }
        if (spec_.jx == spec_.jy) {
            // H_int conserves total magnetization: diagonalize per sector.
            frame_kind_ = FrameKind::MagnetizationBlocks;
            const RMatrix hint = detail::interaction_real(spec_);
            order_.clear();
            seg_.clear();
            for (int k = 0; k <= n_; ++k) {
                const Eigen::Index start = static_cast<Eigen::Index>(order_.size());
                for (Eigen::Index b = 0; b < d_; ++b)
                    if (std::popcount(static_cast<std::uint64_t>(b)) == k) order_.push_back(b);
                seg_.push_back({start, static_cast<Eigen::Index>(order_.size()) - start});
            }
            frame_energy_.resize(d_);
            frame_m_.resize(d_);
            wblocks_.clear();
            for (const auto& [start, len] : seg_) {
                RMatrix hb(len, len);
                for (Eigen::Index i = 0; i < len; ++i)
                    for (Eigen::Index j = 0; j < len; ++j) hb(i, j) = hint(order_[start + i], order_[start + j]);
                Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (hb + hb.transpose()));
                frame_energy_.segment(start, len) = es.eigenvalues();
                frame_m_.segment(start, len).setConstant(mvec_(order_[start]));
                wblocks_.push_back(es.eigenvectors());
            }
            return;
        }
        frame_kind_ = FrameKind::PerOmega;
    }

    const Frame& frame_for(double omega) const {
        std::lock_guard lock(frame_mu_);
        auto it = frames_.find(omega);
        if (it != frames_.end()) return *it->second;
        RMatrix h = detail::interaction_real(spec_);
        h.diagonal() += omega * mvec_;
        Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (h + h.transpose()));
        auto f = std::make_unique<Frame>();
        f->w = es.eigenvectors();
        f->energy = es.eigenvalues();
        return *frames_.emplace(omega, std::move(f)).first->second;
    }

    // ---------------- per-t* work ----------------

    // e^{sign * i lambda t} for all eigenvalues.
    CVector phases(double t, int sign) const {
        return (lam_all_ * (sign * t)).unaryExpr([](double x) { return std::polar(1.0, x); });
    }

    // Evolves an eigenbasis operator by the phases and returns sector-basis
    // blocks u_r M u_c^T. sign = -1: U M U^dagger; sign = +1: U^dagger M U.
    std::array<std::array<CMatrix, 2>, 2> to_sector(const BlockGrid& g, double t, int sign) const {
        std::array<std::array<CMatrix, 2>, 2> out;
        std::array<RVector, 2> c, s;
        for (int k = 0; k < 2; ++k) {
            c[k] = (lam_[k] * t).array().cos().matrix();
            s[k] = (sign * (lam_[k] * t).array().sin()).matrix();
        }
        RMatrix ar(h_, h_), ai(h_, h_), tmp(h_, h_), rr(h_, h_), ri(h_, h_);
        for (int r = 0; r < 2; ++r)
            for (int col = r; col < 2; ++col) {
                const Block& b = g[r][col];
                if (!b.present) continue;
                // phase(i,j) = e^{i sign lam_i t} e^{-i sign lam_j t}
                for (Eigen::Index j = 0; j < h_; ++j) {
                    const double cj = c[col](j), sj = s[col](j);
                    for (Eigen::Index i = 0; i < h_; ++i) {
                        const double pr = c[r](i) * cj + s[r](i) * sj;
                        const double pi = s[r](i) * cj - c[r](i) * sj;
                        const double mr = b.re(i, j), mi = b.im(i, j);
                        ar(i, j) = mr * pr - mi * pi;
                        ai(i, j) = mr * pi + mi * pr;
                    }
                }
                tmp.noalias() = u_[r] * ar;
                rr.noalias() = tmp * u_[col].transpose();
                tmp.noalias() = u_[r] * ai;
                ri.noalias() = tmp * u_[col].transpose();
                CMatrix blk(h_, h_);
                blk.real() = rr;
                blk.imag() = ri;
                if (r != col) out[col][r] = blk.adjoint();
                out[r][col] = std::move(blk);
            }
        return out;
    }

    // Sector blocks -> computational basis, plus `diag` on the diagonal.
    CMatrix to_computational(const std::array<std::array<CMatrix, 2>, 2>& s, double diag) const {
        CMatrix m(d_, d_);
        const Eigen::Index top = d_ - 1;
        auto get = [&](int r, int c, Eigen::Index a, Eigen::Index b) -> Complex {
            return s[r][c].size() ? s[r][c](a, b) : Complex(0.0, 0.0);
        };
        for (Eigen::Index lb = 0; lb < h_; ++lb)
            for (Eigen::Index la = 0; la < h_; ++la) {
                const Complex pp = get(0, 0, la, lb), pm = get(0, 1, la, lb);
                const Complex mp = get(1, 0, la, lb), mm = get(1, 1, la, lb);
                // |l> = (|l,+> + |l,->)/sqrt2, |~l> = (|l,+> - |l,->)/sqrt2
                m(la, lb) = 0.5 * (pp + pm + mp + mm);
                m(la, top - lb) = 0.5 * (pp - pm + mp - mm);
                m(top - la, lb) = 0.5 * (pp + pm - mp - mm);
                m(top - la, top - lb) = 0.5 * (pp - pm - mp + mm);
            }
        if (diag != 0.0) m.diagonal().array() += diag;
        return m;
    }

    // ---------------- probe evaluation ----------------

    struct Kernel {
        CMatrix k;       // conj(Y') o X' in the probe frame
        RVector energy;  // frame energies excluding the omega term
        RVector m;       // magnetization of each frame state
        bool includes_omega = false;
    };

    static void dephase(CMatrix& y, int n, double tau, double t_dph) {
        if (!std::isfinite(t_dph)) return;
        const double gamma = std::exp(-(tau / t_dph) * (tau / t_dph));
        std::vector<double> pow_g(static_cast<std::size_t>(n) + 1, 1.0);
        for (int k = 1; k <= n; ++k) pow_g[static_cast<std::size_t>(k)] = pow_g[static_cast<std::size_t>(k - 1)] * gamma;
        for (Eigen::Index b = 0; b < y.cols(); ++b)
            for (Eigen::Index a = 0; a < y.rows(); ++a)
                y(a, b) *= pow_g[static_cast<std::size_t>(std::popcount(static_cast<std::uint64_t>(a ^ b)))];
    }

    static CMatrix transform(const RMatrix& w, const CMatrix& x) {
        RMatrix re = w.transpose() * x.real() * w;
        RMatrix im = w.transpose() * x.imag() * w;
        CMatrix out(x.rows(), x.cols());
        out.real() = re;
        out.imag() = im;
        return out;
    }

    CMatrix to_blocks_frame(const CMatrix& x) const {
        CMatrix p(d_, d_);
        for (Eigen::Index j = 0; j < d_; ++j)
            for (Eigen::Index i = 0; i < d_; ++i) p(i, j) = x(order_[i], order_[j]);
        for (std::size_t k = 0; k < seg_.size(); ++k) {
            const auto [start, len] = seg_[k];
            const RMatrix& w = wblocks_[k];
            CMatrix cols = p.middleCols(start, len) * w;
            p.middleCols(start, len) = cols;
            CMatrix rows = w.transpose() * p.middleRows(start, len);
            p.middleRows(start, len) = rows;
        }
        return p;
    }

    // The dephasing channel is self-adjoint, so it can act on Y instead of
    // on the evolved state.
    Kernel kernel(const Slice& s, double omega, double tau, double t_dph) const {
        Kernel k;
        CMatrix y = s.y;
        dephase(y, n_, tau, t_dph);
        switch (frame_kind_) {
            case FrameKind::Computational:
                k.k = y.conjugate().cwiseProduct(s.x);
                k.energy = e_int_;
                k.m = mvec_;
                break;
            case FrameKind::MagnetizationBlocks:
                k.k = to_blocks_frame(y).conjugate().cwiseProduct(to_blocks_frame(s.x));
                k.energy = frame_energy_;
                k.m = frame_m_;
                break;
            case FrameKind::PerOmega: {
                const Frame& f = frame_for(omega);
                k.k = transform(f.w, y).conjugate().cwiseProduct(transform(f.w, s.x));
                k.energy = f.energy;
                k.m = RVector::Zero(d_);
                k.includes_omega = true;
                break;
            }
        }
        return k;
    }

    double evaluate(const Kernel& k, double omega, double tau) const {
        const double w = k.includes_omega ? 0.0 : omega;
        const CVector f = (-(k.energy + w * k.m) * tau).unaryExpr([](double x) { return std::polar(1.0, x); });
        const CVector v = k.k * f.conjugate();
        return (f.transpose() * v)(0).real();
    }

    ModelSpec spec_;
    double beta_;
    SelectMode mode_;
    EngineOptions opts_;
    int n_ = 0;
    Eigen::Index d_ = 0, h_ = 0;

    std::array<RVector, 2> lam_, w_;
    std::array<RMatrix, 2> u_;
    RVector lam_all_;
    int kept_ = 0;

    Eigen::Vector3d first_, readout_;
    CMatrix sx_, sy_, sz_;
    CMatrix rho1_;
    BlockGrid rho1_blocks_, read_blocks_;
    double click_ = 0.0;
    std::array<RVector, 2> ghz_;
    mutable std::once_flag mag_once_;
    mutable CMatrix mag_kernel_;

    FrameKind frame_kind_ = FrameKind::Computational;
    RVector e_int_, mvec_;
    std::vector<Eigen::Index> order_;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> seg_;
    std::vector<RMatrix> wblocks_;
    RVector frame_energy_, frame_m_;
    mutable std::mutex frame_mu_;
    mutable std::map<double, std::unique_ptr<Frame>> frames_;
};

}  // namespace spinsense
