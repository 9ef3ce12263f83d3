// oracles.hpp: brute-force reference computations that share no code with the
// library builders (explicit Kronecker products, Taylor-series exponentials).

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

namespace oracle {

using C = std::complex<double>;
using M = Eigen::MatrixXcd;

inline M sx() { return (M(2, 2) << 0, 1, 1, 0).finished(); }
inline M sy() { return (M(2, 2) << 0, C(0, -1), C(0, 1), 0).finished(); }
inline M sz() { return (M(2, 2) << 1, 0, 0, -1).finished(); }
inline M id2() { return M::Identity(2, 2); }

inline M kron(const M& a, const M& b) {
    M out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Single-site operator op on site (1-based, site 1 leftmost) of an n-site chain.
inline M on_site(int n, int site, const M& op) {
    M out = M::Identity(1, 1);
    for (int s = 1; s <= n; ++s) out = kron(out, s == site ? op : id2());
    return out;
}

struct Model {
    int n = 2;
    double alpha = 1.0;
    int coord_n = 1;
    double jx = 0.0, jy = 0.0, jz = 1.0;
    std::vector<double> h;
    bool full_chain_kac = false;
};

inline M interaction(const Model& m) {
    const int lim = m.full_chain_kac ? m.n - 1 : m.coord_n;
    double kac = 0.0;
    for (int d = 1; d <= lim; ++d) kac += std::pow(d, -m.alpha);
    const auto dim = Eigen::Index(1) << m.n;
    M h = M::Zero(dim, dim);
    for (int i = 1; i <= m.n; ++i)
        for (int j = i + 1; j <= m.n; ++j) {
            if (j - i > m.coord_n) continue;
            const double jij = std::pow(j - i, -m.alpha) / kac;
            h -= (jij / 4.0) * (m.jx * on_site(m.n, i, sx()) * on_site(m.n, j, sx()) +
                                m.jy * on_site(m.n, i, sy()) * on_site(m.n, j, sy()) +
                                m.jz * on_site(m.n, i, sz()) * on_site(m.n, j, sz()));
        }
    return h;
}

inline M hamiltonian(const Model& m) {
    M h = interaction(m);
    for (int i = 1; i <= m.n; ++i) h += (m.h[static_cast<std::size_t>(i - 1)] / 2.0) * on_site(m.n, i, sx());
    return h;
}

inline M magnetization(int n) {
    const auto dim = Eigen::Index(1) << n;
    M out = M::Zero(dim, dim);
    for (int i = 1; i <= n; ++i) out += 0.5 * on_site(n, i, sz());
    return out;
}

// exp(a) by scaling and squaring of a truncated Taylor series.
inline M expm(const M& a) {
    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::pow(2.0, s) > 0.25) ++s;
    const M x = a / std::pow(2.0, s);
    M term = M::Identity(a.rows(), a.cols());
    M sum = term;
    for (int k = 1; k <= 30; ++k) {
        term = (term * x / static_cast<double>(k)).eval();
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = (sum * sum).eval();
    return sum;
}

inline M projector(double theta, double phi) {
    Eigen::Vector2cd v(std::cos(theta / 2), std::exp(C(0, phi)) * std::sin(theta / 2));
    return v * v.adjoint();
}

struct Protocol {
    double beta = 10.0;
    double theta = std::numbers::pi / 2, phi = 0.0;
    double theta_p = std::numbers::pi / 2, phi_p = std::numbers::pi / 2;
    double t_star = 0.0;
    double tau = 1000.0 * std::numbers::pi;
    double omega = 1e-6;
    bool conditional = true;
    std::optional<double> t_dph;  // dephasing after the probe segment
};

inline M gibbs(const M& h, double beta) {
    const Eigen::SelfAdjointEigenSolver<M> es(h);
    const double e0 = es.eigenvalues().minCoeff();
    M r = es.eigenvectors() *
          (-beta * (es.eigenvalues().array() - e0)).exp().matrix().cast<C>().asDiagonal() *
          es.eigenvectors().adjoint();
    return r / r.trace();
}

inline M dephase_all(const M& rho, int n, double t, double t_dph) {
    const double keep = 0.5 * (1.0 + std::exp(-(t / t_dph) * (t / t_dph)));
    M out = rho;
    for (int i = 1; i <= n; ++i) {
        const M z = on_site(n, i, sz());
        out = (keep * out + (1.0 - keep) * z * out * z).eval();
    }
    return out;
}

// Monolithic protocol: Gibbs state, site-1 projection, U(t*), probe, U(t*), readout.
inline double readout_probability(const Model& m, const Protocol& p) {
    const M h = hamiltonian(m);
    const M p1 = on_site(m.n, 1, projector(p.theta, p.phi));
    M rho = p1 * gibbs(h, p.beta) * p1;
    if (p.conditional) rho /= rho.trace();
    const M u = expm(C(0, -p.t_star) * h);
    const M up = expm(C(0, -p.tau) * (interaction(m) + p.omega * magnetization(m.n)));
    rho = u * rho * u.adjoint();
    rho = up * rho * up.adjoint();
    if (p.t_dph) rho = dephase_all(rho, m.n, p.tau, *p.t_dph);
    rho = u * rho * u.adjoint();
    return (on_site(m.n, 1, projector(p.theta_p, p.phi_p)) * rho).trace().real();
}

// Five-point central stencil for dp/domega.
template <class F>
double derivative5(F&& f, double x, double h) {
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

}  // namespace oracle
