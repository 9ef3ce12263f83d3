// operator_algebra.hpp: dense operators on N-qubit spin chains: Pauli strings,
// Hermitian eigensystems, propagators, partial traces and expectation values.
//
// Basis convention: computational basis ordered lexicographically with site 1 as
// the most significant bit. Bit value 0 is |0> with sigma^z |0> = +|0>.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spinsense {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

// Numerical tolerances used by validity checks. Defaults are the library-wide
// constants; callers may pass a modified copy.
struct Tolerances {
    double hermitian = 1e-12;
    double unitary = 1e-10;
    double reconstruction = 1e-10;  // relative to spectral radius
    double positivity = 1e-10;
    double trace = 1e-12;
    double imaginary_residue = 1e-10;
};

inline constexpr Tolerances kDefaultTolerances{};

// --------------------------- basis helpers ---------------------------------

inline std::size_t dimension_for(int n_sites) {
    if (n_sites < 1 || n_sites > 30) throw std::invalid_argument("dimension_for: site count out of range");
    return std::size_t{1} << n_sites;
}

// Number of sites for a dimension that is a power of two >= 2, or -1.
inline int sites_for(std::size_t dim) {
    if (dim < 2 || !std::has_single_bit(dim)) return -1;
    return std::countr_zero(dim);
}

// Bit mask selecting site (1-based) in a basis index.
inline std::uint64_t site_mask(int n_sites, int site) {
    return std::uint64_t{1} << (n_sites - site);
}

// sigma^z eigenvalue (+1 / -1) of a site in basis state `index`.
inline int z_value(std::uint64_t index, int n_sites, int site) {
    return (index & site_mask(n_sites, site)) ? -1 : 1;
}

inline double max_abs(const CMatrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// --------------------------- OperatorMatrix --------------------------------

// Dense square operator on the 2^N-dimensional space of an N-site chain.
class OperatorMatrix {
public:
    OperatorMatrix() = default;

    explicit OperatorMatrix(CMatrix entries) : m_(std::move(entries)) {
        if (m_.rows() != m_.cols()) throw std::invalid_argument("OperatorMatrix: matrix must be square");
        n_sites_ = sites_for(static_cast<std::size_t>(m_.rows()));
        if (n_sites_ < 1) throw std::invalid_argument("OperatorMatrix: dimension must be a power of two >= 2");
    }

    static OperatorMatrix identity(int n_sites) {
        const auto d = static_cast<Eigen::Index>(dimension_for(n_sites));
        return OperatorMatrix(CMatrix::Identity(d, d));
    }

    static OperatorMatrix zero(int n_sites) {
        const auto d = static_cast<Eigen::Index>(dimension_for(n_sites));
        return OperatorMatrix(CMatrix::Zero(d, d));
    }

    int site_count() const { return n_sites_; }
    Eigen::Index dim() const { return m_.rows(); }
    const CMatrix& matrix() const { return m_; }
    CMatrix& matrix() { return m_; }

    double hermiticity_error() const { return max_abs(m_ - m_.adjoint()); }
    bool is_hermitian(const Tolerances& tol = kDefaultTolerances) const {
        return hermiticity_error() <= tol.hermitian;
    }
    bool is_unitary(const Tolerances& tol = kDefaultTolerances) const {
        return max_abs(m_.adjoint() * m_ - CMatrix::Identity(dim(), dim())) <= tol.unitary;
    }
    // True when every entry has zero imaginary part.
    bool is_real() const { return m_.imag().cwiseAbs().maxCoeff() == 0.0; }

    OperatorMatrix adjoint() const { return OperatorMatrix(m_.adjoint()); }

    friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b, "operator*");
        return OperatorMatrix(a.m_ * b.m_);
    }
    friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b, "operator+");
        return OperatorMatrix(a.m_ + b.m_);
    }
    friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b, "operator-");
        return OperatorMatrix(a.m_ - b.m_);
    }
    friend OperatorMatrix operator*(Complex s, const OperatorMatrix& a) { return OperatorMatrix(s * a.m_); }
    friend OperatorMatrix operator*(double s, const OperatorMatrix& a) { return OperatorMatrix(s * a.m_); }

private:
    static void check_same(const OperatorMatrix& a, const OperatorMatrix& b, const char* where) {
        if (a.dim() != b.dim()) throw std::invalid_argument(std::string(where) + ": dimension mismatch");
    }

    CMatrix m_;
    int n_sites_ = 0;
};

// --------------------------- Pauli strings ---------------------------------

enum class Axis { X, Y, Z };

using PauliAssignment = std::map<int, Axis>;

namespace detail {

inline void check_assignment(int n_sites, const std::vector<std::pair<int, Axis>>& terms) {
    std::vector<bool> seen(static_cast<std::size_t>(n_sites) + 1, false);
    for (const auto& [site, axis] : terms) {
        (void)axis;
        if (site < 1 || site > n_sites) throw std::out_of_range("pauli_string: site index out of range");
        if (seen[static_cast<std::size_t>(site)]) throw std::invalid_argument("pauli_string: duplicate site index");
        seen[static_cast<std::size_t>(site)] = true;
    }
}

// A Pauli string is a phased permutation: column b maps to row b ^ flip with
// amplitude phase(b). Returns (flip mask, per-column amplitude functor data).
struct PauliAction {
    std::uint64_t flip = 0;   // sites carrying X or Y
    std::uint64_t zmask = 0;  // sites carrying Y or Z (sign from bit value)
    int y_count = 0;

    Complex amplitude(std::uint64_t column) const {
        // sigma^y|b> = i(-1)^b |1-b>, sigma^z|b> = (-1)^b |b>
        const int minus = std::popcount(column & zmask) & 1;
        Complex a = minus ? Complex(-1.0, 0.0) : Complex(1.0, 0.0);
        switch (y_count & 3) {
            case 1: a *= Complex(0.0, 1.0); break;
            case 2: a *= -1.0; break;
            case 3: a *= Complex(0.0, -1.0); break;
            default: break;
        }
        return a;
    }
};

inline PauliAction pauli_action(int n_sites, const std::vector<std::pair<int, Axis>>& terms) {
    PauliAction act;
    for (const auto& [site, axis] : terms) {
        const auto m = site_mask(n_sites, site);
        if (axis == Axis::X || axis == Axis::Y) act.flip |= m;
        if (axis == Axis::Y || axis == Axis::Z) act.zmask |= m;
        if (axis == Axis::Y) ++act.y_count;
    }
    return act;
}

}  // namespace detail

// Adds coeff * (Pauli string) to a dense matrix in O(2^N).
inline void add_pauli_term(CMatrix& target, int n_sites, const std::vector<std::pair<int, Axis>>& terms,
                           Complex coeff) {
    detail::check_assignment(n_sites, terms);
    const auto act = detail::pauli_action(n_sites, terms);
    const auto d = static_cast<std::uint64_t>(target.rows());
    for (std::uint64_t b = 0; b < d; ++b) {
        target(static_cast<Eigen::Index>(b ^ act.flip), static_cast<Eigen::Index>(b)) += coeff * act.amplitude(b);
    }
}

inline OperatorMatrix pauli_string(int n_sites, const PauliAssignment& assignment) {
    const auto d = static_cast<Eigen::Index>(dimension_for(n_sites));
    CMatrix m = CMatrix::Zero(d, d);
    std::vector<std::pair<int, Axis>> terms(assignment.begin(), assignment.end());
    add_pauli_term(m, n_sites, terms, 1.0);
    return OperatorMatrix(std::move(m));
}

// Single-site Pauli operator sigma^axis_site.
inline OperatorMatrix pauli(int n_sites, int site, Axis axis) { return pauli_string(n_sites, {{site, axis}}); }

// --------------------------- spectral decomposition ------------------------

struct SpectralDecomposition {
    RVector eigenvalues;  // ascending
    CMatrix basis;        // columns are eigenvectors

    Eigen::Index dim() const { return eigenvalues.size(); }
    double spectral_radius() const {
        return eigenvalues.size() == 0 ? 0.0 : std::max(std::abs(eigenvalues(0)), std::abs(eigenvalues(eigenvalues.size() - 1)));
    }
    CMatrix reconstruct() const { return basis * eigenvalues.cast<Complex>().asDiagonal() * basis.adjoint(); }
};

// Eigensystem of a Hermitian operator. Real-valued input takes the real
// symmetric solver, which is several times faster at the sizes used here.
inline SpectralDecomposition spectral(const OperatorMatrix& h, const Tolerances& tol = kDefaultTolerances) {
    if (!h.is_hermitian(tol)) throw std::invalid_argument("spectral: operator is not Hermitian");
    SpectralDecomposition sd;
    if (h.is_real()) {
        Eigen::SelfAdjointEigenSolver<RMatrix> es(h.matrix().real());
        if (es.info() != Eigen::Success) throw std::runtime_error("spectral: eigensolver failed");
        sd.eigenvalues = es.eigenvalues();
        sd.basis = es.eigenvectors().cast<Complex>();
    } else {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(h.matrix());
        if (es.info() != Eigen::Success) throw std::runtime_error("spectral: eigensolver failed");
        sd.eigenvalues = es.eigenvalues();
        sd.basis = es.eigenvectors();
    }
    return sd;
}

// exp(-i * sign * H * t) from a precomputed eigensystem.
inline OperatorMatrix propagator(const SpectralDecomposition& sd, double t, int sign = +1) {
    if (!std::isfinite(t)) throw std::invalid_argument("propagator: time must be finite");
    if (sign != 1 && sign != -1) throw std::invalid_argument("propagator: sign must be +1 or -1");
    if (sd.dim() == 0 || sd.basis.rows() != sd.dim()) throw std::invalid_argument("propagator: invalid decomposition");
    const CVector phases = (sd.eigenvalues * (-static_cast<double>(sign) * t)).unaryExpr([](double x) {
        return std::polar(1.0, x);
    });
    return OperatorMatrix(sd.basis * phases.asDiagonal() * sd.basis.adjoint());
}

// --------------------------- density states --------------------------------

class DensityState {
public:
    DensityState() = default;

    // trace_weight is the expected trace: 1 for normalized states, the branch
    // probability for unnormalized post-selected states.
    DensityState(CMatrix rho, double trace_weight, const Tolerances& tol = kDefaultTolerances)
        : rho_(std::move(rho)), weight_(trace_weight) {
        if (rho_.rows() != rho_.cols()) throw std::invalid_argument("DensityState: matrix must be square");
        n_sites_ = sites_for(static_cast<std::size_t>(rho_.rows()));
        if (n_sites_ < 1) throw std::invalid_argument("DensityState: dimension must be a power of two >= 2");
        if (!(weight_ >= -tol.trace && weight_ <= 1.0 + tol.trace))
            throw std::invalid_argument("DensityState: trace weight outside [0,1]");
        const double herm = max_abs(rho_ - rho_.adjoint());
        if (herm > tol.hermitian * std::max(1.0, max_abs(rho_)))
            throw std::invalid_argument("DensityState: matrix is not Hermitian");
        const double tr = rho_.trace().real();
        if (std::abs(tr - weight_) > tol.trace * std::max<double>(1.0, static_cast<double>(rho_.rows())))
            throw std::invalid_argument("DensityState: trace does not match trace weight");
    }

    static DensityState normalized(CMatrix rho, const Tolerances& tol = kDefaultTolerances) {
        return DensityState(std::move(rho), 1.0, tol);
    }

    static DensityState pure(const CVector& psi) {
        CMatrix rho = psi * psi.adjoint();
        const double w = rho.trace().real();
        return DensityState(std::move(rho), w);
    }

    int site_count() const { return n_sites_; }
    Eigen::Index dim() const { return rho_.rows(); }
    double trace_weight() const { return weight_; }
    const CMatrix& matrix() const { return rho_; }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(rho_, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }
    bool is_positive(const Tolerances& tol = kDefaultTolerances) const { return min_eigenvalue() >= -tol.positivity; }

    DensityState renormalized() const {
        const double tr = rho_.trace().real();
        if (!(tr > 0.0)) throw std::domain_error("DensityState::renormalized: zero trace");
        return DensityState(rho_ / tr, 1.0);
    }

private:
    CMatrix rho_;
    double weight_ = 1.0;
    int n_sites_ = 0;
};

// Traces out one site; the remaining sites keep their relative order.
inline DensityState partial_trace_site(const DensityState& rho, int site) {
    const int n = rho.site_count();
    if (rho.dim() < 4) throw std::invalid_argument("partial_trace_site: need at least two sites");
    if (site < 1 || site > n) throw std::out_of_range("partial_trace_site: site out of range");
    // index = hi * 2^(n-site+1) + bit * 2^(n-site) + lo
    const std::uint64_t lo_dim = std::uint64_t{1} << (n - site);
    const std::uint64_t hi_dim = std::uint64_t{1} << (site - 1);
    const auto out_dim = static_cast<Eigen::Index>(lo_dim * hi_dim);
    CMatrix out = CMatrix::Zero(out_dim, out_dim);
    const CMatrix& m = rho.matrix();
    auto full = [&](std::uint64_t hi, std::uint64_t bit, std::uint64_t lo) {
        return static_cast<Eigen::Index>(((hi * 2 + bit) * lo_dim) + lo);
    };
    for (std::uint64_t h1 = 0; h1 < hi_dim; ++h1)
        for (std::uint64_t l1 = 0; l1 < lo_dim; ++l1)
            for (std::uint64_t h2 = 0; h2 < hi_dim; ++h2)
                for (std::uint64_t l2 = 0; l2 < lo_dim; ++l2) {
                    const auto r = static_cast<Eigen::Index>(h1 * lo_dim + l1);
                    const auto c = static_cast<Eigen::Index>(h2 * lo_dim + l2);
                    out(r, c) = m(full(h1, 0, l1), full(h2, 0, l2)) + m(full(h1, 1, l1), full(h2, 1, l2));
                }
    return DensityState(std::move(out), rho.trace_weight());
}

// Tr(rho O) for Hermitian O. The imaginary residue is checked and discarded.
inline double expectation(const DensityState& rho, const OperatorMatrix& op,
                          const Tolerances& tol = kDefaultTolerances) {
    if (rho.dim() != op.dim()) throw std::invalid_argument("expectation: dimension mismatch");
    const Complex v = (rho.matrix().transpose().cwiseProduct(op.matrix())).sum();
    const double scale = std::max(1.0, std::abs(v));
    if (std::abs(v.imag()) > tol.imaginary_residue * scale)
        throw std::domain_error("expectation: imaginary part exceeds tolerance");
    return v.real();
}

}  // namespace spinsense
