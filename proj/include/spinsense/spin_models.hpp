// spin_models.hpp: Hamiltonians for open spin chains with power-law couplings
// truncated at a coordination number: XYZ, transverse Ising, probe field and
// the secular bulk diagnostic.

#pragma once

#include "spinsense/operator_algebra.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsense {

// How the coupling normalization A is chosen.
//   Coordination: A = sum_{d=1}^{Z} d^-alpha (sum over retained distances)
//   FullChain:    A = sum_{d=1}^{N-1} d^-alpha
enum class KacMode { Coordination, FullChain };

inline const char* to_string(KacMode m) { return m == KacMode::Coordination ? "coordination" : "full-chain"; }

struct ModelSpec {
    int n = 10;
    double alpha = 1.0;
    int coord_n = 1;
    double jx = 0.0;
    double jy = 0.0;
    double jz = 1.0;
    std::vector<double> fields_x;  // one entry per site
    KacMode kac = KacMode::Coordination;

    static ModelSpec ising(int n, double alpha, int coord_n, double hx, KacMode kac = KacMode::Coordination) {
        ModelSpec s;
        s.n = n;
        s.alpha = alpha;
        s.coord_n = coord_n;
        s.fields_x.assign(static_cast<std::size_t>(std::max(n, 0)), hx);
        s.kac = kac;
        return s;
    }

    void validate() const {
        if (n < 2) throw std::invalid_argument("ModelSpec: N must be >= 2");
        if (n > 14) throw std::invalid_argument("ModelSpec: N must be <= 14 for dense storage");
        if (coord_n < 1 || coord_n > n - 1) throw std::invalid_argument("ModelSpec: coordN must lie in [1, N-1]");
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("ModelSpec: alpha must be >= 0");
        for (double j : {jx, jy, jz})
            if (!(j >= 0.0 && j <= 1.0)) throw std::invalid_argument("ModelSpec: couplings must lie in [0,1]");
        if (fields_x.size() != static_cast<std::size_t>(n))
            throw std::invalid_argument("ModelSpec: fields_x must have exactly N entries");
        for (double h : fields_x)
            if (!std::isfinite(h)) throw std::invalid_argument("ModelSpec: fields must be finite");
    }

    bool is_ising() const { return jx == 0.0 && jy == 0.0; }
    bool uniform_field() const {
        for (double h : fields_x)
            if (h != fields_x.front()) return false;
        return true;
    }
};

// A = sum_{d=1}^{n-1} d^-alpha.
inline double kac_factor(double alpha, int n) {
    if (n < 2) throw std::invalid_argument("kac_factor: N must be >= 2");
    double a = 0.0;
    for (int d = 1; d <= n - 1; ++d) a += std::pow(static_cast<double>(d), -alpha);
    return a;
}

struct CouplingTable {
    double kac = 1.0;
    int coord_n = 1;
    std::vector<double> by_distance;  // index d-1 holds J at distance d <= coord_n

    double at(int i, int j) const {
        const int d = std::abs(i - j);
        if (d < 1 || d > coord_n) return 0.0;
        return by_distance[static_cast<std::size_t>(d - 1)];
    }
};

inline CouplingTable coupling_table(const ModelSpec& spec) {
    spec.validate();
    CouplingTable t;
    t.coord_n = spec.coord_n;
    t.kac = spec.kac == KacMode::FullChain ? kac_factor(spec.alpha, spec.n) : kac_factor(spec.alpha, spec.coord_n + 1);
    t.by_distance.resize(static_cast<std::size_t>(spec.coord_n));
    for (int d = 1; d <= spec.coord_n; ++d)
        t.by_distance[static_cast<std::size_t>(d - 1)] = std::pow(static_cast<double>(d), -spec.alpha) / t.kac;
    return t;
}

// ---- real-valued builders (every Hamiltonian here is real symmetric) ----

namespace detail {

// Diagonal of -sum (J_ij/4) jz s_i s_j.
inline RVector zz_diagonal(const ModelSpec& spec, const CouplingTable& c, double jz) {
    const auto d = static_cast<Eigen::Index>(dimension_for(spec.n));
    RVector diag = RVector::Zero(d);
    if (jz == 0.0) return diag;
    for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(d); ++b) {
        double e = 0.0;
        for (int i = 1; i <= spec.n; ++i)
            for (int j = i + 1; j <= std::min(spec.n, i + spec.coord_n); ++j)
                e -= 0.25 * c.at(i, j) * jz * z_value(b, spec.n, i) * z_value(b, spec.n, j);
        diag(static_cast<Eigen::Index>(b)) = e;
    }
    return diag;
}

// Interaction part (no fields) as a real matrix.
inline RMatrix interaction_real(const ModelSpec& spec) {
    const auto c = coupling_table(spec);
    const auto d = static_cast<Eigen::Index>(dimension_for(spec.n));
    RMatrix h = RMatrix::Zero(d, d);
    h.diagonal() = zz_diagonal(spec, c, spec.jz);
    if (spec.jx == 0.0 && spec.jy == 0.0) return h;
    for (int i = 1; i <= spec.n; ++i)
        for (int j = i + 1; j <= std::min(spec.n, i + spec.coord_n); ++j) {
            const auto flip = site_mask(spec.n, i) | site_mask(spec.n, j);
            const double w = -0.25 * c.at(i, j);
            for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(d); ++b) {
                // sigma^y sigma^y |b_i b_j> = -(-1)^(b_i+b_j) |flipped>
                const bool equal = z_value(b, spec.n, i) == z_value(b, spec.n, j);
                const double amp = spec.jx + (equal ? -spec.jy : spec.jy);
                h(static_cast<Eigen::Index>(b ^ flip), static_cast<Eigen::Index>(b)) += w * amp;
            }
        }
    return h;
}

inline void add_fields_real(RMatrix& h, const ModelSpec& spec) {
    const auto d = static_cast<std::uint64_t>(h.rows());
    for (int i = 1; i <= spec.n; ++i) {
        const double hx = 0.5 * spec.fields_x[static_cast<std::size_t>(i - 1)];
        if (hx == 0.0) continue;
        const auto m = site_mask(spec.n, i);
        for (std::uint64_t b = 0; b < d; ++b) h(static_cast<Eigen::Index>(b ^ m), static_cast<Eigen::Index>(b)) += hx;
    }
}

}  // namespace detail

// Full sensor Hamiltonian as a real symmetric matrix (fast path for solvers).
inline RMatrix sensor_hamiltonian_real(const ModelSpec& spec) {
    spec.validate();
    RMatrix h = detail::interaction_real(spec);
    detail::add_fields_real(h, spec);
    return h;
}

inline OperatorMatrix build_xyz(const ModelSpec& spec) {
    return OperatorMatrix(sensor_hamiltonian_real(spec).cast<Complex>());
}

inline OperatorMatrix build_ising(const ModelSpec& spec) {
    ModelSpec s = spec;
    s.jx = 0.0;
    s.jy = 0.0;
    return build_xyz(s);
}

// Field-free interaction part; drives the probe segment.
inline OperatorMatrix build_interaction(const ModelSpec& spec) {
    spec.validate();
    return OperatorMatrix(detail::interaction_real(spec).cast<Complex>());
}

// Diagonal of (1/2) sum_i sigma^z_i in the computational basis.
inline RVector magnetization_diagonal(int n) {
    const auto d = static_cast<Eigen::Index>(dimension_for(n));
    RVector m(d);
    for (Eigen::Index b = 0; b < d; ++b)
        m(b) = 0.5 * (n - 2 * std::popcount(static_cast<std::uint64_t>(b)));
    return m;
}

inline OperatorMatrix build_probe(int n, double omega) {
    if (n < 1) throw std::invalid_argument("build_probe: N must be >= 1");
    if (!std::isfinite(omega)) throw std::invalid_argument("build_probe: omega must be finite");
    const RVector m = magnetization_diagonal(n);
    return OperatorMatrix((omega * m).cast<Complex>().asDiagonal().toDenseMatrix());
}

struct SecularBulk {
    OperatorMatrix h;
    bool empty_bulk = false;  // warning: bulk range Z+1..N-Z is empty
};

// (h/2) sum_{i=Z+1}^{N-Z} sigma^x_i prod_{j=1}^{Z} (1 - 4 sigma^z_{i+j} sigma^z_{i-j}),
// with the product taken as operator composition. Uses the first field entry.
inline SecularBulk build_secular_bulk(const ModelSpec& spec) {
    spec.validate();
    const int n = spec.n;
    const int z = spec.coord_n;
    const auto d = static_cast<Eigen::Index>(dimension_for(n));
    SecularBulk out{OperatorMatrix(CMatrix::Zero(d, d)), false};
    if (z + 1 > n - z) {
        out.empty_bulk = true;
        return out;
    }
    const double hx = spec.fields_x.front();
    CMatrix& m = out.h.matrix();
    // The product is diagonal; sigma^x_i on the left flips site i.
    for (int i = z + 1; i <= n - z; ++i) {
        const auto mask = site_mask(n, i);
        for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(d); ++b) {
            double f = 1.0;
            for (int j = 1; j <= z; ++j) f *= 1.0 - 4.0 * z_value(b, n, i + j) * z_value(b, n, i - j);
            m(static_cast<Eigen::Index>(b ^ mask), static_cast<Eigen::Index>(b)) += 0.5 * hx * f;
        }
    }
    return out;
}

}  // namespace spinsense
