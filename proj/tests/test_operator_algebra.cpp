#include "oracles.hpp"
#include "spinsense/operator_algebra.hpp"
#include "spinsense/spin_models.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace spinsense;

namespace {

CMatrix random_psd(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CMatrix a(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) a(r, c) = Complex(g(rng), g(rng));
    CMatrix rho = a * a.adjoint();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return rho / rho.trace().real();
}

oracle::M axis_matrix(Axis a) {
    switch (a) {
        case Axis::X: return oracle::sx();
        case Axis::Y: return oracle::sy();
        case Axis::Z: return oracle::sz();
    }
    return oracle::id2();
}

}  // namespace

TEST(PauliString, SingleZ) {
    const auto m = pauli_string(1, {{1, Axis::Z}}).matrix();
    EXPECT_EQ(m(0, 0), Complex(1));
    EXPECT_EQ(m(1, 1), Complex(-1));
    EXPECT_EQ(m(0, 1), Complex(0));
}

TEST(PauliString, KroneckerZZ) {
    const auto m = pauli_string(2, {{1, Axis::Z}, {2, Axis::Z}}).matrix();
    const Eigen::Vector4cd expected(1, -1, -1, 1);
    EXPECT_EQ(m.diagonal(), expected);
    EXPECT_EQ(max_abs(m - CMatrix(expected.asDiagonal())), 0.0);
}

TEST(PauliString, EmptyAssignmentIsIdentity) {
    EXPECT_EQ(max_abs(pauli_string(2, {}).matrix() - CMatrix::Identity(4, 4)), 0.0);
}

TEST(PauliString, MatchesKroneckerOracleForAllTwoSiteStrings) {
    for (int n = 1; n <= 3; ++n)
        for (int site = 1; site <= n; ++site)
            for (Axis a : {Axis::X, Axis::Y, Axis::Z}) {
                const auto got = pauli(n, site, a).matrix();
                EXPECT_LT(max_abs(got - oracle::on_site(n, site, axis_matrix(a))), 1e-15);
            }
    const auto got = pauli_string(3, {{1, Axis::Y}, {3, Axis::X}}).matrix();
    const oracle::M want = oracle::on_site(3, 1, oracle::sy()) * oracle::on_site(3, 3, oracle::sx());
    EXPECT_LT(max_abs(got - want), 1e-15);
}

TEST(PauliString, InvolutoryTracelessHermitian) {
    const auto p = pauli_string(3, {{1, Axis::X}, {2, Axis::Y}, {3, Axis::Z}});
    EXPECT_TRUE(p.is_hermitian());
    EXPECT_LT(max_abs(p.matrix() * p.matrix() - CMatrix::Identity(8, 8)), 1e-15);
    EXPECT_EQ(p.matrix().trace(), Complex(0));
}

TEST(PauliString, RejectsBadSites) {
    EXPECT_THROW(pauli_string(2, {{3, Axis::Z}}), std::out_of_range);
    EXPECT_THROW(pauli_string(2, {{0, Axis::Z}}), std::out_of_range);
    CMatrix target = CMatrix::Zero(4, 4);
    EXPECT_THROW(add_pauli_term(target, 2, {{1, Axis::X}, {1, Axis::Z}}, 1.0), std::invalid_argument);
}

TEST(OperatorMatrix, RejectsNonPowerOfTwo) {
    EXPECT_THROW(OperatorMatrix(CMatrix::Zero(3, 3)), std::invalid_argument);
    EXPECT_THROW(OperatorMatrix(CMatrix::Zero(1, 1)), std::invalid_argument);
    EXPECT_THROW(OperatorMatrix(CMatrix::Zero(2, 4)), std::invalid_argument);
}

TEST(Spectral, PauliXSpectrum) {
    const auto sd = spectral(pauli(1, 1, Axis::X));
    EXPECT_NEAR(sd.eigenvalues(0), -1.0, 1e-15);
    EXPECT_NEAR(sd.eigenvalues(1), 1.0, 1e-15);
}

TEST(Spectral, ZeroMatrix) {
    const auto sd = spectral(OperatorMatrix::zero(2));
    EXPECT_EQ(sd.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Spectral, RejectsNonHermitian) {
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 1) = 1.0;
    EXPECT_THROW(spectral(OperatorMatrix(m)), std::invalid_argument);
}

TEST(Spectral, IsingEigenvaluesMatchSecondSolver) {
    const auto h = build_ising(ModelSpec::ising(3, 1.0, 1, 0.25));
    const auto sd = spectral(h);
    // Independent route: general (non-symmetric) complex eigensolver.
    Eigen::ComplexEigenSolver<CMatrix> ces(h.matrix());
    std::vector<double> other;
    for (Eigen::Index i = 0; i < ces.eigenvalues().size(); ++i) other.push_back(ces.eigenvalues()(i).real());
    std::sort(other.begin(), other.end());
    for (Eigen::Index i = 0; i < sd.dim(); ++i) EXPECT_NEAR(sd.eigenvalues(i), other[static_cast<std::size_t>(i)], 1e-10);
    EXPECT_LE(max_abs(sd.reconstruct() - h.matrix()), 1e-10 * sd.spectral_radius());
    EXPECT_TRUE(OperatorMatrix(sd.basis).is_unitary());
}

TEST(Propagator, IdentityAtZeroAndPhaseArithmetic) {
    const auto sd = spectral(pauli(1, 1, Axis::Z));
    EXPECT_LT(max_abs(propagator(sd, 0.0).matrix() - CMatrix::Identity(2, 2)), 1e-15);
    EXPECT_LT(max_abs(propagator(sd, std::numbers::pi).matrix() + CMatrix::Identity(2, 2)), 1e-15);
}

TEST(Propagator, MatchesSeriesExponentialOracle) {
    const auto sx = spectral(pauli(1, 1, Axis::X));
    EXPECT_LT(max_abs(propagator(sx, 1.0).matrix() - oracle::expm(oracle::C(0, -1.0) * oracle::sx())), 1e-8);
    for (int n = 2; n <= 3; ++n) {
        const ModelSpec spec = ModelSpec::ising(n, 1.0, 1, 0.25);
        oracle::Model m{spec.n, 1.0, 1, 0.0, 0.0, 1.0, spec.fields_x};
        const auto sd = spectral(build_ising(spec));
        for (double t : {0.1, 1.0, 10.0}) {
            const auto want = oracle::expm(oracle::C(0, -t) * oracle::hamiltonian(m));
            EXPECT_LT(max_abs(propagator(sd, t).matrix() - want), 1e-8) << "N=" << spec.n << " t=" << t;
        }
    }
    // N = 3 XYZ with unequal couplings.
    ModelSpec s = ModelSpec::ising(3, 1.5, 2, 0.3);
    s.jx = 0.4;
    s.jy = 0.7;
    s.jz = 0.9;
    oracle::Model m{3, 1.5, 2, 0.4, 0.7, 0.9, s.fields_x};
    const auto sd = spectral(build_xyz(s));
    const auto want = oracle::expm(oracle::C(0, -1.0) * oracle::hamiltonian(m));
    EXPECT_LT(max_abs(propagator(sd, 1.0).matrix() - want), 1e-8);
}

TEST(Propagator, UnitaryAndComposition) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    const auto sd = spectral(build_ising(ModelSpec::ising(4, 1.0, 2, 0.25)));
    for (int k = 0; k < 100; ++k) {
        const double t1 = u(rng), t2 = u(rng);
        const auto a = propagator(sd, t1), b = propagator(sd, t2);
        EXPECT_TRUE(a.is_unitary());
        EXPECT_LE(max_abs((a * b).matrix() - propagator(sd, t1 + t2).matrix()), 1e-9);
    }
}

TEST(Propagator, SignReversesTime) {
    const auto sd = spectral(build_ising(ModelSpec::ising(3, 1.0, 1, 0.25)));
    EXPECT_LT(max_abs(propagator(sd, 2.5, -1).matrix() - propagator(sd, -2.5).matrix()), 1e-14);
    EXPECT_THROW(propagator(sd, std::nan("")), std::invalid_argument);
}

TEST(PartialTrace, ProductState) {
    CVector psi = CVector::Zero(4);
    psi(0) = 1.0;
    const auto r = partial_trace_site(DensityState::pure(psi), 2);
    EXPECT_EQ(r.matrix()(0, 0), Complex(1));
    EXPECT_EQ(r.matrix()(1, 1), Complex(0));
}

TEST(PartialTrace, BellStateGivesMaximallyMixed) {
    CVector psi = CVector::Zero(4);
    psi(0) = psi(3) = 1.0 / std::sqrt(2.0);
    const auto r = partial_trace_site(DensityState::pure(psi), 2);
    EXPECT_LT(max_abs(r.matrix() - 0.5 * CMatrix::Identity(2, 2)), 1e-15);
}

TEST(PartialTrace, RandomProductStates) {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 20; ++k) {
        const CMatrix a = random_psd(2, rng), b = random_psd(2, rng), c = random_psd(2, rng);
        const CMatrix abc = oracle::kron(oracle::kron(a, b), c);
        EXPECT_LT(max_abs(partial_trace_site(DensityState::normalized(abc), 3).matrix() - oracle::kron(a, b)), 1e-14);
        EXPECT_LT(max_abs(partial_trace_site(DensityState::normalized(abc), 1).matrix() - oracle::kron(b, c)), 1e-14);
        EXPECT_LT(max_abs(partial_trace_site(DensityState::normalized(abc), 2).matrix() - oracle::kron(a, c)), 1e-14);
    }
}

TEST(PartialTrace, TracePreservingAndPositiveOnRandomInputs) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> sites(2, 4);
    for (int k = 0; k < 1000; ++k) {
        const int n = sites(rng);
        const auto rho = DensityState::normalized(random_psd(1 << n, rng));
        const int site = std::uniform_int_distribution<int>(1, n)(rng);
        const auto r = partial_trace_site(rho, site);
        EXPECT_NEAR(r.matrix().trace().real(), 1.0, 1e-12);
        EXPECT_TRUE(r.is_positive());
        EXPECT_LE(max_abs(r.matrix() - r.matrix().adjoint()), 1e-12);
    }
}

TEST(PartialTrace, Errors) {
    const auto rho = DensityState::normalized(0.5 * CMatrix::Identity(2, 2));
    EXPECT_THROW(partial_trace_site(rho, 1), std::invalid_argument);
    const auto rho2 = DensityState::normalized(0.25 * CMatrix::Identity(4, 4));
    EXPECT_THROW(partial_trace_site(rho2, 3), std::out_of_range);
}

TEST(Expectation, BasicValues) {
    const auto mixed = DensityState::normalized(0.5 * CMatrix::Identity(2, 2));
    EXPECT_EQ(expectation(mixed, pauli(1, 1, Axis::Z)), 0.0);
    CVector up = CVector::Zero(2);
    up(0) = 1.0;
    EXPECT_EQ(expectation(DensityState::pure(up), pauli(1, 1, Axis::Z)), 1.0);
}

TEST(Expectation, TwoLevelGibbsAverage) {
    // H = sigma^z at beta = 1: <sigma^z> = -tanh(1); H = -sigma^z gives +tanh(1).
    const auto sd = spectral(-1.0 * pauli(1, 1, Axis::Z));
    RVector w = (-sd.eigenvalues.array()).exp().matrix();
    w /= w.sum();
    const CMatrix rho = sd.basis * w.cast<Complex>().asDiagonal() * sd.basis.adjoint();
    EXPECT_NEAR(expectation(DensityState::normalized(rho), pauli(1, 1, Axis::Z)), std::tanh(1.0), 1e-15);
}

TEST(Expectation, Errors) {
    const auto rho = DensityState::normalized(0.5 * CMatrix::Identity(2, 2));
    EXPECT_THROW(expectation(rho, pauli(2, 1, Axis::Z)), std::invalid_argument);
    CVector psi(2);
    psi << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    CMatrix bad = CMatrix::Zero(2, 2);
    bad(0, 1) = Complex(0, 1);
    bad(1, 0) = Complex(0, 1);  // anti-Hermitian, so the expectation is imaginary
    EXPECT_THROW(expectation(DensityState::pure(psi), OperatorMatrix(bad)), std::domain_error);
}

TEST(DensityState, Invariants) {
    EXPECT_THROW(DensityState::normalized(CMatrix::Identity(2, 2)), std::invalid_argument);
    CMatrix nh = 0.5 * CMatrix::Identity(2, 2);
    nh(0, 1) = 0.1;
    EXPECT_THROW(DensityState::normalized(nh), std::invalid_argument);
    const DensityState partial(0.25 * CMatrix::Identity(2, 2), 0.5);
    EXPECT_NEAR(partial.renormalized().matrix()(0, 0).real(), 0.5, 1e-15);
}
