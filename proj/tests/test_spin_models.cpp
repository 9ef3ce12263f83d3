#include "oracles.hpp"
#include "spinsense/spin_models.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

using namespace spinsense;

namespace {

oracle::Model to_oracle(const ModelSpec& s) {
    return {s.n, s.alpha, s.coord_n, s.jx, s.jy, s.jz, s.fields_x, s.kac == KacMode::FullChain};
}

oracle::M secular_oracle(int n, int z, double hx) {
    using namespace oracle;
    const auto dim = Eigen::Index(1) << n;
    M h = M::Zero(dim, dim);
    for (int i = z + 1; i <= n - z; ++i) {
        M prod = M::Identity(dim, dim);
        for (int j = 1; j <= z; ++j) prod = prod * (M::Identity(dim, dim) - 4.0 * on_site(n, i + j, sz()) * on_site(n, i - j, sz()));
        h += (hx / 2.0) * on_site(n, i, sx()) * prod;
    }
    return h;
}

}  // namespace

TEST(KacFactor, Values) {
    EXPECT_DOUBLE_EQ(kac_factor(0.0, 10), 9.0);
    EXPECT_NEAR(kac_factor(200.0, 10), 1.0, 1e-15);
    double h9 = 0.0;
    for (int d = 1; d <= 9; ++d) h9 += 1.0 / d;
    EXPECT_NEAR(kac_factor(1.0, 10), h9, 1e-15);
    EXPECT_NEAR(kac_factor(1.0, 10), 2.828968, 1e-6);
    EXPECT_THROW(kac_factor(1.0, 1), std::invalid_argument);
}

TEST(KacFactor, StrictlyDecreasingInAlphaAndAtLeastOne) {
    for (int n : {3, 6, 10})
        for (double a = 0.0; a < 5.0; a += 0.25) {
            EXPECT_GT(kac_factor(a, n), kac_factor(a + 0.25, n));
            EXPECT_GE(kac_factor(a + 0.25, n), 1.0);
        }
}

TEST(CouplingTable, NormalizedAndTranslationInvariant) {
    for (KacMode mode : {KacMode::Coordination, KacMode::FullChain})
        for (int z = 1; z <= 9; ++z) {
            auto spec = ModelSpec::ising(10, 1.3, z, 0.25, mode);
            const auto t = coupling_table(spec);
            double sum = 0.0;
            for (double j : t.by_distance) {
                EXPECT_GT(j, 0.0);
                sum += j;
            }
            if (mode == KacMode::Coordination) {
                EXPECT_NEAR(sum, 1.0, 1e-14);
            }
            double full = 0.0;
            for (int d = 1; d <= 9; ++d) full += std::pow(d, -1.3) / t.kac;
            if (mode == KacMode::FullChain) {
                EXPECT_NEAR(full, 1.0, 1e-14);
            }
            for (int i = 1; i <= 10; ++i)
                for (int j = i + 1; j <= 10; ++j) {
                    EXPECT_EQ(t.at(i, j), t.at(j, i));
                    if (j - i > z) EXPECT_EQ(t.at(i, j), 0.0);
                    else EXPECT_EQ(t.at(i, j), t.at(1, 1 + (j - i)));
                }
        }
}

TEST(ModelSpec, Validation) {
    auto s = ModelSpec::ising(10, 1.0, 1, 0.25);
    EXPECT_NO_THROW(s.validate());
    s.coord_n = 0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.coord_n = 10;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = ModelSpec::ising(10, -0.5, 1, 0.25);
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = ModelSpec::ising(10, 1.0, 1, 0.25);
    s.jx = 1.5;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = ModelSpec::ising(10, 1.0, 1, 0.25);
    s.fields_x.pop_back();
    EXPECT_THROW(s.validate(), std::invalid_argument);
    EXPECT_THROW(ModelSpec::ising(1, 1.0, 1, 0.25).validate(), std::invalid_argument);
}

TEST(BuildXyz, SingleBond) {
    ModelSpec s = ModelSpec::ising(2, 1.0, 1, 0.0);
    const Eigen::Vector4cd want(-0.25, 0.25, 0.25, -0.25);
    EXPECT_LT(max_abs(build_xyz(s).matrix() - CMatrix(want.asDiagonal())), 1e-15);
    EXPECT_LT(max_abs(build_ising(s).matrix() - CMatrix(want.asDiagonal())), 1e-15);
}

TEST(BuildIsing, FieldAdditivity) {
    const auto h0 = build_ising(ModelSpec::ising(2, 1.0, 1, 0.0)).matrix();
    const auto h1 = build_ising(ModelSpec::ising(2, 1.0, 1, 0.25)).matrix();
    const CMatrix field = 0.125 * (pauli(2, 1, Axis::X).matrix() + pauli(2, 2, Axis::X).matrix());
    EXPECT_LT(max_abs(h1 - h0 - field), 1e-15);
}

TEST(BuildXyz, EqualsIsingWhenTransverseCouplingsVanish) {
    for (int z = 1; z <= 4; ++z) {
        auto s = ModelSpec::ising(5, 1.7, z, 0.3);
        s.jz = 0.6;
        EXPECT_EQ(max_abs(build_xyz(s).matrix() - build_ising(s).matrix()), 0.0);
    }
}

TEST(BuildXyz, MatchesBruteForceAssembly) {
    ModelSpec s = ModelSpec::ising(3, 1.0, 2, 0.05);
    s.jx = s.jy = s.jz = 1.0;
    EXPECT_LT(max_abs(build_xyz(s).matrix() - oracle::hamiltonian(to_oracle(s))), 1e-12);
    for (KacMode mode : {KacMode::Coordination, KacMode::FullChain}) {
        ModelSpec t = ModelSpec::ising(5, 1.3, 3, 0.2, mode);
        t.jx = 0.3;
        t.jy = 0.8;
        t.jz = 0.5;
        t.fields_x = {0.1, 0.2, 0.3, 0.4, 0.5};
        EXPECT_LT(max_abs(build_xyz(t).matrix() - oracle::hamiltonian(to_oracle(t))), 1e-12);
        EXPECT_LT(max_abs(build_interaction(t).matrix() - oracle::interaction(to_oracle(t))), 1e-12);
        EXPECT_TRUE(build_xyz(t).is_hermitian());
    }
}

TEST(BuildIsing, LongRangeGroundStateMatchesSecondSolver) {
    const auto h = build_ising(ModelSpec::ising(10, 1.0, 9, 0.25));
    const auto sd = spectral(h);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h.matrix(), Eigen::EigenvaluesOnly);  // complex Hermitian path
    EXPECT_NEAR(sd.eigenvalues(0), es.eigenvalues()(0), 1e-9);
}

TEST(BuildIsing, ZeroFieldCommutesWithEverySigmaZ) {
    const auto h = build_ising(ModelSpec::ising(6, 1.0, 3, 0.0)).matrix();
    for (int i = 1; i <= 6; ++i) {
        const auto z = pauli(6, i, Axis::Z).matrix();
        EXPECT_LE(max_abs(h * z - z * h), 1e-12);
    }
    const auto p = build_probe(6, 0.37).matrix();
    EXPECT_LE(max_abs(h * p - p * h), 1e-12);
}

TEST(BuildProbe, Values) {
    const double w = 0.3;
    const auto p1 = build_probe(1, w).matrix();
    EXPECT_NEAR(p1(0, 0).real(), w / 2, 1e-16);
    EXPECT_NEAR(p1(1, 1).real(), -w / 2, 1e-16);
    const Eigen::Vector4cd d2(w, 0, 0, -w);
    EXPECT_LT(max_abs(build_probe(2, w).matrix() - CMatrix(d2.asDiagonal())), 1e-16);
    EXPECT_EQ(max_abs(build_probe(5, 0.0).matrix()), 0.0);
    EXPECT_LT(max_abs(build_probe(3, w).matrix() - w * oracle::magnetization(3)), 1e-16);
}

TEST(SecularBulk, SingleBulkSite) {
    const auto r = build_secular_bulk(ModelSpec::ising(3, 1.0, 1, 0.25));
    EXPECT_FALSE(r.empty_bulk);
    const CMatrix want = 0.125 * pauli(3, 2, Axis::X).matrix() *
                         (CMatrix::Identity(8, 8) - 4.0 * pauli_string(3, {{1, Axis::Z}, {3, Axis::Z}}).matrix());
    EXPECT_LT(max_abs(r.h.matrix() - want), 1e-15);
}

TEST(SecularBulk, EmptyBulkFlagged) {
    const auto r = build_secular_bulk(ModelSpec::ising(4, 1.0, 2, 0.25));
    EXPECT_TRUE(r.empty_bulk);
    EXPECT_EQ(max_abs(r.h.matrix()), 0.0);
}

TEST(SecularBulk, MatchesTermByTermAssembly) {
    for (int z : {1, 2}) {
        const auto r = build_secular_bulk(ModelSpec::ising(5, 1.0, z, 0.25));
        EXPECT_LT(max_abs(r.h.matrix() - secular_oracle(5, z, 0.25)), 1e-12);
        EXPECT_TRUE(r.h.is_hermitian());
    }
}

TEST(Models, AllCommuteWithGlobalSpinFlip) {
    ModelSpec s = ModelSpec::ising(5, 1.2, 2, 0.3);
    s.jx = 0.4;
    s.jy = 0.9;
    s.fields_x = {0.1, 0.5, 0.2, 0.3, 0.4};
    CMatrix g = CMatrix::Identity(32, 32);
    for (int i = 1; i <= 5; ++i) g = g * pauli(5, i, Axis::X).matrix();
    const auto h = build_xyz(s).matrix();
    EXPECT_LE(max_abs(h * g - g * h), 1e-14);
}
