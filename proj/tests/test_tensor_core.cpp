// SPDX-License-Identifier: Apache-2.0
//
// chanest: structured tensor channel estimation for MU-MIMO uplink
// Copyright (C) 2026 The chanest authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <catch2/catch_amalgamated.hpp>

#include "chanest/tensor_core.hpp"
#include "test_helpers.hpp"

using namespace chanest;
using chanest::testing::cp_loop_oracle;
using chanest::testing::random_cmatrix;
using chanest::testing::rel_diff;

namespace {

ComplexTensor4 offset_plus_one(const Dims4 &d)
{
    ComplexTensor4 X(d);
    for (Index i = 0; i < X.size(); ++i)
        X.data()(i) = cd(static_cast<double>(i + 1), 0.0);
    return X;
}

CMatrix unit_column(Index n, Index i)
{
    CMatrix e = CMatrix::Zero(n, 1);
    e(i, 0) = 1.0;
    return e;
}

} // namespace

TEST_CASE("ComplexTensor4 enforces its invariants", "[tensor_core]")
{
    CHECK_THROWS_AS(ComplexTensor4(Dims4{0, 1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(ComplexTensor4(Dims4{2, 2, 2, 2}, CVector::Zero(15)), std::invalid_argument);

    ComplexTensor4 X({2, 3, 4, 5});
    CHECK(X.size() == 120);
    CHECK(X.offset(1, 2, 3, 4) == 1 + 2 * 2 + 3 * 6 + 4 * 24);
    CHECK_THROWS_AS(X.dim(5), std::invalid_argument);
}

TEST_CASE("mode_n_unfold", "[tensor_core]")
{
    SECTION("all-ones 2x2x2x2, mode 4")
    {
        const auto X = ComplexTensor4::constant({2, 2, 2, 2}, 1.0);
        const CMatrix M = mode_n_unfold(X, 4);
        REQUIRE(M.rows() == 2);
        REQUIRE(M.cols() == 8);
        CHECK(M.isApprox(CMatrix::Ones(2, 8)));
    }
    SECTION("rank-1 delta, mode 1")
    {
        const FactorSet F(unit_column(2, 0), unit_column(2, 0), unit_column(2, 0), unit_column(2, 0));
        const CMatrix M = mode_n_unfold(cp_reconstruct(F), 1);
        CHECK(M(0, 0) == cd(1.0));
        CHECK(M.cwiseAbs().sum() == 1.0);
    }
    SECTION("entries = offset + 1, mode 4 rows are consecutive")
    {
        // Enumerated from the layout formula: X[i1,i2,i3,i4] = 1 + i1 + 2 i2 + 4 i3 + 8 i4.
        const CMatrix M = mode_n_unfold(offset_plus_one({2, 2, 2, 2}), 4);
        for (Index j = 0; j < 8; ++j)
        {
            CHECK(M(0, j) == cd(static_cast<double>(j + 1)));
            CHECK(M(1, j) == cd(static_cast<double>(j + 9)));
        }
    }
    SECTION("mode 2 column ordering")
    {
        // column j = i1 + 2 i3 + 4 i4, value = 1 + i1 + 2 i2 + 4 i3 + 8 i4
        const CMatrix M = mode_n_unfold(offset_plus_one({2, 2, 2, 2}), 2);
        CHECK(M(1, 0) == cd(3.0));
        CHECK(M(0, 2) == cd(5.0));
        CHECK(M(1, 7) == cd(16.0));
    }
    CHECK_THROWS_AS(mode_n_unfold(ComplexTensor4({2, 2, 2, 2}), 0), std::invalid_argument);
    CHECK_THROWS_AS(mode_n_unfold(ComplexTensor4({2, 2, 2, 2}), 5), std::invalid_argument);
}

TEST_CASE("unfold/fold round trip on random tensors", "[tensor_core][property]")
{
    Rng rng(11);
    std::uniform_int_distribution<Index> dim(1, 5);
    for (int trial = 0; trial < 50; ++trial)
    {
        const Dims4 d{dim(rng), dim(rng), dim(rng), dim(rng)};
        const auto X = chanest::testing::random_tensor(d, rng);
        for (int n = 1; n <= 4; ++n)
            REQUIRE(mode_n_fold(mode_n_unfold(X, n), n, d) == X);
    }
}

TEST_CASE("khatri_rao", "[tensor_core]")
{
    CHECK(khatri_rao(CMatrix::Ones(2, 1), CMatrix::Ones(2, 1)).isApprox(CMatrix::Ones(4, 1)));

    const CMatrix KR = khatri_rao(CMatrix::Identity(2, 2), CMatrix::Identity(2, 2));
    CMatrix expect = CMatrix::Zero(4, 2);
    expect(0, 0) = 1.0;
    expect(3, 1) = 1.0;
    CHECK(KR == expect);

    const cd z(0.3, -1.2), w(-0.7, 0.4);
    CMatrix A(2, 1), B(2, 1);
    A << 1.0, z;
    B << 1.0, w;
    const CMatrix C = khatri_rao(A, B);
    CHECK(C(0, 0) == cd(1.0));
    CHECK(C(1, 0) == w);
    CHECK(C(2, 0) == z);
    CHECK(std::abs(C(3, 0) - z * w) < 1e-15);

    CHECK_THROWS_AS(khatri_rao(CMatrix::Ones(2, 2), CMatrix::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("kronecker", "[tensor_core]")
{
    CHECK(kronecker(CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)) == CMatrix::Identity(4, 4));

    Rng rng(3);
    const CMatrix B = random_cmatrix(3, 2, rng);
    CMatrix two(1, 1);
    two(0, 0) = 2.0;
    CHECK(kronecker(two, B).isApprox(2.0 * B));

    CMatrix swap(2, 2);
    swap << 0.0, 1.0, 1.0, 0.0;
    CMatrix expect = CMatrix::Zero(4, 4);
    expect(0, 1) = expect(1, 0) = expect(2, 3) = expect(3, 2) = 1.0;
    CHECK(kronecker(CMatrix::Identity(2, 2), swap) == expect);
}

TEST_CASE("hadamard", "[tensor_core]")
{
    Rng rng(5);
    const CMatrix A = random_cmatrix(3, 4, rng);
    CHECK(hadamard(A, CMatrix::Ones(3, 4)) == A);
    CHECK(hadamard(A, CMatrix::Zero(3, 4)) == CMatrix::Zero(3, 4));

    CMatrix X(2, 2), Y(2, 2), Z(2, 2);
    X << 1.0, 2.0, 3.0, 4.0;
    Y << 2.0, 2.0, 2.0, 2.0;
    Z << 2.0, 4.0, 6.0, 8.0;
    CHECK(hadamard(X, Y) == Z);
    CHECK_THROWS_AS(hadamard(X, CMatrix::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("Khatri-Rao Gram identity", "[tensor_core][property]")
{
    Rng rng(17);
    std::uniform_int_distribution<Index> dim(1, 6);
    for (int trial = 0; trial < 100; ++trial)
    {
        const Index R = dim(rng);
        const CMatrix A = random_cmatrix(dim(rng), R, rng);
        const CMatrix B = random_cmatrix(dim(rng), R, rng);
        const CMatrix KR = khatri_rao(A, B);
        const CMatrix lhs = KR.adjoint() * KR;
        const CMatrix rhs = hadamard(A.adjoint() * A, B.adjoint() * B);
        REQUIRE(rel_diff(lhs, rhs) <= 1e-12);
    }
}

TEST_CASE("cp_reconstruct", "[tensor_core]")
{
    SECTION("rank-1 ones")
    {
        const FactorSet F(CMatrix::Ones(2, 1), CMatrix::Ones(3, 1), CMatrix::Ones(2, 1), CMatrix::Ones(2, 1));
        CHECK(cp_reconstruct(F) == ComplexTensor4::constant({2, 3, 2, 2}, 1.0));
    }
    SECTION("delta")
    {
        const FactorSet F(unit_column(2, 0), unit_column(2, 0), unit_column(2, 0), unit_column(2, 0));
        const auto X = cp_reconstruct(F);
        CHECK(X(0, 0, 0, 0) == cd(1.0));
        CHECK(X.data().cwiseAbs().sum() == 1.0);
    }
    SECTION("matches the loop oracle on random instances")
    {
        Rng rng(23);
        std::uniform_int_distribution<Index> dim(1, 4);
        for (int trial = 0; trial < 100; ++trial)
        {
            const Index R = dim(rng);
            const FactorSet F(random_cmatrix(dim(rng), R, rng), random_cmatrix(dim(rng), R, rng),
                              random_cmatrix(dim(rng), R, rng), random_cmatrix(dim(rng), R, rng));
            REQUIRE(rel_diff(cp_loop_oracle(F), cp_reconstruct(F)) <= 1e-12);
        }
    }
    SECTION("mode-4 unfolding identity")
    {
        Rng rng(29);
        const FactorSet F(random_cmatrix(3, 2, rng), random_cmatrix(2, 2, rng), random_cmatrix(4, 2, rng),
                          random_cmatrix(2, 2, rng));
        const CMatrix X4 = mode_n_unfold(cp_reconstruct(F), 4);
        const CMatrix expect = F[3] * khatri_rao({F[2], F[1], F[0]}).transpose();
        CHECK(rel_diff(expect, X4) <= 1e-13);
    }
    CHECK_THROWS_AS(cp_reconstruct(FactorSet(CMatrix::Ones(2, 1), CMatrix::Ones(2, 1), CMatrix::Ones(2, 1),
                                             CMatrix::Ones(2, 1)),
                                   Dims4{2, 2, 2, 3}),
                    std::invalid_argument);
    CHECK_THROWS_AS(FactorSet(CMatrix::Ones(2, 1), CMatrix::Ones(2, 2), CMatrix::Ones(2, 1), CMatrix::Ones(2, 1)),
                    std::invalid_argument);
}

TEST_CASE("relative_error", "[tensor_core]")
{
    Rng rng(31);
    const auto X = chanest::testing::random_tensor({3, 2, 4, 2}, rng);
    CHECK(relative_error(X, X) == 0.0);
    CHECK(relative_error(X, ComplexTensor4(X.dims())) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(relative_error(X, 2.0 * X) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(relative_error(ComplexTensor4(X.dims()), X), std::invalid_argument);
    CHECK_THROWS_AS(relative_error(X, ComplexTensor4({3, 2, 4, 1})), std::invalid_argument);

    // invariant under a common nonzero scalar
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial)
    {
        const auto Y = chanest::testing::random_tensor(X.dims(), rng);
        const cd s(u(rng), u(rng));
        REQUIRE(relative_error(s * X, s * Y) == Catch::Approx(relative_error(X, Y)).epsilon(1e-12));
    }
}
