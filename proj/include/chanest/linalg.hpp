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

#ifndef CHANEST_LINALG_HPP
#define CHANEST_LINALG_HPP

// Thin wrappers over Eigen and LAPACK for the dense complex kernels the
// estimators need: SVD-based pseudoinverse, numerical rank, and the
// general (non-Hermitian) eigendecomposition.

#include "chanest/common.hpp"

#include <Eigen/SVD>

#include <limits>
#include <stdexcept>
#include <string>

#include <lapacke.h>

namespace chanest::linalg {

inline constexpr double kPinvCutoff = 1e-12;

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// rel_cutoff * sigma_max are treated as zero.
inline CMatrix pinv(const CMatrix &A, double rel_cutoff = kPinvCutoff)
{
    if (A.size() == 0)
        return CMatrix(A.cols(), A.rows());
    Eigen::BDCSVD<CMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RVector &s = svd.singularValues();
    const double cut = (s.size() > 0 ? s(0) : 0.0) * rel_cutoff;
    RVector inv = RVector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > cut && s(i) > 0.0)
            inv(i) = 1.0 / s(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

inline RVector singular_values(const CMatrix &A)
{
    if (A.size() == 0)
        return RVector();
    Eigen::BDCSVD<CMatrix> svd(A);
    return svd.singularValues();
}

/// Number of singular values above rel_tol * sigma_max.
inline Index numerical_rank(const CMatrix &A, double rel_tol)
{
    const RVector s = singular_values(A);
    if (s.size() == 0 || s(0) == 0.0)
        return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > rel_tol * s(0))
            ++r;
    return r;
}

/// 2-norm condition number; infinity for singular input.
inline double condition_number(const CMatrix &A)
{
    const RVector s = singular_values(A);
    if (s.size() == 0)
        return 1.0;
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

struct EigenDecomposition
{
    CVector values;
    CMatrix vectors; // right eigenvectors, unit 2-norm columns
};

/// Eigendecomposition of a general square complex matrix (LAPACK zgeev).
inline EigenDecomposition eig(const CMatrix &A)
{
    if (A.rows() != A.cols())
        throw std::invalid_argument("eig: matrix must be square");
    const lapack_int n = static_cast<lapack_int>(A.rows());
    EigenDecomposition out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    if (n == 0)
        return out;
    CMatrix work = A;
    const lapack_int info = LAPACKE_zgeev(
        LAPACK_COL_MAJOR, 'N', 'V', n,
        reinterpret_cast<lapack_complex_double *>(work.data()), n,
        reinterpret_cast<lapack_complex_double *>(out.values.data()),
        nullptr, n,
        reinterpret_cast<lapack_complex_double *>(out.vectors.data()), n);
    if (info != 0)
        throw std::runtime_error("eig: zgeev failed with info " + std::to_string(info));
    return out;
}

/// Solves X * G = B for Hermitian positive semidefinite G (right division).
/// Uses LDLT when well conditioned, falls back to the pseudoinverse.
/// `used_pinv` reports which branch ran.
inline CMatrix solve_right_hermitian(const CMatrix &B, const CMatrix &G, bool *used_pinv = nullptr)
{
    Eigen::LDLT<CMatrix> ldlt(G);
    const bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12;
    if (used_pinv)
        *used_pinv = !ok;
    if (ok)
    {
        // X G = B  <=>  G^H X^H = B^H, and G is Hermitian.
        return ldlt.solve(B.adjoint()).adjoint();
    }
    return B * pinv(G);
}

} // namespace chanest::linalg

#endif // CHANEST_LINALG_HPP
