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

#ifndef CHANEST_TENSOR_CORE_HPP
#define CHANEST_TENSOR_CORE_HPP

// Dense fourth-order complex tensors and the structured matrix products
// used by the CP decomposers.
//
// Layout: for 0-based multi-index (i1,i2,i3,i4) the linear offset is
//   i1 + i2*I1 + i3*I1*I2 + i4*I1*I2*I3
// (first mode fastest). Modes are numbered 1..4 in the public API, so
// "mode-4 unfolding" reads the same as in the literature.

#include "chanest/common.hpp"

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chanest {

using Dims4 = std::array<Index, 4>;

inline std::string dims_to_string(const Dims4 &d)
{
    return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + "," +
           std::to_string(d[3]) + ")";
}

class ComplexTensor4
{
  public:
    ComplexTensor4() : ComplexTensor4(Dims4{1, 1, 1, 1}) {}

    explicit ComplexTensor4(const Dims4 &dims) : dims_(dims)
    {
        check_dims(dims_);
        data_ = CVector::Zero(product());
    }

    ComplexTensor4(const Dims4 &dims, CVector data) : dims_(dims), data_(std::move(data))
    {
        check_dims(dims_);
        if (data_.size() != product())
            throw std::invalid_argument("ComplexTensor4: data length " + std::to_string(data_.size()) +
                                        " does not match dims " + dims_to_string(dims_));
    }

    static ComplexTensor4 constant(const Dims4 &dims, cd value)
    {
        ComplexTensor4 t(dims);
        t.data_.setConstant(value);
        return t;
    }

    const Dims4 &dims() const { return dims_; }

    /// Extent of mode n (1-based).
    Index dim(int n) const
    {
        if (n < 1 || n > 4)
            throw std::invalid_argument("ComplexTensor4::dim: mode must be in 1..4");
        return dims_[static_cast<std::size_t>(n - 1)];
    }

    Index size() const { return data_.size(); }

    Index offset(Index i1, Index i2, Index i3, Index i4) const
    {
        return i1 + dims_[0] * (i2 + dims_[1] * (i3 + dims_[2] * i4));
    }

    cd &operator()(Index i1, Index i2, Index i3, Index i4) { return data_(offset(i1, i2, i3, i4)); }
    const cd &operator()(Index i1, Index i2, Index i3, Index i4) const { return data_(offset(i1, i2, i3, i4)); }

    CVector &data() { return data_; }
    const CVector &data() const { return data_; }

    double squared_norm() const { return data_.squaredNorm(); }
    double norm() const { return data_.norm(); }

    ComplexTensor4 &operator+=(const ComplexTensor4 &o)
    {
        require_same_dims(o, "operator+=");
        data_ += o.data_;
        return *this;
    }
    ComplexTensor4 &operator-=(const ComplexTensor4 &o)
    {
        require_same_dims(o, "operator-=");
        data_ -= o.data_;
        return *this;
    }
    ComplexTensor4 &operator*=(cd s)
    {
        data_ *= s;
        return *this;
    }

    friend ComplexTensor4 operator+(ComplexTensor4 a, const ComplexTensor4 &b) { return a += b; }
    friend ComplexTensor4 operator-(ComplexTensor4 a, const ComplexTensor4 &b) { return a -= b; }
    friend ComplexTensor4 operator*(cd s, ComplexTensor4 a) { return a *= s; }
    friend ComplexTensor4 operator*(ComplexTensor4 a, cd s) { return a *= s; }

    bool operator==(const ComplexTensor4 &o) const { return dims_ == o.dims_ && data_ == o.data_; }

    void require_same_dims(const ComplexTensor4 &o, const char *what) const
    {
        if (dims_ != o.dims_)
            throw std::invalid_argument(std::string(what) + ": dimension mismatch " + dims_to_string(dims_) +
                                        " vs " + dims_to_string(o.dims_));
    }

  private:
    static void check_dims(const Dims4 &d)
    {
        for (Index v : d)
            if (v < 1)
                throw std::invalid_argument("ComplexTensor4: every dimension must be >= 1, got " + dims_to_string(d));
    }
    Index product() const { return dims_[0] * dims_[1] * dims_[2] * dims_[3]; }

    Dims4 dims_;
    CVector data_;
};

/// The four CP factor matrices; column r of every factor belongs to the
/// r-th rank-one term.
struct FactorSet
{
    std::array<CMatrix, 4> factors;

    FactorSet() = default;
    FactorSet(CMatrix a1, CMatrix a2, CMatrix a3, CMatrix a4)
        : factors{std::move(a1), std::move(a2), std::move(a3), std::move(a4)}
    {
        validate();
    }

    CMatrix &operator[](std::size_t i) { return factors[i]; }
    const CMatrix &operator[](std::size_t i) const { return factors[i]; }

    Index rank() const { return factors[0].cols(); }
    Dims4 dims() const { return {factors[0].rows(), factors[1].rows(), factors[2].rows(), factors[3].rows()}; }

    void validate() const
    {
        const Index r = factors[0].cols();
        if (r < 1)
            throw std::invalid_argument("FactorSet: rank must be >= 1");
        for (const auto &f : factors)
            if (f.cols() != r)
                throw std::invalid_argument("FactorSet: all factors must share the column count");
    }
};

/// Mode-n unfolding (n in 1..4). Row = index along mode n; the column
/// index combines the remaining modes in ascending order, lowest fastest.
inline CMatrix mode_n_unfold(const ComplexTensor4 &X, int n)
{
    if (n < 1 || n > 4)
        throw std::invalid_argument("mode_n_unfold: mode index must be in 1..4, got " + std::to_string(n));
    const Dims4 &d = X.dims();
    const auto m = static_cast<std::size_t>(n - 1);
    const Index rows = d[m];
    CMatrix out(rows, X.size() / rows);
    for (Index i4 = 0; i4 < d[3]; ++i4)
        for (Index i3 = 0; i3 < d[2]; ++i3)
            for (Index i2 = 0; i2 < d[1]; ++i2)
                for (Index i1 = 0; i1 < d[0]; ++i1)
                {
                    const std::array<Index, 4> idx{i1, i2, i3, i4};
                    Index col = 0, stride = 1;
                    for (std::size_t k = 0; k < 4; ++k)
                    {
                        if (k == m)
                            continue;
                        col += idx[k] * stride;
                        stride *= d[k];
                    }
                    out(idx[m], col) = X(i1, i2, i3, i4);
                }
    return out;
}

/// Inverse of mode_n_unfold.
inline ComplexTensor4 mode_n_fold(const CMatrix &M, int n, const Dims4 &dims)
{
    if (n < 1 || n > 4)
        throw std::invalid_argument("mode_n_fold: mode index must be in 1..4, got " + std::to_string(n));
    ComplexTensor4 X(dims);
    const auto m = static_cast<std::size_t>(n - 1);
    if (M.rows() != dims[m] || M.rows() * M.cols() != X.size())
        throw std::invalid_argument("mode_n_fold: matrix shape does not match dims " + dims_to_string(dims));
    for (Index i4 = 0; i4 < dims[3]; ++i4)
        for (Index i3 = 0; i3 < dims[2]; ++i3)
            for (Index i2 = 0; i2 < dims[1]; ++i2)
                for (Index i1 = 0; i1 < dims[0]; ++i1)
                {
                    const std::array<Index, 4> idx{i1, i2, i3, i4};
                    Index col = 0, stride = 1;
                    for (std::size_t k = 0; k < 4; ++k)
                    {
                        if (k == m)
                            continue;
                        col += idx[k] * stride;
                        stride *= dims[k];
                    }
                    X(i1, i2, i3, i4) = M(idx[m], col);
                }
    return X;
}

/// Column-wise Kronecker product; the row index of A varies slowest.
inline CMatrix khatri_rao(const CMatrix &A, const CMatrix &B)
{
    if (A.cols() != B.cols())
        throw std::invalid_argument("khatri_rao: column-count mismatch (" + std::to_string(A.cols()) + " vs " +
                                    std::to_string(B.cols()) + ")");
    const Index m = A.rows(), n = B.rows();
    CMatrix out(m * n, A.cols());
    for (Index r = 0; r < A.cols(); ++r)
        for (Index i = 0; i < m; ++i)
            out.col(r).segment(i * n, n) = A(i, r) * B.col(r);
    return out;
}

/// Left-to-right chain: khatri_rao({A, B, C}) == (A ⊙ B) ⊙ C.
inline CMatrix khatri_rao(std::initializer_list<std::reference_wrapper<const CMatrix>> mats)
{
    if (mats.size() == 0)
        throw std::invalid_argument("khatri_rao: empty operand list");
    auto it = mats.begin();
    CMatrix out = it->get();
    for (++it; it != mats.end(); ++it)
        out = khatri_rao(out, it->get());
    return out;
}

inline CMatrix kronecker(const CMatrix &A, const CMatrix &B)
{
    const Index p = B.rows(), q = B.cols();
    CMatrix out(A.rows() * p, A.cols() * q);
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < A.cols(); ++j)
            out.block(i * p, j * q, p, q) = A(i, j) * B;
    return out;
}

inline CMatrix hadamard(const CMatrix &A, const CMatrix &B)
{
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw std::invalid_argument("hadamard: shape mismatch");
    return A.cwiseProduct(B);
}

/// Sum of R rank-one terms. Each (i3, i4) slice of the storage layout is
/// (A2 ⊙ A1) diag(A3(i3,:)) A4(i4,:)^T, so only the I1 I2 x R Khatri-Rao
/// block is ever formed.
inline ComplexTensor4 cp_reconstruct(const FactorSet &F, const Dims4 &dims)
{
    F.validate();
    if (F.dims() != dims)
        throw std::invalid_argument("cp_reconstruct: factor rows " + dims_to_string(F.dims()) +
                                    " do not match dims " + dims_to_string(dims));
    const CMatrix W = khatri_rao(F[1], F[0]);
    const Index block = dims[0] * dims[1];
    ComplexTensor4 X(dims);
    CMatrix Z(F.rank(), dims[3]);
    CMatrix slab(block, dims[3]);
    for (Index i3 = 0; i3 < dims[2]; ++i3)
    {
        Z = F[2].row(i3).transpose().asDiagonal() * F[3].transpose();
        slab.noalias() = W * Z;
        for (Index i4 = 0; i4 < dims[3]; ++i4)
            X.data().segment(X.offset(0, 0, i3, i4), block) = slab.col(i4);
    }
    return X;
}

inline ComplexTensor4 cp_reconstruct(const FactorSet &F) { return cp_reconstruct(F, F.dims()); }

/// ||X - Xhat||_F^2 / ||X||_F^2.
inline double relative_error(const ComplexTensor4 &X, const ComplexTensor4 &Xhat)
{
    X.require_same_dims(Xhat, "relative_error");
    const double ref = X.squared_norm();
    if (!(ref > 0.0))
        throw std::invalid_argument("relative_error: reference tensor has zero norm");
    return (X.data() - Xhat.data()).squaredNorm() / ref;
}

} // namespace chanest

#endif // CHANEST_TENSOR_CORE_HPP
