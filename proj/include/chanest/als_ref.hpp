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

#ifndef CHANEST_ALS_REF_HPP
#define CHANEST_ALS_REF_HPP

// Unstructured CP-ALS for fourth-order complex tensors. Used as the
// comparison decomposer in the benchmark.

#include "chanest/common.hpp"
#include "chanest/linalg.hpp"
#include "chanest/tensor_core.hpp"

#include <json.hpp>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace chanest::als {

enum class AlsInit
{
    Random,
    SvdBased
};

struct AlsOptions
{
    Index rank = 1;
    int max_iters = 200;
    double rel_tol = 1e-10;
    AlsInit init = AlsInit::SvdBased;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (rank < 1 || max_iters < 1 || !(rel_tol > 0.0))
            throw std::invalid_argument("AlsOptions: need rank >= 1, max_iters >= 1, rel_tol > 0");
    }
};

inline void to_json(nlohmann::json &j, const AlsOptions &o)
{
    j = {{"max_iters", o.max_iters},
         {"rel_tol", o.rel_tol},
         {"init", o.init == AlsInit::SvdBased ? "svd-based" : "random"},
         {"seed", o.seed}};
}

inline void from_json(const nlohmann::json &j, AlsOptions &o)
{
    o.max_iters = j.value("max_iters", o.max_iters);
    o.rel_tol = j.value("rel_tol", o.rel_tol);
    o.seed = j.value("seed", o.seed);
    if (j.contains("init"))
    {
        const auto s = j.at("init").get<std::string>();
        if (s == "svd-based")
            o.init = AlsInit::SvdBased;
        else if (s == "random")
            o.init = AlsInit::Random;
        else
            throw std::invalid_argument("AlsOptions: unknown init " + s);
    }
}

struct AlsResult
{
    FactorSet factors;
    std::vector<double> fit_history; // fit = 1 - ||X - Xhat||_F / ||X||_F after each sweep
    int iterations = 0;
    bool converged = false;
    bool degenerate = false; // zero input
    bool used_pinv = false;  // some Gram solve fell back to the pseudoinverse
};

/// Khatri-Rao product of all factors except `skip`, ordered to match the
/// column index of mode_n_unfold (highest remaining mode slowest).
inline CMatrix khatri_rao_except(const FactorSet &F, std::size_t skip)
{
    CMatrix out;
    bool first = true;
    for (std::size_t m = 4; m-- > 0;)
    {
        if (m == skip)
            continue;
        out = first ? F[m] : khatri_rao(out, F[m]);
        first = false;
    }
    return out;
}

/// Hermitian normal matrix for the mode-n update: conj of the Hadamard
/// product of the other factors' Gram matrices.
inline CMatrix normal_matrix_except(const std::array<CMatrix, 4> &grams, std::size_t skip)
{
    CMatrix G;
    bool first = true;
    for (std::size_t m = 0; m < 4; ++m)
    {
        if (m == skip)
            continue;
        G = first ? grams[m] : CMatrix(G.cwiseProduct(grams[m]));
        first = false;
    }
    return G.conjugate();
}

/// Exact LS update of factor `mode` (0-based) with the others fixed.
inline CMatrix als_update(const std::array<CMatrix, 4> &unfoldings, const FactorSet &F,
                          const std::array<CMatrix, 4> &grams, std::size_t mode, bool *used_pinv = nullptr)
{
    const CMatrix mttkrp = unfoldings[mode] * khatri_rao_except(F, mode).conjugate();
    return linalg::solve_right_hermitian(mttkrp, normal_matrix_except(grams, mode), used_pinv);
}

inline double cp_fit(const ComplexTensor4 &X, const FactorSet &F, double xnorm)
{
    const ComplexTensor4 Xh = cp_reconstruct(F, X.dims());
    return 1.0 - (X.data() - Xh.data()).norm() / xnorm;
}

/// Alternating least squares: each sweep updates A1..A4 in turn by its exact
/// least-squares solution. Columns of A1..A3 are normalized after their
/// update (the scale moves into the next update). Stops after max_iters or
/// when |fit_k - fit_{k-1}| < rel_tol.
inline AlsResult cp_als(const ComplexTensor4 &X, const AlsOptions &opt)
{
    opt.validate();
    const Dims4 d = X.dims();
    const Index total = X.size();
    for (std::size_t m = 0; m < 4; ++m)
        if (opt.rank > total / d[m])
            throw std::invalid_argument("cp_als: rank " + std::to_string(opt.rank) +
                                        " exceeds the mode-" + std::to_string(m + 1) + " unfolding column count " +
                                        std::to_string(total / d[m]));
    const Index R = opt.rank;
    AlsResult res;
    const double xnorm = X.norm();
    if (xnorm == 0.0)
    {
        res.factors = FactorSet(CMatrix::Zero(d[0], R), CMatrix::Zero(d[1], R), CMatrix::Zero(d[2], R),
                                CMatrix::Zero(d[3], R));
        res.fit_history.push_back(1.0);
        res.degenerate = true;
        res.converged = true;
        return res;
    }

    std::array<CMatrix, 4> unf;
    for (std::size_t m = 0; m < 4; ++m)
        unf[m] = mode_n_unfold(X, static_cast<int>(m + 1));

    Rng rng(opt.seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto random_matrix = [&](Index rows, Index cols) {
        CMatrix M(rows, cols);
        for (Index i = 0; i < M.size(); ++i)
        {
            const double re = n01(rng);
            const double im = n01(rng);
            M.data()[i] = cd(re, im);
        }
        return M;
    };

    FactorSet F;
    for (std::size_t m = 0; m < 4; ++m)
    {
        CMatrix A = random_matrix(d[m], R);
        if (opt.init == AlsInit::SvdBased)
        {
            Eigen::BDCSVD<CMatrix> svd(unf[m], Eigen::ComputeThinU);
            const Index k = std::min(R, svd.matrixU().cols());
            A.leftCols(k) = svd.matrixU().leftCols(k);
        }
        F[m] = A;
    }

    std::array<CMatrix, 4> grams;
    for (std::size_t m = 0; m < 4; ++m)
        grams[m] = F[m].adjoint() * F[m];

    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iters; ++it)
    {
        for (std::size_t m = 0; m < 4; ++m)
        {
            bool fell_back = false;
            F[m] = als_update(unf, F, grams, m, &fell_back);
            res.used_pinv = res.used_pinv || fell_back;
            if (m < 3)
            {
                for (Index r = 0; r < R; ++r)
                {
                    const double nr = F[m].col(r).norm();
                    if (nr > 0.0)
                        F[m].col(r) /= nr;
                }
            }
            grams[m] = F[m].adjoint() * F[m];
        }
        const double fit = cp_fit(X, F, xnorm);
        res.fit_history.push_back(fit);
        res.iterations = it + 1;
        if (std::abs(fit - prev) < opt.rel_tol)
        {
            res.converged = true;
            break;
        }
        prev = fit;
    }
    res.factors = F;
    return res;
}

} // namespace chanest::als

#endif // CHANEST_ALS_REF_HPP
