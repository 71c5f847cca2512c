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

#ifndef CHANEST_VSD_FORT_HPP
#define CHANEST_VSD_FORT_HPP

// One-pass Vandermonde structured decomposition of fourth-order CP
// tensors whose first three factors are Vandermonde:
//
//   X = [[ A1, A2, A3, A4 ]],  A1, A2, A3 Vandermonde with unit-modulus generators.
//
// Pipeline: spatial smoothing (Hankelization) -> SVD signal subspace ->
// shift-invariance EVD for the mode-1 generators -> per-component
// contractions for the mode-2/3 generators -> closed-form LS for A4.
// The channel front end (estimate_channel) then maps the mode-3 generators
// to delays and rebuilds the full-band channel.

#include "chanest/common.hpp"
#include "chanest/linalg.hpp"
#include "chanest/tensor_core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chanest::vsd {

/// Window sizes for the three Vandermonde modes; K_i + L_i = I_i + 1.
struct SmoothingParams
{
    Index K1 = 2, L1 = 1, K2 = 1, L2 = 1, K3 = 1, L3 = 1;

    Index rows() const { return K1 * K2 * K3; }
    Index cols(Index I4) const { return L1 * L2 * L3 * I4; }

    /// min((K1-1) K2 K3, L1 L2 L3 I4): the largest rank this split can resolve.
    Index capacity(Index I4) const { return std::min((K1 - 1) * K2 * K3, L1 * L2 * L3 * I4); }

    bool consistent_with(const Dims4 &d) const
    {
        return K1 >= 2 && K2 >= 1 && K3 >= 1 && L1 >= 1 && L2 >= 1 && L3 >= 1 && K1 + L1 == d[0] + 1 &&
               K2 + L2 == d[1] + 1 && K3 + L3 == d[2] + 1;
    }

    void validate(const Dims4 &d) const
    {
        if (!consistent_with(d))
            throw std::invalid_argument("SmoothingParams " + to_string() + " inconsistent with dims " +
                                        dims_to_string(d));
    }

    std::string to_string() const
    {
        return "K=(" + std::to_string(K1) + "," + std::to_string(K2) + "," + std::to_string(K3) + ") L=(" +
               std::to_string(L1) + "," + std::to_string(L2) + "," + std::to_string(L3) + ")";
    }

    bool operator==(const SmoothingParams &) const = default;
};

struct BoundResult
{
    Index bound = 0;
    std::optional<SmoothingParams> smoothing; // empty when bound == 0
};

/// Generic uniqueness bound: the maximum over all admissible smoothings of
/// min((K1-1) K2 K3, L1 L2 L3 I4). Ties go to the most balanced split
/// (smallest |K1-L1|, then |K2-L2|, then |K3-L3|), then to larger K.
inline BoundResult generic_bound(const Dims4 &d)
{
    for (Index v : d)
        if (v < 1)
            throw std::invalid_argument("generic_bound: dims must be >= 1");
    BoundResult best;
    auto key = [](const SmoothingParams &s) {
        return std::array<Index, 6>{std::abs(s.K1 - s.L1), std::abs(s.K2 - s.L2), std::abs(s.K3 - s.L3),
                                    -s.K1, -s.K2, -s.K3};
    };
    for (Index K1 = 2; K1 <= d[0]; ++K1)
        for (Index K2 = 1; K2 <= d[1]; ++K2)
            for (Index K3 = 1; K3 <= d[2]; ++K3)
            {
                const SmoothingParams s{K1, d[0] + 1 - K1, K2, d[1] + 1 - K2, K3, d[2] + 1 - K3};
                const Index v = s.capacity(d[3]);
                if (v <= 0)
                    continue;
                if (v > best.bound || (v == best.bound && key(s) < key(*best.smoothing)))
                {
                    best.bound = v;
                    best.smoothing = s;
                }
            }
    return best;
}

/// Vandermonde matrix with column r = (1, z_r, z_r^2, ...).
inline CMatrix vandermonde(const CVector &z, Index rows)
{
    CMatrix V(rows, z.size());
    for (Index r = 0; r < z.size(); ++r)
    {
        cd p{1.0, 0.0};
        for (Index i = 0; i < rows; ++i)
        {
            V(i, r) = p;
            p *= z(r);
        }
    }
    return V;
}

// ---------------------------------------------------------------------------
// Exact uniqueness test

struct UniquenessCheck
{
    bool unique = false;
    bool distinct = false;
    Index rank = 0;
    Index rank_shifted = 0; // rank of A1(K1-1) ⊙ A2(K2) ⊙ A3(K3)
    Index rank_right = 0;   // rank of A1(L1) ⊙ A2(L2) ⊙ A3(L3) ⊙ A4
    std::string diagnostic;
};

/// Checks the exact (deterministic) uniqueness conditions for a given
/// smoothing: distinct mode-1 generators and full column rank of the two
/// structured Khatri-Rao products.
inline UniquenessCheck check_exact_uniqueness(const FactorSet &F, const SmoothingParams &sp, double rank_tol = 1e-10,
                                              double distinct_tol = 1e-8)
{
    F.validate();
    sp.validate(F.dims());
    const CMatrix &A1 = F[0];
    const Index R = F.rank();

    // A1 must be Vandermonde up to a per-column scale.
    CVector z1(R);
    for (Index r = 0; r < R; ++r)
    {
        if (std::abs(A1(0, r)) == 0.0)
            throw std::invalid_argument("check_exact_uniqueness: A1 column " + std::to_string(r) + " is not Vandermonde");
        z1(r) = A1(1, r) / A1(0, r);
        for (Index i = 1; i < A1.rows(); ++i)
        {
            const cd expect = A1(i - 1, r) * z1(r);
            if (std::abs(A1(i, r) - expect) > 1e-8 * std::max(1.0, std::abs(A1(i, r))))
                throw std::invalid_argument("check_exact_uniqueness: A1 column " + std::to_string(r) +
                                            " is not Vandermonde");
        }
    }

    UniquenessCheck out;
    out.rank = R;
    out.distinct = true;
    for (Index m = 0; m < R && out.distinct; ++m)
        for (Index n = m + 1; n < R; ++n)
            if (std::abs(z1(m) - z1(n)) <= distinct_tol)
            {
                out.distinct = false;
                out.diagnostic = "distinctness: z1 generators " + std::to_string(m) + " and " + std::to_string(n) +
                                 " coincide";
                break;
            }

    const CMatrix a1s = A1.topRows(sp.K1 - 1), a2s = F[1].topRows(sp.K2), a3s = F[2].topRows(sp.K3);
    const CMatrix a1r = A1.topRows(sp.L1), a2r = F[1].topRows(sp.L2), a3r = F[2].topRows(sp.L3);
    const CMatrix left = khatri_rao({a1s, a2s, a3s});
    const CMatrix right = khatri_rao({a1r, a2r, a3r, F[3]});
    out.rank_shifted = linalg::numerical_rank(left, rank_tol);
    out.rank_right = linalg::numerical_rank(right, rank_tol);

    if (out.distinct && out.rank_shifted < R)
        out.diagnostic = "rank: shifted Khatri-Rao product has rank " + std::to_string(out.rank_shifted) + " < " +
                         std::to_string(R);
    else if (out.distinct && out.rank_right < R)
        out.diagnostic = "rank: right Khatri-Rao product has rank " + std::to_string(out.rank_right) + " < " +
                         std::to_string(R);
    out.unique = out.distinct && out.rank_shifted == R && out.rank_right == R;
    return out;
}

// ---------------------------------------------------------------------------
// Smoothing and subspace

/// Spatially smoothed (Hankelized) matrix of size (K1 K2 K3) x (L1 L2 L3 I4):
/// entry [rho(k1,k2,k3), gamma(l1,l2,l3,i4)] = X[k1+l1, k2+l2, k3+l3, i4] (0-based) with
///   rho   = k3 + k2 K3 + k1 K2 K3
///   gamma = i4 + l3 I4 + l2 L3 I4 + l1 L2 L3 I4.
/// For exact CP data this equals (A1(K1) ⊙ A2(K2) ⊙ A3(K3)) (A1(L1) ⊙ A2(L2) ⊙ A3(L3) ⊙ A4)^T.
inline CMatrix hankelize(const ComplexTensor4 &X, const SmoothingParams &sp)
{
    const Dims4 &d = X.dims();
    sp.validate(d);
    const Index I4 = d[3];
    CMatrix H(sp.rows(), sp.cols(I4));
    for (Index l1 = 0; l1 < sp.L1; ++l1)
        for (Index l2 = 0; l2 < sp.L2; ++l2)
            for (Index l3 = 0; l3 < sp.L3; ++l3)
                for (Index i4 = 0; i4 < I4; ++i4)
                {
                    const Index col = i4 + I4 * (l3 + sp.L3 * (l2 + sp.L2 * l1));
                    for (Index k1 = 0; k1 < sp.K1; ++k1)
                        for (Index k2 = 0; k2 < sp.K2; ++k2)
                            for (Index k3 = 0; k3 < sp.K3; ++k3)
                                H(k3 + sp.K3 * (k2 + sp.K2 * k1), col) = X(k1 + l1, k2 + l2, k3 + l3, i4);
                }
    return H;
}

struct RankRule
{
    enum class Kind
    {
        RelativeThreshold, // sigma_i > eps_rel * sigma_1
        Fixed,             // exactly `fixed` components
        NoiseFloor         // sigma_i > max(eps_rel sigma_1, noise_factor * median(sigma))
    };
    Kind kind = Kind::RelativeThreshold;
    double eps_rel = 1e-2;
    Index fixed = 0;
    double noise_factor = 3.0;

    static RankRule relative(double eps) { return {Kind::RelativeThreshold, eps, 0, 3.0}; }
    static RankRule fixed_rank(Index r) { return {Kind::Fixed, 1e-2, r, 3.0}; }
    static RankRule noise_floor(double factor, double eps = 1e-6) { return {Kind::NoiseFloor, eps, 0, factor}; }
};

struct Subspace
{
    CMatrix U;               // leading R left singular vectors
    RVector singular_values; // descending; the leading block only for the truncated solver
    Index rank = 0;
    bool truncated = false;
};

/// How the leading singular vectors are computed. `Truncated` runs a
/// randomized subspace iteration for the leading `block` components and
/// falls back to the full SVD whenever the rank rule reaches past the block
/// (and always for the noise-floor rule, which needs the whole spectrum).
struct SubspaceSolver
{
    enum class Kind
    {
        Full,
        Truncated
    };
    Kind kind = Kind::Full;
    Index block = 48;
    int power_iters = 4;
    std::uint64_t seed = 0x243F6A8885A308D3ull;
};

namespace detail {

inline Index count_rank(const RVector &s, const RankRule &rule)
{
    Index R = 0;
    switch (rule.kind)
    {
    case RankRule::Kind::Fixed:
        if (rule.fixed < 1)
            throw std::invalid_argument("signal_subspace: fixed rank must be >= 1");
        return rule.fixed;
    case RankRule::Kind::RelativeThreshold:
        for (Index i = 0; i < s.size(); ++i)
            if (s(i) > rule.eps_rel * s(0))
                ++R;
        return R;
    case RankRule::Kind::NoiseFloor: {
        RVector sorted = s;
        std::sort(sorted.data(), sorted.data() + sorted.size());
        const double median = sorted(sorted.size() / 2);
        const double thr = std::max(rule.eps_rel * s(0), rule.noise_factor * median);
        for (Index i = 0; i < s.size(); ++i)
            if (s(i) > thr)
                ++R;
        return R;
    }
    }
    return R;
}

inline CMatrix orthonormal_basis(const CMatrix &Y)
{
    Eigen::HouseholderQR<CMatrix> qr(Y);
    return qr.householderQ() * CMatrix::Identity(Y.rows(), Y.cols());
}

// Randomized range finder with power iterations; returns the SVD of the
// projected matrix lifted back to the row space of X.
inline void truncated_svd(const CMatrix &X, Index k, int power_iters, std::uint64_t seed, CMatrix &U, RVector &s)
{
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    CMatrix omega(X.cols(), k);
    for (Index i = 0; i < omega.size(); ++i)
    {
        const double re = n01(rng);
        const double im = n01(rng);
        omega.data()[i] = cd(re, im);
    }
    CMatrix Q = orthonormal_basis(X * omega);
    for (int q = 0; q < power_iters; ++q)
    {
        const CMatrix P = orthonormal_basis(X.adjoint() * Q);
        Q = orthonormal_basis(X * P);
    }
    const CMatrix B = Q.adjoint() * X;
    Eigen::BDCSVD<CMatrix> svd(B, Eigen::ComputeThinU);
    U = Q * svd.matrixU();
    s = svd.singularValues();
}

} // namespace detail

/// SVD of the smoothed matrix and rank selection. The rank is clipped to
/// min(rows, cols) and to `cap` (the smoothing capacity) unless the rule
/// is Fixed, which is honored as given (still bounded by the column count
/// of U).
inline Subspace signal_subspace(const CMatrix &Xhank, const RankRule &rule, Index cap = -1,
                                const SubspaceSolver &solver = {})
{
    if (Xhank.size() == 0 || Xhank.cwiseAbs2().sum() == 0.0)
        throw std::invalid_argument("signal_subspace: zero matrix");
    const Index maxr = std::min(Xhank.rows(), Xhank.cols());
    auto clip = [&](Index R) {
        R = std::min(R, maxr);
        if (rule.kind != RankRule::Kind::Fixed && cap >= 0)
            R = std::min(R, cap);
        return R;
    };

    Subspace out;
    constexpr Index kOversample = 8;
    if (solver.kind == SubspaceSolver::Kind::Truncated && rule.kind != RankRule::Kind::NoiseFloor &&
        solver.block >= 1 && solver.block + kOversample < maxr)
    {
        CMatrix U;
        RVector s;
        detail::truncated_svd(Xhank, solver.block + kOversample, solver.power_iters, solver.seed, U, s);
        const Index R = clip(detail::count_rank(s, rule));
        if (R <= solver.block)
        {
            out.singular_values = s;
            out.rank = R;
            out.U = U.leftCols(R);
            out.truncated = true;
            return out;
        }
    }

    Eigen::BDCSVD<CMatrix> svd(Xhank, Eigen::ComputeThinU);
    out.singular_values = svd.singularValues();
    out.rank = clip(detail::count_rank(out.singular_values, rule));
    out.U = svd.matrixU().leftCols(out.rank);
    return out;
}

// ---------------------------------------------------------------------------
// Generator recovery

struct GeneratorEstimate
{
    CVector z1, z2, z3; // unit modulus, length R
    CMatrix M;          // eigenvectors of pinv(U1) U2, columns sorted by arg(z1)
    Index rank = 0;
    double eigvec_condition = 1.0;
    bool well_conditioned = true;
};

/// Mode-1 shift invariance: EVD of pinv(U1) U2 with U1/U2 the first/last
/// (K1-1) K2 K3 rows of the signal subspace. Eigenvalues are projected to the
/// unit circle and the pairs sorted by ascending phase.
inline GeneratorEstimate shift_evd_z1(const CMatrix &U_signal, const SmoothingParams &sp, Index R,
                                      double cond_limit = 1e12, double pinv_cutoff = linalg::kPinvCutoff)
{
    if (sp.K1 < 2)
        throw std::invalid_argument("shift_evd_z1: K1 must be >= 2");
    if (U_signal.rows() != sp.rows())
        throw std::invalid_argument("shift_evd_z1: U_signal must have K1*K2*K3 rows");
    if (R < 1 || R > U_signal.cols())
        throw std::invalid_argument("shift_evd_z1: rank out of range");
    const Index block = sp.K2 * sp.K3;
    const Index n = (sp.K1 - 1) * block;
    const CMatrix U1 = U_signal.topRows(n).leftCols(R);
    const CMatrix U2 = U_signal.middleRows(block, n).leftCols(R);
    const CMatrix Phi = linalg::pinv(U1, pinv_cutoff) * U2;

    auto ed = linalg::eig(Phi);
    std::vector<Index> order(static_cast<std::size_t>(R));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::arg(ed.values(a)) < std::arg(ed.values(b)); });

    GeneratorEstimate g;
    g.rank = R;
    g.z1.resize(R);
    g.M.resize(R, R);
    for (Index i = 0; i < R; ++i)
    {
        g.z1(i) = unit_modulus(ed.values(order[static_cast<std::size_t>(i)]));
        g.M.col(i) = ed.vectors.col(order[static_cast<std::size_t>(i)]);
    }
    g.eigvec_condition = linalg::condition_number(g.M);
    g.well_conditioned = std::isfinite(g.eigvec_condition) && g.eigvec_condition <= cond_limit;
    g.z2 = CVector::Ones(R);
    g.z3 = CVector::Ones(R);
    return g;
}

namespace detail {

// sum_{k < K} conj(a(k)) * w.segment(k * block, block)
inline CVector contract_leading(const CVector &w, const CVector &a, Index K, Index block)
{
    CVector out = CVector::Zero(block);
    for (Index k = 0; k < K; ++k)
        out += std::conj(a(k)) * w.segment(k * block, block);
    return out;
}

// Least-squares shift ratio pinv(v[0 : n-step]) v[step : n], unit-normalized.
inline cd shift_ratio(const CVector &v, Index step, const char *who)
{
    const Index n = v.size() - step;
    const auto top = v.head(n);
    const auto bottom = v.segment(step, n);
    const double den = top.squaredNorm();
    if (!(den > 1e-300) || den <= 1e-28 * v.squaredNorm())
        throw std::invalid_argument(std::string(who) + ": near-zero top block");
    return unit_modulus(top.dot(bottom) / den);
}

} // namespace detail

/// (a1(K1)^H ⊗ I_{K2 K3}) U m_r: column r of A2(K2) ⊙ A3(K3) up to scale.
inline CVector recover_kr23(const CMatrix &U_signal, const CMatrix &M, const CMatrix &A1_hat,
                            const SmoothingParams &sp, Index r)
{
    if (r < 0 || r >= M.cols())
        throw std::out_of_range("recover_kr23: component index out of range");
    if (A1_hat.rows() < sp.K1)
        throw std::invalid_argument("recover_kr23: A1_hat needs at least K1 rows");
    const CVector w = U_signal.leftCols(M.rows()) * M.col(r);
    return detail::contract_leading(w, A1_hat.col(r), sp.K1, sp.K2 * sp.K3);
}

/// Mode-2 generator from a length K2*K3 Khatri-Rao column.
inline cd extract_z2(const CVector &v, const SmoothingParams &sp)
{
    if (sp.K2 < 2)
        throw std::invalid_argument("extract_z2: K2 must be >= 2");
    if (v.size() != sp.K2 * sp.K3)
        throw std::invalid_argument("extract_z2: vector length must be K2*K3");
    return detail::shift_ratio(v, sp.K3, "extract_z2");
}

struct Mode3Estimate
{
    CVector a3;           // length K3, as contracted (arbitrary scale)
    cd z3{1.0, 0.0};      // unit modulus
    bool unobservable = false; // K3 < 2
};

/// a3(K3) = (a2(K2)^H ⊗ I_K3)(a1(K1)^H ⊗ I_{K2 K3}) U m_r and its generator.
inline Mode3Estimate recover_a3_z3(const CMatrix &U_signal, const CMatrix &M, const CMatrix &A1_hat,
                                   const CMatrix &A2_hat, const SmoothingParams &sp, Index r)
{
    if (A2_hat.rows() < sp.K2)
        throw std::invalid_argument("recover_a3_z3: A2_hat needs at least K2 rows");
    if (r < 0 || r >= A2_hat.cols())
        throw std::out_of_range("recover_a3_z3: component index out of range for A2_hat");
    const CVector v = recover_kr23(U_signal, M, A1_hat, sp, r);
    Mode3Estimate out;
    out.a3 = detail::contract_leading(v, A2_hat.col(r), sp.K2, sp.K3);
    if (sp.K3 < 2)
        out.unobservable = true;
    else
        out.z3 = detail::shift_ratio(out.a3, 1, "recover_a3_z3");
    return out;
}

struct FourthFactor
{
    CMatrix A4;
    bool rank_deficient = false;
};

/// Closed-form least squares for A4 given A1..A3:
///   A4 = X_(4) conj(A3 ⊙ A2 ⊙ A1) pinv(conj(A3^H A3 * A2^H A2 * A1^H A1)).
/// The conjugate on the Gram product is what makes this the exact
/// Frobenius minimizer for complex data.
inline FourthFactor solve_fourth_factor(const ComplexTensor4 &X, const CMatrix &A1, const CMatrix &A2,
                                        const CMatrix &A3, double pinv_cutoff = linalg::kPinvCutoff)
{
    const Dims4 &d = X.dims();
    if (A1.rows() != d[0] || A2.rows() != d[1] || A3.rows() != d[2])
        throw std::invalid_argument("solve_fourth_factor: factor rows do not match tensor dims");
    if (A1.cols() != A2.cols() || A1.cols() != A3.cols())
        throw std::invalid_argument("solve_fourth_factor: factor column counts differ");
    const Index n = d[0] * d[1] * d[2];
    const CMatrix kr = khatri_rao({A3, A2, A1});
    const Eigen::Map<const CMatrix> X4t(X.data().data(), n, d[3]); // X_(4)^T
    const CMatrix mttkrp = X4t.transpose() * kr.conjugate();
    const CMatrix G = ((A3.adjoint() * A3).cwiseProduct(A2.adjoint() * A2).cwiseProduct(A1.adjoint() * A1)).conjugate();
    FourthFactor out;
    out.rank_deficient = linalg::numerical_rank(G, pinv_cutoff) < G.rows();
    out.A4 = mttkrp * linalg::pinv(G, pinv_cutoff);
    return out;
}

/// Normalized delays from comb-domain delay generators g = exp(-j 2 pi tau s):
/// tau = frac(-arg(g) / 2 pi) / s, in [0, 1/s).
inline std::vector<double> recover_delays(const CVector &z3_comb, Index stride)
{
    if (stride < 1)
        throw std::invalid_argument("recover_delays: stride must be >= 1");
    std::vector<double> tau(static_cast<std::size_t>(z3_comb.size()));
    for (Index r = 0; r < z3_comb.size(); ++r)
    {
        double f = -std::arg(z3_comb(r)) / kTwoPi;
        f -= std::floor(f);
        if (f >= 1.0)
            f = 0.0;
        tau[static_cast<std::size_t>(r)] = f / static_cast<double>(stride);
    }
    return tau;
}

// ---------------------------------------------------------------------------
// Channel front end

struct VsdOptions
{
    RankRule rank_rule{};
    SubspaceSolver subspace{};
    std::optional<SmoothingParams> smoothing;
    double pinv_cutoff = linalg::kPinvCutoff;
    double eig_cond_limit = 1e12;
};

inline void to_json(nlohmann::json &j, const VsdOptions &o)
{
    switch (o.rank_rule.kind)
    {
    case RankRule::Kind::Fixed:
        j["rank_rule"] = o.rank_rule.fixed;
        break;
    case RankRule::Kind::RelativeThreshold:
        j["rank_rule"] = "relative-threshold";
        break;
    case RankRule::Kind::NoiseFloor:
        j["rank_rule"] = "noise-floor";
        break;
    }
    j["eps_rel"] = o.rank_rule.eps_rel;
    j["noise_factor"] = o.rank_rule.noise_factor;
    if (o.smoothing)
    {
        const auto &s = *o.smoothing;
        j["smoothing"] = {s.K1, s.L1, s.K2, s.L2, s.K3, s.L3};
    }
    else
        j["smoothing"] = nullptr;
    j["subspace"] = o.subspace.kind == SubspaceSolver::Kind::Full ? "full" : "truncated";
    j["subspace_block"] = o.subspace.block;
    j["power_iters"] = o.subspace.power_iters;
    j["pinv_cutoff"] = o.pinv_cutoff;
    j["eig_cond_limit"] = o.eig_cond_limit;
}

inline void from_json(const nlohmann::json &j, VsdOptions &o)
{
    if (j.contains("eps_rel"))
        o.rank_rule.eps_rel = j.at("eps_rel").get<double>();
    if (j.contains("noise_factor"))
        o.rank_rule.noise_factor = j.at("noise_factor").get<double>();
    if (j.contains("rank_rule"))
    {
        const auto &r = j.at("rank_rule");
        if (r.is_number_integer())
        {
            o.rank_rule.kind = RankRule::Kind::Fixed;
            o.rank_rule.fixed = r.get<Index>();
        }
        else if (r == "relative-threshold")
            o.rank_rule.kind = RankRule::Kind::RelativeThreshold;
        else if (r == "noise-floor")
            o.rank_rule.kind = RankRule::Kind::NoiseFloor;
        else
            throw std::invalid_argument("VsdOptions: unknown rank_rule " + r.dump());
    }
    if (j.contains("smoothing") && !j.at("smoothing").is_null())
    {
        const auto v = j.at("smoothing").get<std::vector<Index>>();
        if (v.size() != 6)
            throw std::invalid_argument("VsdOptions: smoothing needs [K1,L1,K2,L2,K3,L3]");
        o.smoothing = SmoothingParams{v[0], v[1], v[2], v[3], v[4], v[5]};
    }
    if (j.contains("subspace"))
    {
        const auto k = j.at("subspace").get<std::string>();
        if (k == "full")
            o.subspace.kind = SubspaceSolver::Kind::Full;
        else if (k == "truncated")
            o.subspace.kind = SubspaceSolver::Kind::Truncated;
        else
            throw std::invalid_argument("VsdOptions: unknown subspace solver " + k);
    }
    o.subspace.block = j.value("subspace_block", o.subspace.block);
    o.subspace.power_iters = j.value("power_iters", o.subspace.power_iters);
    if (o.subspace.block < 1 || o.subspace.power_iters < 0)
        throw std::invalid_argument("VsdOptions: subspace_block must be >= 1 and power_iters >= 0");
    o.pinv_cutoff = j.value("pinv_cutoff", o.pinv_cutoff);
    o.eig_cond_limit = j.value("eig_cond_limit", o.eig_cond_limit);
}

struct EstimationReport
{
    Index rank = 0;
    SmoothingParams smoothing{};
    RVector singular_values;
    std::vector<double> delays;  // normalized, one per component
    std::vector<double> z1_phase, z2_phase, z3_phase;
    double comb_residual = 0.0;  // relative error on the comb tensor
    double eigvec_condition = 1.0;
    std::vector<std::string> warnings;
};

struct ChannelEstimate
{
    ComplexTensor4 H_full;
    EstimationReport report;
    std::optional<FactorSet> comb_factors; // A(phi), A(theta), D_comb, P
};

/// Full one-pass pipeline on a comb-domain channel tensor of dims
/// (n_col, n_row, N_sc_eff, n_pol); `comb` holds the 1-based subcarrier
/// indices (an arithmetic progression) and K the full-band size.
inline ChannelEstimate estimate_channel(const ComplexTensor4 &H_comb, const std::vector<Index> &comb, Index K,
                                        const VsdOptions &opt = {})
{
    const Dims4 d = H_comb.dims();
    if (static_cast<Index>(comb.size()) != d[2])
        throw std::invalid_argument("estimate_channel: comb size does not match tensor mode 3");
    Index stride = 1;
    if (comb.size() >= 2)
    {
        stride = comb[1] - comb[0];
        for (std::size_t i = 1; i < comb.size(); ++i)
            if (comb[i] - comb[i - 1] != stride || stride < 1)
                throw std::invalid_argument("estimate_channel: comb must be an increasing arithmetic progression");
    }
    if (comb.front() < 1 || comb.back() > K)
        throw std::invalid_argument("estimate_channel: comb index outside 1..K");

    ChannelEstimate out{ComplexTensor4({d[0], d[1], K, d[3]}), {}, std::nullopt};
    EstimationReport &rep = out.report;

    SmoothingParams sp;
    if (opt.smoothing)
    {
        sp = *opt.smoothing;
        sp.validate(d);
    }
    else
    {
        const auto b = generic_bound(d);
        if (!b.smoothing)
            throw std::invalid_argument("estimate_channel: no admissible smoothing for dims " + dims_to_string(d));
        sp = *b.smoothing;
    }
    rep.smoothing = sp;

    if (H_comb.squared_norm() == 0.0)
    {
        rep.warnings.push_back("zero input: rank 0");
        return out;
    }

    const CMatrix Xh = hankelize(H_comb, sp);
    Subspace sub = signal_subspace(Xh, opt.rank_rule, sp.capacity(d[3]), opt.subspace);
    rep.singular_values = sub.singular_values;
    const Index R = sub.rank;
    rep.rank = R;
    if (R == 0)
    {
        rep.warnings.push_back("no significant singular values: rank 0");
        return out;
    }

    GeneratorEstimate g = shift_evd_z1(sub.U, sp, R, opt.eig_cond_limit, opt.pinv_cutoff);
    rep.eigvec_condition = g.eigvec_condition;
    if (!g.well_conditioned)
        rep.warnings.push_back("ill-conditioned eigenvector matrix (cond " + std::to_string(g.eigvec_condition) + ")");

    const CMatrix A1 = vandermonde(g.z1, d[0]);
    const CMatrix W = sub.U * g.M; // column r = U m_r
    const Index block = sp.K2 * sp.K3;
    bool z2_flag = false, z3_flag = false;
    for (Index r = 0; r < R; ++r)
    {
        const CVector v = detail::contract_leading(W.col(r), A1.col(r), sp.K1, block);
        if (sp.K2 >= 2)
            g.z2(r) = detail::shift_ratio(v, sp.K3, "extract_z2");
        else
            z2_flag = true;
        const CVector a2 = vandermonde(g.z2.segment(r, 1), sp.K2).col(0);
        const CVector a3 = detail::contract_leading(v, a2, sp.K2, sp.K3);
        if (sp.K3 >= 2)
            g.z3(r) = detail::shift_ratio(a3, 1, "recover_a3_z3");
        else
            z3_flag = true;
    }
    if (z2_flag)
        rep.warnings.push_back("K2 < 2: mode-2 generators unobservable, set to 1");
    if (z3_flag)
        rep.warnings.push_back("K3 < 2: mode-3 generators unobservable, set to 1");

    const CMatrix A2 = vandermonde(g.z2, d[1]);
    const CMatrix A3c = vandermonde(g.z3, d[2]);
    FourthFactor f4 = solve_fourth_factor(H_comb, A1, A2, A3c, opt.pinv_cutoff);
    if (f4.rank_deficient)
        rep.warnings.push_back("rank-deficient Gram product in fourth-factor solve");

    FactorSet comb_factors(A1, A2, A3c, f4.A4);
    rep.comb_residual = relative_error(H_comb, cp_reconstruct(comb_factors));

    rep.delays = recover_delays(g.z3, stride);
    CMatrix D(K, R);
    for (Index r = 0; r < R; ++r)
        for (Index k = 1; k <= K; ++k)
            D(k - 1, r) = std::polar(1.0, -kTwoPi * rep.delays[static_cast<std::size_t>(r)] *
                                              static_cast<double>(k - comb.front()));
    out.H_full = cp_reconstruct(FactorSet(A1, A2, D, f4.A4));

    for (Index r = 0; r < R; ++r)
    {
        rep.z1_phase.push_back(std::arg(g.z1(r)));
        rep.z2_phase.push_back(std::arg(g.z2(r)));
        rep.z3_phase.push_back(std::arg(g.z3(r)));
    }
    out.comb_factors = std::move(comb_factors);
    return out;
}

} // namespace chanest::vsd

#endif // CHANEST_VSD_FORT_HPP
