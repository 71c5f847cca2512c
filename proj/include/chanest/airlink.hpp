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

#ifndef CHANEST_AIRLINK_HPP
#define CHANEST_AIRLINK_HPP

// Uplink pilot transmission and the comb least-squares + linear
// interpolation baseline estimator.

#include "chanest/common.hpp"
#include "chanest/tensor_core.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace chanest {

/// Comb pilots. User u (0-based) transmits on subcarriers
/// {o+1, o+1+stride, ...} with o = u mod stride. Users that share a comb
/// (u >= stride) are separated by a length-T_p DFT cover code, so the
/// LS average over the pilot symbols still isolates each user.
struct PilotGrid
{
    Index K = 0;
    Index stride = 1;
    Index T_p = 1;
    std::vector<std::vector<Index>> combs; // 1-based subcarrier indices
    std::vector<CMatrix> symbols;          // per user, |comb| x T_p, unit modulus
    std::vector<Index> cover;              // per user cover-code index

    Index users() const { return static_cast<Index>(combs.size()); }

    const std::vector<Index> &comb(Index u) const
    {
        check_user(u);
        return combs[static_cast<std::size_t>(u)];
    }

    void check_user(Index u) const
    {
        if (u < 0 || u >= users())
            throw std::out_of_range("PilotGrid: unknown user " + std::to_string(u));
    }
};

inline cd qpsk_symbol(Rng &rng)
{
    static constexpr double h = 0.70710678118654752440;
    const auto bits = rng() & 3u;
    return {(bits & 1u) ? -h : h, (bits & 2u) ? -h : h};
}

inline PilotGrid make_comb_pilots(Index U, Index K, Index stride, Index T_p, std::uint64_t seed)
{
    if (U < 1 || K < 1 || stride < 1 || T_p < 1)
        throw std::invalid_argument("make_comb_pilots: U, K, stride and T_p must be >= 1");
    if (stride > K)
        throw std::invalid_argument("make_comb_pilots: stride exceeds the number of subcarriers");
    if (U > stride * T_p)
        throw std::invalid_argument("make_comb_pilots: " + std::to_string(U) +
                                    " users exceed the available disjoint combs (" + std::to_string(stride) +
                                    " combs x " + std::to_string(T_p) + " cover codes)");
    PilotGrid g;
    g.K = K;
    g.stride = stride;
    g.T_p = T_p;
    Rng rng(seed);
    for (Index u = 0; u < U; ++u)
    {
        const Index offset = u % stride;
        const Index code = u / stride;
        std::vector<Index> comb;
        for (Index k = offset + 1; k <= K; k += stride)
            comb.push_back(k);
        CMatrix s(static_cast<Index>(comb.size()), T_p);
        for (Index k = 0; k < s.rows(); ++k)
        {
            const cd q = qpsk_symbol(rng);
            for (Index t = 0; t < T_p; ++t)
                s(k, t) = q * std::polar(1.0, kTwoPi * static_cast<double>(code * t) / static_cast<double>(T_p));
        }
        g.combs.push_back(std::move(comb));
        g.symbols.push_back(std::move(s));
        g.cover.push_back(code);
    }
    return g;
}

struct ReceivedGrid
{
    std::vector<ComplexTensor4> Y; // one (n_col, n_row, K, n_pol) tensor per pilot symbol
    double noise_variance = 0.0;
    double signal_power = 0.0;       // mean |sum_u H S|^2 per entry
    double interference_power = 0.0; // mean |I|^2 per entry after scaling
    double interference_scale = 0.0;
};

enum class SnrReference
{
    AllSubcarriers,     // average over every antenna/subcarrier entry
    OccupiedSubcarriers // average over entries on subcarriers that carry pilots
};

struct ReceiveOptions
{
    SnrReference snr_reference = SnrReference::AllSubcarriers;
};

/// Y(t) = sum_u H_u S_u(t) + N(t) + I(t).
/// N is circular complex Gaussian with variance P_ref / 10^(snr_db/10);
/// interference channels carry independent QPSK symbols on every subcarrier
/// and are scaled so mean |I|^2 = 10^(isr_db/10) * P_ref. P_ref is the mean
/// received signal power (1 when the signal is identically zero).
/// snr_db = +inf disables noise; an empty interference list or isr_db = -inf
/// disables interference.
inline ReceivedGrid synthesize_received(const std::vector<ComplexTensor4> &channels, const PilotGrid &pilots,
                                        double snr_db, const std::vector<ComplexTensor4> &interference, double isr_db,
                                        std::uint64_t seed, const ReceiveOptions &opt = {})
{
    if (channels.empty())
        throw std::invalid_argument("synthesize_received: empty channel list");
    if (static_cast<Index>(channels.size()) != pilots.users())
        throw std::invalid_argument("synthesize_received: channel count does not match pilot users");
    const Dims4 dims = channels.front().dims();
    if (dims[2] != pilots.K)
        throw std::invalid_argument("synthesize_received: channel subcarrier count does not match pilots");
    for (const auto &h : channels)
        h.require_same_dims(channels.front(), "synthesize_received");
    for (const auto &h : interference)
        h.require_same_dims(channels.front(), "synthesize_received (interference)");

    const Index T_p = pilots.T_p;
    const Index per_k = dims[0] * dims[1];
    ReceivedGrid out;
    out.Y.assign(static_cast<std::size_t>(T_p), ComplexTensor4(dims));

    std::vector<char> occupied(static_cast<std::size_t>(dims[2]), 0);
    for (Index u = 0; u < pilots.users(); ++u)
    {
        const auto &comb = pilots.comb(u);
        const CMatrix &s = pilots.symbols[static_cast<std::size_t>(u)];
        const ComplexTensor4 &H = channels[static_cast<std::size_t>(u)];
        for (std::size_t ci = 0; ci < comb.size(); ++ci)
        {
            const Index k = comb[ci] - 1;
            occupied[static_cast<std::size_t>(k)] = 1;
            for (Index t = 0; t < T_p; ++t)
            {
                const cd sym = s(static_cast<Index>(ci), t);
                auto &Y = out.Y[static_cast<std::size_t>(t)];
                for (Index p = 0; p < dims[3]; ++p)
                {
                    const Index base = H.offset(0, 0, k, p);
                    Y.data().segment(base, per_k) += sym * H.data().segment(base, per_k);
                }
            }
        }
    }

    double sig = 0.0;
    Index count = 0;
    for (const auto &Y : out.Y)
        for (Index p = 0; p < dims[3]; ++p)
            for (Index k = 0; k < dims[2]; ++k)
            {
                if (opt.snr_reference == SnrReference::OccupiedSubcarriers && !occupied[static_cast<std::size_t>(k)])
                    continue;
                sig += Y.data().segment(Y.offset(0, 0, k, p), per_k).squaredNorm();
                count += per_k;
            }
    out.signal_power = count > 0 ? sig / static_cast<double>(count) : 0.0;
    const double ref = out.signal_power > 0.0 ? out.signal_power : 1.0;

    const bool use_interference = !interference.empty() && std::isfinite(isr_db);
    if (use_interference)
    {
        Rng rng(derive_seed(seed, {1}));
        std::vector<ComplexTensor4> I(static_cast<std::size_t>(T_p), ComplexTensor4(dims));
        for (const auto &G : interference)
            for (Index t = 0; t < T_p; ++t)
                for (Index k = 0; k < dims[2]; ++k)
                {
                    const cd sym = qpsk_symbol(rng);
                    for (Index p = 0; p < dims[3]; ++p)
                    {
                        const Index base = G.offset(0, 0, k, p);
                        I[static_cast<std::size_t>(t)].data().segment(base, per_k) +=
                            sym * G.data().segment(base, per_k);
                    }
                }
        double raw = 0.0;
        for (const auto &x : I)
            raw += x.squared_norm();
        raw /= static_cast<double>(T_p * I.front().size());
        if (raw > 0.0)
        {
            out.interference_scale = std::sqrt(db_to_linear(isr_db) * ref / raw);
            for (Index t = 0; t < T_p; ++t)
                out.Y[static_cast<std::size_t>(t)].data() +=
                    out.interference_scale * I[static_cast<std::size_t>(t)].data();
            out.interference_power = raw * out.interference_scale * out.interference_scale;
        }
    }

    if (!(std::isinf(snr_db) && snr_db > 0.0))
    {
        out.noise_variance = ref / db_to_linear(snr_db);
        if (out.noise_variance > 0.0)
        {
            Rng rng(derive_seed(seed, {2}));
            std::normal_distribution<double> n01(0.0, 1.0);
            const double sd = std::sqrt(out.noise_variance / 2.0);
            for (auto &Y : out.Y)
                for (Index i = 0; i < Y.size(); ++i)
                {
                    const double re = n01(rng);
                    const double im = n01(rng);
                    Y.data()(i) += cd(sd * re, sd * im);
                }
        }
    }
    return out;
}

/// Per-entry least-squares estimate on user u's comb, averaged over the
/// pilot symbols: h = sum_t y(t) conj(s(t)) / sum_t |s(t)|^2.
/// Output dims (n_col, n_row, |comb|, n_pol).
inline ComplexTensor4 ls_comb_estimate(const ReceivedGrid &rx, const PilotGrid &pilots, Index u)
{
    pilots.check_user(u);
    if (rx.Y.empty() || static_cast<Index>(rx.Y.size()) != pilots.T_p)
        throw std::invalid_argument("ls_comb_estimate: received grid does not match pilot symbol count");
    const auto &comb = pilots.comb(u);
    const CMatrix &s = pilots.symbols[static_cast<std::size_t>(u)];
    const Dims4 d = rx.Y.front().dims();
    ComplexTensor4 out({d[0], d[1], static_cast<Index>(comb.size()), d[3]});
    const Index per_k = d[0] * d[1];
    for (std::size_t ci = 0; ci < comb.size(); ++ci)
    {
        const Index k = comb[ci] - 1;
        const double energy = s.row(static_cast<Index>(ci)).squaredNorm();
        if (!(energy > 0.0))
            throw std::invalid_argument("ls_comb_estimate: zero pilot energy on subcarrier " + std::to_string(k + 1));
        for (Index p = 0; p < d[3]; ++p)
        {
            auto dst = out.data().segment(out.offset(0, 0, static_cast<Index>(ci), p), per_k);
            for (std::size_t t = 0; t < rx.Y.size(); ++t)
                dst += std::conj(s(static_cast<Index>(ci), static_cast<Index>(t))) *
                       rx.Y[t].data().segment(rx.Y[t].offset(0, 0, k, p), per_k);
            dst /= energy;
        }
    }
    return out;
}

/// Selects the given 1-based subcarriers (mode 3) of a full-band tensor.
inline ComplexTensor4 restrict_to_comb(const ComplexTensor4 &H, const std::vector<Index> &comb)
{
    const Dims4 d = H.dims();
    ComplexTensor4 out({d[0], d[1], static_cast<Index>(comb.size()), d[3]});
    const Index per_k = d[0] * d[1];
    for (std::size_t ci = 0; ci < comb.size(); ++ci)
    {
        if (comb[ci] < 1 || comb[ci] > d[2])
            throw std::invalid_argument("restrict_to_comb: index out of range");
        for (Index p = 0; p < d[3]; ++p)
            out.data().segment(out.offset(0, 0, static_cast<Index>(ci), p), per_k) =
                H.data().segment(H.offset(0, 0, comb[ci] - 1, p), per_k);
    }
    return out;
}

/// Complex piecewise-linear interpolation along the subcarrier mode from
/// comb samples to 1..K; values outside the comb span hold the nearest
/// comb sample.
inline ComplexTensor4 linear_interpolate(const ComplexTensor4 &H_comb, const std::vector<Index> &comb, Index K)
{
    if (comb.size() < 2)
        throw std::invalid_argument("linear_interpolate: need at least 2 comb points");
    if (static_cast<Index>(comb.size()) != H_comb.dims()[2])
        throw std::invalid_argument("linear_interpolate: comb size does not match tensor mode 3");
    for (std::size_t i = 0; i < comb.size(); ++i)
    {
        if (comb[i] < 1 || comb[i] > K)
            throw std::invalid_argument("linear_interpolate: comb index out of range");
        if (i > 0 && comb[i] <= comb[i - 1])
            throw std::invalid_argument("linear_interpolate: comb must be strictly increasing");
    }
    const Dims4 d = H_comb.dims();
    ComplexTensor4 out({d[0], d[1], K, d[3]});
    const Index per_k = d[0] * d[1];
    std::size_t seg = 0;
    for (Index k = 1; k <= K; ++k)
    {
        Index lo, hi;
        double w = 0.0; // weight on hi
        if (k <= comb.front())
            lo = hi = 0;
        else if (k >= comb.back())
            lo = hi = static_cast<Index>(comb.size()) - 1;
        else
        {
            while (comb[seg + 1] < k)
                ++seg;
            lo = static_cast<Index>(seg);
            hi = lo + 1;
            w = static_cast<double>(k - comb[seg]) / static_cast<double>(comb[seg + 1] - comb[seg]);
        }
        for (Index p = 0; p < d[3]; ++p)
        {
            auto dst = out.data().segment(out.offset(0, 0, k - 1, p), per_k);
            const auto a = H_comb.data().segment(H_comb.offset(0, 0, lo, p), per_k);
            const auto b = H_comb.data().segment(H_comb.offset(0, 0, hi, p), per_k);
            dst = (1.0 - w) * a + w * b;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Debug dump: little-endian
//   u64 T_p, u64 I1, u64 I2, u64 I3, u64 I4,
//   then T_p tensors in storage order as (re, im) float64 pairs.

namespace detail {

template <typename T>
void write_le(std::ostream &os, T v)
{
    static_assert(std::endian::native == std::endian::little, "dump format assumes a little-endian host");
    os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream &is)
{
    T v{};
    is.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (!is)
        throw std::runtime_error("read_received_dump: truncated file");
    return v;
}

} // namespace detail

inline void write_received_dump(const ReceivedGrid &rx, const std::string &path)
{
    if (rx.Y.empty())
        throw std::invalid_argument("write_received_dump: empty grid");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("write_received_dump: cannot open " + path);
    detail::write_le<std::uint64_t>(os, rx.Y.size());
    for (Index d : rx.Y.front().dims())
        detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    for (const auto &Y : rx.Y)
        for (Index i = 0; i < Y.size(); ++i)
        {
            detail::write_le<double>(os, Y.data()(i).real());
            detail::write_le<double>(os, Y.data()(i).imag());
        }
}

inline std::vector<ComplexTensor4> read_received_dump(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("read_received_dump: cannot open " + path);
    const auto T = detail::read_le<std::uint64_t>(is);
    Dims4 d{};
    for (auto &v : d)
        v = static_cast<Index>(detail::read_le<std::uint64_t>(is));
    std::vector<ComplexTensor4> out;
    for (std::uint64_t t = 0; t < T; ++t)
    {
        ComplexTensor4 Y(d);
        for (Index i = 0; i < Y.size(); ++i)
        {
            const double re = detail::read_le<double>(is);
            const double im = detail::read_le<double>(is);
            Y.data()(i) = cd(re, im);
        }
        out.push_back(std::move(Y));
    }
    return out;
}

} // namespace chanest

#endif // CHANEST_AIRLINK_HPP
