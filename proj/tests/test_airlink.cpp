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

#include "chanest/airlink.hpp"
#include "chanest/channel_model.hpp"
#include "test_helpers.hpp"

#include <filesystem>
#include <set>

using namespace chanest;
using chanest::testing::rel_diff;

namespace {

ArrayConfig small_cfg(Index K)
{
    ArrayConfig cfg;
    cfg.n_col = 4;
    cfg.n_row = 2;
    cfg.K = K;
    return cfg;
}

std::vector<ComplexTensor4> random_users(Index U, const ArrayConfig &cfg, std::uint64_t seed, Index L = 6,
                                         double max_delay = 1.0)
{
    std::vector<ComplexTensor4> H;
    for (Index u = 0; u < U; ++u)
        H.push_back(synthesize_channel(
            generate_paths(PathProfile::cdl_like_default(), L, derive_seed(seed, {static_cast<std::uint64_t>(u)}),
                           cfg, max_delay),
            cfg));
    return H;
}

void set_unit_pilots(PilotGrid &g)
{
    for (auto &s : g.symbols)
        s.setOnes();
}

} // namespace

TEST_CASE("make_comb_pilots", "[airlink]")
{
    const PilotGrid one = make_comb_pilots(1, 8, 2, 1, 1);
    CHECK(one.comb(0) == std::vector<Index>{1, 3, 5, 7});

    const PilotGrid two = make_comb_pilots(2, 8, 2, 1, 1);
    CHECK(two.comb(0) == std::vector<Index>{1, 3, 5, 7});
    CHECK(two.comb(1) == std::vector<Index>{2, 4, 6, 8});

    const PilotGrid t1 = make_comb_pilots(12, 384, 12, 1, 1);
    std::set<Index> seen;
    for (Index u = 0; u < 12; ++u)
    {
        const auto &c = t1.comb(u);
        CHECK(c.size() == 32);
        for (std::size_t i = 1; i < c.size(); ++i)
            CHECK(c[i] - c[i - 1] == 12);
        seen.insert(c.begin(), c.end());
    }
    CHECK(seen.size() == 384);

    for (const auto &s : make_comb_pilots(24, 384, 12, 2, 9).symbols)
        CHECK((s.cwiseAbs().array() - 1.0).abs().maxCoeff() <= 1e-15);

    CHECK_THROWS_AS(make_comb_pilots(3, 8, 2, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_comb_pilots(5, 8, 2, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_comb_pilots(0, 8, 2, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(one.comb(1), std::out_of_range);
}

TEST_CASE("cover codes are orthogonal across users sharing a comb", "[airlink]")
{
    const PilotGrid g = make_comb_pilots(8, 16, 4, 2, 3);
    for (Index u = 0; u < 4; ++u)
    {
        REQUIRE(g.comb(u) == g.comb(u + 4));
        const CMatrix &a = g.symbols[static_cast<std::size_t>(u)];
        const CMatrix &b = g.symbols[static_cast<std::size_t>(u + 4)];
        for (Index k = 0; k < a.rows(); ++k)
            CHECK(std::abs(a.row(k).dot(b.row(k))) <= 1e-14);
    }
}

TEST_CASE("synthesize_received", "[airlink]")
{
    const ArrayConfig cfg = small_cfg(8);

    SECTION("noise off, unit pilots: comb rows reproduce the channel")
    {
        auto H = random_users(1, cfg, 5);
        PilotGrid g = make_comb_pilots(1, 8, 2, 1, 0);
        set_unit_pilots(g);
        const ReceivedGrid rx = synthesize_received(H, g, INFINITY, {}, 0.0, 1);
        CHECK(restrict_to_comb(rx.Y[0], g.comb(0)) == restrict_to_comb(H[0], g.comb(0)));
        CHECK(rx.noise_variance == 0.0);
    }
    SECTION("zero channels leave only noise and interference")
    {
        std::vector<ComplexTensor4> Z(2, ComplexTensor4(cfg.full_dims()));
        const PilotGrid g = make_comb_pilots(2, 8, 2, 1, 0);
        const ReceivedGrid quiet = synthesize_received(Z, g, INFINITY, {}, 0.0, 1);
        CHECK(quiet.Y[0].squared_norm() == 0.0);

        const ReceivedGrid noisy = synthesize_received(Z, g, 0.0, {}, 0.0, 1);
        CHECK(noisy.noise_variance == 1.0);
        CHECK(noisy.Y[0].squared_norm() > 0.0);
    }
    SECTION("0 dB ISR: interference power matches signal power")
    {
        const ArrayConfig big = small_cfg(384);
        auto H = random_users(12, big, 7);
        auto G = random_users(12, big, 8);
        const PilotGrid g = make_comb_pilots(12, 384, 12, 1, 2);
        const ReceivedGrid clean = synthesize_received(H, g, INFINITY, {}, 0.0, 3);
        const ReceivedGrid rx = synthesize_received(H, g, INFINITY, G, 0.0, 3);
        const ComplexTensor4 I = [&] {
            ComplexTensor4 d = rx.Y[0];
            d -= clean.Y[0];
            return d;
        }();
        REQUIRE(I.size() >= 6000);
        const double meas_i = I.squared_norm() / static_cast<double>(I.size());
        const double meas_s = clean.Y[0].squared_norm() / static_cast<double>(I.size());
        CHECK(std::abs(meas_i / meas_s - 1.0) <= 0.01);
    }
    SECTION("errors")
    {
        const PilotGrid g = make_comb_pilots(1, 8, 2, 1, 0);
        CHECK_THROWS_AS(synthesize_received({}, g, 10.0, {}, 0.0, 1), std::invalid_argument);
        std::vector<ComplexTensor4> wrong{ComplexTensor4({4, 2, 6, 2})};
        CHECK_THROWS_AS(synthesize_received(wrong, g, 10.0, {}, 0.0, 1), std::invalid_argument);
    }
}

TEST_CASE("noise power calibration", "[airlink][property]")
{
    const ArrayConfig cfg = small_cfg(384);
    auto H = random_users(12, cfg, 17);
    const PilotGrid g = make_comb_pilots(12, 384, 12, 2, 4);
    const ReceivedGrid clean = synthesize_received(H, g, INFINITY, {}, 0.0, 5);
    for (double snr : {-5.0, 0.0, 10.0, 20.0, 30.0})
    {
        const ReceivedGrid rx = synthesize_received(H, g, snr, {}, 0.0, 5);
        double noise = 0.0, sig = 0.0;
        for (std::size_t t = 0; t < rx.Y.size(); ++t)
        {
            noise += (rx.Y[t].data() - clean.Y[t].data()).squaredNorm();
            sig += clean.Y[t].squared_norm();
        }
        const double measured_db = 10.0 * std::log10(sig / noise);
        CHECK(std::abs(measured_db - snr) <= 0.1);
    }
}

TEST_CASE("ls_comb_estimate", "[airlink]")
{
    const ArrayConfig cfg = small_cfg(12);
    auto H = random_users(3, cfg, 21);

    SECTION("noiseless unit pilots")
    {
        PilotGrid g = make_comb_pilots(3, 12, 3, 1, 0);
        set_unit_pilots(g);
        const ReceivedGrid rx = synthesize_received(H, g, INFINITY, {}, 0.0, 1);
        for (Index u = 0; u < 3; ++u)
            CHECK(ls_comb_estimate(rx, g, u) == restrict_to_comb(H[static_cast<std::size_t>(u)], g.comb(u)));
    }
    SECTION("noiseless random unimodular pilots")
    {
        const PilotGrid g = make_comb_pilots(3, 12, 3, 1, 77);
        const ReceivedGrid rx = synthesize_received(H, g, INFINITY, {}, 0.0, 1);
        for (Index u = 0; u < 3; ++u)
            CHECK(rel_diff(restrict_to_comb(H[static_cast<std::size_t>(u)], g.comb(u)), ls_comb_estimate(rx, g, u)) <=
                  1e-15);
    }
    SECTION("AWGN averaged over T_p = 4 symbols")
    {
        // variance of the LS average is sigma^2 / T_p
        std::vector<ComplexTensor4> Z(1, ComplexTensor4({1, 1, 4, 1}));
        Z[0].data().setOnes();
        const PilotGrid g = make_comb_pilots(1, 4, 1, 4, 3);
        double acc = 0.0;
        Index n = 0;
        double sigma2 = 0.0;
        for (std::uint64_t trial = 0; trial < 2500; ++trial)
        {
            const ReceivedGrid rx = synthesize_received(Z, g, 0.0, {}, 0.0, trial);
            sigma2 = rx.noise_variance;
            const ComplexTensor4 h = ls_comb_estimate(rx, g, 0);
            acc += (h.data().array() - 1.0).abs2().sum();
            n += h.size();
        }
        CHECK(std::abs(acc / static_cast<double>(n) / (sigma2 / 4.0) - 1.0) <= 0.1);
    }
    SECTION("errors")
    {
        PilotGrid g = make_comb_pilots(1, 12, 3, 1, 0);
        const ReceivedGrid rx = synthesize_received({H[0]}, g, INFINITY, {}, 0.0, 1);
        CHECK_THROWS_AS(ls_comb_estimate(rx, g, 1), std::out_of_range);
        g.symbols[0](2, 0) = 0.0;
        CHECK_THROWS_AS(ls_comb_estimate(rx, g, 0), std::invalid_argument);
    }
}

TEST_CASE("noiseless end-to-end identity and user separation", "[airlink][property]")
{
    const ArrayConfig cfg = small_cfg(48);
    for (Index U : {1, 2, 5, 8, 12, 24})
    {
        auto H = random_users(U, cfg, 100 + static_cast<std::uint64_t>(U));
        const PilotGrid g = make_comb_pilots(U, 48, 12, 2, 11);
        const ReceivedGrid rx = synthesize_received(H, g, INFINITY, {}, 0.0, 1);
        for (Index u = 0; u < U; ++u)
            REQUIRE(relative_error(restrict_to_comb(H[static_cast<std::size_t>(u)], g.comb(u)),
                                   ls_comb_estimate(rx, g, u)) <= 1e-10);
    }

    // perturbing another user on a different comb leaves user 0 bit-identical
    auto H = random_users(4, cfg, 200);
    const PilotGrid g = make_comb_pilots(4, 48, 12, 1, 12);
    const ComplexTensor4 before = ls_comb_estimate(synthesize_received(H, g, INFINITY, {}, 0.0, 1), g, 0);
    H[2] = random_users(1, cfg, 999).front();
    const ComplexTensor4 after = ls_comb_estimate(synthesize_received(H, g, INFINITY, {}, 0.0, 1), g, 0);
    CHECK(before == after);
}

TEST_CASE("linear_interpolate", "[airlink]")
{
    SECTION("full comb is the identity")
    {
        Rng rng(3);
        const auto X = chanest::testing::random_tensor({2, 2, 6, 2}, rng);
        CHECK(linear_interpolate(X, full_band_indices(6), 6) == X);
    }
    SECTION("midpoint")
    {
        ComplexTensor4 X({1, 1, 2, 1});
        X(0, 0, 0, 0) = 0.0;
        X(0, 0, 1, 0) = cd(2.0, -4.0);
        const auto Y = linear_interpolate(X, {1, 3}, 3);
        CHECK(Y(0, 0, 1, 0) == cd(1.0, -2.0));
    }
    SECTION("flat hold outside the comb span")
    {
        ComplexTensor4 X({1, 1, 2, 1});
        X(0, 0, 0, 0) = 5.0;
        X(0, 0, 1, 0) = 7.0;
        const auto Y = linear_interpolate(X, {3, 5}, 8);
        CHECK(Y(0, 0, 0, 0) == cd(5.0));
        CHECK(Y(0, 0, 1, 0) == cd(5.0));
        CHECK(Y(0, 0, 3, 0) == cd(6.0));
        CHECK(Y(0, 0, 5, 0) == cd(7.0));
        CHECK(Y(0, 0, 7, 0) == cd(7.0));
    }
    SECTION("beats nearest-neighbour on a smooth channel")
    {
        ArrayConfig cfg = small_cfg(48);
        UserChannel ch;
        SubPath p;
        p.gains = {1.0, 0.5};
        p.delay = 0.002;
        p.aoa_deg = 10.0;
        p.zoa_deg = 80.0;
        ch.paths = {p};
        const ComplexTensor4 H = synthesize_channel(ch, cfg);
        std::vector<Index> comb;
        for (Index k = 1; k <= 48; k += 4)
            comb.push_back(k);
        const ComplexTensor4 Hc = restrict_to_comb(H, comb);
        const double lin = relative_error(H, linear_interpolate(Hc, comb, 48));

        ComplexTensor4 nn(H.dims());
        for (Index k = 0; k < 48; ++k)
        {
            Index best = 0;
            for (std::size_t i = 0; i < comb.size(); ++i)
                if (std::abs(comb[i] - 1 - k) < std::abs(comb[static_cast<std::size_t>(best)] - 1 - k))
                    best = static_cast<Index>(i);
            for (Index pol = 0; pol < 2; ++pol)
                for (Index r = 0; r < 2; ++r)
                    for (Index c = 0; c < 4; ++c)
                        nn(c, r, k, pol) = Hc(c, r, best, pol);
        }
        const double near = relative_error(H, nn);
        CHECK(lin < near);
        // second-order bound: |h''| = (2 pi tau)^2, spacing 4; the tail after the
        // last comb point is held flat, so allow the first-order hold term there.
        CHECK(lin <= 1e-4);
    }
    CHECK_THROWS_AS(linear_interpolate(ComplexTensor4({1, 1, 1, 1}), {1}, 4), std::invalid_argument);
    CHECK_THROWS_AS(linear_interpolate(ComplexTensor4({1, 1, 2, 1}), {3, 2}, 4), std::invalid_argument);
}

TEST_CASE("baseline NMSE with a full comb is exact", "[airlink]")
{
    const ArrayConfig cfg = small_cfg(16);
    auto H = random_users(1, cfg, 301);
    const PilotGrid g = make_comb_pilots(1, 16, 1, 1, 2);
    const ReceivedGrid rx = synthesize_received(H, g, INFINITY, {}, 0.0, 1);
    const auto est = linear_interpolate(ls_comb_estimate(rx, g, 0), g.comb(0), 16);
    CHECK(relative_error(H[0], est) <= 1e-20);
}

TEST_CASE("received grid dump round trip", "[airlink]")
{
    const ArrayConfig cfg = small_cfg(8);
    const PilotGrid g = make_comb_pilots(2, 8, 2, 2, 1);
    const ReceivedGrid rx = synthesize_received(random_users(2, cfg, 3), g, 10.0, {}, 0.0, 4);
    const auto path = std::filesystem::temp_directory_path() / "chanest_rx_dump.bin";
    write_received_dump(rx, path.string());
    CHECK(std::filesystem::file_size(path) == 5 * 8 + 2 * rx.Y[0].size() * 16);
    const auto back = read_received_dump(path.string());
    REQUIRE(back.size() == 2);
    CHECK(back[0] == rx.Y[0]);
    CHECK(back[1] == rx.Y[1]);
    std::filesystem::remove(path);
}
