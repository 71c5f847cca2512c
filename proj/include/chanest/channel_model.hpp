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

#ifndef CHANEST_CHANNEL_MODEL_HPP
#define CHANEST_CHANNEL_MODEL_HPP

// Multi-sub-path uplink channel synthesis for a cross-polarized UPA.
//
// The per-user channel is a CP tensor of dims (n_col, n_row, K, n_pol):
//   H = [[ A(phi), A(theta), D, P ]]
// with three Vandermonde factors (column steering, row steering, delay)
// and the polarization gains in P.

#include "chanest/common.hpp"
#include "chanest/tensor_core.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace chanest {

/// Antenna array and OFDM numerology. Defaults are the reference
/// scenario: 4x16 cross-polarized UPA at 4.9 GHz, 30 kHz spacing, 384 subcarriers.
struct ArrayConfig
{
    Index n_col = 16;
    Index n_row = 4;
    Index n_pol = 2;
    double d_col = 0.03; // m
    double d_row = 0.09; // m
    double f_c = 4.9e9;  // Hz
    double c = 299792458.0;
    double delta_f = 30e3; // Hz
    Index K = 384;

    void validate() const
    {
        if (n_col < 1 || n_row < 1 || n_pol < 1 || K < 1)
            throw std::invalid_argument("ArrayConfig: counts must be >= 1");
        if (!(d_col > 0.0) || !(d_row > 0.0) || !(f_c > 0.0) || !(c > 0.0) || !(delta_f > 0.0))
            throw std::invalid_argument("ArrayConfig: spacings and frequencies must be positive");
    }

    Dims4 full_dims() const { return {n_col, n_row, K, n_pol}; }
};

inline void to_json(nlohmann::json &j, const ArrayConfig &a)
{
    j = nlohmann::json{{"n_col", a.n_col}, {"n_row", a.n_row}, {"n_pol", a.n_pol}, {"d_col", a.d_col},
                       {"d_row", a.d_row}, {"f_c", a.f_c},     {"c", a.c},         {"delta_f", a.delta_f},
                       {"K", a.K}};
}

inline void from_json(const nlohmann::json &j, ArrayConfig &a)
{
    a.n_col = j.value("n_col", a.n_col);
    a.n_row = j.value("n_row", a.n_row);
    a.n_pol = j.value("n_pol", a.n_pol);
    a.d_col = j.value("d_col", a.d_col);
    a.d_row = j.value("d_row", a.d_row);
    a.f_c = j.value("f_c", a.f_c);
    a.c = j.value("c", a.c);
    a.delta_f = j.value("delta_f", a.delta_f);
    a.K = j.value("K", a.K);
    a.validate();
}

/// One propagation ray. `delay` is normalized: tau_seconds * delta_f, i.e.
/// the phase advance per subcarrier step is exp(-j 2 pi delay).
struct SubPath
{
    std::vector<cd> gains; // one per polarization
    double delay = 0.0;
    double aoa_deg = 0.0;
    double zoa_deg = 90.0;
};

struct UserChannel
{
    std::vector<SubPath> paths;
    int owner = 0;

    Index size() const { return static_cast<Index>(paths.size()); }
};

inline double delay_to_normalized(double seconds, double delta_f) { return seconds * delta_f; }
inline double delay_to_seconds(double normalized, double delta_f) { return normalized / delta_f; }

namespace detail {

inline double deg2rad(double d) { return d * kPi / 180.0; }

inline CMatrix vandermonde_from_phase(const RVector &phase_step, Index rows)
{
    CMatrix out(rows, phase_step.size());
    for (Index l = 0; l < phase_step.size(); ++l)
        for (Index n = 0; n < rows; ++n)
            out(n, l) = std::polar(1.0, phase_step(l) * static_cast<double>(n));
    return out;
}

} // namespace detail

/// Column steering matrix, entry (n,l) = exp(j 2 pi f_c n d_col sin(phi_l) / c), n = 0..n_col-1.
inline CMatrix steering_col(const std::vector<double> &aoa_deg, const ArrayConfig &cfg)
{
    RVector step(static_cast<Index>(aoa_deg.size()));
    for (std::size_t l = 0; l < aoa_deg.size(); ++l)
        step(static_cast<Index>(l)) = kTwoPi * cfg.f_c * cfg.d_col * std::sin(detail::deg2rad(aoa_deg[l])) / cfg.c;
    return detail::vandermonde_from_phase(step, cfg.n_col);
}

/// Row steering matrix, entry (n,l) = exp(j 2 pi f_c n d_row cos(theta_l) / c).
inline CMatrix steering_row(const std::vector<double> &zoa_deg, const ArrayConfig &cfg)
{
    RVector step(static_cast<Index>(zoa_deg.size()));
    for (std::size_t l = 0; l < zoa_deg.size(); ++l)
        step(static_cast<Index>(l)) = kTwoPi * cfg.f_c * cfg.d_row * std::cos(detail::deg2rad(zoa_deg[l])) / cfg.c;
    return detail::vandermonde_from_phase(step, cfg.n_row);
}

/// Delay factor over the given 1-based subcarrier indices:
/// entry (k',l) = exp(-j 2 pi tau_l (indices[k'] - 1)).
inline CMatrix delay_factor(const std::vector<double> &delays, const std::vector<Index> &indices, Index K)
{
    for (std::size_t i = 0; i < indices.size(); ++i)
    {
        if (indices[i] < 1 || indices[i] > K)
            throw std::invalid_argument("delay_factor: subcarrier index " + std::to_string(indices[i]) +
                                        " outside 1.." + std::to_string(K));
        if (i > 0 && indices[i] <= indices[i - 1])
            throw std::invalid_argument("delay_factor: indices must be strictly increasing");
    }
    CMatrix out(static_cast<Index>(indices.size()), static_cast<Index>(delays.size()));
    for (std::size_t l = 0; l < delays.size(); ++l)
        for (std::size_t k = 0; k < indices.size(); ++k)
            out(static_cast<Index>(k), static_cast<Index>(l)) =
                std::polar(1.0, -kTwoPi * delays[l] * static_cast<double>(indices[k] - 1));
    return out;
}

inline std::vector<Index> full_band_indices(Index K)
{
    std::vector<Index> idx(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k)
        idx[static_cast<std::size_t>(k)] = k + 1;
    return idx;
}

inline CMatrix gain_factor(const std::vector<SubPath> &paths)
{
    if (paths.empty())
        throw std::invalid_argument("gain_factor: no paths");
    const std::size_t n_pol = paths.front().gains.size();
    CMatrix out(static_cast<Index>(n_pol), static_cast<Index>(paths.size()));
    for (std::size_t l = 0; l < paths.size(); ++l)
    {
        if (paths[l].gains.size() != n_pol)
            throw std::invalid_argument("gain_factor: inconsistent polarization counts across paths");
        for (std::size_t p = 0; p < n_pol; ++p)
            out(static_cast<Index>(p), static_cast<Index>(l)) = paths[l].gains[p];
    }
    return out;
}

/// The four CP factors of a user channel sampled on the given subcarriers.
inline FactorSet channel_factors(const UserChannel &chan, const ArrayConfig &cfg, const std::vector<Index> &indices)
{
    if (chan.paths.empty())
        throw std::invalid_argument("channel_factors: channel has no paths");
    std::vector<double> aoa, zoa, tau;
    for (const auto &p : chan.paths)
    {
        aoa.push_back(p.aoa_deg);
        zoa.push_back(p.zoa_deg);
        tau.push_back(p.delay);
    }
    CMatrix P = gain_factor(chan.paths);
    if (P.rows() != cfg.n_pol)
        throw std::invalid_argument("channel_factors: path gains do not match n_pol");
    return FactorSet(steering_col(aoa, cfg), steering_row(zoa, cfg), delay_factor(tau, indices, cfg.K), std::move(P));
}

/// Full-band channel tensor of dims (n_col, n_row, K, n_pol).
inline ComplexTensor4 synthesize_channel(const UserChannel &chan, const ArrayConfig &cfg)
{
    cfg.validate();
    return cp_reconstruct(channel_factors(chan, cfg, full_band_indices(cfg.K)));
}

// ---------------------------------------------------------------------------
// Random path generation

/// Clustered path profile. Cluster delays are normalized by `delay_spread`
/// (seconds), as in the CDL tables; angles are cluster means in degrees.
struct PathProfile
{
    struct Cluster
    {
        double power_db = 0.0;
        double delay = 0.0;
        double aoa_deg = 0.0;
        double zoa_deg = 90.0;
    };

    std::string name = "custom";
    std::vector<Cluster> clusters;
    int rays_per_cluster = 20;
    double angle_spread_deg = 4.0;
    double delay_spread = 100e-9;
    double ray_delay_jitter = 0.05; // uniform intra-cluster delay offset, fraction of delay_spread
    double ray_angle_jitter = 0.05; // uniform perturbation of the ray offsets, in units of angle_spread

    Index nominal_paths() const { return static_cast<Index>(clusters.size()) * rays_per_cluster; }

    void validate() const
    {
        if (clusters.empty())
            throw std::invalid_argument("PathProfile: at least one cluster required");
        if (rays_per_cluster < 1)
            throw std::invalid_argument("PathProfile: rays_per_cluster must be >= 1");
        if (!(delay_spread >= 0.0) || !(angle_spread_deg >= 0.0))
            throw std::invalid_argument("PathProfile: spreads must be non-negative");
    }

    static PathProfile from_json(const nlohmann::json &j)
    {
        PathProfile p;
        p.name = j.value("name", p.name);
        for (const auto &c : j.at("clusters"))
        {
            Cluster cl;
            cl.power_db = c.at("power_db").get<double>();
            cl.delay = c.at("delay").get<double>();
            cl.aoa_deg = c.at("aoa_deg").get<double>();
            cl.zoa_deg = c.at("zoa_deg").get<double>();
            p.clusters.push_back(cl);
        }
        p.rays_per_cluster = j.value("rays_per_cluster", p.rays_per_cluster);
        p.angle_spread_deg = j.value("angle_spread_deg", p.angle_spread_deg);
        p.delay_spread = j.value("delay_spread", p.delay_spread);
        p.ray_delay_jitter = j.value("ray_delay_jitter", p.ray_delay_jitter);
        p.ray_angle_jitter = j.value("ray_angle_jitter", p.ray_angle_jitter);
        p.validate();
        return p;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json cl = nlohmann::json::array();
        for (const auto &c : clusters)
            cl.push_back({{"power_db", c.power_db}, {"delay", c.delay}, {"aoa_deg", c.aoa_deg}, {"zoa_deg", c.zoa_deg}});
        return {{"name", name},
                {"clusters", cl},
                {"rays_per_cluster", rays_per_cluster},
                {"angle_spread_deg", angle_spread_deg},
                {"delay_spread", delay_spread},
                {"ray_delay_jitter", ray_delay_jitter},
                {"ray_angle_jitter", ray_angle_jitter}};
    }

    static PathProfile load(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("PathProfile: cannot open " + path);
        return from_json(nlohmann::json::parse(in));
    }

    /// Bundled "cdl-like-default": 18 NLOS clusters x 20 rays with a
    /// CDL-style power/delay/angle layout, 100 ns delay spread.
    static PathProfile cdl_like_default()
    {
        PathProfile p;
        p.name = "cdl-like-default";
        const double power[] = {-4.4, -1.2, -3.5, -5.2, -2.5, 0.0,  -2.2,  -3.9,  -7.4,
                                -7.1, -10.7, -11.1, -5.1, -6.8, -8.7, -13.2, -13.9, -13.9};
        const double delay[] = {0.0,    0.2099, 0.2219, 0.2329, 0.2176, 0.6366, 0.6448, 0.6560, 0.6584,
                                0.7935, 0.8213, 0.9336, 1.2285, 1.3083, 2.1704, 2.7105, 4.2589, 4.6003};
        const double aoa[] = {-46.6, -22.8, -22.8, -22.8, -40.7, 0.3,  0.3,   0.3,  73.8,
                              -64.5, 80.2,  -97.1, -55.3, -64.3, -78.5, 102.7, 99.2, 88.8};
        const double zoa[] = {97.2, 98.6, 98.6, 98.6, 100.6, 99.2, 99.2, 99.2,  105.2,
                              95.3, 106.1, 93.5, 103.7, 104.2, 93.0, 104.2, 94.9, 93.1};
        for (int i = 0; i < 18; ++i)
            p.clusters.push_back({power[i], delay[i], aoa[i], zoa[i]});
        p.rays_per_cluster = 20;
        p.angle_spread_deg = 4.0;
        p.delay_spread = 100e-9;
        return p;
    }
};

namespace detail {

// Fixed intra-cluster ray offsets (unit angle spread), the usual 20-ray set.
inline constexpr double kRayOffsets[20] = {0.0447, -0.0447, 0.1413, -0.1413, 0.2492, -0.2492, 0.3715,
                                           -0.3715, 0.5129, -0.5129, 0.6797, -0.6797, 0.8844, -0.8844,
                                           1.1481, -1.1481, 1.5195, -1.5195, 2.1551, -2.1551};

inline double ray_offset(Index i, Rng &rng)
{
    if (i < 20)
        return kRayOffsets[i];
    return std::uniform_real_distribution<double>(-2.2, 2.2)(rng);
}

} // namespace detail

/// Draws L sub-paths from a clustered profile. Rays are spread over the
/// clusters as evenly as possible, each with fixed angular offsets (randomly
/// coupled between azimuth and zenith), a small random jitter, and a random
/// per-polarization phase. Powers are normalized so sum |alpha|^2 == 1.
/// Delays are clipped into [0, max_delay_norm).
inline UserChannel generate_paths(const PathProfile &profile, Index L, std::uint64_t seed, const ArrayConfig &cfg,
                                  double max_delay_norm = 1.0, int owner = 0)
{
    if (L < 1)
        throw std::invalid_argument("generate_paths: L must be >= 1");
    profile.validate();
    cfg.validate();
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const auto C = static_cast<Index>(profile.clusters.size());
    std::vector<Index> rays(static_cast<std::size_t>(C), L / C);
    for (Index c = 0; c < L % C; ++c)
        ++rays[static_cast<std::size_t>(c)];

    const double delay_cap = std::nextafter(max_delay_norm, 0.0);
    UserChannel ch;
    ch.owner = owner;
    ch.paths.reserve(static_cast<std::size_t>(L));
    double total = 0.0;
    for (Index c = 0; c < C; ++c)
    {
        const Index n = rays[static_cast<std::size_t>(c)];
        if (n == 0)
            continue;
        const auto &cl = profile.clusters[static_cast<std::size_t>(c)];
        const double p_ray = std::pow(10.0, cl.power_db / 10.0) / static_cast<double>(n);

        std::vector<Index> zoa_perm(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i)
            zoa_perm[static_cast<std::size_t>(i)] = i;
        std::shuffle(zoa_perm.begin(), zoa_perm.end(), rng);

        for (Index i = 0; i < n; ++i)
        {
            SubPath sp;
            const double jit_a = profile.ray_angle_jitter * (2.0 * unif(rng) - 1.0);
            const double jit_z = profile.ray_angle_jitter * (2.0 * unif(rng) - 1.0);
            sp.aoa_deg = cl.aoa_deg + profile.angle_spread_deg * (detail::ray_offset(i, rng) + jit_a);
            sp.zoa_deg =
                cl.zoa_deg + profile.angle_spread_deg * (detail::ray_offset(zoa_perm[static_cast<std::size_t>(i)], rng) + jit_z);
            const double tau_s = profile.delay_spread * (cl.delay + profile.ray_delay_jitter * unif(rng));
            sp.delay = std::clamp(delay_to_normalized(tau_s, cfg.delta_f), 0.0, delay_cap);
            sp.gains.resize(static_cast<std::size_t>(cfg.n_pol));
            const double amp = std::sqrt(p_ray / static_cast<double>(cfg.n_pol));
            for (auto &g : sp.gains)
                g = std::polar(amp, kTwoPi * unif(rng));
            total += p_ray;
            ch.paths.push_back(std::move(sp));
        }
    }
    const double scale = 1.0 / std::sqrt(total);
    for (auto &p : ch.paths)
        for (auto &g : p.gains)
            g *= scale;
    return ch;
}

struct PerturbOptions
{
    double angle_jitter_deg = 2.0; // max |angle shift| at phase_scale = 1
    double delay_jitter = 0.002;   // max |normalized delay shift| at phase_scale = 1
};

/// Interference-channel generator: copies `chan`, rotates each path gain
/// by a uniform phase in [-pi*phase_scale, pi*phase_scale] and jitters
/// angles and delays proportionally to phase_scale.
inline UserChannel perturb_for_interference(const UserChannel &chan, std::uint64_t seed, double phase_scale,
                                            const PerturbOptions &opt = {})
{
    UserChannel out = chan;
    if (phase_scale == 0.0)
        return out;
    Rng rng(seed);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    for (auto &p : out.paths)
    {
        const cd rot = std::polar(1.0, kPi * phase_scale * sym(rng));
        for (auto &g : p.gains)
            g *= rot;
        p.aoa_deg += opt.angle_jitter_deg * phase_scale * sym(rng);
        p.zoa_deg += opt.angle_jitter_deg * phase_scale * sym(rng);
        p.delay = std::clamp(p.delay + opt.delay_jitter * phase_scale * sym(rng), 0.0, std::nextafter(1.0, 0.0));
    }
    return out;
}

} // namespace chanest

#endif // CHANEST_CHANNEL_MODEL_HPP
