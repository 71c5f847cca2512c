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

// Experiment harness: scenario configuration, generator-recovery and
// NMSE-versus-SNR experiments, parameter counting, CSV/SVG output.

#ifndef CHANEST_BENCH_HPP
#define CHANEST_BENCH_HPP

#include "chanest/airlink.hpp"
#include "chanest/als_ref.hpp"
#include "chanest/channel_model.hpp"
#include "chanest/common.hpp"
#include "chanest/tensor_core.hpp"
#include "chanest/version.hpp"
#include "chanest/vsd_fort.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

// Provided by OpenBLAS when it backs LAPACK; null otherwise.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace chanest::bench {

/// Keeps the BLAS backend single-threaded so trial-level parallelism is the
/// only source of concurrency and results do not depend on BLAS scheduling.
inline void pin_blas_threads()
{
    if (openblas_set_num_threads != nullptr)
        openblas_set_num_threads(1);
}

inline const std::vector<std::string> &known_methods()
{
    static const std::vector<std::string> m{"baseline", "als", "vsd_fort"};
    return m;
}

struct ExperimentConfig
{
    ArrayConfig array{};
    Index users = 24;
    Index paths = 360;          // sub-paths per channel in the NMSE sweep
    Index recovery_paths = 420; // rank of the generator-recovery tensor
    Index n_sc_eff = 32;        // comb size; stride = K / n_sc_eff
    Index pilot_symbols = 2;
    std::vector<double> snr_db{0.0, 10.0, 20.0, 30.0};
    double isr_db = 0.0;
    double phase_scale = 1.0;
    int trials = 100;
    std::uint64_t seed = 1;
    std::vector<std::string> methods = known_methods();
    std::string out_dir = "out";
    std::string profile = "cdl-like-default"; // bundled name or a JSON file path
    SnrReference snr_reference = SnrReference::AllSubcarriers;
    // Under interference the comb estimate is far from low rank; a coarse
    // threshold keeps only the dominant components.
    vsd::VsdOptions vsd = [] {
        vsd::VsdOptions o;
        o.rank_rule = vsd::RankRule::relative(0.3);
        o.subspace.kind = vsd::SubspaceSolver::Kind::Truncated;
        return o;
    }();
    vsd::VsdOptions recovery_vsd = [] {
        vsd::VsdOptions o;
        o.rank_rule = vsd::RankRule::relative(1e-10);
        return o;
    }();
    als::AlsOptions als = [] {
        als::AlsOptions o;
        o.max_iters = 100;
        o.rel_tol = 1e-6;
        return o;
    }();
    int threads = 1; // 0 = hardware concurrency

    Index stride() const { return array.K / n_sc_eff; }
    Dims4 comb_dims() const { return {array.n_col, array.n_row, n_sc_eff, array.n_pol}; }

    bool has_method(const std::string &m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

    void validate() const
    {
        array.validate();
        if (trials < 1)
            throw std::invalid_argument("config: trials must be >= 1");
        if (snr_db.empty())
            throw std::invalid_argument("config: SNR grid must be non-empty");
        if (paths < 1 || recovery_paths < 1 || users < 1 || pilot_symbols < 1)
            throw std::invalid_argument("config: users, paths, recovery_paths and pilot_symbols must be >= 1");
        if (n_sc_eff < 2 || array.K % n_sc_eff != 0)
            throw std::invalid_argument("config: n_sc_eff must be >= 2 and divide K");
        if (methods.empty())
            throw std::invalid_argument("config: no methods selected");
        for (const auto &m : methods)
            if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
                throw std::invalid_argument("config: unknown method '" + m + "' (expected baseline, als, vsd_fort)");
        if (threads < 0)
            throw std::invalid_argument("config: threads must be >= 0");
    }
};

inline void to_json(nlohmann::json &j, const ExperimentConfig &c)
{
    j = nlohmann::json{{"array", c.array},
                       {"users", c.users},
                       {"paths", c.paths},
                       {"recovery_paths", c.recovery_paths},
                       {"n_sc_eff", c.n_sc_eff},
                       {"pilot_symbols", c.pilot_symbols},
                       {"snr_db", c.snr_db},
                       {"isr_db", c.isr_db},
                       {"phase_scale", c.phase_scale},
                       {"trials", c.trials},
                       {"seed", c.seed},
                       {"methods", c.methods},
                       {"out_dir", c.out_dir},
                       {"profile", c.profile},
                       {"snr_reference", c.snr_reference == SnrReference::AllSubcarriers ? "all" : "occupied"},
                       {"vsd", c.vsd},
                       {"recovery_vsd", c.recovery_vsd},
                       {"als", c.als},
                       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json &j, ExperimentConfig &c)
{
    if (j.contains("array"))
        c.array = j.at("array").get<ArrayConfig>();
    c.users = j.value("users", c.users);
    c.paths = j.value("paths", c.paths);
    c.recovery_paths = j.value("recovery_paths", c.recovery_paths);
    c.n_sc_eff = j.value("n_sc_eff", c.n_sc_eff);
    c.pilot_symbols = j.value("pilot_symbols", c.pilot_symbols);
    c.snr_db = j.value("snr_db", c.snr_db);
    c.isr_db = j.value("isr_db", c.isr_db);
    c.phase_scale = j.value("phase_scale", c.phase_scale);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.methods = j.value("methods", c.methods);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.profile = j.value("profile", c.profile);
    if (j.contains("snr_reference"))
    {
        const auto s = j.at("snr_reference").get<std::string>();
        if (s == "all")
            c.snr_reference = SnrReference::AllSubcarriers;
        else if (s == "occupied")
            c.snr_reference = SnrReference::OccupiedSubcarriers;
        else
            throw std::invalid_argument("config: snr_reference must be 'all' or 'occupied'");
    }
    if (j.contains("vsd"))
        c.vsd = j.at("vsd").get<vsd::VsdOptions>();
    if (j.contains("recovery_vsd"))
        c.recovery_vsd = j.at("recovery_vsd").get<vsd::VsdOptions>();
    if (j.contains("als"))
        c.als = j.at("als").get<als::AlsOptions>();
    c.threads = j.value("threads", c.threads);
    c.validate();
}

/// Loads a config file. A relative `profile` path is resolved against the
/// config file's directory.
inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config " + path);
    ExperimentConfig c = nlohmann::json::parse(in).get<ExperimentConfig>();
    if (c.profile != "cdl-like-default")
    {
        const std::filesystem::path p(c.profile);
        if (p.is_relative())
            c.profile = (std::filesystem::path(path).parent_path() / p).lexically_normal().string();
    }
    return c;
}

inline PathProfile resolve_profile(const std::string &name)
{
    if (name == "cdl-like-default")
        return PathProfile::cdl_like_default();
    return PathProfile::load(name);
}

/// ||H - Hhat||_F^2 / ||H||_F^2.
inline double nmse(const ComplexTensor4 &H_true, const ComplexTensor4 &H_est) { return relative_error(H_true, H_est); }

struct TrialResult
{
    std::string method;
    double snr_db = 0.0;
    int trial = 0;
    double nmse = 0.0;       // averaged over users
    double mean_rank = 0.0;  // averaged over users; 0 for the baseline
    double wall_time = 0.0;  // seconds spent in this method, summed over users
};

// ---------------------------------------------------------------------------
// Output helpers

/// Shortest round-trip decimal representation; locale independent.
inline std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 6; prec <= 17; ++prec)
    {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            break;
    }
    return buf;
}

inline void write_text(const std::filesystem::path &path, const std::string &text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os)
        throw std::runtime_error("write failed for " + path.string());
}

struct Series
{
    std::string name;
    std::vector<double> x, y;
    bool scatter = false;
};

struct PlotSpec
{
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    bool equal_aspect = false;
    std::vector<Series> series;
};

namespace detail {

inline std::string xml_escape(const std::string &s)
{
    std::string out;
    for (char ch : s)
    {
        switch (ch)
        {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

inline std::string svg_num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::vector<double> nice_ticks(double lo, double hi, int target = 6)
{
    const double span = hi - lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw)
        {
            step = m * mag;
            break;
        }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
        t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return t;
}

} // namespace detail

/// Writes an SVG line/scatter plot. Values are transformed with log10 on a
/// logarithmic y axis; non-positive values are dropped there.
inline void emit_plot(const PlotSpec &spec, const std::filesystem::path &path)
{
    bool any = false;
    for (const auto &s : spec.series)
    {
        if (s.x.size() != s.y.size())
            throw std::invalid_argument("emit_plot: series '" + s.name + "' has mismatched x/y lengths");
        any = any || !s.x.empty();
    }
    if (!any)
        throw std::invalid_argument("emit_plot: empty series");

    auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto &s : spec.series)
        for (std::size_t i = 0; i < s.x.size(); ++i)
        {
            if (spec.log_y && !(s.y[i] > 0.0))
                continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, ty(s.y[i]));
            ymax = std::max(ymax, ty(s.y[i]));
        }
    if (xmin > xmax)
        throw std::invalid_argument("emit_plot: no plottable points");
    if (spec.log_y)
    {
        ymin = std::floor(ymin);
        ymax = std::ceil(ymax);
    }
    if (xmax - xmin < 1e-12)
    {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax - ymin < 1e-12)
    {
        ymin -= 1.0;
        ymax += 1.0;
    }
    if (spec.equal_aspect)
    {
        const double lo = std::min(xmin, ymin), hi = std::max(xmax, ymax);
        xmin = ymin = lo - 0.05 * (hi - lo);
        xmax = ymax = hi + 0.05 * (hi - lo);
    }

    const double W = 640, Hh = 480, ml = 80, mr = 170, mt = 40, mb = 60;
    const double pw = W - ml - mr, ph = Hh - mt - mb;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };
    static const char *palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\" viewBox=\"0 0 " << W
      << ' ' << Hh << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << detail::svg_num(ml + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << detail::xml_escape(spec.title) << "</text>\n"
      << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    auto tick_label = [&](double v, bool is_y) {
        if (is_y && spec.log_y)
            return "1e" + fmt_double(v);
        return fmt_double(v);
    };
    std::vector<double> xt = detail::nice_ticks(xmin, xmax), yt;
    if (spec.log_y)
        for (double v = ymin; v <= ymax + 1e-9; v += 1.0)
            yt.push_back(v);
    else
        yt = detail::nice_ticks(ymin, ymax);
    o << "<g class=\"axes\" font-size=\"11\">\n";
    for (double v : xt)
        o << "<line x1=\"" << detail::svg_num(px(v)) << "\" y1=\"" << detail::svg_num(mt + ph) << "\" x2=\"" << detail::svg_num(px(v))
          << "\" y2=\"" << detail::svg_num(mt + ph + 5) << "\" stroke=\"black\"/><text x=\"" << detail::svg_num(px(v)) << "\" y=\""
          << detail::svg_num(mt + ph + 18) << "\" text-anchor=\"middle\">" << tick_label(v, false) << "</text>\n";
    for (double v : yt)
        o << "<line x1=\"" << detail::svg_num(ml - 5) << "\" y1=\"" << detail::svg_num(py(v)) << "\" x2=\"" << detail::svg_num(ml)
          << "\" y2=\"" << detail::svg_num(py(v)) << "\" stroke=\"black\"/><text x=\"" << detail::svg_num(ml - 8) << "\" y=\""
          << detail::svg_num(py(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v, true) << "</text>\n";
    o << "<text x=\"" << detail::svg_num(ml + pw / 2) << "\" y=\"" << detail::svg_num(Hh - 15)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << detail::xml_escape(spec.x_label) << "</text>\n"
      << "<text x=\"18\" y=\"" << detail::svg_num(mt + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << detail::svg_num(mt + ph / 2) << ")\">" << detail::xml_escape(spec.y_label) << "</text>\n</g>\n";

    for (std::size_t si = 0; si < spec.series.size(); ++si)
    {
        const auto &s = spec.series[si];
        const char *col = palette[si % 6];
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (!spec.log_y || s.y[i] > 0.0)
                pts.emplace_back(px(s.x[i]), py(ty(s.y[i])));
        o << "<g class=\"series\" data-name=\"" << detail::xml_escape(s.name) << "\">\n";
        if (s.scatter)
        {
            for (const auto &[x, y] : pts)
                o << "<circle cx=\"" << detail::svg_num(x) << "\" cy=\"" << detail::svg_num(y) << "\" r=\"2.5\" fill=\"none\" stroke=\""
                  << col << "\"/>\n";
        }
        else
        {
            o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.8\" points=\"";
            for (std::size_t i = 0; i < pts.size(); ++i)
                o << (i ? " " : "") << detail::svg_num(pts[i].first) << ',' << detail::svg_num(pts[i].second);
            o << "\"/>\n";
            for (const auto &[x, y] : pts)
                o << "<circle cx=\"" << detail::svg_num(x) << "\" cy=\"" << detail::svg_num(y) << "\" r=\"3\" fill=\"" << col
                  << "\"/>\n";
        }
        o << "</g>\n";
    }

    o << "<g class=\"legend\" font-size=\"12\">\n";
    for (std::size_t si = 0; si < spec.series.size(); ++si)
    {
        const double y = mt + 14 + 20.0 * static_cast<double>(si);
        o << "<rect x=\"" << detail::svg_num(ml + pw + 15) << "\" y=\"" << detail::svg_num(y - 9) << "\" width=\"14\" height=\"10\" fill=\""
          << palette[si % 6] << "\"/><text x=\"" << detail::svg_num(ml + pw + 35) << "\" y=\"" << detail::svg_num(y)
          << "\">" << detail::xml_escape(spec.series[si].name) << "</text>\n";
    }
    o << "</g>\n</svg>\n";
    write_text(path, o.str());
}

// ---------------------------------------------------------------------------
// Run manifest

inline nlohmann::json versions()
{
    return {{"chanest", CHANEST_VERSION_STRING},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__},
            {"cxx_standard", __cplusplus}};
}

inline void write_manifest(const std::filesystem::path &dir, const std::string &command, const ExperimentConfig &cfg,
                           const std::vector<std::string> &outputs, const nlohmann::json &extra = {})
{
    nlohmann::json m{{"command", command},
                     {"config", cfg},
                     {"seed", cfg.seed},
                     {"versions", versions()},
                     {"outputs", outputs}};
    if (!extra.is_null())
        m["run"] = extra;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Generator recovery

struct RecoveryResult
{
    Index paths = 0;
    Index detected_rank = 0;
    std::vector<double> true_phase, est_phase, abs_error; // paired rows, ascending true phase
    double max_phase_error = 0.0;
    double comb_residual = 0.0;
    bool clipped = false;
    std::vector<std::string> warnings;
};

/// Noiseless channel whose mode-1 generators sit on a jittered uniform phase
/// grid (well separated), with uniform delays inside the comb aliasing
/// window, random zenith angles and Gaussian gains.
inline UserChannel separated_channel(Index L, const ArrayConfig &cfg, Index stride, std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double kmax = kTwoPi * cfg.f_c * cfg.d_col / cfg.c; // phase at sin(phi) = 1
    const double span = 2.0 * std::min(kmax, kPi) * 0.98;
    UserChannel ch;
    for (Index l = 0; l < L; ++l)
    {
        SubPath p;
        const double phase = -span / 2 + span * (static_cast<double>(l) + 0.5 + 0.3 * (2 * u01(rng) - 1)) /
                                             static_cast<double>(L);
        p.aoa_deg = std::asin(phase / kmax) * 180.0 / kPi;
        p.zoa_deg = 180.0 * u01(rng);
        p.delay = u01(rng) / static_cast<double>(stride);
        for (Index i = 0; i < cfg.n_pol; ++i)
        {
            const double re = n01(rng);
            const double im = n01(rng);
            p.gains.emplace_back(re, im);
        }
        ch.paths.push_back(std::move(p));
    }
    return ch;
}

inline std::vector<Index> user_comb(Index offset, Index stride, Index K)
{
    std::vector<Index> c;
    for (Index k = offset + 1; k <= K; k += stride)
        c.push_back(k);
    return c;
}

inline RecoveryResult run_generator_recovery(const ExperimentConfig &cfg)
{
    cfg.validate();
    RecoveryResult res;
    const Dims4 cd4 = cfg.comb_dims();
    const Index bound = vsd::generic_bound(cd4).bound;
    res.paths = std::min(cfg.recovery_paths, bound);
    if (res.paths < cfg.recovery_paths)
    {
        res.clipped = true;
        res.warnings.push_back("recovery_paths " + std::to_string(cfg.recovery_paths) + " exceeds the generic bound " +
                               std::to_string(bound) + " for " + dims_to_string(cd4) + "; clipped");
    }
    if (res.paths < 1)
        throw std::invalid_argument("run_generator_recovery: generic bound is 0 for " + dims_to_string(cd4));

    const Index stride = cfg.stride();
    const UserChannel ch = separated_channel(res.paths, cfg.array, stride, derive_seed(cfg.seed, {0xF1}));
    const auto comb = user_comb(0, stride, cfg.array.K);
    const ComplexTensor4 Hc = restrict_to_comb(synthesize_channel(ch, cfg.array), comb);
    const vsd::ChannelEstimate est = vsd::estimate_channel(Hc, comb, cfg.array.K, cfg.recovery_vsd);
    res.detected_rank = est.report.rank;
    res.comb_residual = est.report.comb_residual;
    for (const auto &w : est.report.warnings)
        res.warnings.push_back(w);

    const ArrayConfig &a = cfg.array;
    for (const auto &p : ch.paths)
        res.true_phase.push_back(
            wrap_phase(kTwoPi * a.f_c * a.d_col * std::sin(p.aoa_deg * kPi / 180.0) / a.c));
    std::sort(res.true_phase.begin(), res.true_phase.end());
    std::vector<double> est_sorted = est.report.z1_phase;
    std::sort(est_sorted.begin(), est_sorted.end());

    for (double t : res.true_phase)
    {
        double best = std::numeric_limits<double>::quiet_NaN(), err = kPi;
        for (double e : est_sorted)
        {
            const double d = std::abs(wrap_phase(e - t));
            if (d < err || std::isnan(best))
            {
                err = d;
                best = e;
            }
        }
        if (std::isnan(best))
            err = kPi;
        res.est_phase.push_back(best);
        res.abs_error.push_back(err);
        res.max_phase_error = std::max(res.max_phase_error, err);
    }
    if (res.detected_rank != res.paths)
        res.warnings.push_back("detected rank " + std::to_string(res.detected_rank) + " differs from " +
                               std::to_string(res.paths) + " true paths");
    return res;
}

inline std::string recovery_csv(const RecoveryResult &r)
{
    std::string s = "true_phase,est_phase,abs_error\n";
    for (std::size_t i = 0; i < r.true_phase.size(); ++i)
        s += fmt_double(r.true_phase[i]) + "," + fmt_double(r.est_phase[i]) + "," + fmt_double(r.abs_error[i]) + "\n";
    return s;
}

inline std::vector<std::string> write_recovery_outputs(const RecoveryResult &r, const std::filesystem::path &dir)
{
    write_text(dir / "generator_recovery.csv", recovery_csv(r));
    PlotSpec p;
    p.title = "First-mode generators on the unit circle (" + std::to_string(r.paths) + " paths)";
    p.x_label = "Re z";
    p.y_label = "Im z";
    p.equal_aspect = true;
    Series truth{"ground truth", {}, {}, true}, est{"estimate", {}, {}, true};
    for (std::size_t i = 0; i < r.true_phase.size(); ++i)
    {
        truth.x.push_back(std::cos(r.true_phase[i]));
        truth.y.push_back(std::sin(r.true_phase[i]));
        est.x.push_back(std::cos(r.est_phase[i]));
        est.y.push_back(std::sin(r.est_phase[i]));
    }
    p.series = {truth, est};
    emit_plot(p, dir / "generator_recovery.svg");
    return {"generator_recovery.csv", "generator_recovery.svg"};
}

// ---------------------------------------------------------------------------
// NMSE sweep

/// Extends an unconstrained CP fit of the comb tensor to the full band: each
/// subcarrier-factor column gets its least-squares shift ratio, which maps to
/// a delay exactly as in the structured estimator, and its projection onto
/// that pure Vandermonde column sets the scale.
inline ComplexTensor4 extend_cp_to_full_band(const FactorSet &F, const std::vector<Index> &comb, Index K)
{
    const Index R = F.rank();
    const Index stride = comb.size() >= 2 ? comb[1] - comb[0] : 1;
    CMatrix D(K, R);
    for (Index r = 0; r < R; ++r)
    {
        const CVector a = F[2].col(r);
        cd g{1.0, 0.0};
        if (a.size() >= 2 && a.head(a.size() - 1).squaredNorm() > 0.0)
            g = vsd::detail::shift_ratio(a, 1, "extend_cp_to_full_band");
        CVector gv(1);
        gv(0) = g;
        const double tau = vsd::recover_delays(gv, stride)[0];
        const CVector v = vsd::vandermonde(gv, a.size()).col(0);
        const cd scale = v.dot(a) / static_cast<double>(a.size());
        for (Index k = 1; k <= K; ++k)
            D(k - 1, r) = scale * std::polar(1.0, -kTwoPi * tau * static_cast<double>(k - comb.front()));
    }
    return cp_reconstruct(FactorSet(F[0], F[1], D, F[3]));
}

/// Largest CP rank cp_als accepts for a tensor of these dims.
inline Index als_rank_limit(const Dims4 &d)
{
    const Index total = d[0] * d[1] * d[2] * d[3];
    Index lim = total;
    for (Index v : d)
        lim = std::min(lim, total / v);
    return lim;
}

struct SweepResult
{
    std::vector<TrialResult> rows; // ordered by (method, snr index, trial)
    double wall_time = 0.0;
    int threads = 1;
};

namespace detail {

struct MethodAccum
{
    double nmse = 0.0, rank = 0.0, time = 0.0;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// One Monte-Carlo trial over the whole SNR grid. Channels, pilots,
// interference and the unit-variance noise realization are drawn once per
// trial and shared by every SNR point.
inline std::vector<std::array<MethodAccum, 3>> run_trial(const ExperimentConfig &cfg, const PathProfile &profile,
                                                         int trial)
{
    const std::uint64_t ts = derive_seed(cfg.seed, {static_cast<std::uint64_t>(trial)});
    const ArrayConfig &a = cfg.array;
    const Index stride = cfg.stride();
    const Index U = cfg.users;

    std::vector<ComplexTensor4> H, G;
    H.reserve(static_cast<std::size_t>(U));
    G.reserve(static_cast<std::size_t>(U));
    for (Index u = 0; u < U; ++u)
    {
        const auto uu = static_cast<std::uint64_t>(u);
        const UserChannel ch = generate_paths(profile, cfg.paths, derive_seed(ts, {1, uu}), a,
                                              1.0 / static_cast<double>(stride), static_cast<int>(u));
        H.push_back(synthesize_channel(ch, a));
        if (std::isfinite(cfg.isr_db))
            G.push_back(synthesize_channel(perturb_for_interference(ch, derive_seed(ts, {2, uu}), cfg.phase_scale), a));
    }
    const PilotGrid pilots = make_comb_pilots(U, a.K, stride, cfg.pilot_symbols, derive_seed(ts, {3}));
    ReceiveOptions ro;
    ro.snr_reference = cfg.snr_reference;

    const bool want_als = cfg.has_method("als");
    const bool want_vsd = cfg.has_method("vsd_fort");
    const Index als_cap = als_rank_limit(cfg.comb_dims());

    std::vector<std::array<MethodAccum, 3>> out(cfg.snr_db.size());
    for (std::size_t si = 0; si < cfg.snr_db.size(); ++si)
    {
        const ReceivedGrid rx = synthesize_received(H, pilots, cfg.snr_db[si], G, cfg.isr_db, derive_seed(ts, {4}), ro);
        auto &acc = out[si];
        for (Index u = 0; u < U; ++u)
        {
            const ComplexTensor4 &Htrue = H[static_cast<std::size_t>(u)];
            const auto &comb = pilots.comb(u);
            auto t0 = std::chrono::steady_clock::now();
            const ComplexTensor4 Hc = ls_comb_estimate(rx, pilots, u);
            const ComplexTensor4 Hb = linear_interpolate(Hc, comb, a.K);
            acc[0].time += seconds_since(t0);
            acc[0].nmse += nmse(Htrue, Hb);

            if (!want_als && !want_vsd)
                continue;
            t0 = std::chrono::steady_clock::now();
            const vsd::ChannelEstimate ve = vsd::estimate_channel(Hc, comb, a.K, cfg.vsd);
            acc[2].time += seconds_since(t0);
            acc[2].nmse += nmse(Htrue, ve.H_full);
            acc[2].rank += static_cast<double>(ve.report.rank);

            if (want_als)
            {
                t0 = std::chrono::steady_clock::now();
                als::AlsOptions ao = cfg.als;
                ao.rank = std::clamp<Index>(ve.report.rank, 1, als_cap);
                ao.seed = derive_seed(ts, {5, static_cast<std::uint64_t>(u), si});
                const als::AlsResult ar = als::cp_als(Hc, ao);
                const ComplexTensor4 Ha = ar.degenerate ? ComplexTensor4(Htrue.dims())
                                                        : extend_cp_to_full_band(ar.factors, comb, a.K);
                acc[1].time += seconds_since(t0);
                acc[1].nmse += nmse(Htrue, Ha);
                acc[1].rank += static_cast<double>(ao.rank);
            }
        }
        for (auto &m : acc)
        {
            m.nmse /= static_cast<double>(U);
            m.rank /= static_cast<double>(U);
        }
    }
    return out;
}

} // namespace detail

inline int resolve_threads(int requested)
{
    if (requested > 0)
        return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Monte-Carlo sweep. Trials are independent and keyed by index, so the
/// result does not depend on the thread count.
inline SweepResult run_nmse_sweep(const ExperimentConfig &cfg)
{
    cfg.validate();
    if (cfg.users > cfg.stride() * cfg.pilot_symbols)
        throw std::invalid_argument("nmse-sweep: " + std::to_string(cfg.users) + " users do not fit on " +
                                    std::to_string(cfg.stride()) + " combs with " +
                                    std::to_string(cfg.pilot_symbols) + " pilot symbols");
    const PathProfile profile = resolve_profile(cfg.profile);
    pin_blas_threads();
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::vector<std::array<detail::MethodAccum, 3>>> per_trial(static_cast<std::size_t>(cfg.trials));
    const int nthreads = std::min(resolve_threads(cfg.threads), cfg.trials);
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;)
        {
            const int t = next.fetch_add(1);
            if (t >= cfg.trials)
                return;
            try
            {
                per_trial[static_cast<std::size_t>(t)] = detail::run_trial(cfg, profile, t);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err)
                    err = std::current_exception();
                next.store(cfg.trials);
            }
        }
    };
    if (nthreads <= 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }
    if (err)
        std::rethrow_exception(err);

    SweepResult res;
    res.threads = nthreads;
    for (std::size_t mi = 0; mi < known_methods().size(); ++mi)
    {
        const std::string &m = known_methods()[mi];
        if (!cfg.has_method(m))
            continue;
        for (std::size_t si = 0; si < cfg.snr_db.size(); ++si)
            for (int t = 0; t < cfg.trials; ++t)
            {
                const auto &acc = per_trial[static_cast<std::size_t>(t)][si][mi];
                res.rows.push_back({m, cfg.snr_db[si], t, acc.nmse, acc.rank, acc.time});
            }
    }
    res.wall_time = detail::seconds_since(t0);
    return res;
}

struct SummaryRow
{
    std::string method;
    double snr_db = 0.0;
    int trials = 0;
    double mean_nmse = 0.0;
    double std_err = 0.0;
    double mean_rank = 0.0;
};

inline std::vector<SummaryRow> summarize(const SweepResult &r)
{
    std::vector<SummaryRow> out;
    std::map<std::pair<std::string, double>, std::size_t> index;
    std::vector<std::vector<double>> vals;
    for (const auto &row : r.rows)
    {
        const auto key = std::make_pair(row.method, row.snr_db);
        auto it = index.find(key);
        if (it == index.end())
        {
            it = index.emplace(key, out.size()).first;
            out.push_back({row.method, row.snr_db, 0, 0.0, 0.0, 0.0});
            vals.emplace_back();
        }
        auto &s = out[it->second];
        ++s.trials;
        s.mean_nmse += row.nmse;
        s.mean_rank += row.mean_rank;
        vals[it->second].push_back(row.nmse);
    }
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        auto &s = out[i];
        s.mean_nmse /= s.trials;
        s.mean_rank /= s.trials;
        double var = 0.0;
        for (double v : vals[i])
            var += (v - s.mean_nmse) * (v - s.mean_nmse);
        s.std_err = s.trials > 1 ? std::sqrt(var / (s.trials - 1) / s.trials) : 0.0;
    }
    return out;
}

inline double mean_nmse(const std::vector<SummaryRow> &s, const std::string &method, double snr)
{
    for (const auto &r : s)
        if (r.method == method && r.snr_db == snr)
            return r.mean_nmse;
    throw std::out_of_range("mean_nmse: no row for " + method + " at " + fmt_double(snr) + " dB");
}

inline std::string trials_csv(const SweepResult &r)
{
    std::string s = "method,snr_db,trial,mean_nmse,mean_rank\n";
    for (const auto &row : r.rows)
        s += row.method + "," + fmt_double(row.snr_db) + "," + std::to_string(row.trial) + "," + fmt_double(row.nmse) +
             "," + fmt_double(row.mean_rank) + "\n";
    return s;
}

inline std::string summary_csv(const std::vector<SummaryRow> &rows)
{
    std::string s = "method,snr_db,trials,mean_nmse,std_err,mean_rank\n";
    for (const auto &r : rows)
        s += r.method + "," + fmt_double(r.snr_db) + "," + std::to_string(r.trials) + "," + fmt_double(r.mean_nmse) +
             "," + fmt_double(r.std_err) + "," + fmt_double(r.mean_rank) + "\n";
    return s;
}

inline std::vector<std::string> write_sweep_outputs(const SweepResult &r, const std::filesystem::path &dir)
{
    const auto summary = summarize(r);
    write_text(dir / "nmse_trials.csv", trials_csv(r));
    write_text(dir / "nmse_summary.csv", summary_csv(summary));

    PlotSpec p;
    p.title = "Mean NMSE versus SNR";
    p.x_label = "SNR (dB)";
    p.y_label = "NMSE";
    p.log_y = true;
    for (const auto &m : known_methods())
    {
        Series s{m, {}, {}, false};
        for (const auto &row : summary)
            if (row.method == m)
            {
                s.x.push_back(row.snr_db);
                s.y.push_back(row.mean_nmse);
            }
        if (!s.x.empty())
            p.series.push_back(std::move(s));
    }
    emit_plot(p, dir / "nmse_vs_snr.svg");
    return {"nmse_trials.csv", "nmse_summary.csv", "nmse_vs_snr.svg"};
}

// ---------------------------------------------------------------------------
// Parameter count

struct ParamCount
{
    std::int64_t raw = 0;     // U n_col n_row n_pol K complex coefficients
    std::int64_t reparam = 0; // U L (2 angles + 1 delay + 2 n_pol reals)
    double ratio = 0.0;
};

inline ParamCount param_count(const ExperimentConfig &cfg)
{
    const ArrayConfig &a = cfg.array;
    ParamCount p;
    p.raw = static_cast<std::int64_t>(cfg.users) * a.n_col * a.n_row * a.n_pol * a.K;
    p.reparam = static_cast<std::int64_t>(cfg.users) * cfg.paths * (3 + 2 * a.n_pol);
    p.ratio = static_cast<double>(p.raw) / static_cast<double>(p.reparam);
    return p;
}

inline std::string param_count_csv(const ParamCount &p)
{
    return "raw_unknowns,reparam_unknowns,ratio\n" + std::to_string(p.raw) + "," + std::to_string(p.reparam) + "," +
           fmt_double(p.ratio) + "\n";
}

inline std::string param_count_report(const ExperimentConfig &cfg)
{
    const ParamCount p = param_count(cfg);
    const ArrayConfig &a = cfg.array;
    std::ostringstream o;
    o << "raw channel unknowns:      " << p.raw << "  (U=" << cfg.users << " x " << a.n_col << "x" << a.n_row
      << " antennas x " << a.n_pol << " pol x K=" << a.K << ")\n"
      << "path-parameter unknowns:   " << p.reparam << "  (U x L=" << cfg.paths << " x (2 angles + 1 delay + "
      << 2 * a.n_pol << " gain reals))\n"
      << "reduction ratio:           " << fmt_double(p.ratio) << "\n"
      << "reference order of magnitude for comparison: 1,000,000 -> 30,000\n";
    return o.str();
}

} // namespace chanest::bench

#endif // CHANEST_BENCH_HPP
