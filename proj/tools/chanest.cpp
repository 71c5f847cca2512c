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

// chanest command-line driver.

#include "chanest/chanest.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace chanest;

namespace {

std::vector<std::string> split_list(const std::string &s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos)
            throw std::invalid_argument("empty item in list '" + s + "'");
        out.push_back(item.substr(b, e - b + 1));
    }
    if (out.empty())
        throw std::invalid_argument("empty list");
    return out;
}

double parse_double(const std::string &s)
{
    if (s == "inf" || s == "+inf")
        return std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size())
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

Index parse_index(const std::string &s)
{
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size())
        throw std::invalid_argument("not an integer: '" + s + "'");
    return static_cast<Index>(v);
}

std::string command_line(int argc, char **argv)
{
    std::string s;
    for (int i = 0; i < argc; ++i)
        s += (i ? " " : "") + std::string(argv[i]);
    return s;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Structured tensor channel estimation experiments"};
    app.set_version_flag("--version", CHANEST_VERSION_STRING);
    app.require_subcommand(1);

    std::string config_path, out_dir, snr_list, methods_list, dims_list;
    std::uint64_t seed = 0;
    int trials = 0, threads = -1;
    Index paths = 0;

    auto *gen = app.add_subcommand("gen-recovery", "Recover first-mode generators from a noiseless channel tensor");
    gen->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "Master seed");
    gen->add_option("--paths", paths, "Number of paths (clipped to the generic bound)");
    gen->add_option("--out", out_dir, "Output directory");

    auto *sweep = app.add_subcommand("nmse-sweep", "Monte-Carlo NMSE versus SNR comparison");
    sweep->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--snr", snr_list, "Comma-separated SNR grid in dB");
    sweep->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
    sweep->add_option("--methods", methods_list, "Comma-separated subset of baseline,als,vsd_fort");
    sweep->add_option("--seed", seed, "Master seed");
    sweep->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sweep->add_option("--out", out_dir, "Output directory");

    auto *bound = app.add_subcommand("bound", "Generic uniqueness bound for a tensor shape");
    bound->add_option("--dims", dims_list, "I1,I2,I3,I4")->required();
    bound->add_option("--out", out_dir, "Also write bound.csv here");

    auto *params = app.add_subcommand("param-report", "Unknown-count comparison for a scenario");
    params->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    params->add_option("--out", out_dir, "Also write param_count.csv here");

    CLI11_PARSE(app, argc, argv);
    const std::string cmdline = command_line(argc, argv);

    try
    {
        if (*bound)
        {
            const auto items = split_list(dims_list);
            if (items.size() != 4)
                throw std::invalid_argument("--dims needs exactly four values");
            Dims4 d{};
            for (std::size_t i = 0; i < 4; ++i)
            {
                d[i] = parse_index(items[i]);
                if (d[i] < 1)
                    throw std::invalid_argument("--dims values must be >= 1");
            }
            const vsd::BoundResult b = vsd::generic_bound(d);
            std::string csv = "I1,I2,I3,I4,bound,K1,L1,K2,L2,K3,L3\n";
            csv += std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + "," +
                   std::to_string(d[3]) + "," + std::to_string(b.bound);
            if (b.smoothing)
            {
                const auto &s = *b.smoothing;
                for (Index v : {s.K1, s.L1, s.K2, s.L2, s.K3, s.L3})
                    csv += "," + std::to_string(v);
            }
            else
                csv += ",,,,,,";
            csv += "\n";
            std::cout << csv;
            if (!out_dir.empty())
            {
                bench::write_text(fs::path(out_dir) / "bound.csv", csv);
                const nlohmann::json m{{"command", cmdline},
                                       {"dims", {d[0], d[1], d[2], d[3]}},
                                       {"versions", bench::versions()},
                                       {"outputs", {"bound.csv"}}};
                bench::write_text(fs::path(out_dir) / "manifest.json", m.dump(2) + "\n");
            }
            return 0;
        }

        bench::ExperimentConfig cfg = bench::load_config(config_path);
        if (!out_dir.empty())
            cfg.out_dir = out_dir;

        if (*params)
        {
            std::cout << bench::param_count_report(cfg);
            if (!out_dir.empty())
            {
                bench::write_text(fs::path(cfg.out_dir) / "param_count.csv",
                                  bench::param_count_csv(bench::param_count(cfg)));
                bench::write_manifest(cfg.out_dir, cmdline, cfg, {"param_count.csv"});
            }
            return 0;
        }

        if (gen->count("--seed"))
            cfg.seed = seed;
        if (sweep->count("--seed"))
            cfg.seed = seed;

        if (*gen)
        {
            if (paths > 0)
                cfg.recovery_paths = paths;
            cfg.validate();
            const auto t0 = std::chrono::steady_clock::now();
            const bench::RecoveryResult r = bench::run_generator_recovery(cfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            for (const auto &w : r.warnings)
                std::cerr << "warning: " << w << "\n";
            const auto outputs = bench::write_recovery_outputs(r, cfg.out_dir);
            bench::write_manifest(cfg.out_dir, cmdline, cfg, outputs,
                                  {{"paths", r.paths},
                                   {"detected_rank", r.detected_rank},
                                   {"max_phase_error", r.max_phase_error},
                                   {"comb_residual", r.comb_residual},
                                   {"clipped", r.clipped},
                                   {"warnings", r.warnings},
                                   {"wall_time_s", secs}});
            std::printf("paths=%ld detected_rank=%ld max_phase_error=%.3e rad comb_residual=%.3e\n",
                        static_cast<long>(r.paths), static_cast<long>(r.detected_rank), r.max_phase_error,
                        r.comb_residual);
            return 0;
        }

        if (*sweep)
        {
            if (!snr_list.empty())
            {
                cfg.snr_db.clear();
                for (const auto &s : split_list(snr_list))
                    cfg.snr_db.push_back(parse_double(s));
            }
            if (trials > 0)
                cfg.trials = trials;
            if (!methods_list.empty())
                cfg.methods = split_list(methods_list);
            if (threads >= 0)
                cfg.threads = threads;
            cfg.validate();
            const bench::SweepResult r = bench::run_nmse_sweep(cfg);
            const auto outputs = bench::write_sweep_outputs(r, cfg.out_dir);

            nlohmann::json timing = nlohmann::json::object();
            for (const auto &row : r.rows)
                timing[row.method] = timing.value(row.method, 0.0) + row.wall_time;
            bench::write_manifest(cfg.out_dir, cmdline, cfg, outputs,
                                  {{"threads", r.threads}, {"wall_time_s", r.wall_time}, {"method_time_s", timing}});
            std::cout << bench::summary_csv(bench::summarize(r));
            return 0;
        }
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
