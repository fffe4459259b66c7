#pragma once

// Subcommand pipelines. Every analysis is driven by the one loaded config, so
// Monte Carlo, variational, and PDE outputs describe the same system; runs
// with equal (config, seed) reproduce byte-identical numeric artifacts.

#include <exitrate/action.hpp>
#include <exitrate/codesign.hpp>
#include <exitrate/common.hpp>
#include <exitrate/config.hpp>
#include <exitrate/pde.hpp>
#include <exitrate/report.hpp>
#include <exitrate/sde.hpp>
#include <exitrate/system.hpp>
#include <exitrate/version.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace exitrate {

struct RunOverrides {
    std::optional<int> mode;
    std::optional<std::string> section;
    std::optional<double> epsilon;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
};

namespace detail {

inline std::vector<int> selected_modes(const RunConfig& cfg, const RunOverrides& ov) {
    std::vector<int> modes;
    for (int j = 0; j <= cfg.system.n_channels(); ++j)
        if (!ov.mode || *ov.mode == j) modes.push_back(j);
    if (modes.empty()) throw ConfigError("--mode selects no mode of this system");
    return modes;
}

inline std::vector<double> selected_epsilons(const RunConfig& cfg, const RunOverrides& ov) {
    if (!ov.epsilon) return cfg.epsilons;
    return {*ov.epsilon};
}

inline std::vector<BoundarySection> selected_sections(const RunConfig& cfg,
                                                      const RunOverrides& ov) {
    if (ov.section) return {cfg.section(*ov.section)};
    if (cfg.domain.sections.empty())
        throw ConfigError("config defines no boundary sections");
    return cfg.domain.sections;
}

inline std::string eps_tag(double eps) {
    std::string s = format_double(eps);
    for (auto& c : s)
        if (c == '.') c = 'p';
    return s;
}

/// One simulation sweep for (mode, epsilon): all exit records plus censor count.
struct ExitSweep {
    std::vector<ExitRecord> records;
    std::size_t censored = 0;
    std::size_t trials = 0;
};

inline ExitSweep simulate_exits(const MultiChannelSystem& sys, int mode, const DomainSpec& domain,
                                const Vector& x0, const SimParams& params) {
    struct Fold {
        std::vector<ExitRecord> records;
        std::size_t censored = 0;
    };
    auto chunk = [&](std::size_t b, std::size_t e) {
        Fold f;
        run_trial_range(sys, mode, domain, x0, params, b, e,
                        [&](std::size_t t, const ExitEvent& ev) {
                            if (ev.censored) ++f.censored;
                            else f.records.push_back({t, ev.tau, ev.point});
                        });
        return f;
    };
    auto fold = [](Fold acc, Fold part) {
        acc.records.insert(acc.records.end(), part.records.begin(), part.records.end());
        acc.censored += part.censored;
        return acc;
    };
    const auto total =
        parallel_chunked<Fold>(params.trials, 1024, chunk, {}, fold, params.workers);
    return {std::move(total.records), total.censored, params.trials};
}

inline ExitStats section_stats(const DomainSpec& domain, const BoundarySection& section,
                               const ExitSweep& sweep) {
    ExitStats stats;
    stats.trials = sweep.trials;
    stats.censored = sweep.censored;
    stats.exited = sweep.records.size();
    for (const auto& r : sweep.records)
        if (section_membership(domain, section, r.point)) ++stats.in_section;
    const auto n = static_cast<double>(sweep.trials);
    stats.q_hat = static_cast<double>(stats.in_section) / n;
    stats.ci95 = 1.96 * std::sqrt(stats.q_hat * (1.0 - stats.q_hat) / n);
    stats.censored_fraction = static_cast<double>(stats.censored) / n;
    return stats;
}

struct PhaseTimer {
    Json& timings;
    std::string name;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    ~PhaseTimer() {
        const auto stop = std::chrono::steady_clock::now();
        timings[name] = std::chrono::duration<double>(stop - start).count();
    }
};

inline void write_field_csv(const std::filesystem::path& path, const FieldSolution& f_field,
                            const FieldSolution& j_field) {
    CsvWriter csv(path);
    const Grid& g = f_field.grid;
    for (int i = 0; i < g.dim; ++i) csv.field("x_" + std::to_string(i + 1));
    csv.field(std::string("f"));
    csv.field(std::string("J"));
    csv.endrow();
    for (Eigen::Index j = 0; j < g.ny; ++j)
        for (Eigen::Index i = 0; i < g.nx; ++i) {
            if (!g.is_interior(i, j)) continue;
            const Vector x = g.node(i, j);
            for (int k = 0; k < g.dim; ++k) csv.field(x[k]);
            csv.field(f_field.values[g.flat(i, j)]);
            csv.field(j_field.values[g.flat(i, j)]);
            csv.endrow();
        }
}

}  // namespace detail

inline RunReport run(RunConfig cfg, const std::string& subcommand, const RunOverrides& ov = {}) {
    static const std::set<std::string> known = {"verify",    "simulate",     "rate", "exit-profile",
                                                "pde-check", "codesign", "all"};
    if (!known.count(subcommand)) throw ConfigError("unknown subcommand '" + subcommand + "'");
    if (ov.seed) cfg.sim.seed = *ov.seed;
    if (ov.out_dir) cfg.output.directory = *ov.out_dir;
    if (ov.format) cfg.output.formats = *ov.format;

    const bool write_csv = cfg.output.formats != "json";
    const std::filesystem::path out_dir(cfg.output.directory);
    std::filesystem::create_directories(out_dir);

    RunReport report;
    report.version = kVersion;
    report.config = config_to_json(cfg);
    report.hash = config_hash(cfg);

    const bool do_all = subcommand == "all";
    const auto modes = detail::selected_modes(cfg, ov);

    // --- verify -----------------------------------------------------------
    if (do_all || subcommand == "verify") {
        detail::PhaseTimer timer{report.timings, "verify"};
        try {
            const auto gain = verify_gain_tuple(cfg.system, cfg.stability_margin);
            Json jmodes = Json::array();
            for (const auto& m : gain.modes)
                jmodes.push_back({{"mode", m.mode},
                                  {"spectral_abscissa", m.spectral_abscissa},
                                  {"stable", m.stable}});
            report.verification["gain_class"] = {{"pass", gain.pass},
                                                 {"margin", gain.margin},
                                                 {"modes", jmodes}};
            Json jattr = Json::array();
            bool attraction_pass = true;
            for (int mode : modes) {
                const auto a = verify_domain_attraction(cfg.system, mode, cfg.domain,
                                                        cfg.attraction_probes);
                attraction_pass = attraction_pass && a.pass;
                jattr.push_back({{"mode", mode},
                                 {"pass", a.pass},
                                 {"worst_inner_product", a.worst_inner_product},
                                 {"probes", a.probes},
                                 {"skipped", a.skipped}});
            }
            report.verification["domain_attraction"] = jattr;
            // ellipticity probe over interior points
            {
                NormalStream g(cfg.sim.seed, 0xe11ULL);
                double min_eig = std::numeric_limits<double>::infinity();
                int checked = 0;
                for (int k = 0; k < 1000; ++k) {
                    Vector x(cfg.system.dim());
                    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = g.next();
                    // pull the Gaussian probe into the domain by shrinking toward x0
                    double shrink = 1.0;
                    while (!cfg.domain.contains(x * shrink) && shrink > 1e-6) shrink *= 0.5;
                    x *= shrink;
                    if (!cfg.domain.contains(x)) continue;
                    const Matrix a = diffusion_matrix(cfg.system, x);
                    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
                    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
                    ++checked;
                }
                report.verification["ellipticity"] = {
                    {"min_eigenvalue", min_eig},
                    {"floor", cfg.system.diffusion.ellipticity_floor},
                    {"points", checked},
                    {"pass", min_eig >= cfg.system.diffusion.ellipticity_floor}};
            }
            report.verification["pass"] =
                gain.pass && attraction_pass &&
                report.verification["ellipticity"]["pass"].get<bool>();
        } catch (const std::exception& e) {
            report.record_error("verify", e.what());
        }
    }

    // --- simulate -----------------------------------------------------------
    if (do_all || subcommand == "simulate") {
        detail::PhaseTimer timer{report.timings, "simulate"};
        const auto sections = detail::selected_sections(cfg, ov);
        for (int mode : modes) {
            for (double eps : detail::selected_epsilons(cfg, ov)) {
                SimParams params = cfg.sim;
                params.epsilon = eps;
                const std::string tag =
                    "mode " + std::to_string(mode) + ", eps " + format_double(eps);
                try {
                    const auto sweep =
                        detail::simulate_exits(cfg.system, mode, cfg.domain, cfg.x0, params);
                    const double censored_frac =
                        static_cast<double>(sweep.censored) / static_cast<double>(sweep.trials);
                    if (censored_frac > params.censor_limit)
                        throw HorizonError("censored fraction " + format_double(censored_frac) +
                                           " exceeds censor_limit " +
                                           format_double(params.censor_limit) +
                                           "; increase t_max");
                    for (const auto& section : sections) {
                        const auto stats = detail::section_stats(cfg.domain, section, sweep);
                        RateRow row;
                        row.mode = mode;
                        row.section = section.name;
                        row.epsilon = eps;
                        row.trials = stats.trials;
                        row.q_hat = stats.q_hat;
                        row.ci95 = stats.ci95;
                        row.emp_rate = empirical_rate(stats.q_hat, eps);
                        row.censored_frac = stats.censored_fraction;
                        row.seed = params.seed;
                        report.mc_rates.push_back(row);
                    }
                    if (write_csv)
                        write_exits_csv(out_dir / ("exits_" + std::to_string(mode) + "_" +
                                                   detail::eps_tag(eps) + ".csv"),
                                        sweep.records, cfg.system.dim());
                } catch (const std::exception& e) {
                    report.record_error("simulate (" + tag + ")", e.what());
                }
            }
        }
    }

    // --- rate ---------------------------------------------------------------
    if (do_all || subcommand == "rate") {
        detail::PhaseTimer timer{report.timings, "rate"};
        const auto sections = detail::selected_sections(cfg, ov);
        for (int mode : modes) {
            for (const auto& section : sections) {
                const std::string tag = "mode " + std::to_string(mode) + ", section " + section.name;
                try {
                    const auto r = rate_to_section(cfg.system, mode, cfg.domain, cfg.x0, section,
                                                   cfg.action);
                    VariationalRow row;
                    row.mode = mode;
                    row.section = section.name;
                    row.rate = r.value;
                    row.horizon = r.horizon;
                    row.converged = r.converged;
                    row.horizon_warning = r.horizon_warning;
                    row.restarts_used = r.restarts_used;
                    report.variational.push_back(row);
                    if (write_csv)
                        write_path_csv(
                            out_dir / ("path_" + std::to_string(mode) + "_" + section.name + ".csv"),
                            r.path);
                } catch (const std::exception& e) {
                    report.record_error("rate (" + tag + ")", e.what());
                }
            }
        }
    }

    // --- exit-profile ---------------------------------------------------------
    if (do_all || subcommand == "exit-profile") {
        detail::PhaseTimer timer{report.timings, "exit-profile"};
        for (int mode : modes) {
            const std::string tag = "mode " + std::to_string(mode);
            try {
                const Vector anchor = Vector::Zero(cfg.system.dim());
                const auto profile =
                    quasipotential_profile(cfg.system, mode, cfg.domain, anchor,
                                           cfg.action.boundary_samples, cfg.action);
                const double tie_tol = cfg.action.tie_tol_rel * std::max(profile.min_value, 1e-12);
                const auto sigma = exit_set(profile, tie_tol);
                if (write_csv)
                    write_profile_csv(out_dir / ("profile_" + std::to_string(mode) + ".csv"),
                                      profile);
                Json jp;
                jp["mode"] = mode;
                jp["min_value"] = profile.min_value;
                Json jsigma = Json::array();
                for (const auto& y : sigma) {
                    Json pt = Json::array();
                    for (Eigen::Index i = 0; i < y.size(); ++i) pt.push_back(y[i]);
                    jsigma.push_back(pt);
                }
                jp["exit_set"] = jsigma;
                Json jhist = Json::array();
                for (double eps : detail::selected_epsilons(cfg, ov)) {
                    SimParams params = cfg.sim;
                    params.epsilon = eps;
                    try {
                        const auto hist = exit_location_histogram(
                            cfg.system, mode, cfg.domain, cfg.x0, params, cfg.profile.bins, sigma,
                            cfg.profile.concentration_delta,
                            cfg.profile.metric == "geodesic" ? BoundaryMetric::Geodesic
                                                             : BoundaryMetric::Euclidean);
                        jhist.push_back({{"epsilon", eps},
                                         {"exits", hist.exits},
                                         {"censored", hist.censored},
                                         {"concentration", hist.concentration},
                                         {"delta", cfg.profile.concentration_delta},
                                         {"metric", cfg.profile.metric},
                                         {"bins", hist.bin_counts}});
                    } catch (const std::exception& e) {
                        report.record_error("exit-profile (" + tag + ", eps " + format_double(eps) +
                                                ")",
                                            e.what());
                    }
                }
                jp["histograms"] = jhist;
                report.profiles.push_back(jp);
            } catch (const std::exception& e) {
                report.record_error("exit-profile (" + tag + ")", e.what());
            }
        }
    }

    // --- pde-check -------------------------------------------------------------
    if ((do_all && cfg.pde.enabled) || subcommand == "pde-check") {
        detail::PhaseTimer timer{report.timings, "pde-check"};
        try {
            if (cfg.system.dim() > 2)
                throw ConfigError("pde-check supports d <= 2 only");
            const Grid grid = Grid::build(cfg.domain, cfg.pde.h);
            std::optional<BoundarySection> data_section;
            if (!cfg.pde.section.empty()) data_section = cfg.section(cfg.pde.section);
            auto terminal = [&](const Vector& y) -> double {
                if (!data_section) return 0.0;
                return section_membership(cfg.domain, *data_section, y)
                           ? 0.0
                           : std::numeric_limits<double>::infinity();
            };
            for (int mode : modes) {
                for (double eps : detail::selected_epsilons(cfg, ov)) {
                    const std::string tag =
                        "mode " + std::to_string(mode) + ", eps " + format_double(eps);
                    try {
                        const auto f_field = solve_exit_bvp(cfg.system, mode, eps, grid, terminal);
                        const auto j_field = log_transform(f_field);
                        const auto residual = hjb_residual(j_field, cfg.system, mode);
                        const double f0 = field_value_at(f_field, cfg.x0);
                        Json entry;
                        entry["mode"] = mode;
                        entry["epsilon"] = eps;
                        entry["h"] = cfg.pde.h;
                        entry["boundary_data"] =
                            data_section ? data_section->name : std::string("zero-cost");
                        entry["f_at_x0"] = f0;
                        entry["J_at_x0"] = f0 > 0.0 ? -eps * std::log(f0)
                                                    : std::numeric_limits<double>::infinity();
                        entry["hjb_residual_max"] = residual.max_abs;
                        entry["hjb_residual_rms"] = residual.rms;
                        entry["nodes_checked"] = residual.nodes_checked;
                        // cross-check against the matching MC row when present
                        for (const auto& row : report.mc_rates)
                            if (row.mode == mode && row.epsilon == eps && data_section &&
                                row.section == data_section->name) {
                                entry["mc_q_hat"] = row.q_hat;
                                entry["mc_abs_diff"] = std::abs(row.q_hat - f0);
                            }
                        report.pde.push_back(entry);
                        if (write_csv)
                            detail::write_field_csv(out_dir / ("field_" + std::to_string(mode) +
                                                               "_" + detail::eps_tag(eps) + ".csv"),
                                                    f_field, j_field);
                    } catch (const std::exception& e) {
                        report.record_error("pde-check (" + tag + ")", e.what());
                    }
                }
            }
        } catch (const std::exception& e) {
            report.record_error("pde-check", e.what());
        }
    }

    // --- codesign ---------------------------------------------------------------
    if ((do_all && cfg.codesign.enabled) || subcommand == "codesign") {
        detail::PhaseTimer timer{report.timings, "codesign"};
        try {
            const auto problem = cfg.codesign_problem();
            const auto result = solve_codesign(problem);
            report.codesign = codesign_to_json(result);
            if (write_csv) write_codesign_csv(out_dir / "codesign.csv", result);
        } catch (const std::exception& e) {
            report.record_error("codesign", e.what());
        }
    }

    if (write_csv && !report.mc_rates.empty()) write_rates_csv(out_dir / "rates.csv", report.mc_rates);
    {
        std::ofstream out(out_dir / "report.json");
        out << report.to_json().dump(2) << '\n';
    }
    return report;
}

}  // namespace exitrate
