#pragma once

// One JSON document drives every analysis, so Monte Carlo, variational, and
// PDE numbers always describe the same system instance. Loading materializes
// all defaults and runs cross-field validation; emit() is canonical, so
// load(emit(config)) reproduces the config exactly.

#include <exitrate/action.hpp>
#include <exitrate/codesign.hpp>
#include <exitrate/common.hpp>
#include <exitrate/domain.hpp>
#include <exitrate/sde.hpp>
#include <exitrate/system.hpp>

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace exitrate {

using Json = nlohmann::json;

struct PdeConfig {
    bool enabled = false;
    double h = 0.005;
    std::string section;  // hit-probability data: 0 on this section, +inf off it
};

struct ProfileConfig {
    int bins = 64;
    double concentration_delta = 0.5;
    std::string metric = "euclidean";  // euclidean | geodesic
};

struct CodesignConfig {
    bool enabled = false;
    std::vector<GainCandidate> candidates;
    Vector weights;
    std::string orientation = "paper-literal";
    std::string nominal_section = "full";
    std::vector<std::string> failure_sections;
};

struct OutputConfig {
    std::string directory = "out";
    std::string formats = "both";  // json | csv | both
};

struct RunConfig {
    MultiChannelSystem system;
    DomainSpec domain;
    Vector x0;
    std::vector<double> epsilons;
    SimParams sim;
    ActionSolverOptions action;
    double stability_margin = 0.0;
    int attraction_probes = 256;
    PdeConfig pde;
    ProfileConfig profile;
    CodesignConfig codesign;
    OutputConfig output;

    [[nodiscard]] const BoundarySection& section(const std::string& name) const {
        for (const auto& s : domain.sections)
            if (s.name == name) return s;
        throw ConfigError("unknown boundary section '" + name + "'");
    }

    [[nodiscard]] CodesignProblem codesign_problem() const {
        if (!codesign.enabled) throw ConfigError("codesign block is not enabled");
        CodesignProblem p;
        p.base = system;
        p.domain = domain;
        p.x0 = x0;
        p.candidates = codesign.candidates;
        p.weights = codesign.weights;
        p.nominal_section = section(codesign.nominal_section);
        for (const auto& name : codesign.failure_sections)
            p.failure_sections.push_back(section(name));
        p.orientation = codesign.orientation == "reliability" ? CodesignOrientation::Reliability
                                                              : CodesignOrientation::PaperLiteral;
        p.solver = action;
        p.stability_margin = stability_margin;
        return p;
    }
};

namespace detail {

inline Matrix parse_matrix(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(where + ": expected a matrix as array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols)
            throw ConfigError(where + ": ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline Vector parse_vector(const Json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

inline Json dump_matrix(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline Json dump_vector(const Vector& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline BoundarySection parse_section(const Json& j, const std::string& where) {
    BoundarySection s;
    s.name = j.at("name").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "full-boundary") {
        s.kind = BoundarySection::Kind::FullBoundary;
    } else if (kind == "halfspace-cap") {
        s.kind = BoundarySection::Kind::HalfspaceCap;
        s.direction = parse_vector(j.at("direction"), where + ".direction");
        s.center = j.contains("center") ? parse_vector(j.at("center"), where + ".center")
                                        : Vector::Zero(s.direction.size());
        s.offset = j.at("offset").get<double>();
    } else if (kind == "point-ball") {
        s.kind = BoundarySection::Kind::PointBall;
        s.center = parse_vector(j.at("center"), where + ".center");
        s.radius = j.at("radius").get<double>();
        if (s.radius < 0.0) throw ConfigError(where + ": radius must be nonnegative");
    } else {
        throw ConfigError(where + ": unknown section kind '" + kind + "'");
    }
    s.tol = j.value("tol", 1e-9);
    return s;
}

inline Json dump_section(const BoundarySection& s) {
    Json j;
    j["name"] = s.name;
    switch (s.kind) {
        case BoundarySection::Kind::FullBoundary:
            j["kind"] = "full-boundary";
            break;
        case BoundarySection::Kind::HalfspaceCap:
            j["kind"] = "halfspace-cap";
            j["direction"] = dump_vector(s.direction);
            j["center"] = dump_vector(s.center);
            j["offset"] = s.offset;
            break;
        case BoundarySection::Kind::PointBall:
            j["kind"] = "point-ball";
            j["center"] = dump_vector(s.center);
            j["radius"] = s.radius;
            break;
    }
    j["tol"] = s.tol;
    return j;
}

}  // namespace detail

inline RunConfig config_from_json(const Json& doc) {
    RunConfig cfg;

    // --- system ---
    const auto& jsys = doc.at("system");
    cfg.system.A = detail::parse_matrix(jsys.at("A"), "system.A");
    for (std::size_t i = 0; i < jsys.at("channels").size(); ++i) {
        const auto& jc = jsys.at("channels")[i];
        Channel ch;
        ch.B = detail::parse_matrix(jc.at("B"), "system.channels[" + std::to_string(i) + "].B");
        ch.K = detail::parse_matrix(jc.at("K"), "system.channels[" + std::to_string(i) + "].K");
        cfg.system.channels.push_back(std::move(ch));
    }

    // --- diffusion ---
    const auto& jd = doc.at("diffusion");
    const auto dkind = jd.value("kind", std::string("constant"));
    cfg.system.diffusion.kind = dkind == "state-affine" ? DiffusionSpec::Kind::StateAffine
                                                        : DiffusionSpec::Kind::Constant;
    if (dkind != "constant" && dkind != "state-affine")
        throw ConfigError("diffusion.kind: expected 'constant' or 'state-affine'");
    cfg.system.diffusion.sigma0 = detail::parse_matrix(jd.at("sigma0"), "diffusion.sigma0");
    if (jd.contains("coeffs"))
        for (std::size_t i = 0; i < jd.at("coeffs").size(); ++i)
            cfg.system.diffusion.coeffs.push_back(detail::parse_matrix(
                jd.at("coeffs")[i], "diffusion.coeffs[" + std::to_string(i) + "]"));
    cfg.system.diffusion.lipschitz_bound = jd.value("lipschitz_bound", 0.0);
    cfg.system.diffusion.ellipticity_floor = jd.value("ellipticity_floor", 1e-6);
    cfg.system.validate_dimensions();

    // --- domain ---
    const auto& jdom = doc.at("domain");
    const auto kind = jdom.at("kind").get<std::string>();
    if (kind == "interval") {
        cfg.domain = DomainSpec::interval(jdom.at("lo").get<double>(), jdom.at("hi").get<double>());
    } else if (kind == "ellipsoid") {
        cfg.domain = DomainSpec::ellipsoid(detail::parse_vector(jdom.at("center"), "domain.center"),
                                           detail::parse_matrix(jdom.at("Q"), "domain.Q"));
    } else if (kind == "polytope") {
        cfg.domain = DomainSpec::polytope(detail::parse_matrix(jdom.at("faces"), "domain.faces"),
                                          detail::parse_vector(jdom.at("offsets"), "domain.offsets"));
    } else {
        throw ConfigError("domain.kind: expected interval, ellipsoid, or polytope");
    }
    cfg.domain.boundary_tol = jdom.value("boundary_tol", 1e-7);
    if (jdom.contains("sections"))
        for (std::size_t i = 0; i < jdom.at("sections").size(); ++i)
            cfg.domain.sections.push_back(detail::parse_section(
                jdom.at("sections")[i], "domain.sections[" + std::to_string(i) + "]"));
    if (cfg.domain.dim() != cfg.system.dim())
        throw ConfigError("domain dimension does not match the system dimension");

    // --- start point and noise levels ---
    cfg.x0 = doc.contains("x0") ? detail::parse_vector(doc.at("x0"), "x0")
                                : Vector::Zero(cfg.system.dim());
    if (cfg.x0.size() != cfg.system.dim()) throw ConfigError("x0 dimension mismatch");
    if (doc.contains("epsilons"))
        for (const auto& e : doc.at("epsilons")) cfg.epsilons.push_back(e.get<double>());
    else
        cfg.epsilons = {0.25};
    for (double e : cfg.epsilons)
        if (!(e > 0.0)) throw ConfigError("epsilons: every entry must be positive");

    // --- sim ---
    const Json jsim = doc.value("sim", Json::object());
    cfg.sim.epsilon = cfg.epsilons.front();
    cfg.sim.dt = jsim.value("dt", 1e-3);
    cfg.sim.trials = jsim.value("trials", static_cast<std::size_t>(100000));
    cfg.sim.seed = jsim.value("seed", static_cast<std::uint64_t>(42));
    cfg.sim.censor_limit = jsim.value("censor_limit", 0.01);
    cfg.sim.phi_cap_factor = jsim.value("phi_cap_factor", 10.0);
    if (jsim.contains("t_max")) {
        cfg.sim.t_max = jsim.at("t_max").get<double>();
    } else {
        // default horizon: 50 over the slowest mode's decay rate
        double slowest = std::numeric_limits<double>::infinity();
        for (int j = 0; j <= cfg.system.n_channels(); ++j)
            slowest = std::min(slowest,
                               std::abs(spectral_abscissa(cfg.system.drift_matrix(j), "mode")));
        cfg.sim.t_max = slowest > 0.0 && std::isfinite(slowest) ? 50.0 / slowest : 50.0;
    }
    cfg.sim.validate();

    // --- action solver ---
    const Json jact = doc.value("action", Json::object());
    cfg.action.n_segments = jact.value("n_segments", 400);
    if (jact.contains("t_grid")) {
        cfg.action.t_grid.clear();
        for (const auto& t : jact.at("t_grid")) cfg.action.t_grid.push_back(t.get<double>());
    }
    cfg.action.grad_tol = jact.value("grad_tol", 1e-6);
    cfg.action.free_time_tol = jact.value("free_time_tol", 0.01);
    cfg.action.interior_tol = jact.value("interior_tol", 1e-9);
    cfg.action.penalty_weight = jact.value("penalty_weight", 100.0);
    cfg.action.penalty_sweeps = jact.value("penalty_sweeps", 3);
    cfg.action.max_iterations = jact.value("max_iterations", 2000);
    cfg.action.restarts = jact.value("restarts", 2);
    cfg.action.boundary_samples = jact.value("boundary_samples", 64);
    cfg.action.refine_iters = jact.value("refine_iters", 16);
    cfg.action.tie_tol_rel = jact.value("tie_tol_rel", 1e-3);
    if (cfg.action.n_segments < 2 || cfg.action.t_grid.empty())
        throw ConfigError("action: n_segments >= 2 and a nonempty t_grid are required");

    cfg.stability_margin = doc.value("stability_margin", 0.0);
    cfg.attraction_probes = doc.value("attraction_probes", 256);

    // --- pde ---
    const Json jpde = doc.value("pde", Json::object());
    cfg.pde.enabled = jpde.value("enabled", false);
    cfg.pde.h = jpde.value("h", 0.005);
    cfg.pde.section = jpde.value("section", std::string());

    // --- profile ---
    const Json jprof = doc.value("profile", Json::object());
    cfg.profile.bins = jprof.value("bins", 64);
    cfg.profile.concentration_delta = jprof.value("concentration_delta", 0.5);
    cfg.profile.metric = jprof.value("metric", std::string("euclidean"));
    if (cfg.profile.metric != "euclidean" && cfg.profile.metric != "geodesic")
        throw ConfigError("profile.metric: expected 'euclidean' or 'geodesic'");

    // --- codesign ---
    const Json jcd = doc.value("codesign", Json::object());
    cfg.codesign.enabled = jcd.value("enabled", false);
    if (cfg.codesign.enabled) {
        for (std::size_t c = 0; c < jcd.at("candidates").size(); ++c) {
            const auto& jcand = jcd.at("candidates")[c];
            GainCandidate cand;
            cand.label = jcand.value("label", "candidate-" + std::to_string(c));
            for (std::size_t i = 0; i < jcand.at("K").size(); ++i)
                cand.gains.push_back(detail::parse_matrix(
                    jcand.at("K")[i],
                    "codesign.candidates[" + std::to_string(c) + "].K[" + std::to_string(i) + "]"));
            cfg.codesign.candidates.push_back(std::move(cand));
        }
        cfg.codesign.weights = detail::parse_vector(jcd.at("weights"), "codesign.weights");
        cfg.codesign.orientation = jcd.value("orientation", std::string("paper-literal"));
        if (cfg.codesign.orientation != "paper-literal" && cfg.codesign.orientation != "reliability")
            throw ConfigError("codesign.orientation: expected 'paper-literal' or 'reliability'");
        cfg.codesign.nominal_section = jcd.value("nominal_section", std::string("full"));
        if (jcd.contains("failure_sections"))
            for (const auto& s : jcd.at("failure_sections"))
                cfg.codesign.failure_sections.push_back(s.get<std::string>());
        else
            cfg.codesign.failure_sections.assign(
                static_cast<std::size_t>(cfg.system.n_channels()), cfg.codesign.nominal_section);
    }

    // --- output ---
    const Json jout = doc.value("output", Json::object());
    cfg.output.directory = jout.value("directory", std::string("out"));
    cfg.output.formats = jout.value("formats", std::string("both"));
    if (cfg.output.formats != "json" && cfg.output.formats != "csv" && cfg.output.formats != "both")
        throw ConfigError("output.formats: expected json, csv, or both");

    // --- cross-field validation ---
    if (!cfg.domain.contains(Vector::Zero(cfg.system.dim())))
        throw ConfigError("domain must contain the origin (the common equilibrium)");
    if (!cfg.domain.contains(cfg.x0)) throw ConfigError("x0 must lie in the open domain");
    {
        const auto report = verify_gain_tuple(cfg.system, cfg.stability_margin);
        if (!report.pass) {
            std::string msg = "system gains are outside the reliable class:";
            for (const auto& m : report.modes)
                if (!m.stable)
                    msg += " mode " + std::to_string(m.mode) + " abscissa " +
                           format_double(m.spectral_abscissa) + ";";
            throw ConfigError(msg);
        }
    }
    if (cfg.codesign.enabled) cfg.codesign_problem().validate();
    return cfg;
}

inline Json config_to_json(const RunConfig& cfg) {
    Json doc;
    Json jsys;
    jsys["A"] = detail::dump_matrix(cfg.system.A);
    jsys["channels"] = Json::array();
    for (const auto& ch : cfg.system.channels)
        jsys["channels"].push_back({{"B", detail::dump_matrix(ch.B)}, {"K", detail::dump_matrix(ch.K)}});
    doc["system"] = jsys;

    Json jd;
    jd["kind"] =
        cfg.system.diffusion.kind == DiffusionSpec::Kind::StateAffine ? "state-affine" : "constant";
    jd["sigma0"] = detail::dump_matrix(cfg.system.diffusion.sigma0);
    if (!cfg.system.diffusion.coeffs.empty()) {
        jd["coeffs"] = Json::array();
        for (const auto& c : cfg.system.diffusion.coeffs) jd["coeffs"].push_back(detail::dump_matrix(c));
    }
    jd["lipschitz_bound"] = cfg.system.diffusion.lipschitz_bound;
    jd["ellipticity_floor"] = cfg.system.diffusion.ellipticity_floor;
    doc["diffusion"] = jd;

    Json jdom;
    switch (cfg.domain.kind()) {
        case DomainSpec::Kind::Interval:
            jdom["kind"] = "interval";
            jdom["lo"] = cfg.domain.interval_lo();
            jdom["hi"] = cfg.domain.interval_hi();
            break;
        case DomainSpec::Kind::Ellipsoid:
            jdom["kind"] = "ellipsoid";
            jdom["center"] = detail::dump_vector(cfg.domain.ellipsoid_center());
            jdom["Q"] = detail::dump_matrix(cfg.domain.ellipsoid_matrix());
            break;
        case DomainSpec::Kind::Polytope:
            jdom["kind"] = "polytope";
            jdom["faces"] = detail::dump_matrix(cfg.domain.polytope_faces());
            jdom["offsets"] = detail::dump_vector(cfg.domain.polytope_offsets());
            break;
    }
    jdom["boundary_tol"] = cfg.domain.boundary_tol;
    jdom["sections"] = Json::array();
    for (const auto& s : cfg.domain.sections) jdom["sections"].push_back(detail::dump_section(s));
    doc["domain"] = jdom;

    doc["x0"] = detail::dump_vector(cfg.x0);
    doc["epsilons"] = cfg.epsilons;
    doc["sim"] = {{"dt", cfg.sim.dt},
                  {"t_max", cfg.sim.t_max},
                  {"trials", cfg.sim.trials},
                  {"seed", cfg.sim.seed},
                  {"censor_limit", cfg.sim.censor_limit},
                  {"phi_cap_factor", cfg.sim.phi_cap_factor}};
    doc["action"] = {{"n_segments", cfg.action.n_segments},
                     {"t_grid", cfg.action.t_grid},
                     {"grad_tol", cfg.action.grad_tol},
                     {"free_time_tol", cfg.action.free_time_tol},
                     {"interior_tol", cfg.action.interior_tol},
                     {"penalty_weight", cfg.action.penalty_weight},
                     {"penalty_sweeps", cfg.action.penalty_sweeps},
                     {"max_iterations", cfg.action.max_iterations},
                     {"restarts", cfg.action.restarts},
                     {"boundary_samples", cfg.action.boundary_samples},
                     {"refine_iters", cfg.action.refine_iters},
                     {"tie_tol_rel", cfg.action.tie_tol_rel}};
    doc["stability_margin"] = cfg.stability_margin;
    doc["attraction_probes"] = cfg.attraction_probes;
    doc["pde"] = {{"enabled", cfg.pde.enabled}, {"h", cfg.pde.h}, {"section", cfg.pde.section}};
    doc["profile"] = {{"bins", cfg.profile.bins},
                      {"concentration_delta", cfg.profile.concentration_delta},
                      {"metric", cfg.profile.metric}};
    Json jcd;
    jcd["enabled"] = cfg.codesign.enabled;
    if (cfg.codesign.enabled) {
        jcd["candidates"] = Json::array();
        for (const auto& cand : cfg.codesign.candidates) {
            Json jc;
            jc["label"] = cand.label;
            jc["K"] = Json::array();
            for (const auto& k : cand.gains) jc["K"].push_back(detail::dump_matrix(k));
            jcd["candidates"].push_back(jc);
        }
        jcd["weights"] = detail::dump_vector(cfg.codesign.weights);
        jcd["orientation"] = cfg.codesign.orientation;
        jcd["nominal_section"] = cfg.codesign.nominal_section;
        jcd["failure_sections"] = cfg.codesign.failure_sections;
    }
    doc["codesign"] = jcd;
    doc["output"] = {{"directory", cfg.output.directory}, {"formats", cfg.output.formats}};
    return doc;
}

/// Canonical serialization (sorted keys, shortest round-trip floats).
inline std::string emit_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2); }

inline RunConfig load_config_text(const std::string& text, const std::string& origin = "<string>") {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    try {
        return config_from_json(doc);
    } catch (const Json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), path);
}

/// FNV-1a 64-bit hash of the canonical serialization.
inline std::string config_hash(const RunConfig& cfg) {
    const std::string text = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace exitrate
