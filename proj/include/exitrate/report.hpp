#pragma once

// Run report assembly and artifact writers. CSV floats are formatted with a
// fixed %.12g so identical runs produce identical bytes.

#include <exitrate/codesign.hpp>
#include <exitrate/common.hpp>
#include <exitrate/config.hpp>
#include <exitrate/sde.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace exitrate {

struct RateRow {
    int mode = 0;
    std::string section;
    double epsilon = 0.0;
    std::size_t trials = 0;
    double q_hat = 0.0;
    double ci95 = 0.0;
    double emp_rate = 0.0;
    double censored_frac = 0.0;
    std::uint64_t seed = 0;
};

struct VariationalRow {
    int mode = 0;
    std::string section;
    double rate = 0.0;
    double horizon = 0.0;
    bool converged = false;
    bool horizon_warning = false;
    int restarts_used = 0;
};

struct RunReport {
    std::string version;
    std::string hash;
    Json config;
    Json verification = Json::object();
    std::vector<RateRow> mc_rates;
    std::vector<VariationalRow> variational;
    Json pde = Json::array();
    Json profiles = Json::array();
    Json codesign = Json::object();
    Json errors = Json::array();
    Json timings = Json::object();

    void record_error(const std::string& analysis, const std::string& message) {
        errors.push_back({{"analysis", analysis}, {"message", message}});
    }

    [[nodiscard]] Json to_json() const {
        Json j;
        j["tool"] = "exitrate";
        j["version"] = version;
        j["config_hash"] = hash;
        j["config"] = config;
        j["verification"] = verification;
        Json mc = Json::array();
        for (const auto& r : mc_rates)
            mc.push_back({{"mode", r.mode},
                          {"section", r.section},
                          {"epsilon", r.epsilon},
                          {"trials", r.trials},
                          {"q_hat", r.q_hat},
                          {"ci95", r.ci95},
                          {"emp_rate", r.emp_rate},
                          {"censored_frac", r.censored_frac},
                          {"seed", r.seed}});
        j["mc_rates"] = mc;
        Json var = Json::array();
        for (const auto& r : variational)
            var.push_back({{"mode", r.mode},
                           {"section", r.section},
                           {"rate", r.rate},
                           {"horizon", r.horizon},
                           {"converged", r.converged},
                           {"horizon_warning", r.horizon_warning},
                           {"restarts_used", r.restarts_used}});
        j["variational_rates"] = var;
        // convergence table: epsilon vs empirical rate vs variational rate
        Json conv = Json::array();
        for (const auto& v : variational)
            for (const auto& m : mc_rates)
                if (m.mode == v.mode && m.section == v.section)
                    conv.push_back({{"mode", m.mode},
                                    {"section", m.section},
                                    {"epsilon", m.epsilon},
                                    {"emp_rate", m.emp_rate},
                                    {"variational_rate", v.rate}});
        j["rate_convergence"] = conv;
        j["pde"] = pde;
        j["profiles"] = profiles;
        j["codesign"] = codesign;
        j["errors"] = errors;
        j["timings"] = timings;
        return j;
    }
};

namespace detail {

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw ConfigError("cannot open output file " + path.string());
    }

    void field(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
    }
    void field(double v) { field(format_double(v)); }
    void field(std::uint64_t v) { field(std::to_string(v)); }
    void field(int v) { field(std::to_string(v)); }
    void endrow() {
        out_ << '\n';
        first_ = true;
    }

private:
    std::ofstream out_;
    bool first_ = true;
};

}  // namespace detail

inline void write_rates_csv(const std::filesystem::path& path, const std::vector<RateRow>& rows) {
    detail::CsvWriter csv(path);
    for (const char* h : {"mode", "section", "epsilon", "trials", "q_hat", "ci95", "emp_rate",
                          "censored_frac", "seed"})
        csv.field(std::string(h));
    csv.endrow();
    for (const auto& r : rows) {
        csv.field(r.mode);
        csv.field(r.section);
        csv.field(r.epsilon);
        csv.field(r.trials);
        csv.field(r.q_hat);
        csv.field(r.ci95);
        csv.field(r.emp_rate);
        csv.field(r.censored_frac);
        csv.field(r.seed);
        csv.endrow();
    }
}

inline void write_exits_csv(const std::filesystem::path& path,
                            const std::vector<ExitRecord>& records, Eigen::Index dim) {
    detail::CsvWriter csv(path);
    csv.field(std::string("trial"));
    csv.field(std::string("tau"));
    for (Eigen::Index i = 0; i < dim; ++i) csv.field("y_" + std::to_string(i + 1));
    csv.endrow();
    for (const auto& r : records) {
        csv.field(r.trial);
        csv.field(r.tau);
        for (Eigen::Index i = 0; i < dim; ++i) csv.field(r.point[i]);
        csv.endrow();
    }
}

inline void write_path_csv(const std::filesystem::path& path, const DiscretePath& p) {
    detail::CsvWriter csv(path);
    csv.field(std::string("t"));
    for (Eigen::Index i = 0; i < p.dim(); ++i) csv.field("x_" + std::to_string(i + 1));
    csv.endrow();
    for (Eigen::Index r = 0; r < p.times.size(); ++r) {
        csv.field(p.times[r]);
        for (Eigen::Index i = 0; i < p.dim(); ++i) csv.field(p.states(r, i));
        csv.endrow();
    }
}

inline void write_profile_csv(const std::filesystem::path& path,
                              const QuasipotentialProfile& profile) {
    detail::CsvWriter csv(path);
    csv.field(std::string("param"));
    const Eigen::Index dim = profile.points.empty() ? 0 : profile.points.front().size();
    for (Eigen::Index i = 0; i < dim; ++i) csv.field("y_" + std::to_string(i + 1));
    csv.field(std::string("V"));
    csv.field(std::string("converged"));
    csv.endrow();
    for (std::size_t k = 0; k < profile.values.size(); ++k) {
        csv.field(profile.params[k]);
        for (Eigen::Index i = 0; i < dim; ++i) csv.field(profile.points[k][i]);
        csv.field(profile.values[k]);
        csv.field(static_cast<int>(profile.converged[k]));
        csv.endrow();
    }
}

inline void write_codesign_csv(const std::filesystem::path& path, const CodesignResult& result) {
    detail::CsvWriter csv(path);
    csv.field(std::string("candidate"));
    csv.field(std::string("I0"));
    const std::size_t n = result.table.empty() ? 0 : result.table.front().failure_rates.size();
    for (std::size_t i = 1; i <= n; ++i) csv.field("I_" + std::to_string(i));
    for (std::size_t i = 1; i <= n; ++i) csv.field("gamma_" + std::to_string(i));
    csv.field(std::string("score"));
    csv.field(std::string("selected"));
    csv.endrow();
    for (std::size_t c = 0; c < result.table.size(); ++c) {
        const auto& row = result.table[c];
        csv.field(row.label);
        csv.field(row.nominal_rate);
        for (double v : row.failure_rates) csv.field(v);
        for (double v : row.gamma) csv.field(v);
        csv.field(result.orientation == CodesignOrientation::PaperLiteral ? row.score_paper_literal
                                                                          : row.score_reliability);
        csv.field(static_cast<int>(c) == result.selected ? 1 : 0);
        csv.endrow();
    }
}

inline Json codesign_to_json(const CodesignResult& result) {
    Json j;
    j["orientation"] =
        result.orientation == CodesignOrientation::PaperLiteral ? "paper-literal" : "reliability";
    j["orientation_note"] =
        "paper-literal rewards small failure-mode rates; reliability rewards large ones "
        "(less likely exit under failures)";
    j["nominal_value"] = result.nominal_value;
    j["nominal_argmax"] = result.nominal_argmax;
    j["selected"] = result.selected;
    Json table = Json::array();
    for (std::size_t c = 0; c < result.table.size(); ++c) {
        const auto& row = result.table[c];
        table.push_back({{"candidate", row.label},
                         {"I0", row.nominal_rate},
                         {"failure_rates", row.failure_rates},
                         {"gamma", row.gamma},
                         {"score_paper_literal", row.score_paper_literal},
                         {"score_reliability", row.score_reliability},
                         {"selected", static_cast<int>(c) == result.selected}});
    }
    j["table"] = table;
    return j;
}

}  // namespace exitrate
