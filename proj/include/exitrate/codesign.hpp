#pragma once

// Gain-tuple selection over a finite candidate set. Each candidate is scored
// by its failure-mode rate functions against the best nominal rate across
// candidates; two orientations of the weighted min-max scalarization are
// computed and the configured one decides.

#include <exitrate/action.hpp>
#include <exitrate/common.hpp>
#include <exitrate/domain.hpp>
#include <exitrate/system.hpp>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace exitrate {

enum class CodesignOrientation {
    PaperLiteral,  // small failure-mode rates preferred (argmin of max gamma)
    Reliability,   // large failure-mode rates preferred (argmax of min I_i/w_i)
};

struct GainCandidate {
    std::string label;
    std::vector<Matrix> gains;  // one K_i per channel
};

struct CodesignProblem {
    MultiChannelSystem base;    // gains in `base.channels` are placeholders
    DomainSpec domain;
    Vector x0;
    std::vector<GainCandidate> candidates;
    Vector weights;             // per failure mode, positive, summing to 1
    BoundarySection nominal_section;                // Gamma_0
    std::vector<BoundarySection> failure_sections;  // Gamma_i, i = 1..n
    CodesignOrientation orientation = CodesignOrientation::PaperLiteral;
    ActionSolverOptions solver;
    double stability_margin = 0.0;

    [[nodiscard]] MultiChannelSystem with_gains(const GainCandidate& cand) const {
        MultiChannelSystem sys = base;
        if (cand.gains.size() != sys.channels.size())
            throw ConfigError("candidate '" + cand.label + "' has wrong channel count");
        for (std::size_t i = 0; i < sys.channels.size(); ++i) sys.channels[i].K = cand.gains[i];
        sys.validate_dimensions();
        return sys;
    }

    void validate() const {
        const int n = base.n_channels();
        if (candidates.empty()) throw ConfigError("codesign: candidate set is empty");
        if (weights.size() != n) throw ConfigError("codesign: one weight per failure mode required");
        if (weights.minCoeff() <= 0.0) throw ConfigError("codesign: weights must be positive");
        if (std::abs(weights.sum() - 1.0) > 1e-12)
            throw ConfigError("codesign: weights must sum to 1");
        if (static_cast<int>(failure_sections.size()) != n)
            throw ConfigError("codesign: one boundary section per failure mode required");
        std::string rejects;
        for (const auto& cand : candidates) {
            const auto report = verify_gain_tuple(with_gains(cand), stability_margin);
            if (!report.pass) {
                for (const auto& m : report.modes)
                    if (!m.stable)
                        rejects += "\n  candidate '" + cand.label + "': mode " +
                                   std::to_string(m.mode) + " spectral abscissa " +
                                   format_double(m.spectral_abscissa);
            }
        }
        if (!rejects.empty())
            throw ConfigError("codesign: candidates outside the reliable gain class:" + rejects);
    }
};

struct CandidateEvaluation {
    std::string label;
    double nominal_rate = 0.0;           // I_0 under this candidate
    std::vector<double> failure_rates;   // I_i, i = 1..n
    std::vector<double> gamma;           // (I_i - I0*) / w_i
    double score_paper_literal = 0.0;    // max_i gamma_i
    double score_reliability = 0.0;      // min_i I_i / w_i
};

struct CodesignResult {
    int selected = -1;
    int nominal_argmax = -1;
    double nominal_value = 0.0;          // I0* = max over candidates of I_0
    CodesignOrientation orientation = CodesignOrientation::PaperLiteral;
    std::vector<CandidateEvaluation> table;
};

/// Best nominal rate over the candidate set (the finite-set version of the
/// sup-inf defining the nominal operating value).
inline std::pair<double, int> nominal_value(const CodesignProblem& problem) {
    problem.validate();
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (std::size_t c = 0; c < problem.candidates.size(); ++c) {
        const auto sys = problem.with_gains(problem.candidates[c]);
        const auto r = rate_to_section(sys, 0, problem.domain, problem.x0,
                                       problem.nominal_section, problem.solver);
        if (r.value > best) {
            best = r.value;
            arg = static_cast<int>(c);
        }
    }
    return {best, arg};
}

/// Failure-mode rates I_i(x0, Gamma_i), i = 1..n, under one candidate's gains.
inline std::vector<double> failure_rates(const CodesignProblem& problem,
                                         const GainCandidate& candidate) {
    const auto sys = problem.with_gains(candidate);
    std::vector<double> rates;
    rates.reserve(problem.failure_sections.size());
    for (std::size_t i = 0; i < problem.failure_sections.size(); ++i) {
        const auto r = rate_to_section(sys, static_cast<int>(i) + 1, problem.domain, problem.x0,
                                       problem.failure_sections[i], problem.solver);
        rates.push_back(r.value);
    }
    return rates;
}

/// Pure selection stage: fills gammas and scores from the rate table and picks
/// the winner for the configured orientation (first index wins ties).
inline CodesignResult select_from_table(std::vector<CandidateEvaluation> table,
                                        double nominal_best, int nominal_argmax,
                                        const Vector& weights,
                                        CodesignOrientation orientation) {
    CodesignResult result;
    result.nominal_value = nominal_best;
    result.nominal_argmax = nominal_argmax;
    result.orientation = orientation;
    for (auto& row : table) {
        row.gamma.clear();
        row.score_paper_literal = -std::numeric_limits<double>::infinity();
        row.score_reliability = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < row.failure_rates.size(); ++i) {
            const double g = (row.failure_rates[i] - nominal_best) / weights[static_cast<Eigen::Index>(i)];
            row.gamma.push_back(g);
            row.score_paper_literal = std::max(row.score_paper_literal, g);
            row.score_reliability =
                std::min(row.score_reliability,
                         row.failure_rates[i] / weights[static_cast<Eigen::Index>(i)]);
        }
    }
    int best = 0;
    for (std::size_t c = 1; c < table.size(); ++c) {
        if (orientation == CodesignOrientation::PaperLiteral) {
            if (table[c].score_paper_literal < table[static_cast<std::size_t>(best)].score_paper_literal)
                best = static_cast<int>(c);
        } else {
            if (table[c].score_reliability > table[static_cast<std::size_t>(best)].score_reliability)
                best = static_cast<int>(c);
        }
    }
    result.selected = table.empty() ? -1 : best;
    result.table = std::move(table);
    return result;
}

inline CodesignResult solve_codesign(const CodesignProblem& problem) {
    problem.validate();
    const auto [nominal_best, nominal_arg] = nominal_value(problem);
    std::vector<CandidateEvaluation> table;
    table.reserve(problem.candidates.size());
    for (const auto& cand : problem.candidates) {
        CandidateEvaluation row;
        row.label = cand.label;
        const auto sys = problem.with_gains(cand);
        row.nominal_rate = rate_to_section(sys, 0, problem.domain, problem.x0,
                                           problem.nominal_section, problem.solver)
                               .value;
        row.failure_rates = failure_rates(problem, cand);
        table.push_back(std::move(row));
    }
    return select_from_table(std::move(table), nominal_best, nominal_arg, problem.weights,
                             problem.orientation);
}

}  // namespace exitrate
