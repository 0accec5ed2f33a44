#pragma once

#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "capsule/orchestrator.hpp"

namespace capsule {

/// Exact arithmetic for attempt counts; accepts fractional inputs (percentage
/// means with one decimal) so published per-attempt tables can be re-analyzed
/// directly.
using Rational = boost::rational<long long>;

/// Parse a plain decimal literal ("92", "3.8", "-0.25") into an exact rational.
Rational parse_decimal(const std::string& text);

struct AttemptCounts {
    Rational total;                 // N
    std::vector<Rational> solved_at; // S_0..S_A, solved exactly at attempt i
    Rational unsolved;
};

struct InfluencePoint {
    int attempt = 0;
    Rational solved;    // S_i
    Rational survivors; // N_i, survivors entering attempt i
    Rational influence; // I_i = S_i / N_i
};

struct DecayFit {
    double a = 0.0;
    double b = 0.0;
    double r_squared = 0.0; // computed on the ln scale
    int points_used = 0;
};

/// Count outcomes by final attempt index. Problems with no passing attempt
/// (including empty attempt lists) count as unsolved.
AttemptCounts tally(const RunLog& log, int max_attempts);

/// Build counts from pasted per-attempt figures (Table-style workflow).
/// Conservation is not enforced here: published percentage means may not sum
/// to N exactly.
AttemptCounts counts_from_table(const std::vector<std::string>& solved_decimals,
                                const std::string& total_decimal);

/// Points for every attempt with N_i > 0, exact rationals throughout.
/// N_{i+1} = N_i - S_i. Attempts with N_i = 0 are omitted.
std::vector<InfluencePoint> influence(const AttemptCounts& counts);

/// Log-linear least squares of I(x) = a * exp(-b x): regress ln I_i on i over
/// points with I_i > 0; a = exp(intercept), b = -slope. Throws
/// InsufficientPoints unless at least two such points with distinct attempt
/// indices exist.
DecayFit fit_decay(const std::vector<InfluencePoint>& points);

/// Per-attempt mean of influence across several point sets (the default way
/// to combine runs before fitting; pooling is the alternative).
std::vector<InfluencePoint> mean_influence(const std::vector<std::vector<InfluencePoint>>& runs);

struct Summary {
    double success_rate = 0.0;
    long long total_tokens = 0;
    double avg_tokens_per_problem = 0.0;
    double avg_attempts_per_problem = 0.0; // debugging attempts: llm_calls - 1
    double avg_llm_calls_per_problem = 0.0;
    int problems = 0;
    int solved = 0;
};

Summary summarize(const RunLog& log);

/// CSV with the exact header "i,S_i,N_i,I_i".
std::string influence_csv(const std::vector<InfluencePoint>& points);

nlohmann::json to_json(const DecayFit& fit);
nlohmann::json to_json(const Summary& summary);

} // namespace capsule
