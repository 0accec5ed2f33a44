#include "capsule/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "capsule/errors.hpp"

namespace capsule {

namespace {

double to_double(const Rational& r) { return boost::rational_cast<double>(r); }

std::string format_number(const Rational& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", to_double(r));
    return buf;
}

} // namespace

Rational parse_decimal(const std::string& text) {
    std::size_t i = 0;
    bool negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
        negative = text[i] == '-';
        ++i;
    }
    long long numerator = 0;
    long long denominator = 1;
    bool digits = false;
    bool fraction = false;
    constexpr long long kLimit = std::numeric_limits<long long>::max() / 10 - 1;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c >= '0' && c <= '9') {
            if (numerator > kLimit || denominator > kLimit)
                throw Error("decimal out of range: '" + text + "'");
            numerator = numerator * 10 + (c - '0');
            if (fraction) denominator *= 10;
            digits = true;
        } else if (c == '.' && !fraction) {
            fraction = true;
        } else {
            throw Error("invalid decimal: '" + text + "'");
        }
    }
    if (!digits) throw Error("invalid decimal: '" + text + "'");
    return Rational(negative ? -numerator : numerator, denominator);
}

AttemptCounts tally(const RunLog& log, int max_attempts) {
    AttemptCounts counts;
    counts.total = Rational(static_cast<long long>(log.outcomes.size()));
    int highest = max_attempts;
    for (const auto& outcome : log.outcomes)
        if (outcome.solved && !outcome.attempts.empty())
            highest = std::max(highest, outcome.attempts.back().index);
    counts.solved_at.assign(static_cast<std::size_t>(highest) + 1, Rational(0));
    long long unsolved = 0;
    for (const auto& outcome : log.outcomes) {
        if (outcome.solved && !outcome.attempts.empty())
            counts.solved_at[static_cast<std::size_t>(outcome.attempts.back().index)] +=
                Rational(1);
        else
            ++unsolved;
    }
    counts.unsolved = Rational(unsolved);
    return counts;
}

AttemptCounts counts_from_table(const std::vector<std::string>& solved_decimals,
                                const std::string& total_decimal) {
    AttemptCounts counts;
    counts.total = parse_decimal(total_decimal);
    Rational sum(0);
    for (const auto& s : solved_decimals) {
        counts.solved_at.push_back(parse_decimal(s));
        sum += counts.solved_at.back();
    }
    counts.unsolved = counts.total - sum; // may go negative for rounded inputs
    return counts;
}

std::vector<InfluencePoint> influence(const AttemptCounts& counts) {
    std::vector<InfluencePoint> points;
    Rational survivors = counts.total;
    for (std::size_t i = 0; i < counts.solved_at.size(); ++i) {
        if (survivors <= Rational(0)) break;
        InfluencePoint point;
        point.attempt = static_cast<int>(i);
        point.solved = counts.solved_at[i];
        point.survivors = survivors;
        point.influence = counts.solved_at[i] / survivors;
        points.push_back(point);
        survivors -= counts.solved_at[i];
    }
    return points;
}

DecayFit fit_decay(const std::vector<InfluencePoint>& points) {
    std::vector<std::pair<double, double>> xy; // (i, ln I_i)
    for (const auto& p : points) {
        double value = to_double(p.influence);
        if (value > 0) xy.emplace_back(p.attempt, std::log(value));
    }
    int distinct = 0;
    {
        std::map<double, bool> seen;
        for (auto& [x, y] : xy) seen[x] = true;
        distinct = static_cast<int>(seen.size());
    }
    if (xy.size() < 2 || distinct < 2)
        throw InsufficientPoints("decay fit needs at least two points with positive influence");

    double n = static_cast<double>(xy.size());
    double mean_x = 0, mean_y = 0;
    for (auto& [x, y] : xy) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0, sxy = 0;
    for (auto& [x, y] : xy) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    double slope = sxy / sxx;
    double intercept = mean_y - slope * mean_x;

    double ss_res = 0, ss_tot = 0;
    for (auto& [x, y] : xy) {
        double fitted = intercept + slope * x;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }

    DecayFit fit;
    fit.a = std::exp(intercept);
    fit.b = -slope;
    fit.r_squared = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    fit.points_used = static_cast<int>(xy.size());
    return fit;
}

std::vector<InfluencePoint> mean_influence(const std::vector<std::vector<InfluencePoint>>& runs) {
    std::map<int, std::vector<const InfluencePoint*>> by_attempt;
    for (const auto& run : runs)
        for (const auto& p : run) by_attempt[p.attempt].push_back(&p);
    std::vector<InfluencePoint> out;
    for (const auto& [attempt, group] : by_attempt) {
        InfluencePoint mean;
        mean.attempt = attempt;
        Rational k(static_cast<long long>(group.size()));
        for (const auto* p : group) {
            mean.solved += p->solved / k;
            mean.survivors += p->survivors / k;
            mean.influence += p->influence / k;
        }
        out.push_back(mean);
    }
    return out;
}

Summary summarize(const RunLog& log) {
    Summary summary;
    summary.problems = static_cast<int>(log.outcomes.size());
    long long calls = 0;
    for (const auto& outcome : log.outcomes) {
        if (outcome.solved) ++summary.solved;
        calls += outcome.llm_calls;
        for (const auto& attempt : outcome.attempts)
            summary.total_tokens += attempt.prompt_tokens + attempt.completion_tokens;
    }
    if (summary.problems > 0) {
        summary.success_rate = static_cast<double>(summary.solved) / summary.problems;
        summary.avg_tokens_per_problem =
            static_cast<double>(summary.total_tokens) / summary.problems;
        summary.avg_llm_calls_per_problem = static_cast<double>(calls) / summary.problems;
        // one generation call plus the debugging attempts
        summary.avg_attempts_per_problem = summary.avg_llm_calls_per_problem - 1.0;
    }
    return summary;
}

std::string influence_csv(const std::vector<InfluencePoint>& points) {
    std::string csv = "i,S_i,N_i,I_i\n";
    for (const auto& p : points) {
        csv += std::to_string(p.attempt);
        csv += ',';
        csv += format_number(p.solved);
        csv += ',';
        csv += format_number(p.survivors);
        csv += ',';
        csv += format_number(p.influence);
        csv += '\n';
    }
    return csv;
}

nlohmann::json to_json(const DecayFit& fit) {
    return {
        {"a", fit.a},
        {"b", fit.b},
        {"r_squared", fit.r_squared},
        {"points_used", fit.points_used},
    };
}

nlohmann::json to_json(const Summary& summary) {
    return {
        {"success_rate", summary.success_rate},
        {"total_tokens", summary.total_tokens},
        {"avg_tokens_per_problem", summary.avg_tokens_per_problem},
        {"avg_attempts_per_problem", summary.avg_attempts_per_problem},
        {"avg_llm_calls_per_problem", summary.avg_llm_calls_per_problem},
        {"problems", summary.problems},
        {"solved", summary.solved},
    };
}

} // namespace capsule
