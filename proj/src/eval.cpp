#include "diagsim/eval.hpp"

#include "diagsim/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace diagsim {

namespace {

/// Hand-rolled Fisher-Yates so the shuffle is identical on every platform
/// (std::shuffle's draw sequence is implementation-defined).
void deterministic_shuffle(std::vector<int>& values, std::mt19937_64& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace

SplitSpec make_splits(const Scenario& scenario, std::uint64_t seed) {
    const std::size_t w = scenario.wordings_per_cause();
    if (w < 3)
        throw SplitError(scenario.patient_id + ": cannot split " + std::to_string(w) +
                         " wording(s) per cause into train/validation/test; need at least "
                         "3 (one per set) and realistically 10 for the 80/10/10 ratio");

    const std::size_t train_n = (4 * w + 4) / 5;  // ceil(0.8 w)
    const std::size_t rest = w - train_n;
    const std::size_t val_n = (rest + 1) / 2;  // validation gets the odd extra
    const std::size_t test_n = rest - val_n;
    if (val_n == 0 || test_n == 0)
        throw SplitError(scenario.patient_id + ": " + std::to_string(w) +
                         " wordings per cause leave an empty validation or test set "
                         "(train " + std::to_string(train_n) + ", validation " +
                         std::to_string(val_n) + ", test " + std::to_string(test_n) +
                         "); add wordings or use a degraded split explicitly");

    SplitSpec splits;
    splits.seed = seed;
    for (const auto& cause : scenario.causes) {
        std::vector<int> order(w);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix_seed(seed, fnv1a64(cause.cause_id)));
        deterministic_shuffle(order, rng);
        for (std::size_t i = 0; i < w; ++i) {
            Subtask sub{scenario.patient_id, cause.cause_id, order[i]};
            if (i < train_n)
                splits.train.push_back(sub);
            else if (i < train_n + val_n)
                splits.validation.push_back(sub);
            else
                splits.test.push_back(sub);
        }
    }
    std::sort(splits.train.begin(), splits.train.end());
    std::sort(splits.validation.begin(), splits.validation.end());
    std::sort(splits.test.begin(), splits.test.end());
    return splits;
}

SplitSpec make_degraded_splits(const Scenario& scenario, std::uint64_t seed) {
    SplitSpec splits;
    splits.seed = seed;
    splits.degraded = true;
    splits.train = enumerate_subtasks(scenario);
    splits.validation = splits.train;
    splits.test = splits.train;
    return splits;
}

const std::vector<Subtask>& split_set(const SplitSpec& splits, const std::string& name) {
    if (name == "train") return splits.train;
    if (name == "validation") return splits.validation;
    if (name == "test") return splits.test;
    throw std::invalid_argument("unknown split \"" + name +
                                "\" (expected train, validation or test)");
}

double trajectory_quality(const Transcript& transcript,
                          const std::vector<QuestionRef>& key_questions) {
    if (key_questions.empty())
        throw std::invalid_argument("trajectory_quality: empty key-question list");
    std::set<QuestionRef> asked;
    for (const auto& step : transcript.steps)
        if (step.phase == Phase::interaction && step.action.kind == ActionKind::ask)
            asked.insert(QuestionRef{step.action.subject, step.action.topic});
    std::size_t hit = 0;
    for (const auto& q : key_questions)
        if (asked.count(q)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(key_questions.size());
}

int posttest_score(const Transcript& transcript) {
    if (!transcript.outcome)
        throw EnvError("posttest_score: episode did not reach a terminal state");
    return transcript.outcome->correct ? 1 : 0;
}

ScoreCard score_transcript(const Transcript& transcript, const Scenario& scenario) {
    ScoreCard card;
    card.subtask = transcript.subtask;
    card.posttest = posttest_score(transcript);
    card.trajectory_quality = trajectory_quality(transcript, scenario.key_questions);
    card.combined = card.posttest ? card.trajectory_quality : 0.0;
    card.steps = static_cast<int>(transcript.steps.size());
    return card;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

/// Regularised lower incomplete gamma P(a, x) by series expansion (x < a + 1).
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int n = 0; n < 1000; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Regularised upper incomplete gamma Q(a, x) by continued fraction (x >= a + 1).
double gamma_q_continued_fraction(double a, double x) {
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double chi_squared_sf(double x, int df) {
    if (df < 1) throw std::invalid_argument("chi_squared_sf: degrees of freedom must be >= 1");
    if (!(x >= 0.0)) throw std::invalid_argument("chi_squared_sf: statistic must be >= 0");
    if (x == 0.0) return 1.0;
    const double a = 0.5 * df;
    const double xs = 0.5 * x;
    if (xs < a + 1.0) return 1.0 - gamma_p_series(a, xs);
    return gamma_q_continued_fraction(a, xs);
}

std::vector<double> midranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j (0-based) share the average of ranks i+1..j+1.
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

/// Sum of t^3 - t over tie groups of the pooled sample.
double tie_term(std::vector<double> pooled) {
    std::sort(pooled.begin(), pooled.end());
    double total = 0.0;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j + 1 < pooled.size() && pooled[j + 1] == pooled[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        total += t * t * t - t;
        i = j + 1;
    }
    return total;
}

}  // namespace

KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2)
        throw std::invalid_argument("kruskal_wallis: need at least 2 groups");
    std::vector<double> pooled;
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("kruskal_wallis: empty group");
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const double n_total = static_cast<double>(pooled.size());
    const auto ranks = midranks(pooled);

    double h = 0.0;
    std::size_t offset = 0;
    for (const auto& g : groups) {
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
        h += rank_sum * rank_sum / static_cast<double>(g.size());
        offset += g.size();
    }
    h = 12.0 / (n_total * (n_total + 1.0)) * h - 3.0 * (n_total + 1.0);

    const double correction =
        1.0 - tie_term(pooled) / (n_total * n_total * n_total - n_total);
    KruskalWallisResult result;
    if (correction <= 0.0) {
        // Every value tied: no rank variation to test.
        result.h = 0.0;
        result.p = 1.0;
        return result;
    }
    result.h = std::max(0.0, h / correction);
    result.p = chi_squared_sf(result.h, static_cast<int>(groups.size()) - 1);
    return result;
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("mann_whitney_u: both samples must be non-empty");
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = midranks(pooled);

    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];
    const double u_a = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    const double u_b = n1 * n2 - u_a;

    MannWhitneyResult result;
    result.u = std::min(u_a, u_b);

    const double n_total = n1 + n2;
    const double variance =
        n1 * n2 / 12.0 *
        ((n_total + 1.0) - tie_term(pooled) / (n_total * (n_total - 1.0)));
    if (variance <= 0.0) {
        result.p = 1.0;  // every value tied
        return result;
    }
    const double mean_u = n1 * n2 / 2.0;
    // U = min(U_a, U_b) <= mean; the continuity correction moves it toward the
    // mean and is clamped so an exactly central U reports p = 1.
    const double z = std::min(0.0, (result.u - mean_u + 0.5) / std::sqrt(variance));
    result.p = std::min(1.0, 2.0 * normal_cdf(z));
    return result;
}

std::vector<double> bh_correct(const std::vector<double>& pvals) {
    for (double p : pvals)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("bh_correct: p-value outside [0, 1]");
    const std::size_t m = pvals.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return pvals[x] < pvals[y]; });

    std::vector<double> adjusted_sorted(m);
    for (std::size_t j = 0; j < m; ++j)
        adjusted_sorted[j] = std::min(
            1.0, pvals[order[j]] * static_cast<double>(m) / static_cast<double>(j + 1));
    for (std::size_t j = m; j-- > 1;)
        adjusted_sorted[j - 1] = std::min(adjusted_sorted[j - 1], adjusted_sorted[j]);
    // (p * m) / j can round one ulp below p where the minimum is the element's
    // own term; the adjustment is mathematically >= the raw value, so clamp.
    for (std::size_t j = 0; j < m; ++j)
        adjusted_sorted[j] = std::max(adjusted_sorted[j], pvals[order[j]]);

    std::vector<double> adjusted(m);
    for (std::size_t j = 0; j < m; ++j) adjusted[order[j]] = adjusted_sorted[j];
    return adjusted;
}

// ---------------------------------------------------------------------------
// Aggregation and reporting
// ---------------------------------------------------------------------------

std::vector<AggregateRow> aggregate(const std::vector<ScoreCard>& cards, AggregateBy by) {
    if (cards.empty()) throw std::invalid_argument("aggregate: no score cards");
    std::map<std::string, AggregateRow> rows;
    for (const auto& card : cards) {
        const std::string key = by == AggregateBy::overall ? "overall" : card.subtask.scenario_id;
        auto& row = rows[key];
        row.group = key;
        row.count += 1;
        row.posttest_mean += card.posttest;
        row.trajectory_mean += card.trajectory_quality;
        row.combined_mean += card.combined;
    }
    std::vector<AggregateRow> out;
    out.reserve(rows.size());
    for (auto& [key, row] : rows) {
        row.posttest_mean /= static_cast<double>(row.count);
        row.trajectory_mean /= static_cast<double>(row.count);
        row.combined_mean /= static_cast<double>(row.count);
        out.push_back(row);
    }
    return out;
}

ResultRow make_result_row(const std::string& agent_label, const ScoreCard& card, int trial) {
    ResultRow row;
    row.agent = agent_label;
    row.patient = card.subtask.scenario_id;
    row.cause_id = card.subtask.cause_id;
    row.wording = card.subtask.wording_index;
    row.posttest = card.posttest;
    row.trajectory_quality = card.trajectory_quality;
    row.combined = card.combined;
    row.steps = card.steps;
    row.trial = trial;
    return row;
}

namespace {

std::string fixed6(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

void check_csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n\r") != std::string::npos)
        throw std::invalid_argument("results CSV: field contains a delimiter: \"" + value + "\"");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
    out << kResultsCsvHeader << '\n';
    for (const auto& row : rows) {
        check_csv_field(row.agent);
        check_csv_field(row.patient);
        check_csv_field(row.cause_id);
        out << row.agent << ',' << row.patient << ',' << row.cause_id << ',' << row.wording
            << ',' << row.posttest << ',' << fixed6(row.trajectory_quality) << ','
            << fixed6(row.combined) << ',' << row.steps << ',' << row.trial << '\n';
    }
}

std::vector<ResultRow> read_results_csv(std::istream& in, const std::string& origin) {
    std::string line;
    if (!std::getline(in, line) || line != kResultsCsvHeader)
        throw std::runtime_error(origin + ": missing or unexpected results CSV header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 9)
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": expected 9 fields, got " + std::to_string(fields.size()));
        try {
            ResultRow row;
            row.agent = fields[0];
            row.patient = fields[1];
            row.cause_id = fields[2];
            row.wording = std::stoi(fields[3]);
            row.posttest = std::stoi(fields[4]);
            row.trajectory_quality = std::stod(fields[5]);
            row.combined = std::stod(fields[6]);
            row.steps = std::stoi(fields[7]);
            row.trial = std::stoi(fields[8]);
            rows.push_back(std::move(row));
        } catch (const std::invalid_argument&) {
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": non-numeric field");
        }
    }
    return rows;
}

namespace {

struct MetricExtractor {
    const char* name;
    double (*get)(const ResultRow&);
};

constexpr MetricExtractor kMetrics[] = {
    {"posttest", [](const ResultRow& r) { return static_cast<double>(r.posttest); }},
    {"trajectory_quality", [](const ResultRow& r) { return r.trajectory_quality; }},
    {"combined", [](const ResultRow& r) { return r.combined; }},
};

}  // namespace

std::string stats_report(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("stats_report: no result rows");

    std::map<std::string, std::vector<const ResultRow*>> by_agent;
    for (const auto& row : rows) by_agent[row.agent].push_back(&row);

    std::ostringstream out;
    out << "Statistical comparison of agents\n";
    out << "Unit of analysis: one score per (patient, cause, wording) subtask,"
           " best trial per subtask.\n";
    out << "Groups:";
    for (const auto& [agent, group] : by_agent)
        out << ' ' << agent << " (n=" << group.size() << ')';
    out << "\n";

    if (by_agent.size() < 2) {
        out << "\nOnly one agent group present; between-agent tests skipped.\n";
        return out.str();
    }

    for (const auto& metric : kMetrics) {
        out << "\nMetric: " << metric.name << '\n';

        std::vector<std::vector<double>> groups;
        std::vector<std::string> labels;
        for (const auto& [agent, group] : by_agent) {
            std::vector<double> values;
            values.reserve(group.size());
            for (const auto* row : group) values.push_back(metric.get(*row));
            groups.push_back(std::move(values));
            labels.push_back(agent);
        }

        const auto kw = kruskal_wallis(groups);
        out << "  Kruskal-Wallis: H = " << fixed6(kw.h) << ", p = " << fixed6(kw.p) << '\n';

        std::vector<std::pair<std::string, MannWhitneyResult>> pairs;
        std::vector<double> raw_p;
        for (std::size_t i = 0; i < groups.size(); ++i)
            for (std::size_t j = i + 1; j < groups.size(); ++j) {
                const auto mwu = mann_whitney_u(groups[i], groups[j]);
                pairs.emplace_back(labels[i] + " vs " + labels[j], mwu);
                raw_p.push_back(mwu.p);
            }
        const auto adjusted = bh_correct(raw_p);
        out << "  Pairwise Mann-Whitney U (Benjamini-Hochberg adjusted):\n";
        for (std::size_t i = 0; i < pairs.size(); ++i)
            out << "    " << pairs[i].first << ": U = " << fixed6(pairs[i].second.u)
                << ", p = " << fixed6(pairs[i].second.p) << ", p_adj = " << fixed6(adjusted[i])
                << '\n';
    }
    return out.str();
}

}  // namespace diagsim
