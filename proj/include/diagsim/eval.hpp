#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "diagsim/env.hpp"
#include "diagsim/scenario.hpp"

namespace diagsim {

class SplitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Train/validation/test partition of a scenario's subtasks.
struct SplitSpec {
    std::vector<Subtask> train;
    std::vector<Subtask> validation;
    std::vector<Subtask> test;
    std::uint64_t seed = 0;
    // Set when the scenario has too few wordings for a disjoint partition and
    // all three sets were collapsed to the full subtask list instead.
    bool degraded = false;
};

/// Per cause: shuffle the wording indices with `seed`, assign the first
/// ceil(0.8 W) to train and split the remainder between validation (which
/// gets the extra wording when the remainder is odd) and test. Throws
/// SplitError when W < 3 or when either holdout set would come out empty.
SplitSpec make_splits(const Scenario& scenario, std::uint64_t seed);

/// Fallback for scenarios too small to hold out wordings: train, validation
/// and test all equal the full subtask list. Callers must surface the
/// degradation to the user; results on such splits measure memorisation, not
/// generalisation to unseen wordings.
SplitSpec make_degraded_splits(const Scenario& scenario, std::uint64_t seed);

/// Resolve "train" | "validation" | "test"; throws std::invalid_argument otherwise.
const std::vector<Subtask>& split_set(const SplitSpec& splits, const std::string& name);

/// Metrics for one finished episode.
struct ScoreCard {
    Subtask subtask;
    int posttest = 0;                 // 1 iff the true cause was chosen
    double trajectory_quality = 0.0;  // fraction of distinct key questions asked
    double combined = 0.0;            // posttest * trajectory_quality
    int steps = 0;                    // actions taken (interactions + posttest choice)
};

/// Fraction of `key_questions` asked at least once during the interaction
/// phase. Repeats count once; questions outside the key list are ignored.
double trajectory_quality(const Transcript& transcript,
                          const std::vector<QuestionRef>& key_questions);

/// 1 iff the posttest choice named the subtask's cause; 0 otherwise,
/// including step-cap terminations. Throws EnvError on an unfinished episode.
int posttest_score(const Transcript& transcript);

ScoreCard score_transcript(const Transcript& transcript, const Scenario& scenario);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Standard normal CDF.
double normal_cdf(double x);

/// Upper-tail probability of the chi-squared distribution with df degrees of
/// freedom (the regularised upper incomplete gamma Q(df/2, x/2)).
double chi_squared_sf(double x, int df);

/// Mid-ranks (1-based, ties averaged) of `values` in their original order.
std::vector<double> midranks(const std::vector<double>& values);

struct KruskalWallisResult {
    double h = 0.0;
    double p = 1.0;
};

/// Kruskal-Wallis H test over >= 2 non-empty groups: joint mid-ranks, the
/// usual tie correction, p from chi-squared with (groups - 1) df. Inputs
/// that are entirely tied report H = 0, p = 1.
KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct MannWhitneyResult {
    double u = 0.0;
    double p = 1.0;
};

/// Two-sided Mann-Whitney U test: U = min(U_a, U_b) from mid-rank sums, p by
/// normal approximation with tie-corrected variance and continuity correction.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

/// Benjamini-Hochberg adjusted p-values, returned in the input order:
/// adjusted_(i) = min over j >= i of min(1, (m/j) p_(j)) on the sorted scale.
/// Guaranteed element-wise >= the raw p-values (the formula implies it, and
/// the implementation clamps away the rounding of (p*m)/j, which can land one
/// ulp under p when the minimum is attained at j = i).
std::vector<double> bh_correct(const std::vector<double>& pvals);

// ---------------------------------------------------------------------------
// Aggregation and reporting
// ---------------------------------------------------------------------------

enum class AggregateBy { overall, patient };

struct AggregateRow {
    std::string group;  // "overall" or the patient id
    std::size_t count = 0;
    double posttest_mean = 0.0;
    double trajectory_mean = 0.0;
    double combined_mean = 0.0;
};

std::vector<AggregateRow> aggregate(const std::vector<ScoreCard>& cards, AggregateBy by);

/// One line of a results file; `patient` is the scenario's patient id.
struct ResultRow {
    std::string agent;
    std::string patient;
    std::string cause_id;
    int wording = 0;
    int posttest = 0;
    double trajectory_quality = 0.0;
    double combined = 0.0;
    int steps = 0;
    int trial = 1;

    bool operator==(const ResultRow&) const = default;
};

ResultRow make_result_row(const std::string& agent_label, const ScoreCard& card, int trial);

inline constexpr const char* kResultsCsvHeader =
    "agent,patient,cause_id,wording,posttest,trajectory_quality,combined,steps,trial";

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out);
std::vector<ResultRow> read_results_csv(std::istream& in, const std::string& origin);

/// Statistical battery over the rows, grouped by agent label: per metric a
/// Kruskal-Wallis test across all agents plus pairwise Mann-Whitney U tests
/// with Benjamini-Hochberg adjustment. Returns a plain-text report.
std::string stats_report(const std::vector<ResultRow>& rows);

}  // namespace diagsim
