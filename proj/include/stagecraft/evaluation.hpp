#pragma once

// Pairwise judging of whole performances and the score arithmetic built on it.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagecraft/gateway.hpp"
#include "stagecraft/pad.hpp"
#include "stagecraft/transcript.hpp"

namespace stagecraft {

enum class Dimension { cp, nq, ie };
std::string_view to_string(Dimension d) noexcept;  ///< "CP" / "NQ" / "IE"
std::optional<Dimension> parse_dimension(std::string_view s) noexcept;

/// Model A is the model under evaluation, Model B the baseline.
enum class Choice { model_a, model_b, tie };
std::string_view to_string(Choice c) noexcept;

/// 1..2 -> model_a, 3 -> tie, 4..5 -> model_b.
Choice expected_choice(int score);

struct JudgeVerdict {
    Dimension dimension = Dimension::cp;
    std::string explanation;
    int score = 3;
    Choice choice = Choice::tie;

    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

/// Reads `explanation:`, `score:` and `choice:` fields (case-insensitive, on separate
/// lines or comma separated). Throws unparseable_verdict when score or choice is missing
/// or when they disagree.
JudgeVerdict parse_verdict(std::string_view reply, Dimension dimension);

nlohmann::json to_json(const JudgeVerdict& v);
/// Re-checks score/choice consistency; throws unparseable_verdict.
JudgeVerdict verdict_from_json(const nlohmann::json& j);

std::string rubric(Dimension d);

/// Public lines of a transcript as the judge reads them.
std::string render_for_judge(const std::vector<TranscriptEvent>& events);

/// True when the transcript ends with a completion or budget-exhaustion marker.
bool performance_ended(const std::vector<TranscriptEvent>& events);

struct JudgeOptions {
    std::string session_id = "judge";
    /// Present the baseline first and mirror the score back. Off by default.
    bool swap_positions = false;
};

/// One "judge" call over both transcripts; an unusable reply is re-prompted once.
JudgeVerdict judge_pairwise(const std::vector<TranscriptEvent>& evaluated, const std::vector<TranscriptEvent>& baseline,
                            Dimension dimension, const Gateway& gateway, const JudgeOptions& options = {});

/// credit(s) = (5 - s) / 4; result = 100 * mean credit. Throws empty_input.
double win_rate(const std::vector<JudgeVerdict>& verdicts);
double win_rate(const std::vector<int>& scores);

/// Half-up rounding with a small guard against binary representation error.
double round_half_up(double value, int decimals = 2);

struct Leaderboard {
    std::map<std::string, double> average;  ///< per language, unrounded
    double overall = 0.0;                   ///< mean of the language averages
};

/// Input: language -> dimension -> score. Throws missing_dimension when a language
/// lacks one of CP/NQ/IE, empty_input when there are no languages.
Leaderboard aggregate_leaderboard(const std::map<std::string, std::map<Dimension, double>>& scores);

/// Sample Pearson correlation. Throws length_mismatch, empty_input (fewer than two
/// points) or degenerate_variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// 0 below 2 s, 0.05 below 10 s, 0.10 below 30 s, 0.15 from 30 s. Throws negative_latency.
double latency_to_penalty(double seconds);

/// mean(fast, slow, silence) - penalty, floored at 0.
double pad_final_score(double fast, double slow, double silence, double penalty);

struct PadAccuracy {
    std::optional<double> fast;
    std::optional<double> slow;
    std::optional<double> silence;
    std::map<Strategy, int> total;
    std::map<Strategy, int> correct;
};

/// Per gold class: correct / total. Classes absent from gold are reported as nullopt.
/// Actions are ignored. Throws length_mismatch.
PadAccuracy pad_strategy_accuracy(const std::vector<PadDecision>& predictions, const std::vector<Strategy>& gold);

struct PadEvalRow {
    PadAccuracy accuracy;
    double avg_latency = 0.0;
    double penalty = 0.0;
    std::optional<double> final_score;  ///< absent unless all three classes are present
};

PadEvalRow pad_eval_row(const PadAccuracy& accuracy, double avg_latency);
nlohmann::json to_json(const PadEvalRow& row);

}  // namespace stagecraft
