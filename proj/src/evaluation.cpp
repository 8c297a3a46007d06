#include "stagecraft/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <sstream>

#include "stagecraft/error.hpp"
#include "stagecraft/markup.hpp"

namespace stagecraft {

using nlohmann::json;

std::string_view to_string(Dimension d) noexcept {
    switch (d) {
        case Dimension::cp: return "CP";
        case Dimension::nq: return "NQ";
        case Dimension::ie: return "IE";
    }
    return "?";
}

std::optional<Dimension> parse_dimension(std::string_view s) noexcept {
    std::string u(s);
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
    if (u == "CP") return Dimension::cp;
    if (u == "NQ") return Dimension::nq;
    if (u == "IE") return Dimension::ie;
    return std::nullopt;
}

std::string_view to_string(Choice c) noexcept {
    switch (c) {
        case Choice::model_a: return "model_a";
        case Choice::model_b: return "model_b";
        case Choice::tie: return "tie";
    }
    return "?";
}

Choice expected_choice(int score) {
    if (score < 1 || score > 5) throw Error(Errc::unparseable_verdict, "score out of range: " + std::to_string(score));
    if (score <= 2) return Choice::model_a;
    if (score == 3) return Choice::tie;
    return Choice::model_b;
}

JudgeVerdict parse_verdict(std::string_view reply, Dimension dimension) {
    static const std::regex score_re(R"(score\s*[:=]\s*\**\s*([0-9]+))", std::regex::icase);
    static const std::regex choice_re(R"(choice\s*[:=]\s*\**\s*(model[\s_]*a|model[\s_]*b|tie)\b)", std::regex::icase);
    static const std::regex explanation_re(R"(explanation\s*[:=])", std::regex::icase);
    const std::string text(reply);

    std::smatch sm, cm;
    if (!std::regex_search(text, sm, score_re)) throw Error(Errc::unparseable_verdict, "no score field");
    if (!std::regex_search(text, cm, choice_re)) throw Error(Errc::unparseable_verdict, "no choice field");

    JudgeVerdict v;
    v.dimension = dimension;
    v.score = std::stoi(sm[1].str().substr(0, 3));
    if (v.score < 1 || v.score > 5) throw Error(Errc::unparseable_verdict, "score out of range: " + sm[1].str());
    std::string c = cm[1].str();
    std::transform(c.begin(), c.end(), c.begin(), [](unsigned char ch) { return std::tolower(ch); });
    v.choice = c == "tie" ? Choice::tie : (c.back() == 'a' ? Choice::model_a : Choice::model_b);
    if (v.choice != expected_choice(v.score))
        throw Error(Errc::unparseable_verdict, "inconsistent verdict: score " + std::to_string(v.score) + " with choice " +
                                                   std::string(to_string(v.choice)));

    const auto score_pos = static_cast<std::size_t>(sm.position(0));
    std::smatch em;
    if (std::regex_search(text, em, explanation_re)) {
        const auto start = static_cast<std::size_t>(em.position(0) + em.length(0));
        const auto end = score_pos > start ? score_pos : text.size();
        v.explanation = trim(text.substr(start, end - start));
    } else {
        v.explanation = trim(text.substr(0, score_pos));
    }
    while (!v.explanation.empty() && (v.explanation.back() == ',' || v.explanation.back() == ';'))
        v.explanation = trim(v.explanation.substr(0, v.explanation.size() - 1));
    return v;
}

json to_json(const JudgeVerdict& v) {
    return {{"dimension", to_string(v.dimension)},
            {"explanation", v.explanation},
            {"score", v.score},
            {"choice", to_string(v.choice)}};
}

JudgeVerdict verdict_from_json(const json& j) {
    try {
        JudgeVerdict v;
        const auto d = parse_dimension(j.at("dimension").get<std::string>());
        if (!d) throw Error(Errc::unparseable_verdict, "unknown dimension");
        v.dimension = *d;
        v.explanation = j.value("explanation", "");
        v.score = j.at("score").get<int>();
        const auto c = j.at("choice").get<std::string>();
        if (c == "model_a") v.choice = Choice::model_a;
        else if (c == "model_b") v.choice = Choice::model_b;
        else if (c == "tie") v.choice = Choice::tie;
        else throw Error(Errc::unparseable_verdict, "unknown choice " + c);
        if (expected_choice(v.score) != v.choice) throw Error(Errc::unparseable_verdict, "inconsistent stored verdict");
        return v;
    } catch (const json::exception& e) {
        throw Error(Errc::unparseable_verdict, e.what());
    }
}

std::string rubric(Dimension d) {
    switch (d) {
        case Dimension::cp:
            return "Character Performance. Do the characters act and speak in line with their personas and "
                   "backgrounds? Do they show emotion and make choices that move the story forward, or are they "
                   "passive and generic?";
        case Dimension::nq:
            return "Narrative Quality. Does the plot develop logically? Is it relevant to its theme and does it "
                   "carry some depth? Does the story hold together from its opening to its ending?";
        case Dimension::ie:
            return "Interaction Experience. Do the system's reactions come promptly and fit what happened? Does "
                   "the performance draw the reader in? Does it run smoothly without glitches, loops or stalls?";
    }
    return {};
}

std::string render_for_judge(const std::vector<TranscriptEvent>& events) {
    std::ostringstream out;
    for (const auto& e : events) {
        if (e.visibility.scope != Visibility::Scope::all) continue;
        const auto line = e.display_text();
        if (line.empty()) continue;
        out << e.speaker << ": " << line << '\n';
    }
    return out.str();
}

bool performance_ended(const std::vector<TranscriptEvent>& events) {
    for (auto it = events.rbegin(); it != events.rend(); ++it) {
        const auto type = it->data.value("type", "");
        if (type == "completed" || type == "budget_exhausted") return true;
    }
    return false;
}

JudgeVerdict judge_pairwise(const std::vector<TranscriptEvent>& evaluated, const std::vector<TranscriptEvent>& baseline,
                            Dimension dimension, const Gateway& gateway, const JudgeOptions& options) {
    if (!performance_ended(evaluated) || !performance_ended(baseline))
        throw Error(Errc::precondition, "both performances must have ended");
    const auto& first = options.swap_positions ? baseline : evaluated;
    const auto& second = options.swap_positions ? evaluated : baseline;

    std::ostringstream sys;
    sys << "You compare two complete drama performances, Model A and Model B, as whole works. Judge them on one "
           "dimension only.\n\n"
        << rubric(dimension)
        << "\n\nScore on this scale: 1 = Model A is much better, 2 = Model A is somewhat better, 3 = about equal, "
           "4 = Model B is somewhat better, 5 = Model B is much better.\n"
           "Reply with three lines:\nexplanation: <your reasoning>\nscore: <1-5>\nchoice: <Model A | Model B | tie>";
    std::ostringstream user;
    user << "Model A:\n" << render_for_judge(first) << "\nModel B:\n" << render_for_judge(second);

    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto prompt = user.str();
        if (attempt == 1)
            prompt += "\n\nYour previous verdict was rejected (" + problem +
                      "). Scores 1 and 2 go with Model A, 3 with tie, 4 and 5 with Model B.";
        const auto reply = gateway.complete(make_request("judge", options.session_id, sys.str(), prompt));
        try {
            auto v = parse_verdict(reply.visible, dimension);
            if (options.swap_positions) {
                v.score = 6 - v.score;
                v.choice = expected_choice(v.score);
            }
            return v;
        } catch (const Error& e) {
            if (e.code() != Errc::unparseable_verdict) throw;
            problem = e.what();
        }
    }
    throw Error(Errc::unparseable_verdict, problem);
}

double win_rate(const std::vector<int>& scores) {
    if (scores.empty()) throw Error(Errc::empty_input, "no verdicts");
    double sum = 0.0;
    for (int s : scores) {
        expected_choice(s);
        sum += (5.0 - s) / 4.0;
    }
    return 100.0 * sum / static_cast<double>(scores.size());
}

double win_rate(const std::vector<JudgeVerdict>& verdicts) {
    std::vector<int> scores;
    scores.reserve(verdicts.size());
    for (const auto& v : verdicts) scores.push_back(v.score);
    return win_rate(scores);
}

double round_half_up(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

Leaderboard aggregate_leaderboard(const std::map<std::string, std::map<Dimension, double>>& scores) {
    if (scores.empty()) throw Error(Errc::empty_input, "no languages");
    Leaderboard out;
    double sum = 0.0;
    for (const auto& [language, dims] : scores) {
        double s = 0.0;
        for (auto d : {Dimension::cp, Dimension::nq, Dimension::ie}) {
            auto it = dims.find(d);
            if (it == dims.end())
                throw Error(Errc::missing_dimension, language + " lacks " + std::string(to_string(d)));
            s += it->second;
        }
        out.average[language] = s / 3.0;
        sum += out.average[language];
    }
    out.overall = sum / static_cast<double>(scores.size());
    return out;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw Error(Errc::length_mismatch, "pearson inputs differ in length");
    if (xs.size() < 2) throw Error(Errc::empty_input, "pearson needs at least two points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(Errc::degenerate_variance, "zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double latency_to_penalty(double seconds) {
    if (!(seconds >= 0.0)) throw Error(Errc::negative_latency, "latency must be non-negative");
    if (seconds < 2.0) return 0.0;
    if (seconds < 10.0) return 0.05;
    if (seconds < 30.0) return 0.10;
    return 0.15;
}

double pad_final_score(double fast, double slow, double silence, double penalty) {
    for (double a : {fast, slow, silence})
        if (!(a >= 0.0 && a <= 1.0)) throw Error(Errc::precondition, "accuracy outside [0, 1]");
    return std::max(0.0, (fast + slow + silence) / 3.0 - penalty);
}

PadAccuracy pad_strategy_accuracy(const std::vector<PadDecision>& predictions, const std::vector<Strategy>& gold) {
    if (predictions.size() != gold.size()) throw Error(Errc::length_mismatch, "predictions and gold differ in length");
    PadAccuracy acc;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        ++acc.total[gold[i]];
        if (predictions[i].strategy == gold[i]) ++acc.correct[gold[i]];
    }
    auto ratio = [&](Strategy s) -> std::optional<double> {
        auto t = acc.total.find(s);
        if (t == acc.total.end()) return std::nullopt;
        return static_cast<double>(acc.correct[s]) / t->second;
    };
    acc.fast = ratio(Strategy::fast);
    acc.slow = ratio(Strategy::slow);
    acc.silence = ratio(Strategy::silence);
    return acc;
}

PadEvalRow pad_eval_row(const PadAccuracy& accuracy, double avg_latency) {
    PadEvalRow row;
    row.accuracy = accuracy;
    row.avg_latency = avg_latency;
    row.penalty = latency_to_penalty(avg_latency);
    if (accuracy.fast && accuracy.slow && accuracy.silence)
        row.final_score = pad_final_score(*accuracy.fast, *accuracy.slow, *accuracy.silence, row.penalty);
    return row;
}

json to_json(const PadEvalRow& row) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"fast", opt(row.accuracy.fast)},
            {"slow", opt(row.accuracy.slow)},
            {"silence", opt(row.accuracy.silence)},
            {"avg_latency", row.avg_latency},
            {"penalty", row.penalty},
            {"final_score", opt(row.final_score)}};
}

}  // namespace stagecraft
