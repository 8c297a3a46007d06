// stagecraft command-line entry point.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stagecraft/config.hpp"
#include "stagecraft/error.hpp"
#include "stagecraft/evaluation.hpp"
#include "stagecraft/planning.hpp"
#include "stagecraft/service.hpp"
#include "stagecraft/stage.hpp"

using namespace stagecraft;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::precondition, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error(Errc::precondition, "cannot write " + path);
    out << text;
}

/// Flags shared by every subcommand.
struct Common {
    std::string config_path;
    std::string scripted;
    AppConfig config;

    void add(CLI::App& app) {
        app.add_option("--config", config_path, "JSON config file");
        app.add_option("--scripted", scripted, "serve model replies from a scripted JSONL fixture");
    }

    void load() {
        if (!config_path.empty()) config = AppConfig::from_file(config_path);
        if (!scripted.empty()) {
            config.backend.kind = "scripted";
            config.backend.script = scripted;
        }
    }

    std::shared_ptr<const Gateway> gateway() const {
        return std::make_shared<const Gateway>(make_backend(config.backend));
    }
};

struct StageFlags {
    std::optional<int> stall_threshold;
    std::optional<int> turn_budget;
    std::optional<std::size_t> history_window;
    std::optional<std::string> clock;
    std::optional<std::string> review;
    bool reveal_flags = false;

    void add(CLI::App& app) {
        app.add_option("--stall-threshold", stall_threshold, "ineffective rounds before the advancer steps in");
        app.add_option("--turn-budget", turn_budget, "rounds per act");
        app.add_option("--history-window", history_window, "dialogue events shown to agents");
        app.add_option("--clock", clock, "turns or wall")->check(CLI::IsMember({"turns", "wall"}));
        app.add_option("--review", review, "always, human_only or never")
            ->check(CLI::IsMember({"always", "human_only", "never"}));
        app.add_flag("--reveal-flags", reveal_flags, "show flag checks to human players");
    }

    void apply(StageConfig& c) const {
        auto j = c.to_json();
        if (stall_threshold) j["stall_threshold"] = *stall_threshold;
        if (turn_budget) j["turn_budget"] = *turn_budget;
        if (history_window) j["history_window"] = *history_window;
        if (clock) j["clock"] = *clock;
        if (review) j["review_mode"] = *review;
        if (reveal_flags) j["reveal_flags_to_humans"] = true;
        c = StageConfig::from_json(j);
    }
};

Roster parse_roster(const NarrativeBlueprint& bp, const std::vector<std::string>& humans) {
    auto roster = default_roster(bp);
    for (const auto& h : humans) {
        if (!roster.contains(h)) throw Error(Errc::roster_mismatch, "'" + h + "' is not in the blueprint");
        roster[h] = Controller::human;
    }
    return roster;
}

int cmd_plan(Common& common, const std::string& topic, const std::string& work, const std::string& title,
             const std::string& search, const std::string& out, const std::string& audit_out) {
    common.load();
    auto gw = common.gateway();
    if (!search.empty()) {
        const auto colon = search.find(':');
        common.config.search.kind = search.substr(0, colon);
        if (colon != std::string::npos) common.config.search.path = search.substr(colon + 1);
    }
    auto provider = make_search(common.config.search);
    AuditTrail audit;
    PlanningContext ctx{gw.get(), provider.get(), &audit};
    NarrativeBlueprint bp;
    if (!work.empty()) bp = plan_literary_work(title.empty() ? work : title, slurp(work), ctx);
    else bp = plan_topic(topic, ctx);
    write_text(out, serialize(bp) + "\n");
    if (!audit_out.empty()) audit.write_jsonl(audit_out);
    return 0;
}

int cmd_perform(Common& common, const StageFlags& flags, const std::string& blueprint_path,
                const std::vector<std::string>& humans, const std::string& inputs, const std::string& out,
                std::optional<int> max_rounds) {
    common.load();
    auto bp = parse_blueprint(std::string_view(slurp(blueprint_path)));
    auto config = common.config.stage;
    flags.apply(config);
    auto input = std::make_shared<QueuedInput>();
    if (!inputs.empty()) {
        std::istringstream lines(slurp(inputs));
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            const auto j = json::parse(line);
            input->push(j.at("actor").get<std::string>(), j.at("text").get<std::string>());
        }
    }
    auto log = std::make_shared<EventLog>();
    std::unique_ptr<TranscriptWriter> writer;
    if (!out.empty() && out != "-") {
        writer = std::make_unique<TranscriptWriter>(out);
        log->add_listener([w = writer.get()](const TranscriptEvent& e) { w->write(e); });
    } else {
        log->add_listener([](const TranscriptEvent& e) { std::cout << to_json(e).dump() << '\n'; });
    }
    Session session(bp, parse_roster(bp, humans), common.gateway(), config, "perform", input, log);
    session.start();
    const auto status = session.run(max_rounds);
    std::cerr << "status: " << to_string(status) << ", events: " << log->size() << '\n';
    return status == SessionStatus::completed ? 0 : 3;
}

int cmd_evaluate(Common& common, const std::string& a, const std::string& b, const std::string& dims,
                 const std::string& judge, const std::string& language, const std::string& model,
                 const std::string& out, const std::string& verdicts_out, bool swap) {
    common.load();
    BackendSettings settings = common.config.judge;
    if (judge.starts_with("scripted:")) settings = {.kind = "scripted", .script = judge.substr(9)};
    else if (judge == "http") settings.kind = "http";
    else if (!common.scripted.empty() && judge.empty()) settings = common.config.backend;
    Gateway gw(make_backend(settings));
    const auto ta = read_transcript(a);
    const auto tb = read_transcript(b);

    std::vector<JudgeVerdict> verdicts;
    std::map<Dimension, double> scores;
    std::stringstream dim_list(dims);
    std::string d;
    while (std::getline(dim_list, d, ',')) {
        const auto dim = parse_dimension(d);
        if (!dim) throw Error(Errc::precondition, "unknown dimension '" + d + "'");
        auto v = judge_pairwise(ta, tb, *dim, gw, {.session_id = "judge", .swap_positions = swap});
        scores[*dim] = win_rate(std::vector<JudgeVerdict>{v});
        verdicts.push_back(std::move(v));
    }
    json row = {{"model", model}, {"language", language}};
    for (const auto& [dim, s] : scores) row[std::string(to_string(dim))] = round_half_up(s);
    if (scores.size() == 3) {
        const auto board = aggregate_leaderboard({{language, scores}});
        row["Average"] = round_half_up(board.average.at(language));
    }
    write_text(out, json{{"rows", json::array({row})}}.dump(2) + "\n");
    if (!verdicts_out.empty()) {
        std::ostringstream lines;
        for (const auto& v : verdicts) lines << to_json(v).dump() << '\n';
        write_text(verdicts_out, lines.str());
    }
    return 0;
}

std::optional<Strategy> strategy_of_line(const std::string& line) {
    const auto j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return parse_strategy(j.value("strategy", ""));
    return parse_strategy(line);
}

int cmd_pad_eval(const std::string& pred, const std::string& gold, double latency) {
    std::vector<PadDecision> predictions;
    std::vector<Strategy> labels;
    auto read = [](const std::string& path, auto&& sink) {
        std::istringstream lines(slurp(path));
        std::string line;
        int n = 0;
        while (std::getline(lines, line)) {
            ++n;
            if (line.empty()) continue;
            const auto s = strategy_of_line(line);
            if (!s) throw Error(Errc::precondition, path + ":" + std::to_string(n) + ": no strategy");
            sink(*s);
        }
    };
    read(pred, [&](Strategy s) { predictions.push_back(PadDecision{.strategy = s}); });
    read(gold, [&](Strategy s) { labels.push_back(s); });
    const auto row = pad_eval_row(pad_strategy_accuracy(predictions, labels), latency);
    std::cout << to_json(row).dump(2) << '\n';
    return 0;
}

int cmd_replay(const std::string& path) {
    const auto r = replay_file(path);
    json scenes = json::object();
    for (const auto& [scene, props] : r.state.prop_states) {
        json p = json::object();
        for (const auto& [id, state] : props) p[id] = state;
        scenes[scene] = p;
    }
    json out = {{"started", r.started},
                {"session_id", r.session_id},
                {"last_seq", r.last_seq},
                {"status", to_string(r.state.status)},
                {"act_index", r.state.act_index},
                {"point_index", r.state.point_index},
                {"active_scene", r.state.active_scene},
                {"on_stage", r.state.on_stage},
                {"prop_states", scenes},
                {"state_checksum", state_checksum(r.state.prop_states)}};
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_validate(const std::string& path) {
    const auto bp = parse_blueprint(std::string_view(slurp(path)));
    const auto violations = validate(bp);
    for (const auto& v : violations) std::cout << v.path << ": " << v.message << '\n';
    if (violations.empty()) std::cout << "ok\n";
    return violations.empty() ? 0 : 1;
}

httplib::Server* g_server = nullptr;

int cmd_serve(Common& common, const StageFlags& flags, std::optional<int> port, const std::string& data_dir) {
    common.load();
    ManagerOptions options;
    options.data_dir = data_dir.empty() ? common.config.server.data_dir : data_dir;
    options.default_config = common.config.stage;
    flags.apply(options.default_config);
    SessionManager manager(common.gateway(), options);
    const auto recovered = manager.recover(true);
    httplib::Server server;
    register_routes(server, manager);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    const int p = port.value_or(common.config.server.port);
    std::cerr << "listening on " << common.config.server.host << ":" << p << " (" << recovered
              << " sessions recovered)\n";
    if (!server.listen(common.config.server.host, p)) {
        std::cerr << "cannot listen on port " << p << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stagecraft: plan and perform interactive dramas with language-model actors"};
    app.require_subcommand(1);
    Common common;
    StageFlags stage_flags;

    auto* plan = app.add_subcommand("plan", "generate a blueprint from a topic or a literary work");
    std::string topic, work, title, search, plan_out, audit_out;
    common.add(*plan);
    auto* topic_opt = plan->add_option("--topic", topic, "drama topic");
    plan->add_option("--work", work, "plain-text literary work")->excludes(topic_opt);
    plan->add_option("--title", title, "title of the literary work");
    plan->add_option("--search", search, "none, wikipedia or fixture:<path>");
    plan->add_option("-o,--out", plan_out, "blueprint output (default stdout)");
    plan->add_option("--audit", audit_out, "audit trail JSONL");

    auto* perform = app.add_subcommand("perform", "run a performance from a blueprint");
    std::string blueprint_path, inputs, perform_out;
    std::vector<std::string> humans;
    std::optional<int> max_rounds;
    common.add(*perform);
    stage_flags.add(*perform);
    perform->add_option("--blueprint", blueprint_path, "blueprint JSON")->required();
    perform->add_option("--human", humans, "actor played by a human (repeatable)");
    perform->add_option("--inputs", inputs, "JSONL of {actor, text} human turns, consumed in order");
    perform->add_option("-o,--out", perform_out, "transcript JSONL (default stdout)");
    perform->add_option("--max-rounds", max_rounds, "stop after this many rounds");

    auto* evaluate = app.add_subcommand("evaluate", "pairwise judging of two transcripts");
    std::string ta, tb, dims = "cp,nq,ie", judge, language = "en", model = "model_a", report_out, verdicts_out;
    bool swap = false;
    common.add(*evaluate);
    evaluate->add_option("--a", ta, "transcript of the evaluated model")->required();
    evaluate->add_option("--b", tb, "transcript of the baseline")->required();
    evaluate->add_option("--dims", dims, "comma-separated dimensions");
    evaluate->add_option("--judge", judge, "http or scripted:<path> (default: judge section of the config)");
    evaluate->add_option("--language", language, "language label for the report");
    evaluate->add_option("--model", model, "model label for the report");
    evaluate->add_option("-o,--out", report_out, "report JSON (default stdout)");
    evaluate->add_option("--verdicts", verdicts_out, "raw verdicts JSONL");
    evaluate->add_flag("--swap", swap, "show the baseline first and mirror the scores");

    auto* pad_eval = app.add_subcommand("pad-eval", "strategy accuracy and latency-penalised score");
    std::string pred, gold;
    double latency = 0.0;
    pad_eval->add_option("--pred", pred, "predicted strategies (JSONL or one per line)")->required();
    pad_eval->add_option("--gold", gold, "gold strategies (JSONL or one per line)")->required();
    pad_eval->add_option("--latency", latency, "average latency in seconds")->required();

    auto* replay_cmd = app.add_subcommand("replay", "recompute the final state of a transcript");
    std::string replay_path;
    replay_cmd->add_option("transcript", replay_path)->required();

    auto* validate_cmd = app.add_subcommand("validate", "check a blueprint");
    std::string validate_path;
    validate_cmd->add_option("blueprint", validate_path)->required();

    auto* serve = app.add_subcommand("serve", "HTTP API with live event streams");
    std::optional<int> port;
    std::string data_dir;
    common.add(*serve);
    stage_flags.add(*serve);
    serve->add_option("--port", port, "listen port");
    serve->add_option("--data-dir", data_dir, "session storage directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan) {
            if (topic.empty() && work.empty()) throw Error(Errc::precondition, "plan needs --topic or --work");
            return cmd_plan(common, topic, work, title, search, plan_out, audit_out);
        }
        if (*perform) return cmd_perform(common, stage_flags, blueprint_path, humans, inputs, perform_out, max_rounds);
        if (*evaluate) return cmd_evaluate(common, ta, tb, dims, judge, language, model, report_out, verdicts_out, swap);
        if (*pad_eval) return cmd_pad_eval(pred, gold, latency);
        if (*replay_cmd) return cmd_replay(replay_path);
        if (*validate_cmd) return cmd_validate(validate_path);
        if (*serve) return cmd_serve(common, stage_flags, port, data_dir);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
