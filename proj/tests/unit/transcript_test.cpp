#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "cases.hpp"
#include "stagecraft/error.hpp"
#include "stagecraft/transcript.hpp"

using namespace stagecraft;

namespace {

TranscriptEvent event(EventKind kind, std::string speaker, Visibility vis) {
    TranscriptEvent e;
    e.kind = kind;
    e.speaker = std::move(speaker);
    e.visibility = std::move(vis);
    e.text = "x";
    return e;
}

std::filesystem::path temp_file(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("stagecraft_" + name);
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST(Visibility, Rules) {
    const auto pub = event(EventKind::speech, "Hamlet", Visibility::all());
    const auto mine = event(EventKind::thinking, "Hamlet", Visibility::private_to("Hamlet"));
    const auto ctrl = event(EventKind::system, "Transfer", Visibility::control());
    const auto spectator = Viewer::spectator();
    const auto hamlet = Viewer::of("Hamlet");
    const auto gertrude = Viewer::of("Gertrude");
    const auto revealed = Viewer::of("Gertrude", true);

    EXPECT_TRUE(visible_to(pub, spectator) && visible_to(pub, hamlet) && visible_to(pub, gertrude));
    EXPECT_TRUE(visible_to(mine, hamlet));
    EXPECT_FALSE(visible_to(mine, gertrude));
    EXPECT_FALSE(visible_to(mine, spectator));
    EXPECT_FALSE(visible_to(mine, revealed));
    EXPECT_TRUE(visible_to(ctrl, spectator));
    EXPECT_FALSE(visible_to(ctrl, gertrude));
    EXPECT_TRUE(visible_to(ctrl, revealed));
}

TEST(EventJson, RoundTripsEveryFixtureEvent) {
    for (int n = 1; n <= stagecraft::testing::kCaseCount; ++n) {
        for (const auto& e : stagecraft::testing::run_case(n).events) {
            const auto j = to_json(e);
            EXPECT_EQ(to_json(event_from_json(j)), j);
        }
    }
}

TEST(EventJson, CorruptInputIsRejected) {
    EXPECT_THROW(event_from_json(nlohmann::json{{"seq", 1}, {"kind", "dance"}}), Error);
    EXPECT_THROW(event_from_json(nlohmann::json{{"seq", "one"}, {"kind", "speech"}}), Error);
    EXPECT_THROW(read_transcript_text("{\"seq\": 1\n"), Error);

    auto e = event(EventKind::speech, "A", Visibility::all());
    e.seq = 2;
    try {
        read_transcript_text(to_jsonl({e}));
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), Errc::corrupt_transcript);
        EXPECT_NE(std::string(err.what()).find("line 1"), std::string::npos);
    }
}

TEST(EventLog, DenseSeqAndListeners) {
    EventLog log;
    std::vector<std::int64_t> heard;
    log.add_listener([&](const TranscriptEvent& e) { heard.push_back(e.seq); });
    for (int i = 0; i < 5; ++i) log.append(event(EventKind::speech, "A", Visibility::all()));
    EXPECT_EQ(log.last_seq(), 5);
    EXPECT_EQ(heard, (std::vector<std::int64_t>{1, 2, 3, 4, 5}));
    EXPECT_EQ(log.since(3).size(), 2u);
    EXPECT_EQ(log.since(3).front().seq, 4);
}

TEST(EventLog, WaitBeyondWakesOnAppendAndClose) {
    EventLog log;
    EXPECT_FALSE(log.wait_beyond(0, std::chrono::milliseconds(10)));
    std::thread t([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        log.append(event(EventKind::speech, "A", Visibility::all()));
    });
    EXPECT_TRUE(log.wait_beyond(0, std::chrono::seconds(5)));
    t.join();
    log.close();
    EXPECT_TRUE(log.closed());
    EXPECT_FALSE(log.wait_beyond(1, std::chrono::seconds(5)));
}

TEST(Writer, FileRoundTrip) {
    const auto path = temp_file("writer.jsonl");
    const auto events = stagecraft::testing::run_case(5).events;
    {
        TranscriptWriter w(path);
        for (const auto& e : events) w.write(e);
    }
    const auto back = read_transcript(path);
    EXPECT_EQ(transcript_hash(back), transcript_hash(events));
    std::filesystem::remove(path);
}

TEST(Hash, Fnv1aKnownValues) {
    // Reference values of 64-bit FNV-1a.
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Kinds, NamesRoundTrip) {
    for (auto k : {EventKind::speech, EventKind::action_attempt, EventKind::action_result, EventKind::broadcast,
                   EventKind::thinking, EventKind::instruction, EventKind::system})
        EXPECT_EQ(parse_event_kind(to_string(k)), k);
}
