#include <gtest/gtest.h>

#include "forge/csv.hpp"
#include "forge/mock_providers.hpp"
#include "forge/refbank.hpp"

using namespace forge;
using namespace forge::refbank;
using nlohmann::json;

namespace {

UtteranceRecord utt(std::string id, std::string spk, double dur, std::string transcript = "",
                    std::string variant = "MSA") {
  UtteranceRecord r;
  r.utterance_id = std::move(id);
  r.speaker_id = std::move(spk);
  r.duration = dur;
  r.variant = std::move(variant);
  r.audio = "mem://" + r.utterance_id;
  if (!transcript.empty()) r.transcript = transcript;
  return r;
}

/// Transcriber returning a fixed hypothesis per utterance uri.
class TableTranscriber final : public Transcriber {
public:
  std::map<std::string, std::string> table;
  std::set<std::string> failing;
  std::string transcribe(const AudioClip &a, const std::string &) override {
    if (failing.count(a.uri)) throw Error(ErrorKind::transport, "asr down");
    return table.at(a.uri);
  }
};

std::string words(int n, int substitute_at = -1) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i == substitute_at ? 999 : i);
  return s;
}

} // namespace

TEST(Ingest, ValidRowsBecomeRecords) {
  auto rows = io::parse_csv("id,spk,dur,text,path\nu1,s1,5.5,hello there,a.wav\nu2,s1,6,\"quoted, text\",b.wav\n"
                            "u3,s2,7.25,x,c.wav\n");
  SourceConfig cfg;
  cfg.source = "inhouse";
  cfg.columns = {{"utterance_id", "id"}, {"speaker_id", "spk"}, {"duration", "dur"},
                 {"transcript", "text"}, {"audio", "path"}};
  cfg.default_variant = "MSA";
  cfg.audio_root = "/data";
  auto res = ingest(rows, cfg);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_TRUE(res.errors.empty());
  EXPECT_EQ(res.records[1].transcript.value(), "quoted, text");
  EXPECT_EQ(res.records[0].audio, "/data/a.wav");
  EXPECT_DOUBLE_EQ(res.records[2].duration, 7.25);
  EXPECT_EQ(res.records[0].source, "inhouse");
}

TEST(Ingest, MissingDurationIsReportedWithRowIndex) {
  std::vector<json> rows{{{"utterance_id", "u1"}, {"speaker_id", "s"}, {"variant", "MSA"}, {"duration", 5.0}},
                         {{"utterance_id", "u2"}, {"speaker_id", "s"}, {"variant", "MSA"}}};
  auto res = ingest(rows, SourceConfig{});
  EXPECT_EQ(res.records.size(), 1u);
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_EQ(res.errors[0].row, 1u);
  EXPECT_NE(res.errors[0].reason.find("duration"), std::string::npos);
}

TEST(Ingest, DuplicateIdsAreConflicts) {
  std::vector<json> rows{{{"utterance_id", "u1"}, {"speaker_id", "s"}, {"variant", "MSA"}, {"duration", 5.0}},
                         {{"utterance_id", "u1"}, {"speaker_id", "t"}, {"variant", "MSA"}, {"duration", 6.0}}};
  auto res = ingest(rows, SourceConfig{});
  EXPECT_EQ(res.records.size(), 1u);
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_NE(res.errors[0].reason.find("conflict"), std::string::npos);
}

TEST(Ingest, RejectsUnknownVariantAndNonPositiveDuration) {
  std::vector<json> rows{{{"utterance_id", "u1"}, {"speaker_id", "s"}, {"variant", "Klingon"}, {"duration", 5.0}},
                         {{"utterance_id", "u2"}, {"speaker_id", "s"}, {"variant", "MSA"}, {"duration", 0}},
                         {{"utterance_id", "u3"}, {"speaker_id", "s"}, {"variant", "MSA"}, {"duration", "abc"}}};
  auto res = ingest(rows, SourceConfig{});
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.errors.size(), 3u);
}

TEST(Speakers, UniqueIdsAndPositiveAge) {
  std::vector<json> rows{{{"speaker_id", "a"}, {"age", 30}}, {{"speaker_id", "a"}}, {{"speaker_id", "b"}, {"age", 0}}};
  auto res = ingest_speakers(rows);
  EXPECT_EQ(res.speakers.size(), 1u);
  EXPECT_EQ(res.errors.size(), 2u);
}

TEST(FilterByWer, IdentityTranscriberRetainsEverything) {
  std::vector<UtteranceRecord> recs;
  TableTranscriber t;
  for (int i = 0; i < 5; ++i) {
    recs.push_back(utt("u" + std::to_string(i), "s", 6.0, words(10)));
    t.table[recs.back().audio] = *recs.back().transcript;
  }
  auto res = filter_by_wer(recs, t);
  ASSERT_EQ(res.retained.size(), 5u);
  for (const auto &r : res.retained) EXPECT_DOUBLE_EQ(r.wer.value(), 0.0);
}

TEST(FilterByWer, OneSubstitutionInTenIsDropped) {
  TableTranscriber t;
  auto r = utt("u1", "s", 6.0, words(10));
  t.table[r.audio] = words(10, 3);
  auto res = filter_by_wer({r}, t);
  EXPECT_TRUE(res.retained.empty());
  ASSERT_EQ(res.excluded.size(), 1u);
  EXPECT_EQ(res.excluded[0].reason, "wer-above-threshold");
  EXPECT_DOUBLE_EQ(res.excluded[0].wer.value(), 0.1);
}

TEST(FilterByWer, MissingTranscriptAndFailuresAreExcluded) {
  TableTranscriber t;
  auto a = utt("a", "s", 6.0);
  auto b = utt("b", "s", 6.0, "some words");
  t.failing.insert(b.audio);
  auto res = filter_by_wer({a, b}, t);
  EXPECT_TRUE(res.retained.empty());
  ASSERT_EQ(res.excluded.size(), 2u);
  EXPECT_EQ(res.excluded[0].reason, "no-reference");
  EXPECT_EQ(res.excluded[1].reason, "unverified");
}

TEST(FilterByWer, MonotoneInThreshold) {
  TableTranscriber t;
  std::vector<UtteranceRecord> recs;
  for (int i = 0; i < 20; ++i) {
    auto r = utt("u" + std::to_string(i), "s", 6.0, words(20));
    std::string hyp = words(20);
    for (int k = 0; k < i % 5; ++k) hyp += " extra";
    t.table[r.audio] = hyp;
    recs.push_back(r);
  }
  std::size_t prev = recs.size() + 1;
  for (double thr : {0.5, 0.2, 0.1, 0.05, 0.0}) {
    const auto kept = filter_by_wer(recs, t, thr).retained.size();
    EXPECT_LE(kept, prev);
    prev = kept;
  }
}

TEST(SelectSegments, SamplesTenInRange) {
  std::vector<UtteranceRecord> recs;
  for (int i = 0; i < 25; ++i) recs.push_back(utt("in" + std::to_string(i), "s", 5.0 + 3.0 * i / 24.0));
  for (int i = 0; i < 10; ++i) recs.push_back(utt("out" + std::to_string(i), "s", i % 2 ? 4.99 : 8.01));
  auto sel = select_segments(recs, 10, 5.0, 8.0, 42);
  ASSERT_EQ(sel.selected.size(), 10u);
  EXPECT_FALSE(sel.shortfall);
  for (const auto &r : sel.selected) {
    EXPECT_GE(r.duration, 5.0);
    EXPECT_LE(r.duration, 8.0);
  }
  // order of input does not matter, the seed does
  auto shuffled = recs;
  std::reverse(shuffled.begin(), shuffled.end());
  auto again = select_segments(shuffled, 10, 5.0, 8.0, 42);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sel.selected[i].utterance_id, again.selected[i].utterance_id);
}

TEST(SelectSegments, ShortfallReturnsAllQualifying) {
  std::vector<UtteranceRecord> recs{utt("a", "s", 5.0), utt("b", "s", 8.0), utt("c", "s", 6.0), utt("d", "s", 7.0),
                                    utt("e", "s", 9.0)};
  auto sel = select_segments(recs, 10, 5.0, 8.0, 1);
  EXPECT_EQ(sel.selected.size(), 4u);
  EXPECT_TRUE(sel.shortfall);
}

TEST(SelectSegments, RejectsMixedSpeakers) {
  EXPECT_THROW(select_segments({utt("a", "s", 6), utt("b", "t", 6)}), Error);
}

TEST(SelectSegments, NeverOutOfRange) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<UtteranceRecord> recs;
    const auto n = rng.index(40);
    for (std::size_t i = 0; i < n; ++i) recs.push_back(utt("u" + std::to_string(i), "s", rng.uniform_real(1, 12)));
    auto sel = select_segments(recs, 10, 5.0, 8.0, rng.next());
    for (const auto &r : sel.selected) {
      EXPECT_GE(r.duration, 5.0);
      EXPECT_LE(r.duration, 8.0);
    }
  }
}

TEST(BankStatistics, EmptyBankIsAllZero) {
  auto st = bank_statistics({}, {});
  EXPECT_EQ(st.utterances, 0u);
  EXPECT_EQ(st.unique_speakers, 0u);
  EXPECT_DOUBLE_EQ(st.total_hours, 0.0);
  EXPECT_TRUE(st.per_variant.empty());
  for (const auto &[k, v] : st.age_groups) EXPECT_EQ(v, 0u) << k;
}

TEST(BankStatistics, PublishedVariantAndAgeShape) {
  // 101 MSA speakers / 10,777 utterances (6 s each), 29 English speakers of
  // whom 6 are also MSA speakers, and the published age-group histogram.
  std::vector<UtteranceRecord> recs;
  std::vector<SpeakerProfile> spk;
  const std::vector<std::pair<int, int>> ages{{15, 4}, {25, 50}, {35, 19}, {45, 20}, {55, 16}, {65, 12}};
  int next_age_slot = 0, used_in_slot = 0;
  for (int s = 0; s < 124; ++s) {
    SpeakerProfile p;
    p.speaker_id = "s" + std::to_string(s);
    p.mother_tongue = s % 2 ? "Arabic (Egypt)" : "Arabic (Iraq)";
    if (next_age_slot < static_cast<int>(ages.size())) {
      p.age = ages[next_age_slot].first;
      if (++used_in_slot == ages[next_age_slot].second) {
        ++next_age_slot;
        used_in_slot = 0;
      }
    }
    spk.push_back(p);
  }
  int u = 0;
  for (int s = 0; s < 101; ++s) {
    const int n = s < 71 ? 107 : 106; // 71*107 + 30*106 = 10,777
    for (int k = 0; k < n; ++k) recs.push_back(utt("m" + std::to_string(u++), "s" + std::to_string(s), 6.0));
  }
  for (int s = 95; s < 124; ++s)
    for (int k = 0; k < 3; ++k) recs.push_back(utt("e" + std::to_string(u++), "s" + std::to_string(s), 6.0, "", "English"));

  auto st = bank_statistics(recs, spk);
  EXPECT_EQ(st.per_variant["MSA"].speakers, 101u);
  EXPECT_EQ(st.per_variant["MSA"].utterances, 10777u);
  EXPECT_NEAR(st.per_variant["MSA"].utterances_per_speaker, 10777.0 / 101.0, 1e-9);
  EXPECT_DOUBLE_EQ(round1(st.per_variant["MSA"].mean_duration), 6.0);
  EXPECT_EQ(st.per_variant["English"].speakers, 29u);
  EXPECT_EQ(st.age_groups["20-29"], 50u);
  EXPECT_EQ(st.age_groups["unknown"], 3u);
  EXPECT_EQ(st.unique_speakers, 124u);
  EXPECT_EQ(st.variant_speaker_entries, 130u);
  EXPECT_LE(st.unique_speakers, st.variant_speaker_entries);

  const auto j = to_json(st);
  EXPECT_EQ(j["per_variant"]["MSA"]["speakers"], 101);
  const auto table = format_table(st);
  EXPECT_NE(table.find("MSA"), std::string::npos);
  EXPECT_NE(table.find("rounded to one decimal"), std::string::npos);
}

TEST(BankStatistics, AggregationIsOrderIndependent) {
  std::vector<UtteranceRecord> recs{utt("a", "x", 5.0), utt("b", "y", 7.0, "", "Gulf"), utt("c", "x", 6.0, "", "Gulf")};
  auto forward = to_json(bank_statistics(recs, {}));
  std::reverse(recs.begin(), recs.end());
  EXPECT_EQ(forward, to_json(bank_statistics(recs, {})));
}

TEST(DialectVerification, OverrideBeatsClassifier) {
  auto a = utt("a", "s", 6.0);
  auto b = utt("b", "s", 6.0);
  b.dialect_verified = true;
  auto res = verify_dialect({a, b}, [](const UtteranceRecord &) { return false; });
  ASSERT_EQ(res.retained.size(), 1u);
  EXPECT_EQ(res.retained[0].utterance_id, "b");
}
