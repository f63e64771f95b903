#include <gtest/gtest.h>

#include <filesystem>

#include "forge/dataset.hpp"

using namespace forge;
using namespace forge::dataset;

namespace {

struct Corpus {
  std::vector<SplitItem> items;
  std::set<std::string> personas;
};

Corpus corpus(std::size_t profiles, std::size_t per_profile, std::size_t scenarios) {
  Corpus c;
  std::size_t k = 0;
  for (std::size_t p = 0; p < profiles; ++p) {
    const auto pid = "p" + std::to_string(p);
    c.personas.insert(pid);
    for (std::size_t i = 0; i < per_profile; ++i, ++k)
      c.items.push_back({"c" + std::to_string(k), pid, "s" + std::to_string(k % scenarios)});
  }
  return c;
}

std::vector<dialogue::Conversation> conversations(const std::vector<SplitItem> &items) {
  std::vector<dialogue::Conversation> out;
  for (const auto &it : items) {
    dialogue::Conversation c;
    c.conv_id = it.conv_id;
    c.persona_id = it.persona_id;
    c.scenario_id = it.scenario_id;
    c.language = "MSA";
    c.initiator = "user";
    c.max_messages = 8;
    c.messages = {{"user", "مرحبا"}, {"assistant", "أهلا"}};
    out.push_back(c);
  }
  return out;
}

} // namespace

TEST(Split, GreedyCrossingTenByTen) {
  const auto c = corpus(10, 10, 5);
  const auto m = split(c.items, c.personas, {.rng_seed = 3});
  EXPECT_EQ(m.test_profile_ids.size(), 2u);
  EXPECT_EQ(m.counts().at("test"), 20u);
}

TEST(Split, TargetRatiosAtScale) {
  const auto c = corpus(100, 50, 20);
  const auto m = split(c.items, c.personas, {.rng_seed = 11});
  EXPECT_EQ(m.test_profile_ids.size(), 13u);
  EXPECT_NEAR(m.achieved_test, 0.13, 1e-12);
  EXPECT_NEAR(m.achieved_dev, 0.10, 0.01);
  const auto r = verify_manifest(m, c.items);
  EXPECT_TRUE(r.ok());
  EXPECT_LE(r.tv_train_dev, 0.05);
}

TEST(Split, PartitionAndNoProfileLeakage) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = corpus(17, 7 + seed % 5, 4);
    const auto m = split(c.items, c.personas, {.rng_seed = seed});
    ASSERT_EQ(m.split_of.size(), c.items.size());
    const auto counts = m.counts();
    EXPECT_EQ(counts.at("train") + counts.at("dev") + counts.at("test"), c.items.size());
    const std::set<std::string> test(m.test_profile_ids.begin(), m.test_profile_ids.end());
    for (const auto &it : c.items) EXPECT_EQ(m.split_of.at(it.conv_id) == "test", test.count(it.persona_id) == 1);
    EXPECT_TRUE(verify_manifest(m, c.items).leakage.empty());
  }
}

TEST(Split, Deterministic) {
  const auto c = corpus(30, 9, 6);
  const auto a = split(c.items, c.personas, {.rng_seed = 5});
  auto shuffled = c.items;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto b = split(shuffled, c.personas, {.rng_seed = 5});
  EXPECT_EQ(json(a).dump(), json(b).dump());
  EXPECT_NE(json(split(c.items, c.personas, {.rng_seed = 6})).dump(), json(a).dump());
}

TEST(Split, RejectsDegenerateInput) {
  const auto one = corpus(1, 20, 3);
  try {
    split(one.items, one.personas);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
  auto c = corpus(3, 3, 1);
  c.personas.erase("p0");
  try {
    split(c.items, c.personas);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
  }
}

TEST(Split, ProfileDisjointDevMode) {
  const auto c = corpus(40, 5, 4);
  const auto m = split(c.items, c.personas, {.rng_seed = 2, .profile_disjoint_dev = true});
  EXPECT_FALSE(m.dev_profile_ids.empty());
  std::map<std::string, std::set<std::string>> seen;
  for (const auto &it : c.items) seen[it.persona_id].insert(m.split_of.at(it.conv_id));
  for (const auto &[p, s] : seen) EXPECT_EQ(s.size(), 1u) << p;
  EXPECT_TRUE(verify_manifest(m, c.items).ok());
}

TEST(Verify, DetectsMovedConversation) {
  const auto c = corpus(10, 10, 5);
  auto m = split(c.items, c.personas, {.rng_seed = 3});
  for (auto &[id, s] : m.split_of)
    if (s == "test") {
      s = "train";
      break;
    }
  const auto r = verify_manifest(m, c.items);
  EXPECT_EQ(r.leakage.size(), 1u);
  EXPECT_FALSE(r.ok());
}

TEST(Verify, EmptyManifestIsError) {
  EXPECT_THROW(verify_manifest(SplitManifest{}, {}), Error);
}

TEST(Verify, TvDistance) {
  EXPECT_DOUBLE_EQ(tv_distance({{"a", 5}, {"b", 5}}, {{"a", 1}, {"b", 1}}), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance({{"a", 4}}, {{"b", 2}}), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance({{"a", 3}, {"b", 1}}, {{"a", 1}, {"b", 1}}), 0.25);
}

TEST(Manifest, JsonRoundTrip) {
  const auto c = corpus(12, 4, 3);
  const auto m = split(c.items, c.personas, {.rng_seed = 9});
  const auto back = json(m).get<SplitManifest>();
  EXPECT_EQ(json(back).dump(), json(m).dump());
}

TEST(Export, ShardsPartitionAndAreStable) {
  const auto c = corpus(10, 10, 5);
  const auto m = split(c.items, c.personas, {.rng_seed = 3});
  const auto convs = conversations(c.items);
  std::vector<speechgen::SynthUtterance> audio;
  for (const auto &conv : convs) {
    if (conv.conv_id == "c1") continue;
    speechgen::SynthUtterance u;
    u.conv_id = conv.conv_id;
    u.turn_index = 0;
    u.text = conv.messages[0].content;
    u.audio.uri = "audio/" + conv.conv_id + ".wav";
    u.audio.duration = 1.0;
    audio.push_back(u);
  }
  const auto dir = std::filesystem::temp_directory_path() / "forge_export_test";
  std::filesystem::remove_all(dir);
  const auto r = export_splits(dir, m, convs, audio, {.shard_size = 7});
  EXPECT_EQ(r.shards.size(), 3u);
  EXPECT_EQ(r.audio_missing, std::vector<std::string>{"c1"});

  std::set<std::string> ids;
  std::map<std::string, std::string> bytes;
  for (const auto &[split_name, files] : r.shards)
    for (const auto &f : files) {
      bytes[f] = io::read_file(dir / f);
      for (const auto &row : io::read_jsonl(dir / f)) {
        EXPECT_EQ(row.at("split"), split_name);
        EXPECT_TRUE(ids.insert(row.at("conv_id").get<std::string>()).second);
      }
    }
  EXPECT_EQ(ids.size(), c.items.size());

  auto reversed = convs;
  std::reverse(reversed.begin(), reversed.end());
  export_splits(dir, m, reversed, audio, {.shard_size = 7});
  for (const auto &[f, content] : bytes) EXPECT_EQ(io::read_file(dir / f), content) << f;
}
