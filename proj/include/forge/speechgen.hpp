#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/dialogue.hpp"
#include "forge/persona.hpp"
#include "forge/providers.hpp"
#include "forge/refbank.hpp"
#include "forge/rng.hpp"
#include "forge/textmetrics.hpp"

namespace forge {

inline void to_json(nlohmann::json &j, const AudioClip &c) {
  j = nlohmann::json{{"uri", c.uri}, {"duration", c.duration}, {"sample_rate", c.sample_rate}, {"speaker", c.speaker}};
}
inline void from_json(const nlohmann::json &j, AudioClip &c) {
  c.uri = j.at("uri").get<std::string>();
  c.duration = j.at("duration").get<double>();
  c.sample_rate = j.value("sample_rate", 16000);
  c.speaker = j.value("speaker", "");
}

} // namespace forge

namespace forge::speechgen {

using nlohmann::json;

/// Bank language variant that matches a conversation language tag.
inline std::string variant_for_language(const std::string &language) {
  return dialogue::is_arabic_language(language) ? "MSA" : language;
}

struct ReferenceConfig {
  double min_duration = 5.0;
  double max_duration = 8.0;
  std::vector<std::string> donor_speakers; // empty: any speaker with the variant
};

struct ReferenceChoice {
  refbank::UtteranceRecord utterance;
  bool donor_fallback = false;
  std::string reason;
};

inline bool better_reference(const refbank::UtteranceRecord *a, const refbank::UtteranceRecord *b) {
  if (a->duration != b->duration) return a->duration > b->duration;
  return a->utterance_id < b->utterance_id;
}

/// Longest in-range clip of the persona's seed speaker in the variant (ties by id).
/// Without one, a donor speaker is picked by persona hash and its best clip used.
inline ReferenceChoice select_reference(const persona::PersonaProfile &p, const std::string &language,
                                        const std::vector<refbank::UtteranceRecord> &bank,
                                        const ReferenceConfig &cfg = {}) {
  const auto variant = variant_for_language(language);
  auto in_range = [&](const refbank::UtteranceRecord &u) {
    return u.variant == variant && u.duration >= cfg.min_duration && u.duration <= cfg.max_duration;
  };
  std::map<std::string, const refbank::UtteranceRecord *> best; // speaker -> best clip
  for (const auto &u : bank) {
    if (!in_range(u)) continue;
    auto &slot = best[u.speaker_id];
    if (!slot || better_reference(&u, slot)) slot = &u;
  }
  if (p.seed_speaker_id) {
    if (auto it = best.find(*p.seed_speaker_id); it != best.end()) return {*it->second, false, ""};
  }
  std::vector<const refbank::UtteranceRecord *> donors;
  if (cfg.donor_speakers.empty()) {
    for (const auto &[spk, u] : best) donors.push_back(u);
  } else {
    for (const auto &spk : cfg.donor_speakers)
      if (auto it = best.find(spk); it != best.end()) donors.push_back(it->second);
  }
  if (donors.empty())
    throw Error(ErrorKind::not_found, "no reference clip in variant '" + variant + "' for persona " + p.persona_id);
  const auto *pick = donors[fnv1a(p.persona_id) % donors.size()];
  const std::string reason = p.seed_speaker_id ? "seed speaker " + *p.seed_speaker_id + " has no in-range " + variant + " clip"
                                               : "persona has no seed speaker";
  return {*pick, true, reason};
}

struct SynthUtterance {
  std::string conv_id;
  std::size_t turn_index = 0;
  std::string persona_id;
  std::string speaker_id;
  std::string reference_utterance_id;
  std::string language;
  std::string text;
  AudioClip audio;
  std::string status = "ok"; // ok | failed
  std::string error;
  friend bool operator==(const SynthUtterance &a, const SynthUtterance &b) {
    return a.conv_id == b.conv_id && a.turn_index == b.turn_index && a.status == b.status && a.text == b.text &&
           a.audio.uri == b.audio.uri;
  }
};

inline void to_json(json &j, const SynthUtterance &u) {
  j = json{{"conv_id", u.conv_id},
           {"turn_index", u.turn_index},
           {"persona_id", u.persona_id},
           {"speaker_id", u.speaker_id},
           {"reference_utterance_id", u.reference_utterance_id},
           {"language", u.language},
           {"text", u.text},
           {"audio", u.audio},
           {"status", u.status}};
  if (!u.error.empty()) j["error"] = u.error;
}

inline void from_json(const json &j, SynthUtterance &u) {
  u.conv_id = j.at("conv_id").get<std::string>();
  u.turn_index = j.at("turn_index").get<std::size_t>();
  u.persona_id = j.at("persona_id").get<std::string>();
  u.speaker_id = j.value("speaker_id", "");
  u.reference_utterance_id = j.at("reference_utterance_id").get<std::string>();
  u.language = j.value("language", "");
  u.text = j.at("text").get<std::string>();
  u.audio = j.at("audio").get<AudioClip>();
  u.status = j.at("status").get<std::string>();
  u.error = j.value("error", "");
}

struct ConversationAudio {
  std::vector<SynthUtterance> utterances;
  bool all_failed = false;
};

/// One utterance per user turn; assistant turns stay text. A failing turn is
/// recorded and the rest continue.
inline ConversationAudio synthesize_conversation(const dialogue::Conversation &conv, Synthesizer &synth,
                                                 const refbank::UtteranceRecord &reference,
                                                 std::size_t max_in_flight = 1) {
  if (auto err = dialogue::schema_error(conv.messages, conv.max_messages))
    throw Error(ErrorKind::precondition, "synthesize_conversation: " + *err);
  std::vector<std::size_t> turns;
  for (std::size_t i = 0; i < conv.messages.size(); ++i)
    if (conv.messages[i].role == "user") turns.push_back(i);
  ConversationAudio out;
  out.utterances.resize(turns.size());
  const auto ref_clip = reference.clip();
  parallel_for(turns.size(), max_in_flight, [&](std::size_t k) {
    auto &u = out.utterances[k];
    u.conv_id = conv.conv_id;
    u.turn_index = turns[k];
    u.persona_id = conv.persona_id;
    u.speaker_id = reference.speaker_id;
    u.reference_utterance_id = reference.utterance_id;
    u.language = conv.language;
    u.text = conv.messages[turns[k]].content;
    try {
      u.audio = synth.synthesize(u.text, ref_clip);
      if (!u.audio.valid()) throw Error(ErrorKind::schema, "synthesizer returned an empty clip");
    } catch (const Error &e) {
      u.status = "failed";
      u.error = std::string(to_string(e.kind())) + ": " + e.what();
      u.audio = {};
    }
  });
  out.all_failed = !out.utterances.empty() &&
                   std::all_of(out.utterances.begin(), out.utterances.end(),
                               [](const SynthUtterance &u) { return u.status != "ok"; });
  return out;
}

/// Relative storage path: audio/<2-hex prefix>/<conv_id>/<turn>.wav
inline std::string audio_relpath(const std::string &conv_id, std::size_t turn) {
  return "audio/" + hex64(fnv1a(conv_id)).substr(0, 2) + "/" + conv_id + "/" + std::to_string(turn) + ".wav";
}

/// Write an inline payload under root and point the clip at the stored file.
inline void store_audio(const std::filesystem::path &root, SynthUtterance &u) {
  if (u.status != "ok" || u.audio.payload.empty()) return;
  const auto rel = audio_relpath(u.conv_id, u.turn_index);
  const auto full = root / rel;
  std::filesystem::create_directories(full.parent_path());
  std::ofstream out(full, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::config, "cannot write audio at " + full.string());
  out.write(u.audio.payload.data(), static_cast<std::streamsize>(u.audio.payload.size()));
  u.audio.uri = rel;
  u.audio.payload.clear();
}

struct QaSample {
  std::vector<SynthUtterance> items;
  std::map<std::string, std::size_t> per_speaker;
  std::map<std::string, std::size_t> shortfall; // speaker -> available count when below target
};

/// Up to per_speaker ok-utterances per speaker, uniform without replacement.
inline QaSample qa_sample(const std::vector<SynthUtterance> &utterances, std::size_t per_speaker,
                          std::uint64_t seed) {
  std::map<std::string, std::vector<const SynthUtterance *>> groups;
  for (const auto &u : utterances)
    if (u.status == "ok") groups[u.speaker_id].push_back(&u);
  QaSample out;
  for (auto &[spk, list] : groups) {
    std::sort(list.begin(), list.end(), [](const SynthUtterance *a, const SynthUtterance *b) {
      return std::tie(a->conv_id, a->turn_index) < std::tie(b->conv_id, b->turn_index);
    });
    Rng rng(mix_seed(seed, spk));
    const std::size_t k = std::min(per_speaker, list.size());
    auto idx = rng.sample_indices(list.size(), k);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.items.push_back(*list[i]);
    out.per_speaker[spk] = k;
    if (list.size() < per_speaker) out.shortfall[spk] = list.size();
  }
  return out;
}

struct AudioQaReport {
  std::size_t sample_size = 0;
  std::size_t effective = 0;
  std::size_t excluded = 0;
  std::map<std::string, std::size_t> per_speaker;
  std::map<std::string, std::size_t> shortfall;
  double wer_mean = 0.0; // percent
  double spkcos_mean = 0.0;
  double quality_mean = 0.0;
  std::vector<std::string> exclusion_reasons;
};

inline void to_json(json &j, const AudioQaReport &r) {
  j = json{{"sample_size", r.sample_size}, {"effective", r.effective},       {"excluded", r.excluded},
           {"per_speaker", r.per_speaker}, {"shortfall", r.shortfall},       {"wer_mean_percent", r.wer_mean},
           {"spkcos_mean", r.spkcos_mean}, {"quality_mean", r.quality_mean}, {"exclusion_reasons", r.exclusion_reasons}};
}

struct QaProviders {
  Transcriber *transcriber = nullptr;
  SpeakerEmbedder *speaker_embedder = nullptr;
  QualityPredictor *quality = nullptr;
};

/// `resolve` maps a stored clip to a readable one (e.g. prefixing a workspace root).
inline AudioQaReport qa_metrics(const QaSample &sample, const std::map<std::string, AudioClip> &references,
                                const QaProviders &providers, std::size_t max_in_flight = 4,
                                const std::function<AudioClip(const AudioClip &)> &resolve = nullptr) {
  require(!sample.items.empty(), "qa_metrics: empty sample");
  require(providers.transcriber && providers.speaker_embedder && providers.quality, "qa_metrics: missing provider");
  struct Item {
    bool ok = false;
    double wer = 0, spkcos = 0, quality = 0;
    std::string error;
  };
  std::vector<Item> items(sample.items.size());
  parallel_for(items.size(), max_in_flight, [&](std::size_t i) {
    const auto &u = sample.items[i];
    auto &it = items[i];
    try {
      const auto clip = resolve ? resolve(u.audio) : u.audio;
      auto ref = references.find(u.reference_utterance_id);
      if (ref == references.end()) throw Error(ErrorKind::not_found, "reference " + u.reference_utterance_id);
      const auto ref_clip = resolve ? resolve(ref->second) : ref->second;
      const auto hyp = providers.transcriber->transcribe(clip, u.language);
      it.wer = text::wer(u.text, hyp);
      it.spkcos = text::cosine(providers.speaker_embedder->speaker_embed(clip),
                               providers.speaker_embedder->speaker_embed(ref_clip));
      it.quality = providers.quality->predict_quality(clip);
      it.ok = true;
    } catch (const std::exception &e) {
      it.error = u.conv_id + "/" + std::to_string(u.turn_index) + ": " + e.what();
    }
  });
  AudioQaReport r;
  r.sample_size = sample.items.size();
  r.per_speaker = sample.per_speaker;
  r.shortfall = sample.shortfall;
  double w = 0, s = 0, q = 0;
  for (const auto &it : items) {
    if (!it.ok) {
      ++r.excluded;
      r.exclusion_reasons.push_back(it.error);
      continue;
    }
    ++r.effective;
    w += it.wer;
    s += it.spkcos;
    q += it.quality;
  }
  if (r.effective) {
    const double n = static_cast<double>(r.effective);
    r.wer_mean = 100.0 * w / n;
    r.spkcos_mean = s / n;
    r.quality_mean = q / n;
  }
  return r;
}

} // namespace forge::speechgen
