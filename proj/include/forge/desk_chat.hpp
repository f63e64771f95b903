#pragma once

#include <cctype>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/providers.hpp"
#include "forge/rng.hpp"

namespace forge::mock {

/// Offline stand-in for every chat role the pipeline uses. It recognizes the
/// default prompt templates and answers each with well-formed, deterministic
/// output: persona summaries, topics, scenarios, MSA dialogues, model-under-
/// test replies, rubric verdicts and 1-10 ratings.
class DeskChat final : public ChatProvider {
public:
  /// user_start_percent: share of dialogues the user opens.
  explicit DeskChat(int user_start_percent = 55) : user_start_(user_start_percent) {}

  std::string complete(const ChatRequest &req) override {
    req.validate();
    const auto &sys = req.system_prompt;
    const auto &usr = req.user_prompt;
    if (contains(sys, "Persona Profiler")) return summary(usr);
    if (contains(usr, "conversation topics for this domain")) return topics(usr);
    if (contains(usr, "realistic conversational scenarios")) return scenarios(usr);
    if (contains(usr, "USER INFORMATION (Persona)")) return dialogue(usr);
    if (contains(sys, "impartial evaluator")) return verdict(usr);
    if (contains(sys, "rate its quality")) return rating(usr);
    if (contains(sys, "You are a voice assistant")) return assistant_reply(req);
    throw Error(ErrorKind::precondition, "desk chat: unrecognized request");
  }

private:
  using json = nlohmann::json;

  static bool contains(const std::string &s, const char *needle) { return s.find(needle) != std::string::npos; }

  static std::string between(const std::string &s, const std::string &open, const std::string &close) {
    const auto a = s.find(open);
    if (a == std::string::npos) return {};
    const auto b = s.find(close, a + open.size());
    if (b == std::string::npos) return {};
    return s.substr(a + open.size(), b - a - open.size());
  }

  static std::size_t count_after(const std::string &s, const std::string &marker) {
    const auto a = s.find(marker);
    if (a == std::string::npos) return 0;
    return static_cast<std::size_t>(std::strtoul(s.c_str() + a + marker.size(), nullptr, 10));
  }

  static std::string article(const std::string &word) {
    return !word.empty() && std::string("AEIOUaeiou").find(word[0]) != std::string::npos ? "an" : "a";
  }

  static std::string lower(std::string s) {
    for (auto &c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

  static std::string summary(const std::string &usr) {
    const auto pos = usr.find('{');
    auto in = json::parse(usr.substr(pos == std::string::npos ? usr.size() : pos), nullptr, false);
    if (in.is_discarded() || !in.is_object()) return R"({"summary_first_person":""})";
    auto str = [&](const char *k) { return in.contains(k) && in[k].is_string() ? in[k].get<std::string>() : ""; };
    const auto name = str("persona_name");
    const auto nationality = str("speaker_nationality");
    const auto profession = str("profession");
    const auto city = str("city");
    auto tongue = str("speaker_mother_tongue");
    tongue = tongue.substr(0, tongue.find(" ("));
    auto household = str("household_type");
    if (household.rfind("lives ", 0) == 0) household = "live " + household.substr(6);
    if (household.rfind("shares ", 0) == 0) household = "share " + household.substr(7);
    const auto da = in.value("digital_access", json::object());
    const auto device = da.value("device", "phone");
    const auto connectivity = da.value("connectivity", "connection");
    const auto competence = da.value("ai_competence_level", "beginner");
    std::vector<std::string> uses;
    for (const auto &u : in.value("ai_use_case", json::array()))
      if (u.is_string()) uses.push_back(u.get<std::string>());
    std::string use_text = uses.empty() ? "small everyday questions" : uses[0];
    for (std::size_t i = 1; i < uses.size(); ++i) use_text += (i + 1 == uses.size() ? " and " : ", ") + uses[i];

    const auto h = fnv1a(name + city + profession);
    static const std::vector<std::string> weekends{
        "On weekends I usually visit the market near my home and cook a simple lunch.",
        "On weekends I usually meet a few friends for a long walk and a cup of tea.",
        "On weekends I usually tidy my room, call my relatives and read for a while.",
    };
    static const std::vector<std::string> endings{
        "Next week I plan to sort my notes for a small project at work.",
        "This month I want to try a new recipe with whatever is fresh at the market.",
        "Soon I hope to finish reading the book that has been waiting on my shelf.",
    };
    std::string t = "My name is " + name + ", I am " + std::to_string(in.value("speaker_age", 0)) +
                    " years old, and I am " + article(nationality) + " " + nationality + " " + profession +
                    " living in " + city + ". ";
    t += "I grew up speaking " + tongue + " at home, and my education level is " + str("education_level") + ". ";
    t += "I am " + str("marital_status") + ", and these days I " + household + ". ";
    t += "Every morning I check messages on my " + device + " before work, and my " + connectivity +
         " is usually enough for short calls. ";
    t += "I would describe my comfort with AI tools as " + competence + ". I mostly use them for " + use_text +
         " when my day gets busy, and I still check the answers myself. ";
    t += weekends[h % weekends.size()] + " ";
    t += endings[(h >> 8) % endings.size()];
    return json{{"summary_first_person", t}}.dump();
  }

  static std::string topics(const std::string &usr) {
    static const std::vector<std::string> aspects{
        "Comparing available options", "Understanding fees and costs", "Fixing common problems",
        "Meeting important deadlines", "Preparing required documents", "Setting up a new account",
        "Staying safe online",         "Cancelling or changing plans", "Tracking request status",
        "Checking eligibility rules",  "Saving money each month",      "Getting personal recommendations"};
    const auto domain = between(usr, "Domain: \"", "\"");
    const auto n = count_after(usr, "Generate exactly ");
    json out = json::array();
    const auto start = fnv1a(domain) % aspects.size();
    for (std::size_t i = 0; i < n; ++i) out.push_back(aspects[(start + i) % aspects.size()]);
    return json{{"topics", out}}.dump();
  }

  static std::string scenarios(const std::string &usr) {
    static const std::vector<std::string> actors{
        "A university student", "A busy parent",     "A retired teacher",  "A small business owner",
        "A new resident",       "A night shift nurse", "A first-time user", "A freelance designer",
        "An elderly neighbor",  "A young couple"};
    static const std::vector<std::string> goals{
        "wants help with",       "needs quick advice about", "is unsure how to handle",
        "asks for a clear plan for", "must sort out",        "wants to understand"};
    static const std::vector<std::string> tails{
        "before the weekend", "without spending too much", "while travelling", "after a long workday",
        "for the first time", "on a tight schedule"};
    const auto domain = between(usr, "Domain path: \"", "\"");
    const auto topic = between(usr, "Topic: \"", "\"");
    const auto n = count_after(usr, "Generate ");
    const auto leaf = domain.substr(domain.rfind('>') == std::string::npos ? 0 : domain.rfind('>') + 2);
    const auto h = fnv1a(domain + "|" + topic);
    json out = json::array();
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(actors[(h + i) % actors.size()] + " " + goals[(h / 7 + i) % goals.size()] + " " + lower(topic) +
                    " related to " + lower(leaf) + " " + tails[(h / 13 + i) % tails.size()] + ".");
    return out.dump();
  }

  std::string dialogue(const std::string &usr) const {
    static const std::vector<std::string> user_lines{
        "مرحبا، أحتاج إلى مساعدة في هذا الموضوع من فضلك.",
        "أريد أن أعرف الخطوات المطلوبة بالتفصيل.",
        "هل يمكنك أن تشرح لي الخيار الأفضل في حالتي؟",
        "وما المدة التي يستغرقها ذلك عادة؟",
        "حسنا، وهل توجد تكلفة إضافية يجب أن أنتبه إليها؟",
        "شكرا جزيلا، سأجرب هذه الطريقة اليوم.",
        "فهمت، وماذا أفعل إذا واجهت مشكلة؟",
        "لحظة، دعني أكتب هذه الملاحظات أولا.",
    };
    static const std::vector<std::string> assistant_lines{
        "بكل سرور، دعني أوضح لك الخطوات الأساسية.",
        "الخطوة الأولى هي تحديد ما تحتاجه بدقة، ثم مقارنة الخيارات المتاحة.",
        "يستغرق ذلك عادة وقتا قصيرا إذا كانت المعلومات جاهزة.",
        "لا توجد تكلفة إضافية في الغالب، لكن راجع الشروط قبل التأكيد.",
        "إذا واجهت مشكلة، يمكنك التواصل مع خدمة العملاء أو العودة إلي.",
        "خذ وقتك، وأنا هنا عندما تكون مستعدا.",
    };
    const std::string language = between(usr, "- Language: ", "  (");
    const auto max = std::max<std::size_t>(2, count_after(usr, "- Max Messages: "));
    const auto h = fnv1a(usr);
    const bool user_first = static_cast<int>(h % 100) < user_start_;
    const std::size_t n = std::min<std::size_t>(max, 4 + (h >> 16) % 4);
    const bool english = language == "English";
    json msgs = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      const bool user = (i % 2 == 0) == user_first;
      std::string text;
      if (english)
        text = user ? "Hello, I need some help with this, please." : "Of course, here are the main steps.";
      else if (!user && i == 0)
        text = "السلام عليكم، كيف يمكنني مساعدتك اليوم؟";
      else if (user)
        text = user_lines[(h / 3 + i) % user_lines.size()];
      else
        text = assistant_lines[(h / 5 + i) % assistant_lines.size()];
      msgs.push_back({{"role", user ? "user" : "assistant"}, {"content", text}});
    }
    return json{{"messages", msgs}}.dump();
  }

  static std::string verdict(const std::string &usr) {
    const auto h = fnv1a(usr);
    return json{{"relevance", true},
                {"completeness", h % 7 != 0},
                {"specificity_actionability", h % 5 != 0},
                {"coherence", true},
                {"context_tracking", h % 11 != 0},
                {"calibration", true},
                {"language_tone_match", true},
                {"safety_appropriateness", true}}
        .dump();
  }

  static std::string rating(const std::string &usr) {
    return "Rating: [[" + std::to_string(6 + fnv1a(usr) % 5) + "]]";
  }

  static std::string assistant_reply(const ChatRequest &req) {
    static const std::vector<std::string> replies{
        "حسنا، سأساعدك في ذلك خطوة بخطوة.",
        "أفهم طلبك، وأقترح أن نبدأ بتحديد الأولويات.",
        "هذا ممكن، وسأوضح لك الخيارات المتاحة باختصار.",
        "شكرا على التوضيح، إليك ما يمكنك فعله الآن.",
    };
    std::string key = std::to_string(req.messages.size());
    if (!req.messages.empty()) {
      const auto &m = req.messages.back();
      key += m.audio ? m.audio->uri + m.audio->payload : m.content;
    }
    return replies[fnv1a(key) % replies.size()];
  }

  int user_start_;
};

} // namespace forge::mock
