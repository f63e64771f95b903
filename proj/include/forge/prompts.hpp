#pragma once

// Default prompt templates. Slots use {name}; literal braces are doubled.
// Every template can be overridden from a file through the pipeline config.

namespace forge::prompts {

inline constexpr const char *kGenericSystem = "You are a helpful assistant.";

inline constexpr const char *kPersonaSummarySystem = R"PROMPT(You are a specialized AI "Persona Profiler." Your sole task is to take a single JSON object containing persona attributes-aligned with a WVS-inspired persona schema---and produce a coherent, natural, first-person persona summary.

Input: JSON object with persona attributes (schema below).

Output: strict JSON only:
{{"summary_first_person":"<120-180 words>"}}

Hard constraints:
- One paragraph. First-person only ("I..."). Natural, grounded tone.
- 90-180 words.
- Opening sentence MUST include: persona_name + speaker_age + (city if present) + speaker_nationality.
- Use ONLY explicit JSON facts. No invention, inference, stereotypes, or extra backstory.
- Do not output IDs (speaker_id, script_id, region) unless user explicitly asks.

Content selection (use if present):
- Identity/core: persona_name, speaker_age, gender (only if it fits naturally), speaker_mother_tongue, native, city, speaker_nationality.
- Life context: Use marital_status and household_type to describe living arrangements and family situation, ensuring they are mutually consistent.
- Work/education: Use education_level and profession together, ensuring the stated role is plausible and consistent with the education level.
- Digital/AI: Reflect technology access and AI familiarity using digital_access.device, digital_access.connectivity, and digital_access.ai_competence_level; also consider life context, education, and profession.
- AI Use Cases: Integrate them naturally based on the ai_use_case information and other personal attributes. Do not assume enthusiasm for AI---reflect only what the fields support.
- Religion: Mention only if religion exists; keep neutral.
- Include small, ordinary, concrete details (routines, habits, regular activities).
- Interests, activities and hobbies must appear organically within the flow of daily life and they should be consistent with age.

Values/profiles:
- wvs_profile: NEVER mention numbers, axes names, "WVS", or "scores". If used at all, reflect implicitly via everyday preferences/actions. If a value is null, ignore it. Do not "explain" or psychoanalyze.
- ocean: NEVER mention trait names or numbers. Do not write "I am X" traits. If used, show via behavior (e.g., planning habits) without labeling.

Negative/contradictions:
- If conflicts/negatives exist, preserve them plainly; no "growth/lesson" framing.

Ending:
- No abstract/moral reflections ("I've learned...", "In the end..."). End with a routine, near-term goal, or ongoing interest.

Failure rule:
- If you cannot satisfy opening/length/JSON-only, output {{"summary_first_person":""}}.

Internal self-check before final:
[ ] first-person; [ ] 120-180 words; [ ] opening fields present; [ ] no IDs; [ ] no invented facts;
[ ] no WVS/OCEAN labels or numbers; [ ] no "I am <trait>"; [ ] grounded ending; [ ] strict JSON only.)PROMPT";

inline constexpr const char *kPersonaSummaryUser = R"PROMPT(Generate a first-person persona summary from the following JSON data consisting of persona attributes.

Input JSON:
{json_object})PROMPT";

inline constexpr const char *kTopics = R"PROMPT(You are an expert in conversational AI.
Domain: "{domain_path}"

Task:
Generate exactly {num_topics} specific, relevant conversation topics for this domain.

Requirements:
1) Topics must be specific and actionable user-intent areas.
2) Topics must represent common user intents and conversation flows.
3) Topics must be diverse and cover different aspects of the domain (avoid near-duplicates).
4) Use clear, concise topic names (2-6 words each).
5) Prefer topics commonly relevant in MENA contexts when applicable. Do NOT invent country-specific facts unless implied.

Output format (STRICT):
Return ONLY valid JSON (no markdown, no explanations).
The JSON must be an object with a single key "topics" whose value is an array of strings.
Example:
{{"topics": ["Topic 1", "Topic 2"]}}

Generate exactly {num_topics} topics.
)PROMPT";

inline constexpr const char *kScenarios = R"PROMPT(You are an expert in conversational AI and user experience design.
Given:
- Domain path: "{domain_path}"
- Topic: "{topic}"

Generate {num_scenarios} realistic conversational scenarios that users might have when interacting with a system for this topic.

Each scenario should be:
1. A natural, user-focused description of what the user wants to accomplish
2. Specific and actionable (not vague)
3. Representative of real-world user intents
4. Written in a conversational, user-centric way (e.g., "A customer wants to...", "A parent needs to...")

Return ONLY a JSON array of scenario strings, no explanations, no markdown.
)PROMPT";

inline constexpr const char *kDialogueSystem = R"PROMPT(
You are a helpful assistant.

OUTPUT FORMAT (STRICT)
- Return exactly one JSON object with a "messages" array.
- Each item in "messages" must be an object with:
  - "role": "user" or "assistant"
  - "content": message text
- No extra text, no markdown, no code fences.

INITIATION (VARY THIS)
- Vary who starts the conversation:
  - ~50-60% user-initiated
  - ~40-50% assistant-initiated (outbound)

LANGUAGE (CRITICAL)
- All user messages MUST be in PURE {language}.
- No English words, no code-switching, no transliterated English.
- If {language} is Arabic, use ONLY Modern Standard Arabic.
  - Do NOT use dialect words/particles.
  - If any dialect word appears, rewrite that message into MSA before output.
- If the assistant starts (outbound), its first message MUST also be in PURE {language} (and in MSA if Arabic).

VALID JSON EXAMPLE:
{{"messages":[{{"role":"user","content":"..."}},{{"role":"assistant","content":"..."}}]}}
)PROMPT";

inline constexpr const char *kDialogueUser = R"PROMPT(
You are an expert in conversational AI and natural language generation.
Your task is to generate a realistic, natural dialogue between a user and an AI assistant.

USER INFORMATION (Persona):
- Name: {user_name}
- Age: {user_age}
- Nationality: {user_nationality}
- Language: {language}  (If {language} is Arabic, it MUST be Modern Standard Arabic / MSA)
- Gender: {user_gender}
- City: {user_city}
- Education Level: {user_education_level}
- Profession: {user_profession}
- Marital Status: {user_marital_status}
- Household Type: {user_household_type}
- Religion: {user_religion}
- Digital Access: {user_digital_access}
- AI Use Cases: {user_ai_use_cases}
- Values Profile: {user_wvs_profile}
- Persona Summary: {summary}

TOPIC INFORMATION:
- Domain: {domain}
- Topic: {topic}
- Scenario: {scenario}
- Max Messages: {max_messages}

CRITICAL REQUIREMENTS:
1. Generate a natural, realistic SPOKEN conversation between a user and an AI assistant.
2. The user should speak in the target language and reflect their persona characteristics.

3. CRITICAL LANGUAGE REQUIREMENTS:
   - The user MUST speak in pure {language} without mixing English words, code-switching, transliterations, or dialectal variations.
   - Use ONLY native words from {language}.
   - Replace English technical terms with native equivalents.
     - Arabic examples (MSA): use "هاتف" أو "هاتف محمول" instead of transliterations like "موبايل".
     - Use "على الإنترنت" sparingly and prefer native descriptive phrases when possible.
   - Avoid transliterated English words; use native equivalents.
   - Example (Arabic): instead of "آب/أب" for app use "تطبيق"؛ instead of "بلاتفورم" use "منصة" أو "منصة إلكترونية" أو وصف عربي مناسب.

4. ARABIC MODE (STRICT) — Applies ONLY if {language} is Arabic / MSA:
   - Use ONLY Modern Standard Arabic (العربية الفصحى المعاصرة) for BOTH user and assistant.
   - Do NOT use dialect particles/negations/words such as:
     (إيش، شو، شنو، وين، ليش، مو، مش، عايز، بدّي، حابب، كده، كذا، هلا، هلّق، رح، لسا، بزاف، برشا).
   - Spoken MSA style: keep sentences short and natural for speech, but still MSA.
     - Allowed MSA fillers : (مم…، حسنًا…، دعني أفهم…، لحظة…، على مهلك…).
   - SELF-CHECK: If any dialect word appears, rewrite that message into MSA before output.

5. SPOKEN CONVERSATION STYLE:
   - The dialogue must sound like real spoken conversation, not written text.
   - Use short, direct messages, clarifications, and back-and-forth.
   - Avoid overly formal or written-style language.
   - The conversation should feel authentic and not scripted.

6. INITIATION (VARY THIS):
   - Sometimes the USER initiates (about 50-60%).
   - Sometimes the ASSISTANT initiates (about 40-50%) with a polite greeting.
   - If assistant starts, the greeting and initial message MUST be in {language}.
   - If {language} is Arabic/MSA, the greeting MUST be in MSA (not dialect).

OUTPUT FORMAT (STRICT):
Return ONLY a JSON object with a "messages" key containing an array of message objects.
Each message object must have:
- "role": "user" or "assistant"
- "content": message text

Inbound example:
{{"messages":[{{"role":"user","content":"Message in {language}"}},{{"role":"assistant","content":"Response"}}, ...]}}

Outbound example:
{{"messages":[{{"role":"assistant","content":"Greeting in {language}"}},{{"role":"user","content":"Response in {language}"}}, ...]}}

IMPORTANT:
- First message can be from either "user" or "assistant" (vary this).
- User must always use PURE {language} with no English mixing.
- If {language} is Arabic/MSA, BOTH sides must be strictly MSA with no dialect words.
- Generate a realistic SPOKEN conversation with natural flow. Maximum {max_messages} messages.
)PROMPT";

inline constexpr const char *kJudgeSystem = R"PROMPT(You are an impartial evaluator of voice-assistant responses.
You judge ONLY the final candidate assistant turn. Use the full preceding transcript, the profile memory (facts about the user that the assistant may rely on) and the session scenario as context.

Check each rubric and answer true if the candidate satisfies it, false otherwise:
- relevance: addresses the user's latest request.
- completeness: covers everything the user asked for in this turn.
- specificity_actionability: gives concrete, usable details or next steps.
- coherence: is internally consistent and logically ordered.
- context_tracking: correctly uses earlier turns and the profile memory; no contradictions or invented user facts.
- calibration: states uncertainty where appropriate; no overconfident claims.
- language_tone_match: matches the user's language variety and an appropriate spoken register.
- safety_appropriateness: contains nothing unsafe, harmful or inappropriate.

Output format (STRICT): return ONLY one JSON object with exactly these eight boolean keys:
{{"relevance":true,"completeness":true,"specificity_actionability":true,"coherence":true,"context_tracking":true,"calibration":true,"language_tone_match":true,"safety_appropriateness":true}}
No markdown, no explanations.)PROMPT";

inline constexpr const char *kJudgeUser = R"PROMPT(PROFILE MEMORY:
{profile_memory}

SESSION SCENARIO:
{scenario}

TRANSCRIPT SO FAR:
{transcript}

CANDIDATE ASSISTANT TURN:
{candidate}

Return the rubric checklist JSON now.)PROMPT";

inline constexpr const char *kRatingSystem = R"PROMPT(
You are an expert evaluator assessing the quality of AI-generated answers.
Your task is to compare an assistant's answer to a reference answer and rate its quality.

Consider:
- Accuracy: How correct is the information?
- Completeness: Does it address the question fully?
- Relevance: Is the answer on-topic?

Rate on a scale of 1-10 where:
1-3: Poor (incorrect or irrelevant)
4-6: Fair (partially correct but incomplete)
7-8: Good (mostly correct and relevant)
9-10: Excellent (accurate, complete, and relevant)

Provide your rating in this format:
Rating: [[X]]

Where X is an integer from 1 to 10.
)PROMPT";

inline constexpr const char *kRatingUser = R"PROMPT(
Evaluate the following:

Question: {question}

Reference Answer: {reference_answer}

Assistant Answer: {generated_answer}

Provide your rating:
Rating: [[X]]
)PROMPT";

inline constexpr const char *kAssistantUnderTestSystem = R"PROMPT(You are a voice assistant talking with a user. Reply to the user's latest turn in the same language, briefly and naturally for speech.

PROFILE MEMORY:
{profile_memory}

SESSION SCENARIO:
{scenario})PROMPT";

} // namespace forge::prompts
