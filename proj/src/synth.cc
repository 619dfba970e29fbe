// Copyright 2026 The ReplyBank Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "replybank/synth.h"

#include <cctype>
#include <cmath>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "replybank/common.h"
#include "replybank/corpus.h"
#include "replybank/rng.h"

namespace replybank {

using nlohmann::json;

const std::vector<IntentFamily>& BuiltinIntentFamilies() {
  static const std::vector<IntentFamily> kFamilies = {
      {"symptom_duration", "How long have you {slot} these symptoms for?",
       {"had", "experienced", "noticed"},
       {"I've had a sore throat and a cough",
        "my stomach has been hurting",
        "I have a headache that won't go away", "I keep feeling dizzy"}},
      {"fever_check", "Have you had any fever or chills in the {slot} few days?",
       {"last", "past"},
       {"I feel hot and achy all over", "I'm shivering and feel warm",
        "my body aches and I feel flushed"}},
      {"sleep_advice", "Most adults should aim for 7-9 hours of sleep {slot} night.",
       {"each", "every", "per"},
       {"I only sleep a few hours a night", "how much sleep do I need",
        "I'm always tired in the morning"}},
      {"hydration", "Please make sure you drink plenty of {slot} throughout the day.",
       {"water", "fluids"},
       {"I feel dehydrated", "my lips are dry and I'm thirsty",
        "I haven't been drinking much"}},
      {"allergy_check", "Do you have any allergies to {slot} that I should know about?",
       {"medications", "medicines", "drugs"},
       {"can you prescribe me something", "I need a prescription",
        "what medicine can I take"}},
      {"current_meds", "Are you currently taking any {slot} or supplements right now?",
       {"medications", "medicines", "prescriptions"},
       {"I'm worried about drug interactions",
        "I already take some pills daily",
        "will this interfere with my other pills"}},
      {"see_in_person", "I recommend that you {slot} a doctor in person soon.",
       {"see", "visit"},
       {"the pain is getting much worse",
        "it's been weeks and nothing helps", "I think it might be broken"}},
      {"emergency",
       "If you have chest pain or trouble breathing, please call 911 {slot}!",
       {"immediately", "now"},
       {"my chest feels tight", "I'm short of breath",
        "I have pressure in my chest"}},
      {"signoff", "You are welcome {name}, take care and feel {slot} soon!",
       {"better", "well"},
       {"thanks for your help", "thank you so much doctor",
        "that's all I needed, thanks"}},
      {"greeting", "Hi, this is Dr. {dname} and I will be {slot} you today.",
       {"helping", "assisting", "seeing"},
       {"hello I need some help", "hi is anyone there",
        "good morning I have a question"}},
      {"photo_request", "Could you please send a {slot} of the affected area?",
       {"photo", "picture"},
       {"I have a rash on my arm", "there's a red spot on my leg",
        "my skin is itchy and bumpy"}},
      {"rash_cream",
       "You can apply a thin layer of hydrocortisone cream {slot} daily.",
       {"twice", "once"},
       {"what should I put on the rash", "is there a cream for this itch",
        "how do I treat this rash"}},
      {"ibuprofen", "You can take ibuprofen every six hours as {slot} for pain.",
       {"needed", "required"},
       {"what can I take for the pain", "is there anything for the ache",
        "can I take a painkiller"}},
      {"rest_advice", "Try to get plenty of rest and avoid {slot} activity for now.",
       {"strenuous", "heavy", "intense"},
       {"should I still go to the gym", "can I keep working out",
        "is it ok to exercise"}},
      {"pregnancy", "Is there any chance that you could be {slot} right now?",
       {"pregnant", "expecting"},
       {"I've been feeling nauseous in the mornings", "my period is late",
        "I feel sick every morning"}},
      {"follow_up",
       "Please follow up with us if your symptoms do not {slot} in a few days.",
       {"improve", "resolve", "subside"},
       {"ok I will try that", "alright I'll give it a shot",
        "sounds good, I'll try it"}},
      {"blood_pressure",
       "Do you know what your most recent blood pressure {slot} was?",
       {"reading", "measurement"},
       {"I think my blood pressure is high", "my heart is pounding",
        "I get headaches when I'm stressed"}},
      {"covid_test", "I would recommend getting a COVID test as soon as {slot}.",
       {"possible", "feasible"},
       {"I lost my sense of taste", "my coworker tested positive",
        "I can't smell anything"}},
      {"age_sex", "Can you {slot} me how old you are and your sex?",
       {"tell", "remind"},
       {"I have a question about my health", "I'd like some medical advice",
        "I need to ask a doctor something"}},
      {"pharmacy", "I have sent the prescription to your {slot} pharmacy just now.",
       {"preferred", "usual", "local"},
       {"can you send it to my pharmacy", "where do I pick up the medicine",
        "please send the prescription"}},
      {"bland_diet", "Try to eat {slot} foods like rice and toast for a while.",
       {"bland", "simple", "plain"},
       {"I've been throwing up", "my stomach is upset after eating",
        "I have diarrhea"}},
      {"antihistamine",
       "An over-the-counter antihistamine should {slot} with your allergies.",
       {"help", "assist"},
       {"my eyes are itchy and watery", "I keep sneezing",
        "my nose is runny all the time"}},
      {"stress", "It sounds like stress may be {slot} to how you are feeling.",
       {"contributing", "adding"},
       {"I've been really anxious lately", "work has been overwhelming",
        "I can't stop worrying"}},
      {"ice", "Apply ice to the area for twenty minutes a few times {slot} day.",
       {"per", "each"},
       {"I twisted my ankle", "my knee is swollen",
        "I bumped my wrist and it's puffy"}},
      {"vaccines", "Are you up to date on all of your {slot} vaccinations?",
       {"routine", "recommended"},
       {"I'm planning to travel abroad", "I got bitten by a dog",
        "I stepped on a rusty nail"}},
      {"smoking", "Do you smoke or use any {slot} products at all?",
       {"tobacco", "nicotine"},
       {"I've had a cough for a month", "I get winded climbing stairs",
        "my cough brings up phlegm"}},
      {"lab_results", "Your lab results came back and everything looks {slot} to me.",
       {"normal", "fine", "good"},
       {"did my blood work come back", "any news on my tests",
        "are my results in"}},
      {"urgent_care", "If it gets worse overnight, please go to urgent care {slot}.",
       {"immediately", "promptly"},
       {"what if it gets worse tonight", "should I be worried tonight",
        "what do I do if it gets bad"}},
      {"heartburn", "Try avoiding spicy and {slot} foods before going to bed.",
       {"fatty", "greasy", "acidic"},
       {"I get heartburn after dinner", "my chest burns when I lie down",
        "I have acid reflux"}},
      {"urinary", "Do you feel any burning or {slot} when you urinate?",
       {"pain", "discomfort"},
       {"I have to pee all the time", "it hurts when I go to the bathroom",
        "I think I have a bladder infection"}},
  };
  return kFamilies;
}

namespace {

const std::vector<std::string>& PatientNames() {
  static const std::vector<std::string> kNames = {
      "John", "Maria", "Wei", "Aisha", "Carlos", "Priya", "Sam", "Olga"};
  return kNames;
}

const std::vector<std::string>& DoctorNames() {
  static const std::vector<std::string> kNames = {"Smith", "Okafor", "Nguyen",
                                                  "Garcia"};
  return kNames;
}

const std::vector<std::string>& GenericPatientTurns() {
  static const std::vector<std::string> kTurns = {"ok", "I see", "hmm okay",
                                                  "alright"};
  return kTurns;
}

const std::vector<std::string>& NoiseWords() {
  static const std::vector<std::string> kWords = {
      "let",   "me",      "check", "on",     "that",  "quickly", "hold",
      "give",  "second",  "note",  "chart",  "update", "record", "looking",
      "into",  "details", "just",  "moment", "review", "file"};
  return kWords;
}

void ReplaceAll(std::string& text, std::string_view from, std::string_view to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos;
       pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
}

struct Message {
  Speaker speaker;
  std::string text;
  std::vector<IdentitySpan> spans;
};

// Fills the template; identity placeholders become real names with spans.
Message RenderDoctor(const IntentFamily& family, const std::string& slot,
                     const std::string& patient, const std::string& doctor,
                     Rng& rng) {
  std::string text = family.doctor_template;
  ReplaceAll(text, "{slot}", slot);
  Message message{Speaker::kDoctor, "", {}};
  for (auto [token, name, kind] :
       {std::tuple<std::string_view, const std::string*, Speaker>{
            "{name}", &patient, Speaker::kPatient},
        {"{dname}", &doctor, Speaker::kDoctor}}) {
    const std::size_t pos = text.find(token);
    if (pos == std::string::npos) continue;
    text.replace(pos, token.size(), *name);
    // Templates are ASCII, so byte offsets are code point offsets.
    message.spans.push_back({pos, pos + name->size(), kind});
  }
  switch (rng.UniformIndex(4)) {
    case 0:
      for (char& c : text) c = static_cast<char>(std::tolower(c));
      break;
    case 1:
      text += "!";
      break;
    case 2:
      if (!text.empty() && (text.back() == '.' || text.back() == '?' ||
                            text.back() == '!')) {
        text.pop_back();
      }
      break;
    default:
      break;
  }
  message.text = std::move(text);
  return message;
}

std::size_t PickWeighted(const std::vector<double>& cumulative, Rng& rng) {
  const double draw = rng.UniformReal() * cumulative.back();
  for (std::size_t i = 0; i < cumulative.size(); ++i) {
    if (draw < cumulative[i]) return i;
  }
  return cumulative.size() - 1;
}

}  // namespace

SynthCorpus GenerateSynthCorpus(const SynthConfig& config) {
  const auto& families = BuiltinIntentFamilies();
  if (config.classes < 2 || config.classes > families.size()) {
    throw ValidationError("classes must be between 2 and " +
                          std::to_string(families.size()));
  }
  if (config.conversations < config.classes) {
    throw ValidationError("need at least as many conversations as classes");
  }
  Rng rng(config.seed);
  std::vector<double> cumulative;
  double running = 0;
  for (std::size_t i = 0; i < config.classes; ++i) {
    running += 1.0 / std::sqrt(static_cast<double>(i + 1));
    cumulative.push_back(running);
  }

  std::ostringstream corpus;
  json labels = json::array();
  for (std::size_t c = 0; c < config.conversations; ++c) {
    const std::string id = "conv-" + std::to_string(100000 + c).substr(1);
    const std::string& patient_name =
        PatientNames()[rng.UniformIndex(PatientNames().size())];
    const std::string& doctor_name =
        DoctorNames()[rng.UniformIndex(DoctorNames().size())];
    const std::size_t doctor_turns = 2 + rng.UniformIndex(5);
    std::vector<Message> messages;
    json intents = json::array();
    for (std::size_t t = 0; t < doctor_turns; ++t) {
      // Every intent appears at least once across the corpus.
      const std::size_t intent =
          (c < config.classes && t == 0) ? c : PickWeighted(cumulative, rng);
      const bool noise = !(c < config.classes && t == 0) &&
                         rng.UniformReal() < config.noise_rate;
      const IntentFamily& family = families[intent];

      std::string trigger =
          rng.UniformReal() < config.generic_rate
              ? GenericPatientTurns()[rng.UniformIndex(GenericPatientTurns().size())]
              : family.patient_triggers[rng.UniformIndex(
                    family.patient_triggers.size())];
      if (rng.UniformIndex(5) == 0) {
        messages.push_back({Speaker::kPatient, "one more thing", {}});
      }
      messages.push_back({Speaker::kPatient, trigger, {}});

      if (noise) {
        std::string text;
        for (int w = 0; w < 4; ++w) {
          if (w > 0) text += ' ';
          text += NoiseWords()[rng.UniformIndex(NoiseWords().size())];
        }
        text += " ref " + std::to_string(c * 10 + t);
        messages.push_back({Speaker::kDoctor, text, {}});
        intents.push_back(-1);
      } else {
        const std::string& slot =
            family.slot_options[rng.UniformIndex(family.slot_options.size())];
        messages.push_back(
            RenderDoctor(family, slot, patient_name, doctor_name, rng));
        intents.push_back(static_cast<int>(intent));
      }
    }

    json record_messages = json::array();
    for (const Message& m : messages) {
      json spans = json::array();
      for (const IdentitySpan& s : m.spans) {
        spans.push_back({s.start, s.end, SpeakerName(s.kind)});
      }
      json entry = {{"speaker", SpeakerName(m.speaker)}, {"text", m.text}};
      if (!spans.empty()) entry["pii"] = std::move(spans);
      record_messages.push_back(std::move(entry));
    }
    corpus << json{{"id", id}, {"messages", std::move(record_messages)}}.dump()
           << '\n';
    labels.push_back({{"id", id}, {"doctorIntents", std::move(intents)}});
  }

  json intent_list = json::array();
  for (std::size_t i = 0; i < config.classes; ++i) {
    const IntentFamily& family = families[i];
    json responses = json::array();
    for (const std::string& slot : family.slot_options) {
      std::string text = family.doctor_template;
      ReplaceAll(text, "{slot}", slot);
      ReplaceAll(text, "{name}", kPatientName);
      ReplaceAll(text, "{dname}", kDoctorName);
      responses.push_back(Normalize(text));
    }
    intent_list.push_back({{"intentId", i},
                           {"name", family.name},
                           {"responses", std::move(responses)}});
  }
  const json truth = {{"seed", config.seed},
                      {"classes", config.classes},
                      {"conversations", config.conversations},
                      {"intents", std::move(intent_list)},
                      {"labels", std::move(labels)}};
  return {corpus.str(), truth.dump() + "\n"};
}

void WriteSynthCorpus(const SynthConfig& config, const std::string& path) {
  const SynthCorpus synth = GenerateSynthCorpus(config);
  WriteFileAtomic(path, synth.corpus_jsonl);
  WriteFileAtomic(path + ".truth.json", synth.truth_json);
}

SynthTruth ReadSynthTruth(const std::string& path) {
  SynthTruth truth;
  try {
    const json doc = json::parse(ReadFile(path));
    truth.classes = doc.at("classes").get<std::size_t>();
    for (const json& intent : doc.at("intents")) {
      const int id = intent.at("intentId").get<int>();
      truth.intent_names.push_back(intent.at("name").get<std::string>());
      for (const json& response : intent.at("responses")) {
        truth.response_intents.emplace_back(response.get<std::string>(), id);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed truth sidecar: ") + e.what());
  }
  return truth;
}

}  // namespace replybank
