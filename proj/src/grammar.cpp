#include <array>
#include <string>
#include <vector>

#include "ebgec/corpus.hpp"
#include "ebgec/rng.hpp"

namespace ebgec {

namespace {

struct Subject {
  const char* text;
  bool singular;
  bool first_person;  // "I": plural agreement, "am" for be
};

constexpr std::array<Subject, 18> kSubjects{{
    {"he", true, false},          {"she", true, false},         {"this", true, false},
    {"my brother", true, false},  {"my sister", true, false},   {"the teacher", true, false},
    {"our neighbour", true, false}, {"the company", true, false}, {"the old man", true, false},
    {"his friend", true, false},  {"they", false, false},       {"we", false, false},
    {"you", false, false},        {"I", false, true},           {"my parents", false, false},
    {"the students", false, false}, {"these people", false, false}, {"our friends", false, false},
}};

constexpr std::array<const char*, 20> kAdjectives{
    "tremendous", "serious", "big",     "small",   "interesting", "important", "difficult",
    "strange",    "huge",    "terrible", "excellent", "old",      "new",       "simple",
    "beautiful",  "ugly",    "expensive", "amazing", "unusual",   "honest"};

struct Noun {
  const char* singular;
  const char* plural;
};

constexpr std::array<Noun, 15> kNouns{{
    {"problem", "problems"}, {"idea", "ideas"},       {"car", "cars"},
    {"house", "houses"},     {"dog", "dogs"},         {"question", "questions"},
    {"plan", "plans"},       {"job", "jobs"},         {"garden", "gardens"},
    {"computer", "computers"}, {"book", "books"},     {"opinion", "opinions"},
    {"chance", "chances"},   {"reason", "reasons"},   {"habit", "habits"},
}};

struct AdjectivePhrase {
  const char* adjective;
  const char* preposition;
};

constexpr std::array<AdjectivePhrase, 10> kAdjectivePhrases{{
    {"interested", "in"}, {"afraid", "of"},     {"good", "at"},     {"famous", "for"},
    {"proud", "of"},      {"responsible", "for"}, {"worried", "about"}, {"tired", "of"},
    {"keen", "on"},       {"bad", "at"},
}};

constexpr std::array<const char*, 12> kUncountable{
    "music", "history", "science", "football", "art",   "cooking",
    "politics", "nature", "money", "travel",  "chess", "mathematics"};

struct MotionVerb {
  const char* base;
  const char* third;
  const char* past;
  const char* preposition;
};

constexpr std::array<MotionVerb, 8> kMotionVerbs{{
    {"go", "goes", "went", "to"},       {"arrive", "arrives", "arrived", "at"},
    {"wait", "waits", "waited", "for"}, {"live", "lives", "lived", "in"},
    {"work", "works", "worked", "at"},  {"walk", "walks", "walked", "to"},
    {"look", "looks", "looked", "at"},  {"talk", "talks", "talked", "about"},
}};

constexpr std::array<const char*, 12> kPlaces{
    "station", "school", "office", "park",  "hospital", "library",
    "museum",  "market", "city",   "village", "beach",  "airport"};

constexpr std::array<const char*, 4> kPresentTimes{"every day", "every morning", "on Sundays",
                                                   "after work"};
constexpr std::array<const char*, 4> kPastTimes{"yesterday", "last week", "last night",
                                                "two days ago"};
constexpr std::array<const char*, 7> kIntros{"However", "Fortunately", "Unfortunately", "Usually",
                                             "Sometimes", "Today", "Nowadays"};
constexpr std::array<const char*, 4> kQuantifiers{"many", "some", "two", "three"};

template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& items) {
  return items[uniform_index(rng, N)];
}

bool starts_with_vowel(const std::string& w) {
  return !w.empty() && std::string("aeiou").find(w[0]) != std::string::npos;
}

std::string article_for(const std::string& next) { return starts_with_vowel(next) ? "an" : "a"; }

const Subject& pick_subject(Rng& rng, bool allow_first_person) {
  while (true) {
    const Subject& s = pick(rng, kSubjects);
    if (allow_first_person || !s.first_person) return s;
  }
}

std::string have_form(const Subject& s) { return s.singular ? "has" : "have"; }
std::string be_form(const Subject& s) { return s.first_person ? "am" : (s.singular ? "is" : "are"); }

std::string possession_clause(Rng& rng, const Subject& subj) {
  const Noun& noun = pick(rng, kNouns);
  std::string np;
  if (bernoulli(rng, 0.7)) {
    const std::string adj = pick(rng, kAdjectives);
    np = article_for(adj) + " " + adj + " " + noun.singular;
  } else {
    np = article_for(noun.singular) + " " + noun.singular;
  }
  return std::string(subj.text) + " " + have_form(subj) + " " + np;
}

std::string attitude_clause(Rng& rng, const Subject& subj) {
  const AdjectivePhrase& ap = pick(rng, kAdjectivePhrases);
  return std::string(subj.text) + " " + be_form(subj) + " " + ap.adjective + " " + ap.preposition +
         " " + pick(rng, kUncountable);
}

std::string motion_clause(Rng& rng, const Subject& subj) {
  const MotionVerb& v = pick(rng, kMotionVerbs);
  std::string out = std::string(subj.text) + " " + (subj.singular ? v.third : v.base) + " " +
                    v.preposition + " the " + pick(rng, kPlaces);
  if (bernoulli(rng, 0.5)) out += std::string(" ") + pick(rng, kPresentTimes);
  return out;
}

std::string past_clause(Rng& rng, const Subject& subj) {
  const MotionVerb& v = pick(rng, kMotionVerbs);
  return std::string(subj.text) + " " + v.past + " " + v.preposition + " the " +
         pick(rng, kPlaces) + " " + pick(rng, kPastTimes);
}

std::string existential_clause(Rng& rng) {
  const Noun& noun = pick(rng, kNouns);
  const std::string place = pick(rng, kPlaces);
  if (bernoulli(rng, 0.5)) {
    return std::string("there is ") + article_for(noun.singular) + " " + noun.singular + " in the " + place;
  }
  return std::string("there are ") + pick(rng, kQuantifiers) + " " + noun.plural + " in the " + place;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string clause(Rng& rng) {
  switch (uniform_index(rng, 5)) {
    case 0: return possession_clause(rng, pick_subject(rng, true));
    case 1: return attitude_clause(rng, pick_subject(rng, false));
    case 2: return motion_clause(rng, pick_subject(rng, true));
    case 3: return past_clause(rng, pick_subject(rng, true));
    default: return existential_clause(rng);
  }
}

}  // namespace

std::vector<std::string> synthesize_clean_sentences(std::size_t count, std::uint64_t seed) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_rng(seed, i);
    std::string sentence;
    if (bernoulli(rng, 0.2)) {
      sentence = std::string(pick(rng, kIntros)) + " , " + clause(rng) + " .";
    } else {
      sentence = capitalize(clause(rng)) + " .";
    }
    out.push_back(std::move(sentence));
  }
  return out;
}

}  // namespace ebgec
