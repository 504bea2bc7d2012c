#include <string>
#include <string_view>

// Porter stemming, 1980 definition: steps 1a-5b over lowercase words.
// Used as the stem-match stage of the METEOR implementation.

namespace drivesafe::metrics {

namespace {

bool is_cons(const std::string& w, int i) {
  switch (w[static_cast<std::size_t>(i)]) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return false;
    case 'y':
      return i == 0 ? true : !is_cons(w, i - 1);
    default:
      return true;
  }
}

// Number of VC sequences in w[0..end-1].
int measure(const std::string& w, int end) {
  int n = 0;
  int i = 0;
  while (i < end && is_cons(w, i)) ++i;
  while (i < end) {
    while (i < end && !is_cons(w, i)) ++i;
    if (i >= end) break;
    ++n;
    while (i < end && is_cons(w, i)) ++i;
  }
  return n;
}

bool has_vowel(const std::string& w, int end) {
  for (int i = 0; i < end; ++i) {
    if (!is_cons(w, i)) return true;
  }
  return false;
}

bool double_cons_at(const std::string& w, int end) {
  if (end < 2) return false;
  if (w[static_cast<std::size_t>(end - 1)] != w[static_cast<std::size_t>(end - 2)]) return false;
  return is_cons(w, end - 1);
}

// Stem of length `end` ends consonant-vowel-consonant, final consonant
// not w, x, or y.
bool ends_cvc(const std::string& w, int end) {
  if (end < 3) return false;
  if (!is_cons(w, end - 3) || is_cons(w, end - 2) || !is_cons(w, end - 1)) return false;
  const char c = w[static_cast<std::size_t>(end - 1)];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() && std::string_view(w).substr(w.size() - suffix.size()) == suffix;
}

int stem_len(const std::string& w, std::string_view suffix) {
  return static_cast<int>(w.size() - suffix.size());
}

// Replaces `suffix` by `repl` when the remaining stem has measure > min_m.
bool replace_if(std::string& w, std::string_view suffix, std::string_view repl, int min_m) {
  if (!ends_with(w, suffix)) return false;
  const int len = stem_len(w, suffix);
  if (measure(w, len) <= min_m) return true;  // suffix matched, rule condition failed
  w.resize(static_cast<std::size_t>(len));
  w.append(repl);
  return true;
}

void step1a(std::string& w) {
  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ss")) {
    // keep
  } else if (ends_with(w, "s")) {
    w.pop_back();
  }
}

void step1b(std::string& w) {
  if (ends_with(w, "eed")) {
    if (measure(w, stem_len(w, "eed")) > 0) w.pop_back();
    return;
  }
  bool stripped = false;
  if (ends_with(w, "ed") && has_vowel(w, stem_len(w, "ed"))) {
    w.resize(w.size() - 2);
    stripped = true;
  } else if (ends_with(w, "ing") && has_vowel(w, stem_len(w, "ing"))) {
    w.resize(w.size() - 3);
    stripped = true;
  }
  if (!stripped) return;

  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w.push_back('e');
  } else if (double_cons_at(w, static_cast<int>(w.size()))) {
    const char c = w.back();
    if (c != 'l' && c != 's' && c != 'z') w.pop_back();
  } else if (measure(w, static_cast<int>(w.size())) == 1 && ends_cvc(w, static_cast<int>(w.size()))) {
    w.push_back('e');
  }
}

void step1c(std::string& w) {
  if (ends_with(w, "y") && has_vowel(w, static_cast<int>(w.size()) - 1)) {
    w.back() = 'i';
  }
}

void step2(std::string& w) {
  static constexpr std::pair<std::string_view, std::string_view> rules[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
  };
  for (const auto& [suffix, repl] : rules) {
    if (replace_if(w, suffix, repl, 0)) return;
  }
}

void step3(std::string& w) {
  static constexpr std::pair<std::string_view, std::string_view> rules[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""},
  };
  for (const auto& [suffix, repl] : rules) {
    if (replace_if(w, suffix, repl, 0)) return;
  }
}

void step4(std::string& w) {
  static constexpr std::string_view suffixes[] = {
      "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment",
      "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
  };
  for (const auto suffix : suffixes) {
    if (!ends_with(w, suffix)) continue;
    const int len = stem_len(w, suffix);
    if (measure(w, len) > 1) {
      if (suffix == "ion") {
        const char c = len > 0 ? w[static_cast<std::size_t>(len - 1)] : '\0';
        if (c != 's' && c != 't') return;
      }
      w.resize(static_cast<std::size_t>(len));
    }
    return;
  }
}

void step5(std::string& w) {
  if (ends_with(w, "e")) {
    const int len = static_cast<int>(w.size()) - 1;
    const int m = measure(w, len);
    if (m > 1 || (m == 1 && !ends_cvc(w, len))) w.pop_back();
  }
  if (ends_with(w, "ll") && measure(w, static_cast<int>(w.size())) > 1) {
    w.pop_back();
  }
}

}  // namespace

std::string porter_stem(std::string_view word) {
  std::string w(word);
  if (w.size() <= 2) return w;
  for (char c : w) {
    if (c < 'a' || c > 'z') return w;  // digits, punctuation: leave alone
  }
  step1a(w);
  step1b(w);
  step1c(w);
  step2(w);
  step3(w);
  step4(w);
  step5(w);
  return w;
}

}  // namespace drivesafe::metrics
