#include "synthetic.hpp"

#include <algorithm>

#include "remask/text.hpp"

namespace remask::testing {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};

}  // namespace

Lexicon::Lexicon(std::uint64_t seed) : rng_(Rng::stream(seed, "lexicon")) {}

std::string Lexicon::fresh() {
  for (;;) {
    std::string w;
    const std::size_t syllables = 2 + rng_.below(2);
    for (std::size_t i = 0; i < syllables; ++i) {
      w += kOnsets[rng_.below(std::size(kOnsets))];
      w += kVowels[rng_.below(std::size(kVowels))];
    }
    w += kOnsets[rng_.below(std::size(kOnsets))];
    if (is_stopword(w) || std::find(used_.begin(), used_.end(), w) != used_.end()) continue;
    used_.push_back(w);
    return w;
  }
}

std::vector<ArgumentInstance> synthetic_corpus(std::size_t instances, std::uint64_t seed,
                                               std::size_t claims) {
  Lexicon lex(seed);
  std::vector<ArgumentInstance> out;
  for (std::size_t i = 0; i < instances; ++i) {
    ArgumentInstance inst;
    inst.id = "syn-" + std::to_string(i);
    inst.topic = "should we " + lex.fresh() + " the " + lex.fresh();
    inst.stance = i % 2 ? Stance::oppose : Stance::support;
    std::string summary;
    for (std::size_t c = 0; c < claims; ++c) {
      const std::string a = lex.fresh(), b = lex.fresh(), v = lex.fresh(), d = lex.fresh();
      const std::string e1 = lex.fresh(), e2 = lex.fresh(), e3 = lex.fresh(), e4 = lex.fresh();
      const std::string f1 = lex.fresh(), f2 = lex.fresh(), f3 = lex.fresh();
      ClaimUnit unit;
      unit.claim = a + " " + b + " can " + v + " " + d + " .";
      unit.evidence.push_back("the " + e1 + " " + e2 + " showed that " + e3 + " " + e4 + " .");
      unit.evidence.push_back("reports of " + f1 + " " + f2 + " link it to " + f3 + " .");
      inst.claims.push_back(std::move(unit));
      if (!summary.empty()) summary += ' ';
      summary += a + " " + b + " can " + v + " " + e1 + " so " + e3 + " " + f3 + " .";
    }
    inst.reference_summary = summary;
    out.push_back(std::move(inst));
  }
  return out;
}

std::string off_topic_sentence(Lexicon& lexicon) {
  return lexicon.fresh() + " " + lexicon.fresh() + " will " + lexicon.fresh() + " " + lexicon.fresh() + " .";
}

ArgumentInstance vaccine_instance() {
  ArgumentInstance inst;
  inst.id = "vaccines-1";
  inst.topic = "Routine child vaccinations should be mandatory";
  inst.stance = Stance::oppose;
  inst.claims.push_back(
      {"Vaccines or their side effects may be dangerous",
       {"Rotashield was withdrawn after being linked to bowel obstruction",
        "CDC reports rare risks like pneumonia (chickenpox vaccine) and Guillain-Barr\u00e9 Syndrome "
        "(flu vaccine)"}});
  inst.claims.push_back(
      {"Mandatory vaccination violates basic rights",
       {"The First Amendment protects religious freedom",
        "Compulsory vaccination interferes with bodily integrity, violating international human "
        "rights conventions"}});
  inst.reference_summary =
      "Mandatory child vaccinations raise health and ethical concerns. Historical cases like "
      "Rotashield and CDC findings highlight medical risks. Moreover, opponents argue that such "
      "mandates may infringe on personal freedoms and human rights, suggesting vaccination should "
      "remain a personal choice guided by awareness rather than coercion.";
  return inst;
}

}  // namespace remask::testing
