#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "monomt/synth.hpp"

using namespace monomt;

namespace {

Vocabulary vocab_of(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

class Reverse : public Translator {
 public:
  Sentence translate(const Sentence& s) const override {
    Sentence out = s;
    std::reverse(out.tokens.begin(), out.tokens.end());
    return out;
  }
  std::string system_id() const override { return "rev"; }
};

}  // namespace

TEST_CASE("segmentation keeps known tokens and splits unknown ones by longest match") {
  const auto v = vocab_of({"cat", "ca@@", "c@@", "a@@", "t", "s", "dog"});
  CHECK(segment_token("cat", v) == std::vector<std::string>{"cat"});
  // Non-final pieces carry the continuation suffix.
  const auto pieces = segment_token("cats", v);
  CHECK(pieces == std::vector<std::string>{"cat@@", "s"});
  CHECK(segment_token("x", v) == std::vector<std::string>{"<unk>"});
}

TEST_CASE("greedy longest match on a hand-run example") {
  const auto v = vocab_of({"re", "sume", "r", "e"});
  CHECK(segment_sentence(Sentence::parse("resume"), v).str() == "re@@ sume");
  CHECK(segment_token("ß", v) == std::vector<std::string>{"<unk>"});
}

TEST_CASE("character inventory makes every segmentation in-vocabulary") {
  Vocabulary v = vocab_of({"abc"});
  add_character_inventory(v, testing::corpus({"abc xyz"}));
  for (const auto& piece : segment_sentence(Sentence::parse("zyx cab q"), v).words()) {
    if (piece == "<unk>") continue;
    CHECK(v.contains(piece));
  }
  CHECK(segment_sentence(Sentence::parse("zyx"), v).str() == "z@@ y@@ x");
}

TEST_CASE("copy pairs the target with its segmented self") {
  const auto v = vocab_of({"a", "b"});
  const auto c = make_copy(testing::corpus({"a b"}), v);
  REQUIRE(c.size() == 1);
  CHECK(c.pairs[0].source == c.pairs[0].target);
  CHECK(c.pairs[0].provenance.tag() == "copy");
}

TEST_CASE("copy-marked prefixes every token and reports the extension") {
  const auto v = vocab_of({"a"});
  const auto r = make_copy_marked(testing::corpus({"a b a"}), v);
  CHECK(r.corpus.pairs[0].source.str() == "@trg@a @trg@b @trg@a");
  for (const auto& t : r.corpus.pairs[0].source.tokens) CHECK(t.marked);
  CHECK(r.extension == std::vector<std::string>{"@trg@a", "@trg@b"});
  Vocabulary ext = v;
  CHECK(extend_vocabulary(ext, r.extension) == 2);
  CHECK(extend_vocabulary(ext, r.extension) == 0);
}

TEST_CASE("copy-marked with a custom marker") {
  const auto r = make_copy_marked(testing::corpus({"resume"}), vocab_of({"resume"}), "@fr@");
  CHECK(r.corpus.pairs[0].source.str() == "@fr@resume");
  CHECK(make_copy_marked(Corpus{}, vocab_of({"a"})).extension.empty());
}

TEST_CASE("copy-marked errors") {
  CHECK_THROWS_AS(make_copy_marked(testing::corpus({"a"}), vocab_of({"a"}), ""), DataError);
  CHECK_THROWS_AS(make_copy_marked(testing::corpus({"a"}), vocab_of({"@x@y"}), "@x@"), DataError);
  CHECK_THROWS_AS(make_copy_marked(testing::corpus({"@trg@a"}), vocab_of({"a"})), DataError);
}

TEST_CASE("copy-dummies keeps the target length") {
  const auto c = make_copy_dummies(testing::corpus({"a b c"}));
  CHECK(c.pairs[0].source.str() == "<dummy> <dummy> <dummy>");
  CHECK(Vocabulary().id("<dummy>") == Vocabulary::kDummy);
}

TEST_CASE("bounded permutation moves no element more than k positions") {
  Rng rng(11);
  for (std::size_t k : {0u, 1u, 3u}) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto perm = bounded_permutation(12, k, rng);
      std::vector<std::size_t> sorted = perm;
      std::sort(sorted.begin(), sorted.end());
      std::vector<std::size_t> ident(12);
      std::iota(ident.begin(), ident.end(), 0);
      REQUIRE(sorted == ident);
      for (std::size_t pos = 0; pos < perm.size(); ++pos) {
        const auto d = perm[pos] > pos ? perm[pos] - pos : pos - perm[pos];
        CHECK(d <= k);
      }
    }
  }
}

TEST_CASE("noise never empties a sentence and is deterministic") {
  NoiseSpec spec{.p_drop = 1.0, .k = 3, .seed = 4};
  const auto s = Sentence::parse("a b c d");
  CHECK(add_noise(s, spec, 0).size() == 1);
  spec.p_drop = 0.1;
  CHECK(add_noise(s, spec, 7) == add_noise(s, spec, 7));
  spec.p_drop = 0.0;
  spec.k = 0;
  CHECK(add_noise(s, spec, 3) == s);
  CHECK_THROWS_AS((NoiseSpec{.p_drop = 1.5}.validate()), DataError);
}

TEST_CASE("noise drop rate matches p_drop") {
  NoiseSpec spec{.p_drop = 0.1, .k = 3, .seed = 9};
  std::vector<std::string> words(20);
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = "w" + std::to_string(i);
  const auto s = Sentence::from_words(words);
  std::size_t kept = 0, total = 0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    kept += add_noise(s, spec, i).size();
    total += s.size();
  }
  const double drop = 1.0 - static_cast<double>(kept) / static_cast<double>(total);
  // Binomial standard error at n = 40000 is 0.0015.
  CHECK(std::abs(drop - 0.1) < 0.006);
}

TEST_CASE("per-token survival rate over 10k samples") {
  NoiseSpec spec{.p_drop = 0.1, .k = 3, .seed = 21};
  const auto s = Sentence::parse("t0 t1 t2 t3 t4 t5 t6 t7 t8 t9");
  std::vector<std::size_t> survived(10, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    for (const auto& w : add_noise(s, spec, i).words()) ++survived[static_cast<std::size_t>(w[1] - '0')];
  }
  for (auto c : survived) CHECK(std::abs(static_cast<double>(c) / 10000.0 - 0.9) <= 0.02);
}

TEST_CASE("noise_sources tags provenance and refuses double noise") {
  const auto c = make_copy_dummies(testing::corpus({"a b"}));
  const auto n = noise_sources(c, NoiseSpec{});
  CHECK(n.pairs[0].provenance.tag() == "noised(copy-dummies)");
  CHECK(n.pairs[0].target == c.pairs[0].target);
  CHECK_THROWS_AS(noise_sources(n, NoiseSpec{}), DataError);
}

TEST_CASE("rule-based translator substitutes, reorders and expands") {
  RuleBasedTranslator::Table t{{"big", {"gros"}}, {"dog", {"chien", "x"}}, {"the", {}}, {"a", {"un"}}};
  ReorderRule rule{{"big"}, {"dog"}};
  RuleBasedTranslator tr("r", t, {rule});
  CHECK(tr.translate(Sentence::parse("the big dog")).str() == "chien x gros");
  CHECK(tr.translate(Sentence::parse("a cat")).str() == "un <unk>");
  const auto dir = testing::scratch_dir("synth");
  write_file(dir + "/t.tsv", tr.serialize());
  CHECK(RuleBasedTranslator::load(dir + "/t.tsv", "r").table() == t);
}

TEST_CASE("degraded translator is a pure function of seed and sentence") {
  auto base = std::make_shared<RuleBasedTranslator>(RuleBasedTranslator::identity({"a", "b", "c", "d"}));
  DegradedTranslator d(base, 0.5, 3);
  const auto s = Sentence::parse("a b c d a b c d");
  CHECK(d.translate(s) == d.translate(s));
  CHECK(d.translate(s).size() == s.size());
  CHECK(DegradedTranslator(base, 0.0, 3).translate(s) == s);
  CHECK(DegradedTranslator(base, 1.0, 3, ErrorMode::Delete).translate(s).empty());
  CHECK_THROWS_AS(DegradedTranslator(base, 2.0, 3), DataError);
}

TEST_CASE("back and forward translation pair sides and drop empty outputs") {
  Reverse rev;
  const auto bt = back_translate(testing::corpus({"a b", "c"}), rev);
  CHECK(bt.corpus.pairs[0].source.str() == "b a");
  CHECK(bt.corpus.pairs[0].target.str() == "a b");
  CHECK(bt.corpus.pairs[0].provenance.tag() == "backtrans(rev)");
  const auto ft = forward_translate(testing::corpus({"a b"}), rev);
  CHECK(ft.corpus.pairs[0].source.str() == "a b");
  CHECK(ft.corpus.pairs[0].target.str() == "b a");

  auto base = std::make_shared<RuleBasedTranslator>(RuleBasedTranslator::identity({"a"}));
  DegradedTranslator empty(base, 1.0, 1, ErrorMode::Delete);
  const auto r = back_translate(testing::corpus({"a", "a a"}), empty);
  CHECK(r.dropped == 2);
  CHECK(r.corpus.empty());
}
