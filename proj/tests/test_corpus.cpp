#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "monomt/corpus.hpp"
#include "monomt/util.hpp"

using namespace monomt;

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("derived seeds depend on the stage name only") {
  CHECK(derive_seed(1, "baseline") == derive_seed(1, "baseline"));
  CHECK(derive_seed(1, "baseline") != derive_seed(1, "synth"));
  CHECK(derive_seed(1, "baseline") != derive_seed(2, "baseline"));
}

TEST_CASE("rng below stays in range and is roughly uniform") {
  Rng rng(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto v = rng.below(5);
    REQUIRE(v < 5);
    ++counts[v];
  }
  for (int c : counts) CHECK(c > 850);
  CHECK_THROWS(rng.below(0));
}

TEST_CASE("utf8 characters") {
  const auto c = utf8_chars("aé€");
  REQUIRE(c.size() == 3);
  CHECK(c[1] == "é");
  CHECK(c[2] == "€");
}

TEST_CASE("tokens reject empty and whitespace surfaces") {
  CHECK_THROWS_AS(Token::make(""), DataError);
  CHECK_THROWS_AS(Token::make("a b"), DataError);
  CHECK(Token::make("@trg@x").marked);
  CHECK_FALSE(Token::make("x").marked);
}

TEST_CASE("sentence parse and str") {
  const auto s = Sentence::parse("  the  cat\tsat ");
  CHECK(s.size() == 3);
  CHECK(s.str() == "the cat sat");
}

TEST_CASE("vocabulary build orders by frequency then lexicographically") {
  const auto v = Vocabulary::build(testing::corpus({"b a c", "a b", "a d"}));
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v.token(Vocabulary::kEos) == "</s>");
  CHECK(v.token(Vocabulary::kDummy) == "<dummy>");
  CHECK(v.token(4) == "a");
  CHECK(v.token(5) == "b");
  CHECK(v.token(6) == "c");
  CHECK(v.token(7) == "d");
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  const auto v2 = Vocabulary::build(testing::corpus({"b a c", "a b", "a d"}), 2);
  CHECK(v2.size() == 6);
}

TEST_CASE("marked and unmarked namespaces never collide") {
  Vocabulary v;
  v.add("cat");
  CHECK(v.add("@trg@cat", true) != v.id("cat"));
  CHECK_THROWS_AS(v.add("@trg@dog", false), DataError);
  CHECK_THROWS_AS(v.add("dog", true), DataError);
  CHECK(v.is_marked(v.id("@trg@cat")));
}

TEST_CASE("vocabulary serialization round trip") {
  Vocabulary v = Vocabulary::build(testing::corpus({"x y z", "x"}));
  v.add("@trg@q", true);
  const auto back = Vocabulary::deserialize(v.serialize());
  CHECK(back == v);
  CHECK(back.hash() == v.hash());
  CHECK(back.is_marked(back.id("@trg@q")));
}

TEST_CASE("encode and decode") {
  const auto v = Vocabulary::build(testing::corpus({"a b"}));
  const auto ids = v.encode(Sentence::parse("a q b"));
  CHECK(ids == std::vector<std::int32_t>{v.id("a"), Vocabulary::kUnk, v.id("b")});
  CHECK(v.decode(ids).str() == "a <unk> b");
}

TEST_CASE("corpus loading errors name the line") {
  const auto dir = testing::scratch_dir("corpus");
  write_file(dir + "/bad.txt", "a b\n\nc\n");
  try {
    load_corpus(dir + "/bad.txt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  write_file(dir + "/empty.txt", "");
  CHECK_THROWS_AS(load_corpus(dir + "/empty.txt"), DataError);
  CHECK_THROWS_AS(load_corpus(dir + "/missing.txt"), Error);
}

TEST_CASE("provenance tags round trip") {
  for (const auto& p : {Provenance::natural(), Provenance::back_translated("good"), Provenance::forward_translated("x"),
                        Provenance::of(Provenance::Kind::Copy), Provenance::of(Provenance::Kind::CopyMarked),
                        Provenance::of(Provenance::Kind::CopyDummies),
                        Provenance::of(Provenance::Kind::CopyMarked).with_noise()}) {
    CHECK(Provenance::parse(p.tag()) == p);
  }
  CHECK(Provenance::of(Provenance::Kind::CopyMarked).with_noise().tag() == "noised(copy-marked)");
}

TEST_CASE("parallel TSV round trip keeps provenance") {
  auto p = testing::parallel({{"a b", "x y"}, {"c", "z"}});
  p.pairs[1].provenance = Provenance::back_translated("sys");
  const auto back = parse_parallel(serialize_parallel(p));
  CHECK(back == p);
}

TEST_CASE("mix_equal takes an equal-size out-of-domain sample") {
  auto in = testing::parallel({{"i1", "t1"}, {"i2", "t2"}});
  auto out = testing::parallel({{"o1", "u1"}, {"o2", "u2"}, {"o3", "u3"}});
  const auto m = mix_equal(in, out, 5);
  CHECK(m.size() == 4);
  std::size_t from_in = 0;
  for (const auto& p : m.pairs) from_in += p.source.str()[0] == 'i';
  CHECK(from_in == 2);
  CHECK(mix_equal(in, out, 5) == m);
  CHECK_THROWS_AS(mix_equal(out, in, 5), DataError);
}

TEST_CASE("parallel validation rejects empty sides") {
  ParallelCorpus p;
  p.pairs.push_back({Sentence::parse("a"), Sentence{}, Provenance::natural()});
  CHECK_THROWS_AS(p.validate(), DataError);
}
