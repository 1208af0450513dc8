#include <cmath>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "monomt/eval.hpp"

using namespace monomt;

namespace {

std::vector<std::string> toks(const std::string& s) { return Sentence::parse(s).words(); }

std::vector<std::vector<std::string>> lines(const std::vector<std::string>& v) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : v) out.push_back(toks(s));
  return out;
}

nlohmann::json fixtures() {
  std::ifstream in(std::string(MONOMT_TEST_DATA) + "/bleu_fixtures.json");
  REQUIRE(in);
  return nlohmann::json::parse(in).at("fixtures");
}

}  // namespace

TEST_CASE("identical hypotheses score 100") {
  const auto h = lines({"the cat sat on the mat", "a b c d e", "x y"});
  const auto r = corpus_bleu(h, h);
  CHECK(r.score == 100.0);
  CHECK(r.brevity_penalty == 1.0);
  for (double p : r.precisions) CHECK(p == 1.0);
}

TEST_CASE("clipped unigram precision") {
  // Clipping caps each hypothesis count at the reference count.
  const auto r = corpus_bleu(lines({"the the the the"}), lines({"the cat"}));
  CHECK(r.matches[0] == 1);
  CHECK(r.totals[0] == 4);
  CHECK(r.precisions[0] == 0.25);
  const auto r2 = corpus_bleu(lines({"the the the the"}), lines({"the cat is on the mat"}));
  CHECK(r2.precisions[0] == 0.5);
  CHECK(r2.score == 0.0);
}

TEST_CASE("brevity penalty and hand-computed score") {
  // 4 of 5 unigrams, 3 of 4 bigrams, 2 of 3 trigrams, 1 of 2 four-grams.
  const auto r = corpus_bleu(lines({"a b c d x"}), lines({"a b c d e f"}));
  CHECK(r.hyp_len == 5);
  CHECK(r.ref_len == 6);
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 6.0 / 5.0)));
  const double expect =
      100.0 * std::exp(1.0 - 6.0 / 5.0) * std::exp((std::log(0.8) + std::log(0.75) + std::log(2.0 / 3.0) + std::log(0.5)) / 4.0);
  CHECK(r.score == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("add-one smoothing only affects orders without matches") {
  const auto h = lines({"a b x c"});
  const auto ref = lines({"a b y c"});
  CHECK(corpus_bleu(h, ref).score == 0.0);
  const auto s = corpus_bleu(h, ref, Smoothing::AddOneOnZero);
  // p1 = 3/4, p2 = 1/3, p3 = 1/(2+1), p4 = 1/(1+1).
  const double expect = 100.0 * std::exp((std::log(0.75) + std::log(1.0 / 3.0) + std::log(1.0 / 3.0) + std::log(0.5)) / 4.0);
  CHECK(s.score == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bleu errors") {
  CHECK_THROWS_AS(corpus_bleu(lines({"a"}), lines({"a", "b"})), DataError);
  CHECK_THROWS_AS(corpus_bleu(std::vector<std::vector<std::string>>{}, std::vector<std::vector<std::string>>{}),
                  DataError);
}

TEST_CASE("corpus bleu matches the committed reference scores") {
  const auto fx = fixtures();
  REQUIRE(fx.size() == 20);
  for (const auto& f : fx) {
    CAPTURE(f.at("seed").get<int>());
    const auto r = corpus_bleu(lines(f.at("hypotheses").get<std::vector<std::string>>()),
                               lines(f.at("references").get<std::vector<std::string>>()));
    CHECK(std::abs(r.score - f.at("bleu").get<double>()) < 0.01);
    CHECK(r.hyp_len == f.at("hyp_len").get<std::size_t>());
    CHECK(r.ref_len == f.at("ref_len").get<std::size_t>());
    CHECK(r.brevity_penalty == doctest::Approx(f.at("brevity_penalty").get<double>()).epsilon(1e-9));
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(r.precisions[n] == doctest::Approx(f.at("precisions")[n].get<double>()).epsilon(1e-9));
    }
  }
}

TEST_CASE("bleu is invariant to the order of sentence pairs") {
  for (const auto& f : fixtures()) {
    auto h = lines(f.at("hypotheses").get<std::vector<std::string>>());
    auto r = lines(f.at("references").get<std::vector<std::string>>());
    const double before = corpus_bleu(h, r).score;
    std::reverse(h.begin(), h.end());
    std::reverse(r.begin(), r.end());
    CHECK(corpus_bleu(h, r).score == doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("corrupting a hypothesis token never raises the score on the fixtures") {
  for (const auto& f : fixtures()) {
    auto h = lines(f.at("hypotheses").get<std::vector<std::string>>());
    const auto r = lines(f.at("references").get<std::vector<std::string>>());
    const double before = corpus_bleu(h, r).score;
    for (auto& s : h) {
      if (s.empty()) continue;
      s[s.size() / 2] = "<corrupt>";
      break;
    }
    CHECK(corpus_bleu(h, r).score <= before);
  }
}

TEST_CASE("token lines keep blank hypotheses") {
  const auto dir = testing::scratch_dir("eval");
  write_file(dir + "/h.txt", "a b\n\nc\n");
  const auto l = read_token_lines(dir + "/h.txt");
  REQUIRE(l.size() == 3);
  CHECK(l[1].empty());
  CHECK(l[2] == std::vector<std::string>{"c"});
}

TEST_CASE("result table layout") {
  BleuResult b;
  b.score = 12.345;
  const std::vector<RunResult> runs{{"base", {{"in", b}, {"out", std::nullopt}}}, {"copy", {{"in", b}}}};
  const auto t = result_table(runs);
  CHECK(t.tsv.substr(0, t.tsv.find('\n')) == "system\tin\tout");
  CHECK(t.tsv.find("base\t12.35\t-") != std::string::npos);
  CHECK(t.tsv.find("copy\t12.35\t-") != std::string::npos);
  CHECK(result_table(runs).text == t.text);
  const auto single = result_table({{"only", {{"t", b}}}});
  CHECK(std::count(single.tsv.begin(), single.tsv.end(), '\n') == 2);
}
