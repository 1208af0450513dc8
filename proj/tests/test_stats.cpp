#include "doctest.h"
#include "helpers.hpp"
#include "monomt/stats.hpp"
#include "monomt/synth.hpp"
#include "monomt/toyworld.hpp"

using namespace monomt;

TEST_CASE("length ratio counts") {
  const auto r = length_ratio_report(testing::parallel({{"a", "a b"}, {"a b", "c d"}, {"a b c", "d"}}));
  CHECK(r.src_shorter == 1);
  CHECK(r.equal == 1);
  CHECK(r.src_longer == 1);
  CHECK(r.total() == 3);
  CHECK(r.histogram.at(-1) == 1);
  CHECK(r.histogram.at(2) == 1);
  CHECK(r.mean_src_len == doctest::Approx(2.0));
  CHECK_THROWS_AS(length_ratio_report(ParallelCorpus{}), DataError);

  const auto d = length_ratio_report(make_copy_dummies(testing::corpus({"a b", "c", "d e f"})));
  CHECK(d.equal == 3);
}

TEST_CASE("vocabulary growth") {
  const auto g = vocab_growth(testing::corpus({"a b", "a b"}), 1);
  CHECK(g.points == std::vector<std::pair<std::size_t, std::size_t>>{{1, 2}, {2, 2}});
  CHECK(vocab_growth(testing::corpus({"a b c d"}), 1).points.back().second == 4);
  const auto partial = vocab_growth(testing::corpus({"a", "b", "c"}), 2);
  CHECK(partial.points == std::vector<std::pair<std::size_t, std::size_t>>{{2, 2}, {3, 3}});
  const auto dummies = make_copy_dummies(testing::corpus({"a b", "c d e"})).sources();
  for (const auto& p : vocab_growth(dummies, 1).points) CHECK(p.second == 1);
  CHECK_THROWS(vocab_growth(dummies, 0));
}

TEST_CASE("token and type counts") {
  const auto s = token_type_stats(testing::corpus({"a a b"}));
  CHECK(s.tokens == 3);
  CHECK(s.types == 2);
  CHECK(s.hapax == 1);
  CHECK(s.top_k_mass == 1.0);
  CHECK(token_type_stats(testing::corpus({"a a b"}), 1).top_k_mass == doctest::Approx(2.0 / 3.0));
  const auto e = token_type_stats(Corpus{});
  CHECK(e.tokens == 0);
  CHECK(e.top_k_mass == 0.0);
}

TEST_CASE("final growth point equals the type count and shuffling keeps totals") {
  ToyWorldSpec spec;
  spec.out_parallel = 300;
  const auto c = make_toy_world(spec).out_parallel.sources();
  const auto g = vocab_growth(c, 7);
  CHECK(g.points.back().first == c.size());
  CHECK(g.points.back().second == token_type_stats(c).types);
  CHECK(vocab_growth(c, 7, 3).points.back() == g.points.back());
}

TEST_CASE("back-translated toy sources are less diverse than natural ones") {
  ToyWorldSpec spec;
  spec.seed = 6;
  const auto w = make_toy_world(spec);
  const auto bt = back_translate(w.in_parallel.targets(), *w.backward).corpus.sources();
  const auto nat = w.in_parallel.sources();
  const auto sb = token_type_stats(bt), sn = token_type_stats(nat);
  CHECK(sb.types < sn.types);
  CHECK(sb.hapax <= sn.hapax);
  const auto lr = length_ratio_report(back_translate(w.in_parallel.targets(), *w.backward).corpus);
  CHECK(lr.src_shorter > lr.src_longer);
}

TEST_CASE("report formats") {
  const auto r = length_ratio_report(testing::parallel({{"a", "a b"}}));
  CHECK(length_ratio_tsv(r).find("-1\t1") != std::string::npos);
  const auto g = vocab_growth(testing::corpus({"a"}), 1);
  CHECK(growth_tsv(g).find("1\t1") != std::string::npos);
  const auto j = stats_json(r, g, token_type_stats(testing::corpus({"a"})), std::nullopt);
  CHECK(j.find("\"hapax\"") != std::string::npos);
}
