#include "monomt/toyworld.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <map>
#include <set>

#include "monomt/util.hpp"

namespace monomt {

void ToyWorldSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string("toy world: ") + name + " must be in [0,1]");
  };
  prob(reorder_rate, "reorder_rate");
  prob(fertility_rate, "fertility_rate");
  prob(cognate_rate, "cognate_rate");
  prob(domain_share, "domain_share");
  prob(adj_prob, "adj_prob");
  prob(particle_prob, "particle_prob");
  prob(pp_prob, "pp_prob");
  prob(noise_pair_rate, "noise_pair_rate");
  if (general_adj == 0 || general_noun == 0 || general_verb == 0 || domain_adj == 0 || domain_noun == 0 ||
      domain_verb == 0) {
    throw Error("toy world: lexicon sizes must be positive");
  }
  if (out_parallel == 0 || in_parallel == 0 || in_mono == 0 || dev == 0 || test == 0) {
    throw Error("toy world: split sizes must be positive");
  }
}

namespace {

enum class Domain { Out, In };
enum Pos { Adj, Noun, Verb, kPosCount };

struct Entry {
  std::string src;
  std::vector<std::string> tgt;
  bool postposed = false;  // adjectives only
};

// A list of words sampled with Zipfian weights 1/(rank+1).
struct Pool {
  std::vector<std::size_t> ids;  // indices into Lexicon::entries
  std::vector<double> cumulative;

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return ids[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), ids.size() - 1)];
  }
};

struct Lexicon {
  std::vector<Entry> entries;
  std::vector<std::size_t> dets, parts, preps;
  Pool general[kPosCount], out[kPosCount], in[kPosCount];
  std::vector<std::string> hist_particles;  // target only
  std::set<std::string> in_src, in_tgt;
};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make(std::size_t min_syll, std::size_t max_syll) {
    static const char* kOnsets[] = {"p", "t", "k", "b", "d", "g", "m", "n", "s", "l", "r", "v", "z", "f", "h"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u"};
    for (;;) {
      std::string w;
      const std::size_t n = min_syll + rng_.below(max_syll - min_syll + 1);
      for (std::size_t i = 0; i < n; ++i) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

Pool make_pool(std::vector<std::size_t> ids) {
  Pool p;
  double c = 0.0;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    c += 1.0 / static_cast<double>(r + 1);
    p.cumulative.push_back(c);
  }
  p.ids = std::move(ids);
  return p;
}

Lexicon make_lexicon(const ToyWorldSpec& spec) {
  Rng rng(derive_seed(spec.seed, "toy-lexicon"));
  WordMaker words(rng);
  Lexicon lex;
  auto add = [&](std::size_t min_syll, std::size_t max_syll, std::size_t tgt_tokens) {
    Entry e;
    e.src = words.make(min_syll, max_syll);
    for (std::size_t i = 0; i < tgt_tokens; ++i) e.tgt.push_back(words.make(min_syll, max_syll));
    lex.entries.push_back(std::move(e));
    return lex.entries.size() - 1;
  };
  for (int i = 0; i < 4; ++i) lex.dets.push_back(add(1, 1, 1));
  for (int i = 0; i < 2; ++i) lex.parts.push_back(add(1, 1, 0));
  for (int i = 0; i < 4; ++i) lex.preps.push_back(add(1, 2, 1));
  for (int i = 0; i < 2; ++i) lex.hist_particles.push_back(words.make(1, 1));

  const std::size_t general_sizes[kPosCount] = {spec.general_adj, spec.general_noun, spec.general_verb};
  const std::size_t domain_sizes[kPosCount] = {spec.domain_adj, spec.domain_noun, spec.domain_verb};
  auto make_class = [&](const std::size_t* sizes, Pool* pools, bool in_domain) {
    for (int pos = 0; pos < kPosCount; ++pos) {
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < sizes[pos]; ++i) {
        const bool two = pos == Noun && rng.bernoulli(spec.fertility_rate);
        const auto id = add(2, 3, two ? 2 : 1);
        auto& e = lex.entries[id];
        if (pos == Adj) e.postposed = rng.bernoulli(spec.reorder_rate);
        if (in_domain) {
          if (rng.bernoulli(spec.cognate_rate)) e.tgt = {e.src};
          lex.in_src.insert(e.src);
          for (const auto& t : e.tgt) lex.in_tgt.insert(t);
        }
        ids.push_back(id);
      }
      pools[pos] = make_pool(std::move(ids));
    }
  };
  make_class(general_sizes, lex.general, false);
  make_class(domain_sizes, lex.out, false);
  make_class(domain_sizes, lex.in, true);
  return lex;
}

struct Generated {
  std::vector<std::string> src, tgt;
  Alignment gold;
};

class Generator {
 public:
  Generator(const ToyWorldSpec& spec, const Lexicon& lex, Domain domain, std::uint64_t seed)
      : spec_(spec), lex_(lex), domain_(domain), rng_(seed) {}

  Generated sentence() {
    Generated g;
    sentence_particle_ = rng_.below(2);
    noun_phrase(g);
    emit(g, content(Verb));
    noun_phrase(g);
    if (rng_.bernoulli(spec_.pp_prob)) {
      emit(g, lex_.preps[rng_.below(lex_.preps.size())]);
      noun_phrase(g);
    }
    return g;
  }

 private:
  std::size_t content(Pos pos) {
    const Pool& pool = rng_.bernoulli(spec_.domain_share) ? (domain_ == Domain::In ? lex_.in[pos] : lex_.out[pos])
                                                          : lex_.general[pos];
    return pool.sample(rng_);
  }

  void emit(Generated& g, std::size_t id) {
    const auto& e = lex_.entries[id];
    const std::size_t s = g.src.size();
    g.src.push_back(e.src);
    for (const auto& t : e.tgt) {
      g.gold.links.emplace_back(s, g.tgt.size());
      g.tgt.push_back(t);
    }
  }

  void noun_phrase(Generated& g) {
    emit(g, lex_.dets[rng_.below(lex_.dets.size())]);
    const bool has_adj = rng_.bernoulli(spec_.adj_prob);
    const std::size_t adj = has_adj ? content(Adj) : 0;
    const std::size_t noun = content(Noun);
    if (has_adj && lex_.entries[adj].postposed) {
      // Source order ADJ NOUN, target order NOUN ADJ.
      const std::size_t s = g.src.size();
      g.src.push_back(lex_.entries[adj].src);
      g.src.push_back(lex_.entries[noun].src);
      for (const auto& t : lex_.entries[noun].tgt) {
        g.gold.links.emplace_back(s + 1, g.tgt.size());
        g.tgt.push_back(t);
      }
      for (const auto& t : lex_.entries[adj].tgt) {
        g.gold.links.emplace_back(s, g.tgt.size());
        g.tgt.push_back(t);
      }
    } else {
      if (has_adj) emit(g, adj);
      emit(g, noun);
    }
    if (spec_.history_particles) {
      const std::size_t which = domain_ == Domain::In ? sentence_particle_ : rng_.below(2);
      g.tgt.push_back(lex_.hist_particles[which]);
    }
    if (rng_.bernoulli(spec_.particle_prob)) emit(g, lex_.parts[rng_.below(lex_.parts.size())]);
  }

  const ToyWorldSpec& spec_;
  const Lexicon& lex_;
  Domain domain_;
  Rng rng_;
  std::size_t sentence_particle_ = 0;
};

void scramble(Generated& g, Rng& rng) {
  std::vector<std::size_t> perm(g.tgt.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);  // perm[new] = old
  std::vector<std::size_t> where(perm.size());
  std::vector<std::string> tgt(perm.size());
  for (std::size_t n = 0; n < perm.size(); ++n) {
    tgt[n] = g.tgt[perm[n]];
    where[perm[n]] = n;
  }
  g.tgt = std::move(tgt);
  for (auto& [s, t] : g.gold.links) t = where[t];
  std::sort(g.gold.links.begin(), g.gold.links.end(),
            [](const auto& a, const auto& b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
}

SentencePair to_pair(const Generated& g) {
  return {Sentence::from_words(g.src), Sentence::from_words(g.tgt), Provenance::natural()};
}

ParallelCorpus generate(const ToyWorldSpec& spec, const Lexicon& lex, Domain d, std::size_t n,
                        std::string_view stage, std::vector<Alignment>* gold = nullptr, double noise_rate = 0.0) {
  Generator gen(spec, lex, d, derive_seed(spec.seed, stage));
  Rng noise(derive_seed(spec.seed, std::string(stage) + "-noise"));
  ParallelCorpus out;
  out.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = gen.sentence();
    if (noise_rate > 0.0 && noise.bernoulli(noise_rate)) scramble(g, noise);
    out.pairs.push_back(to_pair(g));
    if (gold) gold->push_back(std::move(g.gold));
  }
  return out;
}

}  // namespace

ToyWorld make_toy_world(const ToyWorldSpec& spec) {
  spec.validate();
  const auto lex = make_lexicon(spec);
  ToyWorld w;
  w.spec = spec;
  w.out_parallel = generate(spec, lex, Domain::Out, spec.out_parallel, "toy-out-parallel", &w.out_gold,
                            spec.noise_pair_rate);
  w.in_parallel = generate(spec, lex, Domain::In, spec.in_parallel, "toy-in-parallel");
  w.in_mono_source = generate(spec, lex, Domain::In, spec.in_mono, "toy-in-mono-source").sources();
  w.in_mono_target = generate(spec, lex, Domain::In, spec.in_mono, "toy-in-mono-target").targets();
  w.dev_in = generate(spec, lex, Domain::In, spec.dev, "toy-dev-in");
  w.test_in = generate(spec, lex, Domain::In, spec.test, "toy-test-in");
  w.dev_out = generate(spec, lex, Domain::Out, spec.dev, "toy-dev-out");
  w.test_out = generate(spec, lex, Domain::Out, spec.test, "toy-test-out");

  RuleBasedTranslator::Table fwd, bwd;
  ReorderRule rule;
  for (const auto& e : lex.entries) {
    fwd[e.src] = e.tgt;
    for (std::size_t i = 0; i < e.tgt.size(); ++i) {
      if (i == 0) bwd[e.tgt[i]] = {e.src};
      else bwd[e.tgt[i]] = {};
    }
    if (e.postposed) rule.left.insert(e.src);
  }
  for (const Pool* pools : {lex.general, lex.out, lex.in})
    for (auto id : pools[Noun].ids) rule.right.insert(lex.entries[id].src);
  for (const auto& p : lex.hist_particles) bwd[p] = {};
  w.forward = std::make_shared<RuleBasedTranslator>("toy-forward", std::move(fwd), std::vector<ReorderRule>{rule});
  w.backward = std::make_shared<RuleBasedTranslator>("toy-backward", std::move(bwd));
  w.in_domain_source_words.assign(lex.in_src.begin(), lex.in_src.end());
  w.in_domain_target_words.assign(lex.in_tgt.begin(), lex.in_tgt.end());
  return w;
}

std::vector<std::string> save_toy_world(const ToyWorld& w, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& content) {
    write_file(dir + "/" + name, content);
    files.push_back(name);
  };
  put("out.parallel.tsv", serialize_parallel(w.out_parallel));
  std::string gold;
  for (const auto& a : w.out_gold) gold += to_pharaoh(a) + "\n";
  put("out.gold.align", gold);
  put("in.parallel.tsv", serialize_parallel(w.in_parallel));
  put("in.mono.src", serialize_corpus(w.in_mono_source));
  put("in.mono.tgt", serialize_corpus(w.in_mono_target));
  put("dev.in.tsv", serialize_parallel(w.dev_in));
  put("test.in.tsv", serialize_parallel(w.test_in));
  put("dev.out.tsv", serialize_parallel(w.dev_out));
  put("test.out.tsv", serialize_parallel(w.test_out));
  put("forward.table.tsv", w.forward->serialize());
  put("backward.table.tsv", w.backward->serialize());
  return files;
}

std::shared_ptr<const Translator> toy_back_translator(const ToyWorld& world, double error_rate, std::uint64_t seed,
                                                      const std::string& id) {
  return std::make_shared<DegradedTranslator>(world.backward, error_rate, seed, ErrorMode::Unk, id);
}

std::shared_ptr<const Translator> toy_forward_translator(const ToyWorld& world, double error_rate,
                                                         std::uint64_t seed, const std::string& id) {
  return std::make_shared<DegradedTranslator>(world.forward, error_rate, seed, ErrorMode::Unk, id);
}

}  // namespace monomt
