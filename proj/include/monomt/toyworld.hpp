#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "monomt/align.hpp"
#include "monomt/corpus.hpp"
#include "monomt/synth.hpp"

namespace monomt {

/// Parameters of a synthetic language pair with two domains.
///
/// Source sentences follow NP VERB NP [PREP NP] with NP = DET [ADJ] NOUN [PART].
/// The target side substitutes words through a fixed table, drops case
/// particles, moves a fixed subset of adjectives after their noun and expands
/// some nouns to two tokens. Content words come from a general lexicon shared
/// by both domains or from a domain-specific one.
struct ToyWorldSpec {
  std::uint64_t seed = 1;

  std::size_t general_adj = 12, general_noun = 24, general_verb = 12;
  std::size_t domain_adj = 12, domain_noun = 24, domain_verb = 12;  // per domain

  double reorder_rate = 0.5;    // fraction of adjectives placed after the noun
  double fertility_rate = 0.15; // fraction of nouns translated as two tokens
  double cognate_rate = 0.3;    // fraction of in-domain words spelled identically
  double domain_share = 0.5;    // chance a content slot uses the domain lexicon
  double adj_prob = 0.5;
  double particle_prob = 0.3;
  double pp_prob = 0.4;
  /// Out-domain pairs whose target words are shuffled (noisy parallel data).
  double noise_pair_rate = 0.0;
  /// Target-only agreement particles after each noun: independent in the
  /// out-domain, identical within an in-domain sentence.
  bool history_particles = false;

  std::size_t out_parallel = 3000;
  std::size_t in_parallel = 500;
  std::size_t in_mono = 2000;  // sizes of the in-domain source and target monolingual sets
  std::size_t dev = 200;
  std::size_t test = 200;

  void validate() const;
};

struct ToyWorld {
  ToyWorldSpec spec;
  ParallelCorpus out_parallel;
  std::vector<Alignment> out_gold;  // gold links of out_parallel
  ParallelCorpus in_parallel;
  Corpus in_mono_source;
  Corpus in_mono_target;
  ParallelCorpus dev_in, test_in, dev_out, test_out;

  /// Exact source→target translation (reordering and fertility included).
  std::shared_ptr<const RuleBasedTranslator> forward;
  /// Word-by-word target→source translation without reordering.
  std::shared_ptr<const RuleBasedTranslator> backward;

  std::vector<std::string> in_domain_source_words;
  std::vector<std::string> in_domain_target_words;
};

/// Deterministic in spec (same spec → identical corpora).
ToyWorld make_toy_world(const ToyWorldSpec& spec);

/// Writes every split, gold alignments and both translation tables into
/// `dir` and returns the relative file names written.
std::vector<std::string> save_toy_world(const ToyWorld& world, const std::string& dir);

/// Translators of the toy world degraded to a given error rate.
std::shared_ptr<const Translator> toy_back_translator(const ToyWorld& world, double error_rate, std::uint64_t seed,
                                                      const std::string& id);
std::shared_ptr<const Translator> toy_forward_translator(const ToyWorld& world, double error_rate,
                                                         std::uint64_t seed, const std::string& id);

}  // namespace monomt
