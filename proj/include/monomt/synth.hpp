#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "monomt/corpus.hpp"
#include "monomt/util.hpp"

namespace monomt {

inline constexpr std::string_view kContinuation = "@@";

/// Greedy longest-match segmentation of one token against `vocab`. Tokens in
/// the vocabulary are returned unchanged. Otherwise the token is split into
/// the longest vocabulary prefixes, falling back to single characters; a
/// character absent from the vocabulary becomes UNK. Non-final segments get
/// the "@@" continuation suffix.
std::vector<std::string> segment_token(const std::string& surface, const Vocabulary& vocab);
Sentence segment_sentence(const Sentence& s, const Vocabulary& vocab);
Corpus segment_corpus(const Corpus& c, const Vocabulary& vocab);

/// Adds every character of `corpus` plus its "@@" continuation form to `vocab`
/// so that segmentation output stays in-vocabulary.
void add_character_inventory(Vocabulary& vocab, const Corpus& corpus);

ParallelCorpus make_copy(const Corpus& targets, const Vocabulary& src_vocab);

struct CopyMarkedResult {
  ParallelCorpus corpus;
  /// Sorted, de-duplicated marked surfaces to append to the source vocabulary.
  std::vector<std::string> extension;
};
/// Throws DataError if the marker is empty, if an unmarked source entry starts
/// with it, or if a target token already starts with it.
CopyMarkedResult make_copy_marked(const Corpus& targets, const Vocabulary& src_vocab,
                                  std::string_view marker = kDefaultMarker);
/// Appends the extension entries (as marked) and returns how many were new.
std::size_t extend_vocabulary(Vocabulary& vocab, const std::vector<std::string>& extension);

ParallelCorpus make_copy_dummies(const Corpus& targets);

struct NoiseSpec {
  double p_drop = 0.1;
  std::size_t k = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Word deletion then bounded local permutation. Deterministic in
/// (spec.seed, sentence_index). Never returns an empty sentence.
Sentence add_noise(const Sentence& sentence, const NoiseSpec& spec, std::uint64_t sentence_index);
/// Noises every source side; provenance becomes Noised(base).
ParallelCorpus noise_sources(const ParallelCorpus& corpus, const NoiseSpec& spec);

/// Permutation drawn by adding uniform(0, k+1) jitter to positions and stable
/// sorting. perm[i] is the original index placed at output position i.
std::vector<std::size_t> bounded_permutation(std::size_t n, std::size_t k, Rng& rng);

/// Anything that maps a sentence to a sentence.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual Sentence translate(const Sentence& s) const = 0;
  virtual std::string system_id() const = 0;
};

/// Swap two adjacent tokens when the left one is in `left` and the right one
/// is in `right` (applied left to right, non-overlapping).
struct ReorderRule {
  std::set<std::string> left;
  std::set<std::string> right;
};

/// Word-for-word substitution with optional local reordering rules. Every
/// source token must be in the table; unknown tokens become UNK. A table entry
/// may map to zero or more output tokens.
class RuleBasedTranslator : public Translator {
 public:
  using Table = std::map<std::string, std::vector<std::string>>;
  RuleBasedTranslator(std::string id, Table table, std::vector<ReorderRule> rules = {});

  Sentence translate(const Sentence& s) const override;
  std::string system_id() const override { return id_; }
  const Table& table() const { return table_; }

  /// Identity over the given words.
  static RuleBasedTranslator identity(const std::set<std::string>& words, std::string id = "identity");
  /// Tab-separated "source\ttarget words..." per line.
  static RuleBasedTranslator load(const std::string& path, std::string id);
  std::string serialize() const;

 private:
  std::string id_;
  Table table_;
  std::vector<ReorderRule> rules_;
};

enum class ErrorMode {
  Unk,      // replace with UNK
  Delete,   // drop the token
};

/// Wraps another translator and corrupts each output token with probability
/// `error_rate`. The corruption is a pure function of (seed, sentence).
class DegradedTranslator : public Translator {
 public:
  DegradedTranslator(std::shared_ptr<const Translator> base, double error_rate, std::uint64_t seed,
                     ErrorMode mode = ErrorMode::Unk, std::string id = {});
  Sentence translate(const Sentence& s) const override;
  std::string system_id() const override { return id_; }

 private:
  std::shared_ptr<const Translator> base_;
  double error_rate_;
  std::uint64_t seed_;
  ErrorMode mode_;
  std::string id_;
};

struct TranslationResult {
  ParallelCorpus corpus;
  std::size_t dropped = 0;  // empty translations
};

/// Pairs (translator(t), t) tagged BackTranslated(system-id).
TranslationResult back_translate(const Corpus& targets, const Translator& translator);
/// Pairs (s, translator(s)) tagged ForwardTranslated(system-id).
TranslationResult forward_translate(const Corpus& sources, const Translator& translator);

}  // namespace monomt
