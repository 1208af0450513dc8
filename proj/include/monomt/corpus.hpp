#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace monomt {

inline constexpr std::string_view kDefaultMarker = "@trg@";

/// A single whitespace-free token. `marked` is true iff the surface carries the
/// target-language marker prefix.
struct Token {
  std::string surface;
  bool marked = false;

  /// Builds a token and validates it. Throws DataError on empty surfaces or
  /// surfaces containing whitespace.
  static Token make(std::string surface, std::string_view marker = kDefaultMarker);

  friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
  std::vector<Token> tokens;

  static Sentence parse(std::string_view line, std::string_view marker = kDefaultMarker);
  static Sentence from_words(const std::vector<std::string>& words,
                             std::string_view marker = kDefaultMarker);

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  std::vector<std::string> words() const;
  std::string str() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Corpus {
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  std::size_t token_count() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Where a sentence pair came from. Noised wraps exactly one base kind.
struct Provenance {
  enum class Kind { Natural, BackTranslated, ForwardTranslated, Copy, CopyMarked, CopyDummies };

  Kind kind = Kind::Natural;
  std::string system;  // only for BackTranslated / ForwardTranslated
  bool noised = false;

  static Provenance natural() { return {}; }
  static Provenance back_translated(std::string system) {
    return {Kind::BackTranslated, std::move(system), false};
  }
  static Provenance forward_translated(std::string system) {
    return {Kind::ForwardTranslated, std::move(system), false};
  }
  static Provenance of(Kind k) { return {k, {}, false}; }
  Provenance with_noise() const;

  /// Literal tag, e.g. "natural", "copy-marked", "backtrans(good)",
  /// "noised(copy-marked)".
  std::string tag() const;
  static Provenance parse(std::string_view tag);

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SentencePair {
  Sentence source;
  Sentence target;
  Provenance provenance;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  Corpus sources() const;
  Corpus targets() const;
  std::size_t source_token_count() const;
  /// Throws DataError if any pair has an empty side.
  void validate() const;

  static ParallelCorpus zip(const Corpus& sources, const Corpus& targets, Provenance provenance);

  friend bool operator==(const ParallelCorpus&, const ParallelCorpus&) = default;
};

/// Token <-> id bijection with four reserved symbols at fixed ids.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kDummy = 3;
  static constexpr std::string_view kPadStr = "<pad>";
  static constexpr std::string_view kUnkStr = "<unk>";
  static constexpr std::string_view kEosStr = "</s>";
  static constexpr std::string_view kDummyStr = "<dummy>";

  explicit Vocabulary(std::string marker = std::string(kDefaultMarker));

  /// Ids assigned by descending frequency, ties broken lexicographically.
  /// Tokens with frequency below `min_freq` are left out.
  static Vocabulary build(const Corpus& corpus, std::size_t min_freq = 1,
                          std::string marker = std::string(kDefaultMarker));

  /// Adds an entry if absent and returns its id. Marked entries must start
  /// with the marker; unmarked entries must not (the two namespaces never
  /// collide). Violations throw DataError.
  std::int32_t add(const std::string& token, bool marked = false);
  bool is_marked(std::int32_t id) const { return marked_.at(static_cast<std::size_t>(id)); }
  /// True if some unmarked entry starts with `prefix`.
  bool has_unmarked_prefix(std::string_view prefix) const;
  bool contains(std::string_view token) const;
  std::int32_t id(std::string_view token) const;  // UNK when absent
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return entries_.size(); }
  const std::string& marker() const { return marker_; }
  const std::vector<std::string>& entries() const { return entries_; }

  std::vector<std::int32_t> encode(const Sentence& s) const;
  Sentence decode(const std::vector<std::int32_t>& ids) const;

  /// Text format: a header line "#vocab\t<marker>", then one entry per line in
  /// id order; marked entries carry a trailing "\tM".
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.marker_ == b.marker_ && a.entries_ == b.entries_ && a.marked_ == b.marked_;
  }

 private:
  std::string marker_;
  std::vector<std::string> entries_;
  std::vector<bool> marked_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Reads one whitespace-tokenized sentence per line. Rejects empty files and
/// lines with no tokens (the error names the line number).
Corpus load_corpus(const std::string& path, std::string_view marker = kDefaultMarker);
Corpus parse_corpus(std::string_view text, std::string_view marker = kDefaultMarker,
                    std::string_view origin = "<memory>");
void save_corpus(const Corpus& corpus, const std::string& path);
std::string serialize_corpus(const Corpus& corpus);

/// Loads a corpus and builds its vocabulary in one pass.
struct LoadedCorpus {
  Corpus corpus;
  Vocabulary vocab;
};
LoadedCorpus load_corpus_with_vocab(const std::string& path, std::size_t min_freq = 1,
                                    std::string_view marker = kDefaultMarker);

/// TSV: source \t target \t provenance-tag, one pair per line.
std::string serialize_parallel(const ParallelCorpus& corpus);
ParallelCorpus parse_parallel(std::string_view text, std::string_view marker = kDefaultMarker,
                              std::string_view origin = "<memory>");
void save_parallel(const ParallelCorpus& corpus, const std::string& path);
ParallelCorpus load_parallel(const std::string& path, std::string_view marker = kDefaultMarker);

/// Shuffled union of `in_domain` and |in_domain| pairs sampled without
/// replacement from `out_domain`. Throws DataError when out_domain is too small.
ParallelCorpus mix_equal(const ParallelCorpus& in_domain, const ParallelCorpus& out_domain,
                         std::uint64_t seed);

ParallelCorpus concat(const ParallelCorpus& a, const ParallelCorpus& b);

}  // namespace monomt
