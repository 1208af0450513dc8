#include "monomt/synth.hpp"

#include <algorithm>
#include <numeric>

#include "monomt/util.hpp"

namespace monomt {

std::vector<std::string> segment_token(const std::string& surface, const Vocabulary& vocab) {
  if (vocab.contains(surface)) return {surface};
  const auto chars = utf8_chars(surface);
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < chars.size()) {
    std::string match;
    std::size_t len = 0;
    // Longest prefix of the remaining characters that is a vocabulary entry.
    std::string candidate;
    for (std::size_t j = i; j < chars.size(); ++j) {
      candidate += chars[j];
      const auto id = vocab.id(candidate);
      if (id >= 4 && !vocab.is_marked(id)) {
        match = candidate;
        len = j - i + 1;
      }
    }
    if (len == 0) {
      pieces.emplace_back(Vocabulary::kUnkStr);
      len = 1;
    } else {
      pieces.push_back(match);
    }
    i += len;
  }
  for (std::size_t k = 0; k + 1 < pieces.size(); ++k) {
    if (pieces[k] != Vocabulary::kUnkStr) pieces[k] += kContinuation;
  }
  return pieces;
}

Sentence segment_sentence(const Sentence& s, const Vocabulary& vocab) {
  Sentence out;
  for (const auto& t : s.tokens) {
    for (auto& piece : segment_token(t.surface, vocab)) {
      out.tokens.push_back(Token::make(std::move(piece), vocab.marker()));
    }
  }
  return out;
}

Corpus segment_corpus(const Corpus& c, const Vocabulary& vocab) {
  Corpus out;
  out.sentences.reserve(c.size());
  for (const auto& s : c.sentences) out.sentences.push_back(segment_sentence(s, vocab));
  return out;
}

void add_character_inventory(Vocabulary& vocab, const Corpus& corpus) {
  std::set<std::string> chars;
  for (const auto& s : corpus.sentences)
    for (const auto& t : s.tokens) {
      if (t.marked) continue;
      for (auto& c : utf8_chars(t.surface)) chars.insert(c);
    }
  for (const auto& c : chars) {
    const auto cont = c + std::string(kContinuation);
    const auto& m = vocab.marker();
    if (!m.empty() && (c.starts_with(m) || cont.starts_with(m))) continue;
    vocab.add(c);
    vocab.add(cont);
  }
}

ParallelCorpus make_copy(const Corpus& targets, const Vocabulary& src_vocab) {
  ParallelCorpus out;
  out.pairs.reserve(targets.size());
  for (const auto& t : targets.sentences) {
    out.pairs.push_back({segment_sentence(t, src_vocab), t, Provenance::of(Provenance::Kind::Copy)});
  }
  return out;
}

CopyMarkedResult make_copy_marked(const Corpus& targets, const Vocabulary& src_vocab,
                                  std::string_view marker) {
  if (marker.empty()) throw DataError("copy-marked: marker must not be empty");
  if (src_vocab.has_unmarked_prefix(marker)) {
    throw DataError("copy-marked: marker '" + std::string(marker) +
                    "' is a prefix of an existing source token");
  }
  CopyMarkedResult res;
  std::set<std::string> ext;
  res.corpus.pairs.reserve(targets.size());
  for (const auto& t : targets.sentences) {
    Sentence src;
    src.tokens.reserve(t.size());
    for (const auto& tok : t.tokens) {
      if (std::string_view(tok.surface).starts_with(marker)) {
        throw DataError("copy-marked: target token '" + tok.surface + "' already carries the marker");
      }
      auto m = std::string(marker) + tok.surface;
      ext.insert(m);
      src.tokens.push_back(Token{std::move(m), true});
    }
    res.corpus.pairs.push_back({std::move(src), t, Provenance::of(Provenance::Kind::CopyMarked)});
  }
  res.extension.assign(ext.begin(), ext.end());
  return res;
}

std::size_t extend_vocabulary(Vocabulary& vocab, const std::vector<std::string>& extension) {
  std::size_t added = 0;
  for (const auto& e : extension) {
    if (!vocab.contains(e)) {
      vocab.add(e, true);
      ++added;
    } else if (!vocab.is_marked(vocab.id(e))) {
      throw DataError("vocabulary extension '" + e + "' conflicts with an unmarked entry");
    }
  }
  return added;
}

ParallelCorpus make_copy_dummies(const Corpus& targets) {
  ParallelCorpus out;
  out.pairs.reserve(targets.size());
  for (const auto& t : targets.sentences) {
    Sentence src;
    src.tokens.assign(t.size(), Token{std::string(Vocabulary::kDummyStr), false});
    out.pairs.push_back({std::move(src), t, Provenance::of(Provenance::Kind::CopyDummies)});
  }
  return out;
}

void NoiseSpec::validate() const {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) {
    throw DataError("noise: p_drop must be in [0,1], got " + std::to_string(p_drop));
  }
}

std::vector<std::size_t> bounded_permutation(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = static_cast<double>(i) + rng.uniform() * static_cast<double>(k + 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return perm;
}

Sentence add_noise(const Sentence& sentence, const NoiseSpec& spec, std::uint64_t sentence_index) {
  spec.validate();
  if (sentence.empty()) return sentence;
  Rng rng(splitmix64(spec.seed ^ splitmix64(sentence_index)));
  std::vector<double> u(sentence.size());
  for (auto& x : u) x = rng.uniform();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] >= spec.p_drop) kept.push_back(i);
  if (kept.empty()) {
    kept.push_back(static_cast<std::size_t>(std::max_element(u.begin(), u.end()) - u.begin()));
  }
  const auto perm = bounded_permutation(kept.size(), spec.k, rng);
  Sentence out;
  out.tokens.reserve(kept.size());
  for (auto p : perm) out.tokens.push_back(sentence.tokens[kept[p]]);
  return out;
}

ParallelCorpus noise_sources(const ParallelCorpus& corpus, const NoiseSpec& spec) {
  ParallelCorpus out;
  out.pairs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.pairs[i];
    if (p.provenance.noised) throw DataError("noise: pair " + std::to_string(i) + " is already noised");
    out.pairs.push_back({add_noise(p.source, spec, i), p.target, p.provenance.with_noise()});
  }
  return out;
}

// --- translators ------------------------------------------------------------

RuleBasedTranslator::RuleBasedTranslator(std::string id, Table table, std::vector<ReorderRule> rules)
    : id_(std::move(id)), table_(std::move(table)), rules_(std::move(rules)) {}

Sentence RuleBasedTranslator::translate(const Sentence& s) const {
  auto words = s.words();
  for (const auto& rule : rules_) {
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
      if (rule.left.count(words[i]) && rule.right.count(words[i + 1])) {
        std::swap(words[i], words[i + 1]);
        ++i;
      }
    }
  }
  Sentence out;
  for (const auto& w : words) {
    auto it = table_.find(w);
    if (it == table_.end()) {
      out.tokens.push_back(Token{std::string(Vocabulary::kUnkStr), false});
      continue;
    }
    for (const auto& t : it->second) out.tokens.push_back(Token::make(t));
  }
  return out;
}

RuleBasedTranslator RuleBasedTranslator::identity(const std::set<std::string>& words, std::string id) {
  Table t;
  for (const auto& w : words) t[w] = {w};
  return RuleBasedTranslator(std::move(id), std::move(t));
}

std::string RuleBasedTranslator::serialize() const {
  std::string out;
  for (const auto& [src, tgt] : table_) out += src + "\t" + join(tgt, " ") + "\n";
  return out;
}

RuleBasedTranslator RuleBasedTranslator::load(const std::string& path, std::string id) {
  Table t;
  auto lines = split(read_file(path), '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cols = split(lines[i], '\t');
    if (cols.size() != 2 || cols[0].empty()) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": expected 'source<TAB>targets'");
    }
    t[cols[0]] = split_whitespace(cols[1]);
  }
  return RuleBasedTranslator(std::move(id), std::move(t));
}

DegradedTranslator::DegradedTranslator(std::shared_ptr<const Translator> base, double error_rate,
                                       std::uint64_t seed, ErrorMode mode, std::string id)
    : base_(std::move(base)), error_rate_(error_rate), seed_(seed), mode_(mode), id_(std::move(id)) {
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
    throw DataError("degraded translator: error rate must be in [0,1]");
  }
  if (id_.empty()) id_ = base_->system_id() + "-degraded";
}

Sentence DegradedTranslator::translate(const Sentence& s) const {
  auto clean = base_->translate(s);
  Rng rng(splitmix64(seed_ ^ fnv1a(s.str())));
  Sentence out;
  for (auto& t : clean.tokens) {
    if (rng.uniform() < error_rate_) {
      if (mode_ == ErrorMode::Unk) out.tokens.push_back(Token{std::string(Vocabulary::kUnkStr), false});
      continue;
    }
    out.tokens.push_back(std::move(t));
  }
  return out;
}

TranslationResult back_translate(const Corpus& targets, const Translator& translator) {
  TranslationResult res;
  const auto prov = Provenance::back_translated(translator.system_id());
  for (const auto& t : targets.sentences) {
    auto src = translator.translate(t);
    if (src.empty()) {
      ++res.dropped;
      continue;
    }
    res.corpus.pairs.push_back({std::move(src), t, prov});
  }
  return res;
}

TranslationResult forward_translate(const Corpus& sources, const Translator& translator) {
  TranslationResult res;
  const auto prov = Provenance::forward_translated(translator.system_id());
  for (const auto& s : sources.sentences) {
    auto tgt = translator.translate(s);
    if (tgt.empty()) {
      ++res.dropped;
      continue;
    }
    res.corpus.pairs.push_back({s, std::move(tgt), prov});
  }
  return res;
}

}  // namespace monomt
