#include "monomt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "monomt/util.hpp"

namespace monomt {

namespace {

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
}

const char* kind_tag(Provenance::Kind k) {
  switch (k) {
    case Provenance::Kind::Natural: return "natural";
    case Provenance::Kind::BackTranslated: return "backtrans";
    case Provenance::Kind::ForwardTranslated: return "fwdtrans";
    case Provenance::Kind::Copy: return "copy";
    case Provenance::Kind::CopyMarked: return "copy-marked";
    case Provenance::Kind::CopyDummies: return "copy-dummies";
  }
  return "?";
}

}  // namespace

Token Token::make(std::string surface, std::string_view marker) {
  if (surface.empty()) throw DataError("token surface is empty");
  if (has_space(surface)) throw DataError("token '" + surface + "' contains whitespace");
  const bool marked = !marker.empty() && surface.starts_with(marker);
  return Token{std::move(surface), marked};
}

Sentence Sentence::parse(std::string_view line, std::string_view marker) {
  Sentence s;
  for (auto& w : split_whitespace(line)) s.tokens.push_back(Token::make(std::move(w), marker));
  return s;
}

Sentence Sentence::from_words(const std::vector<std::string>& words, std::string_view marker) {
  Sentence s;
  s.tokens.reserve(words.size());
  for (const auto& w : words) s.tokens.push_back(Token::make(w, marker));
  return s;
}

std::vector<std::string> Sentence::words() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

std::string Sentence::str() const { return join(words(), " "); }

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

Provenance Provenance::with_noise() const {
  Provenance p = *this;
  p.noised = true;
  return p;
}

std::string Provenance::tag() const {
  std::string base = kind_tag(kind);
  if (kind == Kind::BackTranslated || kind == Kind::ForwardTranslated) {
    base += "(" + system + ")";
  }
  return noised ? "noised(" + base + ")" : base;
}

Provenance Provenance::parse(std::string_view tag) {
  Provenance p;
  std::string_view t = tag;
  if (t.starts_with("noised(") && t.ends_with(")")) {
    p.noised = true;
    t = t.substr(7, t.size() - 8);
    if (t.starts_with("noised(")) throw DataError("nested noised provenance '" + std::string(tag) + "'");
  }
  auto with_system = [&](std::string_view prefix, Kind k) -> bool {
    if (t.starts_with(prefix) && t.ends_with(")") && t.size() > prefix.size() + 1) {
      p.kind = k;
      p.system = std::string(t.substr(prefix.size(), t.size() - prefix.size() - 1));
      return true;
    }
    return false;
  };
  if (t == "natural") p.kind = Kind::Natural;
  else if (t == "copy") p.kind = Kind::Copy;
  else if (t == "copy-marked") p.kind = Kind::CopyMarked;
  else if (t == "copy-dummies") p.kind = Kind::CopyDummies;
  else if (!with_system("backtrans(", Kind::BackTranslated) &&
           !with_system("fwdtrans(", Kind::ForwardTranslated)) {
    throw DataError("unknown provenance tag '" + std::string(tag) + "'");
  }
  return p;
}

Corpus ParallelCorpus::sources() const {
  Corpus c;
  c.sentences.reserve(pairs.size());
  for (const auto& p : pairs) c.sentences.push_back(p.source);
  return c;
}

Corpus ParallelCorpus::targets() const {
  Corpus c;
  c.sentences.reserve(pairs.size());
  for (const auto& p : pairs) c.sentences.push_back(p.target);
  return c;
}

std::size_t ParallelCorpus::source_token_count() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.source.size();
  return n;
}

void ParallelCorpus::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].source.empty() || pairs[i].target.empty()) {
      throw DataError("pair " + std::to_string(i) + " has an empty side");
    }
  }
}

ParallelCorpus ParallelCorpus::zip(const Corpus& sources, const Corpus& targets,
                                   Provenance provenance) {
  if (sources.size() != targets.size()) {
    throw DataError("zip: " + std::to_string(sources.size()) + " sources vs " +
                    std::to_string(targets.size()) + " targets");
  }
  ParallelCorpus pc;
  pc.pairs.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    pc.pairs.push_back({sources.sentences[i], targets.sentences[i], provenance});
  }
  return pc;
}

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::string marker) : marker_(std::move(marker)) {
  for (auto s : {kPadStr, kUnkStr, kEosStr, kDummyStr}) {
    index_.emplace(std::string(s), static_cast<std::int32_t>(entries_.size()));
    entries_.emplace_back(s);
    marked_.push_back(false);
  }
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t min_freq, std::string marker) {
  std::map<std::string, std::pair<std::size_t, bool>> freq;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      auto& f = freq[t.surface];
      ++f.first;
      f.second = t.marked;
    }
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, bool>>> items(freq.begin(), freq.end());
  // std::map already orders lexicographically; stable sort keeps that as tie-break.
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second.first > b.second.first; });
  Vocabulary v(std::move(marker));
  for (const auto& [tok, f] : items) {
    if (f.first >= min_freq) v.add(tok, f.second);
  }
  return v;
}

std::int32_t Vocabulary::add(const std::string& token, bool marked) {
  if (auto it = index_.find(token); it != index_.end()) {
    if (marked_[static_cast<std::size_t>(it->second)] != marked) {
      throw DataError("vocabulary entry '" + token + "' exists in the other namespace");
    }
    return it->second;
  }
  if (token.empty() || has_space(token)) throw DataError("invalid vocabulary entry '" + token + "'");
  const bool prefixed = !marker_.empty() && token.starts_with(marker_);
  if (marked && !prefixed) {
    throw DataError("marked entry '" + token + "' lacks marker '" + marker_ + "'");
  }
  if (!marked && prefixed) {
    throw DataError("unmarked entry '" + token + "' collides with marker namespace '" + marker_ + "'");
  }
  const auto id = static_cast<std::int32_t>(entries_.size());
  entries_.push_back(token);
  marked_.push_back(marked);
  index_.emplace(token, id);
  return id;
}

bool Vocabulary::has_unmarked_prefix(std::string_view prefix) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!marked_[i] && std::string_view(entries_[i]).starts_with(prefix)) return true;
  }
  return false;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) {
    throw DataError("vocabulary id " + std::to_string(id) + " out of range [0, " +
                    std::to_string(entries_.size()) + ")");
  }
  return entries_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocabulary::encode(const Sentence& s) const {
  std::vector<std::int32_t> ids;
  ids.reserve(s.size());
  for (const auto& t : s.tokens) ids.push_back(id(t.surface));
  return ids;
}

Sentence Vocabulary::decode(const std::vector<std::int32_t>& ids) const {
  Sentence s;
  for (auto i : ids) {
    if (i == kEos) break;
    if (i == kPad) continue;
    s.tokens.push_back(Token::make(token(i), marker_));
  }
  return s;
}

std::string Vocabulary::serialize() const {
  std::string out = "#vocab\t" + marker_ + "\n";
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    out += entries_[i];
    if (marked_[i]) out += "\tM";
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  auto lines = split(text, '\n');
  if (lines.empty() || !lines[0].starts_with("#vocab\t")) throw DataError("vocabulary header missing");
  Vocabulary v(lines[0].substr(7));
  std::size_t expected_id = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cols = split(lines[i], '\t');
    const bool marked = cols.size() == 2 && cols[1] == "M";
    if (cols.size() > 2 || (cols.size() == 2 && !marked)) {
      throw DataError("vocabulary line " + std::to_string(i + 1) + " malformed");
    }
    if (expected_id < 4) {
      if (cols[0] != v.entries_[expected_id]) {
        throw DataError("reserved vocabulary entry mismatch at id " + std::to_string(expected_id));
      }
    } else {
      if (v.contains(cols[0])) throw DataError("duplicate vocabulary entry '" + cols[0] + "'");
      v.add(cols[0], marked);
    }
    ++expected_id;
  }
  return v;
}

void Vocabulary::save(const std::string& path) const { write_file(path, serialize()); }

Vocabulary Vocabulary::load(const std::string& path) { return deserialize(read_file(path)); }

std::uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

// --- IO ---------------------------------------------------------------------

Corpus parse_corpus(std::string_view text, std::string_view marker, std::string_view origin) {
  if (text.empty()) throw DataError(std::string(origin) + ": empty file");
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  Corpus c;
  c.sentences.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto s = Sentence::parse(lines[i], marker);
    if (s.empty()) {
      throw DataError(std::string(origin) + ":" + std::to_string(i + 1) + ": line has no tokens");
    }
    c.sentences.push_back(std::move(s));
  }
  return c;
}

Corpus load_corpus(const std::string& path, std::string_view marker) {
  return parse_corpus(read_file(path), marker, path);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    out += s.str();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  write_file(path, serialize_corpus(corpus));
}

LoadedCorpus load_corpus_with_vocab(const std::string& path, std::size_t min_freq,
                                    std::string_view marker) {
  auto c = load_corpus(path, marker);
  auto v = Vocabulary::build(c, min_freq, std::string(marker));
  return {std::move(c), std::move(v)};
}

std::string serialize_parallel(const ParallelCorpus& corpus) {
  std::string out;
  for (const auto& p : corpus.pairs) {
    out += p.source.str();
    out += '\t';
    out += p.target.str();
    out += '\t';
    out += p.provenance.tag();
    out += '\n';
  }
  return out;
}

ParallelCorpus parse_parallel(std::string_view text, std::string_view marker,
                              std::string_view origin) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  ParallelCorpus pc;
  pc.pairs.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto where = std::string(origin) + ":" + std::to_string(i + 1);
    auto cols = split(lines[i], '\t');
    if (cols.size() != 3) {
      throw DataError(where + ": expected 3 tab-separated columns, got " +
                      std::to_string(cols.size()));
    }
    SentencePair p{Sentence::parse(cols[0], marker), Sentence::parse(cols[1], marker),
                   Provenance::parse(cols[2])};
    if (p.source.empty() || p.target.empty()) throw DataError(where + ": empty side");
    pc.pairs.push_back(std::move(p));
  }
  return pc;
}

void save_parallel(const ParallelCorpus& corpus, const std::string& path) {
  corpus.validate();
  write_file(path, serialize_parallel(corpus));
}

ParallelCorpus load_parallel(const std::string& path, std::string_view marker) {
  return parse_parallel(read_file(path), marker, path);
}

ParallelCorpus mix_equal(const ParallelCorpus& in_domain, const ParallelCorpus& out_domain,
                         std::uint64_t seed) {
  const std::size_t n = in_domain.size();
  if (out_domain.size() < n) {
    throw DataError("mix_equal: out-of-domain corpus has " + std::to_string(out_domain.size()) +
                    " pairs, need at least " + std::to_string(n));
  }
  Rng rng(seed);
  std::vector<std::size_t> idx(out_domain.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates: the first n slots become a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  ParallelCorpus out;
  out.pairs.reserve(2 * n);
  out.pairs = in_domain.pairs;
  for (std::size_t i = 0; i < n; ++i) out.pairs.push_back(out_domain.pairs[idx[i]]);
  rng.shuffle(out.pairs);
  return out;
}

ParallelCorpus concat(const ParallelCorpus& a, const ParallelCorpus& b) {
  ParallelCorpus out = a;
  out.pairs.insert(out.pairs.end(), b.pairs.begin(), b.pairs.end());
  return out;
}

}  // namespace monomt
