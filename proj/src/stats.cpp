#include "monomt/stats.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "monomt/util.hpp"

namespace monomt {

LengthRatioReport length_ratio_report(const ParallelCorpus& corpus) {
  if (corpus.empty()) throw DataError("length report: corpus is empty");
  LengthRatioReport r;
  double src = 0.0, tgt = 0.0;
  for (const auto& p : corpus.pairs) {
    const long d = static_cast<long>(p.source.size()) - static_cast<long>(p.target.size());
    if (d < 0) ++r.src_shorter;
    else if (d == 0) ++r.equal;
    else ++r.src_longer;
    ++r.histogram[d];
    src += static_cast<double>(p.source.size());
    tgt += static_cast<double>(p.target.size());
  }
  r.mean_src_len = src / static_cast<double>(corpus.size());
  r.mean_tgt_len = tgt / static_cast<double>(corpus.size());
  return r;
}

GrowthCurve vocab_growth(const Corpus& corpus, std::size_t step) {
  if (step < 1) throw Error("vocab growth: step must be >= 1");
  GrowthCurve g;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto& t : corpus.sentences[i].tokens) seen.insert(t.surface);
    if ((i + 1) % step == 0 || i + 1 == corpus.size()) g.points.emplace_back(i + 1, seen.size());
  }
  return g;
}

GrowthCurve vocab_growth(const Corpus& corpus, std::size_t step, std::uint64_t shuffle_seed) {
  Corpus shuffled = corpus;
  Rng rng(shuffle_seed);
  rng.shuffle(shuffled.sentences);
  return vocab_growth(shuffled, step);
}

TokenTypeStats token_type_stats(const Corpus& corpus, std::size_t k) {
  TokenTypeStats s;
  s.k = k;
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& sent : corpus.sentences)
    for (const auto& t : sent.tokens) ++freq[t.surface];
  std::vector<std::size_t> counts;
  counts.reserve(freq.size());
  for (const auto& [w, c] : freq) {
    counts.push_back(c);
    s.tokens += c;
    if (c == 1) ++s.hapax;
  }
  s.types = freq.size();
  if (s.tokens == 0) return s;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  const auto top = std::min(k, counts.size());
  const auto mass = std::accumulate(counts.begin(), counts.begin() + static_cast<std::ptrdiff_t>(top), std::size_t{0});
  s.top_k_mass = static_cast<double>(mass) / static_cast<double>(s.tokens);
  return s;
}

std::string length_ratio_tsv(const LengthRatioReport& r) {
  std::string out = "category\tcount\n";
  out += "src_shorter\t" + std::to_string(r.src_shorter) + "\n";
  out += "equal\t" + std::to_string(r.equal) + "\n";
  out += "src_longer\t" + std::to_string(r.src_longer) + "\n";
  out += "\nlen_diff\tcount\n";
  for (const auto& [d, c] : r.histogram) out += std::to_string(d) + "\t" + std::to_string(c) + "\n";
  return out;
}

std::string growth_tsv(const GrowthCurve& g) {
  std::string out = "sentences\ttypes\n";
  for (const auto& [n, t] : g.points) out += std::to_string(n) + "\t" + std::to_string(t) + "\n";
  return out;
}

namespace {

nlohmann::ordered_json to_json(const TokenTypeStats& s) {
  return {{"tokens", s.tokens}, {"types", s.types}, {"hapax", s.hapax}, {"k", s.k}, {"top_k_mass", s.top_k_mass}};
}

}  // namespace

std::string stats_json(const std::optional<LengthRatioReport>& lengths, const GrowthCurve& source_growth,
                       const TokenTypeStats& source_stats, const std::optional<TokenTypeStats>& target_stats) {
  nlohmann::ordered_json j;
  if (lengths) {
    nlohmann::ordered_json hist = nlohmann::ordered_json::object();
    for (const auto& [d, c] : lengths->histogram) hist[std::to_string(d)] = c;
    j["length_ratio"] = {{"src_shorter", lengths->src_shorter},
                         {"equal", lengths->equal},
                         {"src_longer", lengths->src_longer},
                         {"mean_src_len", lengths->mean_src_len},
                         {"mean_tgt_len", lengths->mean_tgt_len},
                         {"histogram", hist}};
  }
  auto growth = nlohmann::ordered_json::array();
  for (const auto& [n, t] : source_growth.points) growth.push_back({n, t});
  j["vocab_growth"] = growth;
  j["source"] = to_json(source_stats);
  if (target_stats) j["target"] = to_json(*target_stats);
  return j.dump(2) + "\n";
}

}  // namespace monomt
