#include "monomt/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "monomt/util.hpp"

namespace monomt {

double TranslationTable::prob(std::string_view src, std::string_view tgt) const {
  auto it = t_.find(std::string(src));
  if (it == t_.end()) return kFloor;
  auto jt = it->second.find(std::string(tgt));
  if (jt == it->second.end()) return kFloor;
  return std::max(jt->second, kFloor);
}

void TranslationTable::set(const std::string& src, const std::string& tgt, double p) {
  auto [it, inserted] = t_[src].insert_or_assign(tgt, p);
  (void)it;
  if (inserted) ++entries_;
}

std::string TranslationTable::serialize() const {
  std::map<std::pair<std::string, std::string>, double> sorted;
  for (const auto& [s, row] : t_)
    for (const auto& [t, p] : row) sorted[{s, t}] = p;
  std::string out;
  char buf[64];
  for (const auto& [k, p] : sorted) {
    std::snprintf(buf, sizeof buf, "%.17g", p);
    out += k.first + "\t" + k.second + "\t" + buf + "\n";
  }
  return out;
}

TranslationTable TranslationTable::deserialize(std::string_view text) {
  TranslationTable table;
  const auto lines = split(std::string(text), '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cols = split(lines[i], '\t');
    if (cols.size() != 3) {
      throw DataError("translation table line " + std::to_string(i + 1) + ": expected 3 columns");
    }
    table.set(cols[0], cols[1], std::stod(cols[2]));
  }
  return table;
}

namespace {

// Pair-local view with the NULL word at source index 0.
struct IdPair {
  std::vector<std::uint32_t> src;  // includes NULL
  std::vector<std::uint32_t> tgt;
};

}  // namespace

Ibm1Result ibm1_train(const ParallelCorpus& corpus, std::size_t iterations, bool null_word) {
  if (iterations < 1) throw Error("ibm1: iterations must be >= 1");
  if (corpus.empty()) throw DataError("ibm1: corpus is empty");

  std::unordered_map<std::string, std::uint32_t> src_ids{{std::string(TranslationTable::kNull), 0}};
  std::unordered_map<std::string, std::uint32_t> tgt_ids;
  std::vector<std::string> src_words{std::string(TranslationTable::kNull)}, tgt_words;
  auto intern = [](auto& ids, auto& words, const std::string& w) {
    auto [it, inserted] = ids.emplace(w, static_cast<std::uint32_t>(words.size()));
    if (inserted) words.push_back(w);
    return it->second;
  };
  std::vector<IdPair> pairs;
  pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    IdPair ip;
    if (null_word) ip.src.push_back(0);
    for (const auto& t : p.source.tokens) ip.src.push_back(intern(src_ids, src_words, t.surface));
    for (const auto& t : p.target.tokens) ip.tgt.push_back(intern(tgt_ids, tgt_words, t.surface));
    pairs.push_back(std::move(ip));
  }

  auto key = [](std::uint32_t s, std::uint32_t t) { return (std::uint64_t{s} << 32) | t; };
  const double uniform = 1.0 / static_cast<double>(tgt_words.size());
  std::unordered_map<std::uint64_t, double> t;
  for (const auto& p : pairs)
    for (auto s : p.src)
      for (auto f : p.tgt) t.emplace(key(s, f), uniform);

  auto log_likelihood = [&]() {
    double ll = 0.0;
    for (const auto& p : pairs) {
      const double norm = 1.0 / static_cast<double>(p.src.size());
      for (auto f : p.tgt) {
        double z = 0.0;
        for (auto s : p.src) z += t.at(key(s, f));
        ll += std::log(norm * z);
      }
    }
    return ll;
  };

  Ibm1Result result;
  std::unordered_map<std::uint64_t, double> counts;
  std::vector<double> totals(src_words.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    double ll = 0.0;
    for (auto& [k, v] : counts) v = 0.0;
    std::fill(totals.begin(), totals.end(), 0.0);
    for (const auto& p : pairs) {
      const double norm = 1.0 / static_cast<double>(p.src.size());
      for (auto f : p.tgt) {
        double z = 0.0;
        for (auto s : p.src) z += t.at(key(s, f));
        ll += std::log(norm * z);
        for (auto s : p.src) {
          const double c = t.at(key(s, f)) / z;
          counts[key(s, f)] += c;
          totals[s] += c;
        }
      }
    }
    result.log_likelihood.push_back(ll);
    for (auto& [k, v] : t) v = counts.at(k) / totals[k >> 32];
  }
  result.log_likelihood.push_back(log_likelihood());

  for (const auto& [k, v] : t) {
    result.table.set(src_words[k >> 32], tgt_words[k & 0xffffffffu], v);
  }
  return result;
}

double ibm1_log_likelihood(const TranslationTable& table, const ParallelCorpus& corpus) {
  double ll = 0.0;
  for (const auto& p : corpus.pairs) {
    const double norm = 1.0 / static_cast<double>(p.source.size() + 1);
    for (const auto& f : p.target.tokens) {
      double z = table.null_prob(f.surface);
      for (const auto& e : p.source.tokens) z += table.prob(e.surface, f.surface);
      ll += std::log(norm * z);
    }
  }
  return ll;
}

Alignment viterbi_align(const TranslationTable& table, const Sentence& src, const Sentence& tgt) {
  Alignment a;
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    const auto& f = tgt.tokens[j].surface;
    double best = table.null_prob(f);
    std::ptrdiff_t best_i = -1;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double p = table.prob(src.tokens[i].surface, f);
      if (p > best) {
        best = p;
        best_i = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (best_i >= 0) a.links.emplace_back(static_cast<std::size_t>(best_i), j);
  }
  return a;
}

double kendall_tau_distance(const Alignment& alignment) {
  auto links = alignment.links;
  const std::size_t n = links.size();
  if (n < 2) return 0.0;
  std::sort(links.begin(), links.end(),
            [](const auto& x, const auto& y) { return std::tie(x.second, x.first) < std::tie(y.second, y.first); });
  std::size_t discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (links[i].first > links[j].first) ++discordant;
  return static_cast<double>(discordant) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

MonotonicityReport monotonicity(const ParallelCorpus& corpus, const TranslationTable& table) {
  MonotonicityReport r;
  r.distances.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    const auto a = viterbi_align(table, p.source, p.target);
    if (a.links.size() < 2) ++r.short_pairs;
    r.distances.push_back(kendall_tau_distance(a));
  }
  if (!r.distances.empty()) {
    r.mean = std::accumulate(r.distances.begin(), r.distances.end(), 0.0) / static_cast<double>(r.distances.size());
  }
  return r;
}

namespace {

ParallelCorpus take_to_budget(const ParallelCorpus& corpus, const std::vector<std::size_t>& order,
                              std::size_t token_budget) {
  const std::size_t total = corpus.source_token_count();
  if (token_budget > total) {
    throw DataError("selection budget " + std::to_string(token_budget) + " exceeds corpus size of " +
                    std::to_string(total) + " source tokens");
  }
  ParallelCorpus out;
  std::size_t taken = 0;
  for (auto i : order) {
    if (taken >= token_budget) break;
    out.pairs.push_back(corpus.pairs[i]);
    taken += corpus.pairs[i].source.size();
  }
  return out;
}

}  // namespace

ParallelCorpus select_by_monotonicity(const ParallelCorpus& corpus, const TranslationTable& table,
                                      std::size_t token_budget) {
  const auto report = monotonicity(corpus, table);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (report.distances[a] != report.distances[b]) return report.distances[a] < report.distances[b];
    return corpus.pairs[a].source.size() > corpus.pairs[b].source.size();
  });
  return take_to_budget(corpus, order, token_budget);
}

ParallelCorpus select_random(const ParallelCorpus& corpus, std::size_t token_budget, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  return take_to_budget(corpus, order, token_budget);
}

std::string to_pharaoh(const Alignment& a) {
  std::string out;
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(a.links[i].first) + "-" + std::to_string(a.links[i].second);
  }
  return out;
}

Alignment parse_pharaoh(std::string_view line) {
  Alignment a;
  for (const auto& item : split_whitespace(std::string(line))) {
    const auto dash = item.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == item.size()) {
      throw DataError("bad alignment link '" + item + "'");
    }
    try {
      std::size_t used = 0;
      const auto s = std::stoul(item.substr(0, dash), &used);
      if (used != dash) throw std::invalid_argument("src");
      const auto rest = item.substr(dash + 1);
      const auto t = std::stoul(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("tgt");
      a.links.emplace_back(s, t);
    } catch (const std::logic_error&) {
      throw DataError("bad alignment link '" + item + "'");
    }
  }
  return a;
}

}  // namespace monomt
