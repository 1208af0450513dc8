#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "monomt/corpus.hpp"

namespace monomt {

struct LengthRatioReport {
  std::size_t src_shorter = 0;
  std::size_t equal = 0;
  std::size_t src_longer = 0;
  std::map<long, std::size_t> histogram;  // len(src) − len(tgt) → count
  double mean_src_len = 0.0;
  double mean_tgt_len = 0.0;

  std::size_t total() const { return src_shorter + equal + src_longer; }
};
LengthRatioReport length_ratio_report(const ParallelCorpus& corpus);

struct GrowthCurve {
  std::vector<std::pair<std::size_t, std::size_t>> points;  // (sentences seen, types seen)
};
/// Distinct types after every `step` sentences in corpus order; the final
/// partial step is included so the last point covers the whole corpus.
GrowthCurve vocab_growth(const Corpus& corpus, std::size_t step);
/// Same, after a seeded shuffle of sentence order.
GrowthCurve vocab_growth(const Corpus& corpus, std::size_t step, std::uint64_t shuffle_seed);

struct TokenTypeStats {
  std::size_t tokens = 0;
  std::size_t types = 0;
  std::size_t hapax = 0;
  double top_k_mass = 0.0;
  std::size_t k = 100;
};
TokenTypeStats token_type_stats(const Corpus& corpus, std::size_t k = 100);

/// Reports as TSV (one table per report) and a single JSON document.
std::string length_ratio_tsv(const LengthRatioReport& r);
std::string growth_tsv(const GrowthCurve& g);
std::string stats_json(const std::optional<LengthRatioReport>& lengths, const GrowthCurve& source_growth,
                       const TokenTypeStats& source_stats, const std::optional<TokenTypeStats>& target_stats);

}  // namespace monomt
