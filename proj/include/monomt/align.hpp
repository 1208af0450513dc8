#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "monomt/corpus.hpp"

namespace monomt {

/// Lexical translation probabilities t(target | source) of IBM Model 1,
/// with a row for the NULL source word when trained with one. Pairs never
/// seen together get the floor.
class TranslationTable {
 public:
  static constexpr double kFloor = 1e-12;
  static constexpr std::string_view kNull = "<null>";

  double prob(std::string_view src, std::string_view tgt) const;
  double null_prob(std::string_view tgt) const { return prob(kNull, tgt); }
  void set(const std::string& src, const std::string& tgt, double p);
  std::size_t size() const { return entries_; }

  /// TSV lines "source\ttarget\tprobability", sorted, probabilities as %.17g.
  std::string serialize() const;
  static TranslationTable deserialize(std::string_view text);

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, double>> t_;
  std::size_t entries_ = 0;
};

struct Ibm1Result {
  TranslationTable table;
  /// Corpus log-likelihood under the parameters entering each iteration,
  /// followed by the value for the final table (iterations + 1 entries).
  std::vector<double> log_likelihood;
};

/// EM training from the uniform distribution. Sums run in corpus order, so
/// results are deterministic. Without `null_word` no target word can stay
/// unaligned (the textbook variant without e_0).
Ibm1Result ibm1_train(const ParallelCorpus& corpus, std::size_t iterations, bool null_word = true);

/// Log-likelihood Σ_pairs Σ_j log(1/(l+1) · Σ_i t(f_j | e_i)) with e_0 = NULL.
double ibm1_log_likelihood(const TranslationTable& table, const ParallelCorpus& corpus);

struct Alignment {
  std::vector<std::pair<std::size_t, std::size_t>> links;  // (src_pos, tgt_pos), 0-based

  friend bool operator==(const Alignment&, const Alignment&) = default;
};

/// Each target position links to the argmax source position, NULL included.
/// NULL wins ties, then the smallest source position. NULL links are omitted.
Alignment viterbi_align(const TranslationTable& table, const Sentence& src, const Sentence& tgt);

/// Fraction of discordant source-position pairs once links are ordered by
/// target position. Alignments with fewer than two links score 0.
double kendall_tau_distance(const Alignment& alignment);

struct MonotonicityReport {
  std::vector<double> distances;  // per pair
  double mean = 0.0;
  std::size_t short_pairs = 0;    // fewer than two links, scored 0
};
MonotonicityReport monotonicity(const ParallelCorpus& corpus, const TranslationTable& table);

/// Pairs ordered by τ-distance ascending (longer source first, then corpus
/// order on ties) and taken until the source-token count reaches `token_budget`.
ParallelCorpus select_by_monotonicity(const ParallelCorpus& corpus, const TranslationTable& table,
                                      std::size_t token_budget);
/// Seeded shuffle, then the same greedy take.
ParallelCorpus select_random(const ParallelCorpus& corpus, std::size_t token_budget, std::uint64_t seed);

/// Pharaoh "i-j" format, one alignment per line.
std::string to_pharaoh(const Alignment& a);
Alignment parse_pharaoh(std::string_view line);

}  // namespace monomt
