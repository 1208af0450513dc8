#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "monomt/corpus.hpp"

namespace monomt {

enum class Smoothing {
  None,
  AddOneOnZero,  // p_n = 1 / (total_n + 1) for orders without any match
};

struct BleuResult {
  double score = 0.0;                 // [0, 100]
  std::array<double, 4> precisions{};  // p_1..p_4 as fractions
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

/// Corpus BLEU with clipped n-gram precision up to 4-grams and a single
/// reference per hypothesis.
BleuResult corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references,
                       Smoothing smoothing = Smoothing::None);
BleuResult corpus_bleu(const Corpus& hypotheses, const Corpus& references,
                       Smoothing smoothing = Smoothing::None);

/// One tokenized line per sentence; blank lines are kept as empty hypotheses.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path);

struct RunResult {
  std::string name;
  std::vector<std::pair<std::string, std::optional<BleuResult>>> scores;  // test set → BLEU
};

struct ResultTable {
  std::string tsv;
  std::string text;
};
/// Rows are runs in input order, columns are test sets in order of first
/// appearance. Missing cells print as "-".
ResultTable result_table(const std::vector<RunResult>& runs);

}  // namespace monomt
