#include "monomt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "monomt/util.hpp"

namespace monomt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references, Smoothing smoothing) {
  if (hypotheses.size() != references.size()) {
    throw DataError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                    std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw DataError("bleu: corpora are empty");

  BleuResult r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    r.hyp_len += hyp.size();
    r.ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hyp, n);
      const auto rc = ngrams(ref, n);
      for (const auto& [g, c] : h) {
        auto it = rc.find(g);
        r.matches[n - 1] += it == rc.end() ? 0 : std::min(c, it->second);
        r.totals[n - 1] += c;
      }
    }
  }

  bool any_zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p = 0.0;
    if (r.matches[n] > 0) {
      p = static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
    } else if (smoothing == Smoothing::AddOneOnZero) {
      p = 1.0 / static_cast<double>(r.totals[n] + 1);
    }
    r.precisions[n] = p;
    if (p == 0.0) any_zero = true;
    else log_sum += std::log(p);
  }

  if (r.hyp_len == 0) r.brevity_penalty = 0.0;
  else if (r.hyp_len < r.ref_len) r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_len) / static_cast<double>(r.hyp_len));
  else r.brevity_penalty = 1.0;

  r.score = any_zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

BleuResult corpus_bleu(const Corpus& hypotheses, const Corpus& references, Smoothing smoothing) {
  std::vector<std::vector<std::string>> h, r;
  h.reserve(hypotheses.size());
  r.reserve(references.size());
  for (const auto& s : hypotheses.sentences) h.push_back(s.words());
  for (const auto& s : references.sentences) r.push_back(s.words());
  return corpus_bleu(h, r, smoothing);
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  auto text = read_file(path);
  std::vector<std::vector<std::string>> out;
  if (text.empty()) return out;
  if (text.back() == '\n') text.pop_back();
  for (const auto& line : split(text, '\n')) out.push_back(split_whitespace(line));
  return out;
}

ResultTable result_table(const std::vector<RunResult>& runs) {
  std::vector<std::string> columns;
  for (const auto& run : runs)
    for (const auto& [test, _] : run.scores)
      if (std::find(columns.begin(), columns.end(), test) == columns.end()) columns.push_back(test);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"system"};
  header.insert(header.end(), columns.begin(), columns.end());
  rows.push_back(header);
  for (const auto& run : runs) {
    std::vector<std::string> row{run.name};
    for (const auto& col : columns) {
      std::string cell = "-";
      for (const auto& [test, bleu] : run.scores)
        if (test == col && bleu) cell = fmt2(bleu->score);
      row.push_back(cell);
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  ResultTable t;
  for (const auto& row : rows) {
    t.tsv += join(row, "\t") + "\n";
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        line += row[c] + std::string(width[c] - row[c].size(), ' ');
      } else {
        line += "  " + std::string(width[c] - row[c].size(), ' ') + row[c];
      }
    }
    t.text += line + "\n";
  }
  return t;
}

}  // namespace monomt
