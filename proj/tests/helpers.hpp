#pragma once

#include <string>
#include <vector>

#include "monomt/corpus.hpp"
#include "monomt/tensor.hpp"
#include "monomt/util.hpp"

namespace testing {

inline monomt::Tensor random_tensor(monomt::Shape shape, std::uint64_t seed, double range = 1.0) {
  monomt::Rng rng(seed);
  std::vector<double> v(monomt::shape_size(shape));
  for (auto& x : v) x = rng.uniform(-range, range);
  return monomt::Tensor::from(std::move(shape), std::move(v), true);
}

inline monomt::ParallelCorpus parallel(const std::vector<std::pair<std::string, std::string>>& lines) {
  monomt::ParallelCorpus p;
  for (const auto& [s, t] : lines)
    p.pairs.push_back({monomt::Sentence::parse(s), monomt::Sentence::parse(t), monomt::Provenance::natural()});
  return p;
}

inline monomt::Corpus corpus(const std::vector<std::string>& lines) {
  monomt::Corpus c;
  for (const auto& l : lines) c.sentences.push_back(monomt::Sentence::parse(l));
  return c;
}

// Fresh scratch directory under the build tree.
std::string scratch_dir(const std::string& name);

}  // namespace testing
