#pragma once

#include <functional>
#include <string>
#include <vector>

#include "monomt/tensor.hpp"

namespace testing {

// One finite-difference check: a loss and the parameters to perturb.
struct GradCase {
  std::string name;
  std::vector<monomt::Parameter> params;
  std::function<monomt::Tensor(monomt::Tape&)> loss;
};

// Every tensor primitive, each wrapped as Σ w ⊙ op(inputs) with fixed random w.
std::vector<GradCase> primitive_cases();

// Full encoder-decoder, discriminator, generator, language model and
// deep-fusion losses on two-sentence micro-batches.
std::vector<GradCase> model_cases();

}  // namespace testing
