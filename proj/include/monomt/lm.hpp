#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "monomt/corpus.hpp"
#include "monomt/nmt.hpp"
#include "monomt/tensor.hpp"

namespace monomt {

namespace group {
inline const std::string kLm = "lm";
inline const std::string kFusion = "fusion";
}  // namespace group

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::uint64_t vocab_hash = 0;  // hash of the target vocabulary; 0 if unknown

  void validate() const;
};

/// One-layer GRU language model over target tokens.
class RnnLm {
 public:
  RnnLm() = default;
  RnnLm(LmConfig config, std::uint64_t seed);
  RnnLm(LmConfig config, ParameterSet params);

  const LmConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  Tensor initial_state(std::size_t batch) const;
  /// Consumes one token per row and returns the next hidden state.
  Tensor step(Tape& tape, const Tensor& h, std::span<const std::int32_t> tokens) const;
  Tensor logits(Tape& tape, const Tensor& h) const;
  /// Mean per-token next-token cross-entropy; each sequence is predicted from
  /// EOS onwards and must end by predicting EOS.
  Tensor forward_loss(Tape& tape, const std::vector<std::vector<std::int32_t>>& sequences) const;

 private:
  LmConfig config_;
  ParameterSet params_;
};

struct LmScore {
  double mean_token_xent = 0.0;
  double perplexity = 0.0;  // exp(mean_token_xent)
  std::size_t tokens = 0;
};
LmScore score_lm(const RnnLm& lm, const std::vector<std::vector<std::int32_t>>& sequences);

struct LmTrainResult {
  RnnLm lm;
  TrainHistory history;
  LmScore dev;
};
/// Trains on `corpus` with early stopping on `dev` cross-entropy. Both are
/// encoded with `vocab`, which must be the translation model's target vocabulary.
LmTrainResult lm_train(const Corpus& corpus, const Corpus& dev, const Vocabulary& vocab, LmConfig config,
                       const TrainSpec& spec);

void save_lm(const RnnLm& lm, const std::string& path);
RnnLm load_lm(const std::string& path);

/// LM hidden state injected into the decoder softmax through FusionWeights.
/// The output weight starts at zero, so a fresh fusion leaves the base
/// model's distribution unchanged.
class DeepFusion : public HistoryModel {
 public:
  DeepFusion(const RnnLm& lm, std::size_t tgt_vocab_size, bool gated, std::uint64_t seed);

  Tensor initial_state(Tape& tape, std::size_t batch) const override;
  Tensor advance(Tape& tape, const Tensor& state, std::span<const std::int32_t> prev_tokens) const override;
  const FusionWeights& fusion() const override { return weights_; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const RnnLm& lm() const { return *lm_; }
  void load_params(const std::string& path);

 private:
  void bind();

  const RnnLm* lm_;
  ParameterSet params_;
  FusionWeights weights_;
};

struct FuseSpec {
  TrainSpec train;
  bool gated = true;
  /// Also tune the decoder readout and output projection.
  bool train_readout = false;
};

struct FuseReport {
  TrainHistory history;
  CorpusScore base_dev;
  CorpusScore fused_dev;
};

/// Trains the fusion parameters (and optionally the readout) on `tuning`
/// while the language model stays frozen.
FuseReport deep_fuse(ModelBundle& bundle, DeepFusion& fusion, const ParallelCorpus& tuning,
                     const ParallelCorpus& dev, const FuseSpec& spec);

}  // namespace monomt
