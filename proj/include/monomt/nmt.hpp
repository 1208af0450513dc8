#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "monomt/corpus.hpp"
#include "monomt/synth.hpp"
#include "monomt/tensor.hpp"

namespace monomt {

namespace group {
inline const std::string kSrcEmbeddings = "src_embeddings";
inline const std::string kEncoder = "encoder";
inline const std::string kAttention = "attention";
inline const std::string kDecoder = "decoder";
inline const std::string kTgtEmbeddings = "tgt_embeddings";
}  // namespace group

/// The five parameter groups of a translation model, in canonical order.
const std::vector<std::string>& model_groups();

struct ModelConfig {
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t attention_dim = 64;
  std::size_t max_len = 50;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Padded, time-major id matrices for a list of sentence pairs.
/// Element (t, b) lives at index t * size + b.
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;  // includes the final EOS
  std::vector<std::int32_t> src;
  std::vector<double> src_mask;
  std::vector<std::int32_t> tgt_in;   // previous token; EOS doubles as BOS
  std::vector<std::int32_t> tgt_out;  // token to predict; PAD where masked
  std::vector<double> tgt_mask;
  std::vector<std::size_t> src_lengths;
  std::vector<std::size_t> tgt_lengths;  // including EOS

  std::size_t target_tokens() const;
  std::span<const std::int32_t> src_at(std::size_t t) const { return {src.data() + t * size, size}; }
  std::span<const std::int32_t> tgt_in_at(std::size_t t) const { return {tgt_in.data() + t * size, size}; }
  std::span<const std::int32_t> tgt_out_at(std::size_t t) const { return {tgt_out.data() + t * size, size}; }
  std::span<const double> tgt_mask_at(std::size_t t) const { return {tgt_mask.data() + t * size, size}; }
};

struct EncodedPair {
  std::vector<std::int32_t> src;
  std::vector<std::int32_t> tgt;  // without EOS
};

Batch make_batch(const std::vector<EncodedPair>& pairs);
/// Source-only batch; targets are empty.
Batch make_source_batch(const std::vector<std::vector<std::int32_t>>& sources);

struct EncoderWeights {
  Tensor emb, fwd_W, fwd_U, fwd_b, bwd_W, bwd_U, bwd_b;
  std::size_t hidden = 0;
};
struct AttentionWeights {
  Tensor W_state, W_ctx, b, v;
};
struct DecoderWeights {
  Tensor init_W, init_b, W, U, b, ro_W, ro_b, out_W, out_b, tgt_emb;
  std::size_t hidden = 0;
};
/// Additive fusion of an external history state into the decoder logits:
/// logits += (g ⊙ h) · W, with g = sigmoid(h · gate_U + gate_b) when gated.
struct FusionWeights {
  Tensor W;
  Tensor gate_U, gate_b;
  bool gated = true;
};

/// Adds the GRU weights "<prefix>_W/_U/_b" for input `in` and hidden `hidden`.
void add_gru(ParameterSet& ps, const std::string& prefix, const std::string& group, std::size_t in,
             std::size_t hidden, Rng& rng);

/// One GRU step. Gates are laid out [update | reset | candidate].
Tensor gru_step(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& W, const Tensor& U,
                const Tensor& b, std::size_t hidden);

/// Bidirectional encoder output with attention keys precomputed.
struct EncodedSource {
  Tensor states;       // [B*S, 2H], row b*S+j
  Tensor keys;         // [B*S, A]
  Tensor mask_bias;    // [B, S]: 0 for real tokens, -1e9 for padding
  Tensor mean_weights; // [B, S]: 1/len over real tokens
  std::size_t batch = 0;
  std::size_t src_len = 0;
};

/// Runs the encoder; also returns per-step states for consumers such as the
/// discriminator.
EncodedSource encode_source(Tape& tape, const EncoderWeights& enc, const AttentionWeights& att,
                            const Batch& batch);

/// Gathers rows of an encoded source: row k of the result is source `rows[k]`.
EncodedSource select_sources(Tape& tape, const EncodedSource& e, const std::vector<std::int32_t>& rows);

Tensor decoder_init(Tape& tape, const DecoderWeights& dec, const EncodedSource& enc);

struct DecoderStepOut {
  Tensor state;
  Tensor logits;
};
/// One decoder step: attention with the previous state, GRU update on
/// [prev embedding; context], readout tanh([s; c; e]) and output projection.
/// `history` (the fusion input, may be undefined) is added to the logits through `fusion`.
DecoderStepOut decoder_step(Tape& tape, const DecoderWeights& dec, const AttentionWeights& att,
                            const EncodedSource& enc, const Tensor& prev_state,
                            std::span<const std::int32_t> prev_tokens, const Tensor& history = {},
                            const FusionWeights* fusion = nullptr);

/// Target-history features fed into the decoder (deep fusion). States are
/// advanced with the previous target token before each decoder step.
class HistoryModel {
 public:
  virtual ~HistoryModel() = default;
  virtual Tensor initial_state(Tape& tape, std::size_t batch) const = 0;
  virtual Tensor advance(Tape& tape, const Tensor& state, std::span<const std::int32_t> prev_tokens) const = 0;
  virtual const FusionWeights& fusion() const = 0;
};

/// Sum of token cross-entropies (masked) under teacher forcing.
Tensor teacher_forced_loss(Tape& tape, const DecoderWeights& dec, const AttentionWeights& att,
                           const EncodedSource& enc, const Batch& batch,
                           const HistoryModel* history = nullptr);

/// Attentional encoder-decoder with a bidirectional GRU encoder.
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  EncoderWeights encoder() const;
  AttentionWeights attention() const;
  DecoderWeights decoder() const;

  /// Mean per-token cross-entropy of teacher-forced decoding.
  Tensor forward_loss(Tape& tape, const Batch& batch, const HistoryModel* history = nullptr) const;

  /// Appends `count` source embedding rows initialized uniform(-0.08, 0.08).
  void extend_source_vocab(std::size_t count, Rng& rng);

  Model deep_copy() const { return Model(config_, params_.deep_copy()); }

 private:
  ModelConfig config_;
  ParameterSet params_;
};

/// A model together with its vocabularies.
struct ModelBundle {
  Model model;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  std::size_t updates = 0;

  std::vector<EncodedPair> encode(const ParallelCorpus& corpus) const;
  /// Segments out-of-vocabulary source words before id lookup.
  Sentence prepare_source(const Sentence& s) const;
  ModelBundle deep_copy() const { return {model.deep_copy(), src_vocab, tgt_vocab, updates}; }
};

/// Fresh bundle whose source vocabulary is built from the source side plus its
/// character inventory, and target vocabulary from the target side.
ModelBundle make_bundle(const ParallelCorpus& train, ModelConfig config, std::uint64_t seed,
                        std::size_t min_freq = 1, const Corpus* extra_target_text = nullptr);

/// Writes `<path>` (parameters), `<path>.json` (config, vocab hashes, update
/// count), `<path>.src.vocab` and `<path>.tgt.vocab`.
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

struct TrainSpec {
  std::size_t batch_size = 32;
  AdamConfig adam{.lr = 2e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .clip_norm = 5.0};
  std::size_t validation_interval = 200;
  std::size_t patience = 5;
  std::size_t max_updates = 2000;
  std::vector<std::string> freeze;  // group names
  std::uint64_t seed = 1;

  void validate(const std::vector<std::string>& known_groups) const;
};

struct ValidationPoint {
  std::size_t update = 0;
  double dev_loss = 0.0;
};

struct TrainHistory {
  std::vector<ValidationPoint> validations;
  std::vector<double> train_losses;  // per update
  std::size_t updates = 0;
  std::size_t best_update = 0;
  double best_dev_loss = 0.0;
  bool early_stopped = false;
};

/// Shuffled length-bucketed batches over `n` examples; deterministic in `seed`.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& lengths,
                                                   std::size_t batch_size, Rng& rng);

/// Generic early-stopped Adam loop. `trainable` are updated; `snapshot` is
/// checkpointed at the best validation point and restored at the end.
struct TrainLoop {
  std::size_t examples = 0;
  std::function<std::size_t(std::size_t)> length_of;
  std::function<Tensor(Tape&, const std::vector<std::size_t>&)> loss;
  std::function<double()> dev_loss;
};
TrainHistory run_training(const TrainLoop& loop, const std::vector<Tensor>& trainable,
                          ParameterSet& snapshot, const TrainSpec& spec, Adam* optimizer = nullptr);

/// Trains on `corpus`, early-stopping on mean per-token dev cross-entropy.
/// Groups named in spec.freeze receive no updates.
TrainHistory train(ModelBundle& bundle, const ParallelCorpus& corpus, const ParallelCorpus& dev,
                   const TrainSpec& spec);

struct FineTuneOptions {
  /// Marked entries to add to the source vocabulary (copy-marked).
  std::vector<std::string> vocab_extension;
  /// Epochs over the in-domain data training only the new embedding rows.
  std::size_t extension_pretrain_epochs = 3;
};

struct FineTuneReport {
  TrainHistory history;
  std::size_t new_entries = 0;
  std::size_t pretrain_updates = 0;
};

/// Resumes training on mix_equal(in_domain_pseudo, out_domain_natural) with a
/// fresh optimizer.
FineTuneReport fine_tune(ModelBundle& bundle, const ParallelCorpus& in_domain_pseudo,
                         const ParallelCorpus& out_domain_natural, const ParallelCorpus& dev,
                         const TrainSpec& spec, const FineTuneOptions& options = {});

struct BeamOptions {
  std::size_t beam_width = 4;
  double length_alpha = 1.0;  // score / len^alpha
};

/// Length-normalized beam search over token ids. Output excludes EOS and has at
/// most config.max_len tokens.
std::vector<std::int32_t> beam_search(const Model& model, const std::vector<std::int32_t>& src,
                                      const BeamOptions& options,
                                      const HistoryModel* history = nullptr);
Sentence translate(const ModelBundle& bundle, const Sentence& source, const BeamOptions& options,
                   const HistoryModel* history = nullptr);
Corpus translate_corpus(const ModelBundle& bundle, const Corpus& sources, const BeamOptions& options,
                        const HistoryModel* history = nullptr);

struct CorpusScore {
  double mean_sentence_xent = 0.0;
  double mean_token_xent = 0.0;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
};
/// Teacher-forced cross-entropy in nats (targets include EOS).
CorpusScore score_corpus(const ModelBundle& bundle, const ParallelCorpus& corpus,
                         const HistoryModel* history = nullptr, std::size_t batch_size = 64);
CorpusScore score_encoded(const Model& model, const std::vector<EncodedPair>& pairs,
                          const HistoryModel* history = nullptr, std::size_t batch_size = 64);

/// Translator backed by a trained model (for back/forward translation).
class NeuralTranslator : public Translator {
 public:
  NeuralTranslator(std::shared_ptr<const ModelBundle> bundle, BeamOptions options, std::string id = "nmt");
  Sentence translate(const Sentence& s) const override;
  std::string system_id() const override { return id_; }

 private:
  std::shared_ptr<const ModelBundle> bundle_;
  BeamOptions options_;
  std::string id_;
};

}  // namespace monomt
