#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "monomt/nmt.hpp"

namespace monomt {

namespace group {
inline const std::string kPseudoEmbeddings = "pseudo_embeddings";
inline const std::string kPseudoEncoder = "pseudo_encoder";
inline const std::string kDiscriminator = "discriminator";
}  // namespace group

struct GanSpec {
  double g_gate_accuracy = 0.75;   // G adversarial step only above this accuracy
  double d_freeze_accuracy = 0.99; // D not updated above this accuracy
  std::size_t pretrain_updates = 500;
  std::size_t disc_hidden = 64;
  /// false: two encoders trained on the MT objective only (no D, no J^(G)).
  bool adversarial = true;
  TrainSpec train;  // batch size, Adam, validation, patience, max_updates, seed

  void validate() const;
};

/// Which updates the gate allows for a measured accuracy.
struct GateDecision {
  bool update_d = false;
  bool update_g = false;
};
GateDecision gate(double accuracy, const GanSpec& spec);

/// Bidirectional GRU over encoder states, masked mean, linear layer, sigmoid.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  /// Probability that each source in `enc` is natural, shape [B,1].
  Tensor forward(Tape& tape, const EncodedSource& enc) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  std::size_t hidden_ = 0;
};

inline constexpr double kProbClamp = 1e-7;

/// J(D) = −½·mean log D(E(x)) − ½·mean log(1 − D(G(x′))), clamped before log.
Tensor d_loss(Tape& tape, const Tensor& p_natural, const Tensor& p_pseudo);
/// J(G) = −mean log D(G(x′)), clamped before log.
Tensor g_loss(Tape& tape, const Tensor& p_pseudo);
/// Fraction classified correctly at threshold 0.5 over both batches; an
/// output of exactly 0.5 counts as wrong for either class.
double discriminator_accuracy(std::span<const double> p_natural, std::span<const double> p_pseudo);

/// Copy of an encoding with no gradient path back to the encoder.
EncodedSource detach(const EncodedSource& e);

/// Natural encoder E, attention and decoder live in the wrapped bundle; the
/// pseudo-source encoder G and its embeddings are separate parameters that
/// start as copies of E. Translation only ever uses the bundle.
class GanModel {
 public:
  GanModel(ModelBundle& bundle, const GanSpec& spec, std::uint64_t seed);

  ModelBundle& bundle() { return *bundle_; }
  const ModelBundle& bundle() const { return *bundle_; }
  ParameterSet& pseudo_params() { return pseudo_; }
  const ParameterSet& pseudo_params() const { return pseudo_; }
  Discriminator& discriminator() { return disc_; }
  const Discriminator& discriminator() const { return disc_; }

  EncoderWeights pseudo_encoder() const;
  EncodedSource encode_natural(Tape& tape, const Batch& b) const;
  EncodedSource encode_pseudo(Tape& tape, const Batch& b) const;
  Tensor mt_loss_natural(Tape& tape, const Batch& b) const;
  Tensor mt_loss_pseudo(Tape& tape, const Batch& b) const;

  std::vector<Tensor> g_tensors() const { return pseudo_.tensors(); }
  std::vector<Tensor> d_tensors() const { return disc_.params().tensors(); }
  /// θ(MT): the translation model plus θ(G).
  std::vector<Tensor> mt_tensors() const;
  void zero_grad();

  std::uint64_t g_checksum() const { return pseudo_.checksum(); }
  std::uint64_t d_checksum() const { return disc_.params().checksum(); }
  std::uint64_t model_checksum() const { return bundle_->model.params().checksum(); }

 private:
  ModelBundle* bundle_;
  ParameterSet pseudo_;
  Discriminator disc_;
};

struct GanOptimizers {
  GanOptimizers(const GanModel& model, const GanSpec& spec);
  Adam d;
  Adam g;
  Adam mt;
};

struct StepReport {
  std::size_t update = 0;
  double accuracy = 0.0;
  bool d_fired = false;
  bool g_fired = false;
  bool mt_fired = false;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double mt_loss = 0.0;
  std::uint64_t d_before = 0, d_after = 0;  // θ(D) around the D step
  std::uint64_t g_before = 0, g_after = 0;  // θ(G) around the adversarial G step

  std::string json_line() const;
};

/// One gated update: measure accuracy, maybe step D, maybe step G on J(G),
/// re-encode the pseudo batch and step θ(MT) on both batches.
StepReport gan_update_step(GanModel& model, GanOptimizers& opt, const Batch& natural, const Batch& pseudo,
                           const GanSpec& spec, std::size_t update_index = 0);

/// Updates only θ(G) (MT loss on pseudo data) and θ(D) (J(D)).
struct PretrainReport {
  std::size_t updates = 0;
  double final_accuracy = 0.0;
};
PretrainReport gan_pretrain(GanModel& model, const ParallelCorpus& natural, const ParallelCorpus& pseudo,
                            const GanSpec& spec);

struct GanTrainReport {
  PretrainReport pretrain;
  TrainHistory history;
  std::vector<StepReport> steps;
};
/// Pretraining followed by joint gated training with early stopping on
/// natural dev cross-entropy. Step reports are also passed to `on_step`.
GanTrainReport gan_train(GanModel& model, const ParallelCorpus& natural, const ParallelCorpus& pseudo,
                         const ParallelCorpus& dev, const GanSpec& spec,
                         const std::function<void(const StepReport&)>& on_step = {});

}  // namespace monomt
