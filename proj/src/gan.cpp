#include "monomt/gan.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

namespace monomt {

void GanSpec::validate() const {
  if (!(g_gate_accuracy > 0.0 && g_gate_accuracy < d_freeze_accuracy && d_freeze_accuracy <= 1.0)) {
    throw Error("gan spec: need 0 < g_gate_accuracy < d_freeze_accuracy <= 1");
  }
  if (disc_hidden == 0) throw Error("gan spec: disc_hidden must be positive");
  train.validate(model_groups());
}

GateDecision gate(double accuracy, const GanSpec& spec) {
  return {accuracy <= spec.d_freeze_accuracy, accuracy > spec.g_gate_accuracy};
}

// --- discriminator ----------------------------------------------------------

Discriminator::Discriminator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) : hidden_(hidden) {
  Rng rng(seed);
  add_gru(params_, "disc_fwd", group::kDiscriminator, input_dim, hidden, rng);
  add_gru(params_, "disc_bwd", group::kDiscriminator, input_dim, hidden, rng);
  params_.add("disc_W", group::kDiscriminator, {2 * hidden, 1}, rng);
  params_.add("disc_b", group::kDiscriminator, {1, 1}, rng);
}

Tensor Discriminator::forward(Tape& tape, const EncodedSource& enc) const {
  const std::size_t B = enc.batch, S = enc.src_len, H = hidden_;
  const auto weights = enc.mean_weights.values();
  std::vector<Tensor> inputs(S), masks(S);
  std::vector<bool> full(S, true);
  for (std::size_t j = 0; j < S; ++j) {
    std::vector<std::int32_t> rows(B);
    std::vector<double> m(B);
    for (std::size_t b = 0; b < B; ++b) {
      rows[b] = static_cast<std::int32_t>(b * S + j);
      m[b] = weights[b * S + j] > 0.0 ? 1.0 : 0.0;
      if (m[b] == 0.0) full[j] = false;
    }
    inputs[j] = tape.embedding_lookup(enc.states, rows);
    masks[j] = Tensor::from({B, 1}, std::move(m));
  }
  auto run = [&](const std::string& dir, bool reverse) {
    const auto& p = params_;
    std::vector<Tensor> out(S);
    Tensor h = Tensor::zeros({B, H});
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t j = reverse ? S - 1 - i : i;
      auto h_new = gru_step(tape, inputs[j], h, p.get(dir + "_W"), p.get(dir + "_U"), p.get(dir + "_b"), H);
      h = full[j] ? h_new : tape.add(h, tape.scale_rows(tape.sub(h_new, h), masks[j]));
      out[j] = h;
    }
    return tape.stack_steps(out);
  };
  const auto states = tape.concat_cols({run("disc_fwd", false), run("disc_bwd", true)});
  const auto pooled = tape.weighted_sum(enc.mean_weights, states);
  return tape.sigmoid(tape.add_bias(tape.matmul(pooled, params_.get("disc_W")), params_.get("disc_b")));
}

Tensor d_loss(Tape& tape, const Tensor& p_natural, const Tensor& p_pseudo) {
  const auto nat = tape.mean(tape.log(tape.clamp(p_natural, kProbClamp, 1.0 - kProbClamp)));
  const auto pse = tape.mean(tape.log(tape.one_minus(tape.clamp(p_pseudo, kProbClamp, 1.0 - kProbClamp))));
  return tape.add(tape.scale(nat, -0.5), tape.scale(pse, -0.5));
}

Tensor g_loss(Tape& tape, const Tensor& p_pseudo) {
  return tape.scale(tape.mean(tape.log(tape.clamp(p_pseudo, kProbClamp, 1.0 - kProbClamp))), -1.0);
}

double discriminator_accuracy(std::span<const double> p_natural, std::span<const double> p_pseudo) {
  const std::size_t n = p_natural.size() + p_pseudo.size();
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  for (double p : p_natural) correct += p > 0.5 ? 1 : 0;
  for (double p : p_pseudo) correct += p < 0.5 ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(n);
}

EncodedSource detach(const EncodedSource& e) {
  EncodedSource out = e;
  out.states = e.states.clone(false);
  out.keys = e.keys.clone(false);
  return out;
}

// --- model ------------------------------------------------------------------

GanModel::GanModel(ModelBundle& bundle, const GanSpec& spec, std::uint64_t seed) : bundle_(&bundle) {
  spec.validate();
  const auto& mp = bundle.model.params();
  pseudo_.add("pseudo_emb", group::kPseudoEmbeddings, mp.get("src_emb").clone(true));
  for (const char* dir : {"fwd", "bwd"}) {
    for (const char* w : {"_W", "_U", "_b"}) {
      pseudo_.add(std::string("pseudo_") + dir + w, group::kPseudoEncoder,
                  mp.get(std::string("enc_") + dir + w).clone(true));
    }
  }
  disc_ = Discriminator(2 * bundle.model.config().hidden_dim, spec.disc_hidden, derive_seed(seed, "discriminator"));
}

EncoderWeights GanModel::pseudo_encoder() const {
  const auto& p = pseudo_;
  return {p.get("pseudo_emb"),   p.get("pseudo_fwd_W"), p.get("pseudo_fwd_U"), p.get("pseudo_fwd_b"),
          p.get("pseudo_bwd_W"), p.get("pseudo_bwd_U"), p.get("pseudo_bwd_b"), bundle_->model.config().hidden_dim};
}

EncodedSource GanModel::encode_natural(Tape& tape, const Batch& b) const {
  return encode_source(tape, bundle_->model.encoder(), bundle_->model.attention(), b);
}

EncodedSource GanModel::encode_pseudo(Tape& tape, const Batch& b) const {
  return encode_source(tape, pseudo_encoder(), bundle_->model.attention(), b);
}

namespace {

Tensor mean_token_loss(Tape& tape, const Model& m, const EncodedSource& enc, const Batch& b) {
  const auto total = teacher_forced_loss(tape, m.decoder(), m.attention(), enc, b);
  return tape.scale(total, 1.0 / static_cast<double>(b.target_tokens()));
}

}  // namespace

Tensor GanModel::mt_loss_natural(Tape& tape, const Batch& b) const {
  return mean_token_loss(tape, bundle_->model, encode_natural(tape, b), b);
}

Tensor GanModel::mt_loss_pseudo(Tape& tape, const Batch& b) const {
  return mean_token_loss(tape, bundle_->model, encode_pseudo(tape, b), b);
}

std::vector<Tensor> GanModel::mt_tensors() const {
  auto out = bundle_->model.params().tensors();
  for (auto& t : pseudo_.tensors()) out.push_back(t);
  return out;
}

void GanModel::zero_grad() {
  bundle_->model.params().zero_grad();
  pseudo_.zero_grad();
  disc_.params().zero_grad();
}

GanOptimizers::GanOptimizers(const GanModel& model, const GanSpec& spec)
    : d(model.d_tensors(), spec.train.adam), g(model.g_tensors(), spec.train.adam),
      mt(model.mt_tensors(), spec.train.adam) {}

std::string StepReport::json_line() const {
  nlohmann::ordered_json j;
  j["update"] = update;
  j["accuracy"] = accuracy;
  j["d_fired"] = d_fired;
  j["g_fired"] = g_fired;
  j["mt_fired"] = mt_fired;
  j["d_loss"] = d_loss;
  j["g_loss"] = g_loss;
  j["mt_loss"] = mt_loss;
  j["d_checksum_before"] = hex64(d_before);
  j["d_checksum_after"] = hex64(d_after);
  j["g_checksum_before"] = hex64(g_before);
  j["g_checksum_after"] = hex64(g_after);
  return j.dump();
}

namespace {

void require_finite(double v, const char* what, std::size_t update) {
  if (!std::isfinite(v)) {
    throw DivergenceError(std::string("non-finite ") + what + " at update " + std::to_string(update));
  }
}

struct Probs {
  Tensor natural, pseudo;
};

// D outputs on encodings computed without a gradient path to E or G.
Probs discriminate(Tape& tape, const GanModel& model, const Batch& natural, const Batch& pseudo) {
  Tape enc_tape(Tape::Mode::Inference);
  const auto nat = model.encode_natural(enc_tape, natural);
  const auto pse = model.encode_pseudo(enc_tape, pseudo);
  return {model.discriminator().forward(tape, nat), model.discriminator().forward(tape, pse)};
}

double g_loss_value(std::span<const double> p_pseudo) {
  double s = 0.0;
  for (double p : p_pseudo) s += std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp));
  return -s / static_cast<double>(p_pseudo.size());
}

// Endless seeded stream of length-bucketed batches.
class BatchStream {
 public:
  BatchStream(const std::vector<EncodedPair>& pairs, std::size_t batch_size, std::uint64_t seed)
      : pairs_(pairs), batch_size_(batch_size), rng_(seed) {
    if (pairs.empty()) throw DataError("gan: empty training corpus");
    for (const auto& p : pairs) lengths_.push_back(p.src.size());
  }
  Batch next() {
    if (pos_ == batches_.size()) {
      batches_ = make_batches(lengths_, batch_size_, rng_);
      pos_ = 0;
    }
    std::vector<EncodedPair> sel;
    for (auto i : batches_[pos_++]) sel.push_back(pairs_[i]);
    return make_batch(sel);
  }

 private:
  const std::vector<EncodedPair>& pairs_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> lengths_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t pos_ = 0;
};

}  // namespace

StepReport gan_update_step(GanModel& model, GanOptimizers& opt, const Batch& natural, const Batch& pseudo,
                           const GanSpec& spec, std::size_t update_index) {
  StepReport r;
  r.update = update_index;
  model.zero_grad();
  r.d_before = r.d_after = model.d_checksum();
  r.g_before = r.g_after = model.g_checksum();

  if (spec.adversarial) {
    Tape tape;
    const auto probs = discriminate(tape, model, natural, pseudo);
    r.accuracy = discriminator_accuracy(probs.natural.values(), probs.pseudo.values());
    const auto jd = d_loss(tape, probs.natural, probs.pseudo);
    r.d_loss = jd.item();
    r.g_loss = g_loss_value(probs.pseudo.values());
    require_finite(r.d_loss, "discriminator loss", update_index);
    const auto decision = gate(r.accuracy, spec);

    if (decision.update_d) {
      tape.backward(jd);
      opt.d.step();
      r.d_fired = true;
    }
    r.d_after = model.d_checksum();
    model.zero_grad();

    r.g_before = model.g_checksum();
    if (decision.update_g) {
      Tape gt;
      const auto p = model.discriminator().forward(gt, model.encode_pseudo(gt, pseudo));
      const auto jg = g_loss(gt, p);
      require_finite(jg.item(), "generator loss", update_index);
      gt.backward(jg);
      opt.g.step();
      r.g_fired = true;
      model.zero_grad();
    }
    r.g_after = model.g_checksum();
  }

  // The pseudo batch is encoded again with the (possibly) updated G.
  Tape mt;
  const auto loss = mt.scale(mt.add(model.mt_loss_natural(mt, natural), model.mt_loss_pseudo(mt, pseudo)), 0.5);
  r.mt_loss = loss.item();
  require_finite(r.mt_loss, "translation loss", update_index);
  mt.backward(loss);
  opt.mt.step();
  r.mt_fired = true;
  model.zero_grad();
  return r;
}

PretrainReport gan_pretrain(GanModel& model, const ParallelCorpus& natural, const ParallelCorpus& pseudo,
                            const GanSpec& spec) {
  spec.validate();
  PretrainReport rep;
  if (spec.pretrain_updates == 0) return rep;
  const auto nat_pairs = model.bundle().encode(natural);
  const auto pse_pairs = model.bundle().encode(pseudo);
  BatchStream nat(nat_pairs, spec.train.batch_size, derive_seed(spec.train.seed, "gan-pretrain-natural"));
  BatchStream pse(pse_pairs, spec.train.batch_size, derive_seed(spec.train.seed, "gan-pretrain-pseudo"));
  Adam g_opt(model.g_tensors(), spec.train.adam);
  Adam d_opt(model.d_tensors(), spec.train.adam);
  for (std::size_t u = 1; u <= spec.pretrain_updates; ++u) {
    const auto nb = nat.next();
    const auto pb = pse.next();
    model.zero_grad();
    {
      Tape tape;
      const auto loss = model.mt_loss_pseudo(tape, pb);
      require_finite(loss.item(), "pretraining translation loss", u);
      tape.backward(loss);
      g_opt.step();
    }
    model.zero_grad();
    if (spec.adversarial) {
      Tape tape;
      const auto probs = discriminate(tape, model, nb, pb);
      rep.final_accuracy = discriminator_accuracy(probs.natural.values(), probs.pseudo.values());
      const auto jd = d_loss(tape, probs.natural, probs.pseudo);
      require_finite(jd.item(), "pretraining discriminator loss", u);
      tape.backward(jd);
      d_opt.step();
      model.zero_grad();
    }
    rep.updates = u;
  }
  return rep;
}

GanTrainReport gan_train(GanModel& model, const ParallelCorpus& natural, const ParallelCorpus& pseudo,
                         const ParallelCorpus& dev, const GanSpec& spec,
                         const std::function<void(const StepReport&)>& on_step) {
  spec.validate();
  if (dev.empty()) throw DataError("gan: dev corpus is empty");
  GanTrainReport report;
  report.pretrain = gan_pretrain(model, natural, pseudo, spec);

  const auto nat_pairs = model.bundle().encode(natural);
  const auto pse_pairs = model.bundle().encode(pseudo);
  const auto dev_pairs = model.bundle().encode(dev);
  BatchStream nat(nat_pairs, spec.train.batch_size, derive_seed(spec.train.seed, "gan-natural"));
  BatchStream pse(pse_pairs, spec.train.batch_size, derive_seed(spec.train.seed, "gan-pseudo"));
  GanOptimizers opt(model, spec);

  ParameterSet all;
  for (auto* ps : {&model.bundle().model.params(), &model.pseudo_params(), &model.discriminator().params()})
    for (const auto& p : ps->all()) all.add(p.name, p.group, p.tensor);

  auto& hist = report.history;
  hist.best_dev_loss = std::numeric_limits<double>::infinity();
  std::optional<ParameterSet> best;
  std::size_t bad = 0;
  const auto& ts = spec.train;
  for (std::size_t u = 1; u <= ts.max_updates; ++u) {
    const auto step = gan_update_step(model, opt, nat.next(), pse.next(), spec, u);
    if (on_step) on_step(step);
    report.steps.push_back(step);
    hist.train_losses.push_back(step.mt_loss);
    hist.updates = u;
    if (u % ts.validation_interval == 0 || u == ts.max_updates) {
      const double d = score_encoded(model.bundle().model, dev_pairs).mean_token_xent;
      require_finite(d, "dev loss", u);
      hist.validations.push_back({u, d});
      if (d < hist.best_dev_loss) {
        hist.best_dev_loss = d;
        hist.best_update = u;
        if (best) best->assign_values(all);
        else best = all.deep_copy();
        bad = 0;
      } else if (++bad >= ts.patience) {
        hist.early_stopped = true;
        break;
      }
    }
  }
  if (best) all.assign_values(*best);
  model.bundle().updates += hist.updates;
  return report;
}

}  // namespace monomt
