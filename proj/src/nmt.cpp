#include "monomt/nmt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace monomt {

namespace {

constexpr double kMaskedScore = -1e9;

Tensor row_mask(const Batch& batch, std::size_t t) {
  std::vector<double> m(batch.src_mask.begin() + static_cast<std::ptrdiff_t>(t * batch.size),
                        batch.src_mask.begin() + static_cast<std::ptrdiff_t>((t + 1) * batch.size));
  return Tensor::from({batch.size, 1}, std::move(m));
}

bool all_valid(const Batch& batch, std::size_t t) {
  for (std::size_t b = 0; b < batch.size; ++b)
    if (batch.src_mask[t * batch.size + b] == 0.0) return false;
  return true;
}

// h + m ⊙ (h_new − h): padded rows keep their previous state.
Tensor masked_update(Tape& tape, const Tensor& h, const Tensor& h_new, const Batch& batch, std::size_t t) {
  if (all_valid(batch, t)) return h_new;
  return tape.add(h, tape.scale_rows(tape.sub(h_new, h), row_mask(batch, t)));
}

double log_sum_exp(const double* x, std::size_t n) {
  const double mx = *std::max_element(x, x + n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - mx);
  return mx + std::log(z);
}

}  // namespace

const std::vector<std::string>& model_groups() {
  static const std::vector<std::string> groups = {group::kSrcEmbeddings, group::kEncoder,
                                                  group::kAttention, group::kDecoder,
                                                  group::kTgtEmbeddings};
  return groups;
}

void ModelConfig::validate() const {
  if (src_vocab_size == 0 || tgt_vocab_size == 0 || embed_dim == 0 || hidden_dim == 0 ||
      attention_dim == 0 || max_len == 0) {
    throw Error("model config: all sizes must be positive");
  }
}

std::size_t Batch::target_tokens() const {
  return std::accumulate(tgt_lengths.begin(), tgt_lengths.end(), std::size_t{0});
}

Batch make_batch(const std::vector<EncodedPair>& pairs) {
  Batch b;
  b.size = pairs.size();
  for (const auto& p : pairs) {
    if (p.src.empty()) throw DataError("make_batch: empty source sentence");
    b.src_len = std::max(b.src_len, p.src.size());
    b.tgt_len = std::max(b.tgt_len, p.tgt.size() + 1);
  }
  b.src.assign(b.src_len * b.size, Vocabulary::kPad);
  b.src_mask.assign(b.src_len * b.size, 0.0);
  b.tgt_in.assign(b.tgt_len * b.size, Vocabulary::kPad);
  b.tgt_out.assign(b.tgt_len * b.size, Vocabulary::kPad);
  b.tgt_mask.assign(b.tgt_len * b.size, 0.0);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& p = pairs[i];
    b.src_lengths.push_back(p.src.size());
    b.tgt_lengths.push_back(p.tgt.size() + 1);
    for (std::size_t t = 0; t < p.src.size(); ++t) {
      b.src[t * b.size + i] = p.src[t];
      b.src_mask[t * b.size + i] = 1.0;
    }
    for (std::size_t t = 0; t <= p.tgt.size(); ++t) {
      b.tgt_in[t * b.size + i] = t == 0 ? Vocabulary::kEos : p.tgt[t - 1];
      b.tgt_out[t * b.size + i] = t < p.tgt.size() ? p.tgt[t] : Vocabulary::kEos;
      b.tgt_mask[t * b.size + i] = 1.0;
    }
  }
  return b;
}

Batch make_source_batch(const std::vector<std::vector<std::int32_t>>& sources) {
  std::vector<EncodedPair> pairs;
  pairs.reserve(sources.size());
  for (const auto& s : sources) pairs.push_back({s, {}});
  return make_batch(pairs);
}

void add_gru(ParameterSet& ps, const std::string& prefix, const std::string& group, std::size_t in,
             std::size_t hidden, Rng& rng) {
  ps.add(prefix + "_W", group, {in, 3 * hidden}, rng);
  ps.add(prefix + "_U", group, {hidden, 3 * hidden}, rng);
  ps.add(prefix + "_b", group, {1, 3 * hidden}, rng);
}

Tensor gru_step(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& W, const Tensor& U,
                const Tensor& b, std::size_t hidden) {
  const auto xw = tape.add_bias(tape.matmul(x, W), b);
  const auto hu = tape.matmul(h, U);
  const auto z = tape.sigmoid(tape.add(tape.slice_cols(xw, 0, hidden), tape.slice_cols(hu, 0, hidden)));
  const auto r = tape.sigmoid(
      tape.add(tape.slice_cols(xw, hidden, hidden), tape.slice_cols(hu, hidden, hidden)));
  const auto n = tape.tanh(tape.add(tape.slice_cols(xw, 2 * hidden, hidden),
                                    tape.mul(r, tape.slice_cols(hu, 2 * hidden, hidden))));
  // (1 − z) ⊙ n + z ⊙ h
  return tape.add(n, tape.mul(z, tape.sub(h, n)));
}

EncodedSource encode_source(Tape& tape, const EncoderWeights& enc, const AttentionWeights& att,
                            const Batch& batch) {
  const std::size_t B = batch.size, S = batch.src_len, H = enc.hidden;
  std::vector<Tensor> embedded(S);
  for (std::size_t t = 0; t < S; ++t) embedded[t] = tape.embedding_lookup(enc.emb, batch.src_at(t));

  std::vector<Tensor> fwd(S), bwd(S);
  Tensor h = Tensor::zeros({B, H});
  for (std::size_t t = 0; t < S; ++t) {
    h = masked_update(tape, h, gru_step(tape, embedded[t], h, enc.fwd_W, enc.fwd_U, enc.fwd_b, H), batch, t);
    fwd[t] = h;
  }
  h = Tensor::zeros({B, H});
  for (std::size_t t = S; t-- > 0;) {
    h = masked_update(tape, h, gru_step(tape, embedded[t], h, enc.bwd_W, enc.bwd_U, enc.bwd_b, H), batch, t);
    bwd[t] = h;
  }

  EncodedSource out;
  out.batch = B;
  out.src_len = S;
  out.states = tape.concat_cols({tape.stack_steps(fwd), tape.stack_steps(bwd)});
  out.keys = tape.add_bias(tape.matmul(out.states, att.W_ctx), att.b);
  std::vector<double> bias(B * S), mean(B * S);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < S; ++j) {
      const bool valid = batch.src_mask[j * B + b] != 0.0;
      bias[b * S + j] = valid ? 0.0 : kMaskedScore;
      mean[b * S + j] = valid ? 1.0 / static_cast<double>(batch.src_lengths[b]) : 0.0;
    }
  }
  out.mask_bias = Tensor::from({B, S}, std::move(bias));
  out.mean_weights = Tensor::from({B, S}, std::move(mean));
  return out;
}

EncodedSource select_sources(Tape& tape, const EncodedSource& e, const std::vector<std::int32_t>& rows) {
  const std::size_t S = e.src_len;
  std::vector<std::int32_t> state_rows;
  state_rows.reserve(rows.size() * S);
  for (auto r : rows)
    for (std::size_t j = 0; j < S; ++j) state_rows.push_back(static_cast<std::int32_t>(r * S + j));
  EncodedSource out;
  out.batch = rows.size();
  out.src_len = S;
  out.states = tape.embedding_lookup(e.states, state_rows);
  out.keys = tape.embedding_lookup(e.keys, state_rows);
  out.mask_bias = tape.embedding_lookup(e.mask_bias, rows);
  out.mean_weights = tape.embedding_lookup(e.mean_weights, rows);
  return out;
}

Tensor decoder_init(Tape& tape, const DecoderWeights& dec, const EncodedSource& enc) {
  const auto mean = tape.weighted_sum(enc.mean_weights, enc.states);
  return tape.tanh(tape.add_bias(tape.matmul(mean, dec.init_W), dec.init_b));
}

DecoderStepOut decoder_step(Tape& tape, const DecoderWeights& dec, const AttentionWeights& att,
                            const EncodedSource& enc, const Tensor& prev_state,
                            std::span<const std::int32_t> prev_tokens, const Tensor& history,
                            const FusionWeights* fusion) {
  const std::size_t B = enc.batch, S = enc.src_len;
  const auto query = tape.matmul(prev_state, att.W_state);
  const auto energy = tape.tanh(tape.add_grouped(enc.keys, query));
  auto scores = tape.reshape(tape.matmul(energy, att.v), {B, S});
  scores = tape.add(scores, enc.mask_bias);
  const auto alpha = tape.softmax_rows(scores);
  const auto context = tape.weighted_sum(alpha, enc.states);
  const auto emb = tape.embedding_lookup(dec.tgt_emb, prev_tokens);
  const auto state = gru_step(tape, tape.concat_cols({emb, context}), prev_state, dec.W, dec.U, dec.b, dec.hidden);
  const auto readout =
      tape.tanh(tape.add_bias(tape.matmul(tape.concat_cols({state, context, emb}), dec.ro_W), dec.ro_b));
  auto logits = tape.add_bias(tape.matmul(readout, dec.out_W), dec.out_b);
  if (fusion != nullptr && history.defined()) {
    Tensor h = history;
    if (fusion->gated) {
      h = tape.mul(tape.sigmoid(tape.add_bias(tape.matmul(history, fusion->gate_U), fusion->gate_b)), history);
    }
    logits = tape.add(logits, tape.matmul(h, fusion->W));
  }
  return {state, logits};
}

Tensor teacher_forced_loss(Tape& tape, const DecoderWeights& dec, const AttentionWeights& att,
                           const EncodedSource& enc, const Batch& batch, const HistoryModel* history) {
  Tensor state = decoder_init(tape, dec, enc);
  Tensor hist;
  if (history) hist = history->initial_state(tape, batch.size);
  Tensor total;
  for (std::size_t t = 0; t < batch.tgt_len; ++t) {
    if (history) hist = history->advance(tape, hist, batch.tgt_in_at(t));
    auto out = decoder_step(tape, dec, att, enc, state, batch.tgt_in_at(t), hist,
                            history ? &history->fusion() : nullptr);
    auto step_loss = tape.cross_entropy(out.logits, batch.tgt_out_at(t), batch.tgt_mask_at(t));
    total = total.defined() ? tape.add(total, step_loss) : step_loss;
    state = out.state;
  }
  return total;
}

// --- Model ------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t E = config_.embed_dim, H = config_.hidden_dim, A = config_.attention_dim;
  params_.add("src_emb", group::kSrcEmbeddings, {config_.src_vocab_size, E}, rng);
  add_gru(params_, "enc_fwd", group::kEncoder, E, H, rng);
  add_gru(params_, "enc_bwd", group::kEncoder, E, H, rng);
  params_.add("att_W_state", group::kAttention, {H, A}, rng);
  params_.add("att_W_ctx", group::kAttention, {2 * H, A}, rng);
  params_.add("att_b", group::kAttention, {1, A}, rng);
  params_.add("att_v", group::kAttention, {A, 1}, rng);
  params_.add("dec_init_W", group::kDecoder, {2 * H, H}, rng);
  params_.add("dec_init_b", group::kDecoder, {1, H}, rng);
  add_gru(params_, "dec", group::kDecoder, E + 2 * H, H, rng);
  params_.add("dec_ro_W", group::kDecoder, {H + 2 * H + E, H}, rng);
  params_.add("dec_ro_b", group::kDecoder, {1, H}, rng);
  params_.add("dec_out_W", group::kDecoder, {H, config_.tgt_vocab_size}, rng);
  params_.add("dec_out_b", group::kDecoder, {1, config_.tgt_vocab_size}, rng);
  params_.add("tgt_emb", group::kTgtEmbeddings, {config_.tgt_vocab_size, E}, rng);
}

Model::Model(ModelConfig config, ParameterSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  const auto& emb = params_.get("src_emb");
  if (emb.rows() != config_.src_vocab_size || params_.get("tgt_emb").rows() != config_.tgt_vocab_size) {
    throw DataError("model parameters do not match the configured vocabulary sizes");
  }
  for (const auto& p : params_.all()) {
    if (std::find(model_groups().begin(), model_groups().end(), p.group) == model_groups().end()) {
      throw DataError("parameter '" + p.name + "' has unknown group '" + p.group + "'");
    }
  }
}

EncoderWeights Model::encoder() const {
  const auto& p = params_;
  return {p.get("src_emb"),   p.get("enc_fwd_W"), p.get("enc_fwd_U"), p.get("enc_fwd_b"),
          p.get("enc_bwd_W"), p.get("enc_bwd_U"), p.get("enc_bwd_b"), config_.hidden_dim};
}

AttentionWeights Model::attention() const {
  const auto& p = params_;
  return {p.get("att_W_state"), p.get("att_W_ctx"), p.get("att_b"), p.get("att_v")};
}

DecoderWeights Model::decoder() const {
  const auto& p = params_;
  return {p.get("dec_init_W"), p.get("dec_init_b"), p.get("dec_W"),     p.get("dec_U"),
          p.get("dec_b"),      p.get("dec_ro_W"),   p.get("dec_ro_b"),  p.get("dec_out_W"),
          p.get("dec_out_b"),  p.get("tgt_emb"),    config_.hidden_dim};
}

Tensor Model::forward_loss(Tape& tape, const Batch& batch, const HistoryModel* history) const {
  const auto enc = encode_source(tape, encoder(), attention(), batch);
  const auto total = teacher_forced_loss(tape, decoder(), attention(), enc, batch, history);
  return tape.scale(total, 1.0 / static_cast<double>(batch.target_tokens()));
}

void Model::extend_source_vocab(std::size_t count, Rng& rng) {
  if (count == 0) return;
  const auto& old = params_.get("src_emb");
  const std::size_t E = old.cols();
  std::vector<double> v(old.values().begin(), old.values().end());
  for (std::size_t i = 0; i < count * E; ++i) v.push_back(rng.uniform(-0.08, 0.08));
  params_.replace("src_emb", Tensor::from({old.rows() + count, E}, std::move(v), true));
  config_.src_vocab_size += count;
}

// --- bundle -----------------------------------------------------------------

Sentence ModelBundle::prepare_source(const Sentence& s) const { return segment_sentence(s, src_vocab); }

std::vector<EncodedPair> ModelBundle::encode(const ParallelCorpus& corpus) const {
  std::vector<EncodedPair> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    out.push_back({src_vocab.encode(prepare_source(p.source)), tgt_vocab.encode(p.target)});
  }
  return out;
}

ModelBundle make_bundle(const ParallelCorpus& train, ModelConfig config, std::uint64_t seed,
                        std::size_t min_freq, const Corpus* extra_target_text) {
  const auto sources = train.sources();
  auto src_vocab = Vocabulary::build(sources, min_freq);
  // Continuation forms of whole words and characters keep segmented
  // out-of-vocabulary words representable.
  std::vector<std::string> words(src_vocab.entries().begin() + 4, src_vocab.entries().end());
  for (const auto& w : words) {
    if (!src_vocab.is_marked(src_vocab.id(w)) && !w.ends_with(kContinuation)) {
      src_vocab.add(w + std::string(kContinuation));
    }
  }
  add_character_inventory(src_vocab, sources);
  Corpus targets = train.targets();
  if (extra_target_text) {
    targets.sentences.insert(targets.sentences.end(), extra_target_text->sentences.begin(),
                             extra_target_text->sentences.end());
  }
  auto tgt_vocab = Vocabulary::build(targets, min_freq);
  config.src_vocab_size = src_vocab.size();
  config.tgt_vocab_size = tgt_vocab.size();
  return {Model(config, seed), std::move(src_vocab), std::move(tgt_vocab), 0};
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  bundle.model.params().save(path);
  bundle.src_vocab.save(path + ".src.vocab");
  bundle.tgt_vocab.save(path + ".tgt.vocab");
  const auto& c = bundle.model.config();
  nlohmann::ordered_json j;
  j["format"] = "monomt-model";
  j["version"] = 1;
  j["config"] = {{"src_vocab_size", c.src_vocab_size}, {"tgt_vocab_size", c.tgt_vocab_size},
                 {"embed_dim", c.embed_dim},           {"hidden_dim", c.hidden_dim},
                 {"attention_dim", c.attention_dim},   {"max_len", c.max_len}};
  j["src_vocab_hash"] = hex64(bundle.src_vocab.hash());
  j["tgt_vocab_hash"] = hex64(bundle.tgt_vocab.hash());
  j["updates"] = bundle.updates;
  write_file(path + ".json", j.dump(2) + "\n");
}

ModelBundle load_bundle(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path + ".json"));
  if (j.value("format", "") != "monomt-model") throw DataError(path + ".json: not a model sidecar");
  ModelConfig c;
  const auto& jc = j.at("config");
  c.src_vocab_size = jc.at("src_vocab_size");
  c.tgt_vocab_size = jc.at("tgt_vocab_size");
  c.embed_dim = jc.at("embed_dim");
  c.hidden_dim = jc.at("hidden_dim");
  c.attention_dim = jc.at("attention_dim");
  c.max_len = jc.at("max_len");
  auto src = Vocabulary::load(path + ".src.vocab");
  auto tgt = Vocabulary::load(path + ".tgt.vocab");
  if (hex64(src.hash()) != j.at("src_vocab_hash") || hex64(tgt.hash()) != j.at("tgt_vocab_hash")) {
    throw DataError(path + ": vocabulary files do not match the checkpoint sidecar");
  }
  return {Model(c, ParameterSet::load(path)), std::move(src), std::move(tgt), j.at("updates").get<std::size_t>()};
}

// --- training ---------------------------------------------------------------

void TrainSpec::validate(const std::vector<std::string>& known_groups) const {
  if (batch_size == 0) throw Error("train spec: batch_size must be positive");
  if (patience < 1) throw Error("train spec: patience must be >= 1");
  if (validation_interval == 0) throw Error("train spec: validation_interval must be positive");
  for (const auto& g : freeze) {
    if (std::find(known_groups.begin(), known_groups.end(), g) == known_groups.end()) {
      throw Error("train spec: unknown freeze group '" + g + "'");
    }
  }
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& lengths,
                                                   std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::size_t chunk = batch_size * 16;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += chunk) {
    const std::size_t end = std::min(order.size(), start + chunk);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    for (std::size_t i = start; i < end; i += batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(end, i + batch_size)));
    }
  }
  rng.shuffle(batches);
  return batches;
}

TrainHistory run_training(const TrainLoop& loop, const std::vector<Tensor>& trainable,
                          ParameterSet& snapshot, const TrainSpec& spec, Adam* optimizer) {
  if (loop.examples == 0) throw DataError("training corpus is empty");
  std::optional<Adam> own;
  if (!optimizer) optimizer = &own.emplace(trainable, spec.adam);
  std::vector<std::size_t> lengths(loop.examples);
  for (std::size_t i = 0; i < loop.examples; ++i) lengths[i] = loop.length_of(i);

  Rng rng(spec.seed);
  TrainHistory hist;
  hist.best_dev_loss = std::numeric_limits<double>::infinity();
  std::optional<ParameterSet> best;
  std::size_t bad = 0;
  bool stop = false;
  while (!stop && hist.updates < spec.max_updates) {
    for (const auto& idx : make_batches(lengths, spec.batch_size, rng)) {
      snapshot.zero_grad();
      Tape tape;
      const auto loss = loop.loss(tape, idx);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw DivergenceError("non-finite training loss at update " + std::to_string(hist.updates + 1));
      }
      tape.backward(loss);
      optimizer->step();
      ++hist.updates;
      hist.train_losses.push_back(lv);
      const bool at_interval = hist.updates % spec.validation_interval == 0;
      if (loop.dev_loss && (at_interval || hist.updates == spec.max_updates)) {
        const double dev = loop.dev_loss();
        if (!std::isfinite(dev)) {
          throw DivergenceError("non-finite dev loss at update " + std::to_string(hist.updates));
        }
        hist.validations.push_back({hist.updates, dev});
        if (dev < hist.best_dev_loss) {
          hist.best_dev_loss = dev;
          hist.best_update = hist.updates;
          if (best) best->assign_values(snapshot);
          else best = snapshot.deep_copy();
          bad = 0;
        } else if (++bad >= spec.patience) {
          hist.early_stopped = true;
          stop = true;
        }
      }
      if (stop || hist.updates >= spec.max_updates) break;
    }
  }
  if (best) snapshot.assign_values(*best);
  snapshot.zero_grad();
  return hist;
}

namespace {

TrainLoop model_loop(const Model& model, const std::vector<EncodedPair>& pairs,
                     const std::vector<EncodedPair>* dev) {
  TrainLoop loop;
  loop.examples = pairs.size();
  loop.length_of = [&pairs](std::size_t i) { return pairs[i].src.size(); };
  loop.loss = [&model, &pairs](Tape& tape, const std::vector<std::size_t>& idx) {
    std::vector<EncodedPair> sel;
    sel.reserve(idx.size());
    for (auto i : idx) sel.push_back(pairs[i]);
    return model.forward_loss(tape, make_batch(sel));
  };
  if (dev) loop.dev_loss = [&model, dev]() { return score_encoded(model, *dev).mean_token_xent; };
  return loop;
}

}  // namespace

TrainHistory train(ModelBundle& bundle, const ParallelCorpus& corpus, const ParallelCorpus& dev,
                   const TrainSpec& spec) {
  spec.validate(model_groups());
  if (corpus.empty() || dev.empty()) throw DataError("train: corpora must be non-empty");
  const auto pairs = bundle.encode(corpus);
  const auto dev_pairs = bundle.encode(dev);
  auto& params = bundle.model.params();
  auto hist = run_training(model_loop(bundle.model, pairs, &dev_pairs), params.tensors_except(spec.freeze),
                           params, spec);
  bundle.updates += hist.updates;
  return hist;
}

FineTuneReport fine_tune(ModelBundle& bundle, const ParallelCorpus& in_domain_pseudo,
                         const ParallelCorpus& out_domain_natural, const ParallelCorpus& dev,
                         const TrainSpec& spec, const FineTuneOptions& options) {
  spec.validate(model_groups());
  FineTuneReport report;
  if (!options.vocab_extension.empty()) {
    const std::size_t old_rows = bundle.src_vocab.size();
    report.new_entries = extend_vocabulary(bundle.src_vocab, options.vocab_extension);
    Rng rng(derive_seed(spec.seed, "extend-vocab"));
    bundle.model.extend_source_vocab(report.new_entries, rng);
    if (report.new_entries > 0 && options.extension_pretrain_epochs > 0 && !in_domain_pseudo.empty()) {
      const auto pairs = bundle.encode(in_domain_pseudo);
      const std::size_t per_epoch = (pairs.size() + spec.batch_size - 1) / spec.batch_size;
      TrainSpec pre = spec;
      pre.max_updates = per_epoch * options.extension_pretrain_epochs;
      pre.seed = derive_seed(spec.seed, "extension-pretrain");
      auto emb = bundle.model.params().get("src_emb");
      Adam adam({emb}, spec.adam);
      adam.restrict_rows(emb, old_rows);
      auto h = run_training(model_loop(bundle.model, pairs, nullptr), {emb}, bundle.model.params(), pre, &adam);
      report.pretrain_updates = h.updates;
      bundle.updates += h.updates;
    }
  }
  const auto mixed = mix_equal(in_domain_pseudo, out_domain_natural, derive_seed(spec.seed, "mix"));
  report.history = train(bundle, mixed, dev, spec);
  return report;
}

// --- decoding ---------------------------------------------------------------

std::vector<std::int32_t> beam_search(const Model& model, const std::vector<std::int32_t>& src,
                                      const BeamOptions& options, const HistoryModel* history) {
  if (options.beam_width == 0) throw Error("beam_search: beam width must be >= 1");
  if (src.empty()) return {};
  Tape tape(Tape::Mode::Inference);
  const auto dec = model.decoder();
  const auto att = model.attention();
  const auto enc1 = encode_source(tape, model.encoder(), att, make_source_batch({src}));
  const std::size_t V = model.config().tgt_vocab_size;
  const std::size_t max_len = model.config().max_len;

  struct Hyp {
    std::vector<std::int32_t> tokens;
    double score = 0.0;
  };
  auto norm = [&](double score, std::size_t len) {
    return score / std::pow(static_cast<double>(std::max<std::size_t>(len, 1)), options.length_alpha);
  };

  std::vector<Hyp> live{Hyp{}};
  std::vector<std::pair<double, std::vector<std::int32_t>>> finished;
  Tensor state = decoder_init(tape, dec, enc1);
  Tensor hist;
  if (history) hist = history->initial_state(tape, 1);

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    const std::size_t K = live.size();
    const auto enc = K == 1 ? enc1 : select_sources(tape, enc1, std::vector<std::int32_t>(K, 0));
    std::vector<std::int32_t> prev(K);
    for (std::size_t k = 0; k < K; ++k) prev[k] = live[k].tokens.empty() ? Vocabulary::kEos : live[k].tokens.back();
    if (history) hist = history->advance(tape, hist, prev);
    const auto out = decoder_step(tape, dec, att, enc, state, prev, hist, history ? &history->fusion() : nullptr);

    struct Cand {
      double score;
      std::size_t k;
      std::int32_t tok;
    };
    std::vector<Cand> cands;
    cands.reserve(K * V);
    const auto logits = out.logits.values();
    for (std::size_t k = 0; k < K; ++k) {
      const double* row = logits.data() + k * V;
      const double lse = log_sum_exp(row, V);
      for (std::size_t v = 0; v < V; ++v) {
        if (static_cast<std::int32_t>(v) == Vocabulary::kPad) continue;
        cands.push_back({live[k].score + row[v] - lse, k, static_cast<std::int32_t>(v)});
      }
    }
    const std::size_t want = options.beam_width - std::min(options.beam_width, finished.size());
    const std::size_t take = std::min(want, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.k != b.k) return a.k < b.k;
                        return a.tok < b.tok;
                      });
    std::vector<Hyp> next;
    std::vector<std::int32_t> rows;
    for (std::size_t i = 0; i < take; ++i) {
      const auto& c = cands[i];
      if (c.tok == Vocabulary::kEos) {
        finished.emplace_back(norm(c.score, live[c.k].tokens.size() + 1), live[c.k].tokens);
      } else {
        Hyp h{live[c.k].tokens, c.score};
        h.tokens.push_back(c.tok);
        next.push_back(std::move(h));
        rows.push_back(static_cast<std::int32_t>(c.k));
      }
    }
    if (finished.size() >= options.beam_width) break;
    live = std::move(next);
    if (!live.empty()) {
      state = tape.embedding_lookup(out.state, rows);
      if (history) hist = tape.embedding_lookup(hist, rows);
    }
  }
  for (const auto& h : live) finished.emplace_back(norm(h.score, h.tokens.size()), h.tokens);
  if (finished.empty()) return {};
  const auto best = std::max_element(finished.begin(), finished.end(),
                                     [](const auto& a, const auto& b) { return a.first < b.first; });
  return best->second;
}

Sentence translate(const ModelBundle& bundle, const Sentence& source, const BeamOptions& options,
                   const HistoryModel* history) {
  const auto ids = bundle.src_vocab.encode(bundle.prepare_source(source));
  return bundle.tgt_vocab.decode(beam_search(bundle.model, ids, options, history));
}

Corpus translate_corpus(const ModelBundle& bundle, const Corpus& sources, const BeamOptions& options,
                        const HistoryModel* history) {
  Corpus out;
  out.sentences.reserve(sources.size());
  for (const auto& s : sources.sentences) out.sentences.push_back(translate(bundle, s, options, history));
  return out;
}

namespace {

// Per-sentence summed cross-entropy for one batch, computed without a tape.
std::vector<double> sentence_xent(const Model& model, const Batch& batch, const HistoryModel* history) {
  Tape tape(Tape::Mode::Inference);
  const auto dec = model.decoder();
  const auto att = model.attention();
  const auto enc = encode_source(tape, model.encoder(), att, batch);
  Tensor state = decoder_init(tape, dec, enc);
  Tensor hist;
  if (history) hist = history->initial_state(tape, batch.size);
  std::vector<double> out(batch.size, 0.0);
  const std::size_t V = model.config().tgt_vocab_size;
  for (std::size_t t = 0; t < batch.tgt_len; ++t) {
    if (history) hist = history->advance(tape, hist, batch.tgt_in_at(t));
    auto step = decoder_step(tape, dec, att, enc, state, batch.tgt_in_at(t), hist,
                             history ? &history->fusion() : nullptr);
    const auto logits = step.logits.values();
    for (std::size_t b = 0; b < batch.size; ++b) {
      if (batch.tgt_mask[t * batch.size + b] == 0.0) continue;
      const double* row = logits.data() + b * V;
      out[b] += log_sum_exp(row, V) - row[batch.tgt_out[t * batch.size + b]];
    }
    state = step.state;
  }
  return out;
}

}  // namespace

CorpusScore score_encoded(const Model& model, const std::vector<EncodedPair>& pairs,
                          const HistoryModel* history, std::size_t batch_size) {
  CorpusScore s;
  if (pairs.empty()) return s;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].src.size() < pairs[b].src.size(); });
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<EncodedPair> sel;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) sel.push_back(pairs[order[i]]);
    const auto batch = make_batch(sel);
    for (double x : sentence_xent(model, batch, history)) total += x;
    s.tokens += batch.target_tokens();
  }
  s.sentences = pairs.size();
  s.mean_sentence_xent = total / static_cast<double>(s.sentences);
  s.mean_token_xent = total / static_cast<double>(s.tokens);
  return s;
}

CorpusScore score_corpus(const ModelBundle& bundle, const ParallelCorpus& corpus,
                         const HistoryModel* history, std::size_t batch_size) {
  return score_encoded(bundle.model, bundle.encode(corpus), history, batch_size);
}

NeuralTranslator::NeuralTranslator(std::shared_ptr<const ModelBundle> bundle, BeamOptions options, std::string id)
    : bundle_(std::move(bundle)), options_(options), id_(std::move(id)) {}

Sentence NeuralTranslator::translate(const Sentence& s) const {
  return monomt::translate(*bundle_, s, options_);
}

}  // namespace monomt
