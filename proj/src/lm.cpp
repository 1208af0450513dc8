#include "monomt/lm.hpp"

#include <cmath>

#include "json.hpp"

namespace monomt {

void LmConfig::validate() const {
  if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0) throw Error("lm config: all sizes must be positive");
}

RnnLm::RnnLm(LmConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  params_.add("lm_emb", group::kLm, {config_.vocab_size, config_.embed_dim}, rng);
  add_gru(params_, "lm_gru", group::kLm, config_.embed_dim, config_.hidden_dim, rng);
  params_.add("lm_out_W", group::kLm, {config_.hidden_dim, config_.vocab_size}, rng);
  params_.add("lm_out_b", group::kLm, {1, config_.vocab_size}, rng);
}

RnnLm::RnnLm(LmConfig config, ParameterSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.get("lm_emb").rows() != config_.vocab_size) {
    throw DataError("language model parameters do not match the configured vocabulary size");
  }
}

Tensor RnnLm::initial_state(std::size_t batch) const { return Tensor::zeros({batch, config_.hidden_dim}); }

Tensor RnnLm::step(Tape& tape, const Tensor& h, std::span<const std::int32_t> tokens) const {
  const auto x = tape.embedding_lookup(params_.get("lm_emb"), tokens);
  return gru_step(tape, x, h, params_.get("lm_gru_W"), params_.get("lm_gru_U"), params_.get("lm_gru_b"),
                  config_.hidden_dim);
}

Tensor RnnLm::logits(Tape& tape, const Tensor& h) const {
  return tape.add_bias(tape.matmul(h, params_.get("lm_out_W")), params_.get("lm_out_b"));
}

namespace {

// Targets of an LM are batched through the translation batch layout; the
// source side is a placeholder.
Batch lm_batch(const std::vector<std::vector<std::int32_t>>& sequences) {
  std::vector<EncodedPair> pairs;
  pairs.reserve(sequences.size());
  for (const auto& s : sequences) pairs.push_back({{Vocabulary::kEos}, s});
  return make_batch(pairs);
}

}  // namespace

Tensor RnnLm::forward_loss(Tape& tape, const std::vector<std::vector<std::int32_t>>& sequences) const {
  const auto batch = lm_batch(sequences);
  Tensor h = initial_state(batch.size);
  Tensor total;
  for (std::size_t t = 0; t < batch.tgt_len; ++t) {
    h = step(tape, h, batch.tgt_in_at(t));
    auto l = tape.cross_entropy(logits(tape, h), batch.tgt_out_at(t), batch.tgt_mask_at(t));
    total = total.defined() ? tape.add(total, l) : l;
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch.target_tokens()));
}

LmScore score_lm(const RnnLm& lm, const std::vector<std::vector<std::int32_t>>& sequences) {
  LmScore s;
  if (sequences.empty()) return s;
  double total = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < sequences.size(); start += kChunk) {
    std::vector<std::vector<std::int32_t>> chunk(
        sequences.begin() + static_cast<std::ptrdiff_t>(start),
        sequences.begin() + static_cast<std::ptrdiff_t>(std::min(sequences.size(), start + kChunk)));
    Tape tape(Tape::Mode::Inference);
    const auto batch = lm_batch(chunk);
    total += lm.forward_loss(tape, chunk).item() * static_cast<double>(batch.target_tokens());
    s.tokens += batch.target_tokens();
  }
  s.mean_token_xent = total / static_cast<double>(s.tokens);
  s.perplexity = std::exp(s.mean_token_xent);
  return s;
}

LmTrainResult lm_train(const Corpus& corpus, const Corpus& dev, const Vocabulary& vocab, LmConfig config,
                       const TrainSpec& spec) {
  spec.validate({group::kLm});
  if (corpus.empty() || dev.empty()) throw DataError("lm-train: corpora must be non-empty");
  config.vocab_size = vocab.size();
  config.vocab_hash = vocab.hash();
  LmTrainResult res{RnnLm(config, derive_seed(spec.seed, "lm-init")), {}, {}};
  std::vector<std::vector<std::int32_t>> train_ids, dev_ids;
  for (const auto& s : corpus.sentences) train_ids.push_back(vocab.encode(s));
  for (const auto& s : dev.sentences) dev_ids.push_back(vocab.encode(s));

  const RnnLm& lm = res.lm;
  TrainLoop loop;
  loop.examples = train_ids.size();
  loop.length_of = [&](std::size_t i) { return train_ids[i].size(); };
  loop.loss = [&](Tape& tape, const std::vector<std::size_t>& idx) {
    std::vector<std::vector<std::int32_t>> sel;
    for (auto i : idx) sel.push_back(train_ids[i]);
    return lm.forward_loss(tape, sel);
  };
  loop.dev_loss = [&]() { return score_lm(lm, dev_ids).mean_token_xent; };
  res.history = run_training(loop, res.lm.params().tensors_except(spec.freeze), res.lm.params(), spec);
  res.dev = score_lm(res.lm, dev_ids);
  return res;
}

void save_lm(const RnnLm& lm, const std::string& path) {
  lm.params().save(path);
  const auto& c = lm.config();
  nlohmann::ordered_json j;
  j["format"] = "monomt-lm";
  j["version"] = 1;
  j["config"] = {{"vocab_size", c.vocab_size},
                 {"embed_dim", c.embed_dim},
                 {"hidden_dim", c.hidden_dim},
                 {"vocab_hash", hex64(c.vocab_hash)}};
  write_file(path + ".json", j.dump(2) + "\n");
}

RnnLm load_lm(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path + ".json"));
  if (j.value("format", "") != "monomt-lm") throw DataError(path + ".json: not a language model sidecar");
  LmConfig c;
  const auto& jc = j.at("config");
  c.vocab_size = jc.at("vocab_size");
  c.embed_dim = jc.at("embed_dim");
  c.hidden_dim = jc.at("hidden_dim");
  c.vocab_hash = std::stoull(jc.at("vocab_hash").get<std::string>(), nullptr, 16);
  return RnnLm(c, ParameterSet::load(path));
}

// --- fusion -----------------------------------------------------------------

DeepFusion::DeepFusion(const RnnLm& lm, std::size_t tgt_vocab_size, bool gated, std::uint64_t seed) : lm_(&lm) {
  if (lm.config().vocab_size != tgt_vocab_size) {
    throw DataError("fusion: language model vocabulary (" + std::to_string(lm.config().vocab_size) +
                    ") differs from the target vocabulary (" + std::to_string(tgt_vocab_size) + ")");
  }
  const std::size_t H = lm.config().hidden_dim;
  Rng rng(seed);
  params_.add("fuse_W", group::kFusion, Tensor::zeros({H, tgt_vocab_size}, true));
  params_.add("fuse_gate_U", group::kFusion, {H, H}, rng);
  params_.add("fuse_gate_b", group::kFusion, {1, H}, rng);
  weights_.gated = gated;
  bind();
}

void DeepFusion::bind() {
  weights_.W = params_.get("fuse_W");
  weights_.gate_U = params_.get("fuse_gate_U");
  weights_.gate_b = params_.get("fuse_gate_b");
}

void DeepFusion::load_params(const std::string& path) { params_.assign_values(ParameterSet::load(path)); }

Tensor DeepFusion::initial_state(Tape&, std::size_t batch) const { return lm_->initial_state(batch); }

Tensor DeepFusion::advance(Tape& tape, const Tensor& state, std::span<const std::int32_t> prev_tokens) const {
  return lm_->step(tape, state, prev_tokens);
}

FuseReport deep_fuse(ModelBundle& bundle, DeepFusion& fusion, const ParallelCorpus& tuning,
                     const ParallelCorpus& dev, const FuseSpec& spec) {
  spec.train.validate(model_groups());
  const auto& lc = fusion.lm().config();
  if (lc.vocab_size != bundle.tgt_vocab.size() || (lc.vocab_hash != 0 && lc.vocab_hash != bundle.tgt_vocab.hash())) {
    throw DataError("fusion: language model and translation model target vocabularies differ");
  }
  if (tuning.empty() || dev.empty()) throw DataError("fuse: corpora must be non-empty");

  ParameterSet trained;
  for (const auto& p : fusion.params().all()) trained.add(p.name, p.group, p.tensor);
  if (spec.train_readout) {
    for (const char* name : {"dec_ro_W", "dec_ro_b", "dec_out_W", "dec_out_b"}) {
      trained.add(name, group::kDecoder, bundle.model.params().get(name));
    }
  }

  FuseReport report;
  const auto pairs = bundle.encode(tuning);
  const auto dev_pairs = bundle.encode(dev);
  report.base_dev = score_encoded(bundle.model, dev_pairs);

  const Model& model = bundle.model;
  TrainLoop loop;
  loop.examples = pairs.size();
  loop.length_of = [&](std::size_t i) { return pairs[i].src.size(); };
  loop.loss = [&](Tape& tape, const std::vector<std::size_t>& idx) {
    std::vector<EncodedPair> sel;
    for (auto i : idx) sel.push_back(pairs[i]);
    return model.forward_loss(tape, make_batch(sel), &fusion);
  };
  loop.dev_loss = [&]() { return score_encoded(model, dev_pairs, &fusion).mean_token_xent; };
  report.history = run_training(loop, trained.tensors(), trained, spec.train);
  report.fused_dev = score_encoded(model, dev_pairs, &fusion);
  return report;
}

}  // namespace monomt
