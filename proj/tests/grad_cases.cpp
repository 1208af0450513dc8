#include "grad_cases.hpp"

#include <memory>

#include "helpers.hpp"
#include "monomt/gan.hpp"
#include "monomt/lm.hpp"
#include "monomt/nmt.hpp"

using namespace monomt;

namespace testing {

namespace {

GradCase weighted(std::string name, std::vector<Tensor> inputs, std::function<Tensor(Tape&)> op) {
  Tape probe(Tape::Mode::Inference);
  const auto shape = op(probe).shape();
  const auto w = random_tensor(shape, 99);
  const Tensor weights = Tensor::from(shape, std::vector<double>(w.values().begin(), w.values().end()));
  GradCase c{std::move(name), {}, {}};
  for (std::size_t i = 0; i < inputs.size(); ++i) c.params.push_back({"in" + std::to_string(i), "g", inputs[i]});
  c.loss = [op = std::move(op), weights](Tape& t) { return t.sum(t.mul(op(t), weights)); };
  return c;
}

ParallelCorpus micro_corpus() {
  return parallel({{"a b c", "x y z"}, {"b c", "y z"}, {"c a", "z x"}, {"x y", "x y"}, {"z x z", "z x z"}});
}

}  // namespace

std::vector<GradCase> primitive_cases() {
  auto a = random_tensor({3, 4}, 1);
  auto b = random_tensor({4, 2}, 2);
  auto c = random_tensor({3, 4}, 3);
  auto bias = random_tensor({1, 4}, 4);
  auto rows = random_tensor({3, 1}, 5);
  auto pos = Tensor::from({2, 2}, {0.5, 1.5, 2.0, 0.3}, true);
  // Away from the clamp boundaries the gradient passes through unchanged.
  auto mid = Tensor::from({1, 3}, {0.2, 0.5, 0.9}, true);
  auto table = random_tensor({3, 4}, 6);
  const std::vector<std::int32_t> ids{2, 0, 2, 1};
  const std::vector<std::int32_t> tgt{1, 3, 0};
  const std::vector<double> tw{1.0, 0.0, 0.5};
  auto s0 = random_tensor({2, 3}, 7), s1 = random_tensor({2, 3}, 8), s2 = random_tensor({2, 3}, 9);
  auto x = random_tensor({6, 3}, 10), y = random_tensor({2, 3}, 11);
  auto alpha = random_tensor({2, 3}, 12);

  std::vector<GradCase> out;
  out.push_back(weighted("matmul", {a, b}, [=](Tape& t) { return t.matmul(a, b); }));
  out.push_back(weighted("add", {a, c}, [=](Tape& t) { return t.add(a, c); }));
  out.push_back(weighted("sub", {a, c}, [=](Tape& t) { return t.sub(a, c); }));
  out.push_back(weighted("mul", {a, c}, [=](Tape& t) { return t.mul(a, c); }));
  out.push_back(weighted("add_bias", {a, bias}, [=](Tape& t) { return t.add_bias(a, bias); }));
  out.push_back(weighted("scale", {a}, [=](Tape& t) { return t.scale(a, -1.7); }));
  out.push_back(weighted("scale_rows", {a, rows}, [=](Tape& t) { return t.scale_rows(a, rows); }));
  out.push_back(weighted("tanh", {a}, [=](Tape& t) { return t.tanh(a); }));
  out.push_back(weighted("sigmoid", {a}, [=](Tape& t) { return t.sigmoid(a); }));
  out.push_back(weighted("one_minus", {a}, [=](Tape& t) { return t.one_minus(a); }));
  out.push_back(weighted("softmax_rows", {a}, [=](Tape& t) { return t.softmax_rows(a); }));
  out.push_back(weighted("concat_cols", {a, c}, [=](Tape& t) { return t.concat_cols({a, c}); }));
  out.push_back(weighted("slice_cols", {a}, [=](Tape& t) { return t.slice_cols(a, 1, 2); }));
  out.push_back(weighted("reshape", {a}, [=](Tape& t) { return t.reshape(a, {4, 3}); }));
  out.push_back(weighted("sum", {a}, [=](Tape& t) { return t.sum(a); }));
  out.push_back(weighted("mean", {a}, [=](Tape& t) { return t.mean(a); }));
  out.push_back(weighted("log", {pos}, [=](Tape& t) { return t.log(pos); }));
  out.push_back(weighted("clamp", {mid}, [=](Tape& t) { return t.clamp(mid, 0.1, 0.95); }));
  out.push_back(weighted("embedding_lookup", {table}, [=](Tape& t) { return t.embedding_lookup(table, ids); }));
  out.push_back(weighted("cross_entropy", {a}, [=](Tape& t) { return t.cross_entropy(a, tgt, tw); }));
  out.push_back(weighted("stack_steps", {s0, s1, s2}, [=](Tape& t) { return t.stack_steps({s0, s1, s2}); }));
  out.push_back(weighted("add_grouped", {x, y}, [=](Tape& t) { return t.add_grouped(x, y); }));
  out.push_back(weighted("weighted_sum", {alpha, x}, [=](Tape& t) { return t.weighted_sum(alpha, x); }));
  return out;
}

std::vector<GradCase> model_cases() {
  ModelConfig cfg;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 4;
  cfg.attention_dim = 3;
  cfg.max_len = 10;
  auto bundle = std::make_shared<ModelBundle>(make_bundle(micro_corpus(), cfg, 11));
  // Natural and pseudo micro-batches of two sentences each, with padding.
  const auto nat = make_batch(bundle->encode(parallel({{"a b c", "x y z"}, {"c", "z"}})));
  const auto pse = make_batch(bundle->encode(parallel({{"x y", "x y"}, {"z x z", "z x z"}})));

  std::vector<GradCase> out;
  out.push_back({"encoder-decoder J(MT)", bundle->model.params().all(),
                 [bundle, nat](Tape& t) { return bundle->model.forward_loss(t, nat); }});

  GanSpec gs;
  gs.disc_hidden = 3;
  auto gan = std::shared_ptr<GanModel>(new GanModel(*bundle, gs, 12), [bundle](GanModel* g) { delete g; });
  Tape enc(Tape::Mode::Inference);
  const auto en = gan->encode_natural(enc, nat);
  const auto ep = gan->encode_pseudo(enc, pse);
  out.push_back({"discriminator J(D)", gan->discriminator().params().all(), [gan, en, ep](Tape& t) {
                   return d_loss(t, gan->discriminator().forward(t, en), gan->discriminator().forward(t, ep));
                 }});
  out.push_back({"generator J(G)", gan->pseudo_params().all(), [gan, pse](Tape& t) {
                   return g_loss(t, gan->discriminator().forward(t, gan->encode_pseudo(t, pse)));
                 }});
  out.push_back({"pseudo-source J(MT)", gan->pseudo_params().all(),
                 [gan, pse](Tape& t) { return gan->mt_loss_pseudo(t, pse); }});

  auto lm = std::make_shared<RnnLm>(
      LmConfig{.vocab_size = bundle->tgt_vocab.size(), .embed_dim = 4, .hidden_dim = 3, .vocab_hash = bundle->tgt_vocab.hash()},
      13);
  std::vector<std::vector<std::int32_t>> seqs{bundle->tgt_vocab.encode(Sentence::parse("x y z")),
                                              bundle->tgt_vocab.encode(Sentence::parse("z"))};
  out.push_back({"language model", lm->params().all(), [lm, seqs](Tape& t) { return lm->forward_loss(t, seqs); }});

  for (bool gated : {true, false}) {
    auto fusion = std::make_shared<DeepFusion>(*lm, bundle->tgt_vocab.size(), gated, 14);
    // A non-zero output weight so the gate receives a gradient.
    Rng rng(15);
    for (auto& v : fusion->params().get("fuse_W").mutable_values()) v = rng.uniform(-0.3, 0.3);
    auto params = fusion->params().all();
    for (const char* name : {"dec_ro_W", "dec_ro_b", "dec_out_W", "dec_out_b"}) {
      params.push_back({name, group::kDecoder, bundle->model.params().get(name)});
    }
    out.push_back({gated ? "deep fusion (gated)" : "deep fusion (ungated)", params,
                   [bundle, lm, fusion, nat](Tape& t) { return bundle->model.forward_loss(t, nat, fusion.get()); }});
  }
  return out;
}

}  // namespace testing
