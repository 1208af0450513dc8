// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "grad_cases.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "monomt/experiment.hpp"

using namespace monomt;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Outcome {
 public:
  void note(const std::string& line) { lines_.push_back("  " + line); }
  void require(bool ok, const std::string& what) {
    if (!ok) pass_ = false;
    lines_.push_back(std::string(ok ? "  ok   " : "  FAIL ") + what);
  }
  bool pass() const { return pass_; }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  bool pass_ = true;
  std::vector<std::string> lines_;
};

struct Context {
  std::string work;
  std::string data_dir;
  std::string dir(const std::string& name) const {
    const auto p = fs::path(work) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
  }
};

TrainSpec train_spec(std::size_t updates, std::size_t interval, std::uint64_t seed) {
  TrainSpec s;
  s.max_updates = updates;
  s.validation_interval = interval;
  s.patience = 5;
  s.seed = seed;
  return s;
}

// 1 ------------------------------------------------------------------------

Outcome gradients(const Context&) {
  Outcome o;
  const auto t0 = Clock::now();
  auto run = [&](const std::vector<testing::GradCase>& cases, std::size_t per_tensor) {
    for (const auto& c : cases) {
      const auto r = gradient_check(c.params, c.loss, 1e-5, per_tensor);
      o.require(r.checked > 0 && r.max_rel_error < 1e-4,
                c.name + ": " + std::to_string(r.checked) + " coordinates, max rel error " +
                    sci(r.max_rel_error) + (r.worst.empty() ? "" : " at " + r.worst));
    }
  };
  run(testing::primitive_cases(), 1000);
  run(testing::model_cases(), 40);
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + num(secs, 1) + " s (< 60 s)");
  return o;
}

// 2 ------------------------------------------------------------------------

Outcome copy_probe(const Context&) {
  Outcome o;
  const auto t0 = Clock::now();
  ToyWorldSpec spec;
  spec.seed = 21;
  spec.domain_noun = 36;
  spec.domain_adj = 16;
  spec.domain_verb = 16;
  spec.out_parallel = 2000;
  spec.in_mono = 1500;
  const auto w = make_toy_world(spec);

  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 32;
  cfg.attention_dim = 32;
  auto b = make_bundle(w.out_parallel, cfg, 1, 1, &w.in_mono_target);
  o.note("target vocabulary: " + std::to_string(b.tgt_vocab.size() - 4) + " types");
  train(b, w.out_parallel, w.dev_out, train_spec(1000, 100, 2));

  // Unseen copy sentences: in-domain targets absent from the copy data. Dev
  // targets drive early stopping, test targets are scored.
  std::set<std::string> seen;
  for (const auto& s : w.in_mono_target.sentences) seen.insert(s.str());
  auto unseen = [&](const ParallelCorpus& split) {
    Corpus c;
    for (const auto& p : split.pairs)
      if (seen.insert(p.target.str()).second) c.sentences.push_back(p.target);
    return make_copy_marked(c, b.src_vocab).corpus;
  };
  const auto copy_dev = unseen(w.dev_in);
  const auto copy_test = unseen(w.test_in);

  const auto cm = make_copy_marked(w.in_mono_target, b.src_vocab);
  FineTuneOptions opts;
  opts.vocab_extension = cm.extension;
  const auto r = fine_tune(b, cm.corpus, w.out_parallel, copy_dev, train_spec(10000, 200, 3), opts);
  o.note("fine-tuned for " + std::to_string(r.history.updates) + " updates, best at " +
         std::to_string(r.history.best_update));

  std::string curve = "copy dev xent by update:";
  for (const auto& v : r.history.validations)
    if (v.update % 2000 == 0) curve += " " + std::to_string(v.update) + "=" + num(v.dev_loss, 3);
  o.note(curve);
  const auto copy = score_corpus(b, copy_test);
  const auto natural = score_corpus(b, w.test_in);
  o.require(copy.mean_token_xent < 0.2, "held-out copy-marked xent " + num(copy.mean_token_xent) + " nats over " +
                                            std::to_string(copy_test.size()) + " unseen sentences (< 0.2)");
  o.require(natural.mean_token_xent > 2.0,
            "natural in-domain test xent " + num(natural.mean_token_xent) + " nats (> 2.0)");
  const double secs = seconds_since(t0);
  o.require(secs < 600.0, "runtime " + num(secs, 1) + " s (< 600 s)");
  return o;
}

// 3 ------------------------------------------------------------------------

Outcome monotonicity_direction(const Context&) {
  Outcome o;
  {
    ToyWorldSpec spec;
    spec.seed = 31;
    spec.reorder_rate = 0.5;
    spec.out_parallel = 2000;
    const auto w = make_toy_world(spec);
    const auto bt = back_translate(w.in_mono_target, *toy_back_translator(w, 0.05, 5, "toy-bt")).corpus;
    const auto table = ibm1_train(concat(w.out_parallel, bt), 10).table;
    const double natural = monotonicity(w.out_parallel, table).mean;
    const double synthetic = monotonicity(bt, table).mean;
    double gold = 0.0;
    for (const auto& a : w.out_gold) gold += kendall_tau_distance(a);
    gold /= static_cast<double>(w.out_gold.size());
    o.note("mean Kendall-tau distance: natural " + num(natural) + ", back-translated " + num(synthetic) +
           " (gold links of natural data " + num(gold) + ")");
    o.require(synthetic < natural, "back-translated data is more monotone than natural data");
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    ToyWorldSpec spec;
    spec.seed = 40 + seed;
    spec.out_parallel = 3000;
    spec.noise_pair_rate = 0.2;
    const auto w = make_toy_world(spec);
    const auto table = ibm1_train(w.out_parallel, 10).table;
    const std::size_t budget = w.out_parallel.source_token_count() / 2;
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.hidden_dim = 32;
    cfg.attention_dim = 32;
    auto dev_loss = [&](const ParallelCorpus& subset) {
      auto b = make_bundle(w.out_parallel, cfg, seed, 1);
      return train(b, subset, w.dev_out, train_spec(800, 100, seed)).best_dev_loss;
    };
    const double mono = dev_loss(select_by_monotonicity(w.out_parallel, table, budget));
    const double rand = dev_loss(select_random(w.out_parallel, budget, seed));
    o.require(mono <= rand, "seed " + std::to_string(seed) + ": dev loss monotonic " + num(mono) + " <= random " +
                                num(rand) + " (budget " + std::to_string(budget) + " source tokens)");
  }
  return o;
}

// 4 ------------------------------------------------------------------------

nlohmann::json scheme_config(const std::string& scheme, std::uint64_t seed, const std::string& out) {
  nlohmann::json j = {
      {"version", 1},
      {"seed", seed},
      {"output_dir", out},
      {"scheme", scheme},
      {"data", {{"toy", {{"seed", seed}}}}},
      {"model", {{"embed_dim", 32}, {"hidden_dim", 64}, {"attention_dim", 64}}},
      {"train", {{"max_updates", 3000}, {"validation_interval", 100}, {"patience", 5}}},
      {"finetune", {{"max_updates", 600}, {"validation_interval", 100}, {"patience", 5}}},
  };
  if (scheme == "backtrans") j["back_translator"] = {{"kind", "toy"}, {"error_rate", 0.05}};
  return j;
}

RunManifest run_config(const nlohmann::json& j, const std::string& cache) {
  auto c = ExperimentConfig::parse(j.dump(), ".");
  c.validate();
  return run_experiment(c, cache);
}

Outcome scheme_ordering(const Context& ctx) {
  Outcome o;
  const std::vector<std::pair<std::string, std::string>> schemes = {
      {"baseline", "baseline"},       {"bt-good", "backtrans"},
      {"copy", "copy"},               {"copy-marked", "copy-marked"},
      {"copy-marked+noise", "copy-marked+noise"}, {"copy-dummies", "copy-dummies"}};
  const auto root = ctx.dir("c4");
  const auto cache = root + "/cache";
  std::map<std::string, double> mean;
  std::map<std::uint64_t, double> stage_seconds;  // by cache key, so cached stages still count
  double slowest = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::string row = "seed " + std::to_string(seed) + ":";
    for (const auto& [label, scheme] : schemes) {
      const auto m = run_config(scheme_config(scheme, seed, root + "/" + label + "-" + std::to_string(seed)), cache);
      double secs = 0.0;
      for (const auto& s : m.stages) {
        if (!s.cached) stage_seconds[s.key] = s.seconds;
        secs += stage_seconds[s.key];
      }
      slowest = std::max(slowest, secs);
      const double bleu = m.results.at("bleu");
      mean[label] += bleu / 3.0;
      row += " " + label + " " + num(bleu, 2);
    }
    o.note(row);
  }
  std::string row = "mean:";
  for (const auto& [label, scheme] : schemes) row += " " + label + " " + num(mean[label], 2);
  o.note(row);
  o.require(mean["bt-good"] > mean["baseline"], "BLEU(backtrans-good) > BLEU(baseline)");
  o.require(mean["copy-marked+noise"] > mean["copy-marked"], "BLEU(copy-marked+noise) > BLEU(copy-marked)");
  o.require(mean["copy-marked"] >= mean["baseline"], "BLEU(copy-marked) >= BLEU(baseline)");
  o.require(mean["copy-dummies"] <= mean["copy"], "BLEU(copy-dummies) <= BLEU(copy)");
  o.require(slowest < 1800.0, "slowest full pipeline " + num(slowest, 1) + " s (< 1800 s)");
  return o;
}

// 5 ------------------------------------------------------------------------

// A discriminator that outputs about 0.95 for every input scores exactly the
// natural share of a batch, which places the accuracy in a chosen region.
void gan_regime(Outcome& o, std::size_t n_natural, std::size_t n_pseudo, bool expect_d, bool expect_g) {
  const auto nat_base = testing::parallel({{"a b c", "x y z"}, {"b c", "y z"}, {"c a", "z x"}, {"a", "x"}});
  const auto pse_base = testing::parallel({{"x y z", "x y z"}, {"y z", "y z"}});
  ParallelCorpus nat, pse;
  for (std::size_t i = 0; i < n_natural; ++i) nat.pairs.push_back(nat_base.pairs[i % nat_base.size()]);
  for (std::size_t i = 0; i < n_pseudo; ++i) pse.pairs.push_back(pse_base.pairs[i % pse_base.size()]);
  ModelConfig cfg;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 4;
  cfg.attention_dim = 3;
  cfg.max_len = 10;
  auto b = make_bundle(concat(nat_base, pse_base), cfg, 1);
  GanSpec spec;
  spec.disc_hidden = 4;
  GanModel m(b, spec, 2);
  auto& dp = m.discriminator().params();
  for (auto& v : dp.get("disc_W").mutable_values()) v = 0.01;
  dp.get("disc_b").mutable_values()[0] = 3.0;
  GanOptimizers opt(m, spec);
  const auto r = gan_update_step(m, opt, make_batch(b.encode(nat)), make_batch(b.encode(pse)), spec, 1);
  const double expected = static_cast<double>(n_natural) / static_cast<double>(n_natural + n_pseudo);
  o.require(r.accuracy == expected && r.d_fired == expect_d && r.g_fired == expect_g &&
                (r.d_before != r.d_after) == expect_d && (r.g_before != r.g_after) == expect_g,
            "accuracy " + num(r.accuracy, 4) + ": D " + (r.d_fired ? "updated" : "frozen") + ", G adversarial " +
                (r.g_fired ? "updated" : "skipped") + " (expected D " + (expect_d ? "updated" : "frozen") +
                ", G " + (expect_g ? "updated" : "skipped") + ")");
}

Outcome gan_gating(const Context& ctx) {
  Outcome o;
  gan_regime(o, 6, 4, true, false);    // a <= 0.75
  gan_regime(o, 9, 1, true, true);     // 0.75 < a <= 0.99
  gan_regime(o, 100, 1, false, true);  // a > 0.99

  const auto root = ctx.dir("c5");
  nlohmann::json train = {{"max_updates", 400}, {"validation_interval", 100}, {"patience", 5}};
  const nlohmann::json j = {
      {"version", 1},
      {"seed", 5},
      {"output_dir", root + "/run"},
      {"scheme", "gan(copy-marked+noise)"},
      {"data", {{"toy", {{"seed", 5}, {"out_parallel", 1000}, {"in_mono", 600}}}}},
      {"model", {{"embed_dim", 16}, {"hidden_dim", 32}, {"attention_dim", 32}}},
      {"train", train},
      {"gan",
       {{"pretrain_updates", 60},
        {"disc_hidden", 16},
        {"train", {{"max_updates", 200}, {"validation_interval", 50}, {"patience", 5}}}}},
  };
  run_config(j, "");
  std::istringstream lines(read_file(root + "/run/gan-joint/steps.jsonl"));
  std::size_t steps = 0, bad = 0, d_updates = 0, g_updates = 0;
  std::size_t low = 0, mid = 0, high = 0;
  std::string line;
  while (std::getline(lines, line)) {
    const auto s = nlohmann::json::parse(line);
    const double a = s.at("accuracy").get<double>();
    const bool want_d = a <= 0.99, want_g = a > 0.75;
    const bool d_fired = s.at("d_fired").get<bool>(), g_fired = s.at("g_fired").get<bool>();
    const bool d_moved = s.at("d_checksum_before") != s.at("d_checksum_after");
    const bool g_moved = s.at("g_checksum_before") != s.at("g_checksum_after");
    if (d_fired != want_d || g_fired != want_g || d_moved != want_d || g_moved != want_g) ++bad;
    ++steps;
    d_updates += d_moved;
    g_updates += g_moved;
    (a <= 0.75 ? low : a <= 0.99 ? mid : high) += 1;
  }
  o.note("toy run: " + std::to_string(steps) + " joint steps, accuracy regions <=0.75: " + std::to_string(low) +
         ", (0.75,0.99]: " + std::to_string(mid) + ", >0.99: " + std::to_string(high) + "; theta(D) moved " +
         std::to_string(d_updates) + " times, theta(G) adversarially " + std::to_string(g_updates) + " times");
  o.require(steps > 0 && bad == 0, "every step's checksums match the gate of its recorded accuracy (" +
                                       std::to_string(bad) + " mismatches)");
  return o;
}

// 6 ------------------------------------------------------------------------

Outcome freezing(const Context&) {
  Outcome o;
  ToyWorldSpec spec;
  spec.seed = 61;
  spec.out_parallel = 600;
  spec.in_mono = 300;
  const auto w = make_toy_world(spec);
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 32;
  cfg.attention_dim = 32;
  auto base = make_bundle(w.out_parallel, cfg, 1, 1, &w.in_mono_target);
  train(base, w.out_parallel, w.dev_out, train_spec(150, 50, 2));
  const auto pseudo = back_translate(w.in_mono_target, *toy_back_translator(w, 0.1, 3, "toy-bt")).corpus;

  const std::vector<std::vector<std::string>> masks = {
      {group::kSrcEmbeddings},
      {group::kSrcEmbeddings, group::kEncoder},
      {group::kSrcEmbeddings, group::kEncoder, group::kAttention},
      {group::kDecoder},
      model_groups(),
  };
  for (const auto& mask : masks) {
    auto b = base.deep_copy();
    auto ts = train_spec(60, 30, 4);
    ts.freeze = mask;
    fine_tune(b, pseudo, w.out_parallel, w.dev_in, ts);
    bool frozen_ok = true, others_moved = true;
    for (const auto& g : model_groups()) {
      const bool same = b.model.params().checksum(g) == base.model.params().checksum(g);
      const bool frozen = std::find(mask.begin(), mask.end(), g) != mask.end();
      if (frozen && !same) frozen_ok = false;
      if (!frozen && same) others_moved = false;
    }
    std::string name;
    for (const auto& g : mask) name += (name.empty() ? "" : "+") + g;
    if (mask.size() == model_groups().size()) {
      o.require(b.model.params().serialize() == base.model.params().serialize(),
                "full freeze leaves every parameter byte-identical");
    } else {
      o.require(frozen_ok && others_moved, "freeze " + name + ": frozen groups bit-identical, others updated");
    }
  }
  return o;
}

// 7 ------------------------------------------------------------------------

Outcome bleu_oracle(const Context& ctx) {
  Outcome o;
  const auto fixtures = nlohmann::json::parse(read_file(ctx.data_dir + "/bleu_fixtures.json"));
  double worst = 0.0;
  std::size_t n = 0;
  bool identity = true;
  auto tokens = [](const nlohmann::json& lines) {
    std::vector<std::vector<std::string>> out;
    for (const auto& l : lines) out.push_back(split_whitespace(l.get<std::string>()));
    return out;
  };
  for (const auto& f : fixtures.at("fixtures")) {
    const auto hyp = tokens(f.at("hypotheses"));
    const auto ref = tokens(f.at("references"));
    worst = std::max(worst, std::abs(corpus_bleu(hyp, ref).score - f.at("bleu").get<double>()));
    identity = identity && corpus_bleu(ref, ref).score == 100.0;
    ++n;
  }
  o.note("reference scorer: " + fixtures.at("scorer").get<std::string>());
  o.require(n == 20 && worst < 0.01, std::to_string(n) + " fixtures, max |difference| " + sci(worst) + " BLEU");
  o.require(identity, "BLEU(h, h) == 100 exactly on every fixture reference");
  return o;
}

// 8 ------------------------------------------------------------------------

Outcome em_correctness(const Context&) {
  Outcome o;
  ToyWorldSpec spec;
  spec.seed = 81;
  spec.out_parallel = 100;
  const auto w = make_toy_world(spec);
  const auto r = ibm1_train(w.out_parallel, 10);
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
    worst_drop = std::max(worst_drop, r.log_likelihood[i - 1] - r.log_likelihood[i]);
  o.note("log-likelihood " + num(r.log_likelihood.front(), 3) + " -> " + num(r.log_likelihood.back(), 3) +
         " over 10 iterations on " + std::to_string(w.out_parallel.size()) + " pairs");
  o.require(r.log_likelihood.size() == 11 && worst_drop <= 1e-9,
            "log-likelihood non-decreasing (largest drop " + sci(worst_drop) + ")");

  const auto classic = testing::parallel({{"a", "x"}, {"a b", "x y"}});
  const auto plain = ibm1_train(classic, 20, false).table.prob("a", "x");
  const auto with_null = ibm1_train(classic, 20).table.prob("a", "x");
  o.require(plain > 0.99, "classic example: t(x|a) = " + num(plain, 6) + " after 20 iterations");
  o.note("with a NULL source word t(x|a) = " + num(with_null, 6) + " after 20 iterations");
  return o;
}

// 9 ------------------------------------------------------------------------

Outcome deep_fusion(const Context&) {
  Outcome o;
  for (std::uint64_t seed : {1, 2, 3}) {
    ToyWorldSpec spec;
    spec.seed = seed;
    spec.history_particles = true;
    const auto w = make_toy_world(spec);
    ModelConfig cfg;
    cfg.embed_dim = 32;
    cfg.hidden_dim = 64;
    cfg.attention_dim = 64;
    auto b = make_bundle(w.out_parallel, cfg, seed, 1, &w.in_mono_target);
    train(b, w.out_parallel, w.dev_out, train_spec(1500, 100, seed));
    const auto lm = lm_train(w.in_mono_target, w.dev_in.targets(), b.tgt_vocab,
                             LmConfig{.embed_dim = 32, .hidden_dim = 64}, train_spec(1000, 100, seed))
                        .lm;
    DeepFusion fusion(lm, b.tgt_vocab.size(), true, seed);
    if (seed == 1) {
      // Fresh fusion has a zero output weight.
      const auto plain = score_corpus(b, w.dev_in);
      const auto fused = score_corpus(b, w.dev_in, &fusion);
      const auto sources = w.dev_in.sources();
      o.require(plain.mean_token_xent == fused.mean_token_xent && plain.mean_sentence_xent == fused.mean_sentence_xent &&
                    translate_corpus(b, sources, BeamOptions{}) == translate_corpus(b, sources, BeamOptions{}, &fusion),
                "zero fusion: dev cross-entropy and beam output bit-identical to the base model");
    }
    const auto r = deep_fuse(b, fusion, w.in_parallel, w.dev_in, FuseSpec{.train = train_spec(400, 50, seed)});
    o.require(r.fused_dev.mean_token_xent <= r.base_dev.mean_token_xent,
              "seed " + std::to_string(seed) + ": history task dev loss fused " + num(r.fused_dev.mean_token_xent) +
                  " <= base " + num(r.base_dev.mean_token_xent));
  }
  return o;
}

// 10 -----------------------------------------------------------------------

Outcome determinism(const Context& ctx) {
  Outcome o;
  const auto root = ctx.dir("c10");
  nlohmann::json train = {{"batch_size", 16}, {"max_updates", 40}, {"validation_interval", 20}, {"patience", 2}};
  const std::vector<nlohmann::json> configs = {
      {{"version", 1},
       {"seed", 9},
       {"scheme", "deep-fusion(gan(copy-marked+noise))"},
       {"data", {{"toy", {{"seed", 9}, {"out_parallel", 300}, {"in_parallel", 60}, {"in_mono", 150}}}}},
       {"model", {{"embed_dim", 8}, {"hidden_dim", 12}, {"attention_dim", 12}}},
       {"selection", {{"strategy", "monotonic"}, {"budget", 1500}}},
       {"train", train},
       {"gan", {{"pretrain_updates", 10}, {"disc_hidden", 6}, {"train", train}}},
       {"lm", {{"embed_dim", 8}, {"hidden_dim", 8}, {"train", train}}},
       {"fusion", {{"train", train}}}},
      {{"version", 1},
       {"seed", 10},
       {"scheme", "backfwdtrans"},
       {"data", {{"toy", {{"seed", 10}, {"out_parallel", 300}, {"in_mono", 150}}}}},
       {"model", {{"embed_dim", 8}, {"hidden_dim", 12}, {"attention_dim", 12}}},
       {"back_translator", {{"kind", "toy"}, {"error_rate", 0.1}}},
       {"forward_translator", {{"kind", "toy"}, {"error_rate", 0.1}}},
       {"train", train},
       {"finetune", train}},
  };
  for (const auto& base : configs) {
    const std::string scheme = base.at("scheme");
    std::vector<std::string> dirs;
    for (const char* run : {"a", "b"}) {
      auto j = base;
      dirs.push_back(root + "/" + std::to_string(dirs.size()) + "-" + run);
      j["output_dir"] = dirs.back();
      run_config(j, "");
    }
    std::size_t files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), dirs[0]);
      if (rel == "timings.json") continue;
      ++files;
      const auto other = fs::path(dirs[1]) / rel;
      if (!fs::exists(other) || read_file(e.path().string()) != read_file(other.string())) ++differing;
    }
    o.require(files > 0 && differing == 0, scheme + ": " + std::to_string(files) +
                                               " files (manifest, corpora, checkpoints) byte-identical across reruns");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"monomt acceptance criteria"};
  std::vector<int> selected;
  Context ctx;
  ctx.work = (fs::temp_directory_path() / "monomt-acceptance").string();
  ctx.data_dir = MONOMT_TEST_DATA;
  app.add_option("--criteria", selected, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--work-dir", ctx.work, "scratch directory for experiment runs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria = {
      {"gradient integrity", gradients},
      {"copy-learnability probe", copy_probe},
      {"monotonicity direction", monotonicity_direction},
      {"scheme ordering at toy scale", scheme_ordering},
      {"GAN gating contract", gan_gating},
      {"freezing contract", freezing},
      {"BLEU metric oracle", bleu_oracle},
      {"IBM-1 EM correctness", em_correctness},
      {"deep-fusion anchor", deep_fusion},
      {"determinism", determinism},
  };
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.push_back(i);

  int failed = 0;
  for (int n : selected) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o.require(false, std::string("error: ") + e.what());
    }
    std::cout << (o.pass() ? "[PASS] " : "[FAIL] ") << n << " " << name << " (" << num(seconds_since(t0), 1)
              << " s)\n";
    for (const auto& l : o.lines()) std::cout << l << "\n";
    std::cout.flush();
    failed += !o.pass();
  }
  std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
