// Command-line front end: one subcommand per pipeline stage plus the
// declarative experiment runner.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "monomt/align.hpp"
#include "monomt/eval.hpp"
#include "monomt/experiment.hpp"
#include "monomt/gan.hpp"
#include "monomt/lm.hpp"
#include "monomt/nmt.hpp"
#include "monomt/stats.hpp"
#include "monomt/synth.hpp"
#include "monomt/toyworld.hpp"

using namespace monomt;
namespace fs = std::filesystem;

namespace {

void add_train_flags(CLI::App* app, TrainSpec& t) {
  app->add_option("--batch-size", t.batch_size, "Sentences per update")->capture_default_str();
  app->add_option("--lr", t.adam.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--beta1", t.adam.beta1)->capture_default_str();
  app->add_option("--beta2", t.adam.beta2)->capture_default_str();
  app->add_option("--eps", t.adam.eps)->capture_default_str();
  app->add_option("--clip-norm", t.adam.clip_norm, "Global gradient norm clip (0 disables)")->capture_default_str();
  app->add_option("--validation-interval", t.validation_interval)->capture_default_str();
  app->add_option("--patience", t.patience, "Validations without improvement before stopping")->capture_default_str();
  app->add_option("--max-updates", t.max_updates)->capture_default_str();
  app->add_option("--freeze", t.freeze, "Parameter groups to keep fixed");
}

void add_beam_flags(CLI::App* app, BeamOptions& b) {
  app->add_option("--beam", b.beam_width, "Beam width")->capture_default_str();
  app->add_option("--alpha", b.length_alpha, "Length normalization exponent")->capture_default_str();
}

void print_history(const TrainHistory& h) {
  for (const auto& v : h.validations) std::cerr << "update " << v.update << " dev " << v.dev_loss << "\n";
  std::cerr << "updates " << h.updates << ", best dev " << h.best_dev_loss << " at " << h.best_update
            << (h.early_stopped ? " (early stop)" : "") << "\n";
}

std::vector<std::string> read_extension(const std::string& path) {
  std::vector<std::string> out;
  if (path.empty()) return out;
  for (auto& l : split(read_file(path), '\n'))
    if (!l.empty()) out.push_back(l);
  return out;
}

// A fused decoder needs the LM and the trained combination weights.
struct FusionHandle {
  std::optional<RnnLm> lm;
  std::optional<DeepFusion> fusion;
  const HistoryModel* get() const { return fusion ? &*fusion : nullptr; }
};

void load_fusion(FusionHandle& h, const std::string& lm_path, const std::string& fusion_path,
                 const ModelBundle& bundle) {
  if (lm_path.empty() != fusion_path.empty()) throw Error("--lm and --fusion must be given together");
  if (lm_path.empty()) return;
  const auto side = nlohmann::json::parse(read_file(fusion_path + ".json"));
  h.lm = load_lm(lm_path);
  h.fusion.emplace(*h.lm, bundle.tgt_vocab.size(), side.at("gated").get<bool>(), 0);
  h.fusion->load_params(fusion_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"monomt: monolingual data for neural machine translation"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  auto seeded = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed")->capture_default_str();
    return sub;
  };

  // toyworld
  auto* toy = seeded(app.add_subcommand("toyworld", "Generate a synthetic two-domain language pair"));
  ToyWorldSpec toy_spec;
  std::string toy_dir;
  toy->add_option("--out-dir", toy_dir, "Output directory")->required();
  toy->add_option("--reorder-rate", toy_spec.reorder_rate)->capture_default_str();
  toy->add_option("--fertility-rate", toy_spec.fertility_rate)->capture_default_str();
  toy->add_option("--cognate-rate", toy_spec.cognate_rate)->capture_default_str();
  toy->add_option("--domain-share", toy_spec.domain_share)->capture_default_str();
  toy->add_option("--noise-pair-rate", toy_spec.noise_pair_rate)->capture_default_str();
  toy->add_flag("--history-particles", toy_spec.history_particles);
  toy->add_option("--out-parallel", toy_spec.out_parallel)->capture_default_str();
  toy->add_option("--in-parallel", toy_spec.in_parallel)->capture_default_str();
  toy->add_option("--in-mono", toy_spec.in_mono)->capture_default_str();
  toy->add_option("--dev", toy_spec.dev)->capture_default_str();
  toy->add_option("--test", toy_spec.test)->capture_default_str();

  // synth
  auto* synth = seeded(app.add_subcommand("synth", "Build pseudo-parallel data from monolingual text"));
  std::string synth_kind, synth_in, synth_out, synth_vocab, synth_table, synth_model, synth_ext_out;
  std::string marker(kDefaultMarker);
  bool synth_noise = false;
  NoiseSpec noise_spec;
  double synth_error = 0.0;
  BeamOptions synth_beam;
  synth->add_option("--kind", synth_kind, "backtrans, fwdtrans, copy, copy-marked or copy-dummies")
      ->required()
      ->check(CLI::IsMember({"backtrans", "fwdtrans", "copy", "copy-marked", "copy-dummies"}));
  synth->add_option("--input", synth_in, "Monolingual corpus")->required()->check(CLI::ExistingFile);
  synth->add_option("--output", synth_out, "Output TSV")->required();
  synth->add_option("--src-vocab", synth_vocab, "Source vocabulary (copy, copy-marked)");
  synth->add_option("--table", synth_table, "Rule-based translation table");
  synth->add_option("--model", synth_model, "Translation model used as translator");
  synth->add_option("--error-rate", synth_error, "Token corruption rate of the translator")->capture_default_str();
  synth->add_option("--marker", marker)->capture_default_str();
  synth->add_option("--extension-out", synth_ext_out, "Write marked vocabulary entries here (copy-marked)");
  synth->add_flag("--noise", synth_noise, "Apply word dropout and local permutation to sources");
  synth->add_option("--p-drop", noise_spec.p_drop)->capture_default_str();
  synth->add_option("--k", noise_spec.k, "Maximum permutation distance")->capture_default_str();
  add_beam_flags(synth, synth_beam);

  // align
  auto* align = seeded(app.add_subcommand("align", "IBM Model 1 alignment and monotonicity"));
  std::string align_in, align_table, align_out;
  std::size_t align_iters = 10;
  align->add_option("--input", align_in, "Parallel TSV")->required()->check(CLI::ExistingFile);
  align->add_option("--iterations", align_iters)->capture_default_str();
  align->add_option("--table-out", align_table, "Translation table TSV");
  align->add_option("--align-out", align_out, "Viterbi alignments, Pharaoh format");

  // select
  auto* select = seeded(app.add_subcommand("select", "Token-budgeted training data selection"));
  std::string sel_in, sel_out, sel_strategy = "monotonic";
  std::size_t sel_budget = 0, sel_iters = 10;
  select->add_option("--input", sel_in, "Parallel TSV")->required()->check(CLI::ExistingFile);
  select->add_option("--output", sel_out, "Selected TSV")->required();
  select->add_option("--strategy", sel_strategy)->check(CLI::IsMember({"random", "monotonic"}))->capture_default_str();
  select->add_option("--budget", sel_budget, "Source-token budget")->required();
  select->add_option("--iterations", sel_iters, "IBM-1 iterations")->capture_default_str();

  // stats
  auto* stats = seeded(app.add_subcommand("stats", "Length ratios, vocabulary growth, token/type counts"));
  std::string stats_parallel, stats_corpus, stats_dir;
  std::size_t stats_step = 1000, stats_k = 100;
  bool stats_shuffle = false;
  stats->add_option("--parallel", stats_parallel, "Parallel TSV")->check(CLI::ExistingFile);
  stats->add_option("--corpus", stats_corpus, "Monolingual corpus")->check(CLI::ExistingFile);
  stats->add_option("--out-dir", stats_dir, "Report directory")->required();
  stats->add_option("--step", stats_step, "Growth curve sampling step (sentences)")->capture_default_str();
  stats->add_option("--top-k", stats_k)->capture_default_str();
  stats->add_flag("--shuffle", stats_shuffle, "Shuffle sentences (by --seed) before the growth curve");

  // train
  auto* train_cmd = seeded(app.add_subcommand("train", "Train a translation model from scratch"));
  std::string tr_train, tr_dev, tr_out, tr_extra;
  ModelConfig tr_model;
  TrainSpec tr_spec;
  train_cmd->add_option("--train", tr_train)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", tr_dev)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model-out", tr_out)->required();
  train_cmd->add_option("--extra-target", tr_extra, "Extra target text for the target vocabulary")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--embed", tr_model.embed_dim)->capture_default_str();
  train_cmd->add_option("--hidden", tr_model.hidden_dim)->capture_default_str();
  train_cmd->add_option("--attention", tr_model.attention_dim)->capture_default_str();
  train_cmd->add_option("--max-len", tr_model.max_len)->capture_default_str();
  add_train_flags(train_cmd, tr_spec);

  // finetune
  auto* ft = seeded(app.add_subcommand("finetune", "Continue training on pseudo plus natural data"));
  std::string ft_model, ft_pseudo, ft_natural, ft_dev, ft_out, ft_ext;
  TrainSpec ft_spec;
  FineTuneOptions ft_opt;
  ft->add_option("--model", ft_model)->required();
  ft->add_option("--pseudo", ft_pseudo, "In-domain pseudo-parallel TSV")->required()->check(CLI::ExistingFile);
  ft->add_option("--natural", ft_natural, "Out-of-domain natural TSV")->required()->check(CLI::ExistingFile);
  ft->add_option("--dev", ft_dev)->required()->check(CLI::ExistingFile);
  ft->add_option("--model-out", ft_out)->required();
  ft->add_option("--extension", ft_ext, "Marked entries to add to the source vocabulary")->check(CLI::ExistingFile);
  ft->add_option("--extension-epochs", ft_opt.extension_pretrain_epochs)->capture_default_str();
  add_train_flags(ft, ft_spec);

  // translate
  auto* tl = seeded(app.add_subcommand("translate", "Beam-search translation"));
  std::string tl_model, tl_in, tl_out, tl_lm, tl_fusion;
  BeamOptions tl_beam;
  tl->add_option("--model", tl_model)->required();
  tl->add_option("--input", tl_in, "Source sentences")->required()->check(CLI::ExistingFile);
  tl->add_option("--output", tl_out, "Hypotheses")->required();
  tl->add_option("--lm", tl_lm, "Language model for deep fusion");
  tl->add_option("--fusion", tl_fusion, "Fusion parameters");
  add_beam_flags(tl, tl_beam);

  // score
  auto* sc = seeded(app.add_subcommand("score", "Teacher-forced cross-entropy of parallel data"));
  std::string sc_model, sc_in, sc_lm, sc_fusion;
  sc->add_option("--model", sc_model)->required();
  sc->add_option("--input", sc_in, "Parallel TSV")->required()->check(CLI::ExistingFile);
  sc->add_option("--lm", sc_lm);
  sc->add_option("--fusion", sc_fusion);

  // gan-train
  auto* gt = seeded(app.add_subcommand("gan-train", "Adversarial pseudo-source encoder training"));
  std::string gt_model, gt_natural, gt_pseudo, gt_dev, gt_out, gt_steps, gt_ext;
  GanSpec gt_spec;
  gt->add_option("--model", gt_model)->required();
  gt->add_option("--natural", gt_natural)->required()->check(CLI::ExistingFile);
  gt->add_option("--pseudo", gt_pseudo)->required()->check(CLI::ExistingFile);
  gt->add_option("--dev", gt_dev)->required()->check(CLI::ExistingFile);
  gt->add_option("--model-out", gt_out)->required();
  gt->add_option("--steps-out", gt_steps, "JSON-lines step reports (default: stdout)");
  gt->add_option("--extension", gt_ext)->check(CLI::ExistingFile);
  gt->add_option("--g-gate", gt_spec.g_gate_accuracy)->capture_default_str();
  gt->add_option("--d-freeze", gt_spec.d_freeze_accuracy)->capture_default_str();
  gt->add_option("--pretrain-updates", gt_spec.pretrain_updates)->capture_default_str();
  gt->add_option("--disc-hidden", gt_spec.disc_hidden)->capture_default_str();
  bool gt_no_adv = false;
  gt->add_flag("--no-adversarial", gt_no_adv, "Two encoders, translation loss only");
  add_train_flags(gt, gt_spec.train);

  // lm-train
  auto* lt = seeded(app.add_subcommand("lm-train", "Train a target-side recurrent language model"));
  std::string lt_model, lt_vocab, lt_train, lt_dev, lt_out;
  LmConfig lt_cfg;
  TrainSpec lt_spec;
  lt->add_option("--model", lt_model, "Take the target vocabulary from this translation model");
  lt->add_option("--vocab", lt_vocab, "Or from this vocabulary file");
  lt->add_option("--train", lt_train)->required()->check(CLI::ExistingFile);
  lt->add_option("--dev", lt_dev)->required()->check(CLI::ExistingFile);
  lt->add_option("--lm-out", lt_out)->required();
  lt->add_option("--embed", lt_cfg.embed_dim)->capture_default_str();
  lt->add_option("--hidden", lt_cfg.hidden_dim)->capture_default_str();
  add_train_flags(lt, lt_spec);

  // fuse
  auto* fu = seeded(app.add_subcommand("fuse", "Train deep-fusion weights between a model and an LM"));
  std::string fu_model, fu_lm, fu_tuning, fu_dev, fu_out, fu_model_out;
  FuseSpec fu_spec;
  bool fu_ungated = false;
  fu->add_option("--model", fu_model)->required();
  fu->add_option("--lm", fu_lm)->required();
  fu->add_option("--tuning", fu_tuning, "Parallel TSV")->required()->check(CLI::ExistingFile);
  fu->add_option("--dev", fu_dev)->required()->check(CLI::ExistingFile);
  fu->add_option("--fusion-out", fu_out)->required();
  fu->add_option("--model-out", fu_model_out, "Save the model too (needed with --train-readout)");
  fu->add_flag("--ungated", fu_ungated);
  fu->add_flag("--train-readout", fu_spec.train_readout, "Also tune the decoder readout and output layer");
  add_train_flags(fu, fu_spec.train);

  // eval
  auto* ev = seeded(app.add_subcommand("eval", "Corpus BLEU of hypotheses against references"));
  std::string ev_hyp, ev_ref, ev_smooth = "none";
  ev->add_option("--hyp", ev_hyp)->required()->check(CLI::ExistingFile);
  ev->add_option("--ref", ev_ref, "References: one sentence per line, or a parallel TSV")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--smoothing", ev_smooth)->check(CLI::IsMember({"none", "add-one"}))->capture_default_str();

  // experiment
  auto* ex = seeded(app.add_subcommand("experiment", "Run a declarative end-to-end experiment"));
  std::string ex_config, ex_out, ex_cache;
  ex->add_option("--config", ex_config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  ex->add_option("--output-dir", ex_out, "Overrides output_dir");
  ex->add_option("--cache-dir", ex_cache, "Overrides MONOMT_CACHE");

  CLI11_PARSE(app, argc, argv);

  try {
    if (toy->parsed()) {
      toy_spec.seed = seed;
      for (const auto& f : save_toy_world(make_toy_world(toy_spec), toy_dir)) std::cout << toy_dir << "/" << f << "\n";
    } else if (synth->parsed()) {
      const auto mono = load_corpus(synth_in, marker);
      auto src_vocab = [&] {
        if (synth_vocab.empty()) throw Error("--src-vocab is required for " + synth_kind);
        return Vocabulary::load(synth_vocab);
      };
      auto translator = [&]() -> std::shared_ptr<const Translator> {
        std::shared_ptr<const Translator> base;
        if (!synth_table.empty()) {
          base = std::make_shared<RuleBasedTranslator>(RuleBasedTranslator::load(synth_table, "table"));
        } else if (!synth_model.empty()) {
          base = std::make_shared<NeuralTranslator>(std::make_shared<const ModelBundle>(load_bundle(synth_model)),
                                                    synth_beam, "nmt");
        } else {
          throw Error("--table or --model is required for " + synth_kind);
        }
        if (synth_error > 0.0) return std::make_shared<DegradedTranslator>(base, synth_error, seed);
        return base;
      };
      ParallelCorpus out;
      if (synth_kind == "backtrans") {
        auto r = back_translate(mono, *translator());
        out = std::move(r.corpus);
        if (r.dropped) std::cerr << "dropped " << r.dropped << " empty translations\n";
      } else if (synth_kind == "fwdtrans") {
        auto r = forward_translate(mono, *translator());
        out = std::move(r.corpus);
        if (r.dropped) std::cerr << "dropped " << r.dropped << " empty translations\n";
      } else if (synth_kind == "copy") {
        out = make_copy(mono, src_vocab());
      } else if (synth_kind == "copy-marked") {
        auto r = make_copy_marked(mono, src_vocab(), marker);
        out = std::move(r.corpus);
        if (!synth_ext_out.empty()) write_file(synth_ext_out, join(r.extension, "\n") + "\n");
      } else {
        out = make_copy_dummies(mono);
      }
      if (synth_noise) {
        noise_spec.seed = seed;
        out = noise_sources(out, noise_spec);
      }
      save_parallel(out, synth_out);
      std::cerr << out.size() << " pairs\n";
    } else if (align->parsed()) {
      const auto corpus = load_parallel(align_in);
      const auto res = ibm1_train(corpus, align_iters);
      for (std::size_t i = 0; i < res.log_likelihood.size(); ++i)
        std::cerr << "iteration " << i << " log-likelihood " << res.log_likelihood[i] << "\n";
      if (!align_table.empty()) write_file(align_table, res.table.serialize());
      if (!align_out.empty()) {
        std::string text;
        for (const auto& p : corpus.pairs) text += to_pharaoh(viterbi_align(res.table, p.source, p.target)) + "\n";
        write_file(align_out, text);
      }
      const auto m = monotonicity(corpus, res.table);
      std::cout << "mean_kendall_tau_distance\t" << m.mean << "\nshort_pairs\t" << m.short_pairs << "\n";
    } else if (select->parsed()) {
      const auto corpus = load_parallel(sel_in);
      ParallelCorpus chosen;
      if (sel_strategy == "monotonic") chosen = select_by_monotonicity(corpus, ibm1_train(corpus, sel_iters).table, sel_budget);
      else chosen = select_random(corpus, sel_budget, seed);
      save_parallel(chosen, sel_out);
      std::cerr << chosen.size() << " pairs, " << chosen.source_token_count() << " source tokens\n";
    } else if (stats->parsed()) {
      if (stats_parallel.empty() == stats_corpus.empty()) throw Error("give exactly one of --parallel or --corpus");
      fs::create_directories(stats_dir);
      std::optional<LengthRatioReport> lengths;
      std::optional<TokenTypeStats> tgt_stats;
      Corpus source;
      if (!stats_parallel.empty()) {
        const auto p = load_parallel(stats_parallel);
        lengths = length_ratio_report(p);
        source = p.sources();
        tgt_stats = token_type_stats(p.targets(), stats_k);
        write_file(stats_dir + "/length_ratio.tsv", length_ratio_tsv(*lengths));
      } else {
        source = load_corpus(stats_corpus);
      }
      const auto growth = stats_shuffle ? vocab_growth(source, stats_step, seed) : vocab_growth(source, stats_step);
      write_file(stats_dir + "/growth.tsv", growth_tsv(growth));
      const auto json = stats_json(lengths, growth, token_type_stats(source, stats_k), tgt_stats);
      write_file(stats_dir + "/stats.json", json);
      std::cout << json;
    } else if (train_cmd->parsed()) {
      const auto corpus = load_parallel(tr_train);
      std::optional<Corpus> extra;
      if (!tr_extra.empty()) extra = load_corpus(tr_extra);
      auto bundle = make_bundle(corpus, tr_model, derive_seed(seed, "init"), 1, extra ? &*extra : nullptr);
      tr_spec.seed = seed;
      print_history(train(bundle, corpus, load_parallel(tr_dev), tr_spec));
      save_bundle(bundle, tr_out);
    } else if (ft->parsed()) {
      auto bundle = load_bundle(ft_model);
      ft_spec.seed = seed;
      ft_opt.vocab_extension = read_extension(ft_ext);
      const auto r = fine_tune(bundle, load_parallel(ft_pseudo), load_parallel(ft_natural), load_parallel(ft_dev),
                               ft_spec, ft_opt);
      if (r.new_entries) std::cerr << r.new_entries << " new source entries, " << r.pretrain_updates << " pretraining updates\n";
      print_history(r.history);
      save_bundle(bundle, ft_out);
    } else if (tl->parsed()) {
      const auto bundle = load_bundle(tl_model);
      FusionHandle fh;
      load_fusion(fh, tl_lm, tl_fusion, bundle);
      save_corpus(translate_corpus(bundle, load_corpus(tl_in), tl_beam, fh.get()), tl_out);
    } else if (sc->parsed()) {
      const auto bundle = load_bundle(sc_model);
      FusionHandle fh;
      load_fusion(fh, sc_lm, sc_fusion, bundle);
      const auto s = score_corpus(bundle, load_parallel(sc_in), fh.get());
      std::cout << nlohmann::ordered_json{{"mean_token_xent", s.mean_token_xent},
                                          {"mean_sentence_xent", s.mean_sentence_xent},
                                          {"sentences", s.sentences},
                                          {"tokens", s.tokens}}
                       .dump(2)
                << "\n";
    } else if (gt->parsed()) {
      auto bundle = load_bundle(gt_model);
      const auto ext = read_extension(gt_ext);
      if (!ext.empty()) {
        const auto added = extend_vocabulary(bundle.src_vocab, ext);
        Rng rng(derive_seed(seed, "extend-vocab"));
        bundle.model.extend_source_vocab(added, rng);
      }
      gt_spec.adversarial = !gt_no_adv;
      gt_spec.train.seed = seed;
      GanModel gm(bundle, gt_spec, seed);
      std::optional<std::ofstream> file;
      if (!gt_steps.empty()) file.emplace(gt_steps);
      std::ostream& steps = file ? *file : std::cout;
      const auto r = gan_train(gm, load_parallel(gt_natural), load_parallel(gt_pseudo), load_parallel(gt_dev), gt_spec,
                               [&](const StepReport& s) { steps << s.json_line() << "\n"; });
      std::cerr << "pretraining accuracy " << r.pretrain.final_accuracy << "\n";
      print_history(r.history);
      save_bundle(bundle, gt_out);
    } else if (lt->parsed()) {
      if (lt_model.empty() == lt_vocab.empty()) throw Error("give exactly one of --model or --vocab");
      const auto vocab = lt_model.empty() ? Vocabulary::load(lt_vocab) : load_bundle(lt_model).tgt_vocab;
      lt_spec.seed = seed;
      const auto r = lm_train(load_corpus(lt_train), load_corpus(lt_dev), vocab, lt_cfg, lt_spec);
      print_history(r.history);
      std::cerr << "dev perplexity " << r.dev.perplexity << "\n";
      save_lm(r.lm, lt_out);
    } else if (fu->parsed()) {
      auto bundle = load_bundle(fu_model);
      const auto lm = load_lm(fu_lm);
      fu_spec.gated = !fu_ungated;
      fu_spec.train.seed = seed;
      DeepFusion fusion(lm, bundle.tgt_vocab.size(), fu_spec.gated, derive_seed(seed, "init"));
      const auto r = deep_fuse(bundle, fusion, load_parallel(fu_tuning), load_parallel(fu_dev), fu_spec);
      print_history(r.history);
      std::cerr << "dev loss " << r.base_dev.mean_token_xent << " -> " << r.fused_dev.mean_token_xent << "\n";
      fusion.params().save(fu_out);
      write_file(fu_out + ".json", nlohmann::ordered_json{{"gated", fu_spec.gated}}.dump() + "\n");
      if (!fu_model_out.empty()) save_bundle(bundle, fu_model_out);
      else if (fu_spec.train_readout) std::cerr << "warning: --train-readout without --model-out discards readout changes\n";
    } else if (ev->parsed()) {
      const auto hyp = read_token_lines(ev_hyp);
      std::vector<std::vector<std::string>> ref;
      if (ev_ref.ends_with(".tsv")) {
        for (const auto& s : load_parallel(ev_ref).targets().sentences) ref.push_back(s.words());
      } else {
        ref = read_token_lines(ev_ref);
      }
      const auto b = corpus_bleu(hyp, ref, ev_smooth == "none" ? Smoothing::None : Smoothing::AddOneOnZero);
      std::printf("BLEU = %.2f %.1f/%.1f/%.1f/%.1f (BP = %.3f, hyp_len = %zu, ref_len = %zu)\n", b.score,
                  100 * b.precisions[0], 100 * b.precisions[1], 100 * b.precisions[2], 100 * b.precisions[3],
                  b.brevity_penalty, b.hyp_len, b.ref_len);
    } else if (ex->parsed()) {
      auto cfg = ExperimentConfig::load(ex_config);
      if (ex->count("--seed")) cfg.seed = seed;
      if (!ex_out.empty()) cfg.output_dir = ex_out;
      const auto m = run_experiment(cfg, ex_cache.empty() ? cache_dir_from_env() : ex_cache,
                                    [](const std::string& msg) { std::cerr << msg << std::endl; });
      std::cout << m.json();
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
