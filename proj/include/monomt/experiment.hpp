#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "monomt/eval.hpp"
#include "monomt/gan.hpp"
#include "monomt/lm.hpp"
#include "monomt/nmt.hpp"
#include "monomt/synth.hpp"
#include "monomt/toyworld.hpp"

namespace monomt {

/// Pseudo-parallel data kind plus optional wrappers, parsed from strings such
/// as "gan(copy-marked+noise)" or "deep-fusion(backtrans)".
struct Scheme {
  enum class Base { Baseline, BackTrans, FwdTrans, BackFwdTrans, Copy, CopyMarked, CopyDummies };
  Base base = Base::Baseline;
  bool noise = false;
  bool gan = false;
  bool fusion = false;

  static Scheme parse(std::string_view text);
  std::string str() const;
  bool has_synthesis() const { return base != Base::Baseline; }
};

/// Where pseudo-sources and pseudo-targets come from.
struct TranslatorSpec {
  enum class Kind { Toy, Table, Nmt };
  Kind kind = Kind::Toy;
  double error_rate = 0.0;  // toy only
  std::string path;         // table only
  BeamOptions beam;         // nmt only
};

struct SelectionSpec {
  enum class Strategy { None, Random, Monotonic };
  Strategy strategy = Strategy::None;
  std::size_t budget = 0;  // source tokens
  std::size_t ibm1_iterations = 10;
};

/// Either a toy world or explicit file paths.
struct DataSpec {
  std::optional<ToyWorldSpec> toy;
  std::string out_parallel;    // TSV
  std::string out_dev;         // TSV; baseline early stopping (defaults to dev)
  std::string in_mono_target;  // one sentence per line
  std::string in_mono_source;  // fwdtrans only
  std::string in_parallel;     // TSV; fusion tuning
  std::string dev;             // TSV, in-domain
  std::string test;            // TSV, in-domain
};

struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 1;
  std::string output_dir;
  DataSpec data;
  Scheme scheme;
  std::string scheme_text;
  ModelConfig model;
  TrainSpec train;
  TrainSpec finetune;
  FineTuneOptions finetune_options;
  NoiseSpec noise;
  TranslatorSpec back_translator;
  TranslatorSpec forward_translator;
  GanSpec gan;
  LmConfig lm;
  TrainSpec lm_train;
  FuseSpec fusion;
  /// Fusion tunes on the baseline's out-of-domain training data unless set.
  bool fusion_in_domain = false;
  SelectionSpec selection;
  BeamOptions beam;
  Smoothing bleu_smoothing = Smoothing::None;

  /// Parses a JSON document (schema version 1). Relative paths resolve against
  /// `base_dir`. Unknown keys are errors.
  static ExperimentConfig parse(std::string_view json_text, const std::string& base_dir = ".");
  static ExperimentConfig load(const std::string& path);
  /// Checks referenced files and scheme-specific sections.
  void validate() const;
  /// Canonical JSON (defaults filled in); its hash identifies the config.
  std::string canonical_json() const;
  std::uint64_t hash() const;
};

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::uint64_t hash = 0;
};

struct StageRecord {
  std::string name;
  std::uint64_t seed = 0;
  std::uint64_t key = 0;  // cache key
  bool cached = false;    // not written to the manifest
  double seconds = 0.0;   // not written to the manifest
  std::vector<ArtifactRecord> outputs;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string scheme;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  std::map<std::string, double> results;  // e.g. "bleu", "test_xent"

  const StageRecord* stage(const std::string& name) const;
  std::vector<std::string> stage_names() const;
  /// Deterministic JSON: no timings or cache flags.
  std::string json() const;
  std::string timings_json() const;
};

/// Raised when a stage fails; earlier stage outputs stay on disk.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Cache directory from MONOMT_CACHE, empty when unset.
std::string cache_dir_from_env();

/// Runs data → [select] → baseline → [synth] → [finetune | gan-pretrain,
/// gan-joint] → [lm-train, fuse] → translate → eval. Every stage reads its
/// inputs from files written by earlier stages, writes into
/// `<output_dir>/<stage>/`, and may be restored from `cache_dir`. Writes
/// manifest.json and timings.json at the end.
RunManifest run_experiment(const ExperimentConfig& config, const std::string& cache_dir = cache_dir_from_env(),
                           const std::function<void(const std::string&)>& log = {});

}  // namespace monomt
