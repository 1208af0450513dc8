#include "monomt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "json.hpp"
#include "monomt/align.hpp"

namespace monomt {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

// --- scheme -----------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

const std::vector<std::pair<std::string, Scheme::Base>>& base_names() {
  static const std::vector<std::pair<std::string, Scheme::Base>> names = {
      {"baseline", Scheme::Base::Baseline},       {"backtrans", Scheme::Base::BackTrans},
      {"fwdtrans", Scheme::Base::FwdTrans},       {"backfwdtrans", Scheme::Base::BackFwdTrans},
      {"copy", Scheme::Base::Copy},               {"copy-marked", Scheme::Base::CopyMarked},
      {"copy-dummies", Scheme::Base::CopyDummies}};
  return names;
}

// Strips "name(" ... ")" and returns the inside, or nullopt.
std::optional<std::string> unwrap(const std::string& s, std::string_view name) {
  if (s.size() < name.size() + 2 || s.compare(0, name.size(), name) != 0 || s[name.size()] != '(' ||
      s.back() != ')') {
    return std::nullopt;
  }
  return trim(std::string_view(s).substr(name.size() + 1, s.size() - name.size() - 2));
}

}  // namespace

Scheme Scheme::parse(std::string_view text) {
  Scheme sc;
  std::string s = trim(text);
  const std::string original = s;
  auto bad = [&](const std::string& why) { return Error("scheme '" + original + "': " + why); };
  for (bool changed = true; changed;) {
    changed = false;
    if (auto in = unwrap(s, "deep-fusion")) {
      if (sc.fusion || sc.gan || sc.noise) throw bad("deep-fusion must be the outermost wrapper");
      sc.fusion = true, s = *in, changed = true;
    } else if (auto in = unwrap(s, "gan")) {
      if (sc.gan || sc.noise) throw bad("gan may appear once, outside noise");
      sc.gan = true, s = *in, changed = true;
    } else if (auto in = unwrap(s, "noise")) {
      if (sc.noise) throw bad("noise may appear once");
      sc.noise = true, s = *in, changed = true;
    }
  }
  const auto plus = s.find('+');
  if (plus != std::string::npos) {
    if (trim(std::string_view(s).substr(plus + 1)) != "noise" || sc.noise) throw bad("expected '<base>+noise'");
    sc.noise = true;
    s = trim(std::string_view(s).substr(0, plus));
  }
  const auto& names = base_names();
  const auto it = std::find_if(names.begin(), names.end(), [&](const auto& p) { return p.first == s; });
  if (it == names.end()) throw bad("unknown base '" + s + "'");
  sc.base = it->second;
  if (sc.base == Base::Baseline && (sc.noise || sc.gan)) throw bad("baseline has no pseudo-sources to noise or encode");
  return sc;
}

std::string Scheme::str() const {
  std::string s;
  for (const auto& [name, b] : base_names())
    if (b == base) s = name;
  if (noise) s += "+noise";
  if (gan) s = "gan(" + s + ")";
  if (fusion) s = "deep-fusion(" + s + ")";
  return s;
}

// --- config parsing ---------------------------------------------------------

namespace {

// Reads keys from one JSON object and rejects any key nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error("config: " + where_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw Error("config: unknown key '" + k + "' in " + where_);
    }
  }
  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }
  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error("config: " + where_ + "." + key + ": " + e.what());
    }
  }
  const json& at(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }
  std::string sub(const std::string& key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

void read_train(const json& j, const std::string& where, TrainSpec& t) {
  Section s(j, where);
  s.read("batch_size", t.batch_size);
  s.read("lr", t.adam.lr);
  s.read("beta1", t.adam.beta1);
  s.read("beta2", t.adam.beta2);
  s.read("eps", t.adam.eps);
  s.read("clip_norm", t.adam.clip_norm);
  s.read("validation_interval", t.validation_interval);
  s.read("patience", t.patience);
  s.read("max_updates", t.max_updates);
  s.read("freeze", t.freeze);
}

ojson train_json(const TrainSpec& t) {
  return {{"batch_size", t.batch_size},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"clip_norm", t.adam.clip_norm},
          {"validation_interval", t.validation_interval},
          {"patience", t.patience},
          {"max_updates", t.max_updates},
          {"freeze", t.freeze}};
}

void read_toy(const json& j, const std::string& where, ToyWorldSpec& t) {
  Section s(j, where);
  s.read("seed", t.seed);
  s.read("general_adj", t.general_adj);
  s.read("general_noun", t.general_noun);
  s.read("general_verb", t.general_verb);
  s.read("domain_adj", t.domain_adj);
  s.read("domain_noun", t.domain_noun);
  s.read("domain_verb", t.domain_verb);
  s.read("reorder_rate", t.reorder_rate);
  s.read("fertility_rate", t.fertility_rate);
  s.read("cognate_rate", t.cognate_rate);
  s.read("domain_share", t.domain_share);
  s.read("adj_prob", t.adj_prob);
  s.read("particle_prob", t.particle_prob);
  s.read("pp_prob", t.pp_prob);
  s.read("noise_pair_rate", t.noise_pair_rate);
  s.read("history_particles", t.history_particles);
  s.read("out_parallel", t.out_parallel);
  s.read("in_parallel", t.in_parallel);
  s.read("in_mono", t.in_mono);
  s.read("dev", t.dev);
  s.read("test", t.test);
}

ojson toy_json(const ToyWorldSpec& t) {
  return {{"seed", t.seed},
          {"general_adj", t.general_adj},
          {"general_noun", t.general_noun},
          {"general_verb", t.general_verb},
          {"domain_adj", t.domain_adj},
          {"domain_noun", t.domain_noun},
          {"domain_verb", t.domain_verb},
          {"reorder_rate", t.reorder_rate},
          {"fertility_rate", t.fertility_rate},
          {"cognate_rate", t.cognate_rate},
          {"domain_share", t.domain_share},
          {"adj_prob", t.adj_prob},
          {"particle_prob", t.particle_prob},
          {"pp_prob", t.pp_prob},
          {"noise_pair_rate", t.noise_pair_rate},
          {"history_particles", t.history_particles},
          {"out_parallel", t.out_parallel},
          {"in_parallel", t.in_parallel},
          {"in_mono", t.in_mono},
          {"dev", t.dev},
          {"test", t.test}};
}

void read_beam(const json& j, const std::string& where, BeamOptions& b) {
  Section s(j, where);
  s.read("beam_width", b.beam_width);
  s.read("length_alpha", b.length_alpha);
}

ojson beam_json(const BeamOptions& b) { return {{"beam_width", b.beam_width}, {"length_alpha", b.length_alpha}}; }

void read_translator(const json& j, const std::string& where, const std::string& base_dir, TranslatorSpec& t) {
  Section s(j, where);
  std::string kind = "toy";
  s.read("kind", kind);
  if (kind == "toy") t.kind = TranslatorSpec::Kind::Toy;
  else if (kind == "table") t.kind = TranslatorSpec::Kind::Table;
  else if (kind == "nmt") t.kind = TranslatorSpec::Kind::Nmt;
  else throw Error("config: " + where + ".kind must be toy, table or nmt");
  s.read("error_rate", t.error_rate);
  if (s.has("path")) t.path = (fs::path(base_dir) / s.at("path").get<std::string>()).lexically_normal().string();
  if (s.has("beam")) read_beam(s.at("beam"), s.sub("beam"), t.beam);
}

const char* kind_name(TranslatorSpec::Kind k) {
  switch (k) {
    case TranslatorSpec::Kind::Toy: return "toy";
    case TranslatorSpec::Kind::Table: return "table";
    case TranslatorSpec::Kind::Nmt: return "nmt";
  }
  return "?";
}

std::string hash_or_empty(const std::string& path) {
  return path.empty() ? std::string() : hex64(file_hash(path));
}

ojson translator_json(const TranslatorSpec& t) {
  return {{"kind", kind_name(t.kind)},
          {"error_rate", t.error_rate},
          {"table", hash_or_empty(t.path)},
          {"beam", beam_json(t.beam)}};
}

const char* strategy_name(SelectionSpec::Strategy s) {
  switch (s) {
    case SelectionSpec::Strategy::None: return "none";
    case SelectionSpec::Strategy::Random: return "random";
    case SelectionSpec::Strategy::Monotonic: return "monotonic";
  }
  return "?";
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  c.train.max_updates = 1500;
  c.train.validation_interval = 100;
  c.finetune = c.train;
  c.finetune.max_updates = 600;
  c.lm_train = c.train;
  c.fusion.train = c.train;
  c.fusion.train.max_updates = 400;
  c.gan.train = c.finetune;

  auto path_of = [&](const std::string& p) { return (fs::path(base_dir) / p).lexically_normal().string(); };
  Section s(j, "config");
  s.read("version", c.version);
  if (c.version != 1) throw Error("config: unsupported version " + std::to_string(c.version));
  s.read("seed", c.seed);
  if (s.has("output_dir")) c.output_dir = path_of(s.at("output_dir").get<std::string>());
  if (!s.has("scheme")) throw Error("config: 'scheme' is required");
  c.scheme_text = s.at("scheme").get<std::string>();
  c.scheme = Scheme::parse(c.scheme_text);

  if (!s.has("data")) throw Error("config: 'data' is required");
  {
    Section d(s.at("data"), "data");
    if (d.has("toy")) {
      c.data.toy = ToyWorldSpec{};
      read_toy(d.at("toy"), "data.toy", *c.data.toy);
    }
    for (auto [key, field] : {std::pair{"out_parallel", &c.data.out_parallel},
                              {"out_dev", &c.data.out_dev},
                              {"in_mono_target", &c.data.in_mono_target},
                              {"in_mono_source", &c.data.in_mono_source},
                              {"in_parallel", &c.data.in_parallel},
                              {"dev", &c.data.dev},
                              {"test", &c.data.test}}) {
      if (d.has(key)) *field = path_of(d.at(key).get<std::string>());
    }
  }
  if (s.has("model")) {
    Section m(s.at("model"), "model");
    m.read("embed_dim", c.model.embed_dim);
    m.read("hidden_dim", c.model.hidden_dim);
    m.read("attention_dim", c.model.attention_dim);
    m.read("max_len", c.model.max_len);
  }
  if (s.has("train")) read_train(s.at("train"), "train", c.train);
  if (s.has("finetune")) {
    json ft = s.at("finetune");
    if (ft.is_object() && ft.contains("extension_pretrain_epochs")) {
      c.finetune_options.extension_pretrain_epochs = ft.at("extension_pretrain_epochs").get<std::size_t>();
      ft.erase("extension_pretrain_epochs");
    }
    read_train(ft, "finetune", c.finetune);
  }
  if (s.has("noise")) {
    Section n(s.at("noise"), "noise");
    n.read("p_drop", c.noise.p_drop);
    n.read("k", c.noise.k);
  }
  if (s.has("back_translator")) read_translator(s.at("back_translator"), "back_translator", base_dir, c.back_translator);
  if (s.has("forward_translator"))
    read_translator(s.at("forward_translator"), "forward_translator", base_dir, c.forward_translator);
  if (s.has("gan")) {
    Section g(s.at("gan"), "gan");
    g.read("g_gate_accuracy", c.gan.g_gate_accuracy);
    g.read("d_freeze_accuracy", c.gan.d_freeze_accuracy);
    g.read("pretrain_updates", c.gan.pretrain_updates);
    g.read("disc_hidden", c.gan.disc_hidden);
    g.read("adversarial", c.gan.adversarial);
    if (g.has("train")) read_train(g.at("train"), "gan.train", c.gan.train);
  }
  if (s.has("lm")) {
    Section l(s.at("lm"), "lm");
    l.read("embed_dim", c.lm.embed_dim);
    l.read("hidden_dim", c.lm.hidden_dim);
    if (l.has("train")) read_train(l.at("train"), "lm.train", c.lm_train);
  }
  if (s.has("fusion")) {
    Section f(s.at("fusion"), "fusion");
    f.read("gated", c.fusion.gated);
    f.read("train_readout", c.fusion.train_readout);
    std::string tuning = "out-domain";
    f.read("tuning", tuning);
    if (tuning == "in-domain") c.fusion_in_domain = true;
    else if (tuning != "out-domain") throw Error("config: fusion.tuning must be out-domain or in-domain");
    if (f.has("train")) read_train(f.at("train"), "fusion.train", c.fusion.train);
  }
  if (s.has("selection")) {
    Section sel(s.at("selection"), "selection");
    std::string strategy = "none";
    sel.read("strategy", strategy);
    if (strategy == "none") c.selection.strategy = SelectionSpec::Strategy::None;
    else if (strategy == "random") c.selection.strategy = SelectionSpec::Strategy::Random;
    else if (strategy == "monotonic") c.selection.strategy = SelectionSpec::Strategy::Monotonic;
    else throw Error("config: selection.strategy must be none, random or monotonic");
    sel.read("budget", c.selection.budget);
    sel.read("ibm1_iterations", c.selection.ibm1_iterations);
  }
  if (s.has("beam")) read_beam(s.at("beam"), "beam", c.beam);
  if (s.has("bleu")) {
    Section b(s.at("bleu"), "bleu");
    std::string sm = "none";
    b.read("smoothing", sm);
    if (sm == "none") c.bleu_smoothing = Smoothing::None;
    else if (sm == "add-one") c.bleu_smoothing = Smoothing::AddOneOnZero;
    else throw Error("config: bleu.smoothing must be none or add-one");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  auto c = parse(read_file(path), fs::path(path).parent_path().string());
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  auto need_file = [](const std::string& p, const std::string& what) {
    if (p.empty()) throw Error("config: data." + what + " is required");
    if (!fs::is_regular_file(p)) throw DataError("config: data." + what + " '" + p + "' does not exist");
  };
  const bool toy = data.toy.has_value();
  if (toy) {
    data.toy->validate();
    for (const auto* p : {&data.out_parallel, &data.out_dev, &data.in_mono_target, &data.in_mono_source,
                          &data.in_parallel, &data.dev, &data.test}) {
      if (!p->empty()) throw Error("config: data.toy cannot be combined with data file paths");
    }
  } else {
    need_file(data.out_parallel, "out_parallel");
    need_file(data.dev, "dev");
    need_file(data.test, "test");
    if (!data.out_dev.empty()) need_file(data.out_dev, "out_dev");
    if (scheme.has_synthesis() && scheme.base != Scheme::Base::FwdTrans) need_file(data.in_mono_target, "in_mono_target");
    if (scheme.base == Scheme::Base::FwdTrans || scheme.base == Scheme::Base::BackFwdTrans)
      need_file(data.in_mono_source, "in_mono_source");
    if (scheme.fusion) {
      need_file(data.in_mono_target, "in_mono_target");
      if (fusion_in_domain) need_file(data.in_parallel, "in_parallel");
    }
  }
  auto check_translator = [&](const TranslatorSpec& t, const char* name) {
    if (t.kind == TranslatorSpec::Kind::Toy && !toy) throw Error(std::string("config: ") + name + ": toy translators need data.toy");
    if (t.kind == TranslatorSpec::Kind::Table && !fs::is_regular_file(t.path))
      throw DataError(std::string("config: ") + name + ".path '" + t.path + "' does not exist");
    if (!(t.error_rate >= 0.0 && t.error_rate <= 1.0)) throw Error(std::string("config: ") + name + ".error_rate must be in [0,1]");
  };
  const auto b = scheme.base;
  if (b == Scheme::Base::BackTrans || b == Scheme::Base::BackFwdTrans) check_translator(back_translator, "back_translator");
  if (b == Scheme::Base::FwdTrans || b == Scheme::Base::BackFwdTrans) check_translator(forward_translator, "forward_translator");
  if (model.embed_dim == 0 || model.hidden_dim == 0 || model.attention_dim == 0 || model.max_len == 0)
    throw Error("config: model sizes must be positive");
  train.validate(model_groups());
  finetune.validate(model_groups());
  if (scheme.noise) noise.validate();
  if (scheme.gan) gan.validate();
  if (scheme.fusion) {
    lm_train.validate({group::kLm});
    fusion.train.validate(model_groups());
    if (lm.embed_dim == 0 || lm.hidden_dim == 0) throw Error("config: lm sizes must be positive");
  }
  if (selection.strategy != SelectionSpec::Strategy::None && selection.budget == 0)
    throw Error("config: selection.budget must be positive");
}

std::string ExperimentConfig::canonical_json() const {
  ojson j;
  j["version"] = version;
  j["seed"] = seed;
  j["scheme"] = scheme.str();
  ojson d;
  if (data.toy) {
    d["toy"] = toy_json(*data.toy);
  } else {
    d["out_parallel"] = hash_or_empty(data.out_parallel);
    d["out_dev"] = hash_or_empty(data.out_dev);
    d["in_mono_target"] = hash_or_empty(data.in_mono_target);
    d["in_mono_source"] = hash_or_empty(data.in_mono_source);
    d["in_parallel"] = hash_or_empty(data.in_parallel);
    d["dev"] = hash_or_empty(data.dev);
    d["test"] = hash_or_empty(data.test);
  }
  j["data"] = d;
  j["model"] = {{"embed_dim", model.embed_dim},
                {"hidden_dim", model.hidden_dim},
                {"attention_dim", model.attention_dim},
                {"max_len", model.max_len}};
  j["train"] = train_json(train);
  j["finetune"] = train_json(finetune);
  j["finetune"]["extension_pretrain_epochs"] = finetune_options.extension_pretrain_epochs;
  j["noise"] = {{"p_drop", noise.p_drop}, {"k", noise.k}};
  j["back_translator"] = translator_json(back_translator);
  j["forward_translator"] = translator_json(forward_translator);
  j["gan"] = {{"g_gate_accuracy", gan.g_gate_accuracy},
              {"d_freeze_accuracy", gan.d_freeze_accuracy},
              {"pretrain_updates", gan.pretrain_updates},
              {"disc_hidden", gan.disc_hidden},
              {"adversarial", gan.adversarial},
              {"train", train_json(gan.train)}};
  j["lm"] = {{"embed_dim", lm.embed_dim}, {"hidden_dim", lm.hidden_dim}, {"train", train_json(lm_train)}};
  j["fusion"] = {{"gated", fusion.gated},
                 {"train_readout", fusion.train_readout},
                 {"tuning", fusion_in_domain ? "in-domain" : "out-domain"},
                 {"train", train_json(fusion.train)}};
  j["selection"] = {{"strategy", strategy_name(selection.strategy)},
                    {"budget", selection.budget},
                    {"ibm1_iterations", selection.ibm1_iterations}};
  j["beam"] = beam_json(beam);
  j["bleu"] = {{"smoothing", bleu_smoothing == Smoothing::None ? "none" : "add-one"}};
  return j.dump(2);
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical_json()); }

// --- manifest ---------------------------------------------------------------

const StageRecord* RunManifest::stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<std::string> RunManifest::stage_names() const {
  std::vector<std::string> out;
  for (const auto& s : stages) out.push_back(s.name);
  return out;
}

std::string RunManifest::json() const {
  ojson j;
  j["format"] = "monomt-manifest";
  j["version"] = 1;
  j["config_hash"] = hex64(config_hash);
  j["scheme"] = scheme;
  j["seed"] = seed;
  j["stages"] = ojson::array();
  for (const auto& s : stages) {
    ojson st;
    st["name"] = s.name;
    st["seed"] = hex64(s.seed);
    st["key"] = hex64(s.key);
    st["outputs"] = ojson::array();
    for (const auto& a : s.outputs) st["outputs"].push_back({{"path", a.path}, {"hash", hex64(a.hash)}});
    j["stages"].push_back(st);
  }
  j["results"] = ojson::object();
  for (const auto& [k, v] : results) j["results"][k] = v;
  return j.dump(2) + "\n";
}

std::string RunManifest::timings_json() const {
  ojson j = ojson::array();
  for (const auto& s : stages) j.push_back({{"stage", s.name}, {"seconds", s.seconds}, {"cached", s.cached}});
  return j.dump(2) + "\n";
}

std::string cache_dir_from_env() {
  const char* v = std::getenv("MONOMT_CACHE");
  return v ? std::string(v) : std::string();
}

// --- runner -----------------------------------------------------------------

namespace {

std::vector<std::string> list_files(const fs::path& dir) {
  std::vector<std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

ojson history_json(const TrainHistory& h) {
  ojson v = ojson::array();
  for (const auto& p : h.validations) v.push_back({{"update", p.update}, {"dev_loss", p.dev_loss}});
  return {{"updates", h.updates},
          {"best_update", h.best_update},
          {"best_dev_loss", h.best_dev_loss},
          {"early_stopped", h.early_stopped},
          {"validations", v}};
}

void write_json(const fs::path& p, const ojson& j) { write_file(p.string(), j.dump(2) + "\n"); }

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  for (auto& l : split(read_file(path), '\n'))
    if (!l.empty()) out.push_back(l);
  return out;
}

class Runner {
 public:
  Runner(const ExperimentConfig& c, std::string cache, const std::function<void(const std::string&)>& log)
      : c_(c), out_(c.output_dir), cache_(std::move(cache)), log_(log) {
    manifest_.config_hash = c.hash();
    manifest_.scheme = c.scheme.str();
    manifest_.seed = c.seed;
  }

  RunManifest run() {
    fs::create_directories(out_);
    stage_data();
    if (c_.selection.strategy != SelectionSpec::Strategy::None) stage_select();
    stage_baseline();
    model_ = "baseline/model";
    const auto b = c_.scheme.base;
    if (c_.scheme.has_synthesis()) {
      const bool bt = b == Scheme::Base::BackTrans || b == Scheme::Base::BackFwdTrans;
      if (bt && c_.back_translator.kind == TranslatorSpec::Kind::Nmt) stage_reverse_model();
      stage_synth();
      if (c_.scheme.gan) {
        stage_gan_pretrain();
        stage_gan_joint();
        model_ = "gan-joint/model";
      } else {
        stage_finetune();
        model_ = "finetune/model";
      }
    }
    if (c_.scheme.fusion) {
      stage_lm_train();
      stage_fuse();
    }
    stage_translate();
    stage_eval();

    const auto bleu = nlohmann::json::parse(read_file(path("eval/bleu.json")));
    manifest_.results["bleu"] = bleu.at("bleu").get<double>();
    const auto tr = nlohmann::json::parse(read_file(path("translate/scores.json")));
    manifest_.results["test_xent"] = tr.at("mean_token_xent").get<double>();
    write_file(path("manifest.json"), manifest_.json());
    write_file(path("timings.json"), manifest_.timings_json());
    return manifest_;
  }

 private:
  std::string path(const std::string& rel) const { return (out_ / rel).string(); }

  // Runs `body` in <out>/<name>/ unless a cached copy exists for the same key.
  void stage(const std::string& name, const ojson& settings, const std::function<void(const fs::path&, std::uint64_t)>& body) {
    StageRecord rec;
    rec.name = name;
    rec.seed = derive_seed(c_.seed, name);
    std::string key_text = name + "\n" + settings.dump() + "\n" + hex64(rec.seed) + "\n";
    for (const auto& s : manifest_.stages)
      for (const auto& a : s.outputs) key_text += a.path + " " + hex64(a.hash) + "\n";
    rec.key = fnv1a(key_text);

    const fs::path dir = out_ / name;
    const fs::path cached = cache_.empty() ? fs::path() : fs::path(cache_) / (name + "-" + hex64(rec.key));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fs::remove_all(dir);
      if (!cache_.empty() && fs::is_directory(cached)) {
        if (log_) log_("stage " + name + ": cached");
        fs::copy(cached, dir, fs::copy_options::recursive);
        rec.cached = true;
      } else {
        if (log_) log_("stage " + name + ": running");
        fs::create_directories(dir);
        body(dir, rec.seed);
        if (!cache_.empty()) store(dir, cached);
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& f : list_files(dir)) {
      const auto rel = name + "/" + f;
      rec.outputs.push_back({rel, file_hash(path(rel))});
    }
    manifest_.stages.push_back(std::move(rec));
  }

  // Copy into a private temporary directory, then rename, so concurrent runs
  // never observe a partial cache entry.
  static void store(const fs::path& dir, const fs::path& cached) {
    fs::create_directories(cached.parent_path());
    const fs::path tmp = cached.string() + ".tmp-" + std::to_string(::getpid());
    fs::remove_all(tmp);
    fs::copy(dir, tmp, fs::copy_options::recursive);
    std::error_code ec;
    fs::rename(tmp, cached, ec);
    if (ec) fs::remove_all(tmp);
  }

  ParallelCorpus training_corpus() const {
    return load_parallel(path(c_.selection.strategy == SelectionSpec::Strategy::None ? "data/out.parallel.tsv"
                                                                                     : "select/selected.tsv"));
  }

  void stage_data() {
    ojson settings = nlohmann::ordered_json::parse(c_.canonical_json())["data"];
    stage("data", settings, [&](const fs::path& dir, std::uint64_t) {
      if (c_.data.toy) {
        save_toy_world(make_toy_world(*c_.data.toy), dir.string());
        return;
      }
      // Inputs are validated and rewritten in the canonical formats.
      save_parallel(load_parallel(c_.data.out_parallel), (dir / "out.parallel.tsv").string());
      const auto dev = load_parallel(c_.data.dev);
      save_parallel(dev, (dir / "dev.in.tsv").string());
      save_parallel(load_parallel(c_.data.test), (dir / "test.in.tsv").string());
      save_parallel(c_.data.out_dev.empty() ? dev : load_parallel(c_.data.out_dev), (dir / "dev.out.tsv").string());
      if (!c_.data.in_mono_target.empty())
        save_corpus(load_corpus(c_.data.in_mono_target), (dir / "in.mono.tgt").string());
      if (!c_.data.in_mono_source.empty())
        save_corpus(load_corpus(c_.data.in_mono_source), (dir / "in.mono.src").string());
      if (!c_.data.in_parallel.empty())
        save_parallel(load_parallel(c_.data.in_parallel), (dir / "in.parallel.tsv").string());
    });
  }

  void stage_select() {
    const auto& sel = c_.selection;
    ojson settings = {{"strategy", strategy_name(sel.strategy)},
                      {"budget", sel.budget},
                      {"ibm1_iterations", sel.ibm1_iterations}};
    stage("select", settings, [&](const fs::path& dir, std::uint64_t seed) {
      const auto corpus = load_parallel(path("data/out.parallel.tsv"));
      ParallelCorpus chosen;
      ojson report;
      if (sel.strategy == SelectionSpec::Strategy::Monotonic) {
        const auto ibm = ibm1_train(corpus, sel.ibm1_iterations);
        write_file((dir / "ibm1.table.tsv").string(), ibm.table.serialize());
        chosen = select_by_monotonicity(corpus, ibm.table, sel.budget);
        report["mean_tau_all"] = monotonicity(corpus, ibm.table).mean;
        report["mean_tau_selected"] = monotonicity(chosen, ibm.table).mean;
      } else {
        chosen = select_random(corpus, sel.budget, seed);
      }
      report["pairs"] = chosen.size();
      report["source_tokens"] = chosen.source_token_count();
      save_parallel(chosen, (dir / "selected.tsv").string());
      write_json(dir / "report.json", report);
    });
  }

  void stage_baseline() {
    ojson settings = {{"model", nlohmann::ordered_json::parse(c_.canonical_json())["model"]},
                      {"train", train_json(c_.train)}};
    stage("baseline", settings, [&](const fs::path& dir, std::uint64_t seed) {
      const auto corpus = training_corpus();
      const auto dev = load_parallel(path("data/dev.out.tsv"));
      // The target vocabulary covers in-domain monolingual text so that later
      // stages can produce in-domain words.
      std::optional<Corpus> mono;
      if (fs::exists(path("data/in.mono.tgt"))) mono = load_corpus(path("data/in.mono.tgt"));
      auto bundle = make_bundle(corpus, c_.model, derive_seed(seed, "init"), 1, mono ? &*mono : nullptr);
      TrainSpec spec = c_.train;
      spec.seed = seed;
      const auto h = train(bundle, corpus, dev, spec);
      save_bundle(bundle, (dir / "model").string());
      write_json(dir / "history.json", history_json(h));
    });
  }

  void stage_reverse_model() {
    ojson settings = {{"model", nlohmann::ordered_json::parse(c_.canonical_json())["model"]},
                      {"train", train_json(c_.train)}};
    stage("reverse-model", settings, [&](const fs::path& dir, std::uint64_t seed) {
      auto swap = [](const ParallelCorpus& p) {
        return ParallelCorpus::zip(p.targets(), p.sources(), Provenance::natural());
      };
      const auto corpus = swap(training_corpus());
      const auto dev = swap(load_parallel(path("data/dev.out.tsv")));
      auto bundle = make_bundle(corpus, c_.model, derive_seed(seed, "init"));
      TrainSpec spec = c_.train;
      spec.seed = seed;
      const auto h = train(bundle, corpus, dev, spec);
      save_bundle(bundle, (dir / "model").string());
      write_json(dir / "history.json", history_json(h));
    });
  }

  std::shared_ptr<const Translator> make_translator(const TranslatorSpec& t, bool backward, std::uint64_t seed) {
    const std::string id = std::string(backward ? "bt-" : "ft-") + kind_name(t.kind);
    switch (t.kind) {
      case TranslatorSpec::Kind::Toy: {
        world_ = std::make_shared<ToyWorld>(make_toy_world(*c_.data.toy));
        return backward ? toy_back_translator(*world_, t.error_rate, seed, id)
                        : toy_forward_translator(*world_, t.error_rate, seed, id);
      }
      case TranslatorSpec::Kind::Table:
        return std::make_shared<RuleBasedTranslator>(RuleBasedTranslator::load(t.path, id));
      case TranslatorSpec::Kind::Nmt: {
        auto bundle = std::make_shared<const ModelBundle>(
            load_bundle(path(backward ? "reverse-model/model" : "baseline/model")));
        return std::make_shared<NeuralTranslator>(bundle, t.beam, id);
      }
    }
    throw Error("unknown translator kind");
  }

  void stage_synth() {
    ojson settings = {{"scheme", c_.scheme.str()}, {"noise", {{"p_drop", c_.noise.p_drop}, {"k", c_.noise.k}}}};
    const auto b = c_.scheme.base;
    if (b == Scheme::Base::BackTrans || b == Scheme::Base::BackFwdTrans)
      settings["back_translator"] = translator_json(c_.back_translator);
    if (b == Scheme::Base::FwdTrans || b == Scheme::Base::BackFwdTrans)
      settings["forward_translator"] = translator_json(c_.forward_translator);
    stage("synth", settings, [&](const fs::path& dir, std::uint64_t seed) {
      const auto bundle = load_bundle(path("baseline/model"));
      ParallelCorpus pseudo;
      ojson report;
      auto mono_tgt = [&] { return load_corpus(path("data/in.mono.tgt")); };
      switch (b) {
        case Scheme::Base::BackTrans:
        case Scheme::Base::FwdTrans:
        case Scheme::Base::BackFwdTrans: {
          if (b != Scheme::Base::FwdTrans) {
            const auto tr = make_translator(c_.back_translator, true, derive_seed(seed, "back"));
            auto r = back_translate(mono_tgt(), *tr);
            report["back_dropped"] = r.dropped;
            pseudo = concat(pseudo, r.corpus);
          }
          if (b != Scheme::Base::BackTrans) {
            const auto tr = make_translator(c_.forward_translator, false, derive_seed(seed, "forward"));
            auto r = forward_translate(load_corpus(path("data/in.mono.src")), *tr);
            report["forward_dropped"] = r.dropped;
            pseudo = concat(pseudo, r.corpus);
          }
          break;
        }
        case Scheme::Base::Copy:
          pseudo = make_copy(mono_tgt(), bundle.src_vocab);
          break;
        case Scheme::Base::CopyMarked: {
          auto r = make_copy_marked(mono_tgt(), bundle.src_vocab);
          pseudo = std::move(r.corpus);
          std::string ext;
          for (const auto& e : r.extension) ext += e + "\n";
          write_file((dir / "extension.txt").string(), ext);
          report["extension"] = r.extension.size();
          break;
        }
        case Scheme::Base::CopyDummies:
          pseudo = make_copy_dummies(mono_tgt());
          break;
        case Scheme::Base::Baseline:
          break;
      }
      if (c_.scheme.noise) {
        NoiseSpec ns = c_.noise;
        ns.seed = derive_seed(seed, "noise");
        pseudo = noise_sources(pseudo, ns);
      }
      if (pseudo.empty()) throw DataError("no pseudo-parallel pairs were produced");
      report["pairs"] = pseudo.size();
      save_parallel(pseudo, (dir / "pseudo.tsv").string());
      write_json(dir / "report.json", report);
    });
  }

  std::vector<std::string> extension() const {
    return fs::exists(path("synth/extension.txt")) ? read_lines(path("synth/extension.txt"))
                                                   : std::vector<std::string>{};
  }

  void stage_finetune() {
    ojson settings = {{"finetune", train_json(c_.finetune)},
                      {"extension_pretrain_epochs", c_.finetune_options.extension_pretrain_epochs}};
    stage("finetune", settings, [&](const fs::path& dir, std::uint64_t seed) {
      auto bundle = load_bundle(path("baseline/model"));
      TrainSpec spec = c_.finetune;
      spec.seed = seed;
      FineTuneOptions opt = c_.finetune_options;
      opt.vocab_extension = extension();
      const auto r = fine_tune(bundle, load_parallel(path("synth/pseudo.tsv")), training_corpus(),
                               load_parallel(path("data/dev.in.tsv")), spec, opt);
      save_bundle(bundle, (dir / "model").string());
      auto h = history_json(r.history);
      h["new_entries"] = r.new_entries;
      h["pretrain_updates"] = r.pretrain_updates;
      write_json(dir / "history.json", h);
    });
  }

  ojson gan_settings() const {
    return nlohmann::ordered_json::parse(c_.canonical_json())["gan"];
  }

  GanSpec gan_spec(std::uint64_t seed) const {
    GanSpec g = c_.gan;
    g.train.seed = seed;
    return g;
  }

  void stage_gan_pretrain() {
    stage("gan-pretrain", gan_settings(), [&](const fs::path& dir, std::uint64_t seed) {
      auto bundle = load_bundle(path("baseline/model"));
      const auto ext = extension();
      if (!ext.empty()) {
        const auto added = extend_vocabulary(bundle.src_vocab, ext);
        Rng rng(derive_seed(seed, "extend-vocab"));
        bundle.model.extend_source_vocab(added, rng);
      }
      const auto spec = gan_spec(seed);
      GanModel gm(bundle, spec, seed);
      const auto rep = gan_pretrain(gm, training_corpus(), load_parallel(path("synth/pseudo.tsv")), spec);
      save_bundle(bundle, (dir / "model").string());
      gm.pseudo_params().save((dir / "pseudo.params").string());
      gm.discriminator().params().save((dir / "discriminator.params").string());
      write_json(dir / "report.json", {{"updates", rep.updates}, {"final_accuracy", rep.final_accuracy}});
    });
  }

  void stage_gan_joint() {
    stage("gan-joint", gan_settings(), [&](const fs::path& dir, std::uint64_t seed) {
      auto bundle = load_bundle(path("gan-pretrain/model"));
      auto spec = gan_spec(seed);
      spec.pretrain_updates = 0;
      GanModel gm(bundle, spec, seed);
      gm.pseudo_params().assign_values(ParameterSet::load(path("gan-pretrain/pseudo.params")));
      gm.discriminator().params().assign_values(ParameterSet::load(path("gan-pretrain/discriminator.params")));
      std::string steps;
      const auto rep = gan_train(gm, training_corpus(), load_parallel(path("synth/pseudo.tsv")),
                                 load_parallel(path("data/dev.in.tsv")), spec,
                                 [&](const StepReport& s) { steps += s.json_line() + "\n"; });
      write_file((dir / "steps.jsonl").string(), steps);
      save_bundle(bundle, (dir / "model").string());
      gm.pseudo_params().save((dir / "pseudo.params").string());
      gm.discriminator().params().save((dir / "discriminator.params").string());
      write_json(dir / "history.json", history_json(rep.history));
    });
  }

  void stage_lm_train() {
    ojson settings = {{"embed_dim", c_.lm.embed_dim}, {"hidden_dim", c_.lm.hidden_dim}, {"train", train_json(c_.lm_train)}};
    stage("lm-train", settings, [&](const fs::path& dir, std::uint64_t seed) {
      const auto bundle = load_bundle(path(model_));
      TrainSpec spec = c_.lm_train;
      spec.seed = seed;
      const auto r = lm_train(load_corpus(path("data/in.mono.tgt")), load_parallel(path("data/dev.in.tsv")).targets(),
                              bundle.tgt_vocab, c_.lm, spec);
      save_lm(r.lm, (dir / "lm").string());
      auto h = history_json(r.history);
      h["dev_perplexity"] = r.dev.perplexity;
      write_json(dir / "history.json", h);
    });
  }

  void stage_fuse() {
    ojson settings = {{"gated", c_.fusion.gated},
                      {"train_readout", c_.fusion.train_readout},
                      {"tuning", c_.fusion_in_domain ? "in-domain" : "out-domain"},
                      {"train", train_json(c_.fusion.train)}};
    stage("fuse", settings, [&](const fs::path& dir, std::uint64_t seed) {
      auto bundle = load_bundle(path(model_));
      const auto lm = load_lm(path("lm-train/lm"));
      DeepFusion fusion(lm, bundle.tgt_vocab.size(), c_.fusion.gated, derive_seed(seed, "init"));
      FuseSpec spec = c_.fusion;
      spec.train.seed = seed;
      const auto tuning = c_.fusion_in_domain ? load_parallel(path("data/in.parallel.tsv")) : training_corpus();
      const auto r = deep_fuse(bundle, fusion, tuning, load_parallel(path("data/dev.in.tsv")), spec);
      fusion.params().save((dir / "fusion.params").string());
      save_bundle(bundle, (dir / "model").string());
      auto h = history_json(r.history);
      h["base_dev_loss"] = r.base_dev.mean_token_xent;
      h["fused_dev_loss"] = r.fused_dev.mean_token_xent;
      write_json(dir / "history.json", h);
    });
    model_ = "fuse/model";
  }

  void stage_translate() {
    stage("translate", beam_json(c_.beam), [&](const fs::path& dir, std::uint64_t) {
      const auto bundle = load_bundle(path(model_));
      std::optional<RnnLm> lm;
      std::optional<DeepFusion> fusion;
      if (c_.scheme.fusion) {
        lm = load_lm(path("lm-train/lm"));
        fusion.emplace(*lm, bundle.tgt_vocab.size(), c_.fusion.gated, 0);
        fusion->load_params(path("fuse/fusion.params"));
      }
      const HistoryModel* history = fusion ? &*fusion : nullptr;
      const auto test = load_parallel(path("data/test.in.tsv"));
      save_corpus(translate_corpus(bundle, test.sources(), c_.beam, history), (dir / "test.hyp").string());
      const auto sc = score_corpus(bundle, test, history);
      write_json(dir / "scores.json", {{"mean_token_xent", sc.mean_token_xent},
                                       {"mean_sentence_xent", sc.mean_sentence_xent},
                                       {"tokens", sc.tokens}});
    });
  }

  void stage_eval() {
    ojson settings = {{"smoothing", c_.bleu_smoothing == Smoothing::None ? "none" : "add-one"}};
    stage("eval", settings, [&](const fs::path& dir, std::uint64_t) {
      const auto hyp = read_token_lines(path("translate/test.hyp"));
      std::vector<std::vector<std::string>> ref;
      for (const auto& s : load_parallel(path("data/test.in.tsv")).targets().sentences) ref.push_back(s.words());
      const auto b = corpus_bleu(hyp, ref, c_.bleu_smoothing);
      write_json(dir / "bleu.json", {{"bleu", b.score},
                                     {"precisions", b.precisions},
                                     {"brevity_penalty", b.brevity_penalty},
                                     {"hyp_len", b.hyp_len},
                                     {"ref_len", b.ref_len}});
    });
  }

  const ExperimentConfig& c_;
  fs::path out_;
  std::string cache_;
  const std::function<void(const std::string&)>& log_;
  RunManifest manifest_;
  std::string model_;
  std::shared_ptr<ToyWorld> world_;
};

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, const std::string& cache_dir,
                           const std::function<void(const std::string&)>& log) {
  config.validate();
  if (config.output_dir.empty()) throw Error("experiment: output_dir is not set");
  Runner r(config, cache_dir, log);
  return r.run();
}

}  // namespace monomt
