#include "remask/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "remask/corpus.hpp"
#include "remask/denoiser.hpp"
#include "remask/engine.hpp"
#include "remask/error.hpp"
#include "remask/eval.hpp"
#include "remask/masking.hpp"
#include "remask/remote.hpp"
#include "remask/sufficiency.hpp"

namespace remask {

using nlohmann::json;

namespace {

struct UsageError : Error {
  using Error::Error;
};

enum Command : unsigned {
  kTrainDenoiser = 1u << 0,
  kTrainClassifier = 1u << 1,
  kGenerate = 1u << 2,
  kScore = 1u << 3,
  kEvaluate = 1u << 4,
  kAblate = 1u << 5,
};
constexpr unsigned kAll = 0x3f;
constexpr unsigned kDecode = kGenerate | kAblate;
constexpr unsigned kScoring = kGenerate | kScore | kAblate;
constexpr unsigned kTables = kEvaluate | kAblate;

struct KeySpec {
  const char* name;
  const char* fallback;
  const char* help;
  unsigned commands;
  bool flag = false;
};

const KeySpec kKeys[] = {
    {"seed", "0", "root seed for every random stream", kAll},
    {"data", "", "dataset path", kTrainDenoiser | kTrainClassifier | kEvaluate | kAblate},
    {"data_format", "auto", "claims_json, pairs_csv or auto (by file extension)", kAll},
    {"out", "", "output path", kAll},
    {"report", "", "training report path (default: standard output)", kTrainDenoiser | kTrainClassifier},
    {"model", "", "denoiser archive", kDecode},
    {"input", "", "instances to summarize or score", kGenerate | kScore},
    {"predictions", "", "JSON lines with id and summary", kEvaluate},
    {"summary", "", "summary text to score (default: each reference)", kScore},
    {"trace", "", "refinement trace output (JSON lines)", kGenerate},
    {"canvas_length", "64", "canvas length L", kTrainDenoiser | kScore},
    {"model_kind", "categorical", "oracle or categorical", kTrainDenoiser},
    {"epochs", "5", "denoiser training epochs", kTrainDenoiser},
    {"mask_ratio", "0.3", "training corruption ratio", kTrainDenoiser},
    {"smoothing", "0.1", "add-alpha smoothing", kTrainDenoiser},
    {"copy_bias", "2.0", "multiplier for tokens found in the input", kTrainDenoiser},
    {"buckets", "8", "position buckets", kTrainDenoiser},
    {"gradient_refine", "false", "refine the count tables by gradient steps", kTrainDenoiser, true},
    {"gradient_step", "0.1", "gradient refinement step size", kTrainDenoiser},
    {"classifier_epochs", "300", "classifier gradient steps", kTrainClassifier},
    {"classifier_lr", "1.0", "classifier learning rate", kTrainClassifier},
    {"classifier_dim", "4096", "classifier feature dimension", kTrainClassifier},
    {"k_per_type", "2", "negatives per perturbation type and instance", kTrainClassifier},
    {"holdout", "0.2", "fraction of topics held out", kTrainClassifier},
    {"steps", "8", "denoising steps T", kDecode},
    {"remask_policy", "low_confidence", "low_confidence or random", kDecode},
    {"fill_policy", "sample", "argmax or sample for initial generation", kDecode},
    {"refine", "0", "refinement iterations", kGenerate},
    {"iterations", "0,1,2,3", "comma-separated iteration counts", kAblate},
    {"scorers", "", "comma-separated scorer variants (default: scorer)", kAblate},
    {"lambda", "0.1", "exploration weight", kDecode},
    {"r", "0.2", "fraction of candidates remasked per iteration", kDecode},
    {"r_decay", "1.0", "factor applied to r after each iteration", kDecode},
    {"epsilon", "1e-6", "convergence threshold on total weight", kDecode},
    {"granularity", "token", "token or sentence", kDecode},
    {"inner_steps", "4", "denoising steps per refinement iteration", kDecode},
    {"tau", "0.9", "minimum sufficiency treated as converged", kScoring},
    {"scorer", "heuristic", "none, heuristic, classifier, cot or combined", kScoring},
    {"alpha", "0.5", "classifier weight when combining", kScoring},
    {"classifier", "", "classifier archive", kScoring},
    {"llm_endpoint", "", "chat endpoint url (default: REMASK_LLM_ENDPOINT)", kScoring},
    {"llm_model", "default", "chat model name", kScoring},
    {"template", "sufficiency_cot", "prompt template id or path", kScoring},
    {"max_in_flight", "4", "concurrent judge requests", kScoring},
    {"coverage_threshold", "0.3", "coverage proxy threshold", kGenerate | kTables},
    {"csv", "false", "print the table as CSV", kTables, true},
    {"json", "false", "print JSON instead of a table", kTables, true},
    {"external", "", "name=command external scorers, separated by ';'", kTables},
    {"external_endpoint", "", "name=url external scorers, separated by ';'", kTables},
};

const KeySpec* find_key(std::string_view name) {
  for (const auto& k : kKeys)
    if (name == k.name) return &k;
  return nullptr;
}

class Settings {
 public:
  explicit Settings(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  const std::string& str(const std::string& key) const { return values_.at(key); }
  bool has(const std::string& key) const { return !values_.at(key).empty(); }

  double num(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw UsageError("invalid number for " + key + ": '" + v + "'");
  }

  std::uint64_t u64(const std::string& key) const { return parse_u64(key, str(key)); }
  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("invalid boolean for " + key + ": '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key, char sep) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(str(key));
    while (std::getline(in, item, sep)) {
      auto b = item.find_first_not_of(" \t");
      auto e = item.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
  }

  std::string path(const std::string& key) const {
    if (!has(key)) throw UsageError("--" + dashed(key) + " is required");
    return str(key);
  }

  const std::map<std::string, std::string>& echo() const { return values_; }

  static std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty())
      throw UsageError("invalid non-negative integer for " + key + ": '" + v + "'");
    return out;
  }

  static std::string dashed(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Configuration failures found before any work starts are usage errors.
template <class F>
auto checked(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

/// Writes to --out when given, otherwise to `fallback`.
void emit(const Settings& s, const std::string& key, std::ostream& fallback, const std::string& text) {
  if (s.has(key)) {
    write_file(s.str(key), text);
  } else {
    fallback << text;
  }
}

std::vector<ArgumentInstance> load(const Settings& s, const std::string& key) {
  const std::string path = s.path(key);
  DatasetFormat format;
  if (s.str("data_format") == "auto") {
    const auto ext = std::filesystem::path(path).extension().string();
    format = ext == ".csv" ? DatasetFormat::pairs_csv : DatasetFormat::claims_json;
  } else {
    format = checked([&] { return parse_dataset_format(s.str("data_format")); });
  }
  return load_dataset(path, format);
}

json echo_json(const Settings& s) { return json(s.echo()); }

// ---------------------------------------------------------------------------

DiffusionSchedule schedule_from(const Settings& s) {
  return checked([&] {
    auto schedule = DiffusionSchedule::linear(s.size("steps"), parse_remask_policy(s.str("remask_policy")),
                                              parse_fill_policy(s.str("fill_policy")));
    schedule.validate();
    return schedule;
  });
}

RefineConfig refine_from(const Settings& s, std::size_t iterations) {
  return checked([&] {
    RefineConfig c;
    c.iterations = iterations;
    c.mask.lambda = s.num("lambda");
    c.mask.r = s.num("r");
    c.mask.r_decay = s.num("r_decay");
    c.mask.epsilon_converged = s.num("epsilon");
    c.mask.granularity = parse_granularity(s.str("granularity"));
    c.inner_steps = s.size("inner_steps");
    c.tau = s.num("tau");
    c.validate();
    return c;
  });
}

/// Loads whatever components are configured. With `require`, a component the
/// scorer kind needs but cannot get is a usage error.
Scorer scorer_from(const Settings& s, ScorerKind kind, bool require) {
  Scorer scorer;
  checked([&] {
    scorer.kind = kind;
    scorer.alpha = s.num("alpha");
    scorer.template_id = s.str("template");
    return 0;
  });
  if (s.has("classifier")) {
    scorer.classifier = std::make_shared<ClassifierModel>(load_classifier(read_file(s.str("classifier"))));
  }
  ChatEndpoint ep = chat_endpoint_from_env();
  if (s.has("llm_endpoint")) ep.url = s.str("llm_endpoint");
  ep.model = s.str("llm_model");
  ep.max_in_flight = s.size("max_in_flight");
  if (!ep.url.empty()) scorer.judge = std::make_shared<ChatClient>(ep, nullptr);
  if (require) {
    checked([&] {
      scorer.validate();
      if (kind == ScorerKind::cot || kind == ScorerKind::combined) resolve_template(scorer.template_id);
      return 0;
    });
  }
  return scorer;
}

EvalOptions eval_options_from(const Settings& s) {
  EvalOptions o;
  o.coverage_threshold = s.num("coverage_threshold");
  if (!(o.coverage_threshold >= 0.0 && o.coverage_threshold <= 1.0))
    throw UsageError("coverage_threshold must lie in [0, 1]");
  if (s.echo().count("external")) {
    auto split = [](const std::string& item) {
      auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
        throw UsageError("external scorer must look like name=target: '" + item + "'");
      return std::pair{item.substr(0, eq), item.substr(eq + 1)};
    };
    for (const auto& item : s.list("external", ';')) {
      auto [name, cmd] = split(item);
      o.external.push_back(make_command_scorer(name, cmd));
    }
    for (const auto& item : s.list("external_endpoint", ';')) {
      auto [name, url] = split(item);
      o.external.push_back(make_endpoint_scorer(name, url));
    }
  }
  return o;
}

TableFormat table_format(const Settings& s) { return s.flag("csv") ? TableFormat::csv : TableFormat::text; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_train_denoiser(const Settings& s, std::ostream& out) {
  const std::string out_path = s.path("out");
  DenoiserTrainConfig config = checked([&] {
    DenoiserTrainConfig c;
    c.seed = s.u64("seed");
    c.model_kind = parse_model_kind(s.str("model_kind"));
    c.canvas_length = s.size("canvas_length");
    c.epochs = s.size("epochs");
    c.mask_ratio = s.num("mask_ratio");
    c.alpha = s.num("smoothing");
    c.copy_bias = s.num("copy_bias");
    c.buckets = s.size("buckets");
    c.gradient_refine = s.flag("gradient_refine");
    c.gradient_step = s.num("gradient_step");
    if (c.model_kind == ModelKind::remote) throw InvalidArgument("remote models are not trained locally");
    return c;
  });
  const auto instances = load(s, "data");
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(instances), 1));
  const auto pairs = make_training_pairs(instances, *vocab);
  auto [model, report] = train_denoiser(pairs, vocab, config);
  write_file(out_path, save_model(model));
  json j = to_json(report);
  j["run"] = echo_json(s);
  j["vocab_size"] = vocab->size();
  j["vocab_hash"] = hex64(vocab->hash());
  emit(s, "report", out, j.dump(2) + "\n");
  return 0;
}

int cmd_train_classifier(const Settings& s, std::ostream& out, std::ostream& err) {
  const std::string out_path = s.path("out");
  ClassifierConfig config = checked([&] {
    ClassifierConfig c;
    c.seed = s.u64("seed");
    c.epochs = s.size("classifier_epochs");
    c.lr = s.num("classifier_lr");
    c.dim = s.size("classifier_dim");
    if (c.dim <= kDenseFeatures) throw InvalidArgument("classifier_dim is too small");
    return c;
  });
  const std::size_t k = s.size("k_per_type");
  const double holdout = s.num("holdout");
  if (!(holdout >= 0.0 && holdout < 1.0)) throw UsageError("holdout must lie in [0, 1)");

  auto instances = load(s, "data");
  std::erase_if(instances, [](const ArgumentInstance& i) { return !i.reference_summary; });
  if (instances.empty()) throw Error("no instance carries a reference summary");
  auto split = split_by_topic_hash(instances, holdout, config.seed);
  if (split.train.empty()) {
    split.train = std::move(split.test);
    split.test.clear();
  }

  Rng rng = Rng::stream(config.seed, "train");
  std::vector<std::string> notes;
  auto perturb = [&](const std::vector<ArgumentInstance>& pool) {
    std::vector<LabeledSpan> spans;
    for (const auto& inst : pool) {
      auto set = generate_perturbations(inst, pool, rng, k);
      spans.insert(spans.end(), set.spans.begin(), set.spans.end());
      for (auto& n : set.notes) notes.push_back(inst.id + ": " + n);
    }
    return spans;
  };
  const auto train = perturb(split.train);
  const auto test = perturb(split.test);
  auto [model, report] = train_classifier(train, config);
  write_file(out_path, save_classifier(model));

  std::map<std::string, std::size_t> by_type;
  for (const auto& sp : train) ++by_type[std::string(to_string(sp.perturbation))];
  json j = {{"train_spans", train.size()},
            {"heldout_spans", test.size()},
            {"by_type", by_type},
            {"initial_loss", report.initial_loss},
            {"final_loss", report.final_loss},
            {"train_accuracy", report.train_accuracy},
            {"heldout_accuracy", test.empty() ? json(nullptr) : json(accuracy(model, test))},
            {"notes", notes},
            {"run", echo_json(s)}};
  for (const auto& n : notes) err << "note: " << n << '\n';
  emit(s, "report", out, j.dump(2) + "\n");
  return 0;
}

int cmd_generate(const Settings& s, std::ostream& out) {
  const std::size_t iterations = s.size("refine");
  const auto schedule = schedule_from(s);
  const auto config = refine_from(s, iterations);
  const auto kind = checked([&] { return parse_scorer_kind(s.str("scorer")); });
  const Scorer scorer = iterations > 0 ? scorer_from(s, kind, true) : Scorer{};
  const EvalOptions eval = eval_options_from(s);
  const std::uint64_t seed = s.u64("seed");
  const std::string model_path = s.path("model");
  const std::string input_path = s.path("input");

  const DenoiserModel model = load_model(read_file(model_path));
  const auto instances = load(s, "input");

  std::ostringstream results;
  std::ostringstream trace_out;
  for (const auto& inst : instances) {
    Rng fill = instance_stream(seed, inst.id, "fill");
    const SummaryState initial = generate(inst, model, schedule, model.canvas_length, fill);
    Rng plan = instance_stream(seed, inst.id, "plan");
    const auto trace = refine(initial, inst, model, scorer, config, plan);
    const std::string summary = summary_text(trace.final_state());
    json line = {{"id", inst.id},
                 {"summary", summary},
                 {"iterations_run", trace.records.size()},
                 {"terminated_by", to_string(trace.terminated_by)}};
    if (inst.reference_summary) {
      json metrics = to_json(score_summary(summary, inst, eval));
      metrics.erase("id");
      metrics.erase("summary");
      line["metrics"] = metrics;
    }
    line["run"] = echo_json(s);
    results << line.dump() << '\n';
    write_trace(trace_out, trace, inst.id);
  }
  if (s.has("trace")) write_file(s.str("trace"), trace_out.str());
  emit(s, "out", out, results.str());
  return 0;
}

int cmd_score(const Settings& s, std::ostream& out) {
  const auto kind = checked([&] { return parse_scorer_kind(s.str("scorer")); });
  const Scorer scorer = scorer_from(s, kind, true);
  const double tau = s.num("tau");
  const auto instances = load(s, "input");

  std::ostringstream results;
  for (const auto& inst : instances) {
    std::string text;
    if (s.has("summary")) {
      text = s.str("summary");
    } else if (inst.reference_summary) {
      text = *inst.reference_summary;
    } else {
      throw Error("instance '" + inst.id + "' has no summary to score; pass --summary");
    }
    const TokenSeq content = tokenize(text);
    const std::size_t length = std::max(s.size("canvas_length"), content.size() + 1);
    const auto state = SummaryState::from_tokens(to_canvas(content, length));
    const auto profile = scorer.score(state, inst);
    json spans = json::array();
    for (const auto& sp : profile.spans) {
      const bool tail = sp.begin >= state.content_length();
      json j = {{"begin", sp.begin}, {"end", sp.end}, {"score", sp.score}, {"source", to_string(sp.source)}};
      if (tail) {
        j["tail"] = true;
      } else {
        j["text"] = detokenize(std::span<const std::string>(state.tokens.surface.data() + sp.begin,
                                                            sp.end - sp.begin));
      }
      spans.push_back(j);
    }
    json line = {{"id", inst.id},
                 {"summary", summary_text(state)},
                 {"scorer", to_string(kind)},
                 {"min", profile.scores.minCoeff()},
                 {"mean", profile.scores.mean()},
                 {"sufficient", has_converged(profile, tau)},
                 {"spans", spans},
                 {"run", echo_json(s)}};
    results << line.dump() << '\n';
  }
  emit(s, "out", out, results.str());
  return 0;
}

int cmd_evaluate(const Settings& s, std::ostream& out) {
  const EvalOptions options = eval_options_from(s);
  const auto format = table_format(s);
  const std::string predictions_path = s.path("predictions");
  const auto instances = load(s, "data");

  std::map<std::string, std::string> predicted;
  std::istringstream lines(read_file(predictions_path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("summary"))
      throw ParseError("predictions line " + std::to_string(number) + ": expected {\"id\", \"summary\"}");
    predicted[j["id"].get<std::string>()] = j["summary"].get<std::string>();
  }
  std::vector<ArgumentInstance> chosen;
  std::vector<std::string> summaries;
  for (const auto& inst : instances) {
    auto it = predicted.find(inst.id);
    if (it == predicted.end()) continue;
    chosen.push_back(inst);
    summaries.push_back(it->second);
    predicted.erase(it);
  }
  if (!predicted.empty()) throw Error("prediction for unknown instance '" + predicted.begin()->first + "'");

  EvalReport report = evaluate(summaries, chosen, options);
  for (const auto& [k, v] : s.echo()) report.config_echo[k] = v;
  const std::string as_json = to_json(report).dump(2) + "\n";
  if (s.has("out")) write_file(s.str("out"), as_json);
  out << (s.flag("json") ? as_json : format_report(report, format));
  return 0;
}

int cmd_ablate(const Settings& s, std::ostream& out, std::ostream& err) {
  AblationSpec spec;
  spec.schedule = schedule_from(s);
  std::vector<std::size_t> counts;
  for (const auto& item : s.list("iterations", ',')) counts.push_back(Settings::parse_u64("iterations", item));
  spec.iteration_counts = counts;
  spec.refine = refine_from(s, counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end()));
  const auto variant_names = s.has("scorers") ? s.list("scorers", ',') : std::vector<std::string>{s.str("scorer")};
  for (const auto& v : variant_names) spec.variants.push_back(checked([&] { return parse_scorer_kind(v); }));
  spec.seed = s.u64("seed");
  spec.components = scorer_from(s, ScorerKind::heuristic, false);
  spec.eval = eval_options_from(s);
  const auto format = table_format(s);
  const std::string model_path = s.path("model");

  const auto instances = load(s, "data");
  const DenoiserModel model = load_model(read_file(model_path));
  spec.canvas_length = model.canvas_length;
  const auto cells = run_ablation(instances, model, spec);
  for (const auto& c : cells)
    if (!c.report) err << "cell " << to_string(c.variant) << "/" << c.iterations << " failed: " << c.error << '\n';

  const std::string as_json = json{{"cells", to_json(cells)}, {"run", echo_json(s)}}.dump(2) + "\n";
  if (s.has("out")) write_file(s.str("out"), as_json);
  out << (s.flag("json") ? as_json : format_ablation(cells, format));
  return 0;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string v) {
    auto b = v.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    auto e = v.find_last_not_of(" \t\r");
    return v.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(number) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key.empty()) throw ParseError("config line " + std::to_string(number) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Summarize argument sets with a masked diffusion denoiser and sufficiency-guided remasking",
               "remask"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    Command command;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config;
  };
  const std::pair<const char*, Command> names[] = {
      {"train-denoiser", kTrainDenoiser}, {"train-classifier", kTrainClassifier},
      {"generate", kGenerate},            {"score", kScore},
      {"evaluate", kEvaluate},            {"ablate", kAblate}};
  const char* descriptions[] = {"fit a denoiser on instances with reference summaries",
                                "fit the sufficiency classifier on perturbation-labeled spans",
                                "generate (and optionally refine) summaries",
                                "report sufficiency scores for a summary",
                                "score predictions against references",
                                "run the scorer/iteration ablation grid"};
  std::vector<std::unique_ptr<Sub>> subs;
  for (std::size_t i = 0; i < std::size(names); ++i) {
    auto sub = std::make_unique<Sub>();
    sub->command = names[i].second;
    sub->app = app.add_subcommand(names[i].first, descriptions[i]);
    sub->app->add_option("--config", sub->config, "key = value configuration file");
    for (const auto& k : kKeys) {
      if (!(k.commands & sub->command)) continue;
      const std::string flag = "--" + Settings::dashed(k.name);
      auto& slot = sub->values[k.name];
      sub->options[k.name] = k.flag ? sub->app->add_flag(flag, k.help) : sub->app->add_option(flag, slot, k.help);
    }
    subs.push_back(std::move(sub));
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  Sub* active = nullptr;
  for (auto& sub : subs)
    if (sub->app->parsed()) active = sub.get();
  if (!active) {
    err << app.help();
    return 1;
  }
  if (auto* help = active->app->get_help_ptr(); help && help->count()) {
    out << active->app->help();
    return 0;
  }

  std::map<std::string, std::string> values;
  try {
    for (const auto& k : kKeys)
      if (k.commands & active->command) values[k.name] = k.fallback;
    if (!active->config.empty()) {
      for (const auto& [key, value] : parse_config_text(read_file(active->config))) {
        const KeySpec* spec = find_key(key);
        if (!spec) throw UsageError("unknown config key '" + key + "'");
        if (spec->commands & active->command) values[key] = value;
      }
    }
    for (const auto& [key, opt] : active->options) {
      if (opt->count() == 0) continue;
      values[key] = find_key(key)->flag ? "true" : active->values[key];
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  const Settings settings(std::move(values));
  try {
    switch (active->command) {
      case kTrainDenoiser: return cmd_train_denoiser(settings, out);
      case kTrainClassifier: return cmd_train_classifier(settings, out, err);
      case kGenerate: return cmd_generate(settings, out);
      case kScore: return cmd_score(settings, out);
      case kEvaluate: return cmd_evaluate(settings, out);
      case kAblate: return cmd_ablate(settings, out, err);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nsee 'remask " << active->app->get_name() << " --help'\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace remask
