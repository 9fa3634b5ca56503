// Acceptance suite: one PASS/FAIL line per criterion, with runtime.
//
//   remask_acceptance [--allow-fail <name>]...
//
// Exits 0 when every criterion passes or is explicitly allowed to fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "lcs_oracle.hpp"
#include "mock_llm.hpp"
#include "remask/cli.hpp"
#include "remask/engine.hpp"
#include "remask/eval.hpp"
#include "remask/masking.hpp"
#include "remask/sufficiency.hpp"
#include "remask/text.hpp"
#include "synthetic.hpp"

using namespace remask;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

SufficiencyProfile profile_of(std::vector<double> s) {
  SufficiencyProfile p;
  p.scores = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  p.spans.push_back({0, s.size(), 0.0, ScoreSource::heuristic});
  return p;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << std::fixed << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = run_command(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

// ---------------------------------------------------------------------------

Outcome mask_plan_law() {
  const auto p = profile_of({0.0, 0.5, 1.0});
  MaskConfig c;
  c.lambda = 0.0;
  c.r = 1.0 / 3.0;
  const std::vector<std::size_t> candidates = {0, 1, 2};
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    exact += sufficiency_mask_plan(p, candidates, c, rng).positions == std::vector<std::size_t>{0} ? 1 : 0;
  }
  return {exact == 100, std::to_string(exact) + "/100 seeds gave {0}"};
}

Outcome exploration_law() {
  const auto p = profile_of({0.0, 1.0});
  const std::vector<std::size_t> candidates = {0, 1};
  auto frequency = [&](double lambda) {
    MaskConfig c;
    c.lambda = lambda;
    c.r = 0.5;
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      Rng rng(seed);
      const auto plan = sufficiency_mask_plan(p, candidates, c, rng);
      hits += std::count(plan.positions.begin(), plan.positions.end(), std::size_t{1}) > 0 ? 1 : 0;
    }
    return hits / 10000.0;
  };
  const double with_noise = frequency(0.1);
  const double without = frequency(0.0);
  std::string detail = "freq(pos 1) at lambda 0.1 = " + fmt(with_noise) + ", at lambda 0 = " + fmt(without);
  if (with_noise == 0.0) detail += " (noisy top-k: weight 0.1u never exceeds 1 + 0.1u)";
  return {with_noise > 0.0 && without == 0.0, detail};
}

Outcome corruption_ratio() {
  TokenSeq ref;
  for (int i = 0; i < 10; ++i) {
    ref.ids.push_back(4 + i);
    ref.surface.push_back("w" + std::to_string(i));
  }
  Rng rng(2024);
  std::vector<int> hits(10, 0);
  bool exact = true;
  for (int t = 0; t < 10000; ++t) {
    auto [state, plan] = corrupt(ref, 0.3, rng);
    exact = exact && state.masked_count() == 3;
    for (auto p : plan.positions) ++hits[p];
  }
  double worst = 0.0;
  for (int h : hits) worst = std::max(worst, std::abs(h / 10000.0 - 0.3));
  return {exact && worst <= 0.02,
          std::string(exact ? "3 masks every trial" : "mask count varied") + ", max |freq - 0.3| = " + fmt(worst)};
}

Outcome denoising_objective() {
  auto corpus = testing::synthetic_corpus(10, 31);  // two summary sentences each
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  const auto pairs = make_training_pairs(corpus, *vocab);
  const std::size_t length = 40;
  DenoiserTrainConfig config;
  config.canvas_length = length;
  config.seed = 31;
  config.model_kind = ModelKind::oracle;
  const auto oracle = train_denoiser(pairs, vocab, config).first;
  config.model_kind = ModelKind::categorical;
  const auto trained = train_denoiser(pairs, vocab, config).first;
  DenoiserModel uniform{vocab, length, CategoricalParams{}};
  const double ln_v = std::log(static_cast<double>(support_size(*vocab)));

  Rng rng(7);
  double oracle_nll = 0.0, uniform_err = 0.0, trained_nll = 0.0, uniform_nll = 0.0;
  for (const auto& pair : pairs) {
    const auto canvas = to_canvas(pair.reference, length);
    for (int t = 0; t < 5; ++t) {
      auto [state, plan] = corrupt(canvas, 0.3, rng);
      // Uniform over the support holds wherever PAD is not forced.
      std::vector<std::size_t> open;
      const std::size_t eos = pair.reference.size();
      for (auto p : plan.positions)
        if (p <= eos) open.push_back(p);
      oracle_nll += masked_nll(oracle, canvas, plan.positions, pair.instance);
      const double u = masked_nll(uniform, canvas, open, pair.instance);
      uniform_err = std::max(uniform_err, std::abs(u - static_cast<double>(open.size()) * ln_v));
      uniform_nll += u;
      trained_nll += masked_nll(trained, canvas, open, pair.instance);
    }
  }
  const bool pass = oracle_nll == 0.0 && uniform_err <= 1e-9 && trained_nll < uniform_nll;
  return {pass, "oracle NLL " + fmt(oracle_nll, 6) + ", max |uniform - |M|ln V| " + fmt(uniform_err, 12) +
                    ", trained " + fmt(trained_nll, 2) + " < uniform " + fmt(uniform_nll, 2)};
}

Outcome oracle_closure() {
  auto corpus = testing::synthetic_corpus(20, 41);
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  const auto pairs = make_training_pairs(corpus, *vocab);
  DenoiserTrainConfig config;
  config.canvas_length = 40;
  config.model_kind = ModelKind::oracle;
  const auto oracle = train_denoiser(pairs, vocab, config).first;
  Rng rng(41);
  int exact = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto& pair = pairs[rng.below(pairs.size())];
    const auto canvas = to_canvas(pair.reference, 40);
    const double ratio = (1.0 + static_cast<double>(rng.below(40))) / 40.0;
    auto [state, plan] = corrupt(canvas, ratio, rng);
    const auto filled = fill_masks(oracle, state, pair.instance, rng, FillPolicy::argmax);
    exact += filled.tokens == canvas ? 1 : 0;
  }
  return {exact == 1000, std::to_string(exact) + "/1000 reconstructions exact"};
}

Outcome rouge_oracles() {
  const auto sweep = testing::sweep_rouge_l(8, 1e-12);
  const double r1 = rouge_n(normalize("the cat sat on mat"), normalize("the cat ate the mat"), 1);
  const bool pass = sweep.mismatches == 0 && std::abs(r1 - 0.6) <= 1e-9;
  std::string detail = std::to_string(sweep.pairs) + " pairs, " + std::to_string(sweep.mismatches) +
                       " mismatches; rouge_1 example = " + fmt(r1, 12);
  if (!sweep.first_mismatch.empty()) detail += "; first: " + sweep.first_mismatch;
  return {pass, detail};
}

Outcome classifier_accuracy() {
  auto corpus = testing::synthetic_corpus(60, 51);
  Rng rng(51);
  std::vector<LabeledSpan> data;
  for (const auto& inst : corpus) {
    auto set = generate_perturbations(inst, corpus, rng, 2);
    data.insert(data.end(), set.spans.begin(), set.spans.end());
  }
  for (std::size_t i = data.size() - 1; i > 0; --i) std::swap(data[i], data[rng.below(i + 1)]);
  const std::size_t cut = data.size() * 4 / 5;
  const std::vector<LabeledSpan> train(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<LabeledSpan> test(data.begin() + static_cast<std::ptrdiff_t>(cut), data.end());
  const auto model = train_classifier(train, {}).first;
  const double acc = accuracy(model, test);
  const double zero = classify_span(ClassifierModel::zero({}), test[0].span, test[0].claim, test[0].evidence);
  return {data.size() >= 200 && acc >= 0.9 && zero == 0.5,
          std::to_string(data.size()) + " spans, held-out accuracy " + fmt(acc) + ", zero model " + fmt(zero, 12)};
}

// The oracle denoiser isolates the remasking loop from fill quality: each
// instance has one reference sentence overwritten with off-topic words, and a
// remasked position is refilled from that instance's reference.
Outcome refinement_trend() {
  auto corpus = testing::synthetic_corpus(100, 61);
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  const std::size_t length = 64;
  DenoiserTrainConfig config;
  config.canvas_length = length;
  config.model_kind = ModelKind::oracle;
  const auto model = train_denoiser(make_training_pairs(corpus, *vocab), vocab, config).first;

  testing::Lexicon lex(6161);
  Rng place(61);
  double suff0 = 0, suff3 = 0, cov0 = 0, cov3 = 0, conc0 = 0, conc3 = 0;
  int strict = 0;
  for (const auto& inst : corpus) {
    auto words = normalize(*inst.reference_summary);
    const auto sentences = sentence_spans(words);
    const auto [b, e] = sentences[place.below(sentences.size())];
    for (std::size_t i = b; i < e; ++i)
      if (is_content_token(words[i])) words[i] = lex.fresh();
    const auto state = SummaryState::from_tokens(to_canvas(lookup(words, *vocab), length));

    Rng rng = instance_stream(61, inst.id, "plan");
    const auto trace = refine(state, inst, model, Scorer{}, RefineConfig{}, rng);
    const std::string before = summary_text(state);
    const std::string after = summary_text(trace.final_state());
    const double s0 = faithfulness_proxy(before, inst), s3 = faithfulness_proxy(after, inst);
    suff0 += s0;
    suff3 += s3;
    cov0 += coverage_proxy(before, inst);
    cov3 += coverage_proxy(after, inst);
    conc0 += conciseness_proxy(before, inst);
    conc3 += conciseness_proxy(after, inst);
    strict += s3 > s0 ? 1 : 0;
  }
  const double n = static_cast<double>(corpus.size());
  const bool pass = suff3 >= suff0 && cov3 >= cov0 && conc3 >= conc0 && strict >= 80;
  return {pass, "sufficiency " + fmt(suff0 / n) + " -> " + fmt(suff3 / n) + ", coverage " + fmt(cov0 / n) + " -> " +
                    fmt(cov3 / n) + ", conciseness " + fmt(conc0 / n) + " -> " + fmt(conc3 / n) + ", strict gains " +
                    std::to_string(strict) + "/100"};
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("remask-acceptance-" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

bool grid_shape(const std::string& csv, const std::string& label, std::string& why) {
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  const std::string header = label + ",R-L,faithfulness,coverage";
  if (lines.empty() || lines[0] != header) {
    why = "header '" + (lines.empty() ? std::string() : lines[0]) + "'";
    return false;
  }
  if (lines.size() != 5) {
    why = std::to_string(lines.size() - 1) + " rows";
    return false;
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (std::count(lines[i].begin(), lines[i].end(), ',') != 3) {
      why = "row '" + lines[i] + "'";
      return false;
    }
  }
  return true;
}

Outcome ablation_shape() {
  TempDir dir;
  save_dataset(dir / "data.jsonl", testing::synthetic_corpus(12, 71));
  std::string out, err;
  if (cli({"train-denoiser", "--data", dir / "data.jsonl", "--out", dir / "model.json", "--report",
           dir / "report.json"}, &out, &err) != 0)
    return {false, "train-denoiser failed: " + err};
  if (cli({"train-classifier", "--data", dir / "data.jsonl", "--out", dir / "cls.json"}, &out, &err) != 0)
    return {false, "train-classifier failed: " + err};

  std::string left, right, why;
  if (cli({"ablate", "--data", dir / "data.jsonl", "--model", dir / "model.json", "--iterations", "0,1,2,3",
           "--csv"}, &left, &err) != 0)
    return {false, "iteration ablation failed: " + err};
  if (!grid_shape(left, "iterations", why)) return {false, "iteration grid: " + why};

  testing::MockLlmServer server;
  if (cli({"ablate", "--data", dir / "data.jsonl", "--model", dir / "model.json", "--scorers",
           "none,cot,classifier,combined", "--iterations", "3", "--classifier", dir / "cls.json",
           "--llm-endpoint", server.url(), "--csv"}, &right, &err) != 0)
    return {false, "scorer ablation failed: " + err};
  if (!err.empty()) return {false, "scorer ablation cell failure: " + err};
  if (!grid_shape(right, "scorer", why)) return {false, "scorer grid: " + why};
  return {true, "iterations 0-3 and scorers none/cot/classifier/combined: 4x3 each"};
}

Outcome end_to_end_determinism() {
  TempDir dir;
  save_dataset(dir / "data.jsonl", testing::synthetic_corpus(10, 81));
  std::string out, err;
  struct Snapshot {
    std::string model, train_report, summaries, trace, eval;
  };
  auto pipeline = [&](Snapshot& s) {
    if (cli({"train-denoiser", "--data", dir / "data.jsonl", "--out", dir / "model.json", "--report",
             dir / "train.json", "--seed", "81"}, &out, &err) != 0)
      return false;
    if (cli({"generate", "--model", dir / "model.json", "--input", dir / "data.jsonl", "--refine", "3", "--seed",
             "81", "--trace", dir / "trace.jsonl", "--out", dir / "summaries.jsonl"}, &out, &err) != 0)
      return false;
    if (cli({"evaluate", "--data", dir / "data.jsonl", "--predictions", dir / "summaries.jsonl", "--out",
             dir / "eval.json"}, &out, &err) != 0)
      return false;
    s = {slurp(dir / "model.json"), slurp(dir / "train.json"), slurp(dir / "summaries.jsonl"),
         slurp(dir / "trace.jsonl"), slurp(dir / "eval.json")};
    return true;
  };
  Snapshot a, b;
  if (!pipeline(a) || !pipeline(b)) return {false, "pipeline failed: " + err};
  std::vector<std::string> differing;
  if (a.model != b.model) differing.push_back("model");
  if (a.train_report != b.train_report) differing.push_back("training report");
  if (a.summaries != b.summaries) differing.push_back("summaries");
  if (a.trace != b.trace) differing.push_back("trace");
  if (a.eval != b.eval) differing.push_back("evaluation report");
  if (!differing.empty()) {
    std::string list;
    for (const auto& d : differing) list += (list.empty() ? "" : ", ") + d;
    return {false, "differs: " + list};
  }
  return {true, "model, summaries, trace and reports byte-identical across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> allowed;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--allow-fail" && i + 1 < argc) {
      allowed.insert(argv[++i]);
    } else {
      std::cerr << "usage: remask_acceptance [--allow-fail <name>]...\n";
      return 1;
    }
  }

  const std::vector<Criterion> criteria = {
      {"mask-plan-law", 1, mask_plan_law},
      {"exploration-law", 5, exploration_law},
      {"corruption-ratio", 5, corruption_ratio},
      {"denoising-objective", 10, denoising_objective},
      {"oracle-closure", 5, oracle_closure},
      {"rouge-oracles", 30, rouge_oracles},
      {"classifier", 10, classifier_accuracy},
      {"refinement-trend", 60, refinement_trend},
      {"ablation-shape", 60, ablation_shape},
      {"end-to-end-determinism", 60, end_to_end_determinism},
  };

  int blocking = 0;
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    std::string note = o.detail + " [" + fmt(secs, 2) + "s of " + fmt(c.budget_seconds, 0) + "s]";
    if (!in_time) note += " over budget";
    if (!pass) {
      ++failed;
      if (allowed.count(c.name)) {
        note += " (allowed to fail)";
      } else {
        ++blocking;
      }
    }
    std::printf("%s %-24s %s\n", pass ? "PASS" : "FAIL", c.name.c_str(), note.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed, %d blocking\n", criteria.size(), failed, blocking);
  return blocking == 0 ? 0 : 1;
}
