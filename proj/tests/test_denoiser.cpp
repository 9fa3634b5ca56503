#include <doctest.h>

#include <cmath>

#include "remask/denoiser.hpp"
#include "remask/error.hpp"
#include "remask/masking.hpp"
#include "remask/text.hpp"
#include "synthetic.hpp"

using namespace remask;

namespace {

ArgumentInstance bare(const std::string& id) {
  ArgumentInstance inst;
  inst.id = id;
  inst.topic = "t";
  inst.claims.push_back({"zzz", {}});
  return inst;
}

std::shared_ptr<const Vocabulary> vocab_of(std::vector<std::string> texts) {
  return std::make_shared<const Vocabulary>(build_vocabulary(texts, 1));
}

DenoiserModel untrained(std::shared_ptr<const Vocabulary> vocab, std::size_t length) {
  DenoiserModel m;
  m.vocab = std::move(vocab);
  m.canvas_length = length;
  m.params = CategoricalParams{};
  return m;
}

struct Trained {
  std::vector<ArgumentInstance> corpus;
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<TrainingPair> pairs;
  DenoiserModel model;
  TrainingReport report;
};

Trained train(ModelKind kind, std::size_t instances = 10, std::size_t epochs = 5, std::uint64_t seed = 1,
              double copy_bias = 2.0) {
  Trained t;
  t.corpus = testing::synthetic_corpus(instances, seed);
  t.vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(t.corpus), 1));
  t.pairs = make_training_pairs(t.corpus, *t.vocab);
  DenoiserTrainConfig config;
  config.model_kind = kind;
  config.epochs = epochs;
  config.seed = seed;
  config.canvas_length = 40;
  config.copy_bias = copy_bias;
  auto [model, report] = train_denoiser(t.pairs, t.vocab, config);
  t.model = std::move(model);
  t.report = std::move(report);
  return t;
}

}  // namespace

TEST_CASE("canvas layout and readout") {
  auto content = tokenize("a b c");
  auto canvas = to_canvas(content, 6);
  CHECK(canvas.ids == std::vector<TokenId>{token::unk, token::unk, token::unk, token::eos, token::pad, token::pad});
  CHECK(to_canvas(content, 3).ids.back() == token::eos);
  CHECK(to_canvas(content, 3).size() == 3);

  auto state = SummaryState::from_tokens(canvas);
  CHECK(state.content_length() == 3);
  CHECK(summary_text(state) == "a b c");
  state.fill(4, 5, "x", 0.5);
  apply_readout(state);
  CHECK(state.tokens.ids[4] == token::pad);

  auto masked = SummaryState::fully_masked(4);
  CHECK(masked.masked_count() == 4);
  CHECK(masked.confidence.isZero());
  CHECK(masked.first_eos() == std::nullopt);
  CHECK(SummaryState::from_tokens(canvas).confidence.isOnes());
}

TEST_CASE("state hash tracks tokens and mask flags") {
  auto a = SummaryState::from_tokens(to_canvas(tokenize("a b"), 4));
  auto b = a;
  CHECK(a.hash() == b.hash());
  b.mask(1);
  CHECK(a.hash() != b.hash());
}

TEST_CASE("untrained categorical model is uniform over the support") {
  auto vocab = vocab_of({"alpha beta gamma delta"});
  auto model = untrained(vocab, 6);
  auto state = SummaryState::fully_masked(6);
  auto p = predict_distribution(model, state, bare("x"), 2);
  const double V = static_cast<double>(support_size(*vocab));
  CHECK(V == 5.0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p(token::mask) == 0.0);
  CHECK(p(token::pad) == 0.0);
  CHECK(p(token::unk) == 0.0);
  CHECK(p(token::eos) == doctest::Approx(1.0 / V));
  for (TokenId id = token::first_surface; id < static_cast<TokenId>(vocab->size()); ++id)
    CHECK(p(id) == doctest::Approx(1.0 / V));
}

TEST_CASE("PAD is forced after a visible EOS") {
  auto vocab = vocab_of({"alpha beta"});
  auto model = untrained(vocab, 6);
  auto state = SummaryState::from_tokens(to_canvas(tokenize("alpha", *vocab), 6));
  state.mask(3);
  state.mask(0);
  auto p = predict_distribution(model, state, bare("x"), 3);
  CHECK(p(token::pad) == 1.0);
  CHECK(p.sum() == 1.0);
  auto q = predict_distribution(model, state, bare("x"), 0);
  CHECK(q(token::pad) == 0.0);
}

TEST_CASE("predict_distribution preconditions") {
  auto vocab = vocab_of({"alpha"});
  auto model = untrained(vocab, 4);
  auto state = SummaryState::from_tokens(to_canvas(tokenize("alpha", *vocab), 4));
  CHECK_THROWS_AS(predict_distribution(model, state, bare("x"), 0), InvalidArgument);
  CHECK_THROWS_AS(predict_distribution(model, state, bare("x"), 4), InvalidArgument);
  CHECK_THROWS_WITH(fill_masks(model, state, bare("x"), *std::make_unique<Rng>(1), FillPolicy::argmax),
                    doctest::Contains("nothing to fill"));
}

TEST_CASE("masked NLL against hand-computed smoothed counts") {
  auto vocab = vocab_of({"a b c"});
  REQUIRE(*vocab->find("a") == 4);
  REQUIRE(*vocab->find("b") == 5);
  REQUIRE(*vocab->find("c") == 6);
  auto model = untrained(vocab, 5);
  auto& params = std::get<CategoricalParams>(model.params);
  params.alpha = 0.1;
  auto& row = params.rows[context_key(ContextLevel::neighbors, 4, 6, 0)];
  row.counts = {{5, 3.0}, {6, 1.0}};
  row.total = 4.0;

  const auto reference = to_canvas(tokenize("a b c a", *vocab), 5);
  const std::size_t one[] = {1};
  CHECK(masked_nll(model, reference, one, bare("x")) ==
        doctest::Approx(-std::log(3.1 / 4.4)).epsilon(1e-12));
  // Position 3 sees (c, EOS), which has no row: uniform over {EOS, a, b, c}.
  const std::size_t two[] = {1, 3};
  CHECK(std::abs(masked_nll(model, reference, two, bare("x")) - (-std::log(3.1 / 4.4) + std::log(4.0))) < 1e-9);
  CHECK_THROWS_AS(masked_nll(model, reference, std::span<const std::size_t>{}, bare("x")), InvalidArgument);
}

TEST_CASE("uniform model NLL is |M| ln V") {
  auto corpus = testing::synthetic_corpus(3, 4);
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  auto model = untrained(vocab, 64);
  auto pairs = make_training_pairs(corpus, *vocab);
  const auto reference = to_canvas(pairs[0].reference, pairs[0].reference.size() + 1);
  const std::size_t mask[] = {0, 2, 5, reference.size() - 1};
  const double expected = 4.0 * std::log(static_cast<double>(support_size(*vocab)));
  CHECK(std::abs(masked_nll(model, reference, mask, corpus[0]) - expected) < 1e-9);
}

TEST_CASE("copy bias boosts input tokens and keeps a distribution") {
  auto inst = testing::vaccine_instance();
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(std::vector{inst}), 1));
  auto model = untrained(vocab, 8);
  std::get<CategoricalParams>(model.params).copy_bias = 2.0;
  auto p = predict_distribution(model, SummaryState::fully_masked(8), inst, 0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  const auto in_input = *vocab->find("rotashield");
  const auto not_in_input = *vocab->find("historical");
  CHECK(p(in_input) == doctest::Approx(2.0 * p(not_in_input)));
}

TEST_CASE("oracle model reconstructs references with confidence 1") {
  auto t = train(ModelKind::oracle);
  CHECK(t.report.final_loss == 0.0);
  Rng rng(5);
  for (std::size_t i = 0; i < t.corpus.size(); ++i) {
    auto filled = fill_masks(t.model, SummaryState::fully_masked(40), t.corpus[i], rng, FillPolicy::sample);
    CHECK(filled.tokens == to_canvas(t.pairs[i].reference, 40));
    CHECK(filled.confidence.isOnes());
    const std::size_t mask[] = {0, 3, 7};
    CHECK(masked_nll(t.model, to_canvas(t.pairs[i].reference, 40), mask, t.corpus[i]) == 0.0);
  }
  CHECK_THROWS_AS(predict_distribution(t.model, SummaryState::fully_masked(40), bare("unknown"), 0),
                  InvalidArgument);
}

TEST_CASE("oracle closure under fuzzed corruption") {
  auto t = train(ModelKind::oracle, 4);
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t i = rng.below(t.corpus.size());
    const auto reference = to_canvas(t.pairs[i].reference, 40);
    auto [state, plan] = corrupt(reference, rng.uniform(), rng);
    if (plan.positions.empty()) continue;
    auto filled = fill_masks(t.model, state, t.corpus[i], rng, FillPolicy::argmax);
    CHECK(filled.tokens == reference);
  }
}

TEST_CASE("distributions are proper on fuzzed states for trained models") {
  auto t = train(ModelKind::categorical, 6, 3);
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t i = rng.below(t.corpus.size());
    auto [state, plan] = corrupt(to_canvas(t.pairs[i].reference, 40), 0.5, rng);
    for (const auto& [pos, p] : predict_masked(t.model, state, t.corpus[i])) {
      CHECK((p.array() >= 0.0).all());
      CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("trained categorical model predicts the dominant continuation") {
  std::vector<ArgumentInstance> corpus;
  for (int i = 0; i < 6; ++i) {
    ArgumentInstance inst = bare("cat-" + std::to_string(i));
    inst.reference_summary = i % 3 == 0 ? "the cat sat on the mat ." : "the cat sat on the rug .";
    corpus.push_back(inst);
  }
  corpus.back().reference_summary = "the cat ran on the mat .";
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  DenoiserTrainConfig config;
  config.epochs = 30;
  config.canvas_length = 10;
  config.copy_bias = 1.0;
  auto [model, report] = train_denoiser(make_training_pairs(corpus, *vocab), vocab, config);
  auto state = SummaryState::from_tokens(to_canvas(tokenize("the cat sat on the mat .", *vocab), 10));
  state.mask(2);
  auto p = predict_distribution(model, state, corpus[0], 2);
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  CHECK(best == *vocab->find("sat"));
}

TEST_CASE("training lowers masked NLL below the uniform baseline") {
  auto t = train(ModelKind::categorical, 10, 5, 1, 1.0);
  REQUIRE(t.report.loss_curve.size() == 5);
  const double uniform = std::log(static_cast<double>(support_size(*t.vocab)));
  CHECK(t.report.loss_curve.front().second == doctest::Approx(uniform).epsilon(1e-9));
  CHECK(t.report.final_loss < uniform);
  CHECK(t.report.loss_curve.back().second < t.report.loss_curve.front().second);
}

TEST_CASE("repeated single sentence beats ln|V|") {
  ArgumentInstance inst = bare("abab");
  inst.reference_summary = "a b a b";
  std::vector corpus{inst};
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  DenoiserTrainConfig config;
  config.canvas_length = 5;
  config.epochs = 10;
  auto [model, report] = train_denoiser(make_training_pairs(corpus, *vocab), vocab, config);
  CHECK(report.final_loss < std::log(static_cast<double>(support_size(*vocab))));
}

TEST_CASE("count-normalized rows beat perturbed rows without smoothing") {
  auto vocab = vocab_of({"a b c"});
  auto model = untrained(vocab, 5);
  auto& params = std::get<CategoricalParams>(model.params);
  params.alpha = 0.0;
  params.buckets = 1;
  const auto reference = to_canvas(tokenize("a b a c", *vocab), 5);
  const std::size_t mask[] = {0, 1, 2, 3};
  auto& row = params.rows[context_key(ContextLevel::bucket, 0, 0, 0)];
  // Targets at the masked positions: a, b, a, c.
  row.counts = {{4, 2.0}, {5, 1.0}, {6, 1.0}};
  row.total = 4.0;
  const double best = masked_nll(model, reference, mask, bare("x"));
  for (TokenId from : {4, 5, 6}) {
    for (TokenId to : {4, 5, 6}) {
      if (from == to) continue;
      auto perturbed = model;
      auto& prow = std::get<CategoricalParams>(perturbed.params).rows.begin()->second;
      prow.counts[from] -= 0.05;
      prow.counts[to] += 0.05;
      CHECK(masked_nll(perturbed, reference, mask, bare("x")) > best);
    }
  }
}

TEST_CASE("gradient refinement keeps proper distributions and does not raise the loss") {
  auto corpus = testing::synthetic_corpus(4, 8);
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus_texts(corpus), 1));
  DenoiserTrainConfig config;
  config.canvas_length = 40;
  config.epochs = 3;
  config.gradient_refine = true;
  auto [model, report] = train_denoiser(make_training_pairs(corpus, *vocab), vocab, config);
  REQUIRE(report.loss_curve.size() == 6);
  CHECK(report.loss_curve[5].second <= report.loss_curve[3].second + 1e-9);
  auto p = predict_distribution(model, SummaryState::fully_masked(40), corpus[0], 0);
  CHECK(std::abs(p.sum() - 1.0) < 1e-9);
}

TEST_CASE("fill policies and seeds") {
  auto t = train(ModelKind::categorical, 6, 3);
  const auto state = SummaryState::fully_masked(40);
  Rng a(1), b(2);
  CHECK(fill_masks(t.model, state, t.corpus[0], a, FillPolicy::argmax) ==
        fill_masks(t.model, state, t.corpus[0], b, FillPolicy::argmax));
  Rng c(7), d(7);
  auto x = fill_masks(t.model, state, t.corpus[0], c, FillPolicy::sample);
  auto y = fill_masks(t.model, state, t.corpus[0], d, FillPolicy::sample);
  CHECK(x == y);
  CHECK(x.masked_count() == 0);
  for (std::size_t i = 0; i < x.length(); ++i) {
    auto p = predict_distribution(t.model, state, t.corpus[0], i);
    CHECK(x.confidence[static_cast<Eigen::Index>(i)] == doctest::Approx(p(x.tokens.ids[i])));
  }
}

TEST_CASE("training is deterministic and errors are reported") {
  auto a = train(ModelKind::categorical, 5, 2, 3);
  auto b = train(ModelKind::categorical, 5, 2, 3);
  CHECK(save_model(a.model) == save_model(b.model));

  auto corpus = testing::synthetic_corpus(2, 1);
  corpus[1].reference_summary.reset();
  auto vocab = Vocabulary();
  CHECK_THROWS_WITH(make_training_pairs(corpus, vocab), doctest::Contains(corpus[1].id.c_str()));
  CHECK_THROWS_AS(train_denoiser({}, std::make_shared<const Vocabulary>(), {}), InvalidArgument);
  DenoiserTrainConfig bad;
  bad.mask_ratio = 0.0;
  CHECK_THROWS_AS(train_denoiser(a.pairs, a.vocab, bad), InvalidArgument);
}

TEST_CASE("model archives round-trip and verify the vocabulary hash") {
  for (auto kind : {ModelKind::oracle, ModelKind::categorical}) {
    auto t = train(kind, 4, 2);
    const auto text = save_model(t.model);
    auto loaded = load_model(text, t.vocab->hash());
    CHECK(save_model(loaded) == text);
    CHECK(loaded.kind() == kind);
    CHECK_THROWS_AS(load_model(text, t.vocab->hash() ^ 1), ParseError);
  }
  auto t = train(ModelKind::categorical, 4, 2);
  auto tampered = nlohmann::json::parse(save_model(t.model));
  tampered["vocabulary"] = tampered["vocabulary"].get<std::string>() + "extra\t1\n";
  CHECK_THROWS_AS(load_model(tampered.dump()), ParseError);

  auto refined = t;
  DenoiserTrainConfig config;
  config.canvas_length = 40;
  config.epochs = 2;
  config.gradient_refine = true;
  auto [model, report] = train_denoiser(t.pairs, t.vocab, config);
  const auto text = save_model(model);
  CHECK(save_model(load_model(text)) == text);
}

namespace {

class CannedTransport : public HttpTransport {
 public:
  explicit CannedTransport(std::string body) : body_(std::move(body)) {}
  HttpResponse post(const std::string&, const std::string& body, const HttpHeaders&) override {
    last_request = body;
    return {200, body_};
  }
  std::string last_request;

 private:
  std::string body_;
};

}  // namespace

TEST_CASE("remote denoiser protocol") {
  auto vocab = vocab_of({"alpha beta"});
  DenoiserModel model;
  model.vocab = vocab;
  model.canvas_length = 3;
  auto transport = std::make_shared<CannedTransport>(
      R"({"positions":[{"index":1,"candidates":[{"token":"beta","p":0.6},{"token":"alpha","p":0.2},{"token":"nope","p":0.2}]}]})");
  model.params = RemoteParams{"http://unused", 8, {}, transport};
  auto state = SummaryState::from_tokens(to_canvas(tokenize("alpha beta", *vocab), 3));
  state.mask(1);
  ArgumentInstance input = bare("r");
  auto p = predict_distribution(model, state, input, 1);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p(*vocab->find("beta")) == doctest::Approx(0.75));
  auto request = nlohmann::json::parse(transport->last_request);
  CHECK(request["tokens"][0] == "alpha");
  CHECK(request["tokens"][1].is_null());
  CHECK(request["top_k"] == 8);
  CHECK(request["context"]["claims"][0]["claim"] == "zzz");

  state.mask(0);
  CHECK_THROWS_AS(predict_masked(model, state, input), RemoteError);
}
