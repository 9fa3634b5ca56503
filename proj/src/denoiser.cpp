#include "remask/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_set>

#include "remask/error.hpp"
#include "remask/masking.hpp"
#include "remask/text.hpp"

namespace remask {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SummaryState

SummaryState SummaryState::fully_masked(std::size_t length) {
  SummaryState s;
  s.tokens.ids.assign(length, token::mask);
  s.tokens.surface.assign(length, std::string(token::mask_surface));
  s.masked.assign(length, true);
  s.confidence = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(length));
  return s;
}

SummaryState SummaryState::from_tokens(TokenSeq tokens) {
  SummaryState s;
  const auto n = tokens.size();
  s.tokens = std::move(tokens);
  s.masked.assign(n, false);
  s.confidence = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  return s;
}

std::size_t SummaryState::masked_count() const {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
}

std::vector<std::size_t> SummaryState::masked_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i]) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> SummaryState::first_eos() const {
  for (std::size_t i = 0; i < length(); ++i) {
    if (!masked[i] && tokens.ids[i] == token::eos) return i;
  }
  return std::nullopt;
}

std::size_t SummaryState::content_length() const { return first_eos().value_or(length()); }

void SummaryState::mask(std::size_t position) {
  tokens.ids.at(position) = token::mask;
  tokens.surface[position] = std::string(token::mask_surface);
  masked[position] = true;
  confidence[static_cast<Eigen::Index>(position)] = 0.0;
}

void SummaryState::fill(std::size_t position, TokenId id, std::string surface, double conf) {
  tokens.ids.at(position) = id;
  tokens.surface[position] = std::move(surface);
  masked[position] = false;
  confidence[static_cast<Eigen::Index>(position)] = conf;
}

std::uint64_t SummaryState::hash() const {
  std::string bytes;
  bytes.reserve(length() * 5);
  for (std::size_t i = 0; i < length(); ++i) {
    const auto id = static_cast<std::uint32_t>(tokens.ids[i]);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((id >> (8 * b)) & 0xff));
    bytes.push_back(masked[i] ? '\1' : '\0');
    bytes += tokens.surface[i];
    bytes.push_back('\0');
  }
  return fnv1a64(bytes);
}

TokenSeq to_canvas(const TokenSeq& content, std::size_t length) {
  if (length == 0) throw InvalidArgument("canvas length must be >= 1");
  TokenSeq canvas;
  const std::size_t n = std::min(content.size(), length - 1);
  canvas.ids.assign(content.ids.begin(), content.ids.begin() + static_cast<std::ptrdiff_t>(n));
  canvas.surface.assign(content.surface.begin(),
                        content.surface.begin() + static_cast<std::ptrdiff_t>(n));
  canvas.ids.push_back(token::eos);
  canvas.surface.emplace_back(token::eos_surface);
  while (canvas.size() < length) {
    canvas.ids.push_back(token::pad);
    canvas.surface.emplace_back(token::pad_surface);
  }
  return canvas;
}

void apply_readout(SummaryState& state) {
  auto eos = state.first_eos();
  if (!eos) return;
  for (std::size_t i = *eos + 1; i < state.length(); ++i) {
    if (state.masked[i] || state.tokens.ids[i] != token::pad) {
      state.fill(i, token::pad, std::string(token::pad_surface), 1.0);
    }
  }
}

std::vector<std::string> summary_surfaces(const SummaryState& state) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < state.length(); ++i) {
    if (state.masked[i]) continue;
    TokenId id = state.tokens.ids[i];
    if (id == token::eos) break;
    if (id == token::pad || id == token::mask) continue;
    out.push_back(state.tokens.surface[i]);
  }
  return out;
}

std::string summary_text(const SummaryState& state) { return detokenize(summary_surfaces(state)); }

// ---------------------------------------------------------------------------

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::oracle: return "oracle";
    case ModelKind::categorical: return "categorical";
    case ModelKind::remote: return "remote";
  }
  return "categorical";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "oracle") return ModelKind::oracle;
  if (text == "categorical") return ModelKind::categorical;
  if (text == "remote") return ModelKind::remote;
  throw InvalidArgument("unknown model kind '" + std::string(text) + "'");
}

FillPolicy parse_fill_policy(std::string_view text) {
  if (text == "argmax") return FillPolicy::argmax;
  if (text == "sample") return FillPolicy::sample;
  throw InvalidArgument("unknown fill policy '" + std::string(text) + "'");
}

std::uint64_t context_key(ContextLevel level, TokenId left, TokenId right, std::size_t bucket) {
  const auto l = static_cast<std::uint64_t>(static_cast<std::int64_t>(left) + 1);
  const auto r = static_cast<std::uint64_t>(static_cast<std::int64_t>(right) + 1);
  std::uint64_t key = static_cast<std::uint64_t>(level) << 62;
  switch (level) {
    case ContextLevel::full:
      key |= (l << 40) | (r << 18) | bucket;
      break;
    case ContextLevel::neighbors:
      key |= (l << 40) | (r << 18);
      break;
    case ContextLevel::bucket:
      key |= bucket;
      break;
  }
  return key;
}

std::size_t support_size(const Vocabulary& vocab) { return vocab.size() - 3; }

namespace {

using KeyTriple = std::array<std::uint64_t, 3>;

bool in_support(TokenId id) { return id == token::eos || id >= token::first_surface; }

TokenId neighbor(const SummaryState& state, std::ptrdiff_t i) {
  if (i < 0 || i >= static_cast<std::ptrdiff_t>(state.length())) return kBoundary;
  auto u = static_cast<std::size_t>(i);
  return state.masked[u] ? token::mask : state.tokens.ids[u];
}

KeyTriple keys_at(const SummaryState& state, std::size_t position, std::size_t buckets) {
  const auto p = static_cast<std::ptrdiff_t>(position);
  const TokenId left = neighbor(state, p - 1);
  const TokenId right = neighbor(state, p + 1);
  const std::size_t bucket = position * buckets / std::max<std::size_t>(state.length(), 1);
  return {context_key(ContextLevel::full, left, right, bucket),
          context_key(ContextLevel::neighbors, left, right, bucket),
          context_key(ContextLevel::bucket, left, right, bucket)};
}

std::vector<TokenId> copy_bag(const ArgumentInstance& input, const Vocabulary& vocab) {
  std::vector<TokenId> bag;
  for (const auto& surface : support_set(input)) {
    auto id = vocab.find(surface);
    if (id && in_support(*id)) bag.push_back(*id);
  }
  std::sort(bag.begin(), bag.end());
  return bag;
}

Eigen::VectorXd base_distribution(const CategoricalParams& params, std::size_t vocab_size,
                                  const KeyTriple& keys) {
  const auto V = static_cast<Eigen::Index>(vocab_size);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(V);
  const double vs = static_cast<double>(vocab_size - 3);
  for (auto key : keys) {
    auto it = params.rows.find(key);
    if (it == params.rows.end()) continue;
    const CategoricalRow& row = it->second;
    if (row.log_probs) {
      p = row.log_probs->array().exp();
    } else {
      const double denom = row.total + params.alpha * vs;
      p(token::eos) = params.alpha / denom;
      p.tail(V - token::first_surface).setConstant(params.alpha / denom);
      for (const auto& [id, c] : row.counts) p(id) += c / denom;
    }
    return p;
  }
  p(token::eos) = 1.0 / vs;
  p.tail(V - token::first_surface).setConstant(1.0 / vs);
  return p;
}

void apply_copy_bias(Eigen::VectorXd& p, const std::vector<TokenId>& bag, double copy_bias) {
  if (copy_bias == 1.0 || bag.empty()) return;
  for (TokenId id : bag) p(id) *= copy_bias;
  const double z = p.sum();
  if (z > 0) p /= z;
}

void apply_pad_rule(Eigen::VectorXd& p, const SummaryState& state, std::size_t position) {
  auto eos = state.first_eos();
  if (eos && *eos < position) {
    p.setZero();
    p(token::pad) = 1.0;
    return;
  }
  p(token::mask) = 0.0;
  p(token::pad) = 0.0;
  p(token::unk) = 0.0;
  const double z = p.sum();
  if (z > 0) p /= z;
}

Eigen::VectorXd categorical_distribution(const CategoricalParams& params, const Vocabulary& vocab,
                                         const KeyTriple& keys, const std::vector<TokenId>& bag) {
  Eigen::VectorXd p = base_distribution(params, vocab.size(), keys);
  apply_copy_bias(p, bag, params.copy_bias);
  return p;
}

void check_position(const SummaryState& state, std::size_t position) {
  if (position >= state.length())
    throw InvalidArgument("position " + std::to_string(position) + " beyond canvas length " +
                          std::to_string(state.length()));
  if (!state.masked[position])
    throw InvalidArgument("position " + std::to_string(position) + " is not masked");
}

Eigen::VectorXd oracle_distribution(const OracleParams& params, const DenoiserModel& model,
                                    const SummaryState& state, const ArgumentInstance& input,
                                    std::size_t position) {
  auto it = params.references.find(input.id);
  if (it == params.references.end())
    throw InvalidArgument("oracle has no reference for instance '" + input.id + "'");
  if (it->second.size() != state.length())
    throw InvalidArgument("oracle reference length differs from canvas length");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.vocab->size()));
  p(it->second[position]) = 1.0;
  return p;
}

json remote_request(const RemoteParams& params, const SummaryState& state,
                    const ArgumentInstance& input) {
  json tokens = json::array();
  for (std::size_t i = 0; i < state.length(); ++i) {
    if (state.masked[i]) {
      tokens.push_back(nullptr);
    } else {
      tokens.push_back(state.tokens.surface[i]);
    }
  }
  json claims = json::array();
  for (const auto& c : input.claims) claims.push_back({{"claim", c.claim}, {"evidence", c.evidence}});
  return {{"tokens", std::move(tokens)},
          {"context", {{"topic", input.topic}, {"claims", std::move(claims)}}},
          {"top_k", params.top_k}};
}

std::vector<std::pair<std::size_t, Eigen::VectorXd>> remote_predict(
    const RemoteParams& params, const DenoiserModel& model, const SummaryState& state,
    const ArgumentInstance& input, std::span<const std::size_t> positions) {
  auto transport = params.transport ? params.transport : make_http_transport();
  HttpResponse res =
      post_json_with_retry(*transport, params.endpoint, remote_request(params, state, input), {},
                           params.retry);
  json body = json::parse(res.body, nullptr, false);
  if (body.is_discarded() || !body.contains("positions") || !body["positions"].is_array())
    throw RemoteError("remote denoiser response lacks a positions array");

  std::map<std::size_t, const json*> by_index;
  for (const auto& entry : body["positions"]) {
    if (!entry.contains("index") || !entry["index"].is_number_unsigned())
      throw RemoteError("remote denoiser entry without an index");
    by_index[entry["index"].get<std::size_t>()] = &entry;
  }

  const Vocabulary& vocab = *model.vocab;
  std::vector<std::pair<std::size_t, Eigen::VectorXd>> out;
  for (std::size_t pos : positions) {
    auto it = by_index.find(pos);
    if (it == by_index.end())
      throw RemoteError("remote denoiser response missing position " + std::to_string(pos));
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
    const json& entry = *it->second;
    if (entry.contains("candidates")) {
      for (const auto& cand : entry["candidates"]) {
        if (!cand.contains("token") || !cand["token"].is_string()) continue;
        const auto surface = cand["token"].get<std::string>();
        auto id = vocab.find(surface);
        if (!id) {
          auto norm = normalize(surface);
          if (norm.size() == 1) id = vocab.find(norm.front());
        }
        if (!id) continue;
        p(*id) += std::max(0.0, cand.value("p", 0.0));
      }
    }
    apply_pad_rule(p, state, pos);
    if (p.sum() <= 0.0)
      throw RemoteError("remote denoiser gave no usable candidates at position " +
                        std::to_string(pos));
    out.emplace_back(pos, std::move(p));
  }
  return out;
}

}  // namespace

Eigen::VectorXd predict_distribution(const DenoiserModel& model, const SummaryState& state,
                                     const ArgumentInstance& input, std::size_t position) {
  check_position(state, position);
  if (const auto* oracle = std::get_if<OracleParams>(&model.params))
    return oracle_distribution(*oracle, model, state, input, position);
  if (const auto* remote = std::get_if<RemoteParams>(&model.params)) {
    const std::size_t one[] = {position};
    return remote_predict(*remote, model, state, input, one).front().second;
  }
  const auto& params = std::get<CategoricalParams>(model.params);
  Eigen::VectorXd p = categorical_distribution(params, *model.vocab,
                                               keys_at(state, position, params.buckets),
                                               copy_bag(input, *model.vocab));
  apply_pad_rule(p, state, position);
  return p;
}

std::vector<std::pair<std::size_t, Eigen::VectorXd>> predict_masked(
    const DenoiserModel& model, const SummaryState& state, const ArgumentInstance& input) {
  const auto positions = state.masked_positions();
  std::vector<std::pair<std::size_t, Eigen::VectorXd>> out;
  if (positions.empty()) return out;
  if (const auto* remote = std::get_if<RemoteParams>(&model.params))
    return remote_predict(*remote, model, state, input, positions);
  if (const auto* oracle = std::get_if<OracleParams>(&model.params)) {
    for (auto pos : positions)
      out.emplace_back(pos, oracle_distribution(*oracle, model, state, input, pos));
    return out;
  }
  const auto& params = std::get<CategoricalParams>(model.params);
  const auto bag = copy_bag(input, *model.vocab);
  for (auto pos : positions) {
    Eigen::VectorXd p =
        categorical_distribution(params, *model.vocab, keys_at(state, pos, params.buckets), bag);
    apply_pad_rule(p, state, pos);
    out.emplace_back(pos, std::move(p));
  }
  return out;
}

TokenId choose_token(const Eigen::VectorXd& probs, Rng& rng, FillPolicy policy) {
  if (policy == FillPolicy::argmax) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < probs.size(); ++i) {
      if (probs(i) > probs(best)) best = i;
    }
    return static_cast<TokenId>(best);
  }
  const double u = rng.uniform() * probs.sum();
  double acc = 0.0;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

SummaryState fill_masks(const DenoiserModel& model, const SummaryState& state,
                        const ArgumentInstance& input, Rng& rng, FillPolicy policy) {
  if (state.masked_count() == 0) throw InvalidArgument("nothing to fill");
  SummaryState out = state;
  for (auto& [pos, probs] : predict_masked(model, state, input)) {
    TokenId id = choose_token(probs, rng, policy);
    out.fill(pos, id, model.vocab->surface(id), probs(id));
  }
  return out;
}

double masked_nll(const DenoiserModel& model, const TokenSeq& reference,
                  std::span<const std::size_t> mask, const ArgumentInstance& input) {
  if (mask.empty()) throw InvalidArgument("mask must be non-empty");
  SummaryState state = SummaryState::from_tokens(reference);
  for (auto pos : mask) {
    if (pos >= reference.size())
      throw InvalidArgument("mask position " + std::to_string(pos) + " beyond reference length");
    state.mask(pos);
  }
  double nll = 0.0;
  for (const auto& [pos, probs] : predict_masked(model, state, input)) {
    nll -= std::log(probs(reference.ids[pos]));
  }
  return nll;
}

// ---------------------------------------------------------------------------
// Training

std::vector<TrainingPair> make_training_pairs(std::span<const ArgumentInstance> instances,
                                              const Vocabulary& vocab) {
  std::vector<TrainingPair> out;
  for (const auto& inst : instances) {
    if (!inst.reference_summary)
      throw InvalidArgument("instance '" + inst.id + "' has no reference summary");
    out.push_back({inst, tokenize(*inst.reference_summary, vocab)});
  }
  return out;
}

namespace {

struct Example {
  std::size_t pair;
  KeyTriple keys;
  TokenId target;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_nll(const CategoricalParams& params, const Vocabulary& vocab,
                std::span<const Example> examples, const std::vector<std::vector<TokenId>>& bags) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) {
    Eigen::VectorXd p = categorical_distribution(params, vocab, ex.keys, bags[ex.pair]);
    total -= std::log(p(ex.target) / p.sum());
  }
  return total / static_cast<double>(examples.size());
}

void refine_rows(CategoricalParams& params, const Vocabulary& vocab,
                 std::span<const Example> examples, const std::vector<std::vector<TokenId>>& bags,
                 double step) {
  const auto V = static_cast<Eigen::Index>(vocab.size());
  std::map<std::uint64_t, std::vector<const Example*>> by_row;
  for (const auto& ex : examples) by_row[ex.keys[0]].push_back(&ex);

  for (auto& [key, members] : by_row) {
    CategoricalRow& row = params.rows.at(key);
    if (!row.log_probs) {
      Eigen::VectorXd base = base_distribution(params, vocab.size(), {key, key, key});
      row.log_probs = base.array().log();
    }
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(V);
    for (const Example* ex : members) {
      Eigen::VectorXd q = row.log_probs->array().exp();
      apply_copy_bias(q, bags[ex->pair], params.copy_bias);
      grad += q;
      grad(ex->target) -= 1.0;
    }
    Eigen::VectorXd& lp = *row.log_probs;
    for (Eigen::Index i = 0; i < V; ++i) {
      if (std::isfinite(lp(i))) lp(i) -= step * grad(i) / static_cast<double>(members.size());
    }
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < V; ++i) {
      if (std::isfinite(lp(i))) m = std::max(m, lp(i));
    }
    double z = 0.0;
    for (Eigen::Index i = 0; i < V; ++i) {
      if (std::isfinite(lp(i))) z += std::exp(lp(i) - m);
    }
    const double lse = m + std::log(z);
    for (Eigen::Index i = 0; i < V; ++i) {
      if (std::isfinite(lp(i))) lp(i) -= lse;
    }
  }
}

}  // namespace

std::pair<DenoiserModel, TrainingReport> train_denoiser(std::span<const TrainingPair> corpus,
                                                        std::shared_ptr<const Vocabulary> vocab,
                                                        const DenoiserTrainConfig& config) {
  if (corpus.empty()) throw InvalidArgument("empty training corpus");
  if (!vocab) throw InvalidArgument("training requires a vocabulary");
  if (!(config.mask_ratio > 0.0 && config.mask_ratio <= 1.0))
    throw InvalidArgument("mask_ratio must lie in (0, 1]");
  if (config.canvas_length < 2) throw InvalidArgument("canvas_length must be >= 2");
  if (config.buckets < 1) throw InvalidArgument("buckets must be >= 1");
  for (const auto& pair : corpus) {
    if (!pair.instance.reference_summary)
      throw InvalidArgument("instance '" + pair.instance.id + "' has no reference summary");
  }

  TrainingReport report;
  report.epochs = config.epochs;
  report.config_echo = {
      {"model_kind", std::string(to_string(config.model_kind))},
      {"mask_ratio", fmt_double(config.mask_ratio)},
      {"epochs", std::to_string(config.epochs)},
      {"seed", std::to_string(config.seed)},
      {"canvas_length", std::to_string(config.canvas_length)},
      {"alpha", fmt_double(config.alpha)},
      {"copy_bias", fmt_double(config.copy_bias)},
      {"buckets", std::to_string(config.buckets)},
      {"gradient_refine", config.gradient_refine ? "true" : "false"},
      {"gradient_step", fmt_double(config.gradient_step)},
  };

  DenoiserModel model;
  model.vocab = vocab;
  model.canvas_length = config.canvas_length;

  if (config.model_kind == ModelKind::oracle) {
    OracleParams params;
    for (const auto& pair : corpus) {
      params.references[pair.instance.id] = to_canvas(pair.reference, config.canvas_length).ids;
    }
    model.params = std::move(params);
    for (std::size_t e = 1; e <= config.epochs; ++e) report.loss_curve.emplace_back(e, 0.0);
    report.final_loss = 0.0;
    return {std::move(model), std::move(report)};
  }
  if (config.model_kind == ModelKind::remote)
    throw InvalidArgument("remote denoisers are not trained locally");

  CategoricalParams params;
  params.alpha = config.alpha;
  params.copy_bias = config.copy_bias;
  params.buckets = config.buckets;

  std::vector<std::vector<TokenId>> bags;
  std::vector<TokenSeq> canvases;
  for (const auto& pair : corpus) {
    bags.push_back(copy_bag(pair.instance, *vocab));
    canvases.push_back(to_canvas(pair.reference, config.canvas_length));
  }

  Rng rng = Rng::stream(config.seed, "train");
  std::vector<Example> all;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<Example> batch;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const TokenSeq& canvas = canvases[i];
      const std::size_t content = std::min(corpus[i].reference.size(), config.canvas_length - 1) + 1;
      TokenSeq prefix;
      prefix.ids.assign(canvas.ids.begin(), canvas.ids.begin() + static_cast<std::ptrdiff_t>(content));
      prefix.surface.assign(canvas.surface.begin(),
                            canvas.surface.begin() + static_cast<std::ptrdiff_t>(content));
      auto [corrupted, plan] = corrupt(prefix, config.mask_ratio, rng);
      SummaryState state = SummaryState::from_tokens(canvas);
      for (auto pos : plan.positions) state.mask(pos);
      for (auto pos : plan.positions) {
        batch.push_back({i, keys_at(state, pos, params.buckets), canvas.ids[pos]});
      }
    }
    report.loss_curve.emplace_back(epoch, mean_nll(params, *vocab, batch, bags));
    for (const auto& ex : batch) {
      for (auto key : ex.keys) {
        CategoricalRow& row = params.rows[key];
        row.counts[ex.target] += 1.0;
        row.total += 1.0;
      }
    }
    all.insert(all.end(), batch.begin(), batch.end());
  }

  if (config.gradient_refine) {
    for (std::size_t e = 1; e <= config.epochs; ++e) {
      refine_rows(params, *vocab, all, bags, config.gradient_step);
      report.loss_curve.emplace_back(config.epochs + e, mean_nll(params, *vocab, all, bags));
    }
  }
  report.final_loss = mean_nll(params, *vocab, all, bags);
  model.params = std::move(params);
  return {std::move(model), std::move(report)};
}

json to_json(const TrainingReport& report) {
  json curve = json::array();
  for (const auto& [step, loss] : report.loss_curve) curve.push_back({{"step", step}, {"nll", loss}});
  return {{"epochs", report.epochs},
          {"loss_curve", std::move(curve)},
          {"final_loss", report.final_loss},
          {"config", report.config_echo}};
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string save_model(const DenoiserModel& model) {
  if (!model.vocab) throw InvalidArgument("model has no vocabulary");
  json params;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, OracleParams>) {
          params = {{"references", p.references}};
        } else if constexpr (std::is_same_v<T, CategoricalParams>) {
          json rows = json::array();
          for (const auto& [key, row] : p.rows) {
            json counts = json::array();
            for (const auto& [id, c] : row.counts) counts.push_back({id, c});
            json entry = {{"key", key}, {"total", row.total}, {"counts", std::move(counts)}};
            if (row.log_probs) {
              std::vector<double> lp;
              lp.push_back((*row.log_probs)(token::eos));
              for (Eigen::Index i = token::first_surface; i < row.log_probs->size(); ++i)
                lp.push_back((*row.log_probs)(i));
              entry["log_probs"] = lp;
            }
            rows.push_back(std::move(entry));
          }
          params = {{"alpha", p.alpha},
                    {"copy_bias", p.copy_bias},
                    {"buckets", p.buckets},
                    {"rows", std::move(rows)}};
        } else {
          params = {{"endpoint", p.endpoint},
                    {"top_k", p.top_k},
                    {"max_attempts", p.retry.max_attempts},
                    {"initial_backoff_ms", p.retry.initial_backoff.count()}};
        }
      },
      model.params);

  json archive = {{"format", "remask-denoiser"},
                  {"version", 1},
                  {"kind", std::string(to_string(model.kind()))},
                  {"canvas_length", model.canvas_length},
                  {"vocab_hash", hex64(model.vocab->hash())},
                  {"vocabulary", model.vocab->serialize()},
                  {"params", std::move(params)}};
  return archive.dump() + "\n";
}

DenoiserModel load_model(std::string_view text, std::optional<std::uint64_t> expected_vocab_hash) {
  json archive = json::parse(text.begin(), text.end(), nullptr, false);
  if (archive.is_discarded() || archive.value("format", "") != "remask-denoiser")
    throw ParseError("not a denoiser archive");
  DenoiserModel model;
  try {
    auto vocab = std::make_shared<Vocabulary>(
        Vocabulary::deserialize(archive.at("vocabulary").get<std::string>()));
    const auto recorded = archive.at("vocab_hash").get<std::string>();
    if (recorded != hex64(vocab->hash()))
      throw ParseError("vocabulary hash mismatch: archive records " + recorded + ", contents hash to " +
                       hex64(vocab->hash()));
    if (expected_vocab_hash && *expected_vocab_hash != vocab->hash())
      throw ParseError("vocabulary hash mismatch: expected " + hex64(*expected_vocab_hash) +
                       ", archive has " + recorded);
    model.vocab = vocab;
    model.canvas_length = archive.at("canvas_length").get<std::size_t>();
    const json& p = archive.at("params");
    const ModelKind kind = parse_model_kind(archive.at("kind").get<std::string>());
    if (kind == ModelKind::oracle) {
      OracleParams params;
      params.references = p.at("references").get<std::map<std::string, std::vector<TokenId>>>();
      model.params = std::move(params);
    } else if (kind == ModelKind::categorical) {
      CategoricalParams params;
      params.alpha = p.at("alpha").get<double>();
      params.copy_bias = p.at("copy_bias").get<double>();
      params.buckets = p.at("buckets").get<std::size_t>();
      const auto V = static_cast<Eigen::Index>(vocab->size());
      for (const auto& entry : p.at("rows")) {
        CategoricalRow row;
        row.total = entry.at("total").get<double>();
        for (const auto& c : entry.at("counts")) {
          const auto id = c.at(0).get<TokenId>();
          if (!vocab->contains(id)) throw ParseError("row references token id out of range");
          row.counts[id] = c.at(1).get<double>();
        }
        if (entry.contains("log_probs")) {
          auto lp = entry.at("log_probs").get<std::vector<double>>();
          if (static_cast<Eigen::Index>(lp.size()) != V - 3)
            throw ParseError("log_probs row has the wrong width");
          Eigen::VectorXd full =
              Eigen::VectorXd::Constant(V, -std::numeric_limits<double>::infinity());
          full(token::eos) = lp[0];
          for (Eigen::Index i = token::first_surface; i < V; ++i)
            full(i) = lp[static_cast<std::size_t>(i - 3)];
          row.log_probs = std::move(full);
        }
        params.rows.emplace(entry.at("key").get<std::uint64_t>(), std::move(row));
      }
      model.params = std::move(params);
    } else {
      RemoteParams params;
      params.endpoint = p.at("endpoint").get<std::string>();
      params.top_k = p.at("top_k").get<int>();
      params.retry.max_attempts = p.value("max_attempts", 3);
      params.retry.initial_backoff = std::chrono::milliseconds(p.value("initial_backoff_ms", 200));
      model.params = std::move(params);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed denoiser archive: ") + e.what());
  }
  return model;
}

}  // namespace remask
