#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "remask/corpus.hpp"
#include "remask/remote.hpp"
#include "remask/rng.hpp"

namespace remask {

/// Fixed-length canvas being denoised. Masked positions hold MASK and carry
/// confidence 0; never-filled unmasked positions carry confidence 1.
struct SummaryState {
  TokenSeq tokens;
  std::vector<bool> masked;
  Eigen::VectorXd confidence;

  std::size_t length() const { return tokens.size(); }

  static SummaryState fully_masked(std::size_t length);
  static SummaryState from_tokens(TokenSeq tokens);

  std::size_t masked_count() const;
  std::vector<std::size_t> masked_positions() const;
  /// First unmasked EOS, if any.
  std::optional<std::size_t> first_eos() const;
  /// Number of positions before the first EOS (the whole canvas without one).
  std::size_t content_length() const;

  void mask(std::size_t position);
  void fill(std::size_t position, TokenId id, std::string surface, double confidence);

  /// Binds sufficiency profiles to a concrete canvas.
  std::uint64_t hash() const;

  bool operator==(const SummaryState& other) const {
    return tokens == other.tokens && masked == other.masked && confidence == other.confidence;
  }
};

/// Content truncated to L-1 tokens, then EOS, then PAD up to L.
TokenSeq to_canvas(const TokenSeq& content, std::size_t length);

/// Forces every position after the first EOS to PAD.
void apply_readout(SummaryState& state);

/// Surfaces before the first EOS, PAD and MASK dropped, joined by spaces.
std::string summary_text(const SummaryState& state);
std::vector<std::string> summary_surfaces(const SummaryState& state);

// ---------------------------------------------------------------------------

enum class ModelKind { oracle, categorical, remote };
enum class FillPolicy { argmax, sample };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
FillPolicy parse_fill_policy(std::string_view text);

/// Instance id -> reference canvas.
struct OracleParams {
  std::map<std::string, std::vector<TokenId>> references;
};

/// Context features of a canvas position. Prediction uses the most specific
/// level with observed counts: (left, right, bucket), then (left, right), then
/// (bucket), then uniform.
enum class ContextLevel : std::uint8_t { full = 0, neighbors = 1, bucket = 2 };

inline constexpr TokenId kBoundary = -1;

std::uint64_t context_key(ContextLevel level, TokenId left, TokenId right, std::size_t bucket);

struct CategoricalRow {
  std::map<TokenId, double> counts;
  double total = 0.0;
  /// Log-probabilities over the whole vocabulary after gradient refinement.
  std::optional<Eigen::VectorXd> log_probs;
};

struct CategoricalParams {
  double alpha = 0.1;
  /// 1.0 disables the copy bias.
  double copy_bias = 1.0;
  std::size_t buckets = 8;
  std::map<std::uint64_t, CategoricalRow> rows;
};

struct RemoteParams {
  std::string endpoint;
  int top_k = 8;
  RetryPolicy retry;
  std::shared_ptr<HttpTransport> transport;
};

struct DenoiserModel {
  std::shared_ptr<const Vocabulary> vocab;
  std::size_t canvas_length = 64;
  std::variant<OracleParams, CategoricalParams, RemoteParams> params;

  ModelKind kind() const { return static_cast<ModelKind>(params.index()); }
};

/// Tokens that may be predicted at an ordinary position: EOS and every
/// non-reserved surface. Its size is the V of the uniform baseline.
std::size_t support_size(const Vocabulary& vocab);

/// Distribution over the vocabulary for one masked position. MASK and UNK get
/// zero; PAD gets zero unless an unmasked EOS precedes the position, in which
/// case the distribution is one-hot on PAD.
Eigen::VectorXd predict_distribution(const DenoiserModel& model, const SummaryState& state,
                                     const ArgumentInstance& input, std::size_t position);

/// Distributions for every masked position (ascending), all conditioned on the
/// same state. One request for remote models.
std::vector<std::pair<std::size_t, Eigen::VectorXd>> predict_masked(
    const DenoiserModel& model, const SummaryState& state, const ArgumentInstance& input);

TokenId choose_token(const Eigen::VectorXd& probs, Rng& rng, FillPolicy policy);

SummaryState fill_masks(const DenoiserModel& model, const SummaryState& state,
                        const ArgumentInstance& input, Rng& rng, FillPolicy policy);

/// -sum_{t in mask} log p(reference_t | reference with mask hidden, input).
double masked_nll(const DenoiserModel& model, const TokenSeq& reference,
                  std::span<const std::size_t> mask, const ArgumentInstance& input);

// ---------------------------------------------------------------------------

struct TrainingPair {
  ArgumentInstance instance;
  /// Reference summary content, without EOS/PAD.
  TokenSeq reference;
};

/// Tokenizes each reference summary with `vocab`. Throws InvalidArgument naming
/// the first instance without one.
std::vector<TrainingPair> make_training_pairs(std::span<const ArgumentInstance> instances,
                                              const Vocabulary& vocab);

struct DenoiserTrainConfig {
  double mask_ratio = 0.3;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
  ModelKind model_kind = ModelKind::categorical;
  std::size_t canvas_length = 64;
  double alpha = 0.1;
  double copy_bias = 2.0;
  std::size_t buckets = 8;
  bool gradient_refine = false;
  double gradient_step = 0.1;
};

struct TrainingReport {
  std::size_t epochs = 0;
  /// (epoch, mean masked NLL per masked token in nats)
  std::vector<std::pair<std::size_t, double>> loss_curve;
  double final_loss = 0.0;
  std::map<std::string, std::string> config_echo;
};

std::pair<DenoiserModel, TrainingReport> train_denoiser(
    std::span<const TrainingPair> corpus, std::shared_ptr<const Vocabulary> vocab,
    const DenoiserTrainConfig& config);

nlohmann::json to_json(const TrainingReport& report);

/// Self-describing JSON archive: kind tag, vocabulary (with its hash) and the
/// parameter table. Output is a pure function of the model.
std::string save_model(const DenoiserModel& model);
/// Verifies the embedded vocabulary against the recorded hash and, when given,
/// against `expected_vocab_hash`.
DenoiserModel load_model(std::string_view archive,
                         std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

}  // namespace remask
