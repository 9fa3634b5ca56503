#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace remask {

enum class Stance { support, oppose, neutral };

std::string_view to_string(Stance stance);
/// Accepts support/oppose/neutral, pro/con and the ArgKP-style 1/-1/0.
Stance parse_stance(std::string_view text);

struct ClaimUnit {
  std::string claim;
  std::vector<std::string> evidence;

  bool operator==(const ClaimUnit&) const = default;
};

struct ArgumentInstance {
  std::string id;
  std::string topic;
  Stance stance = Stance::neutral;
  std::vector<ClaimUnit> claims;
  std::optional<std::string> reference_summary;

  bool operator==(const ArgumentInstance&) const = default;
};

/// Throws InvalidArgument unless the instance has a non-empty id, at least one
/// claim, and every claim text is non-empty.
void validate(const ArgumentInstance& instance);

enum class DatasetFormat { claims_json, pairs_csv };

DatasetFormat parse_dataset_format(std::string_view text);

std::vector<ArgumentInstance> load_dataset(const std::filesystem::path& path,
                                           DatasetFormat format);
std::vector<ArgumentInstance> parse_claims_json(std::string_view text);
std::vector<ArgumentInstance> parse_pairs_csv(std::string_view text);

nlohmann::json to_json(const ArgumentInstance& instance);
ArgumentInstance instance_from_json(const nlohmann::json& record);

/// JSON-lines rendering, one instance per line. Reloads to equal instances.
std::string to_jsonl(std::span<const ArgumentInstance> instances);
void save_dataset(const std::filesystem::path& path,
                  std::span<const ArgumentInstance> instances);

struct TopicSplit {
  std::vector<ArgumentInstance> train;
  std::vector<ArgumentInstance> test;
};

/// Deterministic split by hashing each topic string; all instances of a topic
/// land on the same side.
TopicSplit split_by_topic_hash(std::span<const ArgumentInstance> instances,
                               double test_fraction, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Vocabulary and tokens

using TokenId = std::int32_t;

namespace token {
inline constexpr TokenId mask = 0;
inline constexpr TokenId pad = 1;
inline constexpr TokenId unk = 2;
inline constexpr TokenId eos = 3;
inline constexpr TokenId first_surface = 4;
inline constexpr std::string_view mask_surface = "[MASK]";
inline constexpr std::string_view pad_surface = "[PAD]";
inline constexpr std::string_view unk_surface = "[UNK]";
inline constexpr std::string_view eos_surface = "[EOS]";
}  // namespace token

bool is_reserved_surface(std::string_view surface);

class Vocabulary {
 public:
  static constexpr std::size_t kReserved = 4;

  /// Reserved tokens only.
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::string& surface(TokenId id) const;
  std::uint64_t count(TokenId id) const;
  std::optional<TokenId> find(std::string_view surface) const;
  TokenId id_or_unk(std::string_view surface) const;
  bool contains(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }

  /// `token<TAB>count` per line, reserved tokens first.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && counts_ == other.counts_;
  }

 private:
  void push(std::string surface, std::uint64_t count);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;

  friend Vocabulary build_vocabulary(std::span<const std::string>, std::uint64_t);
};

struct TokenSeq {
  std::vector<TokenId> ids;
  std::vector<std::string> surface;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq&) const = default;
};

/// Lowercased word/punctuation surfaces. Hyphens and apostrophes between word
/// characters stay inside the word; every other ASCII punctuation character is
/// its own token. Bytes >= 0x80 are treated as word characters.
std::vector<std::string> normalize(std::string_view text);

/// Without a vocabulary every id is UNK.
TokenSeq tokenize(std::string_view text);
TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);

/// Ids for already-normalized surfaces.
TokenSeq lookup(std::vector<std::string> surfaces, const Vocabulary& vocab);

std::string detokenize(std::span<const std::string> surfaces);

Vocabulary build_vocabulary(std::span<const std::string> corpus,
                            std::uint64_t min_count);

/// Every text a vocabulary for these instances should see: topics, claims,
/// evidence and reference summaries.
std::vector<std::string> corpus_texts(std::span<const ArgumentInstance> instances);

}  // namespace remask
