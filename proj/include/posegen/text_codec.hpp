#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace posegen::text {

enum class Segment { Special, Abstract, Detailed, PoseQuery, PoseOutput };

/// Unified text+pose id space. Layout is dense and fixed:
///   [0..6]                specials <pad> <bos> <eos> <spq> <epq> <pq> <unk>
///   [7..7+W)              words, first-occurrence order over the corpus
///   [base..base+K)        pose codebook ids, base = 7 + W
/// SPQ(3) < EPQ(4) < PQ(5) by construction.
struct SharedVocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSpq = 3;
  static constexpr int kEpq = 4;
  static constexpr int kPq = 5;
  static constexpr int kUnk = 6;
  static constexpr int kNumSpecials = 7;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> word_to_id;
  int pose_token_base = kNumSpecials;
  int n_pose_codes = 0;

  int size() const { return pose_token_base + n_pose_codes; }
  int word_count() const { return pose_token_base - kNumSpecials; }
  bool is_pose_id(int id) const { return id >= pose_token_base && id < size(); }
  int pose_to_shared(int code) const;
  int shared_to_pose(int id) const;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<Segment> segments;

  void append(int id, Segment seg) {
    ids.push_back(id);
    segments.push_back(seg);
  }
  std::size_t size() const { return ids.size(); }
};

/// Lowercases, maps punctuation to spaces, collapses whitespace.
std::string normalize(const std::string& text);

std::vector<std::string> split_words(const std::string& text);

/// Whitespace-split normalized words looked up in the vocabulary; unknown
/// words map to <unk>. All emitted tokens carry the given segment label.
TokenSequence tokenize(const std::string& text, const SharedVocabulary& vocab, Segment seg);

/// Joins word tokens with single spaces; specials and pose ids are skipped.
std::string detokenize(const TokenSequence& seq, const SharedVocabulary& vocab);

/// Deterministic vocabulary: specials, then words in first-occurrence order
/// across the corpus, then n_pose_codes pose ids.
SharedVocabulary build_vocab(const std::vector<std::string>& corpus, int n_pose_codes);

/// Line-oriented "id<TAB>token" file; pose ids appear as <pose_k>.
void save_vocab(const SharedVocabulary& vocab, const std::string& path);
SharedVocabulary load_vocab(const std::string& path);

}  // namespace posegen::text
