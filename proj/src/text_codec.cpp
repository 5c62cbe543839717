#include "posegen/text_codec.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace posegen::text {

namespace {
const char* kSpecialNames[SharedVocabulary::kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<spq>",
                                                             "<epq>",  "<pq>",  "<unk>"};
}

int SharedVocabulary::pose_to_shared(int code) const {
  if (code < 0 || code >= n_pose_codes)
    throw std::out_of_range("pose code " + std::to_string(code) + " outside [0, " +
                            std::to_string(n_pose_codes) + ")");
  return pose_token_base + code;
}

int SharedVocabulary::shared_to_pose(int id) const {
  if (!is_pose_id(id))
    throw std::out_of_range("id " + std::to_string(id) + " is not a pose token id");
  return id - pose_token_base;
}

std::string normalize(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;  // whitespace and punctuation both separate words
    }
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(normalize(text));
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

TokenSequence tokenize(const std::string& text, const SharedVocabulary& vocab, Segment seg) {
  TokenSequence seq;
  for (const auto& w : split_words(text)) {
    auto it = vocab.word_to_id.find(w);
    seq.append(it != vocab.word_to_id.end() ? it->second : SharedVocabulary::kUnk, seg);
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq, const SharedVocabulary& vocab) {
  std::string out;
  for (int id : seq.ids) {
    if (id < SharedVocabulary::kNumSpecials || vocab.is_pose_id(id)) continue;
    if (id >= vocab.size()) throw std::out_of_range("detokenize: id out of range");
    if (!out.empty()) out.push_back(' ');
    out += vocab.id_to_token[id];
  }
  return out;
}

SharedVocabulary build_vocab(const std::vector<std::string>& corpus, int n_pose_codes) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (n_pose_codes < 0) throw std::invalid_argument("build_vocab: negative pose code count");
  SharedVocabulary v;
  for (const char* s : kSpecialNames) v.id_to_token.emplace_back(s);
  for (const auto& line : corpus) {
    for (const auto& w : split_words(line)) {
      if (v.word_to_id.emplace(w, static_cast<int>(v.id_to_token.size())).second)
        v.id_to_token.push_back(w);
    }
  }
  v.pose_token_base = static_cast<int>(v.id_to_token.size());
  v.n_pose_codes = n_pose_codes;
  for (int k = 0; k < n_pose_codes; ++k) v.id_to_token.push_back("<pose_" + std::to_string(k) + ">");
  return v;
}

void save_vocab(const SharedVocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (int id = 0; id < vocab.size(); ++id) out << id << '\t' << vocab.id_to_token[id] << '\n';
}

SharedVocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  SharedVocabulary v;
  v.pose_token_base = -1;
  std::string line;
  int expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("vocabulary file: bad line: " + line);
    const int id = std::stoi(line.substr(0, tab));
    if (id != expect++) throw std::runtime_error("vocabulary file: ids must be dense from 0");
    v.id_to_token.push_back(line.substr(tab + 1));
  }
  if (expect < SharedVocabulary::kNumSpecials)
    throw std::runtime_error("vocabulary file: missing specials");
  for (int i = 0; i < SharedVocabulary::kNumSpecials; ++i) {
    if (v.id_to_token[i] != kSpecialNames[i])
      throw std::runtime_error("vocabulary file: special id " + std::to_string(i) +
                               " must be " + kSpecialNames[i]);
  }
  int base = -1;
  for (int id = SharedVocabulary::kNumSpecials; id < expect; ++id) {
    const auto& tok = v.id_to_token[id];
    const bool is_pose = tok.rfind("<pose_", 0) == 0;
    if (base < 0) {
      if (is_pose)
        base = id;
      else
        v.word_to_id.emplace(tok, id);
    } else if (!is_pose) {
      throw std::runtime_error("vocabulary file: word after pose ids: " + tok);
    }
  }
  v.pose_token_base = base < 0 ? expect : base;
  v.n_pose_codes = expect - v.pose_token_base;
  return v;
}

}  // namespace posegen::text
