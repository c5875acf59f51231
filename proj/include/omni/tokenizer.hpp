#ifndef OMNI_TOKENIZER_HPP
#define OMNI_TOKENIZER_HPP

#include <string>
#include <vector>

#include "omni/common.hpp"

namespace omni {

// Byte-level BPE with reserved special ids. Any byte sequence encodes
// without error; the speech placeholder marker maps to one reserved id.
class Tokenizer {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kSpeech = 3;
  static constexpr int kByteBase = 4;  // ids 4..259 are raw bytes

  // Learns n_merges byte-pair merges over the given texts. Ties break on
  // the lowest (left, right) id pair for determinism.
  static Tokenizer train(const std::vector<std::string>& texts, int n_merges);

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& tokens) const;

  int vocab_size() const { return kByteBase + 256 + static_cast<int>(merges_.size()); }
  uint64_t content_hash() const;

  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

 private:
  // merge i produces token id kByteBase + 256 + i from (left, right).
  std::vector<std::pair<int, int>> merges_;

  std::vector<int> encode_segment(const std::string& bytes) const;
  std::string token_bytes(int id) const;
};

}  // namespace omni

#endif  // OMNI_TOKENIZER_HPP
