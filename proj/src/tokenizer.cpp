#include "omni/tokenizer.hpp"

#include <fstream>
#include <map>

#include "json.hpp"
#include "omni/core_types.hpp"

namespace omni {

using nlohmann::json;

Tokenizer Tokenizer::train(const std::vector<std::string>& texts, int n_merges) {
  Tokenizer tok;
  std::vector<std::vector<int>> seqs;
  for (const auto& t : texts) {
    std::vector<int> s;
    s.reserve(t.size());
    for (unsigned char c : t) s.push_back(kByteBase + c);
    if (!s.empty()) seqs.push_back(std::move(s));
  }
  for (int m = 0; m < n_merges; ++m) {
    std::map<std::pair<int, int>, int> counts;
    for (const auto& s : seqs)
      for (size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}]++;
    std::pair<int, int> best{-1, -1};
    int best_count = 1;  // require frequency >= 2
    for (const auto& [pair, c] : counts) {
      if (c > best_count || (c == best_count && best.first >= 0 && pair < best)) {
        best = pair;
        best_count = c;
      }
    }
    if (best.first < 0) break;
    int new_id = kByteBase + 256 + static_cast<int>(tok.merges_.size());
    tok.merges_.push_back(best);
    for (auto& s : seqs) {
      std::vector<int> out;
      out.reserve(s.size());
      for (size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          out.push_back(new_id);
          i += 2;
        } else {
          out.push_back(s[i++]);
        }
      }
      s = std::move(out);
    }
  }
  return tok;
}

std::vector<int> Tokenizer::encode_segment(const std::string& bytes) const {
  std::vector<int> s;
  s.reserve(bytes.size());
  for (unsigned char c : bytes) s.push_back(kByteBase + c);
  for (size_t m = 0; m < merges_.size(); ++m) {
    const auto& [a, b] = merges_[m];
    const int new_id = kByteBase + 256 + static_cast<int>(m);
    std::vector<int> out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size();) {
      if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
        out.push_back(new_id);
        i += 2;
      } else {
        out.push_back(s[i++]);
      }
    }
    s = std::move(out);
  }
  return s;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> out;
  const std::string marker = kSpeechPlaceholder;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t hit = text.find(marker, pos);
    if (hit == std::string::npos) {
      auto seg = encode_segment(text.substr(pos));
      out.insert(out.end(), seg.begin(), seg.end());
      break;
    }
    if (hit > pos) {
      auto seg = encode_segment(text.substr(pos, hit - pos));
      out.insert(out.end(), seg.begin(), seg.end());
    }
    out.push_back(kSpeech);
    pos = hit + marker.size();
  }
  return out;
}

std::string Tokenizer::token_bytes(int id) const {
  if (id >= kByteBase && id < kByteBase + 256)
    return std::string(1, static_cast<char>(id - kByteBase));
  if (id >= kByteBase + 256) {
    size_t m = static_cast<size_t>(id - kByteBase - 256);
    OMNI_CHECK(m < merges_.size(), "token id out of vocabulary");
    return token_bytes(merges_[m].first) + token_bytes(merges_[m].second);
  }
  if (id == kSpeech) return kSpeechPlaceholder;
  return "";  // bos/eos/unk render as nothing
}

std::string Tokenizer::decode(const std::vector<int>& tokens) const {
  std::string out;
  for (int id : tokens) {
    OMNI_CHECK(id >= 0 && id < vocab_size(), "token id out of vocabulary");
    out += token_bytes(id);
  }
  return out;
}

uint64_t Tokenizer::content_hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& [a, b] : merges_) {
    int pair[2] = {a, b};
    h = fnv1a(pair, sizeof(pair), h);
  }
  return h;
}

void Tokenizer::save(const std::string& path) const {
  json j;
  j["format"] = "omni-bpe-v1";
  j["merges"] = json::array();
  for (const auto& [a, b] : merges_) j["merges"].push_back({a, b});
  j["hash"] = hash_hex(content_hash());
  std::ofstream out(path);
  OMNI_CHECK(out.good(), "cannot write tokenizer: " + path);
  out << j.dump(2) << "\n";
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream in(path);
  OMNI_CHECK(in.good(), "cannot open tokenizer: " + path);
  json j = json::parse(in);
  OMNI_CHECK(j.at("format") == "omni-bpe-v1", "unknown tokenizer format");
  Tokenizer tok;
  for (const auto& m : j.at("merges"))
    tok.merges_.push_back({m.at(0).get<int>(), m.at(1).get<int>()});
  if (j.contains("hash"))
    OMNI_CHECK(j.at("hash").get<std::string>() == hash_hex(tok.content_hash()),
               "tokenizer content hash mismatch: " + path);
  return tok;
}

}  // namespace omni
