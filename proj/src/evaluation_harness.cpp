#include "omni/evaluation_harness.hpp"

#include <fstream>
#include <set>

namespace omni {

std::vector<SimilarityMatrix> similarity_matrix(
    const std::map<std::string, std::vector<SpeakerEmbedding>>& by_speaker, int n_sets,
    uint64_t seed) {
  OMNI_CHECK(n_sets >= 1, "similarity_matrix: n_sets must be positive");
  OMNI_CHECK(!by_speaker.empty(), "similarity_matrix: no speakers");
  for (const auto& [id, clips] : by_speaker)
    OMNI_CHECK(!clips.empty(), "similarity_matrix: speaker " + id + " has no clips");
  Rng rng(seed);
  std::vector<SimilarityMatrix> out;
  for (int s = 0; s < n_sets; ++s) {
    SimilarityMatrix m;
    std::vector<const SpeakerEmbedding*> picks;
    for (const auto& [id, clips] : by_speaker) {
      m.labels.push_back(id);
      picks.push_back(&clips[static_cast<size_t>(rng.index(static_cast<int64_t>(clips.size())))]);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(picks.size());
    m.values.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        double c = i == j ? 1.0 : cosine_similarity(*picks[i], *picks[j]);
        m.values(i, j) = c;
        m.values(j, i) = c;
      }
    out.push_back(std::move(m));
  }
  return out;
}

bool voice_match(const AudioAsset& a, const AudioAsset& b) {
  return cosine_similarity(speaker_embedding(a), speaker_embedding(b)) > 0.9;
}

CorpusStats corpus_stats(const std::vector<DialogueRecord>& corpus,
                         const AudioLookup& audio) {
  CorpusStats stats;
  stats.n_samples = corpus.size();
  std::set<std::string> characters;
  size_t total_turns = 0;
  double secs_user = 0, secs_character = 0;
  for (const auto& rec : corpus) {
    for (const auto& ref : rec.profile_refs) characters.insert(ref);
    total_turns += rec.turns.size();
    std::set<std::string> rec_characters(rec.profile_refs.begin(), rec.profile_refs.end());
    for (const auto& turn : rec.turns) {
      if (!turn.payload.audio_ref) continue;
      OMNI_CHECK(audio, "corpus_stats: no audio lookup for " + *turn.payload.audio_ref);
      double d = audio(*turn.payload.audio_ref).duration_seconds();
      if (rec_characters.count(turn.speaker_id))
        secs_character += d;
      else
        secs_user += d;
    }
  }
  stats.n_characters = characters.size();
  stats.avg_turns = corpus.empty() ? 0.0
                                   : static_cast<double>(total_turns) /
                                         static_cast<double>(corpus.size());
  stats.speech_hours_user = secs_user / 3600.0;
  stats.speech_hours_character = secs_character / 3600.0;
  return stats;
}

CorpusStats combine_stats(const CorpusStats& a, const CorpusStats& b,
                          size_t union_characters) {
  CorpusStats out;
  out.n_characters = union_characters;
  out.n_samples = a.n_samples + b.n_samples;
  const double turns = a.avg_turns * static_cast<double>(a.n_samples) +
                       b.avg_turns * static_cast<double>(b.n_samples);
  out.avg_turns = out.n_samples ? turns / static_cast<double>(out.n_samples) : 0.0;
  out.speech_hours_user = a.speech_hours_user + b.speech_hours_user;
  out.speech_hours_character = a.speech_hours_character + b.speech_hours_character;
  return out;
}

double eval_asr_wer(const std::vector<std::pair<std::string, std::string>>& ref_hyp_pairs,
                    Language lang) {
  OMNI_CHECK(!ref_hyp_pairs.empty(), "eval_asr_wer: no pairs");
  size_t edits = 0, ref_len = 0;
  for (const auto& [ref, hyp] : ref_hyp_pairs) {
    EditStats s = edit_stats(ref, hyp, lang);
    edits += s.edits;
    ref_len += s.ref_len;
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_len);
}

double eval_tts_wer(const std::vector<std::pair<AudioAsset, std::string>>& audio_text_pairs,
                    AsrClient& asr, Language lang) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [audio, text] : audio_text_pairs)
    pairs.push_back({text, asr.transcribe(audio)});
  return eval_asr_wer(pairs, lang);
}

void write_similarity_matrix(const SimilarityMatrix& matrix, const std::string& text_path,
                             const std::string& image_path) {
  {
    std::ofstream out(text_path);
    OMNI_CHECK(out.good(), "cannot write matrix: " + text_path);
    for (size_t i = 0; i < matrix.labels.size(); ++i)
      out << (i ? "\t" : "") << matrix.labels[i];
    out << "\n";
    for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < matrix.values.cols(); ++j)
        out << (j ? "\t" : "") << matrix.values(i, j);
      out << "\n";
    }
  }
  {
    // grayscale heatmap, one cell per matrix entry, scaled up 16x
    const int cell = 16;
    const Eigen::Index n = matrix.values.rows();
    std::ofstream out(image_path, std::ios::binary);
    OMNI_CHECK(out.good(), "cannot write image: " + image_path);
    out << "P5\n" << n * cell << " " << n * cell << "\n255\n";
    for (Eigen::Index i = 0; i < n * cell; ++i)
      for (Eigen::Index j = 0; j < n * cell; ++j) {
        double v = matrix.values(i / cell, j / cell);
        int g = static_cast<int>(std::round(255.0 * std::clamp((v + 1.0) / 2.0, 0.0, 1.0)));
        out.put(static_cast<char>(g));
      }
  }
}

}  // namespace omni
