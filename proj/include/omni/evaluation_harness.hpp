#ifndef OMNI_EVALUATION_HARNESS_HPP
#define OMNI_EVALUATION_HARNESS_HPP

#include <map>
#include <string>
#include <vector>

#include "omni/core_types.hpp"
#include "omni/dataset_forge.hpp"
#include "omni/speech_synthesis.hpp"

namespace omni {

struct SimilarityMatrix {
  std::vector<std::string> labels;
  Mat values;  // symmetric, unit diagonal
};

// For each of n_sets seeded draws, pick one clip per speaker and compute
// the pairwise cosine matrix.
std::vector<SimilarityMatrix> similarity_matrix(
    const std::map<std::string, std::vector<SpeakerEmbedding>>& by_speaker, int n_sets,
    uint64_t seed);

// Same-character decision at the strict > 0.9 cosine threshold.
bool voice_match(const AudioAsset& a, const AudioAsset& b);

struct CorpusStats {
  size_t n_characters = 0;
  size_t n_samples = 0;
  double avg_turns = 0;
  double speech_hours_user = 0;
  double speech_hours_character = 0;
};

CorpusStats corpus_stats(const std::vector<DialogueRecord>& corpus,
                         const AudioLookup& audio);

CorpusStats combine_stats(const CorpusStats& a, const CorpusStats& b,
                          size_t union_characters);

// Pooled corpus-level WER: 100 * total edits / total reference words.
double eval_asr_wer(const std::vector<std::pair<std::string, std::string>>& ref_hyp_pairs,
                    Language lang = Language::en);

double eval_tts_wer(const std::vector<std::pair<AudioAsset, std::string>>& audio_text_pairs,
                    AsrClient& asr, Language lang = Language::en);

// Plain-text matrix with label header, plus a PGM heatmap image.
void write_similarity_matrix(const SimilarityMatrix& matrix, const std::string& text_path,
                             const std::string& image_path);

}  // namespace omni

#endif  // OMNI_EVALUATION_HARNESS_HPP
