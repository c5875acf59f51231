#include "omni/language_core.hpp"

#include <cmath>

namespace omni {

using ad::Var;

double language_loss_value(const Mat& logits, const std::vector<int>& targets,
                           const std::vector<uint8_t>& loss_mask) {
  ad::Tape tape;
  Var z = tape.var(logits);
  return ad::xent_mean(z, targets, loss_mask).val()(0, 0);
}

LanguageCore::LanguageCore(TransformerConfig cfg, uint64_t seed) : model_(cfg, seed) {}

EmbeddingSequence LanguageCore::splice(const std::vector<int>& tokens,
                                       const std::vector<Mat>& speech_segments) const {
  ad::Tape tape;
  std::vector<Var> seg_vars;
  seg_vars.reserve(speech_segments.size());
  for (const auto& m : speech_segments) seg_vars.push_back(tape.var(m));
  EmbeddingSequence seq;
  Var rows = splice_var(tape, tokens, seg_vars, &seq.modality_mask);
  seq.embeddings = rows.val();
  return seq;
}

Var LanguageCore::splice_var(ad::Tape& tape, const std::vector<int>& tokens,
                             const std::vector<Var>& speech_segments,
                             std::vector<ModalityTag>* mask_out) const {
  size_t n_placeholders = 0;
  for (int t : tokens)
    if (t == Tokenizer::kSpeech) ++n_placeholders;
  OMNI_CHECK(n_placeholders == speech_segments.size(),
             "splice: " + std::to_string(n_placeholders) + " placeholders vs " +
                 std::to_string(speech_segments.size()) + " speech segments");
  for (const auto& s : speech_segments)
    OMNI_CHECK(s.cols() == d_model(), "splice: speech segment width != d_model");

  Var table = tape.param(model_.params(), "tok_emb");
  std::vector<Var> parts;
  std::vector<ModalityTag> mask;
  std::vector<int> run;
  size_t seg_idx = 0;
  auto flush_run = [&]() {
    if (run.empty()) return;
    parts.push_back(ad::gather_rows(table, run));
    mask.insert(mask.end(), run.size(), ModalityTag::text);
    run.clear();
  };
  for (int t : tokens) {
    if (t == Tokenizer::kSpeech) {
      flush_run();
      const Var& seg = speech_segments[seg_idx++];
      parts.push_back(seg);
      mask.insert(mask.end(), static_cast<size_t>(seg.rows()), ModalityTag::speech);
    } else {
      run.push_back(t);
    }
  }
  flush_run();
  OMNI_CHECK(!parts.empty(), "splice: empty sequence");
  if (mask_out) *mask_out = std::move(mask);
  return parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
}

std::pair<Mat, ContextRepresentations> LanguageCore::forward(
    const EmbeddingSequence& seq) const {
  OMNI_CHECK(all_finite(seq.embeddings), "forward: non-finite embeddings");
  ad::Tape tape;
  Var in = model_.add_positions(tape, tape.var(seq.embeddings), 0);
  auto out = model_.forward(tape, in);
  return {out.logits.val(), ContextRepresentations{out.hidden.val()}};
}

Var LanguageCore::loss_var(ad::Tape& tape, Var input_rows, const std::vector<int>& targets,
                           const std::vector<uint8_t>& loss_mask) const {
  Var in = model_.add_positions(tape, input_rows, 0);
  auto out = model_.forward(tape, in);
  return ad::xent_mean(out.logits, targets, loss_mask);
}

LanguageCore::GenerateResult LanguageCore::generate_text(
    const EmbeddingSequence& prompt, const DecodeConfig& cfg,
    const std::function<void(int, const Eigen::RowVectorXd&)>& on_token) const {
  OMNI_CHECK(cfg.max_len > 0, "generate_text: max_len must be positive");
  OMNI_CHECK(prompt.embeddings.rows() >= 1, "generate_text: empty prompt");
  Rng rng(cfg.seed);
  const Eigen::Index np = prompt.embeddings.rows();
  std::vector<int> generated;
  Mat states;
  const Mat& tok_emb = model_.params().at("tok_emb");
  while (static_cast<int>(generated.size()) < cfg.max_len) {
    Mat input(np + static_cast<Eigen::Index>(generated.size()), d_model());
    input.topRows(np) = prompt.embeddings;
    for (size_t i = 0; i < generated.size(); ++i)
      input.row(np + static_cast<Eigen::Index>(i)) = tok_emb.row(generated[i]);
    ad::Tape tape;
    Var in = model_.add_positions(tape, tape.var(input), 0);
    auto out = model_.forward(tape, in);
    states = out.hidden.val();
    int next = sample_token(out.logits.val().row(states.rows() - 1), cfg, rng);
    if (next == cfg.eos_id) break;
    generated.push_back(next);
    if (on_token) on_token(next, states.row(states.rows() - 1));
  }
  // Ensure H covers every prompt + generated position (the in-loop forward
  // trails the last accepted token).
  const Eigen::Index want = np + static_cast<Eigen::Index>(generated.size());
  if (states.rows() != want) {
    Mat input(want, d_model());
    input.topRows(np) = prompt.embeddings;
    for (size_t i = 0; i < generated.size(); ++i)
      input.row(np + static_cast<Eigen::Index>(i)) = tok_emb.row(generated[i]);
    ad::Tape tape;
    Var in = model_.add_positions(tape, tape.var(input), 0);
    states = model_.forward(tape, in).hidden.val();
  }
  return {std::move(generated), ContextRepresentations{std::move(states)}};
}

}  // namespace omni
