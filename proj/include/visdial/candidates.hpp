#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "visdial/dialog.hpp"
#include "visdial/embeddings.hpp"

namespace visdial {

/// Answer counts keyed by normalized text. The first raw spelling seen for a
/// key is kept for display.
class AnswerFrequencyTable {
 public:
  void add(std::string_view raw, std::int64_t n = 1);
  void add_normalized(const std::string& key, std::string_view display, std::int64_t n = 1);

  /// 0 when unseen. The argument is normalized first.
  std::int64_t count(std::string_view raw) const;
  std::int64_t count_key(const std::string& key) const;
  const std::string& display(const std::string& key) const;

  std::size_t distinct() const noexcept { return entries_.size(); }
  std::int64_t total() const noexcept { return total_; }

  /// Keys in ascending lexicographic order.
  std::vector<std::string> sorted_keys() const;
  /// Keys by count descending, ties lexicographic ascending.
  std::vector<std::string> keys_by_frequency() const;

 private:
  struct Entry {
    std::string display;
    std::int64_t count = 0;
  };
  std::unordered_map<std::string, Entry> entries_;
  std::int64_t total_ = 0;
};

AnswerFrequencyTable answer_frequencies(std::span<const Dialog> dialogs, unsigned workers = 1);

/// Display strings of the n most frequent answers (count desc, ties lex asc).
/// Throws NotEnoughAnswers when fewer than n distinct answers exist.
std::vector<std::string> popular_answers(const AnswerFrequencyTable& freq, std::size_t n = 30);

/// Stable question id for round `round` (1-based) of dialog `dialog_index`.
constexpr ItemId question_id(std::size_t dialog_index, int round) noexcept {
  return static_cast<ItemId>(dialog_index) * kRoundsPerDialog + (round - 1);
}

/// Training questions searchable by embedding, with their answers and images.
struct TrainingBank {
  explicit TrainingBank(std::size_t embedding_dim) : index(4 * embedding_dim) {}

  NeighborIndex index;
  std::unordered_map<ItemId, std::string> answers;      // raw answer text
  std::unordered_map<ItemId, std::string> answer_keys;  // normalized answer text
  std::unordered_map<ItemId, std::string> image_ids;
};

/// Indexes every question of `dialogs` under question_id(dialog, round).
TrainingBank build_training_bank(std::span<const Dialog> dialogs, const EmbeddingTable& table, unsigned workers = 1);

enum class Provenance { correct, plausible, popular, random };

std::string_view provenance_name(Provenance p) noexcept;
Provenance provenance_from_name(std::string_view name);

struct CandidateSet {
  std::vector<std::string> options;
  int gt_index = 0;
  std::vector<Provenance> provenance;

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

struct CandidateConfig {
  std::size_t options = 100;
  std::size_t plausible = 50;
  std::size_t popular = 30;
};

/// Builds candidate sets against one training bank. Construction does the
/// per-corpus work once; build() is const and safe to call concurrently.
class CandidateBuilder {
 public:
  CandidateBuilder(const TrainingBank& bank, const AnswerFrequencyTable& freq, CandidateConfig config = {});

  /// Correct + answers of the nearest training questions + popular answers,
  /// deduplicated by normalized text (tag priority correct > plausible >
  /// popular), topped up with uniformly drawn training answers, then
  /// shuffled. `exclude` drops one id (the query itself) from the neighbors.
  /// Throws CorpusTooSmall when the corpus cannot supply enough answers.
  CandidateSet build(const QuestionEmbedding& question, std::string_view gt_answer, std::uint64_t seed,
                     std::optional<ItemId> exclude = std::nullopt) const;

  const std::vector<std::string>& popular() const noexcept { return popular_; }

 private:
  const TrainingBank& bank_;
  const AnswerFrequencyTable& freq_;
  CandidateConfig config_;
  std::vector<std::string> popular_;      // normalized keys
  std::vector<std::string> random_pool_;  // normalized keys, sorted
};

CandidateSet build_candidate_set(const QuestionEmbedding& question, std::string_view gt_answer,
                                 const TrainingBank& bank, const AnswerFrequencyTable& freq, std::uint64_t seed,
                                 CandidateConfig config = {});

struct CandidateRecord {
  std::string image_id;
  int round = 0;
  CandidateSet set;

  friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

/// Candidate sets for every round of `targets`. Each question draws from its
/// own stream derive_seed(seed, image_id, round), so the output does not
/// depend on `workers`. With `targets_in_bank`, targets are the bank's own
/// dialogs and each question is excluded from its own neighbor list.
std::vector<CandidateRecord> build_candidates(std::span<const Dialog> targets, const TrainingBank& bank,
                                              const AnswerFrequencyTable& freq, const EmbeddingTable& table,
                                              CandidateConfig config, std::uint64_t seed, unsigned workers,
                                              bool targets_in_bank);

void write_candidates(std::ostream& out, std::span<const CandidateRecord> records);
std::vector<CandidateRecord> read_candidates(std::istream& in);

/// Frequency of each option in training; unseen options score 0.
std::vector<double> score_answer_prior(std::span<const std::string> options, const AnswerFrequencyTable& freq);

/// Mean cosine similarity of each option's mean embedding to the answers of
/// the k nearest training questions. Zero-norm vectors give similarity 0.
std::vector<double> score_nn_q(std::span<const std::string> options, const QuestionEmbedding& question,
                               const TrainingBank& bank, const EmbeddingTable& table, std::size_t k = 20);

class ImageFeatureTable {
 public:
  /// Throws DimensionMismatch when the feature length disagrees with earlier ones.
  void set(std::string image_id, std::vector<float> feature);
  const std::vector<float>* find(std::string_view image_id) const;
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return features_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> features_;
};

/// JSONL lines of {"image_id": str, "feature": [float]}.
ImageFeatureTable load_image_features(std::istream& in);

/// Like score_nn_q, over the k of the K nearest training questions whose
/// images are closest to `image_feature` (ties by question distance, then id).
std::vector<double> score_nn_qi(std::span<const std::string> options, const QuestionEmbedding& question,
                                std::span<const float> image_feature, const TrainingBank& bank,
                                const ImageFeatureTable& features, const EmbeddingTable& table,
                                std::size_t big_k = 100, std::size_t k = 20);

/// Mean cosine similarity of each option to `reference_answers`.
std::vector<double> mean_similarity_scores(std::span<const std::string> options,
                                           std::span<const std::string> reference_answers,
                                           const EmbeddingTable& table);

double cosine_similarity(std::span<const double> a, std::span<const double> b) noexcept;

}  // namespace visdial
