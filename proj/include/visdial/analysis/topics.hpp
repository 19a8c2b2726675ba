#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace visdial {

struct TopicAnnotation {
  std::string image_id;
  std::vector<std::string> topics;  // one label per round
};

/// JSON array of {"image_id": str, "topics": [str] x 10}.
std::vector<TopicAnnotation> load_topic_annotations(std::istream& in);

struct MeanSd {
  double mean = 0;
  double sd = 0;
};

struct TopicContinuity {
  MeanSd topics_per_dialog;
  MeanSd windowed;
  int window = 3;
  int bootstrap = 500;
  std::size_t batch = 40;
};

/// Distinct topics per dialog and mean distinct topics over sliding windows,
/// each summarized as mean +- sd of `bootstrap` resampled batch means. Batch
/// 0 resamples the full annotation set. Resample b draws from its own stream
/// derive_seed(seed, b). Throws EmptyInput, InvalidArgument.
TopicContinuity topic_continuity(std::span<const TopicAnnotation> annotations, int window = 3, int bootstrap = 500,
                                 std::uint64_t seed = 0, std::size_t batch = 40);

struct TopicTransitions {
  double in_order = 0;
  MeanSd permuted;
  int permutations = 0;
};

/// Fraction of consecutive round pairs with different topics (9 per dialog),
/// in order and under `permutations` seeded round shuffles.
TopicTransitions topic_transition_probability(std::span<const TopicAnnotation> annotations, int permutations,
                                              std::uint64_t seed);

/// Mean and sample standard deviation (0 for fewer than two values).
MeanSd mean_sd(std::span<const double> values);

}  // namespace visdial
