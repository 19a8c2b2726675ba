#include "visdial/analysis/topics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

#include "visdial/dialog.hpp"
#include "visdial/error.hpp"
#include "visdial/random.hpp"

namespace visdial {

namespace {

double distinct(std::span<const std::string> labels) {
  std::set<std::string_view> s(labels.begin(), labels.end());
  return static_cast<double>(s.size());
}

double windowed_distinct(std::span<const std::string> labels, int window) {
  const std::size_t w = static_cast<std::size_t>(window);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + w <= labels.size(); ++i, ++n) sum += distinct(labels.subspan(i, w));
  return sum / static_cast<double>(n);
}

std::size_t transitions(std::span<const std::string> labels) {
  std::size_t t = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) t += labels[i] != labels[i - 1];
  return t;
}

void check(std::span<const TopicAnnotation> annotations) {
  if (annotations.empty()) throw Error(Errc::EmptyInput, "no topic annotations");
  for (const auto& a : annotations)
    if (a.topics.size() != kRoundsPerDialog)
      throw Error(Errc::SchemaViolation, "annotation image_id='" + a.image_id + "' has " +
                                             std::to_string(a.topics.size()) + " topics, expected 10");
}

}  // namespace

MeanSd mean_sd(std::span<const double> values) {
  MeanSd r;
  if (values.empty()) return r;
  double sum = 0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double sq = 0;
  for (double v : values) sq += (v - r.mean) * (v - r.mean);
  r.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return r;
}

std::vector<TopicAnnotation> load_topic_annotations(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::MalformedInput, std::string("topic annotations: ") + e.what());
  }
  if (!doc.is_array()) throw Error(Errc::SchemaViolation, "topic annotations must be a JSON array");
  std::vector<TopicAnnotation> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      TopicAnnotation a;
      const auto& id = doc[i].at("image_id");
      a.image_id = id.is_string() ? id.get<std::string>() : id.dump();
      a.topics = doc[i].at("topics").get<std::vector<std::string>>();
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::SchemaViolation, "topic annotation #" + std::to_string(i) + ": " + e.what());
    }
  }
  check(out);
  return out;
}

TopicContinuity topic_continuity(std::span<const TopicAnnotation> annotations, int window, int bootstrap,
                                 std::uint64_t seed, std::size_t batch) {
  check(annotations);
  if (window < 1 || window > kRoundsPerDialog) throw Error(Errc::InvalidArgument, "window must lie in [1, 10]");
  if (bootstrap < 1) throw Error(Errc::InvalidArgument, "bootstrap must be >= 1");
  std::vector<double> topics, windowed;
  for (const auto& a : annotations) {
    topics.push_back(distinct(a.topics));
    windowed.push_back(windowed_distinct(a.topics, window));
  }
  const std::size_t n = annotations.size();
  const std::size_t draw = batch == 0 ? n : batch;
  std::vector<double> topic_means, window_means;
  topic_means.reserve(static_cast<std::size_t>(bootstrap));
  window_means.reserve(static_cast<std::size_t>(bootstrap));
  for (int b = 0; b < bootstrap; ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    double ts = 0, ws = 0;
    for (std::size_t i = 0; i < draw; ++i) {
      const std::size_t pick = rng.below(n);
      ts += topics[pick];
      ws += windowed[pick];
    }
    topic_means.push_back(ts / static_cast<double>(draw));
    window_means.push_back(ws / static_cast<double>(draw));
  }
  TopicContinuity r;
  r.topics_per_dialog = mean_sd(topic_means);
  r.windowed = mean_sd(window_means);
  r.window = window;
  r.bootstrap = bootstrap;
  r.batch = draw;
  return r;
}

TopicTransitions topic_transition_probability(std::span<const TopicAnnotation> annotations, int permutations,
                                              std::uint64_t seed) {
  check(annotations);
  if (permutations < 1) throw Error(Errc::InvalidArgument, "permutations must be >= 1");
  const double possible = static_cast<double>((kRoundsPerDialog - 1) * annotations.size());
  std::size_t in_order = 0;
  for (const auto& a : annotations) in_order += transitions(a.topics);

  std::vector<double> permuted;
  permuted.reserve(static_cast<std::size_t>(permutations));
  std::vector<std::string> shuffled;
  for (int p = 0; p < permutations; ++p) {
    std::size_t t = 0;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      shuffled = annotations[i].topics;
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p), i));
      rng.shuffle(std::span(shuffled));
      t += transitions(shuffled);
    }
    permuted.push_back(static_cast<double>(t) / possible);
  }
  TopicTransitions r;
  r.in_order = static_cast<double>(in_order) / possible;
  r.permuted = mean_sd(permuted);
  r.permutations = permutations;
  return r;
}

}  // namespace visdial
