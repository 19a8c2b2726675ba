#include "visdial/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "visdial/error.hpp"
#include "visdial/parallel.hpp"
#include "visdial/random.hpp"
#include "visdial/text.hpp"

namespace visdial {

using nlohmann::json;

void AnswerFrequencyTable::add(std::string_view raw, std::int64_t n) { add_normalized(normalize_text(raw), raw, n); }

void AnswerFrequencyTable::add_normalized(const std::string& key, std::string_view display, std::int64_t n) {
  if (n < 1) throw Error(Errc::InvalidArgument, "answer counts must be positive");
  auto [it, fresh] = entries_.try_emplace(key);
  if (fresh) it->second.display = std::string(display);
  it->second.count += n;
  total_ += n;
}

std::int64_t AnswerFrequencyTable::count(std::string_view raw) const { return count_key(normalize_text(raw)); }

std::int64_t AnswerFrequencyTable::count_key(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.count;
}

const std::string& AnswerFrequencyTable::display(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(Errc::InvalidArgument, "unknown answer key '" + key + "'");
  return it->second.display;
}

std::vector<std::string> AnswerFrequencyTable::sorted_keys() const {
  std::vector<std::string> keys;
  keys.reserve(entries_.size());
  for (const auto& [k, e] : entries_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<std::string> AnswerFrequencyTable::keys_by_frequency() const {
  std::vector<std::pair<std::int64_t, const std::string*>> order;
  order.reserve(entries_.size());
  for (const auto& [k, e] : entries_) order.emplace_back(e.count, &k);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : *a.second < *b.second;
  });
  std::vector<std::string> keys;
  keys.reserve(order.size());
  for (const auto& [n, k] : order) keys.push_back(*k);
  return keys;
}

AnswerFrequencyTable answer_frequencies(std::span<const Dialog> dialogs, unsigned workers) {
  std::vector<std::string> keys(dialogs.size() * kRoundsPerDialog);
  parallel_for(dialogs.size(), workers, [&](std::size_t i) {
    for (std::size_t r = 0; r < dialogs[i].rounds.size(); ++r)
      keys[i * kRoundsPerDialog + r] = normalize_text(dialogs[i].rounds[r].answer);
  });
  AnswerFrequencyTable freq;
  for (std::size_t i = 0; i < dialogs.size(); ++i)
    for (std::size_t r = 0; r < dialogs[i].rounds.size(); ++r)
      freq.add_normalized(keys[i * kRoundsPerDialog + r], dialogs[i].rounds[r].answer);
  return freq;
}

std::vector<std::string> popular_answers(const AnswerFrequencyTable& freq, std::size_t n) {
  if (n < 1) throw Error(Errc::InvalidArgument, "n must be >= 1");
  if (freq.distinct() < n)
    throw Error(Errc::NotEnoughAnswers, "asked for " + std::to_string(n) + " popular answers, only " +
                                            std::to_string(freq.distinct()) + " distinct answers exist");
  auto keys = freq.keys_by_frequency();
  keys.resize(n);
  for (auto& k : keys) k = freq.display(k);
  return keys;
}

TrainingBank build_training_bank(std::span<const Dialog> dialogs, const EmbeddingTable& table, unsigned workers) {
  const std::size_t n = dialogs.size() * kRoundsPerDialog;
  std::vector<QuestionEmbedding> embeddings(n);
  std::vector<std::string> keys(n);
  parallel_for(dialogs.size(), workers, [&](std::size_t i) {
    for (const auto& r : dialogs[i].rounds) {
      const auto id = static_cast<std::size_t>(question_id(i, r.round_index));
      embeddings[id] = embed_question(preprocess_text(r.question), table);
      keys[id] = normalize_text(r.answer);
    }
  });
  TrainingBank bank(table.dim());
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    for (const auto& r : dialogs[i].rounds) {
      const ItemId id = question_id(i, r.round_index);
      bank.index.add(id, embeddings[static_cast<std::size_t>(id)].vec);
      bank.answers.emplace(id, r.answer);
      bank.answer_keys.emplace(id, std::move(keys[static_cast<std::size_t>(id)]));
      bank.image_ids.emplace(id, dialogs[i].image_id);
    }
  }
  return bank;
}

std::string_view provenance_name(Provenance p) noexcept {
  switch (p) {
    case Provenance::correct: return "correct";
    case Provenance::plausible: return "plausible";
    case Provenance::popular: return "popular";
    case Provenance::random: return "random";
  }
  return "random";
}

Provenance provenance_from_name(std::string_view name) {
  for (auto p : {Provenance::correct, Provenance::plausible, Provenance::popular, Provenance::random})
    if (provenance_name(p) == name) return p;
  throw Error(Errc::SchemaViolation, "unknown provenance '" + std::string(name) + "'");
}

CandidateBuilder::CandidateBuilder(const TrainingBank& bank, const AnswerFrequencyTable& freq, CandidateConfig config)
    : bank_(bank), freq_(freq), config_(config) {
  if (config_.options < 1) throw Error(Errc::InvalidArgument, "option count must be >= 1");
  if (freq_.distinct() + 1 < config_.options)
    throw Error(Errc::CorpusTooSmall, "training corpus has " + std::to_string(freq_.distinct()) +
                                          " distinct answers; " + std::to_string(config_.options) + " options needed");
  if (config_.popular > 0) {
    popular_ = freq_.keys_by_frequency();
    if (popular_.size() < config_.popular)
      throw Error(Errc::NotEnoughAnswers, "not enough distinct answers for the popular list");
    popular_.resize(config_.popular);
  }
  random_pool_ = freq_.sorted_keys();
}

CandidateSet CandidateBuilder::build(const QuestionEmbedding& question, std::string_view gt_answer, std::uint64_t seed,
                                     std::optional<ItemId> exclude) const {
  struct Option {
    std::string key;
    std::string display;
    Provenance tag;
  };
  std::vector<Option> chosen;
  std::unordered_set<std::string> present;
  chosen.reserve(config_.options);
  auto offer = [&](const std::string& key, std::string_view display, Provenance tag) {
    if (present.insert(key).second) chosen.push_back(Option{key, std::string(display), tag});
  };

  offer(normalize_text(gt_answer), gt_answer, Provenance::correct);

  if (config_.plausible > 0) {
    const bool drop_self = exclude && bank_.index.position(*exclude) < bank_.index.size();
    const std::size_t want = std::min(config_.plausible + (drop_self ? 1 : 0), bank_.index.size());
    std::size_t taken = 0;
    for (const auto& nb : knn(question, bank_.index, want)) {
      if (drop_self && nb.id == *exclude) continue;
      if (taken++ == config_.plausible) break;
      offer(bank_.answer_keys.at(nb.id), bank_.answers.at(nb.id), Provenance::plausible);
    }
  }
  for (const auto& key : popular_) offer(key, freq_.display(key), Provenance::popular);

  if (chosen.size() > config_.options) chosen.resize(config_.options);

  const std::size_t available = random_pool_.size() + (freq_.count_key(chosen.front().key) == 0 ? 1 : 0);
  if (available < config_.options)
    throw Error(Errc::CorpusTooSmall, "cannot assemble " + std::to_string(config_.options) + " unique options from " +
                                          std::to_string(available) + " distinct answers");

  Rng rng(seed);
  std::size_t attempts = 0;
  const std::size_t budget = 64 * config_.options + 1024;
  while (chosen.size() < config_.options && attempts++ < budget) {
    const auto& key = random_pool_[rng.below(random_pool_.size())];
    offer(key, freq_.display(key), Provenance::random);
  }
  if (chosen.size() < config_.options) {
    // Dense corpora: draw from the explicit remainder instead of rejecting.
    std::vector<const std::string*> rest;
    for (const auto& key : random_pool_)
      if (!present.contains(key)) rest.push_back(&key);
    rng.shuffle(std::span(rest));
    for (std::size_t i = 0; chosen.size() < config_.options; ++i) offer(*rest[i], freq_.display(*rest[i]), Provenance::random);
  }

  rng.shuffle(std::span(chosen));
  CandidateSet set;
  set.options.reserve(chosen.size());
  set.provenance.reserve(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (chosen[i].tag == Provenance::correct) set.gt_index = static_cast<int>(i);
    set.options.push_back(std::move(chosen[i].display));
    set.provenance.push_back(chosen[i].tag);
  }
  return set;
}

CandidateSet build_candidate_set(const QuestionEmbedding& question, std::string_view gt_answer,
                                 const TrainingBank& bank, const AnswerFrequencyTable& freq, std::uint64_t seed,
                                 CandidateConfig config) {
  return CandidateBuilder(bank, freq, config).build(question, gt_answer, seed);
}

std::vector<CandidateRecord> build_candidates(std::span<const Dialog> targets, const TrainingBank& bank,
                                              const AnswerFrequencyTable& freq, const EmbeddingTable& table,
                                              CandidateConfig config, std::uint64_t seed, unsigned workers,
                                              bool targets_in_bank) {
  const CandidateBuilder builder(bank, freq, config);
  std::vector<CandidateRecord> out(targets.size() * kRoundsPerDialog);
  parallel_for(targets.size(), workers, [&](std::size_t i) {
    const Dialog& d = targets[i];
    for (const auto& r : d.rounds) {
      auto& rec = out[i * kRoundsPerDialog + static_cast<std::size_t>(r.round_index - 1)];
      rec.image_id = d.image_id;
      rec.round = r.round_index;
      std::optional<ItemId> self;
      if (targets_in_bank) self = question_id(i, r.round_index);
      rec.set = builder.build(embed_question(preprocess_text(r.question), table), r.answer,
                              derive_seed(seed, d.image_id, r.round_index), self);
    }
  });
  return out;
}

void write_candidates(std::ostream& out, std::span<const CandidateRecord> records) {
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["image_id"] = rec.image_id;
    j["round"] = rec.round;
    j["gt_index"] = rec.set.gt_index;
    j["answer_options"] = rec.set.options;
    auto prov = nlohmann::ordered_json::array();
    for (auto p : rec.set.provenance) prov.push_back(std::string(provenance_name(p)));
    j["provenance"] = std::move(prov);
    out << j.dump() << '\n';
  }
}

std::vector<CandidateRecord> read_candidates(std::istream& in) {
  std::vector<CandidateRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedInput, "candidates line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      CandidateRecord rec;
      rec.image_id = j.at("image_id").get<std::string>();
      rec.round = j.at("round").get<int>();
      rec.set.gt_index = j.at("gt_index").get<int>();
      rec.set.options = j.at("answer_options").get<std::vector<std::string>>();
      if (auto p = j.find("provenance"); p != j.end() && !p->is_null()) {
        for (const auto& name : *p) rec.set.provenance.push_back(provenance_from_name(name.get<std::string>()));
        if (rec.set.provenance.size() != rec.set.options.size())
          throw Error(Errc::SchemaViolation, "provenance length differs from answer_options");
      }
      if (rec.set.gt_index < 0 || rec.set.gt_index >= static_cast<int>(rec.set.options.size()))
        throw Error(Errc::SchemaViolation, "gt_index out of range");
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaViolation, "candidates line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "candidates line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<double> score_answer_prior(std::span<const std::string> options, const AnswerFrequencyTable& freq) {
  std::vector<double> scores;
  scores.reserve(options.size());
  for (const auto& o : options) scores.push_back(static_cast<double>(freq.count(o)));
  return scores;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) noexcept {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> mean_similarity_scores(std::span<const std::string> options,
                                           std::span<const std::string> reference_answers,
                                           const EmbeddingTable& table) {
  std::vector<std::vector<double>> refs;
  refs.reserve(reference_answers.size());
  for (const auto& a : reference_answers) refs.push_back(embed_answer_mean(preprocess_text(a), table));
  std::vector<double> scores;
  scores.reserve(options.size());
  for (const auto& o : options) {
    const auto v = embed_answer_mean(preprocess_text(o), table);
    double sum = 0;
    for (const auto& r : refs) sum += cosine_similarity(v, r);
    scores.push_back(refs.empty() ? 0.0 : sum / static_cast<double>(refs.size()));
  }
  return scores;
}

std::vector<double> score_nn_q(std::span<const std::string> options, const QuestionEmbedding& question,
                               const TrainingBank& bank, const EmbeddingTable& table, std::size_t k) {
  std::vector<std::string> refs;
  for (const auto& nb : knn(question, bank.index, k)) refs.push_back(bank.answers.at(nb.id));
  return mean_similarity_scores(options, refs, table);
}

void ImageFeatureTable::set(std::string image_id, std::vector<float> feature) {
  if (feature.empty()) throw Error(Errc::DimensionMismatch, "empty feature for image '" + image_id + "'");
  if (dim_ == 0) dim_ = feature.size();
  if (feature.size() != dim_)
    throw Error(Errc::DimensionMismatch, "feature for image '" + image_id + "' has length " +
                                             std::to_string(feature.size()) + ", expected " + std::to_string(dim_));
  features_.insert_or_assign(std::move(image_id), std::move(feature));
}

const std::vector<float>* ImageFeatureTable::find(std::string_view image_id) const {
  auto it = features_.find(std::string(image_id));
  return it == features_.end() ? nullptr : &it->second;
}

ImageFeatureTable load_image_features(std::istream& in) {
  ImageFeatureTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto& id = j.at("image_id");
      table.set(id.is_string() ? id.get<std::string>() : id.dump(), j.at("feature").get<std::vector<float>>());
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedLine, "features line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "features line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

std::vector<double> score_nn_qi(std::span<const std::string> options, const QuestionEmbedding& question,
                                std::span<const float> image_feature, const TrainingBank& bank,
                                const ImageFeatureTable& features, const EmbeddingTable& table, std::size_t big_k,
                                std::size_t k) {
  if (k < 1 || k > big_k)
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " must lie in [1, K=" + std::to_string(big_k) + "]");
  if (image_feature.size() != features.dim())
    throw Error(Errc::DimensionMismatch, "query image feature has length " + std::to_string(image_feature.size()));
  struct Candidate {
    double image_distance;
    double question_distance;
    ItemId id;
  };
  std::vector<Candidate> pool;
  for (const auto& nb : knn(question, bank.index, big_k)) {
    const auto& image_id = bank.image_ids.at(nb.id);
    const auto* f = features.find(image_id);
    if (!f) throw Error(Errc::MissingImageFeature, "no image feature for image_id '" + image_id + "'");
    pool.push_back(Candidate{squared_distance(image_feature, *f), nb.distance, nb.id});
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.image_distance != b.image_distance) return a.image_distance < b.image_distance;
    if (a.question_distance != b.question_distance) return a.question_distance < b.question_distance;
    return a.id < b.id;
  });
  std::vector<std::string> refs;
  for (std::size_t i = 0; i < k; ++i) refs.push_back(bank.answers.at(pool[i].id));
  return mean_similarity_scores(options, refs, table);
}

}  // namespace visdial
