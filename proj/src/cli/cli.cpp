#include "visdial/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "visdial/analysis/ngram_lm.hpp"
#include "visdial/analysis/prefix_tree.hpp"
#include "visdial/analysis/shuffle.hpp"
#include "visdial/analysis/stats.hpp"
#include "visdial/analysis/topics.hpp"
#include "visdial/candidates.hpp"
#include "visdial/collect/server.hpp"
#include "visdial/collect/store.hpp"
#include "visdial/dataset_io.hpp"
#include "visdial/embeddings.hpp"
#include "visdial/error.hpp"
#include "visdial/metrics.hpp"
#include "visdial/parallel.hpp"
#include "visdial/text.hpp"

namespace visdial {
namespace {

namespace fs = std::filesystem;

struct RunConfig {
  std::string data;
  std::string train;
  std::string embeddings;
  std::string features;
  std::string candidates;
  std::string scores;
  std::string annotations;
  std::string images;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t k = 20;
  std::size_t big_k = 100;
  std::size_t plausible = 50;
  std::size_t popular = 30;
  std::size_t options = 100;
  std::string baseline;
  int dialog_k = 5;
  int curve_max_k = 10;
  int lm_order = 3;
  std::string smoothing = "interpolated";
  double lm_k = 0.01;
  int min_count = 1;
  int lm_permutations = 100;
  int bootstrap = 500;
  std::size_t batch = 40;
  int window = 3;
  int topic_permutations = 1000;
  int prefix_depth = 4;
  std::uint64_t prefix_min_count = 5;
  unsigned workers = default_workers();
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;
  int solo_quota = 10;
  double heartbeat_timeout = 120;
};

/// Files are written to temporaries and renamed into place on commit();
/// anything uncommitted is removed.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}
  ~Outputs() {
    std::error_code ec;
    for (const auto& [tmp, final_path] : pending_) fs::remove(tmp, ec);
  }

  fs::path write(const std::string& name, const std::string& content) {
    fs::create_directories(dir_);
    fs::path final_path = dir_ / name;
    fs::path tmp = final_path;
    tmp += ".partial";
    pending_.emplace_back(tmp, final_path);
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    return final_path;
  }

  void commit() {
    for (const auto& [tmp, final_path] : pending_)
      if (fs::is_directory(final_path)) throw Error(Errc::Io, "output path is a directory: " + final_path.string());
    for (const auto& [tmp, final_path] : pending_) fs::rename(tmp, final_path);
    pending_.clear();
  }

 private:
  fs::path dir_;
  std::vector<std::pair<fs::path, fs::path>> pending_;
};

std::ifstream open_input(const std::string& path, const char* what) {
  if (path.empty()) throw Error(Errc::InvalidArgument, std::string("--") + what + " is required");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return in;
}

std::vector<Dialog> load_dialogs(const std::string& path, const char* what = "data") {
  if (path.empty()) throw Error(Errc::InvalidArgument, std::string("--") + what + " is required");
  return load_dataset_file(path);
}

EmbeddingTable load_embeddings(const std::string& path) {
  auto in = open_input(path, "embeddings");
  return load_embedding_table(in, 0);
}

std::vector<CandidateRecord> load_candidate_file(const std::string& path) {
  auto in = open_input(path, "candidates");
  return read_candidates(in);
}

ScoreMatrix load_score_file(const std::string& path, const std::vector<CandidateRecord>& records) {
  auto in = open_input(path, "scores");
  return load_scores(in, manifest_from_candidates(records));
}

Smoothing parse_smoothing(const std::string& s) {
  if (s == "none") return Smoothing::none;
  if (s == "add-k") return Smoothing::add_k;
  return Smoothing::interpolated;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

int cmd_validate(const RunConfig& c) {
  auto dialogs = load_dialogs(c.data);
  std::cout << "valid: " << dialogs.size() << " dialogs, " << dialogs.size() * kRoundsPerDialog << " rounds\n";
  return kExitOk;
}

int cmd_stats(const RunConfig& c) {
  auto dialogs = load_dialogs(c.data);
  StatsReport report = dataset_stats(dialogs, c.workers);
  Outputs out(c.out);
  out.write("stats.json", dump(stats_to_json(report)));
  out.write("lengths_by_round.csv", lengths_by_round_csv(report));
  out.write("question_types_by_round.csv", question_types_by_round_csv(report));
  out.write("coverage.csv", coverage_csv(report));
  out.write("pronouns_by_round.csv", pronouns_by_round_csv(report));
  out.write("question_prefixes.json",
            dump(prefix_tree_to_json(ngram_prefix_tree(dialogs, Side::question, c.prefix_depth), c.prefix_min_count)));
  out.write("answer_prefixes.json",
            dump(prefix_tree_to_json(ngram_prefix_tree(dialogs, Side::answer, c.prefix_depth), c.prefix_min_count)));
  out.commit();
  std::cout << "stats: " << report.dialogs << " dialogs, " << report.unique_answer_count << " unique answers -> "
            << c.out << "\n";
  return kExitOk;
}

int cmd_candidates(const RunConfig& c) {
  auto targets = load_dialogs(c.data);
  const bool same = c.train.empty() || fs::path(c.train) == fs::path(c.data);
  std::vector<Dialog> train_storage;
  if (!same) train_storage = load_dialogs(c.train, "train");
  std::span<const Dialog> train = same ? std::span<const Dialog>(targets) : std::span<const Dialog>(train_storage);
  EmbeddingTable table = load_embeddings(c.embeddings);

  AnswerFrequencyTable freq = answer_frequencies(train, c.workers);
  TrainingBank bank = build_training_bank(train, table, c.workers);
  CandidateConfig config{c.options, c.plausible, c.popular};
  auto records = build_candidates(targets, bank, freq, table, config, c.seed, c.workers, same);

  std::ostringstream text;
  write_candidates(text, records);
  Outputs out(c.out);
  auto path = out.write("candidates.jsonl", text.str());
  out.commit();
  std::cout << "candidates: " << records.size() << " questions -> " << path.string() << "\n";
  return kExitOk;
}

ScoreMatrix baseline_scores(const RunConfig& c, const std::vector<CandidateRecord>& records) {
  auto targets = load_dialogs(c.data);
  auto train = load_dialogs(c.train.empty() ? c.data : c.train, "train");
  std::map<std::pair<std::string, int>, const std::string*> questions;
  for (const auto& d : targets)
    for (const auto& r : d.rounds) questions[{d.image_id, r.round_index}] = &r.question;

  AnswerFrequencyTable freq = answer_frequencies(train, c.workers);
  const bool prior = c.baseline == "answer-prior";
  std::optional<EmbeddingTable> table;
  std::optional<TrainingBank> bank;
  ImageFeatureTable features;
  if (!prior) {
    table = load_embeddings(c.embeddings);
    bank = build_training_bank(train, *table, c.workers);
    if (c.baseline == "nn-qi") {
      auto in = open_input(c.features, "features");
      features = load_image_features(in);
    }
  }

  ScoreMatrix scores(records.size());
  parallel_for(records.size(), c.workers, [&](std::size_t i) {
    const auto& rec = records[i];
    ScoreEntry& e = scores[i];
    e.image_id = rec.image_id;
    e.round = rec.round;
    e.gt_index = rec.set.gt_index;
    if (prior) {
      e.scores = score_answer_prior(rec.set.options, freq);
      return;
    }
    auto q = questions.find({rec.image_id, rec.round});
    if (q == questions.end())
      throw Error(Errc::UnknownQuestion, "(image_id='" + rec.image_id + "', round " + std::to_string(rec.round) +
                                             ") is not in --data");
    QuestionEmbedding qe = embed_question(preprocess_text(*q->second), *table);
    if (c.baseline == "nn-q") {
      e.scores = score_nn_q(rec.set.options, qe, *bank, *table, c.k);
    } else {
      const auto* feature = features.find(rec.image_id);
      if (!feature) throw Error(Errc::MissingImageFeature, "no image feature for image_id='" + rec.image_id + "'");
      e.scores = score_nn_qi(rec.set.options, qe, *feature, *bank, features, *table, c.big_k, c.k);
    }
  });
  return scores;
}

int cmd_rank(const RunConfig& c) {
  auto records = load_candidate_file(c.candidates);
  Outputs out(c.out);
  ScoreMatrix scores;
  std::string label = "scores";
  if (!c.baseline.empty()) {
    scores = baseline_scores(c, records);
    std::ostringstream text;
    write_scores(text, scores);
    out.write("scores_" + c.baseline + ".jsonl", text.str());
    label = c.baseline;
  } else {
    scores = load_score_file(c.scores, records);
  }
  RankReport report = evaluate(scores);
  auto j = report_to_json(report);
  out.write(c.baseline.empty() ? "report.json" : "report_" + c.baseline + ".json", dump(j));
  out.commit();
  std::cout << report_table(report, label);
  return kExitOk;
}

int cmd_dialog_eval(const RunConfig& c) {
  auto records = load_candidate_file(c.candidates);
  ScoreMatrix scores = load_score_file(c.scores, records);
  auto per_dialog = ranks_by_dialog(scores);
  DialogReport report = dialog_eval(per_dialog, c.dialog_k, c.curve_max_k);
  Outputs out(c.out);
  out.write("dialog_report.json", dump(report_to_json(report)));
  out.commit();
  std::cout << "dialogs: " << report.dialogs << "  R@" << report.k
            << " rounds correct: " << report.rounds_correct_mean
            << "  first failure round: " << report.mean_first_failure_round << "\n";
  return kExitOk;
}

int cmd_lm(const RunConfig& c) {
  auto test = load_dialogs(c.data);
  auto train = c.train.empty() ? test : load_dialogs(c.train, "train");
  LmConfig config{c.lm_order, parse_smoothing(c.smoothing), c.lm_k, c.min_count};
  auto train_tok = tokenize_dialogs(train, c.workers);
  auto test_tok = tokenize_dialogs(test, c.workers);
  NgramLM lm = train_lm(lm_training_sequences(train_tok), config);
  ShuffleResult r = shuffle_classification(lm, test_tok, c.lm_permutations, c.seed, c.workers);

  nlohmann::ordered_json j;
  j["lm"] = {{"order", c.lm_order}, {"smoothing", c.smoothing}, {"k", c.lm_k}, {"min_count", c.min_count},
             {"vocabulary", lm.vocabulary().size()}};
  j["dialogs"] = test.size();
  j["permutations"] = r.permutations;
  j["perplexity_original"] = r.ppl_original;
  j["perplexity_shuffled"] = {{"mean", r.ppl_shuffled.mean}, {"sd", r.ppl_shuffled.sd}};
  j["classification_accuracy"] = {{"mean", r.accuracy}, {"sd", r.accuracy_sd}};
  j["shuffled_higher_fraction"] = r.shuffled_higher_fraction;
  j["pairs"] = r.pairs;
  Outputs out(c.out);
  out.write("lm.json", dump(j));
  out.commit();
  std::cout << "perplexity original " << r.ppl_original << ", shuffled " << r.ppl_shuffled.mean << " +- "
            << r.ppl_shuffled.sd << ", accuracy " << r.accuracy << "\n";
  return kExitOk;
}

int cmd_topics(const RunConfig& c) {
  auto in = open_input(c.annotations, "annotations");
  auto ann = load_topic_annotations(in);
  TopicContinuity cont = topic_continuity(ann, c.window, c.bootstrap, c.seed, c.batch);
  TopicTransitions tr = topic_transition_probability(ann, c.topic_permutations, derive_seed(c.seed, 1));

  nlohmann::ordered_json j;
  j["dialogs"] = ann.size();
  j["continuity"] = {{"bootstrap", cont.bootstrap},
                     {"batch", cont.batch},
                     {"window", cont.window},
                     {"topics_per_dialog", {{"mean", cont.topics_per_dialog.mean}, {"sd", cont.topics_per_dialog.sd}}},
                     {"topics_per_window", {{"mean", cont.windowed.mean}, {"sd", cont.windowed.sd}}}};
  j["transitions"] = {{"permutations", tr.permutations},
                      {"in_order", tr.in_order},
                      {"permuted", {{"mean", tr.permuted.mean}, {"sd", tr.permuted.sd}}}};
  Outputs out(c.out);
  out.write("topics.json", dump(j));
  out.commit();
  std::cout << "topics per dialog " << cont.topics_per_dialog.mean << " +- " << cont.topics_per_dialog.sd
            << ", transition probability " << tr.in_order << " vs permuted " << tr.permuted.mean << "\n";
  return kExitOk;
}

int cmd_serve(const RunConfig& c) {
  collect::ServerConfig config;
  config.address = c.address;
  config.port = c.port;
  config.data_dir = c.out;
  config.threads = static_cast<int>(c.workers);
  config.collect.seed = c.seed;
  config.collect.solo_quota = c.solo_quota;
  config.collect.heartbeat_timeout_ms = static_cast<std::int64_t>(c.heartbeat_timeout * 1000);
  config.handle_signals = true;
  if (!c.images.empty()) {
    auto in = open_input(c.images, "images");
    std::stringstream text;
    text << in.rdbuf();
    auto images = collect::parse_image_manifest(text.str());
    collect::SessionStore(config.data_dir).append_images(images);
  }
  collect::Server server(config);
  server.start();
  std::cout << "listening on " << c.address << ":" << server.port() << " (websocket /ws), data in " << c.out
            << std::endl;
  server.wait();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  RunConfig c;
  CLI::App app{"Visual dialog benchmark and collection toolkit", "visdial"};
  app.set_config("--config", "", "TOML or INI file with flag values; command-line flags override it");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto data = [&](CLI::App* s, const char* help = "dataset file (.json or .jsonl)") {
    return s->add_option("--data", c.data, help)->check(CLI::ExistingFile);
  };
  auto out = [&](CLI::App* s) { return s->add_option("--out", c.out, "output directory"); };
  auto seed = [&](CLI::App* s) { return s->add_option("--seed", c.seed, "random seed"); };
  auto workers = [&](CLI::App* s) {
    return s->add_option("--workers", c.workers, "worker threads; outputs do not depend on it")
        ->check(CLI::PositiveNumber);
  };
  std::map<CLI::App*, int (*)(const RunConfig&)> commands;

  auto* validate = app.add_subcommand("validate", "check a dataset file against the dialog schema");
  data(validate)->required();
  commands[validate] = cmd_validate;

  auto* stats = app.add_subcommand("stats", "dataset statistics, coverage curve, question types and prefix trees");
  data(stats)->required();
  out(stats);
  workers(stats);
  stats->add_option("--prefix-depth", c.prefix_depth, "prefix tree depth in tokens")->check(CLI::PositiveNumber);
  stats->add_option("--prefix-min-count", c.prefix_min_count, "drop prefix tree nodes rarer than this");
  commands[stats] = cmd_stats;

  auto* cand = app.add_subcommand("candidates", "build 100-way candidate answer sets for every question");
  data(cand, "dialogs to build candidates for")->required();
  cand->add_option("--train", c.train, "dialogs supplying neighbors and answers (default: --data)")
      ->check(CLI::ExistingFile);
  cand->add_option("--embeddings", c.embeddings, "word vectors, text format")->required()->check(CLI::ExistingFile);
  cand->add_option("--plausible", c.plausible, "answers of nearest-neighbor questions");
  cand->add_option("--popular", c.popular, "most frequent answers");
  cand->add_option("--options", c.options, "options per question")->check(CLI::PositiveNumber);
  out(cand);
  seed(cand);
  workers(cand);
  commands[cand] = cmd_candidates;

  auto* rank = app.add_subcommand("rank", "retrieval metrics (MRR, R@1/5/10, mean rank) for a score file or baseline");
  rank->add_option("--candidates", c.candidates, "candidate sets (JSONL)")->required()->check(CLI::ExistingFile);
  auto* scores_opt = rank->add_option("--scores", c.scores, "model scores (JSONL)")->check(CLI::ExistingFile);
  auto* baseline_opt = rank->add_option("--baseline", c.baseline, "score with a built-in baseline instead")
                           ->check(CLI::IsMember({"answer-prior", "nn-q", "nn-qi"}));
  scores_opt->excludes(baseline_opt);
  data(rank, "dialogs the candidates were built for (baselines)");
  rank->add_option("--train", c.train, "training dialogs for baselines (default: --data)")->check(CLI::ExistingFile);
  rank->add_option("--embeddings", c.embeddings, "word vectors (nn-q, nn-qi)")->check(CLI::ExistingFile);
  rank->add_option("--features", c.features, "image features, JSONL (nn-qi)")->check(CLI::ExistingFile);
  rank->add_option("--k", c.k, "neighbors whose answers are averaged")->check(CLI::PositiveNumber);
  rank->add_option("--big-k", c.big_k, "question neighbors re-ranked by image distance (nn-qi)")
      ->check(CLI::PositiveNumber);
  out(rank);
  workers(rank);
  commands[rank] = cmd_rank;

  auto* deval = app.add_subcommand("dialog-eval", "dialog-level success: rounds correct and first failure round");
  deval->add_option("--candidates", c.candidates, "candidate sets (JSONL)")->required()->check(CLI::ExistingFile);
  deval->add_option("--scores", c.scores, "model scores (JSONL)")->required()->check(CLI::ExistingFile);
  deval->add_option("--k", c.dialog_k, "a round counts as correct when the answer ranks within k")
      ->check(CLI::PositiveNumber);
  deval->add_option("--curve-max-k", c.curve_max_k, "also report k = 1..this (0 disables)");
  out(deval);
  commands[deval] = cmd_dialog_eval;

  auto* lm = app.add_subcommand("lm", "n-gram question model: perplexity of original vs shuffled dialogs");
  data(lm, "dialogs to evaluate")->required();
  lm->add_option("--train", c.train, "dialogs to train on (default: --data)")->check(CLI::ExistingFile);
  lm->add_option("--lm-order", c.lm_order, "n-gram order")->check(CLI::Range(1, 8));
  lm->add_option("--smoothing", c.smoothing, "smoothing")->check(CLI::IsMember({"none", "add-k", "interpolated"}));
  lm->add_option("--lm-k", c.lm_k, "pseudo-count")->check(CLI::NonNegativeNumber);
  lm->add_option("--min-count", c.min_count, "vocabulary frequency threshold")->check(CLI::PositiveNumber);
  lm->add_option("--permutations", c.lm_permutations, "shuffled versions of every dialog")
      ->check(CLI::PositiveNumber);
  out(lm);
  seed(lm);
  workers(lm);
  commands[lm] = cmd_lm;

  auto* topics = app.add_subcommand("topics", "topic continuity and transition probability from annotations");
  topics->add_option("--annotations", c.annotations, "topic annotations (JSON array)")
      ->required()
      ->check(CLI::ExistingFile);
  topics->add_option("--bootstrap", c.bootstrap, "bootstrap samples")->check(CLI::PositiveNumber);
  topics->add_option("--batch", c.batch, "dialogs per bootstrap sample (0 = all)");
  topics->add_option("--window", c.window, "rounds per window")->check(CLI::Range(1, kRoundsPerDialog));
  topics->add_option("--permutations", c.topic_permutations, "round permutations per dialog")
      ->check(CLI::PositiveNumber);
  out(topics);
  seed(topics);
  commands[topics] = cmd_topics;

  auto* serve = app.add_subcommand("serve", "two-person chat collection server (websocket /ws + HTTP)");
  serve->add_option("--address", c.address, "bind address");
  serve->add_option("--port", c.port, "port (0 picks a free one)");
  serve->add_option("--images", c.images, "image manifest (JSONL) to enqueue")->check(CLI::ExistingFile);
  serve->add_option("--solo-quota", c.solo_quota, "messages asked of a worker whose partner left")
      ->check(CLI::PositiveNumber);
  serve->add_option("--heartbeat-timeout", c.heartbeat_timeout, "seconds without a frame before a worker is dropped")
      ->check(CLI::PositiveNumber);
  out(serve)->description("data directory (event logs, dialogs, discarded sessions)");
  seed(serve);
  workers(serve);
  commands[serve] = cmd_serve;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  for (auto* sub : app.get_subcommands()) {
    try {
      if (sub == rank && c.baseline.empty() && c.scores.empty()) {
        std::cerr << "rank: one of --scores or --baseline is required\n";
        return kExitUsage;
      }
      return commands.at(sub)(c);
    } catch (const std::exception& e) {
      std::cerr << sub->get_name() << ": " << e.what() << "\n";
      return kExitInvalid;
    }
  }
  return kExitUsage;
}

}  // namespace visdial
