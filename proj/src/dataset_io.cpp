#include "visdial/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "visdial/error.hpp"
#include "visdial/random.hpp"

namespace visdial {

using nlohmann::json;

namespace {

std::string describe_position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col) + " (byte " + std::to_string(byte) + ")";
}

[[noreturn]] void schema(std::size_t position, const json& j, const std::string& what) {
  std::string who = "dialog #" + std::to_string(position);
  if (j.is_object()) {
    if (auto it = j.find("image_id"); it != j.end()) who += " image_id='" + (it->is_string() ? it->get<std::string>() : it->dump()) + "'";
  }
  throw Error(Errc::SchemaViolation, who + ": " + what);
}

const json& field(const json& obj, const char* key, std::size_t position, const json& owner) {
  auto it = obj.find(key);
  if (it == obj.end()) schema(position, owner, std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key, std::size_t position, const json& owner) {
  const json& v = field(obj, key, position, owner);
  if (!v.is_string()) schema(position, owner, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

nlohmann::ordered_json dialog_to_json(const Dialog& d) {
  nlohmann::ordered_json j;
  j["image_id"] = d.image_id;
  j["image_url"] = d.image_url ? nlohmann::ordered_json(*d.image_url) : nlohmann::ordered_json(nullptr);
  j["caption"] = d.caption;
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& r : d.rounds) {
    nlohmann::ordered_json jr;
    jr["question"] = r.question;
    jr["answer"] = r.answer;
    if (r.candidates) {
      jr["answer_options"] = r.candidates->options;
      jr["gt_index"] = r.candidates->gt_index;
    } else {
      jr["answer_options"] = nullptr;
      jr["gt_index"] = nullptr;
    }
    rounds.push_back(std::move(jr));
  }
  j["dialog"] = std::move(rounds);
  return j;
}

Dialog dialog_from_json(const json& j, std::size_t position) {
  if (!j.is_object()) schema(position, j, "dialog must be an object");
  Dialog d;
  d.image_id = string_field(j, "image_id", position, j);
  const json& url = field(j, "image_url", position, j);
  if (url.is_string()) {
    d.image_url = url.get<std::string>();
  } else if (!url.is_null()) {
    schema(position, j, "field 'image_url' must be a string or null");
  }
  d.caption = string_field(j, "caption", position, j);
  const json& rounds = field(j, "dialog", position, j);
  if (!rounds.is_array()) schema(position, j, "field 'dialog' must be an array");
  if (rounds.size() != kRoundsPerDialog)
    schema(position, j, "expected 10 rounds, found " + std::to_string(rounds.size()));
  int index = 0;
  for (const auto& jr : rounds) {
    ++index;
    if (!jr.is_object()) schema(position, j, "round " + std::to_string(index) + " must be an object");
    QaRound r;
    r.round_index = index;
    r.question = string_field(jr, "question", position, j);
    r.answer = string_field(jr, "answer", position, j);
    const json& opts = field(jr, "answer_options", position, j);
    const json& gt = field(jr, "gt_index", position, j);
    if (opts.is_null() != gt.is_null())
      schema(position, j, "round " + std::to_string(index) + ": answer_options and gt_index must both be null or both set");
    if (!opts.is_null()) {
      if (!opts.is_array() || !std::all_of(opts.begin(), opts.end(), [](const json& o) { return o.is_string(); }))
        schema(position, j, "round " + std::to_string(index) + ": answer_options must be an array of strings");
      if (!gt.is_number_integer()) schema(position, j, "round " + std::to_string(index) + ": gt_index must be an integer");
      r.candidates = AnswerOptions{opts.get<std::vector<std::string>>(), gt.get<int>()};
    }
    d.rounds.push_back(std::move(r));
  }
  validate_dialog(d);
  return d;
}

std::vector<Dialog> parse_dataset(std::istream& in, DatasetFormat format) {
  std::vector<Dialog> dialogs;
  if (format == DatasetFormat::json) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedInput, describe_position(text, e.byte) + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(Errc::SchemaViolation, "top-level value must be an object");
    if (auto v = doc.find("version"); v == doc.end() || !v->is_string())
      throw Error(Errc::SchemaViolation, "missing string field 'version'");
    auto ds = doc.find("dialogs");
    if (ds == doc.end() || !ds->is_array()) throw Error(Errc::SchemaViolation, "missing array field 'dialogs'");
    dialogs.reserve(ds->size());
    for (std::size_t i = 0; i < ds->size(); ++i) dialogs.push_back(dialog_from_json((*ds)[i], i));
    return dialogs;
  }

  std::string line;
  std::size_t lineno = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedInput, "line " + std::to_string(lineno) + ", column " + std::to_string(e.byte) +
                                            " (byte " + std::to_string(line_offset + e.byte) + "): " + e.what());
    }
    dialogs.push_back(dialog_from_json(j, dialogs.size()));
  }
  return dialogs;
}

std::vector<Dialog> dialogs_from_release_json(const json& doc) {
  const json& data = doc.at("data");
  const auto& questions = data.at("questions");
  const auto& answers = data.at("answers");
  auto text_at = [](const json& pool, const json& idx, const char* what) -> std::string {
    if (!idx.is_number_integer() || idx.get<long long>() < 0 || idx.get<std::size_t>() >= pool.size())
      throw Error(Errc::SchemaViolation, std::string("bad ") + what + " index " + idx.dump());
    return pool[idx.get<std::size_t>()].get<std::string>();
  };
  std::vector<Dialog> out;
  out.reserve(data.at("dialogs").size());
  for (const auto& jd : data.at("dialogs")) {
    Dialog d;
    const auto& id = jd.at("image_id");
    d.image_id = id.is_string() ? id.get<std::string>() : id.dump();
    d.caption = jd.at("caption").get<std::string>();
    int index = 0;
    for (const auto& jr : jd.at("dialog")) {
      QaRound r;
      r.round_index = ++index;
      r.question = text_at(questions, jr.at("question"), "question");
      r.answer = text_at(answers, jr.at("answer"), "answer");
      if (auto it = jr.find("answer_options"); it != jr.end() && it->is_array()) {
        AnswerOptions opts;
        for (const auto& o : *it) opts.options.push_back(text_at(answers, o, "answer option"));
        opts.gt_index = jr.at("gt_index").get<int>();
        r.candidates = std::move(opts);
      }
      d.rounds.push_back(std::move(r));
    }
    validate_dialog(d);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Dialog> load_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  if (path.extension() == ".jsonl") return parse_dataset(in, DatasetFormat::jsonl);

  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedInput, path.string() + ": " + describe_position(text, e.byte) + ": " + e.what());
  }
  if (doc.is_object() && doc.contains("data")) return dialogs_from_release_json(doc);
  std::istringstream again(text);
  return parse_dataset(again, DatasetFormat::json);
}

void write_dataset(std::ostream& out, std::span<const Dialog> dialogs, DatasetFormat format, const std::string& version) {
  if (format == DatasetFormat::jsonl) {
    for (const auto& d : dialogs) out << dialog_to_json(d).dump() << '\n';
    return;
  }
  nlohmann::ordered_json doc;
  doc["version"] = version;
  doc["dialogs"] = nlohmann::ordered_json::array();
  for (const auto& d : dialogs) doc["dialogs"].push_back(dialog_to_json(d));
  out << doc.dump() << '\n';
}

DatasetSplit split_dataset(std::span<const Dialog> dialogs, const SplitSizes& sizes, std::uint64_t seed) {
  const std::size_t wanted = sizes.train + sizes.val + sizes.test;
  if (wanted > dialogs.size())
    throw Error(Errc::SpecTooLarge, "requested " + std::to_string(wanted) + " dialogs from a corpus of " +
                                        std::to_string(dialogs.size()));

  // Group by image_id in first-seen order so the shuffle is input-order stable.
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    auto [it, fresh] = group_of.try_emplace(dialogs[i].image_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(std::span(groups));

  DatasetSplit split;
  std::vector<Dialog>* parts[3] = {&split.train, &split.val, &split.test};
  const std::size_t targets[3] = {sizes.train, sizes.val, sizes.test};
  std::vector<bool> used(groups.size(), false);
  for (int p = 0; p < 3; ++p) {
    for (std::size_t g = 0; g < groups.size() && parts[p]->size() < targets[p]; ++g) {
      if (used[g] || parts[p]->size() + groups[g].size() > targets[p]) continue;
      used[g] = true;
      for (std::size_t i : groups[g]) parts[p]->push_back(dialogs[i]);
    }
    if (parts[p]->size() != targets[p])
      throw Error(Errc::SpecTooLarge, "cannot fill split part " + std::to_string(p) +
                                          " exactly without sharing an image_id across parts");
  }
  return split;
}

}  // namespace visdial
