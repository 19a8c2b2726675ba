#include "visdial/collect/store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "visdial/dataset_io.hpp"
#include "visdial/error.hpp"

namespace visdial::collect {

namespace fs = std::filesystem;

std::string safe_file_name(std::string_view id) {
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_' || (c == '.' && !out.empty())) {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out.empty() ? "%" : out;
}

nlohmann::json image_to_json(const ImageTask& t) {
  nlohmann::json j = {{"image_id", t.image_id}, {"caption", t.caption}};
  if (t.image_url) j["image_url"] = *t.image_url;
  return j;
}

ImageTask image_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::MalformedInput, "image entry is not an object");
  auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
      throw Error(Errc::MalformedInput, std::string("image entry needs a non-empty string '") + key + "'");
    return it->get<std::string>();
  };
  ImageTask t;
  if (auto id = j.find("image_id"); id != j.end() && id->is_number_integer())
    t.image_id = id->dump();
  else
    t.image_id = str("image_id");
  t.caption = str("caption");
  if (auto u = j.find("image_url"); u != j.end() && !u->is_null()) t.image_url = str("image_url");
  return t;
}

std::vector<ImageTask> parse_image_manifest(std::string_view text) {
  std::vector<ImageTask> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(image_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedInput, "manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::MalformedInput, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json session_to_json(const ChatSession& s) {
  nlohmann::json transcript = nlohmann::json::array();
  for (const auto& t : s.transcript)
    transcript.push_back({{"role", role_name(t.role)}, {"text", t.text}, {"ts", t.timestamp_ms}, {"solo", t.solo}});
  nlohmann::json j = {{"session_id", s.session_id},
                      {"state", state_name(s.state)},
                      {"image", image_to_json(s.image)},
                      {"questioner_id", s.questioner_id},
                      {"answerer_id", s.answerer_id},
                      {"rounds_done", s.rounds_done},
                      {"solo_role", s.solo_role ? nlohmann::json(role_name(*s.solo_role)) : nlohmann::json(nullptr)},
                      {"solo_messages_sent", s.solo_messages_sent},
                      {"transcript", std::move(transcript)}};
  return j;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  for (const char* sub : {"sessions", "dialogs", "discarded"}) fs::create_directories(root_ / sub);
}

fs::path SessionStore::event_log_path(const std::string& session_id) const {
  return root_ / "sessions" / (safe_file_name(session_id) + ".events.jsonl");
}
fs::path SessionStore::dialog_path(const std::string& image_id) const {
  return root_ / "dialogs" / (safe_file_name(image_id) + ".json");
}
fs::path SessionStore::discarded_path(const std::string& session_id) const {
  return root_ / "discarded" / (safe_file_name(session_id) + ".json");
}

namespace {

void write_atomically(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void append_line(std::ofstream& out, const std::string& line, const fs::path& path) {
  out << line << '\n';
  out.flush();
  if (!out) throw Error(Errc::Io, "cannot append to " + path.string());
}

std::string dialog_document(const Dialog& d) {
  std::ostringstream out;
  write_dataset(out, std::span(&d, 1), DatasetFormat::json);
  return out.str();
}

}  // namespace

void SessionStore::append_images(std::span<const ImageTask> images) {
  std::lock_guard lock(mu_);
  const fs::path path = root_ / "images.jsonl";
  std::ofstream out(path, std::ios::binary | std::ios::app);
  for (const auto& t : images) append_line(out, image_to_json(t).dump(), path);
}

std::ofstream& SessionStore::log_for(const std::string& session_id) {
  auto it = logs_.find(session_id);
  if (it == logs_.end()) {
    const fs::path path = event_log_path(session_id);
    it = logs_.emplace(session_id, std::ofstream(path, std::ios::binary | std::ios::app)).first;
    if (!it->second) throw Error(Errc::Io, "cannot open " + path.string());
  }
  return it->second;
}

void SessionStore::append_event(const SessionEvent& e) {
  std::lock_guard lock(mu_);
  append_line(log_for(e.session_id), event_to_json(e).dump(), event_log_path(e.session_id));
  if (e.kind == EventKind::image_requeued) logs_.erase(e.session_id);
}

void SessionStore::save_dialog(const Dialog& d) {
  std::lock_guard lock(mu_);
  write_atomically(dialog_path(d.image_id), dialog_document(d));
}

void SessionStore::save_discarded(const ChatSession& s) {
  nlohmann::json j = session_to_json(s);
  j["discarded"] = true;
  std::lock_guard lock(mu_);
  write_atomically(discarded_path(s.session_id), j.dump(2) + "\n");
}

CollectHooks SessionStore::hooks() {
  CollectHooks h;
  h.on_event = [this](const SessionEvent& e) { append_event(e); };
  h.on_completed = [this](const ChatSession& s, const Dialog& d) {
    save_dialog(d);
    std::lock_guard lock(mu_);
    logs_.erase(s.session_id);
  };
  h.on_discarded = [this](const ChatSession& s) { save_discarded(s); };
  return h;
}

namespace {

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception&) {
      break;  // torn final write
    }
  }
  return out;
}

std::uint64_t session_number(std::string_view id) {
  if (id.size() < 2 || id[0] != 's') return 0;
  std::uint64_t n = 0;
  for (char c : id.substr(1)) {
    if (c < '0' || c > '9') return 0;
    n = n * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return n;
}

}  // namespace

RecoveredState SessionStore::recover() {
  std::lock_guard lock(mu_);
  logs_.clear();
  RecoveredState state;

  for (const auto& entry : fs::directory_iterator(root_ / "dialogs")) {
    if (entry.path().extension() != ".json") continue;
    try {
      for (const auto& d : load_dataset_file(entry.path())) state.served.insert(d.image_id);
    } catch (const Error&) {
    }
  }

  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(root_ / "sessions"))
    if (entry.path().string().ends_with(".events.jsonl")) logs.push_back(entry.path());
  std::sort(logs.begin(), logs.end());

  for (const auto& path : logs) {
    std::vector<SessionEvent> events;
    for (const auto& j : read_jsonl(path)) {
      try {
        events.push_back(event_from_json(j));
      } catch (const std::exception&) {
        break;
      }
    }
    if (events.empty()) continue;
    const std::string& sid = events.front().session_id;
    state.last_session_number = std::max(state.last_session_number, session_number(sid));

    ImageTask image;
    std::vector<std::pair<std::string, std::string>> qa;  // paired-mode (from_role, text)
    bool completed = false, terminal = false;
    for (const auto& e : events) {
      switch (e.kind) {
        case EventKind::paired:
          image = image_from_json(e.payload);
          break;
        case EventKind::message_delivered:
          if (!e.payload.contains("solo")) qa.emplace_back(e.payload.value("from_role", ""), e.payload.value("text", ""));
          break;
        case EventKind::session_complete:
          completed = terminal = true;
          break;
        case EventKind::image_requeued:
          terminal = true;
          break;
        default:
          break;
      }
    }

    if (completed && !image.image_id.empty() && !state.served.contains(image.image_id)) {
      Dialog d;
      d.image_id = image.image_id;
      d.image_url = image.image_url;
      d.caption = image.caption;
      for (std::size_t i = 0; i + 1 < qa.size(); i += 2) {
        QaRound r;
        r.round_index = static_cast<int>(i / 2) + 1;
        r.question = qa[i].second;
        r.answer = qa[i + 1].second;
        d.rounds.push_back(std::move(r));
      }
      try {
        validate_dialog(d);
        write_atomically(dialog_path(d.image_id), dialog_document(d));
        state.served.insert(d.image_id);
        ++state.rebuilt_dialogs;
      } catch (const Error&) {
      }
    }

    if (!terminal) {
      SessionEvent e;
      e.session_id = sid;
      e.seq = events.back().seq + 1;
      e.kind = EventKind::image_requeued;
      e.timestamp_ms = events.back().timestamp_ms;
      e.payload = {{"image_id", image.image_id}, {"reason", "recovery"}};
      std::ofstream out(path, std::ios::binary | std::ios::app);
      append_line(out, event_to_json(e).dump(), path);
      state.interrupted.push_back(sid);
    }
  }

  std::set<std::string> seen;
  for (const auto& j : read_jsonl(root_ / "images.jsonl")) {
    try {
      ImageTask t = image_from_json(j);
      if (state.served.contains(t.image_id) || !seen.insert(t.image_id).second) continue;
      state.unserved.push_back(std::move(t));
    } catch (const Error&) {
    }
  }
  return state;
}

}  // namespace visdial::collect
