#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "visdial/collect/coordinator.hpp"

namespace visdial::collect {

/// What the store knows after a restart.
struct RecoveredState {
  std::vector<ImageTask> unserved;  // manifest order, minus served images
  std::set<std::string> served;
  std::uint64_t last_session_number = 0;
  std::vector<std::string> interrupted;  // sessions closed during recovery
  std::size_t rebuilt_dialogs = 0;       // completed sessions whose dialog file was missing
};

/// On-disk layout under `root`:
///   images.jsonl                      image manifest, append-only
///   sessions/{session_id}.events.jsonl append-only event log
///   dialogs/{image_id}.json           completed dialog, {"version", "dialogs": [d]}
///   discarded/{session_id}.json       solo-fallback transcript, flagged discarded
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  void append_images(std::span<const ImageTask> images);
  void append_event(const SessionEvent& e);
  void save_dialog(const Dialog& d);
  void save_discarded(const ChatSession& s);

  std::filesystem::path event_log_path(const std::string& session_id) const;
  std::filesystem::path dialog_path(const std::string& image_id) const;
  std::filesystem::path discarded_path(const std::string& session_id) const;

  /// Replays manifest and event logs. Sessions whose log ends without a
  /// terminal event get an image_requeued event appended; completed sessions
  /// without a dialog file have it rebuilt from the log.
  RecoveredState recover();

  /// Coordinator hooks writing into this store.
  CollectHooks hooks();

 private:
  std::ofstream& log_for(const std::string& session_id);

  std::filesystem::path root_;
  std::mutex mu_;
  std::map<std::string, std::ofstream> logs_;
};

/// File-name-safe form of an identifier: [A-Za-z0-9._-] kept, others hex-escaped.
std::string safe_file_name(std::string_view id);

nlohmann::json image_to_json(const ImageTask& t);
ImageTask image_from_json(const nlohmann::json& j);
/// Parses an image manifest (one JSON object per line). Throws MalformedInput.
std::vector<ImageTask> parse_image_manifest(std::string_view text);

nlohmann::json session_to_json(const ChatSession& s);

}  // namespace visdial::collect
