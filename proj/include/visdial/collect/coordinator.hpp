#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "visdial/dialog.hpp"
#include "visdial/random.hpp"

namespace visdial::collect {

enum class Role { questioner, answerer };
std::string_view role_name(Role r) noexcept;
std::optional<Role> role_from_name(std::string_view name) noexcept;
constexpr Role partner_of(Role r) noexcept { return r == Role::questioner ? Role::answerer : Role::questioner; }

enum class SessionState { awaiting_question, awaiting_answer, completable, completed, solo_fallback, discarded };
std::string_view state_name(SessionState s) noexcept;

struct ImageTask {
  std::string image_id;
  std::string caption;
  std::optional<std::string> image_url;
};

struct TranscriptEntry {
  Role role;
  std::string text;
  std::int64_t timestamp_ms = 0;
  bool solo = false;
};

struct ChatSession {
  std::string session_id;
  ImageTask image;
  std::string questioner_id;
  std::string answerer_id;
  std::vector<TranscriptEntry> transcript;
  SessionState state = SessionState::awaiting_question;
  std::optional<Role> solo_role;  // set in solo_fallback
  int solo_messages_sent = 0;
  int rounds_done = 0;
  std::uint64_t last_seq = 0;

  const std::string& worker(Role r) const { return r == Role::questioner ? questioner_id : answerer_id; }
  bool live() const noexcept {
    return state == SessionState::awaiting_question || state == SessionState::awaiting_answer ||
           state == SessionState::solo_fallback;
  }
};

enum class EventKind {
  paired,
  role_assigned,
  message_delivered,
  turn_rejected,
  partner_disconnected,
  solo_prompt,
  session_complete,
  session_discarded,
  image_requeued,
};
std::string_view event_name(EventKind k) noexcept;
std::optional<EventKind> event_from_name(std::string_view name) noexcept;

/// One entry of a session's ordered event stream. `recipient` is the worker
/// the event is addressed to; empty means server-side only (never sent).
struct SessionEvent {
  std::string session_id;
  std::uint64_t seq = 0;
  EventKind kind{};
  std::string recipient;
  std::optional<Role> audience;
  std::int64_t timestamp_ms = 0;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json event_to_json(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::json& j);

struct WorkerPool {
  std::deque<std::pair<std::string, std::int64_t>> waiting;  // (worker_id, join time)
  std::unordered_set<std::string> active;
};

struct CollectConfig {
  std::uint64_t seed = 0;
  int solo_quota = 10;
  std::int64_t heartbeat_timeout_ms = 120'000;
  std::string questioner_solo_instructions =
      "Your partner has left. Please keep asking questions about the image until you have sent 10 messages.";
  std::string answerer_solo_instructions =
      "Your partner has left. Please keep describing facts about the image until you have sent 10 messages.";
};

/// Hooks invoked synchronously, in order, as the coordinator changes state.
struct CollectHooks {
  std::function<void(const SessionEvent&)> on_event;
  std::function<void(const ChatSession&, const Dialog&)> on_completed;
  std::function<void(const ChatSession&)> on_discarded;
};

/// Pairing, turn-taking and disconnect handling for the live chat protocol.
/// Pure state machine: no I/O beyond the hooks, time is passed in. Not
/// internally synchronized; callers serialize access.
class Coordinator {
 public:
  explicit Coordinator(CollectConfig config = {}, CollectHooks hooks = {});

  /// Queues unseen images; returns how many were new. Images already queued,
  /// leased or served are skipped. May pair waiting workers.
  std::size_t add_images(std::span<const ImageTask> images, std::int64_t now, std::vector<SessionEvent>* events = nullptr);

  /// Marks images as already collected (recovery).
  void mark_served(const std::string& image_id);
  /// Session ids continue after this number (recovery).
  void set_session_counter(std::uint64_t last_used) { session_counter_ = last_used; }

  /// Queues the worker and pairs FIFO while two workers and an image are
  /// available. Throws AlreadyActive, AlreadyWaiting, InvalidArgument.
  std::vector<SessionEvent> enqueue_worker(const std::string& worker_id, std::int64_t now);

  /// Turn-checked message. Out-of-turn sends yield a turn_rejected event and
  /// no state change. The tenth answer makes the session
  /// completable. Throws UnknownSession, SessionNotLive, EmptyMessage.
  std::vector<SessionEvent> handle_message(const std::string& session_id, Role sender, std::string_view text,
                                           std::int64_t now);

  /// Paired session -> solo fallback for the remaining worker; solo session
  /// losing its last worker -> discarded and image requeued; completable ->
  /// completed. No-op once completed or discarded. Throws UnknownSession.
  std::vector<SessionEvent> handle_disconnect(const std::string& session_id, Role who, std::int64_t now);

  /// Emits the dialog of a completable session. Throws NotCompletable,
  /// UnknownSession.
  Dialog complete_session(const std::string& session_id, std::int64_t now, std::vector<SessionEvent>* events = nullptr);

  /// Worker leaves: dropped from the queue, or disconnected from its session.
  std::vector<SessionEvent> leave(const std::string& worker_id, std::int64_t now);
  void heartbeat(const std::string& worker_id, std::int64_t now);
  /// Workers silent for longer than the heartbeat timeout are treated as left.
  std::vector<SessionEvent> expire(std::int64_t now);

  const ChatSession* session(const std::string& session_id) const;
  /// (session id, role) of a worker in a live session.
  std::optional<std::pair<std::string, Role>> assignment(const std::string& worker_id) const;
  const std::vector<SessionEvent>& history(const std::string& session_id) const;
  const WorkerPool& pool() const noexcept { return pool_; }
  const std::map<std::string, ChatSession>& sessions() const noexcept { return sessions_; }

  std::size_t unserved_images() const noexcept { return unserved_.size(); }
  std::size_t leased_images() const noexcept { return leased_.size(); }
  const std::set<std::string>& served_images() const noexcept { return served_; }

 private:
  ChatSession& get(const std::string& session_id);
  SessionEvent& emit(ChatSession& s, EventKind kind, std::optional<Role> audience, std::int64_t now,
                     std::vector<SessionEvent>& out, nlohmann::json payload = nlohmann::json::object());
  void try_pair(std::int64_t now, std::vector<SessionEvent>& out);
  void release(ChatSession& s);
  void discard(ChatSession& s, std::int64_t now, std::vector<SessionEvent>& out);

  CollectConfig config_;
  CollectHooks hooks_;
  Rng rng_;
  WorkerPool pool_;
  std::unordered_map<std::string, std::string> session_of_;  // active worker -> session
  std::unordered_map<std::string, std::int64_t> last_seen_;
  std::deque<ImageTask> unserved_;
  std::unordered_set<std::string> queued_;
  std::unordered_map<std::string, std::string> leased_;  // image -> session
  std::set<std::string> served_;
  std::map<std::string, ChatSession> sessions_;
  std::map<std::string, std::vector<SessionEvent>> history_;
  std::uint64_t session_counter_ = 0;
};

}  // namespace visdial::collect
