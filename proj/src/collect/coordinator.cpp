#include "visdial/collect/coordinator.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "visdial/error.hpp"

namespace visdial::collect {

std::string_view role_name(Role r) noexcept { return r == Role::questioner ? "questioner" : "answerer"; }

std::optional<Role> role_from_name(std::string_view name) noexcept {
  if (name == "questioner") return Role::questioner;
  if (name == "answerer") return Role::answerer;
  return std::nullopt;
}

std::string_view state_name(SessionState s) noexcept {
  switch (s) {
    case SessionState::awaiting_question: return "awaiting_question";
    case SessionState::awaiting_answer: return "awaiting_answer";
    case SessionState::completable: return "completable";
    case SessionState::completed: return "completed";
    case SessionState::solo_fallback: return "solo_fallback";
    case SessionState::discarded: return "discarded";
  }
  return "unknown";
}

namespace {

constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::paired, "paired"},
    {EventKind::role_assigned, "role_assigned"},
    {EventKind::message_delivered, "message_delivered"},
    {EventKind::turn_rejected, "turn_rejected"},
    {EventKind::partner_disconnected, "partner_disconnected"},
    {EventKind::solo_prompt, "solo_prompt"},
    {EventKind::session_complete, "session_complete"},
    {EventKind::session_discarded, "session_discarded"},
    {EventKind::image_requeued, "image_requeued"},
};

std::string trim(std::string_view s) {
  auto b = s.begin(), e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

}  // namespace

std::string_view event_name(EventKind k) noexcept {
  for (const auto& [kind, name] : kEventNames)
    if (kind == k) return name;
  return "unknown";
}

std::optional<EventKind> event_from_name(std::string_view name) noexcept {
  for (const auto& [kind, n] : kEventNames)
    if (n == name) return kind;
  return std::nullopt;
}

nlohmann::json event_to_json(const SessionEvent& e) {
  nlohmann::json j;
  j["session_id"] = e.session_id;
  j["seq"] = e.seq;
  j["kind"] = event_name(e.kind);
  j["recipient"] = e.recipient;
  j["audience"] = e.audience ? nlohmann::json(role_name(*e.audience)) : nlohmann::json(nullptr);
  j["ts"] = e.timestamp_ms;
  j["payload"] = e.payload;
  return j;
}

SessionEvent event_from_json(const nlohmann::json& j) {
  SessionEvent e;
  e.session_id = j.at("session_id").get<std::string>();
  e.seq = j.at("seq").get<std::uint64_t>();
  auto kind = event_from_name(j.at("kind").get<std::string>());
  if (!kind) throw Error(Errc::MalformedInput, "unknown event kind " + j.at("kind").dump());
  e.kind = *kind;
  e.recipient = j.value("recipient", "");
  if (auto a = j.find("audience"); a != j.end() && a->is_string()) e.audience = role_from_name(a->get<std::string>());
  e.timestamp_ms = j.value("ts", std::int64_t{0});
  e.payload = j.value("payload", nlohmann::json::object());
  return e;
}

Coordinator::Coordinator(CollectConfig config, CollectHooks hooks)
    : config_(std::move(config)), hooks_(std::move(hooks)), rng_(config_.seed) {}

ChatSession& Coordinator::get(const std::string& session_id) {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::UnknownSession, "no session '" + session_id + "'");
  return it->second;
}

const ChatSession* Coordinator::session(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

const std::vector<SessionEvent>& Coordinator::history(const std::string& session_id) const {
  static const std::vector<SessionEvent> none;
  auto it = history_.find(session_id);
  return it == history_.end() ? none : it->second;
}

std::optional<std::pair<std::string, Role>> Coordinator::assignment(const std::string& worker_id) const {
  auto it = session_of_.find(worker_id);
  if (it == session_of_.end()) return std::nullopt;
  const ChatSession& s = sessions_.at(it->second);
  return std::pair{s.session_id, s.questioner_id == worker_id ? Role::questioner : Role::answerer};
}

SessionEvent& Coordinator::emit(ChatSession& s, EventKind kind, std::optional<Role> audience, std::int64_t now,
                                std::vector<SessionEvent>& out, nlohmann::json payload) {
  SessionEvent e;
  e.session_id = s.session_id;
  e.seq = ++s.last_seq;
  e.kind = kind;
  e.audience = audience;
  if (audience) e.recipient = s.worker(*audience);
  e.timestamp_ms = now;
  e.payload = std::move(payload);
  history_[s.session_id].push_back(e);
  if (hooks_.on_event) hooks_.on_event(e);
  out.push_back(std::move(e));
  return out.back();
}

std::size_t Coordinator::add_images(std::span<const ImageTask> images, std::int64_t now,
                                    std::vector<SessionEvent>* events) {
  std::size_t added = 0;
  for (const auto& img : images) {
    if (img.image_id.empty()) throw Error(Errc::InvalidArgument, "image without image_id");
    if (served_.contains(img.image_id) || leased_.contains(img.image_id) || queued_.contains(img.image_id)) continue;
    queued_.insert(img.image_id);
    unserved_.push_back(img);
    ++added;
  }
  std::vector<SessionEvent> local;
  try_pair(now, events ? *events : local);
  return added;
}

void Coordinator::mark_served(const std::string& image_id) {
  served_.insert(image_id);
  if (queued_.erase(image_id) > 0)
    std::erase_if(unserved_, [&](const ImageTask& t) { return t.image_id == image_id; });
}

std::vector<SessionEvent> Coordinator::enqueue_worker(const std::string& worker_id, std::int64_t now) {
  if (worker_id.empty()) throw Error(Errc::InvalidArgument, "empty worker_id");
  if (pool_.active.contains(worker_id)) throw Error(Errc::AlreadyActive, "worker '" + worker_id + "' is in a session");
  if (std::any_of(pool_.waiting.begin(), pool_.waiting.end(), [&](const auto& w) { return w.first == worker_id; }))
    throw Error(Errc::AlreadyWaiting, "worker '" + worker_id + "' is already waiting");
  pool_.waiting.emplace_back(worker_id, now);
  last_seen_[worker_id] = now;
  std::vector<SessionEvent> out;
  try_pair(now, out);
  return out;
}

void Coordinator::try_pair(std::int64_t now, std::vector<SessionEvent>& out) {
  while (pool_.waiting.size() >= 2 && !unserved_.empty()) {
    auto first = pool_.waiting.front();
    pool_.waiting.pop_front();
    auto second = pool_.waiting.front();
    pool_.waiting.pop_front();

    ImageTask image = std::move(unserved_.front());
    unserved_.pop_front();
    queued_.erase(image.image_id);

    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(++session_counter_));
    ChatSession s;
    s.session_id = id;
    s.image = std::move(image);
    const bool first_asks = rng_.below(2) == 0;
    s.questioner_id = first_asks ? first.first : second.first;
    s.answerer_id = first_asks ? second.first : first.first;
    leased_.emplace(s.image.image_id, s.session_id);
    pool_.active.insert(s.questioner_id);
    pool_.active.insert(s.answerer_id);
    session_of_[s.questioner_id] = s.session_id;
    session_of_[s.answerer_id] = s.session_id;
    auto& stored = sessions_.emplace(s.session_id, std::move(s)).first->second;

    emit(stored, EventKind::paired, std::nullopt, now, out,
         {{"questioner_id", stored.questioner_id},
          {"answerer_id", stored.answerer_id},
          {"image_id", stored.image.image_id},
          {"caption", stored.image.caption},
          {"image_url", stored.image.image_url ? nlohmann::json(*stored.image.image_url) : nlohmann::json(nullptr)}});
    // The questioner never receives the image.
    emit(stored, EventKind::role_assigned, Role::questioner, now, out,
         {{"session_id", stored.session_id}, {"role", "questioner"}, {"caption", stored.image.caption}});
    nlohmann::json answerer = {{"session_id", stored.session_id}, {"role", "answerer"}, {"caption", stored.image.caption}};
    if (stored.image.image_url) answerer["image_url"] = *stored.image.image_url;
    emit(stored, EventKind::role_assigned, Role::answerer, now, out, std::move(answerer));
  }
}

std::vector<SessionEvent> Coordinator::handle_message(const std::string& session_id, Role sender, std::string_view text,
                                                      std::int64_t now) {
  ChatSession& s = get(session_id);
  if (!s.live()) throw Error(Errc::SessionNotLive, "session '" + session_id + "' is " + std::string(state_name(s.state)));
  std::string body = trim(text);
  if (body.empty()) throw Error(Errc::EmptyMessage, "message is empty");
  last_seen_[s.worker(sender)] = now;

  std::vector<SessionEvent> out;
  auto reject = [&](const char* reason) { emit(s, EventKind::turn_rejected, sender, now, out, {{"reason", reason}}); };

  switch (s.state) {
    case SessionState::awaiting_question:
      if (sender != Role::questioner) {
        reject("waiting for the questioner");
        break;
      }
      s.transcript.push_back({sender, body, now, false});
      s.state = SessionState::awaiting_answer;
      emit(s, EventKind::message_delivered, Role::answerer, now, out,
           {{"from_role", "questioner"}, {"text", body}, {"round", s.rounds_done + 1}});
      break;
    case SessionState::awaiting_answer:
      if (sender != Role::answerer) {
        reject("waiting for the answer");
        break;
      }
      s.transcript.push_back({sender, body, now, false});
      ++s.rounds_done;
      s.state = s.rounds_done == kRoundsPerDialog ? SessionState::completable : SessionState::awaiting_question;
      emit(s, EventKind::message_delivered, Role::questioner, now, out,
           {{"from_role", "answerer"}, {"text", body}, {"round", s.rounds_done}});
      break;
    case SessionState::solo_fallback:
      if (sender != *s.solo_role) {
        reject("partner disconnected");
        break;
      }
      s.transcript.push_back({sender, body, now, true});
      ++s.solo_messages_sent;
      emit(s, EventKind::message_delivered, std::nullopt, now, out,
           {{"from_role", role_name(sender)}, {"text", body}, {"solo", s.solo_messages_sent}});
      if (s.solo_messages_sent >= config_.solo_quota) discard(s, now, out);
      break;
    default:
      break;
  }
  return out;
}

void Coordinator::release(ChatSession& s) {
  for (const auto* w : {&s.questioner_id, &s.answerer_id}) {
    auto it = session_of_.find(*w);
    if (it != session_of_.end() && it->second == s.session_id) {
      session_of_.erase(it);
      pool_.active.erase(*w);
    }
  }
}

void Coordinator::discard(ChatSession& s, std::int64_t now, std::vector<SessionEvent>& out) {
  s.state = SessionState::discarded;
  std::optional<Role> remaining;
  if (s.solo_role && session_of_.contains(s.worker(*s.solo_role))) remaining = s.solo_role;
  emit(s, EventKind::session_discarded, remaining, now, out, {{"solo_messages", s.solo_messages_sent}});
  release(s);
  leased_.erase(s.image.image_id);
  if (hooks_.on_discarded) hooks_.on_discarded(s);
  emit(s, EventKind::image_requeued, std::nullopt, now, out, {{"image_id", s.image.image_id}});
  if (!served_.contains(s.image.image_id) && queued_.insert(s.image.image_id).second) unserved_.push_back(s.image);
  try_pair(now, out);
}

std::vector<SessionEvent> Coordinator::handle_disconnect(const std::string& session_id, Role who, std::int64_t now) {
  ChatSession& s = get(session_id);
  std::vector<SessionEvent> out;
  switch (s.state) {
    case SessionState::completed:
    case SessionState::discarded:
      return out;
    case SessionState::completable:
      session_of_.erase(s.worker(who));
      pool_.active.erase(s.worker(who));
      complete_session(session_id, now, &out);
      return out;
    case SessionState::solo_fallback:
      if (who == *s.solo_role) discard(s, now, out);
      return out;
    case SessionState::awaiting_question:
    case SessionState::awaiting_answer: {
      const Role remaining = partner_of(who);
      const std::string& gone = s.worker(who);
      session_of_.erase(gone);
      pool_.active.erase(gone);
      s.state = SessionState::solo_fallback;
      s.solo_role = remaining;
      s.solo_messages_sent = 0;
      emit(s, EventKind::partner_disconnected, remaining, now, out, {{"role", role_name(who)}});
      emit(s, EventKind::solo_prompt, remaining, now, out,
           {{"instructions", remaining == Role::questioner ? config_.questioner_solo_instructions
                                                           : config_.answerer_solo_instructions},
            {"quota", config_.solo_quota}});
      return out;
    }
  }
  return out;
}

Dialog Coordinator::complete_session(const std::string& session_id, std::int64_t now, std::vector<SessionEvent>* events) {
  ChatSession& s = get(session_id);
  if (s.state != SessionState::completable)
    throw Error(Errc::NotCompletable, "session '" + session_id + "' is " + std::string(state_name(s.state)));
  Dialog d;
  d.image_id = s.image.image_id;
  d.image_url = s.image.image_url;
  d.caption = s.image.caption;
  for (std::size_t i = 0; i + 1 < s.transcript.size(); i += 2) {
    QaRound r;
    r.round_index = static_cast<int>(i / 2) + 1;
    r.question = s.transcript[i].text;
    r.answer = s.transcript[i + 1].text;
    d.rounds.push_back(std::move(r));
  }
  validate_dialog(d);

  s.state = SessionState::completed;
  leased_.erase(s.image.image_id);
  served_.insert(s.image.image_id);
  std::vector<SessionEvent> local;
  auto& out = events ? *events : local;
  for (Role r : {Role::questioner, Role::answerer}) {
    const bool connected = session_of_.contains(s.worker(r));
    emit(s, EventKind::session_complete, connected ? std::optional(r) : std::nullopt, now, out,
         {{"rounds", s.rounds_done}});
  }
  release(s);
  if (hooks_.on_completed) hooks_.on_completed(s, d);
  try_pair(now, out);
  return d;
}

std::vector<SessionEvent> Coordinator::leave(const std::string& worker_id, std::int64_t now) {
  last_seen_.erase(worker_id);
  auto w = std::find_if(pool_.waiting.begin(), pool_.waiting.end(), [&](const auto& p) { return p.first == worker_id; });
  if (w != pool_.waiting.end()) {
    pool_.waiting.erase(w);
    return {};
  }
  if (auto a = assignment(worker_id)) return handle_disconnect(a->first, a->second, now);
  return {};
}

void Coordinator::heartbeat(const std::string& worker_id, std::int64_t now) {
  if (auto it = last_seen_.find(worker_id); it != last_seen_.end()) it->second = now;
}

std::vector<SessionEvent> Coordinator::expire(std::int64_t now) {
  std::vector<std::string> stale;
  for (const auto& [w, seen] : last_seen_)
    if (now - seen > config_.heartbeat_timeout_ms) stale.push_back(w);
  std::sort(stale.begin(), stale.end());
  std::vector<SessionEvent> out;
  for (const auto& w : stale) {
    auto events = leave(w, now);
    out.insert(out.end(), std::make_move_iterator(events.begin()), std::make_move_iterator(events.end()));
  }
  return out;
}

}  // namespace visdial::collect
