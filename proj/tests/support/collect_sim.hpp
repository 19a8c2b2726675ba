#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "visdial/collect/coordinator.hpp"
#include "visdial/dataset_io.hpp"
#include "visdial/error.hpp"
#include "visdial/random.hpp"

namespace visdial::testing {

struct SimResult {
  std::size_t sessions = 0;
  std::size_t completed = 0;
  std::size_t discarded = 0;
  std::size_t rejected_turns = 0;
  std::size_t dialogs_validated = 0;
  std::vector<std::string> violations;
};

/// Drives a coordinator with randomized joins, messages (in and out of
/// turn), leaves, disconnects and heartbeat expiry until `target_sessions`
/// sessions exist, checking the collection safety properties along the way.
inline SimResult simulate_collection(std::size_t target_sessions, std::uint64_t seed, std::size_t workers = 12) {
  using namespace visdial::collect;
  SimResult res;
  auto violation = [&](std::string v) {
    if (res.violations.size() < 20) res.violations.push_back(std::move(v));
  };

  std::map<std::string, std::uint64_t> last_seq;
  std::map<std::string, std::string> questioner_of;
  std::map<std::string, int> times_served;
  std::map<std::string, int> times_requeued;

  CollectHooks hooks;
  hooks.on_event = [&](const SessionEvent& e) {
    auto& last = last_seq[e.session_id];
    if (e.seq != last + 1) violation(e.session_id + ": seq gap " + std::to_string(last) + " -> " + std::to_string(e.seq));
    last = e.seq;
    if (e.kind == EventKind::paired) {
      const auto q = e.payload.value("questioner_id", "");
      const auto a = e.payload.value("answerer_id", "");
      if (q.empty() || q == a) violation(e.session_id + ": self pairing");
      questioner_of[e.session_id] = q;
    }
    if (!e.recipient.empty() && e.recipient == questioner_of[e.session_id] && e.payload.contains("image_url"))
      violation(e.session_id + ": image_url sent to questioner");
    if (e.kind == EventKind::turn_rejected) ++res.rejected_turns;
  };
  hooks.on_completed = [&](const ChatSession& s, const Dialog& d) {
    if (++times_served[s.image.image_id] > 1) violation(s.image.image_id + ": served twice");
    try {
      validate_dialog(d);
      const auto text = dialog_to_json(d).dump();
      if (!(dialog_from_json(nlohmann::json::parse(text), 0) == d)) violation(s.session_id + ": dialog does not round-trip");
      ++res.dialogs_validated;
    } catch (const Error& e) {
      violation(s.session_id + ": " + e.what());
    }
  };
  hooks.on_discarded = [&](const ChatSession& s) { ++times_requeued[s.image.image_id]; };

  CollectConfig cfg;
  cfg.seed = seed;
  cfg.heartbeat_timeout_ms = 400;
  Coordinator c(cfg, hooks);
  Rng rng(derive_seed(seed, 99));

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < workers; ++i) ids.push_back("w" + std::to_string(i));
  std::int64_t now = 0;
  std::size_t next_image = 0;
  std::size_t images_added = 0;

  auto check_pool = [&] {
    std::set<std::string> seen;
    for (const auto& [w, t] : c.pool().waiting) {
      if (!seen.insert(w).second) violation(w + ": waiting twice");
      if (c.pool().active.count(w)) violation(w + ": waiting and active");
    }
  };

  const std::size_t step_limit = target_sessions * 400 + 10000;
  for (std::size_t step = 0; step < step_limit && c.sessions().size() < target_sessions; ++step) {
    ++now;
    if (c.unserved_images() < 3) {
      std::vector<ImageTask> batch;
      for (int i = 0; i < 8; ++i, ++next_image) {
        ImageTask t{"img" + std::to_string(next_image), "caption " + std::to_string(next_image), std::nullopt};
        if (next_image % 2 == 0) t.image_url = "http://images/" + std::to_string(next_image) + ".jpg";
        batch.push_back(t);
      }
      images_added += c.add_images(batch, now);
    }
    const std::string& w = ids[rng.below(ids.size())];
    const auto where = c.assignment(w);
    const bool waiting = std::any_of(c.pool().waiting.begin(), c.pool().waiting.end(),
                                     [&](const auto& p) { return p.first == w; });
    try {
      if (!where) {
        if (waiting) {
          if (rng.below(50) == 0) c.leave(w, now);
          else c.heartbeat(w, now);
        } else {
          c.enqueue_worker(w, now);
        }
      } else {
        const auto& [sid, role] = *where;
        const ChatSession* s = c.session(sid);
        c.heartbeat(w, now);
        const auto roll = rng.below(1000);
        if (roll < 4) {
          c.leave(w, now);
        } else if (roll < 6) {
          c.handle_disconnect(sid, role, now);
        } else if (roll < 12) {
          try {
            c.handle_message(sid, role, " \t ", now);
            violation(sid + ": blank message accepted");
          } catch (const Error& e) {
            if (e.code() != Errc::EmptyMessage) throw;
          }
        } else {
          const bool my_turn = s->state == SessionState::solo_fallback ||
                               (s->state == SessionState::awaiting_question) == (role == Role::questioner);
          if (my_turn || rng.below(5) == 0) {
            const auto before = s->transcript.size();
            c.handle_message(sid, role, role == Role::questioner ? "what is there?" : "a dog", now);
            if (!my_turn && s->transcript.size() != before) violation(sid + ": out-of-turn message recorded");
          }
        }
        if (const ChatSession* cur = c.session(sid); cur && cur->state == SessionState::completable) {
          if (cur->rounds_done != kRoundsPerDialog) violation(sid + ": completable before ten rounds");
          c.complete_session(sid, now);
        }
      }
    } catch (const Error& e) {
      violation(std::string("unexpected error: ") + e.what());
    }
    if (step % 97 == 0) {
      // A few workers go quiet for a while so heartbeat expiry kicks in.
      c.expire(now);
      now += static_cast<std::int64_t>(rng.below(60));
    }
    check_pool();
  }

  // Paired-state transcripts alternate strictly, questioner first.
  std::set<std::string> live_images;
  for (const auto& [sid, s] : c.sessions()) {
    if (s.questioner_id == s.answerer_id) violation(sid + ": same worker in both roles");
    Role expect = Role::questioner;
    int pairs = 0;
    for (const auto& t : s.transcript) {
      if (t.solo) continue;
      if (t.role != expect) violation(sid + ": two consecutive messages from one role");
      if (t.role == Role::answerer) ++pairs;
      expect = partner_of(t.role);
    }
    if (pairs != s.rounds_done) violation(sid + ": rounds_done mismatch");
    switch (s.state) {
      case SessionState::completed:
        ++res.completed;
        if (s.rounds_done != kRoundsPerDialog) violation(sid + ": completed early");
        if (!c.served_images().count(s.image.image_id)) violation(sid + ": completed image not served");
        break;
      case SessionState::discarded:
        ++res.discarded;
        break;
      default:
        if (!live_images.insert(s.image.image_id).second) violation(s.image.image_id + ": leased twice");
        break;
    }
  }
  // Image conservation: each image is unserved, leased by one live session, or served.
  if (c.served_images().size() + c.leased_images() + c.unserved_images() != images_added)
    violation("image count mismatch");
  if (c.leased_images() != live_images.size()) violation("lease count mismatch");
  if (res.completed != c.served_images().size()) violation("served count mismatch");
  std::size_t requeues = 0;
  for (const auto& [img, n] : times_requeued) requeues += static_cast<std::size_t>(n);
  if (requeues != res.discarded) violation("requeue count mismatch");
  res.sessions = c.sessions().size();
  return res;
}

}  // namespace visdial::testing
