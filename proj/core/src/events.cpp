#include <algorithm>

#include <nlohmann/json.hpp>

#include "podhive/server.hpp"

namespace podhive::api {

using nlohmann::json;

namespace {

constexpr EventKind kKinds[] = {EventKind::PodStatusChanged, EventKind::TreeChanged,
                                EventKind::StreamOutput, EventKind::RunTraceStep,
                                EventKind::Lagged};

}  // namespace

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::PodStatusChanged: return "PodStatusChanged";
    case EventKind::TreeChanged: return "TreeChanged";
    case EventKind::StreamOutput: return "StreamOutput";
    case EventKind::RunTraceStep: return "RunTraceStep";
    case EventKind::Lagged: return "Lagged";
  }
  return "?";
}

std::string encode_event(const ApiEvent& event) {
  json j{{"seq", event.seq},
         {"kind", to_string(event.kind)},
         {"body", event.body.empty() ? json::object() : json::parse(event.body)}};
  return j.dump() + "\n";
}

ApiEvent decode_event(std::string_view frame) {
  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  json j = json::parse(frame, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("MalformedFrame", "event is not a JSON object");
  auto seq = j.find("seq");
  auto kind = j.find("kind");
  auto body = j.find("body");
  if (seq == j.end() || !seq->is_number_unsigned() || kind == j.end() || !kind->is_string() ||
      body == j.end()) {
    throw Error("MalformedFrame", "event needs seq, kind and body");
  }
  ApiEvent ev;
  ev.seq = seq->get<std::uint64_t>();
  std::string k = kind->get<std::string>();
  auto it = std::find_if(std::begin(kKinds), std::end(kKinds),
                         [&](EventKind c) { return k == to_string(c); });
  if (it == std::end(kKinds)) throw Error("MalformedFrame", "unknown event kind '" + k + "'");
  ev.kind = *it;
  ev.body = body->dump();
  return ev;
}

std::optional<ApiEvent> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  ApiEvent ev = std::move(queue_.front());
  queue_.pop_front();
  return ev;
}

bool Subscription::finished() const {
  std::lock_guard lk(mu_);
  return closed_ && queue_.empty();
}

void Subscription::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

void Subscription::push(const ApiEvent& event) {
  {
    std::lock_guard lk(mu_);
    if (closed_) return;
    if (queue_.size() >= capacity_) {
      queue_.clear();
      queue_.push_back(ApiEvent{event.seq, EventKind::Lagged,
                                json{{"dropped_from", event.seq}}.dump()});
      closed_ = true;
    } else {
      queue_.push_back(event);
    }
  }
  cv_.notify_all();
}

std::shared_ptr<Subscription> EventBus::subscribe(std::size_t capacity) {
  std::shared_ptr<Subscription> sub(new Subscription(std::max<std::size_t>(capacity, 1)));
  std::lock_guard lk(mu_);
  subs_.push_back(sub);
  return sub;
}

ApiEvent EventBus::publish(EventKind kind, std::string body) {
  std::lock_guard lk(mu_);
  ApiEvent ev{++seq_, kind, std::move(body)};
  std::erase_if(subs_, [&](const std::weak_ptr<Subscription>& w) {
    auto s = w.lock();
    if (!s) return true;
    s->push(ev);
    return false;
  });
  return ev;
}

std::uint64_t EventBus::last_seq() const {
  std::lock_guard lk(mu_);
  return seq_;
}

std::size_t EventBus::subscriber_count() const {
  std::lock_guard lk(mu_);
  return static_cast<std::size_t>(std::count_if(
      subs_.begin(), subs_.end(), [](const auto& w) { return !w.expired(); }));
}

void EventBus::close_all() {
  std::lock_guard lk(mu_);
  for (auto& w : subs_) {
    if (auto s = w.lock()) s->close();
  }
  subs_.clear();
}

}  // namespace podhive::api
