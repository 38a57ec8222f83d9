#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ambiq/corpus/jsonl.hpp"
#include "ambiq/error.hpp"

namespace ambiq::service {

enum class EventType { annotation, skip, vet };

inline std::string to_string(EventType t) {
  switch (t) {
    case EventType::annotation: return "annotation";
    case EventType::skip: return "skip";
    case EventType::vet: return "vet";
  }
  return "annotation";
}

inline EventType event_type_from_string(const std::string& s) {
  if (s == "annotation") return EventType::annotation;
  if (s == "skip") return EventType::skip;
  if (s == "vet") return EventType::vet;
  throw ValidationError("event-type", "unknown event type '" + s + "'");
}

struct Event {
  std::uint64_t seq = 0;
  EventType type = EventType::annotation;
  /// Milliseconds since the Unix epoch.
  std::int64_t timestamp_ms = 0;
  /// Annotator for annotation and skip events, the vetting author for vet
  /// events. The record's annotator_id names whose record is replaced.
  std::string actor;
  corpus::AnswerGrouping record;
};

inline nlohmann::ordered_json to_json(const Event& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["type"] = to_string(e.type);
  j["timestamp_ms"] = e.timestamp_ms;
  j["actor"] = e.actor;
  j["record"] = corpus::to_json(e.record);
  return j;
}

inline Event event_from_json(const nlohmann::json& j) {
  Event e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.type = event_type_from_string(j.at("type").get<std::string>());
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  e.actor = j.at("actor").get<std::string>();
  e.record = corpus::grouping_from_json(j.at("record"));
  corpus::validate(e.record);
  return e;
}

/// Reads a JSONL event log. Sequence numbers must be dense from 1.
inline std::vector<Event> read_events(std::istream& in, const std::string& name) {
  std::vector<Event> events;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Event e;
    try {
      e = event_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(name, lineno, ex.what());
    } catch (const ValidationError& ex) {
      throw ValidationError(ex.invariant(), ex.detail(), lineno);
    }
    if (e.seq != events.size() + 1)
      throw ValidationError("event-seq-dense",
                            "expected seq " + std::to_string(events.size() + 1) + ", found " +
                                std::to_string(e.seq),
                            lineno);
    events.push_back(std::move(e));
  }
  return events;
}

inline std::vector<Event> load_events(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_events(in, path);
}

/// Append-only JSONL event store. Sequence numbers start at 1 and are
/// dense. Without a path the log lives in memory only. Not synchronized;
/// the owning service serializes access.
class EventLog {
 public:
  EventLog() = default;

  /// Replays an existing file, then appends to it.
  explicit EventLog(std::string path) : path_(std::move(path)) {
    if (std::ifstream probe(path_, std::ios::binary); probe) events_ = read_events(probe, path_);
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot open event log " + path_ + " for append");
  }

  /// In-memory log seeded with already-read events.
  explicit EventLog(std::vector<Event> events) : events_(std::move(events)) {
    for (std::size_t i = 0; i < events_.size(); ++i)
      if (events_[i].seq != i + 1)
        throw ValidationError("event-seq-dense", "expected seq " + std::to_string(i + 1));
  }

  EventLog(EventLog&&) = default;
  EventLog& operator=(EventLog&&) = default;

  const std::vector<Event>& events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  const std::string& path() const noexcept { return path_; }

  /// Assigns the next sequence number and persists the event before it
  /// becomes visible.
  const Event& append(Event e) {
    e.seq = events_.size() + 1;
    if (out_.is_open()) {
      out_ << to_json(e).dump() << '\n';
      out_.flush();
      if (!out_) throw IoError("write failed: " + path_);
    }
    events_.push_back(std::move(e));
    return events_.back();
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<Event> events_;
};

}  // namespace ambiq::service
