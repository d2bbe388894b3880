#pragma once

// Brute-force label oracle for goal-oriented corpora. Works from the raw
// JSON annotations only and shares no code with the probes module.

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace oracle {

using Key = std::tuple<std::string, std::size_t, std::string>;  // dialogue, turn, task

inline std::string joined(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : "|") + x;
  return out;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Labels rendered as `|`-joined sorted names, or "SKIP".
inline std::map<Key, std::string> goal_labels(const std::string& json_text) {
  const auto root = nlohmann::json::parse(json_text);
  std::map<Key, std::string> out;
  const std::map<std::string, std::size_t> caps = {
      {"NumAllTopics", 5}, {"NumRepeatInfo", 6}, {"NumRecentInfo", 9}, {"NumAllInfo", 19}};
  auto cap = [&](const char* task, std::size_t n) { return std::to_string(std::min(n, caps.at(task))); };

  for (const auto& d : root.at("dialogues")) {
    const std::string id = d.at("id");
    const auto& turns = d.at("turns");
    const std::size_t n = turns.size();
    for (std::size_t k = 1; k < n; ++k) {
      if (turns[k].at("speaker") != "system") continue;
      auto put = [&](const char* task, std::string v) { out[{id, k, task}] = std::move(v); };

      std::size_t bucket = 0;
      while (bucket < 4 && (bucket + 1) * n <= 5 * k) ++bucket;
      put("UtteranceLoc", std::to_string(bucket));

      std::set<std::string> topics, slots, values;
      std::size_t info = 0;
      long last_user = -1;
      for (std::size_t j = 0; j < k; ++j) {
        for (const auto& t : turns[j].at("topics")) topics.insert(lower(t));
        if (turns[j].at("speaker") != "user") continue;
        last_user = static_cast<long>(j);
        for (const auto& sv : turns[j].at("info")) {
          slots.insert(lower(sv.at("slot")));
          values.insert(lower(sv.at("value")));
          ++info;
        }
      }
      put("IsMultiTopic", topics.size() >= 2 ? "1" : "0");
      put("AllTopics", joined(topics));
      put("AllSlots", joined(slots));
      put("AllValues", joined(values));
      put("NumAllInfo", cap("NumAllInfo", info));
      std::set<std::string> goal;
      for (const auto& t : d.at("goal_topics")) goal.insert(lower(t));
      put("NumAllTopics", cap("NumAllTopics", goal.size()));

      if (last_user < 0) {
        for (const char* t : {"RecentSlots", "RecentValues", "NumRecentInfo", "RepeatInfo", "NumRepeatInfo", "RecentTopic"})
          put(t, "SKIP");
      } else {
        const auto& u = turns[static_cast<std::size_t>(last_user)];
        std::set<std::string> rs, rv, before, rep;
        for (const auto& sv : u.at("info")) {
          rs.insert(lower(sv.at("slot")));
          rv.insert(lower(sv.at("value")));
        }
        for (long j = 0; j < last_user; ++j)
          if (turns[static_cast<std::size_t>(j)].at("speaker") == "user")
            for (const auto& sv : turns[static_cast<std::size_t>(j)].at("info")) before.insert(lower(sv.at("slot")));
        for (const auto& s : rs)
          if (before.count(s)) rep.insert(s);
        put("RecentSlots", joined(rs));
        put("RecentValues", joined(rv));
        put("NumRecentInfo", cap("NumRecentInfo", u.at("info").size()));
        put("RepeatInfo", joined(rep));
        put("NumRepeatInfo", cap("NumRepeatInfo", rep.size()));
        std::set<std::string> ut;
        for (const auto& t : u.at("topics")) ut.insert(lower(t));
        put("RecentTopic", ut.empty() ? "SKIP" : *ut.begin());
      }

      const auto& act = turns[k].at("act");
      if (act.is_null()) {
        put("ActionSelect", "SKIP");
        put("EntitySlots", "SKIP");
        put("EntityValues", "SKIP");
      } else {
        std::set<std::string> es, ev;
        for (const auto& sv : act.at("args")) {
          es.insert(lower(sv.at("slot")));
          ev.insert(lower(sv.at("value")));
        }
        put("ActionSelect", act.at("name"));
        put("EntitySlots", joined(es));
        put("EntityValues", joined(ev));
      }
    }
  }
  return out;
}

} // namespace oracle
