#include "dialprobe/corpus.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/util.hpp"

#include <algorithm>
#include <cctype>
#include <json.hpp>

namespace dialprobe::corpus {

using nlohmann::json;

namespace {

const std::string kReservedNames[kReservedTokens] = {"<pad>", "<sos>", "<eos>", "<unk>"};

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool is_punct_token(const std::string& w) {
  return std::all_of(w.begin(), w.end(),
                     [](unsigned char c) { return std::ispunct(c) != 0; });
}

} // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (std::size_t i = 0; i < kReservedTokens; ++i) {
    index_.emplace(kReservedNames[i], static_cast<TokenId>(i));
    tokens_.push_back(kReservedNames[i]);
    freq_.push_back(0);
  }
}

Vocab Vocab::build(const std::vector<const std::vector<std::string>*>& sentences) {
  std::map<std::string, std::int64_t> counts;
  for (const auto* s : sentences)
    for (const auto& w : *s) ++counts[w];
  std::vector<std::pair<std::string, std::int64_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, n] : ordered) {
    if (v.index_.count(tok)) continue;  // never shadow a reserved name
    v.index_.emplace(tok, static_cast<TokenId>(v.tokens_.size()));
    v.tokens_.push_back(tok);
    v.freq_.push_back(n);
  }
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(TokenId id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

std::int64_t Vocab::frequency(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? 0 : freq_[static_cast<std::size_t>(it->second)];
}

std::int64_t Vocab::frequency(TokenId id) const {
  return freq_.at(static_cast<std::size_t>(id));
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (TokenId i : ids) words.push_back(token(i));
  return words;
}

std::uint64_t Vocab::digest() const {
  std::uint64_t h = fnv1a64("vocab");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64(std::string_view("\0", 1), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Enum names

std::string_view to_string(Split s) {
  switch (s) {
  case Split::Train: return "train";
  case Split::Valid: return "valid";
  case Split::Test: return "test";
  }
  return "train";
}

std::string_view to_string(Speaker s) { return s == Speaker::User ? "user" : "system"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Text normalization

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string normalize_value(std::string_view value) {
  std::string out;
  bool pending_space = false;
  for (char ch : value) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const std::set<std::string>& default_stop_words() {
  static const std::set<std::string> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you",
      "you're", "you've", "you'll", "you'd", "your", "yours", "yourself",
      "yourselves", "he", "him", "his", "himself", "she", "she's", "her",
      "hers", "herself", "it", "it's", "its", "itself", "they", "them",
      "their", "theirs", "themselves", "what", "which", "who", "whom", "this",
      "that", "that'll", "these", "those", "am", "is", "are", "was", "were",
      "be", "been", "being", "have", "has", "had", "having", "do", "does",
      "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because",
      "as", "until", "while", "of", "at", "by", "for", "with", "about",
      "against", "between", "into", "through", "during", "before", "after",
      "above", "below", "to", "from", "up", "down", "in", "out", "on", "off",
      "over", "under", "again", "further", "then", "once", "here", "there",
      "when", "where", "why", "how", "all", "any", "both", "each", "few",
      "more", "most", "other", "some", "such", "no", "nor", "not", "only",
      "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
      "just", "don", "don't", "should", "should've", "now", "d", "ll", "m",
      "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't",
      "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn",
      "hasn't", "haven", "haven't", "isn", "isn't", "ma", "mightn",
      "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
      "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won",
      "won't", "wouldn", "wouldn't"};
  return words;
}

// ---------------------------------------------------------------------------
// Finalization and examples

void finalize(Corpus& corpus) {
  std::vector<const std::vector<std::string>*> train_sentences;
  for (const auto& d : corpus.dialogues)
    if (d.split == Split::Train)
      for (const auto& t : d.turns) train_sentences.push_back(&t.words);
  corpus.vocab = Vocab::build(train_sentences);
  for (auto& d : corpus.dialogues)
    for (auto& t : d.turns) t.tokens = corpus.vocab.encode(t.words);
}

std::vector<TrainingExample> make_examples(const Corpus& corpus, Split split,
                                           std::size_t max_context) {
  std::vector<TrainingExample> out;
  for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
    const Dialogue& d = corpus.dialogues[di];
    if (d.split != split) continue;
    std::vector<TokenId> history;
    std::vector<std::size_t> lengths;
    for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
      const Turn& turn = d.turns[ti];
      if (turn.speaker == Speaker::System && ti > 0) {
        TrainingExample ex;
        ex.dialogue_id = d.id;
        ex.dialogue_index = di;
        ex.turn_index = ti;
        std::size_t drop = history.size() > max_context ? history.size() - max_context : 0;
        ex.context.assign(history.begin() + static_cast<std::ptrdiff_t>(drop), history.end());
        for (std::size_t len : lengths) {
          std::size_t cut = std::min(drop, len);
          drop -= cut;
          if (len - cut > 0) ex.segments.push_back(len - cut);
        }
        ex.target = turn.tokens;
        ex.target.push_back(kEos);
        ex.target_words = turn.words;
        out.push_back(std::move(ex));
      }
      history.insert(history.end(), turn.tokens.begin(), turn.tokens.end());
      lengths.push_back(turn.tokens.size());
    }
  }
  return out;
}

bool same_structure(const Corpus& a, const Corpus& b) {
  if (a.style != b.style || a.dialogues.size() != b.dialogues.size()) return false;
  if (a.vocab.tokens() != b.vocab.tokens()) return false;
  for (std::size_t i = 0; i < a.dialogues.size(); ++i) {
    const Dialogue& x = a.dialogues[i];
    const Dialogue& y = b.dialogues[i];
    if (x.id != y.id || x.split != y.split || x.goal_topics != y.goal_topics ||
        x.persona != y.persona || x.persona_sentences != y.persona_sentences ||
        x.turns.size() != y.turns.size())
      return false;
    for (std::size_t j = 0; j < x.turns.size(); ++j) {
      const Turn& s = x.turns[j];
      const Turn& t = y.turns[j];
      if (s.speaker != t.speaker || s.words != t.words || s.tokens != t.tokens ||
          s.user_info != t.user_info || s.topics != t.topics || s.act != t.act)
        return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Goal-oriented JSON

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key + ": missing field");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path + ": expected an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string())
      throw SchemaError(path + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(normalize_value(v[i].get<std::string>()));
  }
  return out;
}

SlotValue parse_slot_value(const json& v, const std::string& path) {
  SlotValue sv{normalize_value(require_string(v, "topic", path)),
               normalize_value(require_string(v, "slot", path)),
               normalize_value(require_string(v, "value", path))};
  if (sv.topic.empty() || sv.slot.empty() || sv.value.empty())
    throw SchemaError(path + ": topic, slot and value must be non-empty");
  return sv;
}

std::vector<SlotValue> parse_slot_values(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path + ": expected an array");
  std::vector<SlotValue> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(parse_slot_value(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

json slot_values_json(const std::vector<SlotValue>& svs) {
  json arr = json::array();
  for (const auto& sv : svs)
    arr.push_back({{"topic", sv.topic}, {"slot", sv.slot}, {"value", sv.value}});
  return arr;
}

} // namespace

Split default_split(const std::string& id) {
  std::uint64_t h = fnv1a64(id) % 10;
  if (h < 8) return Split::Train;
  return h == 8 ? Split::Valid : Split::Test;
}

Corpus parse_goal_oriented(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed json: ") + e.what());
  }
  const json& dialogues = require(doc, "dialogues", "$");
  if (!dialogues.is_array()) throw SchemaError("$.dialogues: expected an array");
  if (dialogues.empty()) throw EmptyCorpus("no dialogues");

  Corpus corpus;
  corpus.style = Style::GoalOriented;
  std::set<std::string> seen_ids;
  for (std::size_t di = 0; di < dialogues.size(); ++di) {
    const std::string dpath = "$.dialogues[" + std::to_string(di) + "]";
    const json& jd = dialogues[di];
    Dialogue d;
    d.id = require_string(jd, "id", dpath);
    if (!seen_ids.insert(d.id).second) throw SchemaError(dpath + ".id: duplicate id '" + d.id + "'");
    d.goal_topics = sorted_unique(string_list(require(jd, "goal_topics", dpath), dpath + ".goal_topics"));
    if (auto it = jd.find("split"); it != jd.end()) {
      if (!it->is_string()) throw SchemaError(dpath + ".split: expected a string");
      d.split = parse_split(it->get<std::string>());
    } else {
      d.split = default_split(d.id);
    }
    const json& turns = require(jd, "turns", dpath);
    if (!turns.is_array()) throw SchemaError(dpath + ".turns: expected an array");
    std::set<std::string> topic_union;
    for (std::size_t ti = 0; ti < turns.size(); ++ti) {
      const std::string tpath = dpath + ".turns[" + std::to_string(ti) + "]";
      const json& jt = turns[ti];
      Turn t;
      const std::string speaker = require_string(jt, "speaker", tpath);
      if (speaker == "user") t.speaker = Speaker::User;
      else if (speaker == "system") t.speaker = Speaker::System;
      else throw SchemaError(tpath + ".speaker: expected 'user' or 'system'");
      const Speaker expected = ti % 2 == 0 ? Speaker::User : Speaker::System;
      if (t.speaker != expected)
        throw SchemaError(tpath + ".speaker: turns must alternate user/system starting with user");
      t.words = tokenize(require_string(jt, "text", tpath));
      if (t.words.empty()) throw SchemaError(tpath + ".text: empty utterance");
      if (auto it = jt.find("info"); it != jt.end())
        t.user_info = parse_slot_values(*it, tpath + ".info");
      if (auto it = jt.find("topics"); it != jt.end())
        t.topics = sorted_unique(string_list(*it, tpath + ".topics"));
      if (auto it = jt.find("act"); it != jt.end() && !it->is_null()) {
        DialogueAct act;
        act.name = require_string(*it, "name", tpath + ".act");
        if (act.name.empty()) throw SchemaError(tpath + ".act.name: empty act name");
        act.args = parse_slot_values(require(*it, "args", tpath + ".act"), tpath + ".act.args");
        t.act = std::move(act);
      }
      if (t.speaker == Speaker::System && !t.user_info.empty())
        throw SchemaError(tpath + ": system turn carries user info");
      if (t.speaker == Speaker::User && t.act)
        throw SchemaError(tpath + ": user turn carries a system act");
      topic_union.insert(t.topics.begin(), t.topics.end());
      d.turns.push_back(std::move(t));
    }
    if (d.turns.empty()) throw SchemaError(dpath + ".turns: dialogue has no turns");
    if (std::vector<std::string>(topic_union.begin(), topic_union.end()) != d.goal_topics)
      throw SchemaError(dpath + ".goal_topics: must equal the union of per-turn topics");
    corpus.dialogues.push_back(std::move(d));
  }
  finalize(corpus);
  return corpus;
}

std::string serialize_goal_oriented(const Corpus& corpus) {
  json dialogues = json::array();
  for (const auto& d : corpus.dialogues) {
    json turns = json::array();
    for (const auto& t : d.turns) {
      json jt = {{"speaker", std::string(to_string(t.speaker))},
                 {"text", join(t.words, " ")},
                 {"info", slot_values_json(t.user_info)},
                 {"topics", t.topics}};
      if (t.act) jt["act"] = {{"name", t.act->name}, {"args", slot_values_json(t.act->args)}};
      else jt["act"] = nullptr;
      turns.push_back(std::move(jt));
    }
    dialogues.push_back({{"id", d.id},
                         {"split", std::string(to_string(d.split))},
                         {"goal_topics", d.goal_topics},
                         {"turns", std::move(turns)}});
  }
  return json{{"dialogues", std::move(dialogues)}}.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Chit-chat text

namespace {

// Strips a leading "<digits> " prefix; returns the number or -1.
long strip_line_number(std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0 || i >= line.size() || line[i] != ' ') return -1;
  long n = std::stol(line.substr(0, i));
  line = line.substr(i + 1);
  return n;
}

std::vector<std::string> persona_keywords(const std::vector<std::string>& sentences,
                                          const std::set<std::string>& stop_words) {
  std::set<std::string> kw;
  for (const auto& s : sentences)
    for (const auto& w : tokenize(s))
      if (!is_punct_token(w) && !stop_words.count(w)) kw.insert(w);
  return {kw.begin(), kw.end()};
}

} // namespace

Corpus parse_chitchat(std::string_view text, const std::set<std::string>& stop_words) {
  Corpus corpus;
  corpus.style = Style::ChitChat;
  Dialogue cur;
  bool in_utterances = false;
  auto close = [&] {
    if (cur.turns.empty() && cur.persona_sentences.empty()) return;
    if (cur.turns.empty())
      throw SchemaError("dialogue " + std::to_string(corpus.dialogues.size()) + ": persona without utterances");
    cur.id = "chitchat-" + std::to_string(corpus.dialogues.size());
    cur.split = default_split(cur.id);
    cur.persona = persona_keywords(cur.persona_sentences, stop_words);
    corpus.dialogues.push_back(std::move(cur));
    cur = Dialogue{};
    in_utterances = false;
  };

  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      close();
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    long number = strip_line_number(line);
    static const std::string kPersona = "your persona:";
    if (line.rfind(kPersona, 0) == 0) {
      if (in_utterances) close();  // numbering restarted without a blank line
      std::string sentence = trim(line.substr(kPersona.size()));
      if (sentence.empty()) throw SchemaError(where + ": empty persona sentence");
      cur.persona_sentences.push_back(join(tokenize(sentence), " "));
      continue;
    }
    if (number < 0) throw SchemaError(where + ": expected '<n> <utterance>\\t<response>'");
    if (number == 1 && in_utterances) close();
    auto fields = split(line, '\t');
    if (fields.size() < 2) throw SchemaError(where + ": missing tab-separated response");
    Turn user;
    user.speaker = Speaker::User;
    user.words = tokenize(fields[0]);
    Turn system;
    system.speaker = Speaker::System;
    system.words = tokenize(fields[1]);
    if (user.words.empty() || system.words.empty())
      throw SchemaError(where + ": empty utterance");
    cur.turns.push_back(std::move(user));
    cur.turns.push_back(std::move(system));
    in_utterances = true;
  }
  close();
  if (corpus.dialogues.empty()) throw EmptyCorpus("no dialogues");
  finalize(corpus);
  return corpus;
}

std::string serialize_chitchat(const Corpus& corpus) {
  std::string out;
  for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
    const Dialogue& d = corpus.dialogues[di];
    if (di) out += "\n";
    for (const auto& s : d.persona_sentences) out += "your persona: " + s + "\n";
    std::size_t n = 1;
    for (std::size_t i = 0; i + 1 < d.turns.size(); i += 2)
      out += std::to_string(n++) + " " + join(d.turns[i].words, " ") + "\t" +
             join(d.turns[i + 1].words, " ") + "\n";
  }
  return out;
}

Corpus load_corpus(const std::string& path) {
  const std::string text = read_file(path);
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
    return parse_goal_oriented(text);
  return parse_chitchat(text);
}

} // namespace dialprobe::corpus
