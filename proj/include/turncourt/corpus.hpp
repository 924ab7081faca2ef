// Copyright 2026 The turncourt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Turn-change corpus construction: transcript parsing, timestamp alignment,
// turn-change extraction, audio windowing and reviewer edits.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "turncourt/csv.hpp"
#include "turncourt/error.hpp"
#include "turncourt/util.hpp"

namespace turncourt::corpus {

// All window arithmetic happens on integer milliseconds.
using Millis = std::chrono::milliseconds;

inline Millis from_seconds(double s) {
  if (!std::isfinite(s)) throw RangeError("non-finite time value");
  return Millis(std::llround(s * 1000.0));
}

inline double to_seconds(Millis t) { return static_cast<double>(t.count()) / 1000.0; }

// ---------------------------------------------------------------------------
// Speakers

enum class Gender { female, male };
enum class Role { justice, attorney };

inline std::string_view to_string(Gender g) { return g == Gender::female ? "female" : "male"; }
inline std::string_view to_string(Role r) { return r == Role::justice ? "justice" : "attorney"; }

inline Gender parse_gender(std::string_view s) {
  s = trim(s);
  if (s == "female" || s == "F" || s == "f") return Gender::female;
  if (s == "male" || s == "M" || s == "m") return Gender::male;
  throw ParseError("unknown gender '" + std::string(s) + "'");
}

inline Role parse_role(std::string_view s) {
  s = trim(s);
  if (s == "justice") return Role::justice;
  if (s == "attorney") return Role::attorney;
  throw ParseError("unknown role '" + std::string(s) + "'");
}

struct Speaker {
  std::string id;
  std::string display_name;
  Gender gender = Gender::male;
  Role role = Role::attorney;

  friend bool operator==(const Speaker&, const Speaker&) = default;
};

class SpeakerRegistry {
 public:
  void add(Speaker s) {
    if (by_id_.count(s.id)) throw InputError("duplicate speaker id '" + s.id + "'");
    const auto id = s.id;
    by_name_[s.display_name] = id;
    by_id_.emplace(id, std::move(s));
  }

  const Speaker* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &it->second;
  }

  const Speaker& at(std::string_view id) const {
    if (const auto* s = find(id)) return *s;
    throw IdentityError("unknown speaker '" + std::string(id) + "'");
  }

  // Accepts either a registry id or a display name.
  std::string resolve(std::string_view name_or_id) const {
    if (find(name_or_id)) return std::string(name_or_id);
    auto it = by_name_.find(std::string(name_or_id));
    if (it != by_name_.end()) return it->second;
    throw IdentityError("speaker '" + std::string(name_or_id) +
                        "' is not in the speaker registry");
  }

  std::size_t size() const { return by_id_.size(); }
  const std::map<std::string, Speaker>& speakers() const { return by_id_; }

 private:
  std::map<std::string, Speaker> by_id_;
  std::map<std::string, std::string> by_name_;
};

// CSV with header speaker_id,display_name,gender,role.
inline SpeakerRegistry parse_speaker_registry(std::string_view text) {
  const auto table = csv::parse(text);
  SpeakerRegistry reg;
  if (table.header.empty()) return reg;
  const auto c_id = table.column("speaker_id");
  const auto c_name = table.column("display_name");
  const auto c_gender = table.column("gender");
  const auto c_role = table.column("role");
  for (const auto& row : table.rows) {
    try {
      reg.add(Speaker{row.fields[c_id], row.fields[c_name],
                      parse_gender(row.fields[c_gender]),
                      parse_role(row.fields[c_role])});
    } catch (const ParseError& e) {
      throw ParseError(e.what(), static_cast<std::int64_t>(row.line));
    }
  }
  return reg;
}

inline std::string serialize_speaker_registry(const SpeakerRegistry& reg) {
  std::string out = "speaker_id,display_name,gender,role\n";
  for (const auto& [id, s] : reg.speakers())
    out += csv::join({s.id, s.display_name, std::string(to_string(s.gender)),
                      std::string(to_string(s.role))});
  return out;
}

// ---------------------------------------------------------------------------
// Transcripts

struct Turn {
  std::string speaker_id;
  std::string text;
  bool ends_with_dash = false;
  std::size_t order_index = 0;

  friend bool operator==(const Turn&, const Turn&) = default;
};

inline bool text_ends_with_dash(std::string_view text) {
  const auto t = trim(text);
  return t.size() >= 2 && t.substr(t.size() - 2) == "--";
}

namespace detail {

// A speaker header is `Name:` where Name is a short run of capitalized words
// ("John G. Roberts, Jr.", "JUSTICE KAGAN", "Mr. Smith").
inline std::optional<std::pair<std::string, std::string>> split_header(
    std::string_view line) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  const auto name = trim(line.substr(0, colon));
  if (name.empty() || name.size() > 64) return std::nullopt;
  if (name.find_first_of("?!;\"()[]") != std::string_view::npos) return std::nullopt;
  std::size_t words = 0;
  std::size_t i = 0;
  while (i < name.size()) {
    while (i < name.size() && name[i] == ' ') ++i;
    if (i >= name.size()) break;
    const unsigned char c = static_cast<unsigned char>(name[i]);
    // Non-ASCII leading bytes are accepted so accented names work.
    if (c < 0x80 && !std::isupper(c)) return std::nullopt;
    ++words;
    while (i < name.size() && name[i] != ' ') ++i;
  }
  if (words == 0 || words > 6) return std::nullopt;
  return std::make_pair(std::string(name), std::string(trim(line.substr(colon + 1))));
}

inline void append_text(std::string& dst, std::string_view piece) {
  piece = trim(piece);
  if (piece.empty()) return;
  if (!dst.empty()) dst.push_back(' ');
  dst.append(piece);
}

}  // namespace detail

// Line-oriented `Name: speech`; lines without a header continue the
// previous turn.
inline std::vector<Turn> parse_transcript(std::string_view text) {
  std::vector<Turn> turns;
  std::vector<std::size_t> header_lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (trim(line).empty()) {
      if (nl == text.size()) break;
      continue;
    }
    if (auto header = detail::split_header(line)) {
      Turn t;
      t.speaker_id = std::move(header->first);
      t.order_index = turns.size();
      detail::append_text(t.text, header->second);
      turns.push_back(std::move(t));
      header_lines.push_back(line_no);
    } else if (turns.empty()) {
      throw ParseError("expected 'Speaker Name:' header before speech",
                       static_cast<std::int64_t>(line_no));
    } else {
      detail::append_text(turns.back().text, line);
    }
    if (nl == text.size()) break;
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].text.empty())
      throw ParseError("turn by '" + turns[i].speaker_id + "' has no speech",
                       static_cast<std::int64_t>(header_lines[i]));
    turns[i].ends_with_dash = text_ends_with_dash(turns[i].text);
  }
  return turns;
}

inline std::string serialize_transcript(const std::vector<Turn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    out += t.speaker_id;
    out += ": ";
    out += t.text;
    out += '\n';
  }
  return out;
}

// Maps transcript display names onto registry ids.
inline std::vector<Turn> resolve_speakers(std::vector<Turn> turns,
                                          const SpeakerRegistry& registry) {
  for (auto& t : turns) t.speaker_id = registry.resolve(t.speaker_id);
  return turns;
}

// ---------------------------------------------------------------------------
// Timing alignment

struct TimingRecord {
  std::string speaker_id;
  double start_s = 0;
  double end_s = 0;
  std::string text;
};

// CSV with header speaker_id,start_s,end_s,text.
inline std::vector<TimingRecord> parse_timings(std::string_view text) {
  const auto table = csv::parse(text);
  std::vector<TimingRecord> out;
  if (table.header.empty()) return out;
  const auto c_spk = table.column("speaker_id");
  const auto c_start = table.column("start_s");
  const auto c_end = table.column("end_s");
  const auto c_text = table.column("text");
  for (const auto& row : table.rows) {
    const auto start = parse_finite_double(row.fields[c_start]);
    const auto end = parse_finite_double(row.fields[c_end]);
    if (!start || !end)
      throw ParseError("non-numeric timestamp", static_cast<std::int64_t>(row.line));
    out.push_back({std::string(trim(row.fields[c_spk])), *start, *end, row.fields[c_text]});
  }
  return out;
}

struct TimedTurn {
  Turn turn;
  Millis start{0};
  Millis end{0};

  Millis duration() const { return end - start; }
  friend bool operator==(const TimedTurn&, const TimedTurn&) = default;
};

namespace detail {

struct Run {
  std::size_t begin;
  std::size_t count;
};

template <typename T, typename Key>
std::vector<Run> speaker_runs(const std::vector<T>& items, Key key) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!runs.empty() && key(items[runs.back().begin]) == key(items[i]))
      ++runs.back().count;
    else
      runs.push_back({i, 1});
  }
  return runs;
}

inline std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace detail

// Consecutive same-speaker timing records are sentence-level pieces of one
// turn. A run of k same-speaker turns facing m >= k records is split by
// matching accumulated word counts.
inline std::vector<TimedTurn> align_timestamps(const std::vector<Turn>& turns,
                                               const std::vector<TimingRecord>& timings) {
  const auto turn_runs =
      detail::speaker_runs(turns, [](const Turn& t) -> const std::string& { return t.speaker_id; });
  const auto rec_runs = detail::speaker_runs(
      timings, [](const TimingRecord& r) -> const std::string& { return r.speaker_id; });

  for (std::size_t i = 0; i < timings.size(); ++i)
    if (timings[i].end_s < timings[i].start_s || timings[i].start_s < 0)
      throw AlignmentError("timing record " + std::to_string(i) + " has an invalid span",
                           i < turns.size() ? i : turns.size());

  std::vector<TimedTurn> out;
  out.reserve(turns.size());
  auto emit = [&](std::size_t turn_idx, std::size_t rec_begin, std::size_t rec_count) {
    TimedTurn tt;
    tt.turn = turns[turn_idx];
    tt.start = from_seconds(timings[rec_begin].start_s);
    tt.end = from_seconds(timings[rec_begin + rec_count - 1].end_s);
    if (tt.end < tt.start)
      throw AlignmentError("covering records end before they start", turn_idx);
    out.push_back(std::move(tt));
  };

  for (std::size_t r = 0; r < turn_runs.size(); ++r) {
    const auto& tr = turn_runs[r];
    if (r >= rec_runs.size())
      throw AlignmentError("no timing records left for this turn", tr.begin);
    const auto& rr = rec_runs[r];
    if (turns[tr.begin].speaker_id != timings[rr.begin].speaker_id)
      throw AlignmentError("transcript speaker '" + turns[tr.begin].speaker_id +
                               "' but timing speaker '" + timings[rr.begin].speaker_id + "'",
                           tr.begin);
    if (rr.count < tr.count)
      throw AlignmentError("fewer timing records than turns for speaker '" +
                               turns[tr.begin].speaker_id + "'",
                           tr.begin + rr.count);
    if (tr.count == 1) {
      emit(tr.begin, rr.begin, rr.count);
    } else if (tr.count == rr.count) {
      for (std::size_t j = 0; j < tr.count; ++j) emit(tr.begin + j, rr.begin + j, 1);
    } else {
      std::size_t rec = rr.begin;
      const std::size_t rec_end = rr.begin + rr.count;
      for (std::size_t j = 0; j < tr.count; ++j) {
        const std::size_t turns_left = tr.count - j - 1;
        if (turns_left == 0) {
          emit(tr.begin + j, rec, rec_end - rec);
          break;
        }
        const std::size_t target = detail::word_count(turns[tr.begin + j].text);
        std::size_t taken = 0;
        std::size_t words = 0;
        while (rec + taken < rec_end - turns_left &&
               (taken == 0 || words < target)) {
          words += detail::word_count(timings[rec + taken].text);
          ++taken;
        }
        emit(tr.begin + j, rec, taken);
        rec += taken;
      }
    }
  }
  if (rec_runs.size() > turn_runs.size())
    throw AlignmentError("timing records continue past the end of the transcript",
                         turns.size());

  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].start < out[i - 1].start)
      throw AlignmentError("turn starts before the previous turn", i);
  return out;
}

// ---------------------------------------------------------------------------
// Turn changes and windows

struct SegmentWindow {
  Millis start{0};
  Millis end{0};

  Millis length() const { return end - start; }
  friend bool operator==(const SegmentWindow&, const SegmentWindow&) = default;
};

enum class Status { kept, removed_inaudible, removed_same_speaker, removed_scripted };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::kept: return "kept";
    case Status::removed_inaudible: return "removed_inaudible";
    case Status::removed_same_speaker: return "removed_same_speaker";
    case Status::removed_scripted: return "removed_scripted";
  }
  return "kept";
}

inline Status parse_status(std::string_view s) {
  if (s == "kept") return Status::kept;
  if (s == "removed_inaudible") return Status::removed_inaudible;
  if (s == "removed_same_speaker") return Status::removed_same_speaker;
  if (s == "removed_scripted") return Status::removed_scripted;
  throw ParseError("unknown turn-change status '" + std::string(s) + "'");
}

struct TurnChange {
  std::string id;
  std::string argument_id;
  TimedTurn first;
  TimedTurn second;
  SegmentWindow window;
  Status status = Status::kept;

  friend bool operator==(const TurnChange&, const TurnChange&) = default;
};

struct WindowRules {
  Millis before_first_end{2000};
  Millis after_second_start{4000};
  Millis max_edit{1000};
  Millis max_length{8000};
};

// Two seconds before the first speaker's end label and four seconds after
// the second speaker's start label, each clipped to the speaker's own turn.
inline SegmentWindow compute_segment_window(const TurnChange& tc,
                                            const WindowRules& rules = {}) {
  SegmentWindow w;
  w.start = std::max(tc.first.end - rules.before_first_end, tc.first.start);
  w.end = std::min(tc.second.start + rules.after_second_start, tc.second.end);
  if (w.end <= w.start)
    throw DegenerateWindowError("turn change " + tc.id + ": window [" +
                                format_double(to_seconds(w.start)) + ", " +
                                format_double(to_seconds(w.end)) + "] is empty");
  return w;
}

inline const std::vector<std::string>& default_scripted_patterns() {
  static const std::vector<std::string> patterns = {
      R"(^\s*((mr|ms|mrs)\.?|madam|madame)?\s*chief\s+justice,?\s+(and\s+)?may\s+it\s+please\s+the\s+court)",
  };
  return patterns;
}

struct ExtractOptions {
  WindowRules rules;
  // Same-speaker neighbours closer than this are merged into one turn.
  Millis merge_gap{500};
  std::vector<std::string> scripted_patterns = default_scripted_patterns();
};

namespace detail {

inline std::string change_id(std::string_view argument_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return std::string(argument_id) + "_" + buf;
}

inline TimedTurn merge_turns(const TimedTurn& a, const TimedTurn& b) {
  TimedTurn m = a;
  m.turn.text += ' ';
  m.turn.text += b.turn.text;
  m.turn.ends_with_dash = b.turn.ends_with_dash;
  m.end = std::max(a.end, b.end);
  return m;
}

}  // namespace detail

inline bool matches_scripted(std::string_view text, const std::vector<std::regex>& patterns) {
  const std::string s(text);
  for (const auto& re : patterns)
    if (std::regex_search(s, re)) return true;
  return false;
}

inline std::vector<std::regex> compile_patterns(const std::vector<std::string>& patterns) {
  std::vector<std::regex> out;
  for (const auto& p : patterns) {
    try {
      out.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw ConfigError("bad scripted-turn pattern '" + p + "': " + e.what());
    }
  }
  return out;
}

// One TurnChange per adjacent pair of turns. Pairs with the same speaker are
// emitted as removed_same_speaker so reviewers can see them.
inline std::vector<TurnChange> extract_turn_changes(const std::vector<TimedTurn>& timed,
                                                    const std::string& argument_id = "arg",
                                                    const ExtractOptions& options = {}) {
  std::vector<TurnChange> out;
  if (timed.size() < 2) return out;
  const auto scripted = compile_patterns(options.scripted_patterns);

  TimedTurn prev = timed.front();
  for (std::size_t i = 1; i < timed.size(); ++i) {
    const TimedTurn& cur = timed[i];
    TurnChange tc;
    tc.id = detail::change_id(argument_id, out.size());
    tc.argument_id = argument_id;
    tc.first = prev;
    tc.second = cur;
    const bool same = prev.turn.speaker_id == cur.turn.speaker_id;
    if (same)
      tc.status = Status::removed_same_speaker;
    else if (matches_scripted(cur.turn.text, scripted))
      tc.status = Status::removed_scripted;

    try {
      tc.window = compute_segment_window(tc, options.rules);
    } catch (const DegenerateWindowError&) {
      // Overlap where the second turn ends before the first speaker's final
      // two seconds: centre on the second speaker's onset instead.
      SegmentWindow w;
      w.start = std::max(tc.first.start, tc.second.start - options.rules.before_first_end);
      w.end = std::min(tc.second.start + options.rules.after_second_start, tc.second.end);
      if (w.end <= w.start) {
        w = {tc.first.start, std::max(tc.first.end, tc.first.start + Millis(1))};
        if (tc.status == Status::kept) tc.status = Status::removed_inaudible;
      }
      tc.window = w;
    }
    out.push_back(std::move(tc));

    if (same && cur.start - prev.end < options.merge_gap)
      prev = detail::merge_turns(prev, cur);
    else
      prev = cur;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reviewer edits

enum class EditKind {
  trim_start,
  trim_end,
  extend_start,
  extend_end,
  remove,
  swap_speakers,
  rename_speaker
};

inline EditKind parse_edit_kind(std::string_view s) {
  s = trim(s);
  if (s == "trim_start") return EditKind::trim_start;
  if (s == "trim_end") return EditKind::trim_end;
  if (s == "extend_start") return EditKind::extend_start;
  if (s == "extend_end") return EditKind::extend_end;
  if (s == "remove") return EditKind::remove;
  if (s == "swap_speakers") return EditKind::swap_speakers;
  if (s == "rename_speaker") return EditKind::rename_speaker;
  throw ParseError("unknown edit kind '" + std::string(s) + "'");
}

struct ReviewEdit {
  std::string turn_change_id;
  EditKind kind = EditKind::remove;
  Millis amount{0};
  // remove: inaudible | same_speaker | scripted (default inaudible).
  // rename_speaker: "first=<speaker_id>" or "second=<speaker_id>".
  std::string payload;
};

// CSV with header turn_change_id,kind,amount_s,payload.
inline std::vector<ReviewEdit> parse_review_edits(std::string_view text) {
  const auto table = csv::parse(text);
  std::vector<ReviewEdit> out;
  if (table.header.empty()) return out;
  const auto c_id = table.column("turn_change_id");
  const auto c_kind = table.column("kind");
  const auto c_amount = table.column("amount_s");
  const auto c_payload = table.column("payload");
  for (const auto& row : table.rows) {
    ReviewEdit e;
    e.turn_change_id = std::string(trim(row.fields[c_id]));
    try {
      e.kind = parse_edit_kind(row.fields[c_kind]);
    } catch (const ParseError& err) {
      throw ParseError(err.what(), static_cast<std::int64_t>(row.line));
    }
    if (!trim(row.fields[c_amount]).empty()) {
      const auto a = parse_finite_double(row.fields[c_amount]);
      if (!a) throw ParseError("non-numeric amount_s", static_cast<std::int64_t>(row.line));
      e.amount = from_seconds(*a);
    }
    e.payload = std::string(trim(row.fields[c_payload]));
    out.push_back(std::move(e));
  }
  return out;
}

// Edits apply in list order; each is validated against the current state.
inline std::vector<TurnChange> apply_review_edits(std::vector<TurnChange> corpus,
                                                  const std::vector<ReviewEdit>& edits,
                                                  const WindowRules& rules = {}) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index[corpus[i].id] = i;

  for (const auto& e : edits) {
    auto it = index.find(e.turn_change_id);
    if (it == index.end())
      throw EditError("edit references unknown turn change '" + e.turn_change_id + "'");
    TurnChange& tc = corpus[it->second];
    const bool timed_edit = e.kind == EditKind::trim_start || e.kind == EditKind::trim_end ||
                            e.kind == EditKind::extend_start || e.kind == EditKind::extend_end;
    if (timed_edit && (e.amount <= Millis(0) || e.amount > rules.max_edit))
      throw EditError("turn change " + tc.id + ": edit amount " +
                      format_double(to_seconds(e.amount)) + " s outside (0, " +
                      format_double(to_seconds(rules.max_edit)) + "]");
    SegmentWindow w = tc.window;
    switch (e.kind) {
      case EditKind::trim_start: w.start += e.amount; break;
      case EditKind::trim_end: w.end -= e.amount; break;
      case EditKind::extend_start: w.start -= e.amount; break;
      case EditKind::extend_end: w.end += e.amount; break;
      case EditKind::remove:
        if (e.payload.empty() || e.payload == "inaudible")
          tc.status = Status::removed_inaudible;
        else if (e.payload == "same_speaker")
          tc.status = Status::removed_same_speaker;
        else if (e.payload == "scripted")
          tc.status = Status::removed_scripted;
        else
          throw EditError("turn change " + tc.id + ": unknown removal reason '" + e.payload + "'");
        break;
      case EditKind::swap_speakers: std::swap(tc.first, tc.second); break;
      case EditKind::rename_speaker: {
        const auto eq = e.payload.find('=');
        const auto which = e.payload.substr(0, eq);
        if (eq == std::string::npos || eq + 1 == e.payload.size() ||
            (which != "first" && which != "second"))
          throw EditError("turn change " + tc.id +
                          ": rename payload must be first=<id> or second=<id>");
        (which == "first" ? tc.first : tc.second).turn.speaker_id = e.payload.substr(eq + 1);
        break;
      }
    }
    if (timed_edit) {
      if (w.end <= w.start)
        throw DegenerateWindowError("turn change " + tc.id + ": edit leaves an empty window");
      if (w.start < Millis(0))
        throw EditError("turn change " + tc.id + ": window would start before 0 s");
      if (w.length() > rules.max_length)
        throw EditError("turn change " + tc.id + ": window would exceed " +
                        format_double(to_seconds(rules.max_length)) + " s");
      tc.window = w;
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Manifest (JSON Lines)

inline nlohmann::json to_json(const TimedTurn& t) {
  return {{"speaker_id", t.turn.speaker_id},
          {"text", t.turn.text},
          {"ends_with_dash", t.turn.ends_with_dash},
          {"order_index", t.turn.order_index},
          {"start_s", to_seconds(t.start)},
          {"end_s", to_seconds(t.end)}};
}

inline TimedTurn timed_turn_from_json(const nlohmann::json& j) {
  TimedTurn t;
  t.turn.speaker_id = j.at("speaker_id").get<std::string>();
  t.turn.text = j.at("text").get<std::string>();
  t.turn.ends_with_dash = j.at("ends_with_dash").get<bool>();
  t.turn.order_index = j.at("order_index").get<std::size_t>();
  t.start = from_seconds(j.at("start_s").get<double>());
  t.end = from_seconds(j.at("end_s").get<double>());
  return t;
}

inline nlohmann::json to_json(const TurnChange& tc) {
  return {{"id", tc.id},
          {"argument_id", tc.argument_id},
          {"first", to_json(tc.first)},
          {"second", to_json(tc.second)},
          {"window", {{"start_s", to_seconds(tc.window.start)}, {"end_s", to_seconds(tc.window.end)}}},
          {"status", std::string(to_string(tc.status))}};
}

inline TurnChange turn_change_from_json(const nlohmann::json& j) {
  TurnChange tc;
  tc.id = j.at("id").get<std::string>();
  tc.argument_id = j.at("argument_id").get<std::string>();
  tc.first = timed_turn_from_json(j.at("first"));
  tc.second = timed_turn_from_json(j.at("second"));
  tc.window.start = from_seconds(j.at("window").at("start_s").get<double>());
  tc.window.end = from_seconds(j.at("window").at("end_s").get<double>());
  tc.status = parse_status(j.at("status").get<std::string>());
  return tc;
}

inline std::string serialize_manifest(const std::vector<TurnChange>& changes) {
  std::string out;
  for (const auto& tc : changes) {
    out += to_json(tc).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<TurnChange> parse_manifest(std::string_view text) {
  std::vector<TurnChange> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(turn_change_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what(), static_cast<std::int64_t>(line_no));
    }
  }
  return out;
}

}  // namespace turncourt::corpus
