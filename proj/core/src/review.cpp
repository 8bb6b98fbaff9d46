#include "bria/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "bria/error.hpp"

namespace bria::review {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view decision_name(Decision d) noexcept {
  switch (d) {
    case Decision::Ctc: return "ctc";
    case Decision::NonCtc: return "non-ctc";
    case Decision::Artefact: return "artefact";
  }
  return "";
}

Decision parse_decision(std::string_view text) {
  for (Decision d : {Decision::Ctc, Decision::NonCtc, Decision::Artefact})
    if (decision_name(d) == text) return d;
  throw Error(ErrorCode::BadDecision, "decision must be ctc, non-ctc or artefact, got '" + std::string(text) + "'");
}

SortKey parse_sort(std::string_view text) {
  if (text == "probability") return SortKey::ProbabilityDesc;
  if (text == "id") return SortKey::Id;
  throw Error(ErrorCode::BadParams, "sort must be probability or id");
}

namespace {

std::string format_utc(std::chrono::sys_time<std::chrono::microseconds> t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%06lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), static_cast<long long>(hms.subseconds().count()));
  return buf;
}

}  // namespace

std::string utc_now() {
  return format_utc(std::chrono::floor<std::chrono::microseconds>(std::chrono::system_clock::now()));
}

std::string normalize_timestamp(std::string_view s) {
  auto bad = [&] { return Error(ErrorCode::BadParams, "not an RFC 3339 timestamp: '" + std::string(s) + "'"); };
  auto num = [&](std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) throw bad();
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc{} || p != s.data() + pos + len) throw bad();
    return v;
  };
  auto expect = [&](std::size_t pos, std::string_view set) {
    if (pos >= s.size() || set.find(s[pos]) == std::string_view::npos) throw bad();
  };
  const int Y = num(0, 4);
  expect(4, "-");
  const int M = num(5, 2);
  expect(7, "-");
  const int D = num(8, 2);
  expect(10, "Tt ");
  const int h = num(11, 2);
  expect(13, ":");
  const int m = num(14, 2);
  expect(16, ":");
  const int sec = num(17, 2);
  std::size_t pos = 19;
  long long micros = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 6) micros = micros * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) throw bad();
    for (int d = digits; d < 6; ++d) micros *= 10;
  }
  int offset_min = 0;
  if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
    ++pos;
  } else {
    expect(pos, "+-");
    const int sign = s[pos] == '-' ? -1 : 1;
    const int oh = num(pos + 1, 2);
    expect(pos + 3, ":");
    const int om = num(pos + 4, 2);
    offset_min = sign * (oh * 60 + om);
    pos += 6;
  }
  if (pos != s.size()) throw bad();
  using namespace std::chrono;
  const year_month_day ymd{year{Y}, month{static_cast<unsigned>(M)}, day{static_cast<unsigned>(D)}};
  if (!ymd.ok() || h > 23 || m > 59 || sec > 60) throw bad();
  const sys_time<microseconds> t = sys_days{ymd} + hours{h} + minutes{m} + seconds{sec} + microseconds{micros} -
                                   minutes{offset_min};
  return format_utc(t);
}

std::string to_json(const Verdict& v) {
  return json{{"candidate_id", v.candidate_id},
              {"decision", decision_name(v.decision)},
              {"reviewer", v.reviewer},
              {"ts", v.ts}}
      .dump();
}

namespace {

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.candidate_id = j.at("candidate_id").get<std::string>();
  v.decision = parse_decision(j.at("decision").get<std::string>());
  v.reviewer = j.at("reviewer").get<std::string>();
  v.ts = j.at("ts").get<std::string>();
  return v;
}

std::string image_url(const std::string& id, const std::string& kind) { return "/candidates/" + id + "/image/" + kind; }

/// Latest timestamp per reviewer; ties go to the later log entry.
std::map<std::string, const Verdict*> effective(const std::vector<Verdict>& log) {
  std::map<std::string, const Verdict*> out;
  for (const Verdict& v : log) {
    auto [it, inserted] = out.try_emplace(v.reviewer, &v);
    if (!inserted && v.ts >= it->second->ts) it->second = &v;
  }
  return out;
}

}  // namespace

struct ReviewService::Slide {
  std::string id;
  fs::path dir;
  json doc;
  std::vector<std::string> ids;
  fs::path log_path;
  int log_fd = -1;
};

struct ReviewService::State {
  std::map<std::string, Slide> slides;
  std::unordered_map<std::string, std::pair<Slide*, std::size_t>> candidates;
  std::unordered_map<std::string, std::vector<Verdict>> verdicts;
  mutable std::shared_mutex mu;

  const std::pair<Slide*, std::size_t>& find(const std::string& id) const {
    const auto it = candidates.find(id);
    if (it == candidates.end()) throw Error(ErrorCode::UnknownCandidate, id);
    return it->second;
  }
  const Slide& slide(const std::string& id) const {
    const auto it = slides.find(id);
    if (it == slides.end()) throw Error(ErrorCode::UnknownSlide, id);
    return it->second;
  }
  const std::vector<Verdict>& log_of(const std::string& id) const {
    static const std::vector<Verdict> none;
    const auto it = verdicts.find(id);
    return it == verdicts.end() ? none : it->second;
  }
};

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Reads the log, dropping a torn final line left by a crash mid-append.
std::vector<std::string> read_log_lines(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t complete = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
  if (complete != text.size()) fs::resize_file(path, complete);
  std::istringstream ss(text.substr(0, complete));
  for (std::string line; std::getline(ss, line);)
    if (!line.empty()) lines.push_back(std::move(line));
  return lines;
}

void append_durably(int fd, const std::string& line) {
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) throw Error(ErrorCode::IoFailure, "verdict log write failed");
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) throw Error(ErrorCode::IoFailure, "verdict log fsync failed");
}

}  // namespace

ReviewService::ReviewService(const std::vector<fs::path>& export_dirs, fs::path log_dir)
    : state_(std::make_unique<State>()) {
  std::error_code ec;
  fs::create_directories(log_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + log_dir.string() + ": " + ec.message());
  for (const fs::path& dir : export_dirs) {
    json doc = read_json(dir / "candidates.json");
    const std::string sid = doc.at("slide_id").get<std::string>();
    auto [it, inserted] = state_->slides.try_emplace(sid);
    if (!inserted) throw Error(ErrorCode::BadParams, "slide " + sid + " exported twice");
    Slide& s = it->second;
    s.id = sid;
    s.dir = dir;
    s.doc = std::move(doc);
    s.log_path = log_dir / (sid + ".verdicts.jsonl");
    for (std::size_t i = 0; i < s.doc.at("candidates").size(); ++i) {
      std::string id = s.doc["candidates"][i].at("id").get<std::string>();
      if (!state_->candidates.try_emplace(id, &s, i).second) {
        throw Error(ErrorCode::BadParams, "duplicate candidate id " + id);
      }
      s.ids.push_back(std::move(id));
    }
    for (const std::string& line : read_log_lines(s.log_path)) {
      Verdict v;
      try {
        v = verdict_from_json(json::parse(line));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, s.log_path.string() + ": " + e.what());
      }
      if (state_->candidates.find(v.candidate_id) == state_->candidates.end()) {
        throw Error(ErrorCode::UnknownCandidate, s.log_path.string() + " refers to " + v.candidate_id);
      }
      state_->verdicts[v.candidate_id].push_back(std::move(v));
    }
    s.log_fd = ::open(s.log_path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (s.log_fd < 0) throw Error(ErrorCode::IoFailure, "cannot open " + s.log_path.string());
  }
}

ReviewService::~ReviewService() {
  for (auto& [id, s] : state_->slides)
    if (s.log_fd >= 0) ::close(s.log_fd);
}

std::vector<std::string> ReviewService::slides() const {
  std::vector<std::string> out;
  for (const auto& [id, s] : state_->slides) out.push_back(id);
  return out;
}

std::string ReviewService::slides_json() const {
  json arr = json::array();
  for (const auto& [id, s] : state_->slides) {
    arr.push_back({{"slide_id", id},
                   {"config_hash", s.doc.value("config_hash", "")},
                   {"mode", s.doc.value("mode", "")},
                   {"candidates", s.ids.size()}});
  }
  return arr.dump();
}

Page ReviewService::list_candidates(const std::string& slide_id, SortKey sort, int page, int page_size) const {
  std::shared_lock lock(state_->mu);
  const Slide& s = state_->slide(slide_id);
  if (page < 1) throw Error(ErrorCode::BadParams, "page must be >= 1");
  if (page_size < 1 || page_size > 1000) throw Error(ErrorCode::BadParams, "page_size must be in [1, 1000]");
  std::vector<std::size_t> order(s.ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const json& cands = s.doc["candidates"];
  if (sort == SortKey::ProbabilityDesc) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double pa = cands[a].value("probability", 0.0), pb = cands[b].value("probability", 0.0);
      if (pa != pb) return pa > pb;
      return s.ids[a] < s.ids[b];
    });
  } else {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.ids[a] < s.ids[b]; });
  }
  Page p;
  p.slide_id = slide_id;
  p.sort = sort;
  p.page = page;
  p.page_size = page_size;
  p.total = static_cast<int>(order.size());
  p.pages = (p.total + page_size - 1) / page_size;
  const long first = static_cast<long>(page - 1) * page_size;
  for (long k = first; k < std::min<long>(first + page_size, p.total); ++k) {
    const std::size_t i = order[k];
    p.items.push_back({s.ids[i], cands[i].value("probability", 0.0), cands[i].value("rule_pass", false),
                       image_url(s.ids[i], "composite"),
                       static_cast<int>(effective(state_->log_of(s.ids[i])).size())});
  }
  return p;
}

std::string ReviewService::candidate_json(const std::string& id) const {
  std::shared_lock lock(state_->mu);
  const auto& [s, i] = state_->find(id);
  const json& c = s->doc["candidates"][i];
  json urls = json::object();
  if (c.contains("images"))
    for (const auto& [kind, rel] : c["images"].items()) urls[kind] = image_url(id, kind);
  const auto& log = state_->log_of(id);
  const auto eff = effective(log);
  json vs = json::array();
  for (const Verdict& v : log) {
    json j = json::parse(to_json(v));
    j["effective"] = eff.at(v.reviewer) == &v;
    vs.push_back(std::move(j));
  }
  return json{{"slide_id", s->id}, {"candidate", c}, {"image_urls", urls}, {"verdicts", vs}}.dump();
}

fs::path ReviewService::image_path(const std::string& id, const std::string& kind) const {
  std::shared_lock lock(state_->mu);
  const auto& [s, i] = state_->find(id);
  const json& c = s->doc["candidates"][i];
  if (!c.contains("images") || !c["images"].contains(kind)) {
    throw Error(ErrorCode::BadParams, "no image of kind '" + kind + "' for " + id);
  }
  return s->dir / c["images"][kind].get<std::string>();
}

Verdict ReviewService::post_verdict(const std::string& id, std::string_view decision, const std::string& reviewer,
                                    std::optional<std::string> ts) {
  Verdict v;
  v.candidate_id = id;
  v.decision = parse_decision(decision);
  if (reviewer.empty()) throw Error(ErrorCode::BadParams, "reviewer is required");
  v.reviewer = reviewer;
  std::unique_lock lock(state_->mu);
  Slide* s = state_->find(id).first;
  v.ts = ts ? normalize_timestamp(*ts) : utc_now();
  auto& log = state_->verdicts[id];
  if (std::find(log.begin(), log.end(), v) != log.end()) return v;
  append_durably(s->log_fd, to_json(v) + "\n");
  log.push_back(v);
  return v;
}

std::vector<Verdict> ReviewService::verdicts(const std::string& id) const {
  std::shared_lock lock(state_->mu);
  state_->find(id);
  return state_->log_of(id);
}

ReviewReport ReviewService::report(const std::string& slide_id) const {
  std::shared_lock lock(state_->mu);
  const Slide& s = state_->slide(slide_id);
  ReviewReport r;
  r.slide_id = slide_id;
  r.candidates = static_cast<int>(s.ids.size());
  for (Decision d : {Decision::Ctc, Decision::NonCtc, Decision::Artefact}) r.confirmed[std::string(decision_name(d))] = 0;
  std::map<std::string, int> per_reviewer;
  for (const std::string& id : s.ids) {
    const auto eff = effective(state_->log_of(id));
    if (eff.empty()) continue;
    ++r.reviewed;
    for (const auto& [who, v] : eff) ++per_reviewer[who];
    const Decision first = eff.begin()->second->decision;
    const bool agree = std::all_of(eff.begin(), eff.end(), [&](const auto& e) { return e.second->decision == first; });
    if (agree) {
      ++r.confirmed[std::string(decision_name(first))];
    } else {
      Disagreement d{id, {}};
      for (const auto& [who, v] : eff) d.by_reviewer[who] = v->decision;
      r.disagreements.push_back(std::move(d));
    }
  }
  auto pct = [&](int n) { return r.candidates == 0 ? 0.0 : 100.0 * n / r.candidates; };
  r.percent = pct(r.reviewed);
  for (const auto& [who, n] : per_reviewer) r.progress.push_back({who, n, pct(n)});
  return r;
}

std::string to_json(const Page& p) {
  json items = json::array();
  for (const auto& c : p.items) {
    items.push_back({{"id", c.id},
                     {"probability", c.probability},
                     {"rule_pass", c.rule_pass},
                     {"composite_url", c.composite_url},
                     {"verdicts", c.verdicts}});
  }
  return json{{"slide_id", p.slide_id},
              {"sort", p.sort == SortKey::Id ? "id" : "probability"},
              {"page", p.page},
              {"page_size", p.page_size},
              {"total", p.total},
              {"pages", p.pages},
              {"items", items}}
      .dump();
}

std::string to_json(const ReviewReport& r) {
  json progress = json::array();
  for (const auto& p : r.progress) progress.push_back({{"reviewer", p.reviewer}, {"reviewed", p.reviewed}, {"percent", p.percent}});
  json dis = json::array();
  for (const auto& d : r.disagreements) {
    json by = json::object();
    for (const auto& [who, dec] : d.by_reviewer) by[who] = decision_name(dec);
    dis.push_back({{"candidate_id", d.candidate_id}, {"verdicts", by}});
  }
  return json{{"slide_id", r.slide_id},
              {"candidates", r.candidates},
              {"reviewed", r.reviewed},
              {"percent", r.percent},
              {"confirmed", r.confirmed},
              {"progress", progress},
              {"disagreements", dis}}
      .dump();
}

}  // namespace bria::review
