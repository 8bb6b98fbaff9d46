#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

/// Reviewer verdicts over exported candidates, with an append-only log.
namespace bria::review {

enum class Decision { Ctc, NonCtc, Artefact };
std::string_view decision_name(Decision d) noexcept;
/// Accepts "ctc", "non-ctc", "artefact"; throws Error(BadDecision).
Decision parse_decision(std::string_view text);

struct Verdict {
  std::string candidate_id;
  Decision decision = Decision::Ctc;
  std::string reviewer;
  /// RFC 3339 UTC, normalised to microseconds: 2024-01-02T03:04:05.000006Z.
  std::string ts;

  bool operator==(const Verdict&) const = default;
};

/// Current time in the normalised timestamp form.
std::string utc_now();
/// Parses an RFC 3339 timestamp with offset and returns the normalised UTC
/// form; throws Error(BadParams).
std::string normalize_timestamp(std::string_view text);

enum class SortKey { ProbabilityDesc, Id };
/// "probability" or "id"; throws Error(BadParams).
SortKey parse_sort(std::string_view text);

struct CandidateSummary {
  std::string id;
  double probability = 0.0;
  bool rule_pass = false;
  std::string composite_url;
  /// Effective verdicts recorded so far.
  int verdicts = 0;
};

struct Page {
  std::string slide_id;
  SortKey sort = SortKey::ProbabilityDesc;
  /// 1-based.
  int page = 1;
  int page_size = 20;
  int total = 0;
  int pages = 0;
  std::vector<CandidateSummary> items;
};

struct ReviewerProgress {
  std::string reviewer;
  int reviewed = 0;
  double percent = 0.0;
};

struct Disagreement {
  std::string candidate_id;
  std::map<std::string, Decision> by_reviewer;
};

struct ReviewReport {
  std::string slide_id;
  int candidates = 0;
  /// Candidates with at least one effective verdict.
  int reviewed = 0;
  double percent = 0.0;
  /// Candidates whose effective verdicts all agree, keyed by decision name.
  std::map<std::string, int> confirmed;
  std::vector<ReviewerProgress> progress;
  std::vector<Disagreement> disagreements;
};

std::string to_json(const Page& page);
std::string to_json(const ReviewReport& report);
std::string to_json(const Verdict& v);

/// Serves one or more pipeline export directories read-only. Verdicts for a
/// slide go to `<log_dir>/<slide_id>.verdicts.jsonl`, which is replayed on
/// construction.
class ReviewService {
public:
  ReviewService(const std::vector<std::filesystem::path>& export_dirs, std::filesystem::path log_dir);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  std::vector<std::string> slides() const;
  /// JSON array of {slide_id, config_hash, mode, candidates}.
  std::string slides_json() const;

  /// Throws Error(UnknownSlide) or Error(BadParams) for page < 1 or
  /// page_size outside [1, 1000].
  Page list_candidates(const std::string& slide_id, SortKey sort, int page, int page_size) const;

  /// Export record, image URLs and verdicts (effective ones flagged).
  /// Throws Error(UnknownCandidate).
  std::string candidate_json(const std::string& id) const;
  /// Throws Error(UnknownCandidate), or Error(BadParams) for an unknown kind.
  std::filesystem::path image_path(const std::string& id, const std::string& kind) const;

  /// Appends durably, then acknowledges. A verdict identical to a stored one
  /// is returned without a second append.
  Verdict post_verdict(const std::string& id, std::string_view decision, const std::string& reviewer,
                       std::optional<std::string> ts = std::nullopt);

  ReviewReport report(const std::string& slide_id) const;
  std::vector<Verdict> verdicts(const std::string& id) const;

private:
  struct Slide;
  struct State;
  std::unique_ptr<State> state_;
};

/// HTTP front end for a ReviewService.
class HttpServer {
public:
  explicit HttpServer(ReviewService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or throws
  /// Error(IoFailure).
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bria::review
