#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trafficview/aggregate.hpp"
#include "trafficview/evalmetrics.hpp"

namespace trafficview::summarize {

enum class Stage { A, B, C, D };

std::string to_string(Stage s);
Stage parse_stage(std::string_view s);

struct PromptStage {
  Stage stage = Stage::A;
  std::vector<std::string> required_sections;
  bool numeric_rules = false;
  bool exemplars = false;
};

/// Section headers for a given pair of years.
std::vector<std::string> section_headers(int pre_year, int post_year);

PromptStage prompt_stage(Stage s, int pre_year = 2024, int post_year = 2025);

enum class Theme { mode_shifts, zone_spillovers, temporal_heterogeneity, industry_impacts };

inline constexpr Theme kAllThemes[] = {Theme::mode_shifts, Theme::zone_spillovers, Theme::temporal_heterogeneity,
                                       Theme::industry_impacts};

std::string to_string(Theme t);
Theme parse_theme(std::string_view s);
/// Natural-language retrieval query for a theme ("mode shifts", ...).
std::string theme_query(Theme t);

/// Sparse term-frequency vector, sorted by term.
using TermVector = std::vector<std::pair<std::string, double>>;

/// Term frequencies of lowercased alphanumeric tokens, L2-normalized.
/// Empty text yields an empty vector.
TermVector term_vector(std::string_view text);
double cosine(const TermVector& a, const TermVector& b);

struct ExemplarChunk {
  std::string chunk_id;
  Theme theme = Theme::mode_shifts;
  std::string text;
  TermVector terms;
};

ExemplarChunk make_chunk(std::string chunk_id, Theme theme, std::string text);

/// JSON-lines `{chunk_id, theme, text}`.
std::vector<ExemplarChunk> load_exemplar_library(const std::string& path);

/// Top-k chunks by cosine similarity to the query, similarity descending,
/// then chunk_id ascending.
std::vector<ExemplarChunk> select_exemplars(std::span<const ExemplarChunk> library, std::string_view query,
                                            std::size_t top_k);

/// The statistics a prompt is built from.
struct PromptInputs {
  std::string pre_label;
  std::string post_label;
  int pre_year = 2024;
  int post_year = 2025;
  aggregate::Schema schema = aggregate::Schema::zone;
  std::vector<aggregate::StatBundle> pre_stats;
  std::vector<aggregate::StatBundle> post_stats;
  std::vector<aggregate::ChangeRecord> changes;
  std::size_t top_k = 3;
};

/// Marker lines delimiting the machine-readable change table in a prompt.
inline constexpr const char* kChangesBegin = "BEGIN CHANGES";
inline constexpr const char* kChangesEnd = "END CHANGES";
inline constexpr const char* kCorrectionsMarker = "Corrections:";

/// Builds the prompt for one stage. Stage D appends, per theme, the top
/// `exemplar_top_k` chunks of that theme from the library. Throws
/// InvalidArgument when the statistics are empty or when stage D gets an
/// empty library.
std::string build_prompt(Stage stage, const PromptInputs& inputs, std::span<const ExemplarChunk> library = {},
                         std::size_t exemplar_top_k = 2);

/// Structural requirements a prompt imposes, detected from its text.
enum class Requirement {
  summarize_instruction,
  section_headers,
  mode_coverage,
  spatial_highlights,
  numeric_quartet,
  peak_weekday_splits,
  top_k_lists,
  domain_exemplars,
};

std::set<Requirement> prompt_requirements(std::string_view prompt);

/// Parses the change table embedded in a prompt.
std::vector<aggregate::ChangeRecord> parse_prompt_changes(std::string_view prompt);

struct GenerationConfig {
  double temperature = 0.2;
  double top_p = 0.9;
  int n_best = 2;
  int max_retries = 3;

  /// Throws ConfigError when a field is outside its allowed range
  /// (temperature [0, 0.3], top_p [0.8, 1], n_best {2, 3}, retries >= 0).
  void validate() const;
};

inline const std::vector<double> kDefaultSweep{0.2, 0.25, 0.3};

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.2;
  double top_p = 0.9;
  int n = 1;
};

/// A text-generation endpoint. Implementations return exactly `n`
/// completions or throw TransportError.
class TextGenClient {
 public:
  virtual ~TextGenClient() = default;
  virtual std::vector<std::string> complete(const GenerationRequest& request) = 0;
};

/// HTTP JSON endpoint: POST `{prompt, temperature, top_p, n}`, response
/// `{completions: [text]}`. A non-empty token is sent as a Bearer header.
class HttpTextGenClient : public TextGenClient {
 public:
  HttpTextGenClient(std::string url, std::string token = {}, int timeout_seconds = 60);
  std::vector<std::string> complete(const GenerationRequest& request) override;

 private:
  std::string url_;
  std::string token_;
  int timeout_seconds_;
};

/// Deterministic template-filling stand-in for a language model. It reads
/// the change table out of the prompt and writes a report whose structure
/// follows the prompt's requirements. Output does not depend on temperature.
class MockTextGenClient : public TextGenClient {
 public:
  enum class Behavior {
    faithful,  // states every number correctly
    drift,     // first pct change off by +3 pp until a corrective prompt arrives
    stubborn,  // first pct change always off by +3 pp
    failing,   // every request throws TransportError
  };

  explicit MockTextGenClient(Behavior behavior = Behavior::faithful) : behavior_(behavior) {}
  std::vector<std::string> complete(const GenerationRequest& request) override;

  std::size_t requests() const noexcept { return prompts_.size(); }
  const std::vector<std::string>& prompts() const noexcept { return prompts_; }

 private:
  Behavior behavior_;
  std::vector<std::string> prompts_;
};

MockTextGenClient::Behavior parse_mock_behavior(std::string_view s);

/// Writes the report body the faithful mock would produce for `prompt`.
std::string render_mock_report(std::string_view prompt, double pct_bias = 0.0);

struct ReportCandidate {
  std::string text;
  std::string main_report;
  std::string extended_report;
  std::vector<evalmetrics::Finding> claims;
  double temperature = 0.0;
  int attempt = 0;  // index within the temperature's n-best list
  std::vector<std::string> warnings;
};

/// Splits on the "Extended Report" heading; extracts claims from the full text.
ReportCandidate make_candidate(std::string text, const evalmetrics::GroundTruth& vocabulary, double temperature = 0.0,
                               int attempt = 0);

std::size_t word_count(std::string_view text);

/// |sweep| x n_best candidates. Throws InvalidArgument on an empty sweep and
/// propagates TransportError (no partial results).
std::vector<ReportCandidate> generate_candidates(TextGenClient& client, const std::string& prompt,
                                                 const GenerationConfig& cfg, std::span<const double> sweep,
                                                 const evalmetrics::GroundTruth& vocabulary);

struct EvalContext {
  std::string stage;
  evalmetrics::GroundTruth truth;
  std::vector<evalmetrics::Finding> checklist;
  evalmetrics::Tolerance tolerance;
};

evalmetrics::EvalReport evaluate_candidate(const ReportCandidate& c, const EvalContext& ctx);

/// Index of the best candidate: NCS desc, CM-F1 desc, HR asc, then lowest
/// temperature, then attempt. Throws InvalidArgument on an empty list.
std::size_t select_best(std::span<const ReportCandidate> candidates, const EvalContext& ctx);

struct ValidationFailure {
  std::string quantity;  // e.g. "trucks %Δ at inside"
  double reported = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Every number in the candidate must correspond to a ground-truth quantity
/// and lie within tolerance of it; violations are returned.
std::vector<ValidationFailure> validate_numbers(const ReportCandidate& c, const evalmetrics::GroundTruth& truth,
                                                const evalmetrics::Tolerance& tol = {});

/// Original prompt plus a corrections section naming each failure and its
/// allowed range.
std::string corrective_prompt(const std::string& original, std::span<const ValidationFailure> failures);

struct AttemptLog {
  int retry = 0;  // 1-based
  std::string prompt;
  std::vector<ValidationFailure> failures;
  std::string error;  // parse or format problem, if any
};

struct ValidationOutcome {
  bool accepted = false;
  ReportCandidate report;  // last candidate examined
  int retries = 0;
  std::vector<ValidationFailure> initial_failures;
  std::vector<AttemptLog> attempts;  // one per re-prompt
};

/// Accepts `candidate` when all its numbers are within tolerance; otherwise
/// re-prompts with corrective hints up to cfg.max_retries times. Transport
/// errors propagate.
ValidationOutcome validate_and_reprompt(const ReportCandidate& candidate, const std::string& prompt,
                                        const evalmetrics::GroundTruth& truth, const evalmetrics::Tolerance& tol,
                                        TextGenClient& client, const GenerationConfig& cfg);

/// Ground truth for a comparison: pre/post means, deltas and pct changes of
/// every change record.
evalmetrics::GroundTruth ground_truth_from(const PromptInputs& inputs);

/// Proxy checklist: one pct-change finding per top-k increase and decrease
/// of each mode.
std::vector<evalmetrics::Finding> checklist_from(const PromptInputs& inputs);

}  // namespace trafficview::summarize
