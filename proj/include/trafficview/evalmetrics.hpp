#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trafficview::evalmetrics {

enum class QuantityKind { total, mean, peak, delta, pct_delta, other };

std::string to_string(QuantityKind k);
QuantityKind parse_quantity_kind(std::string_view s);

/// A required numeric item: the reported value y against ground truth g.
/// `reported == false` marks an item the report never stated; it scores as
/// the maximal clamped error.
struct NumericItem {
  double y = 0.0;
  double g = 0.0;
  QuantityKind kind = QuantityKind::other;
  bool reported = true;
};

/// |y - g| / max(1, |g|). Throws InvalidArgument on non-finite input.
double relative_error(double y, double g);

/// 1 - mean(min(eps, 1)). Throws InvalidArgument for an empty item set.
double ncs(std::span<const NumericItem> items);

struct NumericPayload {
  double value = 0.0;
  QuantityKind kind = QuantityKind::other;
};

/// One assertion, either extracted from report text or written by an expert.
/// Tags use canonical names: mode in {car, truck, ped, bike}; period in
/// {pre, post} or empty; location is a partition name or empty.
struct Finding {
  std::string claim;
  std::string mode;
  std::string location;
  std::string period;
  std::optional<NumericPayload> payload;
  bool supported = false;
};

/// Kind-specific tolerance: percentage changes are compared in absolute
/// percentage points, everything else relative to max(1, |g|).
struct Tolerance {
  double pct_points = 1.0;
  double relative = 0.01;
};

bool within_tolerance(QuantityKind kind, double y, double g, const Tolerance& tol = {});

/// Allowed closed interval for a ground-truth value.
std::pair<double, double> allowed_range(QuantityKind kind, double g, const Tolerance& tol = {});

/// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Share of the reference tokens also present in the candidate; 1 when the
/// reference is empty.
double location_overlap(std::string_view candidate, std::string_view reference);

/// Fuzzy match: equal mode tags, location overlap >= 0.5, and, when the
/// reference carries a number, same kind and value within tolerance.
bool findings_match(const Finding& predicted, const Finding& reference, const Tolerance& tol = {});

struct ContentMatch {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matches = 0;
};

/// Precision / recall / F1 from a maximum one-to-one matching between
/// predicted findings and the checklist. Throws InvalidArgument on an empty
/// checklist; an empty prediction list scores 0.
ContentMatch cm_f1(std::span<const Finding> predicted, std::span<const Finding> checklist, const Tolerance& tol = {});

struct Hallucination {
  double rate = 0.0;
  std::size_t unsupported = 0;
  std::size_t total = 0;
  bool zero_claims = false;
};

/// unsupported / total; a report with no claims scores 0 and sets zero_claims.
Hallucination hallucination_rate(std::span<const Finding> claims);

/// 0.40 NCS + 0.40 CM-F1 + 0.20 (1 - HR). Inputs must lie in [0, 1].
double composite_score(double ncs_value, double cm_f1_value, double hr_value);

struct EvalReport {
  std::string stage;
  double ncs = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double cm_f1 = 0.0;
  double hr = 0.0;
  double score = 0.0;
  std::size_t item_count = 0;
  std::size_t claim_count = 0;
  bool zero_claims = false;
};

std::string to_json(const EvalReport& r);
EvalReport eval_report_from_json(const std::string& text);

/// Checklist JSON-lines: `{claim, mode, location, period, kind, value}`;
/// kind/value are optional.
std::vector<Finding> load_checklist(const std::string& path);
void save_checklist(const std::string& path, std::span<const Finding> findings);

/// One ground-truth quantity of the statistics handed to the model.
struct Quantity {
  std::string location;
  std::string mode;
  std::string period;  // pre / post / empty for changes
  QuantityKind kind = QuantityKind::other;
  double value = 0.0;
};

/// Everything a report may legitimately state.
struct GroundTruth {
  std::vector<Quantity> quantities;
  std::vector<std::string> locations;  // partition names
  int pre_year = 2024;
  int post_year = 2025;

  /// Exact (location, mode, period, kind) lookup; period is ignored for
  /// delta and pct_delta kinds.
  const Quantity* find(const std::string& location, const std::string& mode, const std::string& period,
                       QuantityKind kind) const;
  bool has_location(const std::string& location) const;
  bool has_mode(const std::string& mode) const;
};

/// Rule-based claim extractor. Sentences are scanned for numbers; each number
/// takes its kind from a trailing % or the nearest preceding keyword (total,
/// mean/average, peak, change/delta), its period from the nearest preceding
/// year token, and mode/location tags from keywords in the same sentence.
/// Only findings with a mode tag and a number or a location are returned.
std::vector<Finding> extract_claims(std::string_view text, const GroundTruth& vocabulary);

/// Marks each finding supported when its tags exist in the statistics and its
/// number, if any, matches the corresponding quantity within tolerance.
void check_support(std::vector<Finding>& findings, const GroundTruth& truth, const Tolerance& tol = {});

/// One item per ground-truth quantity; `reported` is false when no finding
/// states it. The first matching finding supplies y.
std::vector<NumericItem> numeric_items(std::span<const Finding> findings, const GroundTruth& truth);

/// Runs extraction, support checking and all metrics on one report text.
EvalReport evaluate_report(std::string_view stage, std::string_view text, const GroundTruth& truth,
                           std::span<const Finding> checklist, const Tolerance& tol = {});

}  // namespace trafficview::evalmetrics
