#include "trafficview/evalmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <json.hpp>

#include "trafficview/common.hpp"
#include "trafficview/error.hpp"

namespace trafficview::evalmetrics {

using nlohmann::json;

std::string to_string(QuantityKind k) {
  switch (k) {
    case QuantityKind::total: return "total";
    case QuantityKind::mean: return "mean";
    case QuantityKind::peak: return "peak";
    case QuantityKind::delta: return "delta";
    case QuantityKind::pct_delta: return "pct_delta";
    case QuantityKind::other: return "other";
  }
  return "other";
}

QuantityKind parse_quantity_kind(std::string_view s) {
  if (s == "total") return QuantityKind::total;
  if (s == "mean") return QuantityKind::mean;
  if (s == "peak") return QuantityKind::peak;
  if (s == "delta") return QuantityKind::delta;
  if (s == "pct_delta") return QuantityKind::pct_delta;
  if (s == "other") return QuantityKind::other;
  throw InvalidArgument("unknown quantity kind '" + std::string(s) + "'");
}

double relative_error(double y, double g) {
  if (!std::isfinite(y) || !std::isfinite(g)) throw InvalidArgument("relative_error needs finite values");
  return std::abs(y - g) / std::max(1.0, std::abs(g));
}

double ncs(std::span<const NumericItem> items) {
  if (items.empty()) throw InvalidArgument("NCS is undefined without numeric items");
  double sum = 0.0;
  for (const auto& it : items) sum += it.reported ? std::min(relative_error(it.y, it.g), 1.0) : 1.0;
  return 1.0 - sum / static_cast<double>(items.size());
}

std::pair<double, double> allowed_range(QuantityKind kind, double g, const Tolerance& tol) {
  const double half = kind == QuantityKind::pct_delta ? tol.pct_points : tol.relative * std::max(1.0, std::abs(g));
  return {g - half, g + half};
}

bool within_tolerance(QuantityKind kind, double y, double g, const Tolerance& tol) {
  if (!std::isfinite(y) || !std::isfinite(g)) return false;
  const double half = kind == QuantityKind::pct_delta ? tol.pct_points : tol.relative * std::max(1.0, std::abs(g));
  // Slack for values that were rounded to two decimals on the way through text.
  return std::abs(y - g) <= half + 1e-9;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double location_overlap(std::string_view candidate, std::string_view reference) {
  const auto ref = tokenize(reference);
  if (ref.empty()) return 1.0;
  const auto cand_vec = tokenize(candidate);
  const std::set<std::string> cand(cand_vec.begin(), cand_vec.end());
  const std::set<std::string> ref_set(ref.begin(), ref.end());
  std::size_t hit = 0;
  for (const auto& t : ref_set) hit += cand.contains(t);
  return static_cast<double>(hit) / static_cast<double>(ref_set.size());
}

bool findings_match(const Finding& predicted, const Finding& reference, const Tolerance& tol) {
  if (predicted.mode != reference.mode) return false;
  if (location_overlap(predicted.location, reference.location) < 0.5) return false;
  if (!reference.payload) return true;
  if (!predicted.payload || predicted.payload->kind != reference.payload->kind) return false;
  return within_tolerance(reference.payload->kind, predicted.payload->value, reference.payload->value, tol);
}

ContentMatch cm_f1(std::span<const Finding> predicted, std::span<const Finding> checklist, const Tolerance& tol) {
  if (checklist.empty()) throw InvalidArgument("CM-F1 needs a non-empty checklist");
  ContentMatch m;
  if (predicted.empty()) return m;

  std::vector<std::vector<std::size_t>> adj(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = 0; j < checklist.size(); ++j)
      if (findings_match(predicted[i], checklist[j], tol)) adj[i].push_back(j);

  // Kuhn's augmenting paths; sizes here are small.
  std::vector<std::ptrdiff_t> owner(checklist.size(), -1);
  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t i) {
    for (std::size_t j : adj[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]))) {
        owner[j] = static_cast<std::ptrdiff_t>(i);
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    seen.assign(checklist.size(), 0);
    if (augment(i)) ++m.matches;
  }
  m.precision = static_cast<double>(m.matches) / static_cast<double>(predicted.size());
  m.recall = static_cast<double>(m.matches) / static_cast<double>(checklist.size());
  m.f1 = m.matches == 0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

Hallucination hallucination_rate(std::span<const Finding> claims) {
  Hallucination h;
  h.total = claims.size();
  if (claims.empty()) {
    h.zero_claims = true;
    return h;
  }
  for (const auto& c : claims) h.unsupported += !c.supported;
  h.rate = static_cast<double>(h.unsupported) / static_cast<double>(h.total);
  return h;
}

double composite_score(double ncs_value, double cm_f1_value, double hr_value) {
  for (double v : {ncs_value, cm_f1_value, hr_value}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("metric inputs must lie in [0, 1]");
  }
  return 0.40 * ncs_value + 0.40 * cm_f1_value + 0.20 * (1.0 - hr_value);
}

std::string to_json(const EvalReport& r) {
  json j{{"stage", r.stage},         {"ncs", r.ncs},
         {"precision", r.precision}, {"recall", r.recall},
         {"cm_f1", r.cm_f1},         {"hr", r.hr},
         {"score", r.score},         {"item_count", r.item_count},
         {"claim_count", r.claim_count}, {"zero_claims", r.zero_claims}};
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.stage = j.at("stage").get<std::string>();
    r.ncs = j.at("ncs").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.cm_f1 = j.at("cm_f1").get<double>();
    r.hr = j.at("hr").get<double>();
    r.score = j.at("score").get<double>();
    r.item_count = j.at("item_count").get<std::size_t>();
    r.claim_count = j.at("claim_count").get<std::size_t>();
    r.zero_claims = j.value("zero_claims", false);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("evaluation report: ") + e.what());
  }
}

std::vector<Finding> load_checklist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checklist " + path);
  std::vector<Finding> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Finding f;
      f.claim = j.value("claim", "");
      f.mode = j.at("mode").get<std::string>();
      f.location = j.value("location", "");
      f.period = j.value("period", "");
      if (j.contains("value") && !j["value"].is_null()) {
        f.payload = NumericPayload{j["value"].get<double>(), parse_quantity_kind(j.value("kind", "other"))};
      }
      out.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_checklist(const std::string& path, std::span<const Finding> findings) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checklist " + path);
  for (const auto& f : findings) {
    json j{{"claim", f.claim}, {"mode", f.mode}, {"location", f.location}, {"period", f.period}};
    if (f.payload) {
      j["kind"] = to_string(f.payload->kind);
      j["value"] = f.payload->value;
    }
    out << j.dump() << '\n';
  }
}

const Quantity* GroundTruth::find(const std::string& location, const std::string& mode, const std::string& period,
                                  QuantityKind kind) const {
  const bool change_kind = kind == QuantityKind::delta || kind == QuantityKind::pct_delta;
  for (const auto& q : quantities) {
    if (q.location == location && q.mode == mode && q.kind == kind && (change_kind || q.period == period)) return &q;
  }
  return nullptr;
}

bool GroundTruth::has_location(const std::string& location) const {
  return std::find(locations.begin(), locations.end(), location) != locations.end();
}

bool GroundTruth::has_mode(const std::string& mode) const {
  return std::any_of(quantities.begin(), quantities.end(), [&](const Quantity& q) { return q.mode == mode; });
}

namespace {

enum class TokKind { word, number, year };

struct Tok {
  TokKind kind;
  std::string text;  // lowercased word
  double value = 0.0;
  bool percent = false;
  bool signed_value = false;
};

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool end = i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (c == '\n' || ((c == '.' || c == '!' || c == '?') && end)) {
      if (c != '\n') cur.push_back(c);
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

std::vector<Tok> lex(std::string_view s) {
  std::vector<Tok> out;
  std::size_t i = 0;
  auto is_digit = [&](std::size_t k) { return k < s.size() && std::isdigit(static_cast<unsigned char>(s[k])); };
  while (i < s.size()) {
    const char c = s[i];
    const bool sign_ok = (c == '-' || c == '+' || c == '\xe2') &&
                         (i == 0 || std::isspace(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == '(');
    std::size_t start = i;
    bool neg = false;
    bool has_sign = false;
    if (sign_ok && (c == '-' || c == '+') && is_digit(i + 1)) {
      neg = c == '-';
      has_sign = true;
      ++i;
    } else if (sign_ok && s.substr(i, 3) == "\xe2\x88\x92" && is_digit(i + 3)) {  // U+2212 minus
      neg = true;
      has_sign = true;
      i += 3;
    }
    if (is_digit(i)) {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == ',')) {
        if (s[j] == ',' && !(is_digit(j + 1) && is_digit(j + 2) && is_digit(j + 3))) break;
        ++j;
      }
      bool decimal = false;
      if (j + 1 < s.size() && s[j] == '.' && is_digit(j + 1)) {
        decimal = true;
        ++j;
        while (is_digit(j)) ++j;
      }
      std::string digits;
      for (std::size_t k = i; k < j; ++k)
        if (s[k] != ',') digits.push_back(s[k]);
      Tok t{TokKind::number, "", std::stod(digits) * (neg ? -1.0 : 1.0), false, has_sign};
      std::size_t k = j;
      while (k < s.size() && s[k] == ' ') ++k;
      if (k < s.size() && s[k] == '%') {
        t.percent = true;
        j = k + 1;
      }
      if (!decimal && !t.percent && !has_sign && t.value >= 1900 && t.value <= 2100 && j - i == 4) t.kind = TokKind::year;
      // Skip the remaining tail of tokens like dates (2024-02-05).
      out.push_back(std::move(t));
      i = j;
      continue;
    }
    i = start;
    if (std::isalpha(static_cast<unsigned char>(s[i]))) {
      std::size_t j = i;
      while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) ++j;
      out.push_back(Tok{TokKind::word, to_lower(s.substr(i, j - i))});
      i = j;
      continue;
    }
    ++i;
  }
  return out;
}

std::string mode_of(const std::string& w) {
  static const std::map<std::string, std::string> kModes{
      {"car", "car"},          {"cars", "car"},           {"vehicle", "car"},     {"vehicles", "car"},
      {"truck", "truck"},      {"trucks", "truck"},       {"pedestrian", "ped"}, {"pedestrians", "ped"},
      {"ped", "ped"},          {"peds", "ped"},           {"cyclist", "bike"},    {"cyclists", "bike"},
      {"bike", "bike"},        {"bikes", "bike"},         {"bicycle", "bike"},    {"bicycles", "bike"},
      {"cycling", "bike"}};
  auto it = kModes.find(w);
  return it == kModes.end() ? "" : it->second;
}

std::optional<QuantityKind> kind_word(const std::string& w) {
  if (w == "total" || w == "totals") return QuantityKind::total;
  if (w == "mean" || w == "average" || w == "avg") return QuantityKind::mean;
  if (w == "peak") return QuantityKind::peak;
  if (w == "change" || w == "delta" || w == "difference") return QuantityKind::delta;
  return std::nullopt;
}

int direction_word(const std::string& w) {
  static const std::set<std::string> kDown{"decrease", "decreased", "decreases", "decline", "declined",
                                           "declines", "drop",      "dropped",   "fell",     "reduction",
                                           "reduced",  "down",      "lower",     "fewer"};
  static const std::set<std::string> kUp{"increase", "increased", "increases", "rise", "rose",
                                         "grew",     "growth",    "up",        "higher", "more"};
  if (kDown.contains(w)) return -1;
  if (kUp.contains(w)) return 1;
  return 0;
}

struct LocationHit {
  std::size_t pos;
  std::string name;
};

// Word-sequence occurrences of vocabulary locations, longest names first.
std::vector<LocationHit> find_locations(const std::vector<Tok>& toks, const std::vector<std::string>& vocabulary) {
  std::vector<std::pair<std::vector<std::string>, std::string>> names;
  for (const auto& loc : vocabulary) {
    auto t = tokenize(loc);
    if (!t.empty()) names.emplace_back(std::move(t), loc);
  }
  std::stable_sort(names.begin(), names.end(), [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

  // Word-only view keeps multi-token names contiguous.
  std::vector<std::size_t> word_pos;
  for (std::size_t i = 0; i < toks.size(); ++i)
    if (toks[i].kind == TokKind::word) word_pos.push_back(i);

  std::vector<LocationHit> hits;
  std::vector<char> used(word_pos.size(), 0);
  for (const auto& [seq, name] : names) {
    for (std::size_t w = 0; w + seq.size() <= word_pos.size(); ++w) {
      bool ok = true;
      for (std::size_t k = 0; k < seq.size() && ok; ++k) {
        ok = !used[w + k] && toks[word_pos[w + k]].text == seq[k] &&
             (k == 0 || word_pos[w + k] == word_pos[w + k - 1] + 1);
      }
      if (!ok) continue;
      for (std::size_t k = 0; k < seq.size(); ++k) used[w + k] = 1;
      hits.push_back({word_pos[w], name});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.pos < b.pos; });
  return hits;
}

}  // namespace

std::vector<Finding> extract_claims(std::string_view text, const GroundTruth& vocabulary) {
  std::vector<Finding> out;
  for (const auto& sentence : split_sentences(text)) {
    const auto toks = lex(sentence);
    const auto locations = find_locations(toks, vocabulary.locations);

    std::vector<std::pair<std::size_t, std::string>> modes;
    for (std::size_t i = 0; i < toks.size(); ++i)
      if (toks[i].kind == TokKind::word)
        if (auto m = mode_of(toks[i].text); !m.empty()) modes.emplace_back(i, m);
    if (modes.empty()) continue;

    auto nearest_mode = [&](std::size_t pos) {
      std::string m = modes.front().second;
      for (const auto& [p, name] : modes)
        if (p < pos) m = name;
      return m;
    };
    auto nearest_location = [&](std::size_t pos) -> std::string {
      if (locations.empty()) return "";
      std::string l = locations.front().name;
      for (const auto& h : locations)
        if (h.pos < pos) l = h.name;
      return l;
    };

    bool any_number = false;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const Tok& t = toks[i];
      if (t.kind != TokKind::number) continue;
      any_number = true;
      Finding f;
      f.claim = sentence;
      f.mode = nearest_mode(i);
      f.location = nearest_location(i);

      QuantityKind kind = QuantityKind::other;
      if (t.percent) {
        kind = QuantityKind::pct_delta;
      } else {
        for (std::size_t k = i; k-- > 0;) {
          if (toks[k].kind == TokKind::number) break;
          if (toks[k].kind == TokKind::word)
            if (auto kw = kind_word(toks[k].text)) {
              kind = *kw;
              break;
            }
        }
        if (kind == QuantityKind::other) {
          for (std::size_t k = i; k-- > 0;)
            if (toks[k].kind == TokKind::word)
              if (auto kw = kind_word(toks[k].text)) {
                kind = *kw;
                break;
              }
        }
      }
      const bool change_kind = kind == QuantityKind::delta || kind == QuantityKind::pct_delta;
      if (!change_kind) {
        for (std::size_t k = i; k-- > 0;) {
          if (toks[k].kind != TokKind::year) continue;
          const int year = static_cast<int>(toks[k].value);
          f.period = year == vocabulary.pre_year ? "pre" : year == vocabulary.post_year ? "post" : "";
          break;
        }
      }
      double value = t.value;
      if (change_kind && !t.signed_value) {
        for (std::size_t k = i; k-- > 0;) {
          if (toks[k].kind != TokKind::word) continue;
          if (int d = direction_word(toks[k].text); d != 0) {
            if (d < 0) value = -value;
            break;
          }
        }
      }
      f.payload = NumericPayload{value, kind};
      out.push_back(std::move(f));
    }
    if (!any_number && !locations.empty()) {
      Finding f;
      f.claim = sentence;
      f.mode = modes.front().second;
      f.location = locations.front().name;
      out.push_back(std::move(f));
    }
  }
  return out;
}

void check_support(std::vector<Finding>& findings, const GroundTruth& truth, const Tolerance& tol) {
  for (auto& f : findings) {
    f.supported = false;
    if (!truth.has_mode(f.mode)) continue;
    if (!f.location.empty() && !truth.has_location(f.location)) continue;
    if (!f.payload) {
      f.supported = true;
      continue;
    }
    const auto kind = f.payload->kind;
    const bool change_kind = kind == QuantityKind::delta || kind == QuantityKind::pct_delta;
    for (const auto& q : truth.quantities) {
      if (q.mode != f.mode) continue;
      if (!f.location.empty() && q.location != f.location) continue;
      if (kind != QuantityKind::other && q.kind != kind) continue;
      if (!change_kind && !f.period.empty() && q.period != f.period) continue;
      if (within_tolerance(q.kind, f.payload->value, q.value, tol)) {
        f.supported = true;
        break;
      }
    }
  }
}

std::vector<NumericItem> numeric_items(std::span<const Finding> findings, const GroundTruth& truth) {
  std::vector<NumericItem> items;
  for (const auto& q : truth.quantities) {
    const bool change_kind = q.kind == QuantityKind::delta || q.kind == QuantityKind::pct_delta;
    NumericItem item{0.0, q.value, q.kind, false};
    for (const auto& f : findings) {
      if (!f.payload || f.payload->kind != q.kind || f.mode != q.mode || f.location != q.location) continue;
      if (!change_kind && f.period != q.period) continue;
      item.y = f.payload->value;
      item.reported = true;
      break;
    }
    items.push_back(item);
  }
  return items;
}

EvalReport evaluate_report(std::string_view stage, std::string_view text, const GroundTruth& truth,
                           std::span<const Finding> checklist, const Tolerance& tol) {
  auto claims = extract_claims(text, truth);
  check_support(claims, truth, tol);
  const auto items = numeric_items(claims, truth);
  EvalReport r;
  r.stage = std::string(stage);
  r.ncs = ncs(items);
  const auto cm = cm_f1(claims, checklist, tol);
  r.precision = cm.precision;
  r.recall = cm.recall;
  r.cm_f1 = cm.f1;
  const auto h = hallucination_rate(claims);
  r.hr = h.rate;
  r.zero_claims = h.zero_claims;
  r.score = composite_score(r.ncs, r.cm_f1, r.hr);
  r.item_count = items.size();
  r.claim_count = claims.size();
  return r;
}

}  // namespace trafficview::evalmetrics
