#include "trafficview/summarize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "trafficview/common.hpp"
#include "trafficview/error.hpp"

namespace trafficview::summarize {

using evalmetrics::Finding;
using evalmetrics::GroundTruth;
using evalmetrics::QuantityKind;
using nlohmann::json;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::A: return "A";
    case Stage::B: return "B";
    case Stage::C: return "C";
    case Stage::D: return "D";
  }
  return "A";
}

Stage parse_stage(std::string_view s) {
  if (s == "A" || s == "a") return Stage::A;
  if (s == "B" || s == "b") return Stage::B;
  if (s == "C" || s == "c") return Stage::C;
  if (s == "D" || s == "d") return Stage::D;
  throw InvalidArgument("stage must be one of A, B, C, D");
}

std::vector<std::string> section_headers(int pre_year, int post_year) {
  return {"Overview", "Description of Data",
          "Comparison of " + std::to_string(pre_year) + " vs. " + std::to_string(post_year)};
}

PromptStage prompt_stage(Stage s, int pre_year, int post_year) {
  PromptStage p;
  p.stage = s;
  if (s != Stage::A) p.required_sections = section_headers(pre_year, post_year);
  p.numeric_rules = s == Stage::C || s == Stage::D;
  p.exemplars = s == Stage::D;
  return p;
}

std::string to_string(Theme t) {
  switch (t) {
    case Theme::mode_shifts: return "mode_shifts";
    case Theme::zone_spillovers: return "zone_spillovers";
    case Theme::temporal_heterogeneity: return "temporal_heterogeneity";
    case Theme::industry_impacts: return "industry_impacts";
  }
  return "mode_shifts";
}

Theme parse_theme(std::string_view s) {
  for (Theme t : kAllThemes)
    if (to_string(t) == s) return t;
  throw InvalidArgument("unknown theme '" + std::string(s) + "'");
}

std::string theme_query(Theme t) {
  switch (t) {
    case Theme::mode_shifts: return "mode shifts";
    case Theme::zone_spillovers: return "zone spillovers";
    case Theme::temporal_heterogeneity: return "temporal heterogeneity";
    case Theme::industry_impacts: return "industry impacts";
  }
  return "";
}

TermVector term_vector(std::string_view text) {
  std::map<std::string, double> tf;
  for (auto& tok : evalmetrics::tokenize(text)) tf[tok] += 1.0;
  double norm = 0.0;
  for (const auto& [t, c] : tf) norm += c * c;
  norm = std::sqrt(norm);
  TermVector v;
  for (const auto& [t, c] : tf) v.emplace_back(t, c / norm);
  return v;
}

double cosine(const TermVector& a, const TermVector& b) {
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return dot;
}

ExemplarChunk make_chunk(std::string chunk_id, Theme theme, std::string text) {
  ExemplarChunk c{std::move(chunk_id), theme, std::move(text), {}};
  c.terms = term_vector(c.text);
  return c;
}

std::vector<ExemplarChunk> load_exemplar_library(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read exemplar library " + path);
  std::vector<ExemplarChunk> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back(make_chunk(j.at("chunk_id").get<std::string>(), parse_theme(j.at("theme").get<std::string>()),
                               j.at("text").get<std::string>()));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ExemplarChunk> select_exemplars(std::span<const ExemplarChunk> library, std::string_view query,
                                            std::size_t top_k) {
  const TermVector q = term_vector(query);
  std::vector<std::pair<double, const ExemplarChunk*>> scored;
  for (const auto& c : library) scored.emplace_back(cosine(q, c.terms), &c);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->chunk_id < b.second->chunk_id;
  });
  std::vector<ExemplarChunk> out;
  for (std::size_t i = 0; i < std::min(top_k, scored.size()); ++i) out.push_back(*scored[i].second);
  return out;
}

namespace {

// Requirement marker phrases. Prompts are built from these and detection
// looks for them verbatim.
constexpr const char* kSummarizeText = "Summarize the traffic statistics below";
constexpr const char* kHeadersText = "Use exactly these section headers, in this order:";
constexpr const char* kModesText = "Cover every road-user mode: cars, trucks, pedestrians and cyclists.";
constexpr const char* kSpatialText = "Highlight the locations with the largest changes.";
constexpr const char* kQuartetText = "the change (delta) and the percent change (%delta)";
constexpr const char* kSplitsText = "Report peak and weekday splits where the statistics provide them.";
constexpr const char* kTopKText = "List the top-";
constexpr const char* kExemplarText = "Domain exemplars (follow their style, not their numbers):";

std::string mode_plural(aggregate::RoadUser m) {
  switch (m) {
    case aggregate::RoadUser::car: return "cars";
    case aggregate::RoadUser::truck: return "trucks";
    case aggregate::RoadUser::ped: return "pedestrians";
    case aggregate::RoadUser::bike: return "cyclists";
  }
  return "cars";
}

std::string mode_plural(const std::string& canonical) {
  auto m = detection::parse_road_user(canonical);
  return m ? mode_plural(*m) : canonical;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

void write_data_block(std::ostringstream& os, const PromptInputs& in) {
  os << "Pre period: " << in.pre_label << " (" << in.pre_year << ")\n";
  os << "Post period: " << in.post_label << " (" << in.post_year << ")\n";
  os << "Partition schema: " << aggregate::to_string(in.schema) << "\n";
  if (!in.pre_stats.empty() || !in.post_stats.empty()) {
    os << "BEGIN STATS\nperiod,partition,mode,total,mean,median,std,n\n";
    auto rows = [&](const char* period, const std::vector<aggregate::StatBundle>& bundles) {
      for (const auto& b : bundles) {
        os << csv::join({period, b.partition, aggregate::mode_name(b.mode), format_double(b.total),
                         format_double(b.mean), format_double(b.median), format_double(b.std),
                         std::to_string(b.sample_count)})
           << '\n';
      }
    };
    rows("pre", in.pre_stats);
    rows("post", in.post_stats);
    os << "END STATS\n";
  }
  os << kChangesBegin << '\n' << aggregate::kChangesHeader << '\n';
  for (const auto& r : in.changes) {
    os << csv::join({r.partition, aggregate::mode_name(r.mode), format_double(r.pre_value),
                     format_double(r.post_value), format_double(r.delta),
                     r.pct_delta ? format_double(*r.pct_delta) : "NA"})
       << '\n';
  }
  os << kChangesEnd << '\n';
}

}  // namespace

std::string build_prompt(Stage stage, const PromptInputs& inputs, std::span<const ExemplarChunk> library,
                         std::size_t exemplar_top_k) {
  if (inputs.changes.empty()) throw InvalidArgument("prompt needs at least one change record");
  if (stage == Stage::D && library.empty()) throw InvalidArgument("stage D needs a non-empty exemplar library");
  const PromptStage ps = prompt_stage(stage, inputs.pre_year, inputs.post_year);

  std::ostringstream os;
  os << kSummarizeText << ", comparing " << inputs.pre_label << " with " << inputs.post_label << ".\n";
  if (!ps.required_sections.empty()) {
    os << kHeadersText << '\n';
    for (const auto& h : ps.required_sections) os << "  " << h << '\n';
    os << kModesText << '\n' << kSpatialText << '\n';
  }
  if (ps.numeric_rules) {
    os << "Numeric rules:\n";
    os << "- For every mode and location state the " << inputs.pre_year << " value, the " << inputs.post_year
       << " value, " << kQuartetText << ", with units (detections per frame).\n";
    os << "- Copy numbers from the table below; do not recompute them.\n";
    os << "- " << kSplitsText << '\n';
    os << "- " << kTopKText << inputs.top_k << " increases and the top-" << inputs.top_k
       << " decreases under an Extended Report heading.\n";
  }
  os << '\n';
  write_data_block(os, inputs);
  if (ps.exemplars) {
    os << '\n' << kExemplarText << '\n';
    for (Theme t : kAllThemes) {
      std::vector<ExemplarChunk> themed;
      for (const auto& c : library)
        if (c.theme == t) themed.push_back(c);
      for (const auto& c : select_exemplars(themed, theme_query(t), exemplar_top_k)) {
        os << "[" << to_string(t) << "/" << c.chunk_id << "] " << c.text << '\n';
      }
    }
  }
  return os.str();
}

std::set<Requirement> prompt_requirements(std::string_view prompt) {
  std::set<Requirement> out;
  auto has = [&](std::string_view s) { return prompt.find(s) != std::string_view::npos; };
  if (has(kSummarizeText)) out.insert(Requirement::summarize_instruction);
  if (has(kHeadersText)) out.insert(Requirement::section_headers);
  if (has(kModesText)) out.insert(Requirement::mode_coverage);
  if (has(kSpatialText)) out.insert(Requirement::spatial_highlights);
  if (has(kQuartetText)) out.insert(Requirement::numeric_quartet);
  if (has(kSplitsText)) out.insert(Requirement::peak_weekday_splits);
  if (has(kTopKText)) out.insert(Requirement::top_k_lists);
  if (has(kExemplarText)) out.insert(Requirement::domain_exemplars);
  return out;
}

std::vector<aggregate::ChangeRecord> parse_prompt_changes(std::string_view prompt) {
  std::vector<aggregate::ChangeRecord> out;
  std::istringstream in{std::string(prompt)};
  std::string line;
  bool inside = false;
  bool header = false;
  while (std::getline(in, line)) {
    if (line == kChangesBegin) {
      inside = true;
      header = true;
      continue;
    }
    if (line == kChangesEnd) break;
    if (!inside) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = csv::split_line(line);
    if (f.size() != 6) throw ParseError("malformed change row in prompt: " + line);
    auto mode = detection::parse_road_user(f[1]);
    if (!mode) throw ParseError("unknown mode in prompt: " + f[1]);
    aggregate::ChangeRecord r{f[0], *mode, std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::nullopt};
    if (f[5] != "NA") r.pct_delta = std::stod(f[5]);
    out.push_back(std::move(r));
  }
  return out;
}

void GenerationConfig::validate() const {
  if (!(temperature >= 0.0 && temperature <= 0.3)) throw ConfigError("temperature must lie in [0, 0.3]");
  if (!(top_p >= 0.8 && top_p <= 1.0)) throw ConfigError("top_p must lie in [0.8, 1]");
  if (n_best != 2 && n_best != 3) throw ConfigError("n_best must be 2 or 3");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

HttpTextGenClient::HttpTextGenClient(std::string url, std::string token, int timeout_seconds)
    : url_(std::move(url)), token_(std::move(token)), timeout_seconds_(timeout_seconds) {
  if (url_.empty()) throw ConfigError("endpoint url is empty");
}

std::vector<std::string> HttpTextGenClient::complete(const GenerationRequest& request) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url_, m, kUrl)) throw ConfigError("endpoint url is not http(s): " + url_);
  const std::string base = m[1];
  const std::string path = m[2].matched ? std::string(m[2]) : "/";

  httplib::Client cli(base);
  cli.set_connection_timeout(timeout_seconds_);
  cli.set_read_timeout(timeout_seconds_);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  const json body{{"prompt", request.prompt},
                  {"temperature", request.temperature},
                  {"top_p", request.top_p},
                  {"n", request.n}};
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("endpoint " + url_ + ": " + httplib::to_string(res.error()), 1);
  if (res->status != 200) throw TransportError("endpoint " + url_ + " returned HTTP " + std::to_string(res->status), 1);
  try {
    const json j = json::parse(res->body);
    auto completions = j.at("completions").get<std::vector<std::string>>();
    if (completions.size() != static_cast<std::size_t>(request.n)) {
      throw TransportError("endpoint returned " + std::to_string(completions.size()) + " completions, wanted " +
                               std::to_string(request.n),
                           1);
    }
    return completions;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed endpoint response: ") + e.what(), 1);
  }
}

MockTextGenClient::Behavior parse_mock_behavior(std::string_view s) {
  if (s == "faithful") return MockTextGenClient::Behavior::faithful;
  if (s == "drift") return MockTextGenClient::Behavior::drift;
  if (s == "stubborn") return MockTextGenClient::Behavior::stubborn;
  if (s == "failing") return MockTextGenClient::Behavior::failing;
  throw ConfigError("mock behavior must be faithful, drift, stubborn or failing");
}

std::vector<std::string> MockTextGenClient::complete(const GenerationRequest& request) {
  prompts_.push_back(request.prompt);
  if (behavior_ == Behavior::failing) {
    throw TransportError("mock endpoint refused the request", static_cast<int>(prompts_.size()));
  }
  const bool corrected = request.prompt.find(kCorrectionsMarker) != std::string::npos;
  double bias = 0.0;
  if (behavior_ == Behavior::stubborn || (behavior_ == Behavior::drift && !corrected)) bias = 3.0;
  return std::vector<std::string>(static_cast<std::size_t>(std::max(request.n, 0)), render_mock_report(request.prompt, bias));
}

std::string render_mock_report(std::string_view prompt, double pct_bias) {
  const auto req = prompt_requirements(prompt);
  const auto changes = parse_prompt_changes(prompt);

  int pre_year = 2024;
  int post_year = 2025;
  static const std::regex kPre(R"(Pre period: .*\((\d{4})\))");
  static const std::regex kPost(R"(Post period: .*\((\d{4})\))");
  const std::string p(prompt);
  std::smatch m;
  if (std::regex_search(p, m, kPre)) pre_year = std::stoi(m[1]);
  if (std::regex_search(p, m, kPost)) post_year = std::stoi(m[1]);

  std::ostringstream os;
  const bool headers = req.contains(Requirement::section_headers);
  const bool quartet = req.contains(Requirement::numeric_quartet);
  const auto hdr = section_headers(pre_year, post_year);

  if (headers) os << hdr[0] << '\n';
  os << "Traffic patterns shifted between the two study periods.\n";
  if (headers) {
    os << hdr[1] << '\n';
    os << "Detection counts were averaged per frame for each partition and road-user class.\n";
    os << hdr[2] << '\n';
  }
  bool biased = false;
  for (const auto& r : changes) {
    const std::string who = capitalize(mode_plural(r.mode));
    if (quartet) {
      os << who << " at " << r.partition << ": " << pre_year << " mean " << format_fixed(r.pre_value, 2) << ", "
         << post_year << " mean " << format_fixed(r.post_value, 2) << ", change " << format_fixed(r.delta, 2);
      if (r.pct_delta) {
        double pct = *r.pct_delta;
        if (!biased) {
          pct += pct_bias;
          biased = true;
        }
        os << " (" << format_fixed(pct, 2) << "%)";
      }
      os << ".\n";
    } else {
      const char* verb = r.delta > 0 ? "rose" : r.delta < 0 ? "fell" : "held steady";
      os << who << " at " << r.partition << " " << verb << ".\n";
    }
  }
  if (req.contains(Requirement::top_k_lists)) {
    std::size_t k = 3;
    static const std::regex kTop(R"(List the top-(\d+))");
    if (std::regex_search(p, m, kTop)) k = static_cast<std::size_t>(std::stoul(m[1]));
    os << "Extended Report\n";
    for (auto dir : {aggregate::Direction::increase, aggregate::Direction::decrease}) {
      for (const auto& r : aggregate::top_changes(changes, k, dir)) {
        os << (dir == aggregate::Direction::increase ? "Top increase: " : "Top decrease: ")
           << mode_plural(r.mode) << " at " << r.partition << " " << format_fixed(*r.pct_delta, 2) << "%.\n";
      }
    }
  }
  return os.str();
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

ReportCandidate make_candidate(std::string text, const GroundTruth& vocabulary, double temperature, int attempt) {
  ReportCandidate c;
  c.text = std::move(text);
  c.temperature = temperature;
  c.attempt = attempt;
  std::size_t split = std::string::npos;
  std::size_t pos = 0;
  while (pos <= c.text.size()) {
    std::size_t eol = c.text.find('\n', pos);
    if (eol == std::string::npos) eol = c.text.size();
    if (trim(std::string_view(c.text).substr(pos, eol - pos)) == "Extended Report") {
      split = pos;
      break;
    }
    pos = eol + 1;
  }
  c.main_report = split == std::string::npos ? c.text : c.text.substr(0, split);
  if (split != std::string::npos) c.extended_report = c.text.substr(split);
  if (word_count(c.main_report) > 500) {
    c.warnings.push_back("main report has " + std::to_string(word_count(c.main_report)) + " words (limit 500)");
  }
  c.claims = evalmetrics::extract_claims(c.text, vocabulary);
  return c;
}

std::vector<ReportCandidate> generate_candidates(TextGenClient& client, const std::string& prompt,
                                                 const GenerationConfig& cfg, std::span<const double> sweep,
                                                 const GroundTruth& vocabulary) {
  if (sweep.empty()) throw InvalidArgument("temperature sweep is empty");
  cfg.validate();
  std::vector<ReportCandidate> out;
  for (double t : sweep) {
    GenerationConfig probe = cfg;
    probe.temperature = t;
    probe.validate();
    const auto texts = client.complete(GenerationRequest{prompt, t, cfg.top_p, cfg.n_best});
    if (texts.size() != static_cast<std::size_t>(cfg.n_best)) {
      throw TransportError("endpoint returned " + std::to_string(texts.size()) + " completions", 1);
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      out.push_back(make_candidate(texts[i], vocabulary, t, static_cast<int>(i)));
    }
  }
  return out;
}

evalmetrics::EvalReport evaluate_candidate(const ReportCandidate& c, const EvalContext& ctx) {
  auto claims = c.claims;
  evalmetrics::check_support(claims, ctx.truth, ctx.tolerance);
  const auto items = evalmetrics::numeric_items(claims, ctx.truth);
  evalmetrics::EvalReport r;
  r.stage = ctx.stage;
  r.ncs = evalmetrics::ncs(items);
  const auto cm = evalmetrics::cm_f1(claims, ctx.checklist, ctx.tolerance);
  r.precision = cm.precision;
  r.recall = cm.recall;
  r.cm_f1 = cm.f1;
  const auto h = evalmetrics::hallucination_rate(claims);
  r.hr = h.rate;
  r.zero_claims = h.zero_claims;
  r.score = evalmetrics::composite_score(r.ncs, r.cm_f1, r.hr);
  r.item_count = items.size();
  r.claim_count = claims.size();
  return r;
}

std::size_t select_best(std::span<const ReportCandidate> candidates, const EvalContext& ctx) {
  if (candidates.empty()) throw InvalidArgument("no candidates to select from");
  std::vector<evalmetrics::EvalReport> reports;
  for (const auto& c : candidates) reports.push_back(evaluate_candidate(c, ctx));
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = reports[i];
    const auto& b = reports[best];
    auto key = [&](const evalmetrics::EvalReport& r, const ReportCandidate& c) {
      return std::make_tuple(-r.ncs, -r.cm_f1, r.hr, c.temperature, c.attempt);
    };
    if (key(a, candidates[i]) < key(b, candidates[best])) best = i;
  }
  return best;
}

namespace {

std::string kind_label(QuantityKind k, const std::string& period, const GroundTruth& truth) {
  const std::string year = period == "pre" ? std::to_string(truth.pre_year)
                           : period == "post" ? std::to_string(truth.post_year)
                                              : "";
  switch (k) {
    case QuantityKind::pct_delta: return "%Δ";
    case QuantityKind::delta: return "Δ";
    case QuantityKind::total: return year.empty() ? "total" : year + " total";
    case QuantityKind::mean: return year.empty() ? "mean" : year + " mean";
    case QuantityKind::peak: return year.empty() ? "peak" : year + " peak";
    case QuantityKind::other: return "value";
  }
  return "value";
}

}  // namespace

std::vector<ValidationFailure> validate_numbers(const ReportCandidate& c, const GroundTruth& truth,
                                                const evalmetrics::Tolerance& tol) {
  std::vector<ValidationFailure> out;
  for (const auto& f : c.claims) {
    if (!f.payload) continue;
    const auto kind = f.payload->kind;
    std::string name = mode_plural(f.mode) + " " + kind_label(kind, f.period, truth);
    if (!f.location.empty()) name += " at " + f.location;
    const evalmetrics::Quantity* q =
        kind == QuantityKind::other || f.location.empty() ? nullptr : truth.find(f.location, f.mode, f.period, kind);
    if (!q) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      out.push_back({name, f.payload->value, nan, nan});
      continue;
    }
    if (!evalmetrics::within_tolerance(kind, f.payload->value, q->value, tol)) {
      const auto [lo, hi] = evalmetrics::allowed_range(kind, q->value, tol);
      out.push_back({name, f.payload->value, lo, hi});
    }
  }
  return out;
}

std::string corrective_prompt(const std::string& original, std::span<const ValidationFailure> failures) {
  std::ostringstream os;
  os << original << '\n' << kCorrectionsMarker << '\n';
  for (const auto& f : failures) {
    if (std::isnan(f.lo)) {
      os << "- Your " << f.quantity << " (" << format_fixed(f.reported, 2)
         << ") does not match any provided statistic; use only numbers from the table.\n";
    } else {
      os << "- Your " << f.quantity << " (" << format_fixed(f.reported, 2) << ") is outside the allowed range ["
         << format_fixed(f.lo, 2) << ", " << format_fixed(f.hi, 2) << "]; recompute using the provided totals.\n";
    }
  }
  return os.str();
}

ValidationOutcome validate_and_reprompt(const ReportCandidate& candidate, const std::string& prompt,
                                        const GroundTruth& truth, const evalmetrics::Tolerance& tol,
                                        TextGenClient& client, const GenerationConfig& cfg) {
  ValidationOutcome out;
  out.report = candidate;
  out.initial_failures = validate_numbers(candidate, truth, tol);
  auto failures = out.initial_failures;
  if (failures.empty()) {
    out.accepted = true;
    return out;
  }
  for (int retry = 1; retry <= cfg.max_retries; ++retry) {
    AttemptLog log;
    log.retry = retry;
    log.prompt = corrective_prompt(prompt, failures);
    const auto texts = client.complete(GenerationRequest{log.prompt, cfg.temperature, cfg.top_p, 1});
    out.retries = retry;
    if (texts.empty()) {
      log.error = "endpoint returned no completion";
      out.attempts.push_back(std::move(log));
      continue;
    }
    out.report = make_candidate(texts.front(), truth, cfg.temperature, 0);
    log.failures = validate_numbers(out.report, truth, tol);
    const bool ok = log.failures.empty();
    if (!ok) failures = log.failures;
    out.attempts.push_back(std::move(log));
    if (ok) {
      out.accepted = true;
      return out;
    }
  }
  return out;
}

GroundTruth ground_truth_from(const PromptInputs& inputs) {
  GroundTruth t;
  t.pre_year = inputs.pre_year;
  t.post_year = inputs.post_year;
  std::set<std::string> locations;
  for (const auto& r : inputs.changes) {
    const std::string mode = aggregate::mode_name(r.mode);
    locations.insert(r.partition);
    t.quantities.push_back({r.partition, mode, "pre", QuantityKind::mean, r.pre_value});
    t.quantities.push_back({r.partition, mode, "post", QuantityKind::mean, r.post_value});
    t.quantities.push_back({r.partition, mode, "", QuantityKind::delta, r.delta});
    if (r.pct_delta) t.quantities.push_back({r.partition, mode, "", QuantityKind::pct_delta, *r.pct_delta});
  }
  t.locations.assign(locations.begin(), locations.end());
  return t;
}

std::vector<Finding> checklist_from(const PromptInputs& inputs) {
  std::vector<Finding> out;
  for (auto mode : detection::kAllClasses) {
    std::vector<aggregate::ChangeRecord> of_mode;
    for (const auto& r : inputs.changes)
      if (r.mode == mode) of_mode.push_back(r);
    if (of_mode.empty()) continue;
    for (auto dir : {aggregate::Direction::increase, aggregate::Direction::decrease}) {
      for (const auto& r : aggregate::top_changes(of_mode, std::max<std::size_t>(inputs.top_k, 1), dir)) {
        Finding f;
        f.claim = capitalize(mode_plural(mode)) + " at " + r.partition + " changed by " +
                  format_fixed(*r.pct_delta, 2) + "%";
        f.mode = aggregate::mode_name(mode);
        f.location = r.partition;
        f.payload = evalmetrics::NumericPayload{*r.pct_delta, QuantityKind::pct_delta};
        out.push_back(std::move(f));
      }
    }
  }
  return out;
}

}  // namespace trafficview::summarize
