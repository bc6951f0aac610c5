#include "cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "charts.hpp"
#include "trafficview/aggregate.hpp"
#include "trafficview/config.hpp"
#include "trafficview/corpus.hpp"
#include "trafficview/detection.hpp"
#include "trafficview/error.hpp"
#include "trafficview/evalmetrics.hpp"
#include "trafficview/normalize.hpp"
#include "trafficview/summarize.hpp"
#include "trafficview/synthgen.hpp"
#include "trafficview/viewgraph.hpp"

namespace trafficview::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Bad flags or references to things that do not exist (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
};

struct Context {
  Globals g;
  config::PipelineConfig cfg;
  bool has_config = false;

  std::string out(const std::string& name) const { return (fs::path(g.out) / name).string(); }

  // Without a config file, data files default to the output directory.
  std::string data_path(const std::string& configured) const {
    if (has_config || fs::path(configured).is_absolute()) return configured;
    return out(configured);
  }
  std::string packets_path() const { return data_path(cfg.paths.packets); }
  std::string registry_path() const { return data_path(cfg.paths.registry); }
};

/// Exclusive ownership of the output directory for one command.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir) : path_((fs::path(dir) / ".trafficview.lock").string()) {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw IoError("output directory " + dir + " is locked by another run (" + path_ + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string path_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::vector<detection::RoadUser> parse_modes(const std::vector<std::string>& names) {
  if (names.empty()) return {detection::kAllClasses.begin(), detection::kAllClasses.end()};
  std::vector<detection::RoadUser> out;
  for (const auto& n : names) {
    auto m = detection::parse_road_user(n);
    if (!m) throw UsageError("unknown mode '" + n + "' (car, truck, ped, bike)");
    out.push_back(*m);
  }
  return out;
}

aggregate::Schema schema_or(const std::string& name, aggregate::Schema fallback) {
  if (name.empty()) return fallback;
  try {
    return aggregate::parse_schema(name);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

const aggregate::AnalysisWindow& window_or_usage(const Context& ctx, const std::string& label) {
  try {
    return ctx.cfg.window(label);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::vector<detection::DetectionPacket> load_packets(const Context& ctx) {
  const std::string path = ctx.packets_path();
  if (!fs::exists(path)) throw IoError("packet store " + path + " does not exist; run detect-import first");
  auto packets = detection::PacketStore(path).load();
  if (packets.empty()) throw IoError("packet store " + path + " is empty");
  return packets;
}

int year_of(const aggregate::AnalysisWindow& w) { return std::stoi(format_date(w.start_day).substr(0, 4)); }

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string source;
  bool poll = false;
};

int cmd_ingest(const Context& ctx, const IngestArgs& a) {
  const auto registry = corpus::CameraRegistry::load_csv(ctx.registry_path());
  corpus::IngestReport rep;
  if (a.poll) {
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    rep = corpus::poll_once(registry, ctx.g.out, now);
  } else {
    const std::string source = a.source.empty() ? ctx.cfg.paths.frames : a.source;
    if (!fs::is_directory(source)) throw UsageError("frame source " + source + " is not a directory");
    rep = corpus::ingest_directory(source, registry, ctx.g.out);
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "stored " << rep.stored << ", skipped " << rep.skipped << ", quarantined " << rep.quarantined << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- normalize

struct NormalizeArgs {
  std::vector<std::string> cams;
};

int cmd_normalize(const Context& ctx, const NormalizeArgs& a) {
  const std::string root = ctx.out("frames_gray");
  const auto available = fs::is_directory(root) ? corpus::list_cameras(root) : std::vector<std::string>{};
  std::vector<std::string> cams = a.cams;
  if (cams.empty()) cams = available;
  for (const auto& c : cams) {
    if (std::find(available.begin(), available.end(), c) == available.end()) {
      throw UsageError("no frames for camera '" + c + "' under " + root);
    }
  }
  if (cams.empty()) throw IoError("no cameras under " + root + "; run ingest first");
  std::sort(cams.begin(), cams.end());
  cams.erase(std::unique(cams.begin(), cams.end()), cams.end());

  const auto& t = ctx.cfg.thresholds;
  normalize::NormalizeParams params;
  params.detector.max_count = t.max_keypoints;
  params.lowe_ratio = t.lowe_ratio;
  params.ransac.iterations = t.ransac_iterations;
  params.ransac.inlier_threshold_px = t.inlier_px;
  params.ransac.min_inlier_ratio = t.min_inlier_ratio;
  params.delta_deg = t.delta_deg;
  params.pairing = ctx.cfg.pairing;
  params.seed = ctx.g.seed;
  params.keypoint_cache_dir = ctx.out("keypoints");

  std::vector<normalize::CameraNormalization> results(cams.size());
  std::vector<std::vector<corpus::Gap>> gaps(cams.size());
  std::vector<std::exception_ptr> errors(cams.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cams.size(); i = next++) {
      try {
        auto frames = corpus::load_camera_frames(root, cams[i]);
        if (frames.empty()) throw IoError("camera " + cams[i] + " has no readable frames");
        frames = corpus::sample_frames(std::move(frames), t.sample_interval, &gaps[i]);
        results[i] = normalize::normalize_camera(frames, params);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(cams.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<viewgraph::AssignmentRow> assignments;
  std::vector<viewgraph::StabilityRow> stability;
  const std::string gap_log = ctx.out("gaps.jsonl");
  std::error_code ec;
  fs::remove(gap_log, ec);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto& r = results[i];
    auto rows = viewgraph::assignment_rows(r.cam_id, r.clusters);
    assignments.insert(assignments.end(), rows.begin(), rows.end());
    stability.push_back({r.cam_id, r.stability, r.clusters.size(), r.frames.size()});
    if (!gaps[i].empty()) corpus::append_gap_log(gap_log, gaps[i]);
    std::cout << r.cam_id << ": " << r.frames.size() << " frames, " << r.clusters.size() << " clusters, stability "
              << format_fixed(r.stability, 3) << '\n';
  }
  viewgraph::write_assignments(ctx.out("assignments.csv"), assignments);
  viewgraph::write_stability(ctx.out("stability.csv"), stability);
  return kExitOk;
}

// ---------------------------------------------------------------- detect-import

struct ImportArgs {
  std::string detections;
  std::string validation;
  std::string assignments;
  double threshold = -1.0;
};

int cmd_detect_import(const Context& ctx, const ImportArgs& a) {
  double threshold = a.threshold >= 0.0 ? a.threshold : ctx.cfg.thresholds.detection_score;
  if (!a.validation.empty()) {
    const auto outcomes = detection::load_validation(a.validation);
    const auto gt = static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.true_positive; }));
    const auto choice = detection::select_threshold(outcomes, gt);
    threshold = choice.threshold;
    std::cout << "selected threshold " << format_fixed(choice.threshold, 2) << " (F0.5 "
              << format_fixed(choice.f_beta, 3) << ")\n";
  }

  const std::string det_path = a.detections.empty() ? ctx.data_path(ctx.cfg.paths.detections) : a.detections;
  const auto imported = detection::import_detections(det_path);
  for (const auto& p : imported.problems) std::cerr << "warning: " << p << '\n';

  std::map<detection::FrameKey, viewgraph::AssignmentRow> assignment;
  const std::string assign_path = a.assignments.empty() ? ctx.out("assignments.csv") : a.assignments;
  const bool have_assignments = fs::exists(assign_path);
  if (!a.assignments.empty() && !have_assignments) throw UsageError("assignment file " + assign_path + " not found");
  if (have_assignments) {
    for (const auto& r : viewgraph::read_assignments(assign_path)) assignment[{r.cam_id, r.ts}] = r;
  }

  std::vector<detection::DetectionPacket> packets;
  std::size_t excluded = 0;
  for (const auto& [key, dets] : imported.frames) {
    int vp = 0;
    if (have_assignments) {
      auto it = assignment.find(key);
      if (it == assignment.end() || !it->second.is_dominant) {
        ++excluded;
        continue;
      }
      vp = it->second.vp_id;
    }
    const auto kept = detection::filter_detections(dets, threshold);
    packets.push_back(detection::make_packet(key.first, key.second, detection::count_by_class(kept), vp));
  }
  const std::size_t written = detection::PacketStore(ctx.packets_path()).append(packets);
  std::cout << imported.frames.size() << " frames, " << written << " new packets, " << excluded
            << " frames outside the dominant view, " << imported.skipped << " bad lines\n";
  return kExitOk;
}

// ---------------------------------------------------------------- aggregate / compare

struct AggregateArgs {
  std::vector<std::string> windows;
  std::string schema;
  std::string roi;
};

struct Inputs {
  corpus::CameraRegistry registry;
  bool has_registry = false;
  detection::RoiTable roi;
  bool has_roi = false;

  aggregate::AggregateOptions options() const {
    aggregate::AggregateOptions o;
    o.registry = has_registry ? &registry : nullptr;
    o.roi = has_roi ? &roi : nullptr;
    return o;
  }
};

Inputs load_inputs(const Context& ctx, aggregate::Schema schema, const std::string& roi_override, bool need_registry) {
  Inputs in;
  if (need_registry || schema != aggregate::Schema::camera) {
    in.registry = corpus::CameraRegistry::load_csv(ctx.registry_path());
    in.has_registry = true;
  }
  const std::string roi = roi_override.empty() ? ctx.cfg.paths.roi : roi_override;
  if (!roi.empty()) {
    in.roi = detection::RoiTable::load_csv(roi);
    in.has_roi = true;
  }
  return in;
}

std::vector<aggregate::StatBundle> stats_all_modes(std::span<const detection::DetectionPacket> packets,
                                                   aggregate::Schema schema,
                                                   const std::vector<detection::RoadUser>& modes,
                                                   const aggregate::AggregateOptions& opts) {
  std::vector<aggregate::StatBundle> out;
  for (auto m : modes) {
    auto b = aggregate::aggregate_stats(packets, schema, m, opts);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

int cmd_aggregate(const Context& ctx, const AggregateArgs& a) {
  std::vector<std::string> labels = a.windows;
  if (labels.empty())
    for (const auto& [label, w] : ctx.cfg.windows) labels.push_back(label);
  if (labels.empty()) throw UsageError("no analysis windows given or configured");
  const auto schema = schema_or(a.schema, ctx.cfg.schema);
  const auto packets = load_packets(ctx);
  const Inputs in = load_inputs(ctx, schema, a.roi, false);
  const auto modes = parse_modes({});
  for (const auto& label : labels) {
    const auto& w = window_or_usage(ctx, label);
    const auto sel = aggregate::select_window(packets, w, ctx.cfg.calendar);
    if (sel.empty()) throw IoError("window " + label + " contains no packets");
    const auto bundles = stats_all_modes(sel, schema, modes, in.options());
    const std::string path = ctx.out("stats_" + label + ".csv");
    aggregate::write_stats_csv(path, bundles);
    std::cout << label << ": " << sel.size() << " packets, " << bundles.size() << " bundles -> " << path << '\n';
  }
  return kExitOk;
}

struct Comparison {
  aggregate::HarmonizedPair harmonized;
  std::vector<aggregate::StatBundle> pre_stats;
  std::vector<aggregate::StatBundle> post_stats;
  std::vector<aggregate::ChangeRecord> changes;
};

Comparison compute_comparison(const Context& ctx, const std::string& pre, const std::string& post,
                              aggregate::Schema schema, const std::vector<detection::RoadUser>& modes, bool impute,
                              aggregate::ChangeBasis basis, const std::string& roi_override) {
  const auto spec = aggregate::HarmonizeSpec{window_or_usage(ctx, pre), window_or_usage(ctx, post), ctx.cfg.calendar};
  const auto packets = load_packets(ctx);
  const auto pre_sel = aggregate::select_window(packets, spec.pre, spec.calendar);
  const auto post_sel = aggregate::select_window(packets, spec.post, spec.calendar);
  if (pre_sel.empty()) throw IoError("window " + pre + " contains no packets");
  if (post_sel.empty()) throw IoError("window " + post + " contains no packets");
  Comparison c;
  c.harmonized = impute ? aggregate::harmonize_imputed(pre_sel, post_sel, spec) : aggregate::harmonize(pre_sel, post_sel, spec);
  const Inputs in = load_inputs(ctx, schema, roi_override, false);
  c.pre_stats = stats_all_modes(c.harmonized.pre, schema, modes, in.options());
  c.post_stats = stats_all_modes(c.harmonized.post, schema, modes, in.options());
  c.changes = aggregate::compare_bundles(c.pre_stats, c.post_stats, basis);
  return c;
}

struct CompareArgs {
  std::string pre;
  std::string post;
  std::string schema;
  std::vector<std::string> modes;
  int k = 0;
  bool impute = false;
  std::string basis = "mean";
  std::string roi;
};

int cmd_compare(const Context& ctx, const CompareArgs& a) {
  if (a.basis != "mean" && a.basis != "total") throw UsageError("--basis must be mean or total");
  const auto basis = a.basis == "mean" ? aggregate::ChangeBasis::mean : aggregate::ChangeBasis::total;
  const auto schema = schema_or(a.schema, ctx.cfg.schema);
  const int k = a.k > 0 ? a.k : ctx.cfg.thresholds.top_changes_k;
  const auto c = compute_comparison(ctx, a.pre, a.post, schema, parse_modes(a.modes), a.impute, basis, a.roi);

  const std::string tag = a.pre + "_" + a.post;
  aggregate::write_stats_csv(ctx.out("stats_" + tag + "_pre.csv"), c.pre_stats);
  aggregate::write_stats_csv(ctx.out("stats_" + tag + "_post.csv"), c.post_stats);
  aggregate::write_changes_csv(ctx.out("changes_" + tag + ".csv"), c.changes);
  const auto inc = aggregate::top_changes(c.changes, static_cast<std::size_t>(k), aggregate::Direction::increase);
  const auto dec = aggregate::top_changes(c.changes, static_cast<std::size_t>(k), aggregate::Direction::decrease);
  aggregate::write_changes_csv(ctx.out("top_increase_" + tag + ".csv"), inc);
  aggregate::write_changes_csv(ctx.out("top_decrease_" + tag + ".csv"), dec);

  json h{{"pre", a.pre},
         {"post", a.post},
         {"imputed", a.impute},
         {"matched_keys", c.harmonized.matched.size()},
         {"dropped_pre_keys", c.harmonized.dropped_pre.size()},
         {"dropped_post_keys", c.harmonized.dropped_post.size()},
         {"pre_packets", c.harmonized.pre.size()},
         {"post_packets", c.harmonized.post.size()}};
  write_text(ctx.out("harmonization_" + tag + ".json"), h.dump(2) + "\n");

  std::cout << c.changes.size() << " change records (" << c.harmonized.matched.size() << " matched keys, "
            << c.harmonized.dropped_pre.size() + c.harmonized.dropped_post.size() << " dropped)\n";
  for (const auto& r : c.changes) {
    std::cout << "  " << r.partition << " " << aggregate::mode_name(r.mode) << ": "
              << (r.pct_delta ? format_fixed(*r.pct_delta, 2) + "%" : std::string("n/a")) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report / eval

struct ReportArgs {
  std::string stage;
  std::string pre;
  std::string post;
  std::string schema;
  std::string mock;
};

std::vector<evalmetrics::Finding> checklist_for(const Context& ctx, const summarize::PromptInputs& inputs,
                                                const std::string& override_path) {
  const std::string path = override_path.empty() ? ctx.cfg.paths.checklist : override_path;
  if (!path.empty()) return evalmetrics::load_checklist(path);
  auto list = summarize::checklist_from(inputs);
  if (list.empty()) {
    for (const auto& r : inputs.changes) {
      evalmetrics::Finding f;
      f.mode = aggregate::mode_name(r.mode);
      f.location = r.partition;
      f.claim = f.mode + " at " + f.location;
      list.push_back(std::move(f));
    }
  }
  return list;
}

json failures_json(std::span<const summarize::ValidationFailure> failures) {
  json arr = json::array();
  for (const auto& f : failures) {
    json j{{"quantity", f.quantity}, {"reported", f.reported}};
    if (!std::isnan(f.lo)) {
      j["lo"] = f.lo;
      j["hi"] = f.hi;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

int cmd_report(const Context& ctx, const ReportArgs& a) {
  summarize::Stage stage;
  try {
    stage = summarize::parse_stage(a.stage);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto& ep = ctx.cfg.endpoint;
  const std::string mock = a.mock.empty() ? ep.mock : a.mock;

  std::vector<summarize::ExemplarChunk> library;
  if (stage == summarize::Stage::D) {
    if (ctx.cfg.paths.exemplars.empty()) throw ConfigError("stage D needs paths.exemplars in the configuration");
    if (!fs::exists(ctx.cfg.paths.exemplars)) throw ConfigError("exemplar library " + ctx.cfg.paths.exemplars + " not found");
    library = summarize::load_exemplar_library(ctx.cfg.paths.exemplars);
    if (library.empty()) throw ConfigError("exemplar library " + ctx.cfg.paths.exemplars + " is empty");
  }

  std::unique_ptr<summarize::TextGenClient> client;
  if (!mock.empty()) {
    client = std::make_unique<summarize::MockTextGenClient>(summarize::parse_mock_behavior(mock));
  } else {
    if (ep.url.empty()) throw ConfigError("no endpoint url configured and no mock selected");
    client = std::make_unique<summarize::HttpTextGenClient>(ep.url, ep.token, ep.timeout_seconds);
  }

  const auto schema = schema_or(a.schema, ctx.cfg.schema);
  const auto c = compute_comparison(ctx, a.pre, a.post, schema, parse_modes({}), false, aggregate::ChangeBasis::mean, "");
  summarize::PromptInputs inputs;
  inputs.pre_label = a.pre;
  inputs.post_label = a.post;
  inputs.pre_year = year_of(ctx.cfg.window(a.pre));
  inputs.post_year = year_of(ctx.cfg.window(a.post));
  inputs.schema = schema;
  inputs.pre_stats = c.pre_stats;
  inputs.post_stats = c.post_stats;
  inputs.changes = c.changes;
  inputs.top_k = static_cast<std::size_t>(ctx.cfg.thresholds.top_changes_k);

  const std::string prompt =
      summarize::build_prompt(stage, inputs, library, static_cast<std::size_t>(ctx.cfg.thresholds.exemplar_top_k));
  const std::string s = summarize::to_string(stage);
  write_text(ctx.out("prompt_" + s + ".txt"), prompt);

  summarize::GenerationConfig gcfg;
  gcfg.temperature = ep.sweep.front();
  gcfg.top_p = ep.top_p;
  gcfg.n_best = ep.n_best;
  gcfg.max_retries = ep.max_retries;

  summarize::EvalContext ectx;
  ectx.stage = s;
  ectx.truth = summarize::ground_truth_from(inputs);
  ectx.checklist = checklist_for(ctx, inputs, "");

  const auto candidates = summarize::generate_candidates(*client, prompt, gcfg, ep.sweep, ectx.truth);
  const std::size_t best = summarize::select_best(candidates, ectx);
  json sweep_mean{{"ncs", 0.0}, {"cm_f1", 0.0}, {"hr", 0.0}, {"score", 0.0}};
  for (const auto& cand : candidates) {
    const auto r = summarize::evaluate_candidate(cand, ectx);
    const double n = static_cast<double>(candidates.size());
    sweep_mean["ncs"] = sweep_mean["ncs"].get<double>() + r.ncs / n;
    sweep_mean["cm_f1"] = sweep_mean["cm_f1"].get<double>() + r.cm_f1 / n;
    sweep_mean["hr"] = sweep_mean["hr"].get<double>() + r.hr / n;
    sweep_mean["score"] = sweep_mean["score"].get<double>() + r.score / n;
  }

  gcfg.temperature = candidates[best].temperature;
  const auto outcome = summarize::validate_and_reprompt(candidates[best], prompt, ectx.truth, ectx.tolerance, *client, gcfg);
  const auto metrics = summarize::evaluate_candidate(outcome.report, ectx);

  const std::string accepted_path = ctx.out("report_" + s + ".txt");
  const std::string rejected_path = ctx.out("report_" + s + ".rejected.txt");
  std::error_code ec;
  fs::remove(outcome.accepted ? rejected_path : accepted_path, ec);
  write_text(outcome.accepted ? accepted_path : rejected_path, outcome.report.text);

  json attempts = json::array();
  for (const auto& log : outcome.attempts) {
    attempts.push_back({{"retry", log.retry}, {"failures", failures_json(log.failures)}, {"error", log.error}});
  }
  json sidecar{{"stage", s},
               {"ncs", metrics.ncs},
               {"cm_f1", metrics.cm_f1},
               {"hr", metrics.hr},
               {"score", metrics.score},
               {"retries", outcome.retries},
               {"accepted", outcome.accepted},
               {"precision", metrics.precision},
               {"recall", metrics.recall},
               {"temperature", outcome.report.temperature},
               {"candidates", candidates.size()},
               {"sweep_mean", sweep_mean},
               {"initial_failures", failures_json(outcome.initial_failures)},
               {"attempts", attempts},
               {"warnings", outcome.report.warnings}};
  write_text(ctx.out("report_" + s + ".json"), sidecar.dump(2) + "\n");

  std::cout << "stage " << s << ": " << (outcome.accepted ? "accepted" : "rejected") << " after " << outcome.retries
            << " retries, score " << format_fixed(metrics.score, 3) << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string report;
  std::string stage = "?";
  std::string changes;
  std::string checklist;
  int pre_year = 2024;
  int post_year = 2025;
};

int cmd_eval(const Context& ctx, const EvalArgs& a) {
  std::ifstream in(a.report);
  if (!in) throw UsageError("cannot read report " + a.report);
  std::stringstream text;
  text << in.rdbuf();
  summarize::PromptInputs inputs;
  inputs.pre_year = a.pre_year;
  inputs.post_year = a.post_year;
  inputs.changes = aggregate::read_changes_csv(a.changes);
  inputs.top_k = static_cast<std::size_t>(ctx.cfg.thresholds.top_changes_k);
  const auto truth = summarize::ground_truth_from(inputs);
  const auto checklist = checklist_for(ctx, inputs, a.checklist);
  const auto report = evalmetrics::evaluate_report(a.stage, text.str(), truth, checklist);
  const std::string body = evalmetrics::to_json(report) + "\n";
  write_text(ctx.out("eval_" + a.stage + ".json"), body);
  std::cout << body;
  return kExitOk;
}

// ---------------------------------------------------------------- charts

struct ChartArgs {
  std::string pre;
  std::string post;
  std::vector<std::string> modes;
  std::string roi;
};

int cmd_charts(const Context& ctx, const ChartArgs& a) {
  static const char* kDays[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
  const auto& wpre = window_or_usage(ctx, a.pre);
  const auto& wpost = window_or_usage(ctx, a.post);
  const auto& cal = ctx.cfg.calendar;
  const auto packets = load_packets(ctx);
  const auto pre = aggregate::select_window(packets, wpre, cal);
  const auto post = aggregate::select_window(packets, wpost, cal);
  if (pre.empty() || post.empty()) throw IoError("no statistics for " + (pre.empty() ? a.pre : a.post));
  const Inputs in = load_inputs(ctx, aggregate::Schema::camera, a.roi, true);
  const detection::RoiTable* roi = in.has_roi ? &in.roi : nullptr;

  auto dow_key = [&](const detection::DetectionPacket& p) {
    return std::to_string(aggregate::local_time(p.t, cal).dow);
  };
  std::string series_pre = std::to_string(year_of(wpre));
  std::string series_post = std::to_string(year_of(wpost));
  if (series_pre == series_post) {
    series_pre = a.pre;
    series_post = a.post;
  }

  std::ostringstream data;
  data << "mode,dow,series,value\n";
  for (auto mode : parse_modes(a.modes)) {
    const std::string name = aggregate::mode_name(mode);
    std::map<int, double> pre_by_day;
    std::map<int, double> post_by_day;
    for (const auto& b : aggregate::aggregate_by(pre, dow_key, mode, roi)) pre_by_day[std::stoi(b.partition)] = b.mean;
    for (const auto& b : aggregate::aggregate_by(post, dow_key, mode, roi)) post_by_day[std::stoi(b.partition)] = b.mean;

    std::vector<std::string> categories;
    BarSeries s_pre{series_pre, {}};
    BarSeries s_post{series_post, {}};
    for (int d = 0; d < 7; ++d) {
      if (!pre_by_day.contains(d) && !post_by_day.contains(d)) continue;
      categories.push_back(kDays[d]);
      s_pre.values.push_back(pre_by_day.contains(d) ? pre_by_day[d] : 0.0);
      s_post.values.push_back(post_by_day.contains(d) ? post_by_day[d] : 0.0);
      data << name << ',' << kDays[d] << ',' << csv::escape(s_pre.name) << ',' << format_double(s_pre.values.back()) << '\n';
      data << name << ',' << kDays[d] << ',' << csv::escape(s_post.name) << ',' << format_double(s_post.values.back())
           << '\n';
    }
    write_text(ctx.out("chart_" + name + ".svg"),
               grouped_bar_svg("Average " + name + " " + (roi ? "density" : "count") + " by day of week", 
                               roi ? "detections per m^2 per frame" : "detections per frame", categories,
                               {s_pre, s_post}));

    const auto opts = in.options();
    const auto changes = aggregate::compare_bundles(aggregate::aggregate_stats(pre, aggregate::Schema::camera, mode, opts),
                                                    aggregate::aggregate_stats(post, aggregate::Schema::camera, mode, opts));
    std::ostringstream map;
    map << "cam_id,lat,lon,pct_delta\n";
    std::size_t rows = 0;
    for (const auto& r : changes) {
      const auto* cam = in.registry.find(r.partition);
      if (!cam) {
        std::cerr << "warning: camera " << r.partition << " is not in the registry; left off the map\n";
        continue;
      }
      map << csv::join({r.partition, format_double(cam->latitude), format_double(cam->longitude),
                        r.pct_delta ? format_double(*r.pct_delta) : "NA"})
          << '\n';
      ++rows;
    }
    write_text(ctx.out("map_" + name + ".csv"), map.str());
    std::cout << name << ": " << categories.size() << " day groups, " << rows << " map rows\n";
  }
  write_text(ctx.out("chart_data.csv"), data.str());
  return kExitOk;
}


// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::vector<std::string> scenes;
  std::string source;
  bool packets = false;
  std::size_t cameras = 10;
  int days = 14;
  int per_day = 48;
  std::vector<std::string> shifts;
  bool exact = false;
};

int cmd_synth(const Context& ctx, const SynthArgs& a) {
  if (a.scenes.empty() && !a.packets) throw UsageError("nothing to generate; give --scene and/or --packets");
  corpus::CameraRegistry registry;
  const std::string reg_path = ctx.registry_path();
  if (fs::exists(reg_path)) registry = corpus::CameraRegistry::load_csv(reg_path);

  if (a.packets) {
    synthgen::PacketScenario sc;
    sc.cameras = a.cameras;
    sc.days = a.days;
    sc.packets_per_day = a.per_day;
    sc.exact_shift = a.exact;
    sc.seed = ctx.g.seed;
    for (const auto& s : a.shifts) {
      const auto eq = s.find('=');
      const auto mode = eq == std::string::npos ? std::nullopt : detection::parse_road_user(s.substr(0, eq));
      if (!mode) throw UsageError("--shift expects mode=fraction, got '" + s + "'");
      sc.shift[static_cast<std::size_t>(*mode)] = std::stod(s.substr(eq + 1));
    }
    synthgen::GeneratedPackets g;
    try {
      g = synthgen::gen_packets(sc);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    for (const auto& [id, rec] : g.registry)
      if (!registry.contains(id)) registry.register_camera(rec);
    detection::PacketStore store(ctx.packets_path());
    const std::size_t n = store.append(g.pre) + store.append(g.post);
    std::cout << "packets: " << n << " new for " << sc.cameras << " cameras -> " << ctx.packets_path() << '\n';

    auto window = [&](const std::string& start) {
      const auto d0 = parse_date(start);
      return json{{"start", start}, {"end", format_date(d0 + sc.days - 1)}};
    };
    json cfg{{"paths", {{"registry", fs::absolute(reg_path).string()}, {"packets", fs::absolute(ctx.packets_path()).string()}}},
             {"windows", {{"pre", window(sc.pre_start)}, {"post", window(sc.post_start)}}},
             {"endpoint", {{"mock", "faithful"}}}};
    write_text(ctx.out("pipeline.json"), cfg.dump(2) + "\n");
    std::cout << "config with windows 'pre' and 'post' -> " << ctx.out("pipeline.json") << '\n';
  }

  const std::string source = a.source.empty() ? ctx.out("source") : a.source;
  std::ostringstream labels;
  labels << "cam_id,ts,viewpoint\n";
  for (const auto& path : a.scenes) {
    const auto spec = synthgen::load_scene_spec(path);
    const auto scene = synthgen::render_scene(spec);
    for (std::size_t i = 0; i < scene.frames.size(); ++i) {
      const auto& f = scene.frames[i];
      const auto dir = fs::path(source) / f.cam_id;
      fs::create_directories(dir);
      save_png(f.pixels, (dir / (std::to_string(f.timestamp) + ".png")).string());
      labels << f.cam_id << ',' << f.timestamp << ',' << scene.labels[i].viewpoint << '\n';
    }
    if (!registry.contains(spec.cam_id))
      registry.register_camera({spec.cam_id, 40.75, -73.98, "Manhattan", corpus::ZoneFlag::inside, source});
    std::cout << spec.cam_id << ": " << scene.frames.size() << " frames -> " << (fs::path(source) / spec.cam_id).string()
              << '\n';
  }
  if (!a.scenes.empty()) write_text(ctx.out("scene_labels.csv"), labels.str());
  registry.save_csv(reg_path);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Viewpoint-normalized traffic camera analytics", "trafficview"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration file");
  app.add_option("--seed", g.seed, "Run seed for all randomized steps");
  app.add_option("--out", g.out, "Output directory");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Decode snapshots into the canonical grayscale store");
  c_ingest->add_option("--source", ingest.source, "Directory laid out as <cam_id>/<unix_ts>.{png,jpg}");
  c_ingest->add_flag("--poll", ingest.poll, "Fetch one snapshot from every HTTP camera instead");

  NormalizeArgs norm;
  auto* c_norm = app.add_subcommand("normalize", "Cluster each camera's frames into viewpoints");
  c_norm->add_option("--cam", norm.cams, "Camera id (repeatable; default all)");

  ImportArgs imp;
  auto* c_imp = app.add_subcommand("detect-import", "Turn detector output into count packets");
  c_imp->add_option("--detections", imp.detections, "Detection JSON-lines file");
  c_imp->add_option("--validation", imp.validation, "Labeled validation JSON-lines for threshold selection");
  c_imp->add_option("--assignments", imp.assignments, "Viewpoint assignment CSV");
  c_imp->add_option("--threshold", imp.threshold, "Score threshold override");

  AggregateArgs agg;
  auto* c_agg = app.add_subcommand("aggregate", "Per-window descriptive statistics");
  c_agg->add_option("--window", agg.windows, "Window label (repeatable; default all)");
  c_agg->add_option("--schema", agg.schema, "camera, zone or borough");
  c_agg->add_option("--roi", agg.roi, "ROI calibration CSV");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Harmonized pre/post changes and top-K lists");
  c_cmp->add_option("--pre", cmp.pre, "Pre window label")->required();
  c_cmp->add_option("--post", cmp.post, "Post window label")->required();
  c_cmp->add_option("--schema", cmp.schema, "camera, zone or borough");
  c_cmp->add_option("--mode", cmp.modes, "car, truck, ped or bike (repeatable; default all)");
  c_cmp->add_option("-k,--top", cmp.k, "Length of the top-change lists");
  c_cmp->add_flag("--impute", cmp.impute, "Fill unmatched calendar keys instead of dropping them");
  c_cmp->add_option("--basis", cmp.basis, "mean or total");
  c_cmp->add_option("--roi", cmp.roi, "ROI calibration CSV");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Generate, validate and score a summary report");
  c_rep->add_option("--stage", rep.stage, "Prompt stage A, B, C or D")->required();
  c_rep->add_option("--pre", rep.pre, "Pre window label")->required();
  c_rep->add_option("--post", rep.post, "Post window label")->required();
  c_rep->add_option("--schema", rep.schema, "camera, zone or borough");
  c_rep->add_option("--mock", rep.mock, "Use the built-in mock endpoint: faithful, drift, stubborn, failing");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score an existing report text");
  c_ev->add_option("--report", ev.report, "Report text file")->required();
  c_ev->add_option("--changes", ev.changes, "Change CSV the report describes")->required();
  c_ev->add_option("--stage", ev.stage, "Stage label for the output");
  c_ev->add_option("--checklist", ev.checklist, "Expert checklist JSON-lines");
  c_ev->add_option("--pre-year", ev.pre_year, "Year of the pre window");
  c_ev->add_option("--post-year", ev.post_year, "Year of the post window");

  ChartArgs ch;
  auto* c_ch = app.add_subcommand("charts", "Day-of-week bar charts and map CSVs");
  c_ch->add_option("--pre", ch.pre, "Pre window label")->required();
  c_ch->add_option("--post", ch.post, "Post window label")->required();
  c_ch->add_option("--mode", ch.modes, "car, truck, ped or bike (repeatable; default all)");
  c_ch->add_option("--roi", ch.roi, "ROI calibration CSV");

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "Generate a synthetic frame corpus and/or packet store");
  c_syn->add_option("--scene", syn.scenes, "Scene spec JSON (repeatable)");
  c_syn->add_option("--source", syn.source, "Where rendered frames go (default <out>/source)");
  c_syn->add_flag("--packets", syn.packets, "Also generate pre/post packets, a registry and a config");
  c_syn->add_option("--cameras", syn.cameras, "Packet cameras");
  c_syn->add_option("--days", syn.days, "Days per window");
  c_syn->add_option("--per-day", syn.per_day, "Packets per camera and day");
  c_syn->add_option("--shift", syn.shifts, "Relative post change, e.g. car=-0.1 (repeatable)");
  c_syn->add_flag("--exact", syn.exact, "Make shifts exact (multiples of 0.1 only)");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) std::cerr << sub->help();
    return kExitUsage;
  }

  try {
    Context ctx;
    ctx.g = g;
    if (!g.config_path.empty()) {
      ctx.cfg = config::load_config(g.config_path);
      ctx.has_config = true;
    } else {
      ctx.cfg = config::default_config();
    }
    OutputLock lock(g.out);
    if (c_ingest->parsed()) return cmd_ingest(ctx, ingest);
    if (c_norm->parsed()) return cmd_normalize(ctx, norm);
    if (c_imp->parsed()) return cmd_detect_import(ctx, imp);
    if (c_agg->parsed()) return cmd_aggregate(ctx, agg);
    if (c_cmp->parsed()) return cmd_compare(ctx, cmp);
    if (c_rep->parsed()) return cmd_report(ctx, rep);
    if (c_ev->parsed()) return cmd_eval(ctx, ev);
    if (c_ch->parsed()) return cmd_charts(ctx, ch);
    if (c_syn->parsed()) return cmd_synth(ctx, syn);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace trafficview::cli
