// Acceptance gate: one PASS/FAIL line per criterion. Exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metric_properties.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"
#include "summarize_fixture.hpp"
#include "trafficview/aggregate.hpp"
#include "trafficview/common.hpp"
#include "trafficview/evalmetrics.hpp"
#include "trafficview/geometry.hpp"
#include "trafficview/normalize.hpp"
#include "trafficview/summarize.hpp"
#include "trafficview/synthgen.hpp"

using namespace trafficview;

namespace {

// Tolerances and budgets.
constexpr double kScoreTol = 0.001;
constexpr double kTiltTol = 1e-9;
constexpr double kRansacMaxErrorPx = 1.0;
constexpr int kRansacTrials = 50;
constexpr int kRansacRequired = 48;
constexpr double kStability = 0.60;
constexpr double kStabilityTol = 0.02;
constexpr double kStatRelTol = 1e-12;
constexpr std::size_t kPropertyCases = 10000;

constexpr double kBudgetTable = 1.0;
constexpr double kBudgetTilt = 1.0;
constexpr double kBudgetRansac = 30.0;
constexpr double kBudgetEndToEnd = 300.0;
constexpr double kBudgetAggregate = 10.0;
constexpr double kBudgetMetrics = 10.0;
constexpr double kBudgetSummarize = 5.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 5) detail_ << (detail_.tellp() > 0 ? "; " : "") << what;
  }
  Outcome done(const std::string& summary) const {
    Outcome o;
    o.pass = failures_ == 0;
    o.detail = o.pass ? summary : summary + " [" + std::to_string(failures_) + " failed: " + detail_.str() + "]";
    return o;
  }

 private:
  std::size_t failures_ = 0;
  std::ostringstream detail_;
};

bool close_rel(double a, double b) { return std::abs(a - b) <= kStatRelTol * std::max(1.0, std::abs(b)); }

std::string fmt(double v, int digits = 3) { return format_fixed(v, digits); }

// ------------------------------------------------------------------ criteria

Outcome table_one_composites() {
  struct Row {
    const char* stage;
    double ncs, cm_f1, hr, want;
  };
  const Row rows[] = {{"A", 0.148, 0.000, 0.857, 0.088},
                      {"B", 0.336, 0.222, 0.800, 0.263},
                      {"C", 0.085, 0.204, 1.000, 0.116},
                      {"D", 0.496, 0.227, 0.667, 0.356}};
  Checker c;
  std::string got;
  for (const auto& r : rows) {
    const double s = evalmetrics::composite_score(r.ncs, r.cm_f1, r.hr);
    c.expect(std::abs(s - r.want) <= kScoreTol, std::string("stage ") + r.stage + " " + fmt(s, 4));
    got += std::string(got.empty() ? "" : " ") + r.stage + "=" + fmt(s);
  }
  return c.done(got);
}

Outcome tilt_recovery() {
  Checker c;
  double worst = 0;
  for (int deg = -90; deg <= 90; ++deg) {
    const double a = deg * std::numbers::pi / 180.0;
    for (double s : {1.0, 0.5, 2.0}) {
      Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
      m << s * std::cos(a), -s * std::sin(a), 12.0, s * std::sin(a), s * std::cos(a), -7.0, 0.0, 0.0, 1.0;
      const double theta = geometry::tilt_angle(geometry::Homography(m)).theta_deg;
      worst = std::max(worst, std::abs(theta - deg));
      c.expect(std::abs(theta - deg) <= kTiltTol, std::to_string(deg) + " deg at s=" + fmt(s, 1));
    }
  }
  return c.done("181 angles x 3 scales, max error " + std::to_string(worst) + " deg");
}

Outcome ransac_robustness() {
  Checker c;
  int good = 0;
  double worst = 0;
  for (int t = 0; t < kRansacTrials; ++t) {
    const auto s = tvtest::ransac_scenario(1000 + t, 60, 40, 0.5);
    geometry::RansacParams p;
    p.seed = 77 + t;
    const auto est = geometry::ransac_homography(s.pairs, p);
    if (!est.accepted) continue;
    const double e = tvtest::max_error_on_true_inliers(est.h, s);
    worst = std::max(worst, e);
    good += e < kRansacMaxErrorPx;
  }
  int rejected = 0;
  for (int t = 0; t < kRansacTrials; ++t) {
    const auto s = tvtest::ransac_scenario(5000 + t, 20, 80, 0.5);
    geometry::RansacParams p;
    p.seed = 91 + t;
    rejected += !geometry::ransac_homography(s.pairs, p).accepted;
  }
  c.expect(good >= kRansacRequired, "accurate fits " + std::to_string(good));
  c.expect(rejected >= kRansacRequired, "rejections " + std::to_string(rejected));
  return c.done("60/40 accurate in " + std::to_string(good) + "/50 (worst " + fmt(worst) + " px), 20/80 rejected in " +
                std::to_string(rejected) + "/50");
}

Outcome end_to_end_normalization() {
  const auto spec = synthgen::load_scene_spec(std::string(TV_TESTDATA_DIR) + "/scenes/three_view.json");
  const auto scene = synthgen::render_scene(spec);
  normalize::NormalizeParams params;
  params.seed = 3;
  const auto r = normalize::normalize_camera(scene.frames, params);

  std::map<Timestamp, int> label;
  for (std::size_t i = 0; i < scene.frames.size(); ++i) label[scene.frames[i].timestamp] = scene.labels[i].viewpoint;
  Checker c;
  c.expect(r.clusters.size() == 3, "clusters " + std::to_string(r.clusters.size()));
  const viewgraph::ViewCluster* dom = nullptr;
  for (const auto& cl : r.clusters)
    if (cl.vp_id == r.dominant_vp) dom = &cl;
  c.expect(dom != nullptr, "no dominant cluster");
  if (dom) {
    std::set<int> labels;
    for (auto ts : dom->members) labels.insert(label[ts]);
    c.expect(dom->members.size() == 60 && labels == std::set<int>{0},
             "dominant cluster has " + std::to_string(dom->members.size()) + " frames");
  }
  c.expect(std::abs(r.stability - kStability) <= kStabilityTol, "stability " + fmt(r.stability));
  return c.done(std::to_string(r.clusters.size()) + " clusters, stability " + fmt(r.stability));
}

Outcome aggregation_oracle() {
  synthgen::PacketScenario sc;
  sc.cameras = 10;
  sc.days = 14;
  sc.packets_per_day = 48;
  sc.shift = {-0.08, 0.05, 0.12, -0.2};
  sc.missing_post_days = {3, 9};
  sc.seed = 2024;
  const auto g = synthgen::gen_packets(sc);
  const auto pre_w = aggregate::make_window("pre", "2024-02-05", "2024-02-18");
  const auto post_w = aggregate::make_window("post", "2025-02-03", "2025-02-16");
  const aggregate::HarmonizeSpec spec{pre_w, post_w, {}};
  const auto h = aggregate::harmonize(g.pre, g.post, spec);

  Checker c;
  // Key sets from the brute-force calendar.
  using Key = std::tuple<int, int, bool>;
  std::set<Key> pre_keys, post_keys;
  for (const auto& p : g.pre) pre_keys.insert(tvtest::oracle_key(p.t, pre_w.start_day));
  for (const auto& p : g.post) post_keys.insert(tvtest::oracle_key(p.t, post_w.start_day));
  std::set<Key> both;
  for (const auto& k : pre_keys)
    if (post_keys.contains(k)) both.insert(k);
  std::set<Key> missing_days;
  for (int d : sc.missing_post_days)
    for (bool peak : {false, true}) missing_days.insert({d / 7, d % 7, peak});
  std::set<Key> dropped;
  for (const auto& k : h.dropped_pre) dropped.insert({k.week, k.dow, k.peak});
  c.expect(dropped == missing_days, "dropped pre keys " + std::to_string(dropped.size()));
  c.expect(h.dropped_post.empty(), "dropped post keys " + std::to_string(h.dropped_post.size()));
  c.expect(h.matched.size() == both.size(), "matched keys " + std::to_string(h.matched.size()));

  std::vector<detection::DetectionPacket> pre, post;
  for (const auto& p : g.pre)
    if (both.contains(tvtest::oracle_key(p.t, pre_w.start_day))) pre.push_back(p);
  for (const auto& p : g.post)
    if (both.contains(tvtest::oracle_key(p.t, post_w.start_day))) post.push_back(p);
  c.expect(pre.size() == h.pre.size() && post.size() == h.post.size(), "harmonized packet counts");

  aggregate::AggregateOptions opts;
  opts.registry = &g.registry;
  std::size_t bundles = 0, records = 0;
  for (auto schema : {aggregate::Schema::camera, aggregate::Schema::zone, aggregate::Schema::borough}) {
    auto part = [&](const std::string& cam) -> std::string {
      if (schema == aggregate::Schema::camera) return cam;
      const auto* rec = g.registry.find(cam);
      return schema == aggregate::Schema::zone ? corpus::to_string(rec->zone_flag) : rec->borough;
    };
    const bool equal = schema != aggregate::Schema::camera;
    std::vector<aggregate::ChangeRecord> all;
    for (auto m : detection::kAllClasses) {
      const auto got_pre = aggregate::aggregate_stats(h.pre, schema, m, opts);
      const auto got_post = aggregate::aggregate_stats(h.post, schema, m, opts);
      const auto want_pre = tvtest::oracle_stats(pre, m, part, equal);
      const auto want_post = tvtest::oracle_stats(post, m, part, equal);
      for (const auto& [got, want] : {std::pair{&got_pre, &want_pre}, std::pair{&got_post, &want_post}}) {
        c.expect(got->size() == want->size(), "bundle count");
        for (std::size_t i = 0; i < std::min(got->size(), want->size()); ++i) {
          const auto& a = (*got)[i];
          const auto& b = (*want)[i];
          const bool ok = a.partition == b.partition && a.sample_count == b.sample_count && close_rel(a.total, b.total) &&
                          close_rel(a.mean, b.mean) && close_rel(a.median, b.median) && close_rel(a.std, b.std);
          c.expect(ok, "stats " + a.partition + "/" + aggregate::mode_name(m));
          ++bundles;
        }
      }
      const auto changes = aggregate::compare_bundles(got_pre, got_post);
      c.expect(changes.size() == want_pre.size(), "change count");
      for (std::size_t i = 0; i < std::min(changes.size(), want_pre.size()); ++i) {
        const auto& r = changes[i];
        const double pre_v = want_pre[i].mean, post_v = want_post[i].mean;
        bool ok = r.partition == want_pre[i].partition && close_rel(r.pre_value, pre_v) &&
                  close_rel(r.post_value, post_v) && close_rel(r.delta, post_v - pre_v);
        if (pre_v == 0) ok = ok && !r.pct_delta;
        else ok = ok && r.pct_delta && close_rel(*r.pct_delta, 100.0 * (post_v - pre_v) / pre_v);
        c.expect(ok, "change " + r.partition + "/" + aggregate::mode_name(m));
        ++records;
      }
      all.insert(all.end(), changes.begin(), changes.end());
    }
    for (auto dir : {aggregate::Direction::increase, aggregate::Direction::decrease})
      c.expect(aggregate::top_changes(all, 5, dir) == tvtest::oracle_top(all, 5, dir), "top-k order");
  }
  return c.done(std::to_string(bundles) + " bundles, " + std::to_string(records) + " change records, " +
                std::to_string(h.dropped_pre.size()) + " keys dropped");
}

Outcome metric_suite() {
  namespace em = evalmetrics;
  Checker c;
  auto item = [](double y, double g) { return em::NumericItem{y, g, em::QuantityKind::mean, true}; };
  c.expect(std::abs(em::relative_error(105, 100) - 0.05) < 1e-15, "eps");
  c.expect(em::relative_error(0, 0.5) == 0.5, "eps floor");
  const std::vector<em::NumericItem> half{item(10, 10), item(15, 10)};
  c.expect(std::abs(em::ncs(half) - 0.75) < 1e-15, "ncs 0.75");
  const std::vector<em::NumericItem> clamped{item(30, 10)};
  c.expect(em::ncs(clamped) == 0.0, "ncs clamp");
  const std::vector<em::Finding> gt{tvtest::pct_finding("truck", "inside", -10), tvtest::pct_finding("bike", "outside", 12)};
  const std::vector<em::Finding> p{tvtest::pct_finding("truck", "inside", -10), tvtest::pct_finding("car", "inside", 4)};
  const auto r = em::cm_f1(p, gt);
  c.expect(r.precision == 0.5 && r.recall == 0.5 && r.f1 == 0.5, "cm-f1 half");
  const std::vector<em::Finding> want{tvtest::pct_finding("truck", "inside", 9.0)};
  const std::vector<em::Finding> near{tvtest::pct_finding("truck", "inside", 9.8)};
  const std::vector<em::Finding> far{tvtest::pct_finding("truck", "inside", 10.2)};
  c.expect(em::cm_f1(near, want).f1 == 1.0 && em::cm_f1(far, want).f1 == 0.0, "pct tolerance");
  std::vector<em::Finding> claims(5);
  for (auto& f : claims) f.supported = true;
  for (int i = 0; i < 3; ++i) claims[i].supported = false;
  c.expect(std::abs(em::hallucination_rate(claims).rate - 0.6) < 1e-15, "hr 0.6");
  c.expect(em::hallucination_rate({}).zero_claims, "zero claims");

  const auto props = tvtest::run_metric_properties(424242, kPropertyCases);
  c.expect(props.cases == kPropertyCases, "cases " + std::to_string(props.cases));
  for (const auto& f : props.failures) c.expect(false, f);
  return c.done("examples + " + std::to_string(props.cases) + " property cases");
}

Outcome summarization_round_trip() {
  namespace sm = summarize;
  Checker c;
  const auto in = tvtest::zone_inputs();
  const auto lib = tvtest::exemplar_library(3);
  std::set<sm::Requirement> prev;
  for (auto s : {sm::Stage::A, sm::Stage::B, sm::Stage::C, sm::Stage::D}) {
    const auto req = sm::prompt_requirements(sm::build_prompt(s, in, lib));
    c.expect(std::includes(req.begin(), req.end(), prev.begin(), prev.end()) && req.size() > prev.size(),
             "stage " + sm::to_string(s) + " not monotone");
    prev = req;
  }

  const auto truth = sm::ground_truth_from(in);
  const auto prompt = sm::build_prompt(sm::Stage::C, in);
  sm::MockTextGenClient drift(sm::MockTextGenClient::Behavior::drift);
  auto cand = sm::generate_candidates(drift, prompt, {}, std::vector<double>{0.2}, truth)[0];
  const auto d = sm::validate_and_reprompt(cand, prompt, truth, {}, drift, {});
  c.expect(d.accepted && d.retries == 1, "drift retries " + std::to_string(d.retries));
  c.expect(d.attempts.size() == 1 && d.initial_failures.size() == 1 &&
               d.attempts[0].prompt.find(d.initial_failures[0].quantity) != std::string::npos,
           "corrective prompt does not name the quantity");

  sm::MockTextGenClient stubborn(sm::MockTextGenClient::Behavior::stubborn);
  cand = sm::generate_candidates(stubborn, prompt, {}, std::vector<double>{0.2}, truth)[0];
  const auto s = sm::validate_and_reprompt(cand, prompt, truth, {}, stubborn, {});
  c.expect(!s.accepted && s.retries == 3, "stubborn retries " + std::to_string(s.retries));
  return c.done("stages monotone, drift retries " + std::to_string(d.retries) + ", stubborn rejected after " +
                std::to_string(s.retries));
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"table1_composite", kBudgetTable, table_one_composites},
      {"tilt_recovery", kBudgetTilt, tilt_recovery},
      {"ransac_robustness", kBudgetRansac, ransac_robustness},
      {"end_to_end_normalization", kBudgetEndToEnd, end_to_end_normalization},
      {"aggregation_oracle", kBudgetAggregate, aggregation_oracle},
      {"metric_suite", kBudgetMetrics, metric_suite},
      {"summarization_round_trip", kBudgetSummarize, summarization_round_trip},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= cr.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %s: %s (%.2f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", cr.name, o.detail.c_str(), secs,
                cr.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
