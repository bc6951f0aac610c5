#include "trafficview/viewgraph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "trafficview/error.hpp"

namespace trafficview::viewgraph {

ViewGraph::ViewGraph(std::string cam_id, std::vector<Timestamp> frames)
    : cam_id_(std::move(cam_id)), frames_(std::move(frames)), adjacency_(frames_.size()) {
  std::sort(frames_.begin(), frames_.end());
  if (std::adjacent_find(frames_.begin(), frames_.end()) != frames_.end()) {
    throw InvalidArgument("duplicate frame timestamp in camera " + cam_id_);
  }
}

int ViewGraph::index_of(Timestamp ts) const {
  auto it = std::lower_bound(frames_.begin(), frames_.end(), ts);
  if (it == frames_.end() || *it != ts) return -1;
  return static_cast<int>(it - frames_.begin());
}

bool ViewGraph::has_edge(int a, int b) const {
  const auto& n = adjacency_[a];
  return std::find(n.begin(), n.end(), b) != n.end();
}

void ViewGraph::add_edge(int a, int b, double theta_deg) {
  if (a == b || has_edge(a, b)) return;
  adjacency_[a].push_back(b);
  adjacency_[b].push_back(a);
  edges_.push_back(Edge{std::min(a, b), std::max(a, b), theta_deg});
}

ViewGraph build_view_graph(const std::string& cam_id, std::span<const Timestamp> frames,
                           std::span<const geometry::PairwiseResult> pairwise, double delta_deg) {
  ViewGraph g(cam_id, std::vector<Timestamp>(frames.begin(), frames.end()));
  for (const auto& r : pairwise) {
    if (r.cam_id != cam_id) {
      throw InvalidArgument("pairwise result for camera " + r.cam_id + " in graph of " + cam_id);
    }
    const int i = g.index_of(r.ts_i);
    const int j = g.index_of(r.ts_j);
    if (i < 0 || j < 0) {
      throw InvalidArgument("pairwise result references unknown frame " +
                            std::to_string(i < 0 ? r.ts_i : r.ts_j) + " of camera " + cam_id);
    }
    if (r.accepted && geometry::same_view(r.theta_deg, delta_deg)) g.add_edge(i, j, r.theta_deg);
  }
  return g;
}

std::vector<ViewCluster> connected_components(const ViewGraph& g) {
  const int n = static_cast<int>(g.vertex_count());
  std::vector<int> component(n, -1);
  std::vector<ViewCluster> clusters;
  std::vector<int> stack;
  // Vertices are timestamp-ordered, so discovery order is earliest-member order.
  for (int start = 0; start < n; ++start) {
    if (component[start] >= 0) continue;
    ViewCluster cluster;
    cluster.vp_id = static_cast<int>(clusters.size());
    component[start] = cluster.vp_id;
    stack.push_back(start);
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      cluster.members.push_back(g.frames()[v]);
      for (int w : g.neighbours(v)) {
        if (component[w] < 0) {
          component[w] = cluster.vp_id;
          stack.push_back(w);
        }
      }
    }
    std::sort(cluster.members.begin(), cluster.members.end());
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

int dominant_cluster(std::span<const ViewCluster> clusters) {
  if (clusters.empty()) throw InvalidArgument("no clusters to choose from");
  const ViewCluster* best = &clusters.front();
  for (const auto& c : clusters) {
    if (c.size() > best->size() || (c.size() == best->size() && c.earliest() < best->earliest())) best = &c;
  }
  return best->vp_id;
}

double stability_score(std::span<const ViewCluster> clusters, std::size_t total_frames) {
  if (total_frames < 1) throw InvalidArgument("stability needs at least one frame");
  if (clusters.empty()) return 0.0;
  const int dom = dominant_cluster(clusters);
  for (const auto& c : clusters) {
    if (c.vp_id == dom) return static_cast<double>(c.size()) / static_cast<double>(total_frames);
  }
  return 0.0;
}

std::vector<TaggedFrame> filter_to_dominant(std::span<const Timestamp> frames, std::span<const ViewCluster> clusters) {
  std::vector<TaggedFrame> out;
  if (clusters.empty()) return out;
  const int dom = dominant_cluster(clusters);
  const ViewCluster* dc = nullptr;
  for (const auto& c : clusters)
    if (c.vp_id == dom) dc = &c;
  for (Timestamp ts : frames) {
    if (std::binary_search(dc->members.begin(), dc->members.end(), ts)) out.push_back(TaggedFrame{ts, dom});
  }
  std::sort(out.begin(), out.end(), [](const TaggedFrame& a, const TaggedFrame& b) { return a.ts < b.ts; });
  return out;
}

ClusteringOutcome cluster_all_pairs(const std::string& cam_id, std::span<const Timestamp> frames,
                                    const PairFn& compare, double delta_deg) {
  ClusteringOutcome out;
  const int n = static_cast<int>(frames.size());
  out.pairwise.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.pairwise.push_back(compare(i, j));
  out.clusters = connected_components(build_view_graph(cam_id, frames, out.pairwise, delta_deg));
  return out;
}

ClusteringOutcome cluster_streaming(const std::string& cam_id, std::span<const Timestamp> frames,
                                    const PairFn& compare, double delta_deg) {
  ClusteringOutcome out;
  const int n = static_cast<int>(frames.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frames[a] < frames[b]; });

  // Union-find over frames; exemplar of a set = its earliest member.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::vector<int> exemplars;  // vertex index of each live cluster's earliest member
  for (int v : order) {
    std::vector<int> joined;
    for (int ex : exemplars) {
      const int a = std::min(ex, v), b = std::max(ex, v);
      auto r = compare(a, b);
      out.pairwise.push_back(r);
      if (r.accepted && geometry::same_view(r.theta_deg, delta_deg)) joined.push_back(ex);
    }
    if (joined.empty()) {
      exemplars.push_back(v);
      continue;
    }
    for (int ex : joined) parent[find(ex)] = find(v);
    // Keep the earliest exemplar of the merged set, drop the others.
    int keep = joined.front();
    for (int ex : joined)
      if (frames[ex] < frames[keep]) keep = ex;
    std::erase_if(exemplars, [&](int ex) { return ex != keep && find(ex) == find(v); });
  }

  ViewGraph g(cam_id, std::vector<Timestamp>(frames.begin(), frames.end()));
  for (int v = 0; v < n; ++v) {
    const int root = find(v);
    if (root != v) g.add_edge(g.index_of(frames[v]), g.index_of(frames[root]), 0.0);
  }
  out.clusters = connected_components(g);
  return out;
}

ClusteringOutcome cluster_frames(const std::string& cam_id, std::span<const Timestamp> frames,
                                 const PairFn& compare, double delta_deg, PairingMode mode) {
  if (mode == PairingMode::automatic) {
    mode = frames.size() <= kAllPairsLimit ? PairingMode::all_pairs : PairingMode::streaming;
  }
  return mode == PairingMode::all_pairs ? cluster_all_pairs(cam_id, frames, compare, delta_deg)
                                        : cluster_streaming(cam_id, frames, compare, delta_deg);
}

std::vector<AssignmentRow> assignment_rows(const std::string& cam_id, std::span<const ViewCluster> clusters) {
  std::vector<AssignmentRow> rows;
  if (clusters.empty()) return rows;
  const int dom = dominant_cluster(clusters);
  for (const auto& c : clusters)
    for (Timestamp ts : c.members) rows.push_back(AssignmentRow{cam_id, ts, c.vp_id, c.vp_id == dom});
  std::sort(rows.begin(), rows.end(), [](const AssignmentRow& a, const AssignmentRow& b) { return a.ts < b.ts; });
  return rows;
}

void write_assignments(const std::string& path, std::span<const AssignmentRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "cam_id,ts,vp_id,is_dominant\n";
  for (const auto& r : rows) {
    out << csv::escape(r.cam_id) << ',' << r.ts << ',' << r.vp_id << ',' << (r.is_dominant ? 1 : 0) << '\n';
  }
}

std::vector<AssignmentRow> read_assignments(const std::string& path) {
  std::vector<AssignmentRow> out;
  for (const auto& row : csv::read_file(path, {"cam_id", "ts", "vp_id", "is_dominant"})) {
    if (row.size() != 4) throw ParseError(path + ": expected 4 fields");
    try {
      out.push_back(AssignmentRow{row[0], std::stoll(row[1]), std::stoi(row[2]), row[3] == "1" || row[3] == "true"});
    } catch (const std::exception&) {
      throw ParseError(path + ": bad assignment row");
    }
  }
  return out;
}

void write_stability(const std::string& path, std::span<const StabilityRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "cam_id,stability,num_clusters,frames_total\n";
  for (const auto& r : rows) {
    out << csv::escape(r.cam_id) << ',' << format_fixed(r.stability, 6) << ',' << r.num_clusters << ','
        << r.frames_total << '\n';
  }
}

std::vector<StabilityRow> read_stability(const std::string& path) {
  std::vector<StabilityRow> out;
  for (const auto& row : csv::read_file(path, {"cam_id", "stability", "num_clusters", "frames_total"})) {
    if (row.size() != 4) throw ParseError(path + ": expected 4 fields");
    try {
      out.push_back(StabilityRow{row[0], std::stod(row[1]), std::stoull(row[2]), std::stoull(row[3])});
    } catch (const std::exception&) {
      throw ParseError(path + ": bad stability row");
    }
  }
  return out;
}

}  // namespace trafficview::viewgraph
