#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trafficview/common.hpp"
#include "trafficview/geometry.hpp"

namespace trafficview::viewgraph {

struct Edge {
  int i = 0;  // vertex indices, i < j
  int j = 0;
  double theta_deg = 0.0;
};

/// Same-view graph of one camera. Vertices are that camera's frames ordered
/// by timestamp; an edge joins two frames whose pairwise fit was accepted
/// and whose tilt angle is within delta.
class ViewGraph {
 public:
  ViewGraph(std::string cam_id, std::vector<Timestamp> frames);

  const std::string& cam_id() const noexcept { return cam_id_; }
  std::size_t vertex_count() const noexcept { return frames_.size(); }
  const std::vector<Timestamp>& frames() const noexcept { return frames_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<int>& neighbours(int v) const { return adjacency_[v]; }

  /// Vertex index of a timestamp, or -1.
  int index_of(Timestamp ts) const;
  bool has_edge(int a, int b) const;

  /// Adds an undirected edge; duplicates and self-loops are ignored.
  void add_edge(int a, int b, double theta_deg);

 private:
  std::string cam_id_;
  std::vector<Timestamp> frames_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<Edge> edges_;
};

/// Throws InvalidArgument when a result names another camera or a frame
/// that is not in `frames`.
ViewGraph build_view_graph(const std::string& cam_id, std::span<const Timestamp> frames,
                           std::span<const geometry::PairwiseResult> pairwise, double delta_deg = 10.0);

struct ViewCluster {
  int vp_id = 0;
  std::vector<Timestamp> members;  // ascending

  std::size_t size() const noexcept { return members.size(); }
  Timestamp earliest() const { return members.front(); }
};

/// Connected components; ids are assigned 0, 1, ... in order of each
/// component's earliest member timestamp.
std::vector<ViewCluster> connected_components(const ViewGraph& g);

/// Largest cluster, ties to the one with the older earliest member.
/// Throws InvalidArgument on an empty list.
int dominant_cluster(std::span<const ViewCluster> clusters);

/// |dominant| / total_frames. Throws InvalidArgument when total_frames < 1.
double stability_score(std::span<const ViewCluster> clusters, std::size_t total_frames);

struct TaggedFrame {
  Timestamp ts = 0;
  int vp_id = 0;

  friend bool operator==(const TaggedFrame&, const TaggedFrame&) = default;
};

/// Frames belonging to the dominant cluster, timestamp-ordered.
std::vector<TaggedFrame> filter_to_dominant(std::span<const Timestamp> frames,
                                            std::span<const ViewCluster> clusters);

/// Pairwise comparison callback used by the clustering drivers: given two
/// vertex indices (i < j) returns the fit result for that pair.
using PairFn = std::function<geometry::PairwiseResult(int, int)>;

enum class PairingMode { all_pairs, streaming, automatic };

inline constexpr std::size_t kAllPairsLimit = 500;

struct ClusteringOutcome {
  std::vector<ViewCluster> clusters;
  std::vector<geometry::PairwiseResult> pairwise;
};

/// Exact mode: every pair is compared and the components of the full graph
/// are returned.
ClusteringOutcome cluster_all_pairs(const std::string& cam_id, std::span<const Timestamp> frames,
                                    const PairFn& compare, double delta_deg = 10.0);

/// Streaming mode: each frame (in timestamp order) is compared only with the
/// earliest member of every existing cluster; matching clusters are merged,
/// otherwise the frame opens a new singleton cluster.
ClusteringOutcome cluster_streaming(const std::string& cam_id, std::span<const Timestamp> frames,
                                    const PairFn& compare, double delta_deg = 10.0);

/// all_pairs up to kAllPairsLimit frames, streaming above, unless forced.
ClusteringOutcome cluster_frames(const std::string& cam_id, std::span<const Timestamp> frames,
                                 const PairFn& compare, double delta_deg = 10.0,
                                 PairingMode mode = PairingMode::automatic);

/// `cam_id,ts,vp_id,is_dominant`
struct AssignmentRow {
  std::string cam_id;
  Timestamp ts = 0;
  int vp_id = 0;
  bool is_dominant = false;
};

std::vector<AssignmentRow> assignment_rows(const std::string& cam_id, std::span<const ViewCluster> clusters);
void write_assignments(const std::string& path, std::span<const AssignmentRow> rows);
std::vector<AssignmentRow> read_assignments(const std::string& path);

/// `cam_id,stability,num_clusters,frames_total`
struct StabilityRow {
  std::string cam_id;
  double stability = 0.0;
  std::size_t num_clusters = 0;
  std::size_t frames_total = 0;
};

void write_stability(const std::string& path, std::span<const StabilityRow> rows);
std::vector<StabilityRow> read_stability(const std::string& path);

}  // namespace trafficview::viewgraph
