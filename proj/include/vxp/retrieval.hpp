#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vxp/constants.hpp"
#include "vxp/losses.hpp"

namespace vxp {

struct IndexEntry {
  std::uint64_t id = 0;
  std::vector<double> descriptor;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::optional<double> timestamp;
};

/// Immutable database for exact nearest-neighbour search. Entries are kept
/// sorted by id, so results do not depend on insertion order.
class RetrievalIndex {
 public:
  /// Throws Empty, DimMismatch, DuplicateId.
  static RetrievalIndex build(std::vector<IndexEntry> entries, Metric metric = Metric::L2);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  Metric metric() const noexcept { return metric_; }
  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }
  /// FNV-1a over every stored field.
  std::uint64_t content_hash() const;

 private:
  RetrievalIndex() = default;
  std::vector<IndexEntry> entries_;
  std::size_t dim_ = 0;
  Metric metric_ = Metric::L2;
};

struct Neighbor {
  std::size_t index = 0;  // position in the index
  std::uint64_t id = 0;
  double distance = 0.0;
};

/// The k nearest entries in ascending distance, ties by lowest id.
/// Throws InvalidK (k outside [1, N]) and DimMismatch.
std::vector<Neighbor> query_knn(const RetrievalIndex& index, const std::vector<double>& query, std::size_t k);
/// Same, restricted to the entries listed in `candidates` (k <= candidates).
std::vector<Neighbor> query_knn(const RetrievalIndex& index, const std::vector<double>& query, std::size_t k,
                                const std::vector<std::size_t>& candidates);

struct Query {
  std::uint64_t id = 0;
  std::vector<double> descriptor;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::optional<double> timestamp;
};

struct EvalProtocol {
  double success_radius_m = constants::kRetrievalRadiusM;
  double revisit_min_gap_s = constants::kRevisitMinGapS;
  double sampling_interval_m = constants::kKittiSamplingIntervalM;
  double sampling_offset_m = constants::kKittiSamplingOffsetM;

  void validate() const;
};

struct RecallResult {
  double recall = 0.0;
  std::size_t k = 0;
  std::size_t valid_queries = 0;
  std::size_t excluded_queries = 0;  // no database entry within the radius
};

/// Fraction of queries whose top k holds an entry within the success radius.
/// Queries without any in-radius entry are excluded and counted. Throws
/// NoValidQueries and InvalidK.
RecallResult recall_at_k(const std::vector<Query>& queries, const RetrievalIndex& index,
                         const EvalProtocol& protocol, std::size_t k);

/// max(1, ceil(n / 100)).
std::size_t one_percent_k(std::size_t n);
RecallResult recall_at_one_percent(const std::vector<Query>& queries, const RetrievalIndex& index,
                                   const EvalProtocol& protocol);

/// Recall for k = 1..max_k; k beyond the index size is clamped to it.
std::vector<double> recall_curve(const std::vector<Query>& queries, const RetrievalIndex& index,
                                 const EvalProtocol& protocol, std::size_t max_k = constants::kRecallCurveMaxK);

// ---- KITTI revisit protocol ----------------------------------------------------

/// Indices i with t_i < t0 and t0 - t_i > min_gap. Throws MissingTimestamps.
std::vector<std::size_t> kitti_revisit_filter(double t0, const std::vector<std::optional<double>>& candidate_times,
                                              double min_gap_s = constants::kRevisitMinGapS);

/// Samples a trajectory every `interval` metres of travelled distance, the
/// first at `offset` metres. Returns indices into `trajectory`.
std::vector<std::size_t> kitti_sample_queries(const std::vector<Eigen::Vector3d>& trajectory,
                                              double interval_m = constants::kKittiSamplingIntervalM,
                                              double offset_m = constants::kKittiSamplingOffsetM);

/// Each query searches only the database entries that pass the revisit
/// filter; queries with no filtered entry inside the radius are excluded.
/// `k` is clamped to the filtered candidate count.
RecallResult kitti_recall_at_k(const std::vector<Query>& queries, const RetrievalIndex& index,
                               const EvalProtocol& protocol, std::size_t k);

// ---- Oxford pairwise protocol --------------------------------------------------

struct OxfordRun {
  std::string name;
  std::vector<Query> queries;  // all samples of the run; filtered by region at evaluation
  RetrievalIndex database;
};

struct PairwiseRecall {
  std::vector<std::size_t> ks;
  std::vector<double> recall_at_k;  // unweighted mean over evaluated pairs, per k
  double recall_at_one_percent = 0.0;
  std::size_t pairs = 0;          // ordered pairs evaluated
  std::size_t skipped_pairs = 0;  // pairs without any valid query
};

/// Every ordered pair (i, j), i != j: queries of run i inside the test
/// region against the full database of run j. Throws InsufficientRuns.
PairwiseRecall oxford_pairwise_eval(const std::vector<OxfordRun>& runs,
                                    const std::function<bool(const Eigen::Vector3d&)>& in_test_region,
                                    const EvalProtocol& protocol, const std::vector<std::size_t>& ks);

// ---- result files --------------------------------------------------------------

struct RecallRow {
  std::string protocol;  // plain | oxford | kitti | ...
  std::string k;         // "1", "5", "1pct"
  double recall = 0.0;
};

/// `protocol,k,recall`.
std::string format_recall_csv(const std::vector<RecallRow>& rows);
/// `k,recall`, k starting at 1.
std::string format_curve_csv(const std::vector<double>& curve);
/// Parses the two-column curve CSV. Throws HeaderMismatch / ParseError.
std::vector<std::pair<double, double>> parse_curve_csv(const std::string& text);

// ---- VXPI index files ----------------------------------------------------------

inline constexpr std::uint16_t kIndexFileVersion = 1;

std::vector<std::uint8_t> encode_index(const RetrievalIndex& index);
RetrievalIndex decode_index(const std::vector<std::uint8_t>& bytes);

}  // namespace vxp
