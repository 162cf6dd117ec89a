#include "vxp/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "bytes.hpp"
#include "vxp/data_io.hpp"
#include "vxp/error.hpp"

namespace vxp {

RetrievalIndex RetrievalIndex::build(std::vector<IndexEntry> entries, Metric metric) {
  if (entries.empty()) throw Error(ErrorCode::Empty, "cannot index an empty descriptor set");
  const std::size_t dim = entries.front().descriptor.size();
  if (dim == 0) throw Error(ErrorCode::DimMismatch, "descriptors must have at least one dimension");
  for (const auto& e : entries)
    if (e.descriptor.size() != dim)
      throw Error(ErrorCode::DimMismatch, "entry " + std::to_string(e.id) + " has dim " +
                                              std::to_string(e.descriptor.size()) + ", expected " +
                                              std::to_string(dim));
  std::stable_sort(entries.begin(), entries.end(), [](const IndexEntry& a, const IndexEntry& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].id == entries[i - 1].id)
      throw Error(ErrorCode::DuplicateId, "id " + std::to_string(entries[i].id) + " appears twice");
  RetrievalIndex index;
  index.entries_ = std::move(entries);
  index.dim_ = dim;
  index.metric_ = metric;
  return index;
}

std::uint64_t RetrievalIndex::content_hash() const {
  const auto m = static_cast<std::uint8_t>(metric_);
  std::uint64_t h = fnv1a(&m, 1);
  for (const auto& e : entries_) {
    h = fnv1a(&e.id, sizeof(e.id), h);
    h = fnv1a(e.descriptor.data(), e.descriptor.size() * sizeof(double), h);
    h = fnv1a(e.position.data(), 3 * sizeof(double), h);
    const double ts = e.timestamp.value_or(std::nan(""));
    const std::uint8_t has = e.timestamp.has_value();
    h = fnv1a(&has, 1, h);
    if (has) h = fnv1a(&ts, sizeof(ts), h);
  }
  return h;
}

namespace {

std::vector<Neighbor> knn_over(const RetrievalIndex& index, const std::vector<double>& query, std::size_t k,
                               const std::vector<std::size_t>* candidates) {
  if (query.size() != index.dim())
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.size()) + " vs index dim " +
                                            std::to_string(index.dim()));
  const std::size_t n = candidates ? candidates->size() : index.size();
  if (k < 1 || k > n)
    throw Error(ErrorCode::InvalidK, "k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  std::vector<Neighbor> all;
  all.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t i = candidates ? (*candidates)[c] : c;
    const auto& e = index.entry(i);
    all.push_back({i, e.id, descriptor_distance(query.data(), e.descriptor.data(), query.size(), index.metric())});
  }
  const auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
  all.resize(k);
  return all;
}

bool within(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius) { return (a - b).norm() <= radius; }

}  // namespace

std::vector<Neighbor> query_knn(const RetrievalIndex& index, const std::vector<double>& query, std::size_t k) {
  return knn_over(index, query, k, nullptr);
}

std::vector<Neighbor> query_knn(const RetrievalIndex& index, const std::vector<double>& query, std::size_t k,
                                const std::vector<std::size_t>& candidates) {
  for (std::size_t c : candidates)
    if (c >= index.size()) throw Error(ErrorCode::InvalidK, "candidate " + std::to_string(c) + " outside the index");
  return knn_over(index, query, k, &candidates);
}

void EvalProtocol::validate() const {
  if (!(success_radius_m > 0.0)) throw Error(ErrorCode::InvalidConfig, "success radius must be > 0");
  if (!(revisit_min_gap_s >= 0.0)) throw Error(ErrorCode::InvalidConfig, "revisit gap must be >= 0");
  if (!(sampling_interval_m > 0.0) || !(sampling_offset_m >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "sampling interval must be > 0 and offset >= 0");
}

RecallResult recall_at_k(const std::vector<Query>& queries, const RetrievalIndex& index,
                         const EvalProtocol& protocol, std::size_t k) {
  protocol.validate();
  if (k < 1 || k > index.size())
    throw Error(ErrorCode::InvalidK, "k = " + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  RecallResult r;
  r.k = k;
  std::size_t hits = 0;
  for (const auto& q : queries) {
    const bool has_match = std::any_of(index.entries().begin(), index.entries().end(), [&](const IndexEntry& e) {
      return within(q.position, e.position, protocol.success_radius_m);
    });
    if (!has_match) {
      ++r.excluded_queries;
      continue;
    }
    ++r.valid_queries;
    const auto top = query_knn(index, q.descriptor, k);
    hits += std::any_of(top.begin(), top.end(), [&](const Neighbor& nb) {
      return within(q.position, index.entry(nb.index).position, protocol.success_radius_m);
    });
  }
  if (r.valid_queries == 0)
    throw Error(ErrorCode::NoValidQueries, "none of " + std::to_string(queries.size()) +
                                               " queries has a database entry within " +
                                               std::to_string(protocol.success_radius_m) + " m");
  r.recall = static_cast<double>(hits) / static_cast<double>(r.valid_queries);
  return r;
}

std::size_t one_percent_k(std::size_t n) { return std::max<std::size_t>(1, (n + 99) / 100); }

RecallResult recall_at_one_percent(const std::vector<Query>& queries, const RetrievalIndex& index,
                                   const EvalProtocol& protocol) {
  return recall_at_k(queries, index, protocol, one_percent_k(index.size()));
}

std::vector<double> recall_curve(const std::vector<Query>& queries, const RetrievalIndex& index,
                                 const EvalProtocol& protocol, std::size_t max_k) {
  std::vector<double> curve;
  for (std::size_t k = 1; k <= max_k; ++k)
    curve.push_back(recall_at_k(queries, index, protocol, std::min(k, index.size())).recall);
  return curve;
}

std::vector<std::size_t> kitti_revisit_filter(double t0, const std::vector<std::optional<double>>& candidate_times,
                                              double min_gap_s) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < candidate_times.size(); ++i) {
    if (!candidate_times[i])
      throw Error(ErrorCode::MissingTimestamps, "candidate " + std::to_string(i) + " has no timestamp");
    const double t = *candidate_times[i];
    if (t < t0 && t0 - t > min_gap_s) kept.push_back(i);
  }
  return kept;
}

std::vector<std::size_t> kitti_sample_queries(const std::vector<Eigen::Vector3d>& trajectory, double interval_m,
                                              double offset_m) {
  if (!(interval_m > 0.0) || !(offset_m >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "sampling interval must be > 0 and offset >= 0");
  std::vector<std::size_t> out;
  double travelled = 0.0;
  double next = offset_m;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (i > 0) travelled += (trajectory[i] - trajectory[i - 1]).norm();
    if (travelled >= next) {
      out.push_back(i);
      while (next <= travelled) next += interval_m;
    }
  }
  return out;
}

RecallResult kitti_recall_at_k(const std::vector<Query>& queries, const RetrievalIndex& index,
                               const EvalProtocol& protocol, std::size_t k) {
  protocol.validate();
  if (k < 1) throw Error(ErrorCode::InvalidK, "k must be >= 1");
  std::vector<std::optional<double>> times;
  for (const auto& e : index.entries()) times.push_back(e.timestamp);
  RecallResult r;
  r.k = k;
  std::size_t hits = 0;
  for (const auto& q : queries) {
    if (!q.timestamp) throw Error(ErrorCode::MissingTimestamps, "query " + std::to_string(q.id) + " has no timestamp");
    const auto candidates = kitti_revisit_filter(*q.timestamp, times, protocol.revisit_min_gap_s);
    const bool has_match = std::any_of(candidates.begin(), candidates.end(), [&](std::size_t c) {
      return within(q.position, index.entry(c).position, protocol.success_radius_m);
    });
    if (!has_match) {
      ++r.excluded_queries;
      continue;
    }
    ++r.valid_queries;
    const auto top = query_knn(index, q.descriptor, std::min(k, candidates.size()), candidates);
    hits += std::any_of(top.begin(), top.end(), [&](const Neighbor& nb) {
      return within(q.position, index.entry(nb.index).position, protocol.success_radius_m);
    });
  }
  if (r.valid_queries == 0) throw Error(ErrorCode::NoValidQueries, "no query has an earlier in-radius revisit");
  r.recall = static_cast<double>(hits) / static_cast<double>(r.valid_queries);
  return r;
}

PairwiseRecall oxford_pairwise_eval(const std::vector<OxfordRun>& runs,
                                    const std::function<bool(const Eigen::Vector3d&)>& in_test_region,
                                    const EvalProtocol& protocol, const std::vector<std::size_t>& ks) {
  if (runs.size() < 2)
    throw Error(ErrorCode::InsufficientRuns, "pairwise evaluation needs >= 2 runs, got " + std::to_string(runs.size()));
  PairwiseRecall out;
  out.ks = ks;
  out.recall_at_k.assign(ks.size(), 0.0);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::vector<Query> queries;
    for (const auto& q : runs[i].queries)
      if (in_test_region(q.position)) queries.push_back(q);
    for (std::size_t j = 0; j < runs.size(); ++j) {
      if (i == j) continue;
      const auto& db = runs[j].database;
      std::vector<double> row;
      try {
        for (std::size_t k : ks) row.push_back(recall_at_k(queries, db, protocol, std::min(k, db.size())).recall);
        row.push_back(recall_at_one_percent(queries, db, protocol).recall);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoValidQueries) throw;
        ++out.skipped_pairs;
        continue;
      }
      for (std::size_t k = 0; k < ks.size(); ++k) out.recall_at_k[k] += row[k];
      out.recall_at_one_percent += row.back();
      ++out.pairs;
    }
  }
  if (out.pairs == 0) throw Error(ErrorCode::NoValidQueries, "no run pair has a valid query");
  for (auto& r : out.recall_at_k) r /= static_cast<double>(out.pairs);
  out.recall_at_one_percent /= static_cast<double>(out.pairs);
  return out;
}

std::string format_recall_csv(const std::vector<RecallRow>& rows) {
  std::string out = "protocol,k,recall\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.recall);
    out += r.protocol + ',' + r.k + ',' + buf + '\n';
  }
  return out;
}

std::string format_curve_csv(const std::vector<double>& curve) {
  std::string out = "k,recall\n";
  char buf[64];
  for (std::size_t k = 0; k < curve.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", k + 1, curve[k]);
    out += buf;
  }
  return out;
}

std::vector<std::pair<double, double>> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "k,recall" && line != "k,recall\r"))
    throw Error(ErrorCode::HeaderMismatch, "curve CSV must start with 'k,recall'");
  std::vector<std::pair<double, double>> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    double k = 0, r = 0;
    const char* end = line.data() + line.size();
    if (comma == std::string::npos ||
        std::from_chars(line.data(), line.data() + comma, k).ptr != line.data() + comma ||
        std::from_chars(line.data() + comma + 1, end, r).ptr != end)
      throw Error(ErrorCode::ParseError, "curve CSV line " + std::to_string(line_no) + ": expected 'k,recall'");
    out.emplace_back(k, r);
  }
  return out;
}

std::vector<std::uint8_t> encode_index(const RetrievalIndex& index) {
  detail::ByteWriter w;
  w.raw("VXPI");
  w.u16(kIndexFileVersion);
  w.u8(static_cast<std::uint8_t>(index.metric()));
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u32(static_cast<std::uint32_t>(index.size()));
  for (const auto& e : index.entries()) {
    w.u64(e.id);
    for (int a = 0; a < 3; ++a) w.f64(e.position[a]);
    w.u8(e.timestamp.has_value());
    w.f64(e.timestamp.value_or(0.0));
    for (double v : e.descriptor) w.f64(v);
  }
  return w.take();
}

RetrievalIndex decode_index(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "VXPI");
  if (r.remaining() < 4) throw Error(ErrorCode::TruncatedFile, "VXPI: shorter than its magic");
  if (r.raw(4) != "VXPI") throw Error(ErrorCode::BadMagic, "VXPI: expected 'VXPI'");
  const std::uint16_t version = r.u16();
  if (version != kIndexFileVersion) throw Error(ErrorCode::VersionUnsupported, "VXPI version " + std::to_string(version));
  const std::uint8_t metric = r.u8();
  if (metric > 1) throw Error(ErrorCode::MalformedFile, "VXPI: unknown metric " + std::to_string(metric));
  const std::uint32_t dim = r.u32();
  const std::uint32_t count = r.u32();
  std::vector<IndexEntry> entries(count);
  for (auto& e : entries) {
    e.id = r.u64();
    for (int a = 0; a < 3; ++a) e.position[a] = r.f64();
    const bool has_ts = r.u8() != 0;
    const double ts = r.f64();
    if (has_ts) e.timestamp = ts;
    e.descriptor.resize(dim);
    for (auto& v : e.descriptor) v = r.f64();
  }
  if (r.remaining() != 0) throw Error(ErrorCode::MalformedFile, "VXPI: trailing bytes after the entries");
  return RetrievalIndex::build(std::move(entries), static_cast<Metric>(metric));
}

}  // namespace vxp
