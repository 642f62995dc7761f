#include "translearn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace translearn {

Protocol parse_protocol(const std::string& s) {
  if (s == "sq" || s == "SQ") return Protocol::SingleQuery;
  if (s == "mq" || s == "MQ") return Protocol::MultiQuery;
  throw std::invalid_argument("unknown protocol '" + s + "' (expected sq or mq)");
}

const char* to_string(Protocol p) {
  return p == Protocol::SingleQuery ? "sq" : "mq";
}

double EvalReport::rank_k(int k) const {
  if (cmc.empty()) return 0.0;
  const int idx = std::min<int>(k, static_cast<int>(cmc.size())) - 1;
  return cmc[std::max(0, idx)];
}

namespace {

double sq_dist(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<int> rank_rows(const double* q, const Tensor& gallery_rows) {
  const int N = gallery_rows.dim(0), D = gallery_rows.dim(1);
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i)
    order[static_cast<std::size_t>(i)] = {
        sq_dist(q, gallery_rows.data() + static_cast<std::size_t>(i) * D, D), i};
  std::sort(order.begin(), order.end());  // pair ordering breaks ties by index
  std::vector<int> idx(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) idx[static_cast<std::size_t>(i)] = order[i].second;
  return idx;
}

}  // namespace

std::vector<int> rank_gallery(const Tensor& query_desc,
                              const Tensor& gallery_rows) {
  if (gallery_rows.ndim() != 2)
    throw std::invalid_argument("rank_gallery: gallery must be [N, D]");
  const int D = gallery_rows.dim(1);
  if (query_desc.size() != D)
    throw std::invalid_argument("rank_gallery: descriptor dim mismatch (" +
                                std::to_string(query_desc.size()) + " vs " +
                                std::to_string(D) + ")");
  return rank_rows(query_desc.data(), gallery_rows);
}

Tensor multi_query_descriptor(const Tensor& group_rows) {
  if (group_rows.ndim() != 2 || group_rows.dim(0) == 0)
    throw std::invalid_argument("multi_query_descriptor: empty group");
  const int N = group_rows.dim(0), D = group_rows.dim(1);
  Tensor out({D});
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d)
      out[d] += group_rows.at2(i, d);
  out.scale_(1.0 / static_cast<double>(N));
  return out;
}

namespace {

// Evaluates one (possibly aggregated) query against the gallery.
// Returns false when the query has no reachable positive.
bool eval_one(const double* qdesc, int q_pid, int q_cam,
              const std::vector<EvalItem>& gallery, const Tensor& gallery_rows,
              double* ap_out, std::vector<char>* cmc_hits) {
  const int N = static_cast<int>(gallery.size());
  const int D = gallery_rows.dim(1);
  std::vector<std::pair<double, int>> order;
  order.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const EvalItem& g = gallery[static_cast<std::size_t>(i)];
    if (g.person_id == -1) continue;                          // junk
    if (g.person_id == q_pid && g.camera_id == q_cam) continue;  // same id+cam
    order.emplace_back(
        sq_dist(qdesc, gallery_rows.data() + static_cast<std::size_t>(i) * D, D),
        i);
  }
  std::sort(order.begin(), order.end());

  int positives_total = 0;
  for (const auto& [dist, i] : order)
    if (gallery[static_cast<std::size_t>(i)].person_id == q_pid)
      ++positives_total;
  if (positives_total == 0) return false;

  double ap = 0.0;
  int hits = 0;
  int first_hit_rank = -1;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const EvalItem& g = gallery[static_cast<std::size_t>(order[r].second)];
    if (g.person_id == q_pid) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      if (first_hit_rank < 0) first_hit_rank = static_cast<int>(r);
    }
  }
  ap /= static_cast<double>(positives_total);
  *ap_out = ap;
  cmc_hits->assign(static_cast<std::size_t>(N), 0);
  for (int k = first_hit_rank; k < N; ++k)
    (*cmc_hits)[static_cast<std::size_t>(k)] = 1;
  return true;
}

}  // namespace

EvalReport evaluate(const std::vector<EvalItem>& queries,
                    const Tensor& query_rows,
                    const std::vector<EvalItem>& gallery,
                    const Tensor& gallery_rows, Protocol protocol) {
  if (query_rows.ndim() != 2 || gallery_rows.ndim() != 2)
    throw std::invalid_argument("evaluate: descriptor tables must be [N, D]");
  if (static_cast<int>(queries.size()) != query_rows.dim(0))
    throw std::invalid_argument("evaluate: query descriptor count mismatch");
  if (static_cast<int>(gallery.size()) != gallery_rows.dim(0))
    throw std::invalid_argument("evaluate: gallery descriptor count mismatch");
  if (query_rows.dim(0) > 0 && gallery_rows.dim(0) > 0 &&
      query_rows.dim(1) != gallery_rows.dim(1))
    throw std::invalid_argument("evaluate: descriptor dim mismatch");
  for (const EvalItem& q : queries)
    if (q.person_id == 0 || q.person_id == -1)
      throw std::invalid_argument(
          "evaluate: query set contains junk/distractor entries");

  EvalReport report;
  report.protocol = protocol;
  const int N = static_cast<int>(gallery.size());
  const int D = query_rows.dim(0) > 0 ? query_rows.dim(1) : 0;
  std::vector<double> cmc_sum(static_cast<std::size_t>(N), 0.0);
  int evaluated = 0;

  auto consume = [&](const double* qdesc, int pid, int cam) {
    double ap = 0.0;
    std::vector<char> hits;
    if (!eval_one(qdesc, pid, cam, gallery, gallery_rows, &ap, &hits)) {
      ++report.skipped;
      return;
    }
    report.per_query_ap.push_back(ap);
    for (int k = 0; k < N; ++k) cmc_sum[static_cast<std::size_t>(k)] += hits[k];
    ++evaluated;
  };

  if (protocol == Protocol::SingleQuery) {
    for (std::size_t qi = 0; qi < queries.size(); ++qi)
      consume(query_rows.data() + qi * D, queries[qi].person_id,
              queries[qi].camera_id);
  } else {
    // Group query descriptors by (person, camera); one mean query per group.
    std::map<std::pair<int, int>, std::vector<int>> groups;
    for (std::size_t qi = 0; qi < queries.size(); ++qi)
      groups[{queries[qi].person_id, queries[qi].camera_id}].push_back(
          static_cast<int>(qi));
    for (const auto& [key, members] : groups) {
      Tensor group({static_cast<int>(members.size()), D});
      for (std::size_t mi = 0; mi < members.size(); ++mi)
        for (int d = 0; d < D; ++d)
          group.at2(static_cast<int>(mi), d) =
              query_rows.at2(members[mi], d);
      Tensor mean = multi_query_descriptor(group);
      consume(mean.data(), key.first, key.second);
    }
  }

  if (evaluated > 0) {
    report.cmc.resize(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k)
      report.cmc[static_cast<std::size_t>(k)] =
          cmc_sum[static_cast<std::size_t>(k)] / static_cast<double>(evaluated);
    double s = 0.0;
    for (double ap : report.per_query_ap) s += ap;
    report.map_score = s / static_cast<double>(evaluated);
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << "protocol       " << to_string(report.protocol) << "\n";
  os << "queries        " << report.per_query_ap.size() << "\n";
  os << "skipped        " << report.skipped << "\n";
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "rank-1         " << report.rank_k(1) << "\n";
  os << "rank-5         " << report.rank_k(5) << "\n";
  os << "rank-10        " << report.rank_k(10) << "\n";
  os << "rank-20        " << report.rank_k(20) << "\n";
  os << "mAP            " << report.map_score << "\n";
  return os.str();
}

std::string format_report_kv(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(10);
  os << "protocol=" << to_string(report.protocol) << "\n";
  os << "queries=" << report.per_query_ap.size() << "\n";
  os << "skipped=" << report.skipped << "\n";
  os << "rank1=" << report.rank_k(1) << "\n";
  os << "rank5=" << report.rank_k(5) << "\n";
  os << "rank10=" << report.rank_k(10) << "\n";
  os << "rank20=" << report.rank_k(20) << "\n";
  os << "map=" << report.map_score << "\n";
  return os.str();
}

}  // namespace translearn
