#pragma once
// Retrieval evaluation: ranked gallery lists, CMC, mAP, single/multi-query
// protocols, junk and same-identity/same-camera exclusion.

#include <string>
#include <vector>

#include "translearn/tensor.hpp"

namespace translearn {

enum class Protocol { SingleQuery, MultiQuery };

Protocol parse_protocol(const std::string& s);  // "sq" / "mq"
const char* to_string(Protocol p);

struct EvalItem {
  int person_id;
  int camera_id;
};

struct EvalReport {
  std::vector<double> cmc;          // cmc[k-1] = rank-k rate, length = gallery size
  double map_score = 0.0;           // mean of per_query_ap
  std::vector<double> per_query_ap; // evaluated queries only
  int skipped = 0;                  // queries with no reachable positive
  Protocol protocol = Protocol::SingleQuery;

  double rank_k(int k) const;  // 1-based, clamped to the CMC length
};

// Gallery indices by ascending Euclidean distance to the query descriptor;
// ties broken by ascending gallery index.
std::vector<int> rank_gallery(const Tensor& query_desc,
                              const Tensor& gallery_rows);

// Per query: gallery entries with the same person AND same camera are
// excluded, junk (person_id -1) is excluded, distractors (person_id 0) stay
// as negatives.  AP uses the discrete precision-at-each-positive form; CMC
// counts the first true match.  Queries with zero remaining positives are
// skipped and counted.  MultiQuery groups queries by (person, camera) and
// evaluates one mean descriptor per group.
EvalReport evaluate(const std::vector<EvalItem>& queries,
                    const Tensor& query_rows,
                    const std::vector<EvalItem>& gallery,
                    const Tensor& gallery_rows, Protocol protocol);

// Element-wise mean of a group of query descriptors ([N, D] -> [D]).
Tensor multi_query_descriptor(const Tensor& group_rows);

// Plain-text table (rank-1/5/10/20, mAP, evaluated/skipped counts) and a
// machine-readable key-value rendering.
std::string format_report(const EvalReport& report);
std::string format_report_kv(const EvalReport& report);

}  // namespace translearn
