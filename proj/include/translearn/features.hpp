#pragma once
// Retrieval descriptors: pooled backbone features, optionally post-processed
// by part-based pooling (split the final feature map into P horizontal
// bands, pool each, concatenate).

#include <string>
#include <vector>

#include "translearn/datamodel.hpp"
#include "translearn/networks.hpp"
#include "translearn/tensor.hpp"

namespace translearn {

enum class PoolMode { Max, Avg };

PoolMode parse_pool_mode(const std::string& s);
const char* to_string(PoolMode m);

// [B, C, h, w] -> [B, P*C].  Bands are contiguous row ranges; when h is not
// divisible by P the first (h mod P) bands receive one extra row.  P = 1 with
// Avg reproduces global average pooling bit-exactly.
Tensor lmp(const Tensor& fmap, int parts, PoolMode mode);

struct DescriptorTable {
  std::vector<std::string> keys;  // sample image paths, row order
  Tensor rows;                    // [N, dim]
  int parts = 1;
  PoolMode mode = PoolMode::Avg;
};

// Deterministic batched extraction in evaluation mode (no dropout, frozen
// statistics); samples are processed in their given order.  When normalize
// is set, each row is L2-normalized (defaults off: retrieval uses raw pooled
// features under the Euclidean distance).
DescriptorTable extract_descriptors(const Learner& C,
                                    const std::vector<ReIDSample>& samples,
                                    int parts, PoolMode mode, int batch_size,
                                    int image_h, int image_w,
                                    bool normalize = false);

// Binary export: header (count, dim, P, mode) then row-major float32 rows,
// plus a sidecar manifest mapping row index -> sample path.
void export_descriptors(const DescriptorTable& table,
                        const std::string& bin_path,
                        const std::string& manifest_path);

}  // namespace translearn
