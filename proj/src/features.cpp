#include "translearn/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace translearn {

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "max" || s == "Max" || s == "MAX") return PoolMode::Max;
  if (s == "avg" || s == "Avg" || s == "AVG") return PoolMode::Avg;
  throw std::invalid_argument("unknown pooling mode '" + s +
                              "' (expected max or avg)");
}

const char* to_string(PoolMode m) { return m == PoolMode::Max ? "max" : "avg"; }

Tensor lmp(const Tensor& fmap, int parts, PoolMode mode) {
  if (fmap.ndim() != 4)
    throw std::invalid_argument("lmp: expected [B, C, h, w] feature map");
  const int B = fmap.dim(0), C = fmap.dim(1), h = fmap.dim(2), w = fmap.dim(3);
  if (parts < 1 || parts > h)
    throw std::invalid_argument("lmp: part count " + std::to_string(parts) +
                                " outside [1, " + std::to_string(h) + "]");
  const int base = h / parts, extra = h % parts;
  Tensor out({B, parts * C});
  for (int b = 0; b < B; ++b) {
    int row = 0;
    for (int p = 0; p < parts; ++p) {
      const int rows = base + (p < extra ? 1 : 0);
      const int r0 = row, r1 = row + rows;
      row = r1;
      for (int c = 0; c < C; ++c) {
        const double* fm =
            fmap.data() + ((static_cast<std::size_t>(b) * C + c) * h) * w;
        double v;
        if (mode == PoolMode::Max) {
          v = fm[static_cast<std::size_t>(r0) * w];
          for (int y = r0; y < r1; ++y)
            for (int x = 0; x < w; ++x)
              v = std::max(v, fm[static_cast<std::size_t>(y) * w + x]);
        } else {
          double s = 0.0;
          for (int y = r0; y < r1; ++y)
            for (int x = 0; x < w; ++x) s += fm[static_cast<std::size_t>(y) * w + x];
          v = s / static_cast<double>(rows * w);
        }
        out.at2(b, p * C + c) = v;
      }
    }
  }
  return out;
}

DescriptorTable extract_descriptors(const Learner& C,
                                    const std::vector<ReIDSample>& samples,
                                    int parts, PoolMode mode, int batch_size,
                                    int image_h, int image_w, bool normalize) {
  if (batch_size < 1)
    throw std::invalid_argument("extract_descriptors: batch_size must be >= 1");
  DescriptorTable table;
  table.parts = parts;
  table.mode = mode;
  const int N = static_cast<int>(samples.size());
  table.keys.reserve(static_cast<std::size_t>(N));

  int dim = -1;
  std::int64_t row_cursor = 0;
  for (int start = 0; start < N; start += batch_size) {
    const int count = std::min(batch_size, N - start);
    std::vector<Tensor> imgs;
    imgs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const ReIDSample& s = samples[static_cast<std::size_t>(start + i)];
      imgs.push_back(
          normalize_image(resize_bilinear(load_image(s.image_path), image_h, image_w)));
      table.keys.push_back(s.image_path);
    }
    Tensor batch = stack_images(imgs);
    Tensor fmap = C.backbone.forward(batch, nullptr, {});
    Tensor desc = lmp(fmap, parts, mode);
    if (dim < 0) {
      dim = desc.dim(1);
      table.rows = Tensor({N, dim});
    }
    for (int i = 0; i < count; ++i)
      for (int d = 0; d < dim; ++d)
        table.rows[(row_cursor + i) * dim + d] = desc.at2(i, d);
    row_cursor += count;
  }
  if (N == 0) table.rows = Tensor({0, 0});

  if (normalize && N > 0) {
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double v = table.rows[static_cast<std::int64_t>(i) * dim + d];
        s += v * v;
      }
      const double inv = 1.0 / std::max(std::sqrt(s), 1e-12);
      for (int d = 0; d < dim; ++d)
        table.rows[static_cast<std::int64_t>(i) * dim + d] *= inv;
    }
  }
  return table;
}

void export_descriptors(const DescriptorTable& table,
                        const std::string& bin_path,
                        const std::string& manifest_path) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write descriptors: " + bin_path);
  const std::uint32_t count = table.rows.ndim() == 2 ? table.rows.dim(0) : 0;
  const std::uint32_t dim = table.rows.ndim() == 2 ? table.rows.dim(1) : 0;
  const std::uint32_t parts = static_cast<std::uint32_t>(table.parts);
  const std::uint32_t mode = table.mode == PoolMode::Max ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&count), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&parts), 4);
  out.write(reinterpret_cast<const char*>(&mode), 4);
  std::vector<float> row(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t d = 0; d < dim; ++d)
      row[d] = static_cast<float>(
          table.rows[static_cast<std::int64_t>(i) * dim + d]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(float) * dim));
  }
  if (!out) throw std::runtime_error("write failure: " + bin_path);

  std::ofstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot write manifest: " + manifest_path);
  for (std::uint32_t i = 0; i < count; ++i)
    mf << i << '\t' << table.keys[i] << '\n';
}

}  // namespace translearn
