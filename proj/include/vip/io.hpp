#pragma once

// Binary file formats and metrics emission.
//
// Checkpoint ("VIPCKPT1"): magic, u32 entry count, then per entry
//   u32 name length, name bytes, u32 rank, rank x u32 extents, f32 data.
// Dataset ("VIPDATA1"): magic, u32 count, u32 side, u32 channels,
//   u32 classes, then per sample u32 label + side*side*channels f32 pixels.
// All integers and floats little-endian.

#include <cstdint>
#include <string>
#include <vector>

#include "vip/tensor.hpp"

namespace vip::io {

struct TensorEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct CheckpointFile {
  std::vector<TensorEntry> entries;

  const TensorEntry* find(const std::string& name) const;
};

// Exact on-disk size of a checkpoint with these entries.
i64 checkpoint_size_bytes(const CheckpointFile& f);

void write_checkpoint(const std::string& path, const CheckpointFile& f);
CheckpointFile read_checkpoint(const std::string& path);

struct Dataset {
  i64 side = 0;
  i64 channels = 0;
  i64 classes = 0;
  std::vector<std::uint32_t> labels;
  std::vector<float> pixels;  // count * side * side * channels, row-major HWC

  i64 count() const { return static_cast<i64>(labels.size()); }
  i64 sample_size() const { return side * side * channels; }
  const float* sample(i64 i) const { return pixels.data() + i * sample_size(); }
};

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

struct MetricRecord {
  i64 epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double top1 = 0.0;
};

std::string metric_to_json_line(const MetricRecord& r);

// Appending line-delimited JSON writer; flushes after every record.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path);  // empty path = memory only
  void append(const MetricRecord& r);
  const std::vector<MetricRecord>& history() const { return history_; }

 private:
  std::string path_;
  std::vector<MetricRecord> history_;
};

}  // namespace vip::io
