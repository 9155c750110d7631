#include "vip/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace vip::io {

static_assert(std::endian::native == std::endian::little,
              "file readers/writers assume a little-endian host");

namespace {

constexpr char kCkptMagic[8] = {'V', 'I', 'P', 'C', 'K', 'P', 'T', '1'};
constexpr char kDataMagic[8] = {'V', 'I', 'P', 'D', 'A', 'T', 'A', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) {
    throw Error(std::string("truncated file while reading ") + what);
  }
  return v;
}

void write_f32(std::ostream& os, const float* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

void read_f32(std::istream& is, float* p, std::size_t n, const char* what) {
  if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4))) {
    throw Error(std::string("truncated file while reading ") + what);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path, const char magic[8], const char* kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "' for reading");
  char got[8];
  if (!is.read(got, 8) || std::memcmp(got, magic, 8) != 0) {
    throw Error("'" + path + "' is not a " + kind + " file (bad magic)");
  }
  return is;
}

}  // namespace

const TensorEntry* CheckpointFile::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

i64 checkpoint_size_bytes(const CheckpointFile& f) {
  i64 n = 8 + 4;
  for (const auto& e : f.entries) {
    n += 4 + static_cast<i64>(e.name.size()) + 4 + 4 * static_cast<i64>(e.shape.size()) +
         4 * static_cast<i64>(e.data.size());
  }
  return n;
}

void write_checkpoint(const std::string& path, const CheckpointFile& f) {
  auto os = open_out(path);
  os.write(kCkptMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(f.entries.size()));
  for (const auto& e : f.entries) {
    if (numel_of(e.shape) != static_cast<i64>(e.data.size())) {
      throw Error("checkpoint entry '" + e.name + "': shape " + shape_str(e.shape) +
                  " disagrees with " + std::to_string(e.data.size()) + " values");
    }
    write_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(os, static_cast<std::uint32_t>(e.shape.size()));
    for (i64 ext : e.shape) write_u32(os, static_cast<std::uint32_t>(ext));
    write_f32(os, e.data.data(), e.data.size());
  }
  if (!os) throw Error("write to '" + path + "' failed");
}

CheckpointFile read_checkpoint(const std::string& path) {
  auto is = open_in(path, kCkptMagic, "VIPCKPT1 checkpoint");
  CheckpointFile f;
  const std::uint32_t count = read_u32(is, "entry count");
  f.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    const std::uint32_t name_len = read_u32(is, "name length");
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) throw Error("truncated file while reading name");
    const std::uint32_t rank = read_u32(is, "rank");
    e.shape.resize(rank);
    i64 numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape[d] = read_u32(is, "extent");
      numel *= e.shape[d];
    }
    e.data.resize(static_cast<std::size_t>(numel));
    read_f32(is, e.data.data(), e.data.size(), e.name.c_str());
    f.entries.push_back(std::move(e));
  }
  return f;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  if (static_cast<i64>(ds.pixels.size()) != ds.count() * ds.sample_size()) {
    throw Error("dataset: pixel buffer size disagrees with count*side*side*channels");
  }
  auto os = open_out(path);
  os.write(kDataMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(ds.count()));
  write_u32(os, static_cast<std::uint32_t>(ds.side));
  write_u32(os, static_cast<std::uint32_t>(ds.channels));
  write_u32(os, static_cast<std::uint32_t>(ds.classes));
  for (i64 i = 0; i < ds.count(); ++i) {
    write_u32(os, ds.labels[static_cast<std::size_t>(i)]);
    write_f32(os, ds.sample(i), static_cast<std::size_t>(ds.sample_size()));
  }
  if (!os) throw Error("write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  auto is = open_in(path, kDataMagic, "VIPDATA1 dataset");
  Dataset ds;
  const std::uint32_t count = read_u32(is, "sample count");
  ds.side = read_u32(is, "side");
  ds.channels = read_u32(is, "channels");
  ds.classes = read_u32(is, "classes");
  if (ds.side <= 0 || ds.channels <= 0 || ds.classes <= 0) {
    throw Error("dataset '" + path + "': degenerate header");
  }
  ds.labels.resize(count);
  ds.pixels.resize(static_cast<std::size_t>(count) * static_cast<std::size_t>(ds.sample_size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    ds.labels[i] = read_u32(is, "label");
    if (ds.labels[i] >= static_cast<std::uint32_t>(ds.classes)) {
      throw Error("dataset '" + path + "': sample " + std::to_string(i) + " has label " +
                  std::to_string(ds.labels[i]) + " >= classes " + std::to_string(ds.classes));
    }
    read_f32(is, ds.pixels.data() + static_cast<std::size_t>(i) * ds.sample_size(),
             static_cast<std::size_t>(ds.sample_size()), "pixels");
  }
  return ds;
}

std::string metric_to_json_line(const MetricRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"top1", r.top1}};
  return j.dump();
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  if (!path_.empty()) {
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw Error("cannot open metrics file '" + path_ + "' for writing");
  }
}

void MetricsWriter::append(const MetricRecord& r) {
  history_.push_back(r);
  if (!path_.empty()) {
    std::ofstream os(path_, std::ios::app);
    if (!os) throw Error("cannot append to metrics file '" + path_ + "'");
    os << metric_to_json_line(r) << '\n';
  }
}

}  // namespace vip::io
