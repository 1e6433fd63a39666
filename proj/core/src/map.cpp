#include "hloc/map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "hloc/error.hpp"
#include "hloc/rng.hpp"

// .hmap layout (little-endian):
//   8 bytes magic "HLHMAP\0\0", u32 version, i32 embed_dim, u64 entry count,
//   then per entry: i64 source_step_id, f64 x, f64 y, f64 elevation,
//   embed_dim x f32 embedding.

namespace hloc::map {
namespace {

constexpr std::array<char, 8> kMagic = {'H', 'L', 'H', 'M', 'A', 'P', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 8;
constexpr std::size_t kEntryFixedBytes = 8 + 3 * 8;

// Returns true when (d2, id) ranks strictly before (best_d2, best_id).
bool better(double d2, std::int64_t id, double best_d2, std::int64_t best_id) {
  return d2 < best_d2 || (d2 == best_d2 && id < best_id);
}

}  // namespace

std::size_t GridIndex::CellHash::operator()(const CellKey& k) const {
  return static_cast<std::size_t>(
      mix64(static_cast<std::uint64_t>(k.ix) * 0x9e3779b97f4a7c15ULL ^
            static_cast<std::uint64_t>(k.iy)));
}

GridIndex::CellKey GridIndex::cell_of(const Eigen::Vector2d& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_size_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_size_))};
}

GridIndex::GridIndex(const std::vector<MapEntry>& entries, double cell_size)
    : cell_size_(cell_size) {
  if (!(cell_size > 0.0)) throw InvariantError("grid cell size must be > 0");
  min_ix_ = min_iy_ = std::numeric_limits<std::int64_t>::max();
  max_ix_ = max_iy_ = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const CellKey key = cell_of(entries[i].xy);
    cells_[key].push_back(i);
    min_ix_ = std::min(min_ix_, key.ix);
    max_ix_ = std::max(max_ix_, key.ix);
    min_iy_ = std::min(min_iy_, key.iy);
    max_iy_ = std::max(max_iy_, key.iy);
  }
}

std::size_t GridIndex::nearest(const std::vector<MapEntry>& entries,
                               const Eigen::Vector2d& query) const {
  if (cells_.empty()) throw InvariantError("nearest: map is empty");
  const CellKey q = cell_of(query);
  // Past this ring every cell lies outside the occupied bounding box.
  const std::int64_t max_ring =
      std::max({q.ix - min_ix_, max_ix_ - q.ix, q.iy - min_iy_, max_iy_ - q.iy,
                std::int64_t{0}});

  std::size_t best = entries.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  std::int64_t best_id = std::numeric_limits<std::int64_t>::max();
  auto scan = [&](std::int64_t ix, std::int64_t iy) {
    const auto it = cells_.find({ix, iy});
    if (it == cells_.end()) return;
    for (std::size_t i : it->second) {
      const double d2 = (entries[i].xy - query).squaredNorm();
      if (better(d2, entries[i].source_step_id, best_d2, best_id)) {
        best = i;
        best_d2 = d2;
        best_id = entries[i].source_step_id;
      }
    }
  };

  for (std::int64_t r = 0; r <= max_ring; ++r) {
    if (r == 0) {
      scan(q.ix, q.iy);
    } else {
      for (std::int64_t dx = -r; dx <= r; ++dx) {
        scan(q.ix + dx, q.iy - r);
        scan(q.ix + dx, q.iy + r);
      }
      for (std::int64_t dy = -r + 1; dy <= r - 1; ++dy) {
        scan(q.ix - r, q.iy + dy);
        scan(q.ix + r, q.iy + dy);
      }
    }
    // Entries outside rings 0..r are farther than r * cell_size; the slack
    // absorbs rounding in the cell assignment.
    const double bound = static_cast<double>(r) * cell_size_ - 1e-9;
    if (best < entries.size() && bound > 0.0 && best_d2 < bound * bound) break;
  }
  return best;
}

SparseHapticMap::SparseHapticMap(int embed_dim, std::vector<MapEntry> entries,
                                 double cell_size)
    : embed_dim_(embed_dim), entries_(std::move(entries)) {
  if (embed_dim < 1) throw InvariantError("map embed_dim must be >= 1");
  for (const MapEntry& e : entries_) {
    if (e.embedding.size() != embed_dim) {
      throw InvariantError("map entry from step_id " + std::to_string(e.source_step_id) +
                           " has embedding length " + std::to_string(e.embedding.size()) +
                           ", map declares " + std::to_string(embed_dim));
    }
  }
  index_ = GridIndex(entries_, cell_size);
}

Match SparseHapticMap::nearest(const Eigen::Vector2d& query) const {
  if (entries_.empty()) throw InvariantError("nearest: map is empty");
  const MapEntry& e = entries_[index_.nearest(entries_, query)];
  return {&e, (e.xy - query).norm()};
}

SparseHapticMap build_map(const Trial& mapping_trial, const net::NetworkParams& params) {
  std::vector<MapEntry> entries;
  entries.reserve(mapping_trial.events.size());
  for (const StepEvent& e : mapping_trial.events) {
    if (!e.foothold_world_truth) {
      throw InvariantError("build_map: step_id " + std::to_string(e.step_id) +
                           " has no foothold_world_truth");
    }
    MapEntry entry;
    entry.xy = e.foothold_world_truth->head<2>();
    entry.elevation = e.foothold_world_truth->z();
    entry.embedding = net::embed(params, e.signal).cast<float>().cast<double>();
    entry.source_step_id = e.step_id;
    entries.push_back(std::move(entry));
  }
  return SparseHapticMap(params.config.embed_dim, std::move(entries));
}

std::size_t serialized_size(std::size_t entries, int embed_dim) {
  return kHeaderBytes + entries * (kEntryFixedBytes + 4 * static_cast<std::size_t>(embed_dim));
}

void save_map(const SparseHapticMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  binio::write_le<std::uint32_t>(out, kVersion);
  binio::write_le<std::int32_t>(out, map.embed_dim());
  binio::write_le<std::uint64_t>(out, map.size());
  for (const MapEntry& e : map.entries()) {
    binio::write_le<std::int64_t>(out, e.source_step_id);
    binio::write_le<double>(out, e.xy.x());
    binio::write_le<double>(out, e.xy.y());
    binio::write_le<double>(out, e.elevation);
    for (Eigen::Index i = 0; i < e.embedding.size(); ++i) {
      binio::write_le<float>(out, static_cast<float>(e.embedding[i]));
    }
  }
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

SparseHapticMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open map file " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw ParseError(path.string() + " is not a .hmap file");
  }
  const auto version = binio::read_le<std::uint32_t>(in, "version");
  if (version != kVersion) throw ParseError("unsupported .hmap version " + std::to_string(version));
  const auto dim = binio::read_le<std::int32_t>(in, "embed_dim");
  if (dim < 1) throw ParseError("invalid embed_dim " + std::to_string(dim));
  const auto count = binio::read_le<std::uint64_t>(in, "entry count");

  std::vector<MapEntry> entries;
  for (std::uint64_t k = 0; k < count; ++k) {
    MapEntry e;
    e.source_step_id = binio::read_le<std::int64_t>(in, "entry");
    e.xy.x() = binio::read_le<double>(in, "entry");
    e.xy.y() = binio::read_le<double>(in, "entry");
    e.elevation = binio::read_le<double>(in, "entry");
    e.embedding.resize(dim);
    for (int i = 0; i < dim; ++i) e.embedding[i] = binio::read_le<float>(in, "embedding");
    entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(path.string() + ": trailing bytes after last entry");
  }
  return SparseHapticMap(dim, std::move(entries));
}

}  // namespace hloc::map
