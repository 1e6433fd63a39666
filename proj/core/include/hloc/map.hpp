#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "hloc/net.hpp"
#include "hloc/signal_io.hpp"

namespace hloc::map {

struct MapEntry {
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
  double elevation = 0.0;
  Eigen::VectorXd embedding;
  std::int64_t source_step_id = 0;

  bool operator==(const MapEntry& rhs) const {
    return xy == rhs.xy && elevation == rhs.elevation &&
           embedding.size() == rhs.embedding.size() && embedding == rhs.embedding &&
           source_step_id == rhs.source_step_id;
  }
};

struct Match {
  const MapEntry* entry = nullptr;
  double distance = 0.0;  // 2D distance from the query
};

inline constexpr double kDefaultCellSize = 0.25;

// Uniform grid hash over entry xy. Queries search rings of cells outward from
// the query cell until no unvisited cell can hold a closer entry.
class GridIndex {
 public:
  GridIndex() = default;
  GridIndex(const std::vector<MapEntry>& entries, double cell_size);

  // Index of the entry nearest to `query`; ties go to the lowest
  // source_step_id. Requires a non-empty entry set.
  std::size_t nearest(const std::vector<MapEntry>& entries,
                      const Eigen::Vector2d& query) const;

  double cell_size() const { return cell_size_; }

 private:
  struct CellKey {
    std::int64_t ix, iy;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    std::size_t operator()(const CellKey& k) const;
  };

  CellKey cell_of(const Eigen::Vector2d& p) const;

  double cell_size_ = kDefaultCellSize;
  std::int64_t min_ix_ = 0, max_ix_ = -1, min_iy_ = 0, max_iy_ = -1;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

class SparseHapticMap {
 public:
  explicit SparseHapticMap(int embed_dim, std::vector<MapEntry> entries = {},
                           double cell_size = kDefaultCellSize);

  int embed_dim() const { return embed_dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<MapEntry>& entries() const { return entries_; }

  // Throws InvariantError on an empty map.
  Match nearest(const Eigen::Vector2d& query) const;

  bool operator==(const SparseHapticMap& rhs) const {
    return embed_dim_ == rhs.embed_dim_ && entries_ == rhs.entries_;
  }

 private:
  int embed_dim_;
  std::vector<MapEntry> entries_;
  GridIndex index_;
};

// One entry per event at its ground-truth foothold, embedded in infer mode.
// Embeddings are rounded to 32-bit float precision, the on-disk width.
SparseHapticMap build_map(const Trial& mapping_trial, const net::NetworkParams& params);

// .hmap binary format.
void save_map(const SparseHapticMap& map, const std::filesystem::path& path);
SparseHapticMap load_map(const std::filesystem::path& path);

// Byte size of the serialized form.
std::size_t serialized_size(std::size_t entries, int embed_dim);

}  // namespace hloc::map
