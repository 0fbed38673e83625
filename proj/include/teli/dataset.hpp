#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "teli/tensor.hpp"

namespace teli {

struct DatasetEntry {
  std::filesystem::path path;
  int label = 0;  // covid = 1, non-covid = 0
};

struct DatasetIndex {
  std::string split;
  std::vector<DatasetEntry> entries;  // sorted by path
  std::int64_t covid_count = 0;
  std::int64_t noncovid_count = 0;
};

struct SeriesIndex {
  std::string series_id;
  std::vector<std::filesystem::path> slice_paths;  // sorted
};

// Folder names matched case-insensitively; override for other spellings.
struct ScanConfig {
  std::string covid_dir = "covid";
  std::string noncovid_dir = "non-covid";
};

// Layout: <root>/<split>/{covid,non-covid}/**.{png,jpg,jpeg}
// Non-image files are skipped with a warning on stderr.
DatasetIndex scan_split(const std::filesystem::path& root, const std::string& split,
                        const ScanConfig& config = {});

// Layout: <root>/<series_id>/*.{png,jpg,jpeg} ; one SeriesIndex per folder.
std::vector<SeriesIndex> scan_test_series(const std::filesystem::path& root);

struct Batch {
  Tensor images;  // [B,C,target,target] in [0,1]
  Tensor labels;  // [B,1] in {0,1}
};

// Streams one epoch of shuffled batches. The permutation is a pure function
// of (seed, epoch); the final batch may be smaller. Image decode within a
// batch fans out over threads without affecting emission order.
class BatchStream {
 public:
  BatchStream(const DatasetIndex& index, std::int64_t batch_size, std::uint64_t seed,
              std::int64_t epoch, int channels, std::int64_t target_size);

  std::optional<Batch> next();

  std::int64_t batches_per_epoch() const;

 private:
  const DatasetIndex& index_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
  std::int64_t batch_size_;
  int channels_;
  std::int64_t target_size_;
};

// Loads a specific list of entries (no shuffle) as one batch.
Batch load_batch(const std::vector<DatasetEntry>& entries, std::int64_t first,
                 std::int64_t count, int channels, std::int64_t target_size);

// Writes the synthetic separable dataset used by tests and demos:
// 64 train / 32 validation constant-intensity images in the documented
// layout plus two labeled-by-construction test series.
void make_fixture(const std::filesystem::path& out_dir);

}  // namespace teli
