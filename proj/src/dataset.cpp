#include "teli/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>

#include "teli/image_io.hpp"
#include "teli/kernels.hpp"
#include "teli/rng.hpp"

namespace teli {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool has_image_extension(const fs::path& p) {
  const std::string ext = lower(p.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// Recursively collect image files under dir, sorted by path.
std::vector<fs::path> collect_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (has_image_extension(entry.path())) {
      files.push_back(entry.path());
    } else {
      std::cerr << "warning: skipping non-image file " << entry.path() << "\n";
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

fs::path find_class_dir(const fs::path& split_dir, const std::string& wanted) {
  const std::string wanted_lower = lower(wanted);
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    if (entry.is_directory() && lower(entry.path().filename().string()) == wanted_lower) {
      return entry.path();
    }
  }
  throw DataError("missing class folder '" + wanted + "' under " + split_dir.string());
}

}  // namespace

DatasetIndex scan_split(const fs::path& root, const std::string& split,
                        const ScanConfig& config) {
  const fs::path split_dir = root / split;
  if (!fs::is_directory(split_dir)) {
    throw DataError("missing split folder " + split_dir.string());
  }
  const fs::path covid_dir = find_class_dir(split_dir, config.covid_dir);
  const fs::path noncovid_dir = find_class_dir(split_dir, config.noncovid_dir);

  DatasetIndex index;
  index.split = split;
  for (const auto& p : collect_images(covid_dir)) {
    index.entries.push_back({p, 1});
    ++index.covid_count;
  }
  for (const auto& p : collect_images(noncovid_dir)) {
    index.entries.push_back({p, 0});
    ++index.noncovid_count;
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.path < b.path; });
  if (index.entries.empty()) {
    throw DataError("split folder has no images: " + split_dir.string());
  }
  return index;
}

std::vector<SeriesIndex> scan_test_series(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw DataError("missing test folder " + root.string());
  }
  std::vector<fs::path> series_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) series_dirs.push_back(entry.path());
  }
  std::sort(series_dirs.begin(), series_dirs.end());
  if (series_dirs.empty()) {
    throw DataError("test folder has no series folders: " + root.string());
  }
  std::vector<SeriesIndex> out;
  out.reserve(series_dirs.size());
  for (const auto& dir : series_dirs) {
    SeriesIndex series;
    series.series_id = dir.filename().string();
    series.slice_paths = collect_images(dir);
    if (series.slice_paths.empty()) {
      throw DataError("series folder has no images: " + dir.string());
    }
    out.push_back(std::move(series));
  }
  return out;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

BatchStream::BatchStream(const DatasetIndex& index, std::int64_t batch_size, std::uint64_t seed,
                         std::int64_t epoch, int channels, std::int64_t target_size)
    : index_(index), batch_size_(batch_size), channels_(channels), target_size_(target_size) {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  order_.resize(index.entries.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order_);
}

std::int64_t BatchStream::batches_per_epoch() const {
  const std::int64_t n = static_cast<std::int64_t>(index_.entries.size());
  return (n + batch_size_ - 1) / batch_size_;
}

namespace {

// Decode a run of entries into a preallocated batch. Exceptions must not
// escape the parallel region, so the first failure is captured and rethrown.
void fill_batch(Batch& batch, const std::vector<DatasetEntry>& entries,
                const std::int64_t* order, std::int64_t first, std::int64_t count,
                int channels, std::int64_t target_size) {
  const std::int64_t plane = channels * target_size * target_size;
  const bool serial = strict_deterministic();
  std::string error;
#pragma omp parallel for schedule(dynamic) if (!serial)
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t idx = order ? order[first + i] : first + i;
    const DatasetEntry& entry = entries[static_cast<std::size_t>(idx)];
    try {
      Tensor img = load_image(entry.path, target_size, channels);
      std::copy(img.data(), img.data() + plane, batch.images.data() + i * plane);
      batch.labels[i] = static_cast<float>(entry.label);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DataError(error);
}

}  // namespace

std::optional<Batch> BatchStream::next() {
  const std::int64_t n = static_cast<std::int64_t>(index_.entries.size());
  if (cursor_ >= n) return std::nullopt;
  const std::int64_t count = std::min(batch_size_, n - cursor_);

  Batch batch;
  batch.images = Tensor({count, channels_, target_size_, target_size_});
  batch.labels = Tensor({count, 1});
  fill_batch(batch, index_.entries, order_.data(), cursor_, count, channels_, target_size_);
  cursor_ += count;
  return batch;
}

Batch load_batch(const std::vector<DatasetEntry>& entries, std::int64_t first,
                 std::int64_t count, int channels, std::int64_t target_size) {
  Batch batch;
  batch.images = Tensor({count, channels, target_size, target_size});
  batch.labels = Tensor({count, 1});
  fill_batch(batch, entries, nullptr, first, count, channels, target_size);
  return batch;
}

// ---------------------------------------------------------------------------
// fixture
// ---------------------------------------------------------------------------

namespace {

void write_constant_png(const fs::path& path, std::uint8_t value) {
  constexpr std::int64_t kSize = 512;
  std::vector<std::uint8_t> pixels(kSize * kSize, value);
  write_png_gray(path, kSize, kSize, pixels);
}

// Class intensity bands are symmetric around mid-gray and widely separated,
// so mean intensity alone solves the fixture.
std::uint8_t covid_value(int i) { return static_cast<std::uint8_t>(160 + (i % 16) * 4); }
std::uint8_t noncovid_value(int i) { return static_cast<std::uint8_t>(32 + (i % 16) * 4); }

}  // namespace

void make_fixture(const fs::path& out_dir) {
  const struct {
    const char* split;
    int per_class;
  } splits[] = {{"train", 32}, {"validation", 16}};

  char name[32];
  for (const auto& s : splits) {
    const fs::path covid = out_dir / s.split / "covid";
    const fs::path noncovid = out_dir / s.split / "non-covid";
    fs::create_directories(covid);
    fs::create_directories(noncovid);
    for (int i = 0; i < s.per_class; ++i) {
      std::snprintf(name, sizeof(name), "img_%03d.png", i);
      write_constant_png(covid / name, covid_value(i));
      write_constant_png(noncovid / name, noncovid_value(i));
    }
  }

  // two test series with known composition: series_001 covid-like,
  // series_002 non-covid-like
  const fs::path series1 = out_dir / "test" / "series_001";
  const fs::path series2 = out_dir / "test" / "series_002";
  fs::create_directories(series1);
  fs::create_directories(series2);
  for (int i = 0; i < 5; ++i) {
    std::snprintf(name, sizeof(name), "slice_%03d.png", i);
    write_constant_png(series1 / name, covid_value(i + 3));
  }
  for (int i = 0; i < 7; ++i) {
    std::snprintf(name, sizeof(name), "slice_%03d.png", i);
    write_constant_png(series2 / name, noncovid_value(i + 3));
  }
}

}  // namespace teli
