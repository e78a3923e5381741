#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "volscan/data.hpp"
#include "volscan/rng.hpp"

using namespace volscan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / (std::string("volscan_data_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GenSpec small_spec() {
  GenSpec spec;
  spec.pos_counts = {4, 2, 2};
  spec.neg_counts = {4, 2, 2};
  spec.depth = 16;
  spec.height = 32;
  spec.width = 32;
  spec.lesion_frac = 0.25;
  spec.contrast = 0.5;
  spec.noise = 0.05;
  spec.seed = 7;
  return spec;
}

}  // namespace

// -------------------------------------------------------------------- VOLB ---

TEST_CASE("volume file round-trip is bitwise") {
  const auto dir = temp_dir("volb");
  Rng rng(1);
  TensorF v({3, 5, 4});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(rng.next_double());
  write_volume(dir / "v.volb", v);
  const TensorF r = read_volume(dir / "v.volb");
  REQUIRE(r.shape() == v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(r[i] == v[i]);
  fs::remove_all(dir);
}

TEST_CASE("volume file byte layout matches the format spec for a 2x2x2 volume") {
  const auto dir = temp_dir("volb_layout");
  TensorF v({2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) v[i] = float(i) * 0.5f;
  write_volume(dir / "v.volb", v);
  const std::string bytes = read_file(dir / "v.volb");

  std::string expect = "VOLB";
  put_u16(expect, 1);
  put_u32(expect, 2);
  put_u32(expect, 2);
  put_u32(expect, 2);
  for (std::size_t i = 0; i < 8; ++i) put_f32(expect, float(i) * 0.5f);
  CHECK(bytes == expect);
  CHECK(bytes.size() == 4 + 2 + 12 + 32);
  fs::remove_all(dir);
}

TEST_CASE("volume reader rejects bad magic, truncation, and dim overflow") {
  const auto dir = temp_dir("volb_bad");
  atomic_write_file(dir / "bad.volb", "XXXX????");
  CHECK_THROWS_AS(read_volume(dir / "bad.volb"), IoError);

  TensorF v({2, 2, 2});
  write_volume(dir / "v.volb", v);
  std::string bytes = read_file(dir / "v.volb");
  bytes.resize(bytes.size() - 5);
  atomic_write_file(dir / "cut.volb", bytes);
  CHECK_THROWS_AS(read_volume(dir / "cut.volb"), IoError);

  std::string huge = "VOLB";
  put_u16(huge, 1);
  put_u32(huge, 0xFFFFFFFFu);
  put_u32(huge, 0xFFFFFFFFu);
  put_u32(huge, 0xFFFFFFFFu);
  atomic_write_file(dir / "huge.volb", huge);
  CHECK_THROWS_AS(read_volume(dir / "huge.volb"), IoError);
  fs::remove_all(dir);
}

// ------------------------------------------------------------------ resize ---

TEST_CASE("resize to the source dims is an exact identity") {
  Rng rng(2);
  TensorF v({5, 7, 9});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(rng.next_double());
  const TensorF r = resize_volume(v, 5, 7, 9);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(r[i] == v[i]);
}

TEST_CASE("resize preserves constants") {
  TensorF v({4, 6, 6});
  v.fill(0.37f);
  const TensorF r = resize_volume(v, 7, 3, 11);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(0.37).epsilon(1e-6));
}

TEST_CASE("linear ramp over width 9 downsizes to the exact five quartile values") {
  TensorF v({1, 1, 9});
  for (std::size_t i = 0; i < 9; ++i) v[i] = float(i) / 8.0f;
  const TensorF r = resize_volume(v, 1, 1, 5);
  REQUIRE(r.size() == 5);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.25f);
  CHECK(r[2] == 0.5f);
  CHECK(r[3] == 0.75f);
  CHECK(r[4] == 1.0f);
}

TEST_CASE("resize output stays within the input range and commutes with shifts") {
  Rng rng(3);
  TensorF v({6, 10, 10});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(rng.uniform(0.2, 0.8));
  const TensorF r = resize_volume(v, 9, 7, 13);
  float lo = 1e9f, hi = -1e9f;
  for (std::size_t i = 0; i < v.size(); ++i) {
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r[i] >= lo);
    CHECK(r[i] <= hi);
  }

  TensorF shifted = v;
  for (std::size_t i = 0; i < v.size(); ++i) shifted[i] += 0.25f;
  const TensorF rs = resize_volume(shifted, 9, 7, 13);
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(rs[i] == doctest::Approx(r[i] + 0.25f).epsilon(1e-6));
}

TEST_CASE("resize rejects zero target dims") {
  TensorF v({2, 2, 2});
  CHECK_THROWS_AS(resize_volume(v, 0, 2, 2), ValueError);
}

// --------------------------------------------------------------- generator ---

TEST_CASE("generation is bitwise deterministic across runs") {
  const GenSpec spec = small_spec();
  for (std::size_t idx : {0ul, 5ul, 9ul, 15ul}) {
    const GeneratedSample a = generate_sample(spec, idx);
    const GeneratedSample b = generate_sample(spec, idx);
    CHECK(a.patient_id == b.patient_id);
    CHECK(a.label == b.label);
    CHECK(a.split == b.split);
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
      CHECK(a.voxels[i] == b.voxels[i]);
      CHECK(a.mask[i] == b.mask[i]);
    }
  }
}

TEST_CASE("lesion-bearing slices span exactly round(frac*D) contiguous slices") {
  GenSpec spec = small_spec();
  spec.lesion_frac = 0.25;                     // 4 of 16 slices
  for (std::size_t idx = 0; idx < 4; ++idx) {  // first four are train positives
    const GeneratedSample s = generate_sample(spec, idx);
    REQUIRE(s.label == 1);
    std::vector<int> has(16, 0);
    for (std::size_t z = 0; z < 16; ++z)
      for (std::size_t i = 0; i < 1024; ++i)
        if (s.mask[z * 1024 + i] > 0) has[z] = 1;
    int count = 0, first = -1, last = -1;
    for (int z = 0; z < 16; ++z)
      if (has[z]) {
        count++;
        if (first < 0) first = z;
        last = z;
      }
    CHECK(count == 4);
    CHECK(last - first + 1 == 4);  // contiguous
  }
}

TEST_CASE("labels agree with mask occupancy; negatives equal their background draw") {
  GenSpec pos_spec = small_spec();
  pos_spec.pos_counts = {1, 0, 0};
  pos_spec.neg_counts = {0, 0, 0};
  GenSpec neg_spec = pos_spec;
  neg_spec.pos_counts = {0, 0, 0};
  neg_spec.neg_counts = {1, 0, 0};

  const GeneratedSample pos = generate_sample(pos_spec, 0);
  const GeneratedSample neg = generate_sample(neg_spec, 0);
  REQUIRE(pos.label == 1);
  REQUIRE(neg.label == 0);

  bool pos_has_mask = false;
  for (std::size_t i = 0; i < pos.mask.size(); ++i) pos_has_mask |= pos.mask[i] > 0;
  CHECK(pos_has_mask);
  for (std::size_t i = 0; i < neg.mask.size(); ++i) CHECK(neg.mask[i] == 0.0f);

  // Same seed and index: the negative volume IS the positive's background.
  for (std::size_t i = 0; i < pos.voxels.size(); ++i) {
    if (pos.mask[i] == 0.0f)
      CHECK(pos.voxels[i] == neg.voxels[i]);
    else
      CHECK(pos.voxels[i] < neg.voxels[i]);  // hypodense
  }
}

TEST_CASE("generator validates its spec") {
  GenSpec spec = small_spec();
  spec.lesion_frac = 0.03;  // 0.03 * 16 < 1 slice
  CHECK_THROWS_AS(spec.validate(), ValueError);
  spec = small_spec();
  spec.pos_counts = {0, 0, 0};
  spec.neg_counts = {0, 0, 0};
  CHECK_THROWS_AS(spec.validate(), ValueError);
  spec = small_spec();
  spec.contrast = 0.0;
  CHECK_THROWS_AS(spec.validate(), ValueError);
}

TEST_CASE("generate_dataset writes volumes, masks, and a manifest; rerun is bitwise") {
  const auto dir_a = temp_dir("gen_a");
  const auto dir_b = temp_dir("gen_b");
  GenSpec spec = small_spec();
  spec.pos_counts = {2, 1, 1};
  spec.neg_counts = {2, 1, 1};
  const auto rec_a = generate_dataset(spec, dir_a);
  const auto rec_b = generate_dataset(spec, dir_b);
  REQUIRE(rec_a.size() == 8);
  CHECK(read_file(dir_a / "manifest.csv") == read_file(dir_b / "manifest.csv"));
  for (const auto& r : rec_a) {
    CHECK(fs::exists(dir_a / r.volume_path));
    const std::string mask_name =
        r.volume_path.substr(0, r.volume_path.size() - 5) + ".mask.volb";
    CHECK(fs::exists(dir_a / mask_name));
    CHECK(read_file(dir_a / r.volume_path) == read_file(dir_b / r.volume_path));
  }

  // Patient ids never straddle splits.
  std::map<std::string, std::set<std::string>> splits_of;
  for (const auto& r : rec_a) splits_of[r.patient_id].insert(r.split);
  for (const auto& [pid, splits] : splits_of) CHECK(splits.size() == 1);

  // A different seed must change the voxel bytes.
  const auto dir_c = temp_dir("gen_c");
  spec.seed = 8;
  const auto rec_c = generate_dataset(spec, dir_c);
  CHECK(read_file(dir_a / rec_a[0].volume_path) != read_file(dir_c / rec_c[0].volume_path));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::remove_all(dir_c);
}

TEST_CASE("manifest round-trips and rejects malformed rows") {
  const auto dir = temp_dir("manifest");
  const std::vector<VolumeRecord> records = {
      {"a.volb", "P1", 1, "train"},
      {"b.volb", "P2", 0, "val"},
      {"c.volb", "P3", 1, "test"},
  };
  write_manifest(dir / "m.csv", records);
  const auto back = read_manifest(dir / "m.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].volume_path == records[i].volume_path);
    CHECK(back[i].patient_id == records[i].patient_id);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].split == records[i].split);
  }

  atomic_write_file(dir / "bad.csv", "volume_path,patient_id,label,split\nx.volb,P1,2,train\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv"), IoError);
  atomic_write_file(dir / "bad2.csv", "wrong,header\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad2.csv"), IoError);
  fs::remove_all(dir);
}

// ------------------------------------------------------------------- split ---

TEST_CASE("split keeps every volume of a patient together") {
  std::vector<VolumeRecord> records;
  for (int p = 0; p < 30; ++p)
    for (int k = 0; k < 3; ++k)
      records.push_back({"v.volb", "P" + std::to_string(p), p % 2, ""});
  split_by_patient(records, {0.6, 0.2, 0.2}, 13);
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& r : records) {
    CHECK(!r.split.empty());
    seen[r.patient_id].insert(r.split);
  }
  for (const auto& [pid, splits] : seen) CHECK(splits.size() == 1);
}

TEST_CASE("split honours fractions: 100 patients at 0.6/0.2/0.2 give 60/20/20 within 1") {
  std::vector<VolumeRecord> records;
  for (int p = 0; p < 100; ++p)
    records.push_back({"v.volb", "P" + std::to_string(p), p % 2, ""});
  split_by_patient(records, {0.6, 0.2, 0.2}, 13);
  std::map<std::string, int> counts;
  for (const auto& r : records) counts[r.split]++;
  CHECK(std::abs(counts["train"] - 60) <= 1);
  CHECK(std::abs(counts["val"] - 20) <= 1);
  CHECK(std::abs(counts["test"] - 20) <= 1);

  // Class balance within 5 percentage points of the global 50%.
  std::map<std::string, std::array<int, 2>> by_class;
  for (const auto& r : records) by_class[r.split][r.label]++;
  for (const auto& [split, c] : by_class) {
    const double frac = double(c[1]) / double(c[0] + c[1]);
    CHECK(std::abs(frac - 0.5) <= 0.05);
  }
}

TEST_CASE("zero test fraction leaves the test split empty") {
  std::vector<VolumeRecord> records;
  for (int p = 0; p < 20; ++p)
    records.push_back({"v.volb", "P" + std::to_string(p), p % 2, ""});
  split_by_patient(records, {0.75, 0.25, 0.0}, 1);
  for (const auto& r : records) CHECK(r.split != "test");
}

TEST_CASE("a nonzero split that would receive no patients of a class errors") {
  std::vector<VolumeRecord> records;
  records.push_back({"v.volb", "P0", 1, ""});
  records.push_back({"v.volb", "P1", 0, ""});
  records.push_back({"v.volb", "P2", 0, ""});
  // Only one positive patient cannot cover three nonzero splits.
  CHECK_THROWS_AS(split_by_patient(records, {0.4, 0.3, 0.3}, 1), ValueError);
}

TEST_CASE("split fractions must sum to one") {
  std::vector<VolumeRecord> records{{"v.volb", "P0", 1, ""}};
  CHECK_THROWS_AS(split_by_patient(records, {0.5, 0.2, 0.2}, 1), ValueError);
}
