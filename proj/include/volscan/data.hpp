#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "volscan/tensor.hpp"

namespace volscan {

// ------------------------------------------------------------- volume file ---
// VOLB: magic "VOLB", version u16 LE = 1, depth/height/width u32 LE, then
// depth*height*width f32 LE, slice-major (z, then rows, then columns).

void write_volume(const std::filesystem::path& path, const TensorF& volume);
TensorF read_volume(const std::filesystem::path& path);

// ---------------------------------------------------------------- manifest ---
// CSV `volume_path,patient_id,label,split`, UTF-8, LF. Paths are stored
// relative to the manifest's directory.

struct VolumeRecord {
  std::string volume_path;
  std::string patient_id;
  int label = 0;
  std::string split;  // train|val|test
};

void write_manifest(const std::filesystem::path& path, const std::vector<VolumeRecord>& records);
std::vector<VolumeRecord> read_manifest(const std::filesystem::path& path);

// Resolve a record's volume path against the manifest location.
std::filesystem::path resolve_volume_path(const std::filesystem::path& manifest_path,
                                          const VolumeRecord& record);

// ------------------------------------------------------------------ resize ---

// Corner-aligned trilinear interpolation; exact identity at equal dims.
TensorF resize_volume(const TensorF& v, std::size_t depth, std::size_t height, std::size_t width);

// --------------------------------------------------------------- generator ---

struct GenSpec {
  // volumes per class per split: {train, val, test} x {neg handled via n_neg}
  std::array<std::size_t, 3> pos_counts{0, 0, 0};
  std::array<std::size_t, 3> neg_counts{0, 0, 0};
  std::size_t depth = 16, height = 32, width = 32;
  double lesion_frac = 0.25;   // fraction of depth covered by the lesion band
  double contrast = 0.4;       // peak relative intensity reduction, in (0,1]
  double noise = 0.05;         // uniform per-voxel noise amplitude
  std::size_t volumes_per_patient = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t total() const;
};

inline constexpr const char* kSplitNames[3] = {"train", "val", "test"};

// Writes volumes, audit lesion masks (<stem>.mask.volb, never used as model
// input), and the manifest into out_dir. Fully reproducible from spec.seed;
// per-sample streams are keyed by the global sample index, so generation is
// order-independent and parallel-safe.
std::vector<VolumeRecord> generate_dataset(const GenSpec& spec,
                                           const std::filesystem::path& out_dir);

// In-memory variant used by tests and training benchmarks.
struct GeneratedSample {
  TensorF voxels;
  TensorF mask;
  std::string patient_id;
  int label = 0;
  std::string split;
};
GeneratedSample generate_sample(const GenSpec& spec, std::size_t sample_index);

// ------------------------------------------------------------------- split ---

// Assigns splits at patient granularity: every volume of a patient lands in
// the same split, per-class quotas follow `fractions` (largest remainder).
void split_by_patient(std::vector<VolumeRecord>& records, const std::array<double, 3>& fractions,
                      std::uint64_t seed);

}  // namespace volscan
