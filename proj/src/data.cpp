#include "volscan/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "volscan/rng.hpp"

namespace volscan {

namespace fs = std::filesystem;

// ------------------------------------------------------------- volume file ---

static constexpr char kVolbMagic[4] = {'V', 'O', 'L', 'B'};
static constexpr std::uint16_t kVolbVersion = 1;
static constexpr std::uint64_t kMaxVoxels = 1ull << 31;

void write_volume(const fs::path& path, const TensorF& volume) {
  if (volume.rank() != 3)
    throw ShapeError("write_volume: expected rank-3 volume, got " + shape_str(volume.shape()));
  std::string buf;
  buf.reserve(18 + volume.size() * 4);
  buf.append(kVolbMagic, 4);
  put_u16(buf, kVolbVersion);
  put_u32(buf, std::uint32_t(volume.dim(0)));
  put_u32(buf, std::uint32_t(volume.dim(1)));
  put_u32(buf, std::uint32_t(volume.dim(2)));
  for (std::size_t i = 0; i < volume.size(); ++i) put_f32(buf, volume[i]);
  atomic_write_file(path, buf);
}

TensorF read_volume(const fs::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, "volume " + path.string());
  if (r.bytes(4) != std::string(kVolbMagic, 4))
    throw IoError("volume " + path.string() + ": bad magic (not a VOLB file)");
  const std::uint16_t version = r.u16();
  if (version != kVolbVersion)
    throw IoError("volume " + path.string() + ": unsupported version " + std::to_string(version));
  const std::uint64_t d = r.u32(), h = r.u32(), w = r.u32();
  if (d == 0 || h == 0 || w == 0 || d * h * w > kMaxVoxels)
    throw IoError("volume " + path.string() + ": invalid dims " + std::to_string(d) + "x" +
                  std::to_string(h) + "x" + std::to_string(w));
  if (r.remaining() != d * h * w * 4)
    throw IoError("volume " + path.string() + ": payload is " + std::to_string(r.remaining()) +
                  " bytes, expected " + std::to_string(d * h * w * 4));
  TensorF v({std::size_t(d), std::size_t(h), std::size_t(w)});
  r.read_f32(v.data(), v.size());
  return v;
}

// ---------------------------------------------------------------- manifest ---

static constexpr const char* kManifestHeader = "volume_path,patient_id,label,split";

void write_manifest(const fs::path& path, const std::vector<VolumeRecord>& records) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records)
    out += r.volume_path + "," + r.patient_id + "," + std::to_string(r.label) + "," + r.split +
           "\n";
  atomic_write_file(path, out);
}

std::vector<VolumeRecord> read_manifest(const fs::path& path) {
  const std::string buf = read_file(path);
  std::vector<VolumeRecord> records;
  std::size_t pos = 0;
  bool header = true;
  while (pos < buf.size()) {
    std::size_t eol = buf.find('\n', pos);
    if (eol == std::string::npos) eol = buf.size();
    const std::string line = buf.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != kManifestHeader)
        throw IoError("manifest " + path.string() + ": unexpected header '" + line + "'");
      header = false;
      continue;
    }
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = line.find(',', start);
      if (f < 3 && comma == std::string::npos)
        throw IoError("manifest " + path.string() + ": malformed row '" + line + "'");
      fields[f] = line.substr(start, (f < 3 ? comma : line.size()) - start);
      start = comma + 1;
    }
    if (fields[3] != "train" && fields[3] != "val" && fields[3] != "test")
      throw IoError("manifest " + path.string() + ": unknown split '" + fields[3] + "'");
    if (fields[2] != "0" && fields[2] != "1")
      throw IoError("manifest " + path.string() + ": label must be 0 or 1, got '" + fields[2] +
                    "'");
    records.push_back({fields[0], fields[1], fields[2] == "1" ? 1 : 0, fields[3]});
  }
  if (header) throw IoError("manifest " + path.string() + ": empty file");
  return records;
}

fs::path resolve_volume_path(const fs::path& manifest_path, const VolumeRecord& record) {
  const fs::path p(record.volume_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

// ------------------------------------------------------------------ resize ---

namespace {

struct AxisWeights {
  std::vector<std::size_t> lo, hi;
  std::vector<float> t;
};

AxisWeights axis_weights(std::size_t src, std::size_t dst) {
  AxisWeights w;
  w.lo.resize(dst);
  w.hi.resize(dst);
  w.t.resize(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    // Corner-aligned: i maps to i*(S-1)/(T-1); exact integers when S == T.
    const double pos = dst == 1 ? 0.0 : double(i) * double(src - 1) / double(dst - 1);
    const double fl = std::floor(pos);
    w.lo[i] = std::min(std::size_t(fl), src - 1);
    w.hi[i] = std::min(w.lo[i] + 1, src - 1);
    w.t[i] = float(pos - fl);
  }
  return w;
}

}  // namespace

TensorF resize_volume(const TensorF& v, std::size_t depth, std::size_t height, std::size_t width) {
  if (v.rank() != 3)
    throw ShapeError("resize_volume: expected rank-3 volume, got " + shape_str(v.shape()));
  if (depth == 0 || height == 0 || width == 0)
    throw ValueError("resize_volume: target dims must be positive");
  const std::size_t sd = v.dim(0), sh = v.dim(1), sw = v.dim(2);
  const AxisWeights wz = axis_weights(sd, depth);
  const AxisWeights wy = axis_weights(sh, height);
  const AxisWeights wx = axis_weights(sw, width);
  TensorF out({depth, height, width});
  const float* src = v.data();
  float* dst = out.data();
  std::size_t oi = 0;
  for (std::size_t z = 0; z < depth; ++z) {
    const std::size_t z0 = wz.lo[z] * sh * sw, z1 = wz.hi[z] * sh * sw;
    const float tz = wz.t[z];
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t y0 = wy.lo[y] * sw, y1 = wy.hi[y] * sw;
      const float ty = wy.t[y];
      for (std::size_t x = 0; x < width; ++x, ++oi) {
        const std::size_t x0 = wx.lo[x], x1 = wx.hi[x];
        const float tx = wx.t[x];
        const float c00 = src[z0 + y0 + x0] + tx * (src[z0 + y0 + x1] - src[z0 + y0 + x0]);
        const float c01 = src[z0 + y1 + x0] + tx * (src[z0 + y1 + x1] - src[z0 + y1 + x0]);
        const float c10 = src[z1 + y0 + x0] + tx * (src[z1 + y0 + x1] - src[z1 + y0 + x0]);
        const float c11 = src[z1 + y1 + x0] + tx * (src[z1 + y1 + x1] - src[z1 + y1 + x0]);
        const float c0 = c00 + ty * (c01 - c00);
        const float c1 = c10 + ty * (c11 - c10);
        dst[oi] = c0 + tz * (c1 - c0);
      }
    }
  }
  return out;
}

// --------------------------------------------------------------- generator ---

void GenSpec::validate() const {
  if (total() == 0) throw ValueError("generator: zero total volumes requested");
  if (depth == 0 || height == 0 || width == 0)
    throw ValueError("generator: dims must be positive");
  if (lesion_frac <= 0.0 || lesion_frac > 1.0)
    throw ValueError("generator: lesion fraction must be in (0,1]");
  if (lesion_frac * double(depth) < 1.0)
    throw ValueError("generator: lesion fraction " + std::to_string(lesion_frac) +
                     " spans less than one slice at depth " + std::to_string(depth));
  if (contrast <= 0.0 || contrast > 1.0)
    throw ValueError("generator: contrast must be in (0,1]");
  if (noise < 0.0 || noise > 0.5) throw ValueError("generator: noise must be in [0, 0.5]");
  if (volumes_per_patient == 0) throw ValueError("generator: volumes_per_patient must be >= 1");
  if (volumes_per_patient > 1) {
    for (int s = 0; s < 3; ++s)
      if (pos_counts[s] % volumes_per_patient || neg_counts[s] % volumes_per_patient)
        throw ValueError("generator: per-split counts must be divisible by volumes_per_patient");
  }
}

std::size_t GenSpec::total() const {
  std::size_t n = 0;
  for (int s = 0; s < 3; ++s) n += pos_counts[s] + neg_counts[s];
  return n;
}

namespace {

struct SampleSlot {
  int split;   // 0 train, 1 val, 2 test
  int label;   // 1 pos, 0 neg
  std::size_t patient;
};

// Global sample index -> (split, class, patient). Blocks are enumerated
// train-pos, train-neg, val-pos, val-neg, test-pos, test-neg.
SampleSlot slot_of(const GenSpec& spec, std::size_t index) {
  std::size_t base = 0, patient_base = 0;
  for (int s = 0; s < 3; ++s) {
    for (int cls = 1; cls >= 0; --cls) {
      const std::size_t count = cls ? spec.pos_counts[s] : spec.neg_counts[s];
      if (index < base + count) {
        const std::size_t offset = index - base;
        return {s, cls, patient_base + offset / spec.volumes_per_patient};
      }
      base += count;
      patient_base += count / spec.volumes_per_patient +
                      (count % spec.volumes_per_patient ? 1 : 0);
    }
  }
  throw InternalError("generator: sample index out of range");
}

struct Lesion {
  double cz, cy, cx, rz, ry, rx;
};

void apply_lesion(TensorF& v, TensorF& mask, const Lesion& le, double contrast) {
  const std::size_t d = v.dim(0), h = v.dim(1), w = v.dim(2);
  const auto lo = [](double c, double r) { return std::size_t(std::max(0.0, std::ceil(c - r))); };
  const auto hi = [](double c, double r, std::size_t n) {
    return std::size_t(std::min(double(n - 1), std::floor(c + r)));
  };
  for (std::size_t z = lo(le.cz, le.rz); z <= hi(le.cz, le.rz, d); ++z) {
    const double qz = (double(z) - le.cz) / le.rz;
    for (std::size_t y = lo(le.cy, le.ry); y <= hi(le.cy, le.ry, h); ++y) {
      const double qy = (double(y) - le.cy) / le.ry;
      for (std::size_t x = lo(le.cx, le.rx); x <= hi(le.cx, le.rx, w); ++x) {
        const double qx = (double(x) - le.cx) / le.rx;
        const double q = qz * qz + qy * qy + qx * qx;
        if (q >= 1.0) continue;
        const std::size_t i = (z * h + y) * w + x;
        mask[i] = 1.0f;
        // Quadratic falloff: full `contrast` reduction at the centre.
        v[i] *= 1.0f - float(contrast * (1.0 - q));
      }
    }
  }
}

}  // namespace

GeneratedSample generate_sample(const GenSpec& spec, std::size_t sample_index) {
  spec.validate();
  if (sample_index >= spec.total()) throw ValueError("generate_sample: index out of range");
  const SampleSlot slot = slot_of(spec, sample_index);
  Rng rng(derive_seed(derive_seed(spec.seed, "data"), sample_index));

  const std::size_t d = spec.depth, h = spec.height, w = spec.width;

  // Smooth background: coarse uniform field upsampled trilinearly, plus noise.
  const std::size_t gd = std::max<std::size_t>(2, d / 4 + 1);
  const std::size_t gh = std::max<std::size_t>(2, h / 8 + 1);
  const std::size_t gw = std::max<std::size_t>(2, w / 8 + 1);
  TensorF coarse({gd, gh, gw});
  for (std::size_t i = 0; i < coarse.size(); ++i) coarse[i] = float(rng.uniform(0.35, 0.65));
  TensorF v = resize_volume(coarse, d, h, w);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float n = float(rng.uniform(-spec.noise, spec.noise));
    v[i] = std::clamp(v[i] + n, 0.0f, 1.0f);
  }

  TensorF mask({d, h, w});
  if (slot.label == 1) {
    // 1-3 hypodense ellipsoids confined to one contiguous slice band covering
    // lesion_frac of the depth; the first spans the whole band so the set of
    // lesion-bearing slices is exactly the band.
    const std::size_t band = std::clamp<std::size_t>(
        std::size_t(std::llround(spec.lesion_frac * double(d))), 1, d);
    const std::size_t start = std::size_t(rng.next_below(d - band + 1));
    const std::size_t n_lesions = 1 + std::size_t(rng.next_below(3));
    for (std::size_t li = 0; li < n_lesions; ++li) {
      Lesion le;
      if (li == 0) {
        le.cz = double(start) + double(band - 1) / 2.0;
        le.rz = double(band) / 2.0;
        le.ry = rng.uniform(0.14 * double(h), 0.23 * double(h));
        le.rx = rng.uniform(0.14 * double(w), 0.23 * double(w));
      } else {
        le.cz = double(start) + rng.next_double() * double(band - 1);
        const double rz_max = std::min(le.cz - double(start) + 1.0,
                                       double(start + band) - le.cz);
        le.rz = rng.uniform(0.5, std::max(0.5, rz_max));
        le.ry = rng.uniform(0.10 * double(h), 0.18 * double(h));
        le.rx = rng.uniform(0.10 * double(w), 0.18 * double(w));
      }
      le.cy = rng.uniform(0.25 * double(h), 0.75 * double(h));
      le.cx = rng.uniform(0.25 * double(w), 0.75 * double(w));
      apply_lesion(v, mask, le, spec.contrast);
    }
  }

  GeneratedSample out;
  out.voxels = std::move(v);
  out.mask = std::move(mask);
  char pid[16];
  std::snprintf(pid, sizeof pid, "P%05zu", slot.patient);
  out.patient_id = pid;
  out.label = slot.label;
  out.split = kSplitNames[slot.split];
  return out;
}

std::vector<VolumeRecord> generate_dataset(const GenSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::size_t total = spec.total();
  std::vector<VolumeRecord> records(total);

  const auto emit = [&](std::size_t index) {
    GeneratedSample s = generate_sample(spec, index);
    char name[32];
    std::snprintf(name, sizeof name, "vol_%05zu.volb", index);
    char mask_name[40];
    std::snprintf(mask_name, sizeof mask_name, "vol_%05zu.mask.volb", index);
    write_volume(out_dir / name, s.voxels);
    write_volume(out_dir / mask_name, s.mask);
    records[index] = {name, s.patient_id, s.label, s.split};
  };

  const std::size_t workers = std::min(worker_threads(), total);
  if (workers <= 1) {
    for (std::size_t i = 0; i < total; ++i) emit(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < total; i += workers) emit(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  write_manifest(out_dir / "manifest.csv", records);
  return records;
}

// ------------------------------------------------------------------- split ---

void split_by_patient(std::vector<VolumeRecord>& records, const std::array<double, 3>& fractions,
                      std::uint64_t seed) {
  double sum = 0;
  for (double f : fractions) {
    if (f < 0) throw ValueError("split_by_patient: fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValueError("split_by_patient: fractions must sum to 1");

  // Group by patient, class = any positive volume.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> members;
  std::map<std::string, int> patient_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, fresh] = members.try_emplace(records[i].patient_id);
    if (fresh) order.push_back(records[i].patient_id);
    it->second.push_back(i);
    patient_class[records[i].patient_id] |= records[i].label;
  }

  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::string> patients;
    for (const auto& pid : order)
      if (patient_class[pid] == cls) patients.push_back(pid);
    if (patients.empty()) continue;
    Rng rng(derive_seed(seed, cls ? "split-pos" : "split-neg"));
    rng.shuffle(patients);

    // Largest-remainder quotas per split.
    const std::size_t n = patients.size();
    std::array<std::size_t, 3> quota{};
    std::array<std::pair<double, int>, 3> remainder{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fractions[s] * double(n);
      quota[s] = std::size_t(std::floor(exact));
      remainder[s] = {exact - std::floor(exact), s};
      assigned += quota[s];
    }
    std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) quota[remainder[k % 3].second]++;

    std::size_t idx = 0;
    for (int s = 0; s < 3; ++s) {
      if (fractions[s] > 0 && quota[s] == 0)
        throw ValueError(std::string("split_by_patient: split '") + kSplitNames[s] +
                         "' would receive zero patients of class " + std::to_string(cls));
      for (std::size_t k = 0; k < quota[s]; ++k, ++idx)
        for (std::size_t ri : members[patients[idx]]) records[ri].split = kSplitNames[s];
    }
  }
}

}  // namespace volscan
