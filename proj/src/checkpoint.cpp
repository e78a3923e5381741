#include "volscan/checkpoint.hpp"

#include <map>

namespace volscan {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

struct Entry {
  std::string name;
  const TensorF* tensor;
};

void append_section(std::string& buf, const std::vector<Entry>& entries) {
  put_u32(buf, std::uint32_t(entries.size()));
  std::uint64_t total = 0;
  for (const auto& e : entries) {
    put_u16(buf, std::uint16_t(e.name.size()));
    buf += e.name;
    buf.push_back(char(e.tensor->rank()));
    for (std::size_t d : e.tensor->shape()) put_u32(buf, std::uint32_t(d));
    total += e.tensor->size();
  }
  put_u64(buf, total);
  for (const auto& e : entries)
    for (std::size_t i = 0; i < e.tensor->size(); ++i) put_f32(buf, (*e.tensor)[i]);
}

// Validates names/shapes against the freshly built model, then fills values.
void read_section(ByteReader& r, const std::vector<Entry>& expected,
                  const std::vector<TensorF*>& targets, const char* what) {
  const std::uint32_t count = r.u32();
  if (count != expected.size())
    throw ValueError(std::string("checkpoint: ") + what + " manifest has " +
                     std::to_string(count) + " entries, model expects " +
                     std::to_string(expected.size()));
  std::uint64_t total = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (std::uint8_t i = 0; i < rank; ++i) shape[i] = r.u32();
    if (name != expected[k].name || shape != expected[k].tensor->shape())
      throw ValueError(std::string("checkpoint: ") + what + " manifest entry " +
                       std::to_string(k) + " is " + name + shape_str(shape) +
                       ", model expects " + expected[k].name +
                       shape_str(expected[k].tensor->shape()));
    total += numel_of(shape);
  }
  const std::uint64_t declared = r.u64();
  if (declared != total)
    throw IoError(std::string("checkpoint: ") + what + " declares " + std::to_string(declared) +
                  " floats, manifest sums to " + std::to_string(total));
  for (std::uint32_t k = 0; k < count; ++k) r.read_f32(targets[k]->data(), targets[k]->size());
}

std::map<std::string, std::string> parse_config_block(const std::string& block) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < block.size()) {
    std::size_t eol = block.find('\n', pos);
    if (eol == std::string::npos) eol = block.size();
    const std::string line = block.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("checkpoint: malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void save_checkpoint(Model<float>& model, const std::filesystem::path& path) {
  const ModelConfig& cfg = model.config();
  std::string config_block;
  config_block += std::string("model=") + to_string(cfg.kind) + "\n";
  config_block += "filters=" + std::to_string(base_filters(cfg.kind)) + "\n";
  config_block += "input_dims=" + std::to_string(cfg.depth) + "," + std::to_string(cfg.height) +
                  "," + std::to_string(cfg.width) + "\n";
  config_block += "seed=" + std::to_string(cfg.init_seed) + "\n";

  std::string buf;
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u32(buf, std::uint32_t(config_block.size()));
  buf += config_block;

  std::vector<Entry> params;
  for (auto* p : model.params()) params.push_back({p->name, &p->value});
  append_section(buf, params);

  std::vector<Entry> stats;
  for (auto& s : model.stats()) stats.push_back({s.name, s.tensor});
  append_section(buf, stats);

  atomic_write_file(path, buf);
}

std::unique_ptr<Model<float>> load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, "checkpoint " + path.string());
  if (r.bytes(4) != std::string(kMagic, 4))
    throw IoError("checkpoint " + path.string() + ": bad magic (not a VSCK file)");
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw IoError("checkpoint " + path.string() + ": unsupported version " +
                  std::to_string(version));
  const std::uint32_t config_len = r.u32();
  const auto kv = parse_config_block(r.bytes(config_len));

  const auto need = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end())
      throw ValueError("checkpoint " + path.string() + ": missing config key '" + key + "'");
    return it->second;
  };
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(need("model"));
  const std::string dims = need("input_dims");
  if (std::sscanf(dims.c_str(), "%zu,%zu,%zu", &cfg.depth, &cfg.height, &cfg.width) != 3)
    throw ValueError("checkpoint " + path.string() + ": bad input_dims '" + dims + "'");
  cfg.init_seed = std::strtoull(need("seed").c_str(), nullptr, 10);
  const std::string filters = need("filters");
  if (filters != std::to_string(base_filters(cfg.kind)))
    throw ValueError("checkpoint " + path.string() + ": filters=" + filters +
                     " does not match architecture " + to_string(cfg.kind));

  auto model = make_model<float>(cfg);

  std::vector<Entry> params;
  std::vector<TensorF*> param_targets;
  for (auto* p : model->params()) {
    params.push_back({p->name, &p->value});
    param_targets.push_back(&p->value);
  }
  read_section(r, params, param_targets, "parameter");

  std::vector<Entry> stats;
  std::vector<TensorF*> stat_targets;
  for (auto& s : model->stats()) {
    stats.push_back({s.name, s.tensor});
    stat_targets.push_back(s.tensor);
  }
  read_section(r, stats, stat_targets, "stats");

  if (!r.exhausted())
    throw IoError("checkpoint " + path.string() + ": " + std::to_string(r.remaining()) +
                  " trailing bytes");
  return model;
}

}  // namespace volscan
