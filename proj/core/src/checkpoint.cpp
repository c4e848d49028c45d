#include "demoe/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

namespace demoe::net {

std::string to_string(Taxonomy t) {
  switch (t) {
    case Taxonomy::conv1x1: return "conv1x1";
    case Taxonomy::conv3x3: return "conv3x3";
    case Taxonomy::layernorm: return "layernorm";
    case Taxonomy::sca: return "sca";
    case Taxonomy::other: return "other";
    case Taxonomy::untagged: return "untagged";
  }
  return "untagged";
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::init: return "init";
    case Stage::stage1: return "stage1";
    case Stage::stage2: return "stage2";
    case Stage::baseline: return "baseline";
  }
  return "unknown";
}

void Checkpoint::add(ParamRecord record) {
  if (index_.contains(record.name)) {
    throw ArgumentError("checkpoint: duplicate parameter '" + record.name + "'");
  }
  index_.emplace(record.name, records_.size());
  records_.push_back(std::move(record));
}

const ParamRecord* Checkpoint::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const ParamRecord& Checkpoint::at(std::string_view name) const {
  return records_[index_of(name)];
}

ParamRecord& Checkpoint::at(std::string_view name) {
  return records_[index_of(name)];
}

std::size_t Checkpoint::index_of(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ArgumentError("checkpoint: missing parameter '" + std::string(name) + "'");
  }
  return it->second;
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t total = 0;
  for (const auto& r : records_) total += r.value.numel();
  return total;
}

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'M', 'O', 'E'};
constexpr std::uint32_t kConfigFields = 11;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Code::truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f = 0.0f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.reserve(64 + ckpt.parameter_count() * 4 + ckpt.size() * 48);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kCheckpointVersion);
  const ArchConfig& c = ckpt.config();
  put_u32(out, kConfigFields * 4);
  put_u32(out, c.base_width);
  put_u32(out, c.num_levels);
  put_u32(out, c.enc_blocks);
  put_u32(out, c.mid_blocks);
  put_u32(out, c.dec_blocks);
  put_u32(out, c.num_experts);
  put_u32(out, c.expert_slots);
  put_u32(out, c.top_k);
  put_u32(out, static_cast<std::uint32_t>(c.fusion));
  put_u32(out, c.router ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(ckpt.stage()));
  put_u32(out, static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& r : ckpt.records()) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.taxonomy));
    out.push_back(0);  // dtype f32
    out.push_back(4);  // rank
    const Shape& s = r.value.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : r.value.data()) put_f32(out, f);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Code = CheckpointError::Code;
  Reader rd(bytes);
  rd.need(4, "magic");
  const std::string magic = rd.str(4, "magic");
  if (magic != std::string(kMagic.begin(), kMagic.end())) {
    throw CheckpointError(Code::bad_magic, "not a checkpoint: bad magic bytes");
  }
  const std::uint32_t version = rd.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Code::version_mismatch,
                          "checkpoint version " + std::to_string(version) +
                              " is not supported (this build reads version " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t config_bytes = rd.u32("config size");
  if (config_bytes != kConfigFields * 4) {
    throw CheckpointError(Code::invalid, "unexpected config block size " + std::to_string(config_bytes));
  }
  ArchConfig c;
  c.base_width = rd.u32("config");
  c.num_levels = rd.u32("config");
  c.enc_blocks = rd.u32("config");
  c.mid_blocks = rd.u32("config");
  c.dec_blocks = rd.u32("config");
  c.num_experts = rd.u32("config");
  c.expert_slots = rd.u32("config");
  c.top_k = rd.u32("config");
  const std::uint32_t fusion = rd.u32("config");
  const std::uint32_t router = rd.u32("config");
  const std::uint32_t stage = rd.u32("config");
  if (fusion > 2 || router > 1 || stage > 3) {
    throw CheckpointError(Code::invalid, "checkpoint config block holds out-of-range enum values");
  }
  c.fusion = static_cast<FusionMode>(fusion);
  c.router = router == 1;
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw CheckpointError(Code::invalid, std::string("checkpoint config invalid: ") + e.what());
  }

  Checkpoint ckpt(c, static_cast<Stage>(stage));
  const std::uint32_t count = rd.u32("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = rd.u32("record name length");
    ParamRecord r;
    r.name = rd.str(name_len, "record name");
    const std::uint8_t tax = rd.u8("taxonomy");
    r.taxonomy = tax <= 4 ? static_cast<Taxonomy>(tax) : Taxonomy::untagged;
    const std::uint8_t dtype = rd.u8("dtype");
    if (dtype != 0) {
      throw CheckpointError(Code::invalid, "record '" + r.name + "' has unsupported dtype " +
                                               std::to_string(dtype));
    }
    const std::uint8_t rank = rd.u8("rank");
    if (rank != 4) {
      throw CheckpointError(Code::invalid, "record '" + r.name + "' has rank " +
                                               std::to_string(rank) + ", expected 4");
    }
    Shape s;
    s.n = rd.u32("dims");
    s.c = rd.u32("dims");
    s.h = rd.u32("dims");
    s.w = rd.u32("dims");
    const std::size_t numel = s.numel();
    if (numel > rd.remaining() / 4) {
      throw CheckpointError(Code::truncated, "checkpoint truncated inside record '" + r.name + "'");
    }
    std::vector<float> data(numel);
    for (auto& f : data) f = rd.f32("payload");
    r.value = Tensor(s, std::move(data));
    if (ckpt.find(r.name) != nullptr) {
      throw CheckpointError(Code::invalid, "duplicate record '" + r.name + "'");
    }
    ckpt.add(std::move(r));
  }
  if (rd.remaining() != 0) {
    throw CheckpointError(Code::invalid, "trailing bytes after last record");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError(CheckpointError::Code::io, "cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError(CheckpointError::Code::io, "failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Code::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.config() == b.config()) || a.stage() != b.stage() || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ra = a.records()[i];
    const auto& rb = b.records()[i];
    if (ra.name != rb.name || ra.taxonomy != rb.taxonomy) return false;
    if (!demoe::bitwise_equal(ra.value, rb.value)) return false;
  }
  return true;
}

}  // namespace demoe::net
