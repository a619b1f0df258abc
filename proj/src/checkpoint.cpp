#include "sensorfuse/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "sensorfuse/errors.hpp"
#include "sensorfuse/serialization.hpp"

namespace sensorfuse::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little endian");

constexpr char kMagic[8] = {'S', 'F', 'U', 'S', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const model::Model& model) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  const std::string meta = model.config().to_json().dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(model.registry().count()));
  for (const auto& p : model.registry()) {
    put_u32(out, static_cast<std::uint32_t>(p->name().size()));
    out += p->name();
    put_u32(out, static_cast<std::uint32_t>(p->rows()));
    put_u32(out, static_cast<std::uint32_t>(p->cols()));
    out.append(reinterpret_cast<const char*>(p->value().data()), p->size() * sizeof(double));
  }
  return out;
}

model::Model deserialize(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::string meta = r.str(r.u32());
  model::ModelConfig cfg;
  try {
    cfg = model::ModelConfig::from_json(nlohmann::json::parse(meta));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata: ") + e.what());
  }
  model::Model m(cfg, 0);
  const std::uint32_t count = r.u32();
  if (count != m.registry().count()) throw IoError("checkpoint tensor count does not match model");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    auto& p = m.registry().at(i);
    if (p.name() != name || static_cast<std::uint32_t>(p.rows()) != rows ||
        static_cast<std::uint32_t>(p.cols()) != cols) {
      throw IoError("checkpoint tensor '" + name + "' does not match model layout");
    }
    r.read(p.value().data(), p.size() * sizeof(double));
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint tensors");
  return m;
}

void save(const std::filesystem::path& path, const model::Model& model) {
  io::write_file(path, serialize(model));
}

model::Model load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

}  // namespace sensorfuse::checkpoint
