#include "milab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "milab/error.hpp"

namespace milab {

namespace {

constexpr std::string_view kMagic = "MILABCKP";

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    v = to_little(v);
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw ParseError("checkpoint truncated at byte " + std::to_string(pos_) +
                       " while reading " + what);
    }
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const MilModel& model, const Json& provenance) {
  Writer w;
  w.bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string header =
      Json{{"model", to_json(model.config())}, {"provenance", provenance}}.dump();
  w.put<std::uint64_t>(header.size());
  w.bytes(header);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.put<std::uint64_t>(d);
    for (double v : p.value.data()) w.put<double>(v);
  }
  w.put<std::uint64_t>(fnv1a(w.str()));
  return std::move(w.str());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw VersionError("not a milab checkpoint (bad magic)");
  }
  r.bytes(kMagic.size(), "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 8) throw ParseError("checkpoint truncated");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (to_little(stored) != fnv1a(bytes.substr(0, body))) {
    throw ParseError("checkpoint checksum mismatch (file truncated or damaged)");
  }

  const auto header_len = r.get<std::uint64_t>("header length");
  Json header;
  try {
    header = Json::parse(r.bytes(header_len, "header"));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.contains("model")) throw ParseError("checkpoint header lacks 'model'");
  MilConfig config = mil_config_from_json(header["model"]);

  const auto count = r.get<std::uint32_t>("parameter count");
  std::vector<Parameter> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    Parameter p;
    p.name = std::string(r.bytes(r.get<std::uint32_t>("name length"), "name"));
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint64_t>("dim"));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.get<double>("values");
    p.value = Tensor(std::move(shape), std::move(values));
    params.push_back(std::move(p));
  }
  if (r.pos() != body) throw ParseError("trailing bytes in checkpoint");
  return {MilModel(config, std::move(params)),
          header.value("provenance", Json::object())};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace milab
