#include "pnc/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pnc/error.hpp"

namespace pnc {

namespace {

std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

void append_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::size_t idx_dtype_size(IdxType t) { return t == IdxType::ubyte ? 1 : 4; }

/// Bounds-checked little-endian cursor over a byte span.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) throw DataError(std::string("TNSR: truncated ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T le(const char* what) {
    auto s = take(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(s[i]) << (8 * i));
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------- IDX

std::size_t IdxHeader::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw DataError("IDX: truncated header");
  if (bytes[0] != 0x00 || bytes[1] != 0x00) throw DataError("IDX: bad magic");
  IdxHeader header;
  if (bytes[2] == 0x08) {
    header.dtype = IdxType::ubyte;
  } else if (bytes[2] == 0x0D) {
    header.dtype = IdxType::real32;
  } else {
    throw DataError("IDX: unsupported dtype code " + std::to_string(bytes[2]));
  }
  const std::size_t ndim = bytes[3];
  if (ndim == 0) throw DataError("IDX: zero dimensions");
  if (bytes.size() < 4 + 4 * ndim) throw DataError("IDX: truncated header");
  for (std::size_t i = 0; i < ndim; ++i) header.dims.push_back(read_u32_be(bytes.data() + 4 + 4 * i));
  return header;
}

IdxFile parse_idx(std::span<const std::uint8_t> bytes, bool rescale_ubyte) {
  IdxFile file;
  file.header = parse_idx_header(bytes);
  const auto& h = file.header;
  const std::size_t n = h.element_count();
  const std::size_t payload = n * idx_dtype_size(h.dtype);
  if (bytes.size() - h.header_bytes() < payload) throw DataError("IDX: truncated payload");
  if (bytes.size() - h.header_bytes() > payload) throw DataError("IDX: trailing bytes after payload");

  std::vector<std::size_t> shape(h.dims.begin(), h.dims.end());
  std::vector<float> values(n);
  const std::uint8_t* p = bytes.data() + h.header_bytes();
  if (h.dtype == IdxType::ubyte) {
    for (std::size_t i = 0; i < n; ++i) values[i] = rescale_ubyte ? p[i] / 255.0f : static_cast<float>(p[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(read_u32_be(p + 4 * i));
    if (!all_finite(values)) throw DataError("IDX: non-finite real payload");
  }
  file.tensor = Tensor(std::move(shape), std::move(values));
  return file;
}

ByteTensor parse_idx_bytes(std::span<const std::uint8_t> bytes) {
  const IdxHeader h = parse_idx_header(bytes);
  if (h.dtype != IdxType::ubyte) throw DataError("IDX: expected an unsigned-byte payload");
  const std::size_t n = h.element_count();
  if (bytes.size() - h.header_bytes() != n) throw DataError("IDX: payload length does not match dims");
  const auto* p = bytes.data() + h.header_bytes();
  return ByteTensor(std::vector<std::size_t>(h.dims.begin(), h.dims.end()), std::vector<std::uint8_t>(p, p + n));
}

std::vector<std::uint8_t> write_idx(const IdxHeader& header, const Tensor& tensor) {
  if (header.dims.empty()) throw std::invalid_argument("write_idx: empty dims");
  if (header.dims.size() > 255) throw std::invalid_argument("write_idx: too many dims");
  if (header.element_count() != tensor.size()) throw std::invalid_argument("write_idx: dims do not match tensor size");
  std::vector<std::uint8_t> out{0x00, 0x00, static_cast<std::uint8_t>(header.dtype),
                                static_cast<std::uint8_t>(header.dims.size())};
  out.reserve(header.header_bytes() + tensor.size() * idx_dtype_size(header.dtype));
  for (auto d : header.dims) append_u32_be(out, d);
  if (header.dtype == IdxType::ubyte) {
    for (float v : tensor.data()) {
      if (!(v >= 0.0f && v <= 255.0f) || std::floor(v) != v) {
        throw std::invalid_argument("write_idx: ubyte payload needs integral values in [0, 255]");
      }
      out.push_back(static_cast<std::uint8_t>(v));
    }
  } else {
    for (float v : tensor.data()) append_u32_be(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

// ---------------------------------------------------------------- TNSR

void TensorMap::add(std::string name, AnyTensor value) {
  if (contains(name)) throw std::invalid_argument("TensorMap: duplicate name '" + name + "'");
  if (name.size() > 0xFFFF) throw std::invalid_argument("TensorMap: name too long");
  entries_.push_back({std::move(name), std::move(value)});
}

bool TensorMap::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const NamedTensor& e) { return e.name == name; });
}

const AnyTensor& TensorMap::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw DataError("TNSR: missing entry '" + name + "'");
}

const Tensor& TensorMap::real(const std::string& name) const {
  const auto* t = std::get_if<Tensor>(&get(name));
  if (t == nullptr) throw DataError("TNSR: entry '" + name + "' is not real-valued");
  return *t;
}

const ByteTensor& TensorMap::bytes(const std::string& name) const {
  const auto* t = std::get_if<ByteTensor>(&get(name));
  if (t == nullptr) throw DataError("TNSR: entry '" + name + "' is not byte-valued");
  return *t;
}

void TensorMap::add_text(std::string name, const std::string& text) {
  add(std::move(name), ByteTensor({text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())));
}

std::string TensorMap::text(const std::string& name) const {
  const auto& b = bytes(name);
  return std::string(b.data().begin(), b.data().end());
}

std::vector<std::uint8_t> encode_container(const TensorMap& map) {
  std::vector<std::uint8_t> out{'T', 'N', 'S', 'R'};
  append_le<std::uint32_t>(out, kTnsrVersion);
  for (const auto& entry : map.entries()) {
    append_le<std::uint16_t>(out, static_cast<std::uint16_t>(entry.name.size()));
    out.insert(out.end(), entry.name.begin(), entry.name.end());
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          constexpr std::uint8_t dtype = std::is_same_v<T, std::uint8_t> ? 1 : 2;
          if (t.rank() > 255) throw std::invalid_argument("TNSR: rank too large");
          out.push_back(dtype);
          out.push_back(static_cast<std::uint8_t>(t.rank()));
          for (auto d : t.shape()) append_le<std::uint64_t>(out, d);
          if constexpr (dtype == 1) {
            out.insert(out.end(), t.data().begin(), t.data().end());
          } else {
            for (float v : t.data()) append_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
          }
        },
        entry.value);
  }
  return out;
}

TensorMap decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "TNSR", 4) != 0) throw DataError("TNSR: bad magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kTnsrVersion) throw DataError("TNSR: unsupported version " + std::to_string(version));

  TensorMap map;
  while (!r.done()) {
    const auto name_len = r.le<std::uint16_t>("name length");
    auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto dtype = r.le<std::uint8_t>("dtype");
    const auto ndim = r.le<std::uint8_t>("ndim");
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
      const auto d = r.le<std::uint64_t>("dims");
      // Reject extents that cannot possibly fit in the remaining bytes
      // before multiplying, so corrupted lengths never overflow.
      if (d != 0 && count > r.remaining() / d) throw DataError("TNSR: truncated payload for '" + name + "'");
      count *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    if (map.contains(name)) throw DataError("TNSR: duplicate name '" + name + "'");
    if (dtype == 1) {
      auto payload = r.take(count, "payload");
      map.add(name, ByteTensor(std::move(shape), std::vector<std::uint8_t>(payload.begin(), payload.end())));
    } else if (dtype == 2) {
      if (count > r.remaining() / 4) throw DataError("TNSR: truncated payload for '" + name + "'");
      auto payload = r.take(count * 4, "payload");
      std::vector<float> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t{payload[4 * i + b]} << (8 * b);
        values[i] = std::bit_cast<float>(bits);
      }
      map.add(name, Tensor(std::move(shape), std::move(values)));
    } else {
      throw DataError("TNSR: unknown dtype " + std::to_string(dtype) + " for '" + name + "'");
    }
  }
  return map;
}

void write_container(const std::filesystem::path& path, const TensorMap& map) {
  write_file_bytes(path, encode_container(map));
}

TensorMap read_container(const std::filesystem::path& path) { return decode_container(read_file_bytes(path)); }

// ---------------------------------------------------------------- annotations

namespace {

SceneAnnotation annotation_from_json(const nlohmann::json& j) {
  SceneAnnotation a;
  a.image_id = j.at("image_id").get<std::string>();
  a.class_id = j.at("class_id").get<int>();
  a.count = j.at("count").get<int>();
  for (const auto& b : j.at("boxes")) {
    if (!b.is_array() || b.size() != 4) throw DataError("box must be [x_min,y_min,x_max,y_max]");
    BBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    if (!box.valid()) throw DataError("box has min > max");
    a.boxes.push_back(box);
  }
  if (a.count < 0) throw DataError("negative count");
  if (static_cast<std::size_t>(a.count) != a.boxes.size()) {
    throw DataError("count " + std::to_string(a.count) + " does not match " + std::to_string(a.boxes.size()) +
                    " boxes");
  }
  return a;
}

}  // namespace

std::vector<SceneAnnotation> parse_annotations(const std::string& text) {
  std::vector<SceneAnnotation> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(annotation_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError("annotations line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string format_annotations(const std::vector<SceneAnnotation>& annotations) {
  std::string out;
  for (const auto& a : annotations) {
    if (static_cast<std::size_t>(a.count) != a.boxes.size()) {
      throw std::invalid_argument("annotation " + a.image_id + ": count does not match boxes");
    }
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : a.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    nlohmann::ordered_json j;
    j["image_id"] = a.image_id;
    j["class_id"] = a.class_id;
    j["count"] = a.count;
    j["boxes"] = boxes;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SceneAnnotation> load_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_text_file(path));
}

void save_annotations(const std::filesystem::path& path, const std::vector<SceneAnnotation>& annotations) {
  write_text_file(path, format_annotations(annotations));
}

void check_annotation_bounds(const SceneAnnotation& annotation, int width, int height) {
  for (const auto& b : annotation.boxes) {
    if (b.x_min < 0 || b.y_min < 0 || b.x_max > width || b.y_max > height) {
      throw DataError("annotation " + annotation.image_id + ": box outside image bounds");
    }
  }
}

// ---------------------------------------------------------------- files

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("PNC_DATA_DIR"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / path;
  }
  return path;
}

}  // namespace pnc
