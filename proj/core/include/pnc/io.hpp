#pragma once

// Readers and writers for MNIST IDX streams, the TNSR tensor container and
// JSON-lines scene annotations. Every reader either returns a fully valid
// object or throws pnc::DataError.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pnc/tensor.hpp"

namespace pnc {

// ---------------------------------------------------------------- IDX

enum class IdxType : std::uint8_t { ubyte = 0x08, real32 = 0x0D };

struct IdxHeader {
  IdxType dtype = IdxType::ubyte;
  std::vector<std::uint32_t> dims;

  std::size_t ndim() const { return dims.size(); }
  /// The 32-bit magic number as conventionally quoted (e.g. 2051).
  std::uint32_t magic_value() const { return (static_cast<std::uint32_t>(dtype) << 8) | ndim(); }
  std::size_t element_count() const;
  std::size_t header_bytes() const { return 4 + 4 * dims.size(); }
  bool operator==(const IdxHeader&) const = default;
};

struct IdxFile {
  IdxHeader header;
  Tensor tensor;
};

/// Decodes only the header. Fails on bad magic or unsupported dtype.
IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes);

/// Decodes a full IDX stream. With rescale_ubyte, byte payloads map to
/// [0, 1] by dividing by 255; otherwise byte values are kept as 0..255.
IdxFile parse_idx(std::span<const std::uint8_t> bytes, bool rescale_ubyte = false);

/// Encodes header + tensor. Byte payloads require integral values in
/// [0, 255] (un-rescaled).
std::vector<std::uint8_t> write_idx(const IdxHeader& header, const Tensor& tensor);

/// IDX ubyte stream straight into a byte tensor (no float conversion).
ByteTensor parse_idx_bytes(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------- TNSR

using AnyTensor = std::variant<Tensor, ByteTensor>;

struct NamedTensor {
  std::string name;
  AnyTensor value;
  bool operator==(const NamedTensor&) const = default;
};

/// Ordered list of uniquely named tensors; order is preserved on disk.
class TensorMap {
 public:
  void add(std::string name, AnyTensor value);
  bool contains(const std::string& name) const;
  const AnyTensor& get(const std::string& name) const;
  const Tensor& real(const std::string& name) const;
  const ByteTensor& bytes(const std::string& name) const;

  /// Stores UTF-8 text as a rank-1 byte tensor.
  void add_text(std::string name, const std::string& text);
  std::string text(const std::string& name) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool operator==(const TensorMap&) const = default;

 private:
  std::vector<NamedTensor> entries_;
};

constexpr std::uint32_t kTnsrVersion = 1;

std::vector<std::uint8_t> encode_container(const TensorMap& map);
TensorMap decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const TensorMap& map);
TensorMap read_container(const std::filesystem::path& path);

// ---------------------------------------------------------------- annotations

struct SceneAnnotation {
  std::string image_id;
  int class_id = 0;
  int count = 0;
  std::vector<BBox> boxes;
  bool operator==(const SceneAnnotation&) const = default;
};

/// One JSON object per line; throws DataError naming the offending line.
std::vector<SceneAnnotation> parse_annotations(const std::string& text);
std::string format_annotations(const std::vector<SceneAnnotation>& annotations);

std::vector<SceneAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const std::vector<SceneAnnotation>& annotations);

/// Throws DataError when a box lies outside [0,width] x [0,height].
void check_annotation_bounds(const SceneAnnotation& annotation, int width, int height);

// ---------------------------------------------------------------- files

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Resolves relative dataset paths against $PNC_DATA_DIR when it is set.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace pnc
