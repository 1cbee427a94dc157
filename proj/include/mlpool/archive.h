// Copyright (c) 2026 The mlpool Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPOOL_ARCHIVE_H_
#define MLPOOL_ARCHIVE_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mlpool {

// Named array stored in a TensorArchive.
struct ArchiveEntry {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

// Little-endian binary container shared by checkpoints, backend models and
// binary embedding files. Layout:
//
//   magic        4 bytes (distinguishes checkpoint / backend / embeddings)
//   version      u32
//   meta_count   u32, then per item: u32 len, key bytes, u32 len, value bytes
//   entry_count  u64, then per entry:
//                  u32 len, name bytes, u32 rank, rank x u64 dims,
//                  prod(dims) x f64 (IEEE-754 bit pattern, little-endian)
//   checksum     u32 CRC-32 of every preceding byte
struct TensorArchive {
  static constexpr std::uint32_t kVersion = 1;

  std::string magic;  // exactly 4 bytes
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ArchiveEntry> entries;

  // Returns nullptr when absent.
  const std::string* FindMeta(std::string_view key) const;
  const ArchiveEntry* FindEntry(std::string_view name) const;
  // Throws FormatError(kTruncated) naming the key when absent.
  const std::string& Meta(std::string_view key) const;
};

std::string SerializeArchive(const TensorArchive& archive);

// Throws FormatError with a distinct kind for bad magic, version mismatch,
// truncation and checksum failure. Nothing is returned on failure.
TensorArchive ParseArchive(std::string_view bytes,
                           std::string_view expected_magic);

// Writes to "<path>.tmp" then renames, so a failed write never leaves a
// partial file at |path|.
void WriteFileAtomic(const std::string& path, std::string_view bytes);
std::string ReadFileBytes(const std::string& path);

void SaveArchive(const TensorArchive& archive, const std::string& path);
TensorArchive LoadArchive(const std::string& path,
                          std::string_view expected_magic);

std::uint32_t Crc32(std::string_view bytes);

// Little-endian primitive encoding helpers, also used by the feature
// container.
void AppendU32(std::string* out, std::uint32_t v);
void AppendU64(std::string* out, std::uint64_t v);
void AppendF64(std::string* out, double v);
void AppendF32(std::string* out, float v);

// Sequential reader over a byte buffer; every read past the end throws
// FormatError(kTruncated).
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t U32();
  std::uint64_t U64();
  double F64();
  float F32();
  std::string_view Bytes(std::size_t n);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace mlpool

#endif  // MLPOOL_ARCHIVE_H_
