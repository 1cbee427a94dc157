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

#include "mlpool/archive.h"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mlpool/errors.h"

namespace mlpool {

namespace {

using Kind = FormatError::Kind;

std::uint64_t CheckedProduct(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) n *= d;
  return n;
}

}  // namespace

std::uint32_t Crc32(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void AppendU32(std::string* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void AppendU64(std::string* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void AppendF64(std::string* out, double v) {
  AppendU64(out, std::bit_cast<std::uint64_t>(v));
}

void AppendF32(std::string* out, float v) {
  AppendU32(out, std::bit_cast<std::uint32_t>(v));
}

std::string_view ByteReader::Bytes(std::size_t n) {
  if (n > remaining()) {
    throw FormatError(Kind::kTruncated,
                      "truncated input: needed " + std::to_string(n) +
                          " bytes at offset " + std::to_string(pos_) +
                          ", only " + std::to_string(remaining()) + " left");
  }
  std::string_view out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t ByteReader::U32() {
  std::string_view b = Bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  }
  return v;
}

std::uint64_t ByteReader::U64() {
  std::string_view b = Bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  }
  return v;
}

double ByteReader::F64() { return std::bit_cast<double>(U64()); }
float ByteReader::F32() { return std::bit_cast<float>(U32()); }

const std::string* TensorArchive::FindMeta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return &v;
  }
  return nullptr;
}

const ArchiveEntry* TensorArchive::FindEntry(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const std::string& TensorArchive::Meta(std::string_view key) const {
  const std::string* v = FindMeta(key);
  if (v == nullptr) {
    throw FormatError(Kind::kTruncated,
                      "archive is missing metadata key '" + std::string(key) + "'");
  }
  return *v;
}

std::string SerializeArchive(const TensorArchive& archive) {
  if (archive.magic.size() != 4) {
    throw ContractError("archive magic must be 4 bytes, got '" + archive.magic + "'");
  }
  std::string out = archive.magic;
  AppendU32(&out, TensorArchive::kVersion);
  AppendU32(&out, static_cast<std::uint32_t>(archive.metadata.size()));
  for (const auto& [k, v] : archive.metadata) {
    AppendU32(&out, static_cast<std::uint32_t>(k.size()));
    out += k;
    AppendU32(&out, static_cast<std::uint32_t>(v.size()));
    out += v;
  }
  AppendU64(&out, archive.entries.size());
  for (const auto& e : archive.entries) {
    if (CheckedProduct(e.shape) != e.values.size()) {
      throw ContractError("archive entry '" + e.name +
                          "' has shape inconsistent with its value count");
    }
    AppendU32(&out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    AppendU32(&out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::uint64_t d : e.shape) AppendU64(&out, d);
    for (double v : e.values) AppendF64(&out, v);
  }
  AppendU32(&out, Crc32(out));
  return out;
}

TensorArchive ParseArchive(std::string_view bytes,
                           std::string_view expected_magic) {
  if (bytes.size() < 4) {
    throw FormatError(Kind::kTruncated, "file too short to hold a header");
  }
  if (bytes.substr(0, 4) != expected_magic) {
    throw FormatError(Kind::kBadMagic, "bad magic: expected '" +
                                           std::string(expected_magic) + "'");
  }
  if (bytes.size() < 12) {
    throw FormatError(Kind::kTruncated, "file too short to hold a header");
  }
  ByteReader header(bytes.substr(4, 4));
  std::uint32_t version = header.U32();
  if (version != TensorArchive::kVersion) {
    throw FormatError(Kind::kVersionMismatch,
                      "unsupported archive version " + std::to_string(version) +
                          " (expected " + std::to_string(TensorArchive::kVersion) + ")");
  }

  TensorArchive archive;
  archive.magic = std::string(expected_magic);
  ByteReader in(bytes);
  in.Bytes(8);
  std::uint32_t meta_count = in.U32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key(in.Bytes(in.U32()));
    std::string value(in.Bytes(in.U32()));
    archive.metadata.emplace_back(std::move(key), std::move(value));
  }
  std::uint64_t entry_count = in.U64();
  for (std::uint64_t i = 0; i < entry_count; ++i) {
    ArchiveEntry e;
    e.name = std::string(in.Bytes(in.U32()));
    std::uint32_t rank = in.U32();
    if (rank > 8) {
      throw FormatError(Kind::kTruncated, "implausible rank in entry '" + e.name + "'");
    }
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(in.U64());
    std::uint64_t n = CheckedProduct(e.shape);
    if (n > in.remaining() / 8) {
      throw FormatError(Kind::kTruncated, "truncated values in entry '" + e.name + "'");
    }
    e.values.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) e.values[k] = in.F64();
    archive.entries.push_back(std::move(e));
  }
  std::size_t body_size = in.position();
  std::uint32_t stored = in.U32();
  if (in.remaining() != 0) {
    throw FormatError(Kind::kChecksum, "trailing bytes after checksum");
  }
  if (stored != Crc32(bytes.substr(0, body_size))) {
    throw FormatError(Kind::kChecksum, "checksum mismatch");
  }
  return archive;
}

void WriteFileAtomic(const std::string& path, std::string_view bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void SaveArchive(const TensorArchive& archive, const std::string& path) {
  WriteFileAtomic(path, SerializeArchive(archive));
}

TensorArchive LoadArchive(const std::string& path,
                          std::string_view expected_magic) {
  return ParseArchive(ReadFileBytes(path), expected_magic);
}

}  // namespace mlpool
