#include "panoscene/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "panoscene/scenegen.hpp"

static_assert(std::endian::native == std::endian::little,
              "container serialization assumes a little-endian host");

namespace pano::io {

namespace {

constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kElemF32 = 0;
constexpr std::uint8_t kElemU8 = 1;

// ---- hashes ----------------------------------------------------------------

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}

std::uint32_t rotl32(std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

// ---- byte stream helpers ---------------------------------------------------

struct Writer {
  std::vector<std::uint8_t> buf;
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
};

struct Reader {
  const std::uint8_t* p;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > size) throw FormatError("truncated file: header ends early");
  }
  std::uint8_t u8() {
    need(1);
    return p[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

// ---- generic chunked container ----------------------------------------------

struct Chunk {
  std::string name;
  std::uint8_t elem = kElemF32;
  std::uint32_t planes = 1;
  std::vector<std::uint8_t> bytes;
};

struct Container {
  std::uint32_t face_w = 0, face_h = 0, face_count = 0;
  std::vector<Chunk> chunks;
};

std::vector<std::uint8_t> encode_container(const char magic[4], const Container& c) {
  Writer w;
  w.bytes(magic, 4);
  w.u16(kVersion);
  w.u16(0);
  w.u32(c.face_w);
  w.u32(c.face_h);
  w.u32(c.face_count);
  w.u32(static_cast<std::uint32_t>(c.chunks.size()));
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < c.chunks.size(); ++i) {
    const Chunk& ch = c.chunks[i];
    if (ch.name.empty() || ch.name.size() > 255)
      throw std::invalid_argument("container: bad channel name '" + ch.name + "'");
    for (std::size_t j = 0; j < i; ++j)
      if (c.chunks[j].name == ch.name)
        throw std::invalid_argument("container: duplicate channel '" + ch.name + "'");
    w.u16(static_cast<std::uint16_t>(ch.name.size()));
    w.bytes(ch.name.data(), ch.name.size());
    w.u8(ch.elem);
    w.u8(0);
    w.u32(ch.planes);
    w.u64(offset);
    w.u64(ch.bytes.size());
    offset += ch.bytes.size();
  }
  std::vector<std::uint8_t> payload;
  payload.reserve(offset);
  for (const Chunk& ch : c.chunks) payload.insert(payload.end(), ch.bytes.begin(), ch.bytes.end());
  w.bytes(payload.data(), payload.size());
  w.u32(crc32(payload.data(), payload.size()));
  return std::move(w.buf);
}

Container decode_container(const char magic[4], const std::uint8_t* data, std::size_t size) {
  Reader r{data, size};
  if (size < 4) throw FormatError("truncated file: shorter than the magic");
  if (std::memcmp(data, magic, 4) != 0)
    throw FormatError(std::string("bad magic: expected ") + std::string(magic, 4));
  r.pos = 4;
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  if (r.u16() != 0) throw FormatError("bad header padding");
  Container c;
  c.face_w = r.u32();
  c.face_h = r.u32();
  c.face_count = r.u32();
  const std::uint32_t n = r.u32();
  if (n > 4096) throw FormatError("implausible channel count " + std::to_string(n));

  struct Entry {
    std::string name;
    std::uint8_t elem;
    std::uint32_t planes;
    std::uint64_t offset, length;
  };
  std::vector<Entry> entries;
  entries.reserve(n);
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    Entry e;
    const std::uint16_t name_len = r.u16();
    e.name = r.str(name_len);
    if (e.name.empty()) throw FormatError("empty channel name");
    e.elem = r.u8();
    if (e.elem != kElemF32 && e.elem != kElemU8)
      throw FormatError("bad element type for channel '" + e.name + "'");
    if (r.u8() != 0) throw FormatError("bad directory padding");
    e.planes = r.u32();
    e.offset = r.u64();
    e.length = r.u64();
    if (e.length > size) throw FormatError("channel '" + e.name + "' longer than the file");
    if (e.offset != expected_offset)
      throw FormatError("non-contiguous payload at channel '" + e.name + "'");
    expected_offset += e.length;
    if (expected_offset > size) throw FormatError("channel payload overruns the file");
    for (const Entry& prev : entries)
      if (prev.name == e.name) throw FormatError("duplicate channel '" + e.name + "'");
    entries.push_back(std::move(e));
  }

  const std::size_t payload_start = r.pos;
  const std::uint64_t payload_len = expected_offset;
  if (payload_start + payload_len + 4 != size) {
    if (payload_start + payload_len + 4 > size) throw FormatError("truncated file: payload ends early");
    throw FormatError("trailing bytes after the checksum");
  }
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(data[payload_start + payload_len + i]) << (8 * i);
  const std::uint32_t computed = crc32(data + payload_start, payload_len);
  if (stored != computed) throw FormatError("CRC mismatch: payload is corrupt");

  for (const Entry& e : entries) {
    Chunk ch;
    ch.name = e.name;
    ch.elem = e.elem;
    ch.planes = e.planes;
    ch.bytes.assign(data + payload_start + e.offset, data + payload_start + e.offset + e.length);
    c.chunks.push_back(std::move(ch));
  }
  return c;
}

std::vector<std::uint8_t> f32_bytes(const Tensor& t) {
  std::vector<std::uint8_t> out(t.data.size() * 4);
  std::memcpy(out.data(), t.data.data(), out.size());
  return out;
}

Tensor f32_tensor(const std::vector<std::uint8_t>& bytes, std::vector<int> shape) {
  Tensor t = Tensor::zeros(shape);
  if (bytes.size() != t.data.size() * 4) throw FormatError("channel byte length mismatch");
  std::memcpy(t.data.data(), bytes.data(), bytes.size());
  return t;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open: " + path.string());
  const std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw FormatError("read failed: " + path.string());
  return bytes;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t n) {
  const auto& table = crc_table();
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::string sha1_hex(const void* data, std::size_t n) {
  std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
  std::vector<std::uint8_t> msg(static_cast<const std::uint8_t*>(data),
                                static_cast<const std::uint8_t*>(data) + n);
  msg.push_back(0x80);
  while (msg.size() % 64 != 56) msg.push_back(0);
  const std::uint64_t bits = static_cast<std::uint64_t>(n) * 8;
  for (int i = 7; i >= 0; --i) msg.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));

  for (std::size_t blk = 0; blk < msg.size(); blk += 64) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<std::uint32_t>(msg[blk + 4 * i]) << 24) |
             (static_cast<std::uint32_t>(msg[blk + 4 * i + 1]) << 16) |
             (static_cast<std::uint32_t>(msg[blk + 4 * i + 2]) << 8) |
             static_cast<std::uint32_t>(msg[blk + 4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rotl32(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      const std::uint32_t tmp = rotl32(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rotl32(b, 30);
      b = a;
      a = tmp;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
  }
  char out[41];
  std::snprintf(out, sizeof(out), "%08x%08x%08x%08x%08x", h[0], h[1], h[2], h[3], h[4]);
  return std::string(out, 40);
}

std::string sha1_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return sha1_hex(bytes.data(), bytes.size());
}

// ---- panorama container ------------------------------------------------------

namespace {

const char kPanoMagic[4] = {'P', '3', 'D', 'P'};
const char kCheckpointMagic[4] = {'P', '3', 'D', 'C'};

constexpr const char* kKnownChannels[] = {"color", "depth",         "normal", "pdist",
                                          "semantics", "mask", "scene_category"};

bool is_known_channel(const std::string& name) {
  for (const char* k : kKnownChannels)
    if (name == k) return true;
  return false;
}

void expect_shape(const Tensor& t, int c, int h, int w, const char* name) {
  if (t.shape != std::vector<int>{c, h, w})
    throw std::invalid_argument(std::string("encode_pano: bad shape for ") + name);
}

Chunk tensor_chunk(const std::string& name, const Tensor& t, std::uint32_t planes) {
  Chunk ch;
  ch.name = name;
  ch.elem = kElemF32;
  ch.planes = planes;
  ch.bytes = f32_bytes(t);
  return ch;
}

}  // namespace

std::vector<std::uint8_t> encode_pano(const Panorama& pano) {
  const int h = pano.height(), w = pano.width();
  if (pano.face_w < 1 || pano.face_h < 1)
    throw std::invalid_argument("encode_pano: empty panorama");
  expect_shape(pano.color, 3, h, w, "color");
  expect_shape(pano.depth, 1, h, w, "depth");
  expect_shape(pano.normal, 3, h, w, "normal");
  expect_shape(pano.pdist, 1, h, w, "pdist");
  expect_shape(pano.semantics, sem::kClassCount, h, w, "semantics");
  if (pano.mask.size() != static_cast<std::size_t>(pano.pixel_count()))
    throw std::invalid_argument("encode_pano: bad mask size");
  if (pano.scene_category < 0 || pano.scene_category >= sem::kSceneCount)
    throw std::invalid_argument("encode_pano: scene category out of range");

  Container c;
  c.face_w = static_cast<std::uint32_t>(pano.face_w);
  c.face_h = static_cast<std::uint32_t>(pano.face_h);
  c.face_count = 4;
  c.chunks.push_back(tensor_chunk("color", pano.color, 3));
  c.chunks.push_back(tensor_chunk("depth", pano.depth, 1));
  c.chunks.push_back(tensor_chunk("normal", pano.normal, 3));
  c.chunks.push_back(tensor_chunk("pdist", pano.pdist, 1));
  c.chunks.push_back(tensor_chunk("semantics", pano.semantics, sem::kClassCount));
  {
    Chunk ch;
    ch.name = "mask";
    ch.elem = kElemU8;
    ch.planes = 1;
    ch.bytes.assign(pano.mask.begin(), pano.mask.end());
    c.chunks.push_back(std::move(ch));
  }
  {
    Chunk ch;
    ch.name = "scene_category";
    ch.elem = kElemU8;
    ch.planes = 1;
    ch.bytes.push_back(static_cast<std::uint8_t>(pano.scene_category));
    c.chunks.push_back(std::move(ch));
  }
  for (const auto& [name, t] : pano.extra) {
    if (name.rfind("u8:", 0) == 0) {
      const std::string raw = name.substr(3);
      if (raw.empty() || is_known_channel(raw))
        throw std::invalid_argument("encode_pano: bad extra channel name '" + name + "'");
      Chunk ch;
      ch.name = raw;
      ch.elem = kElemU8;
      ch.planes = 1;
      ch.bytes.reserve(t.data.size());
      for (float v : t.data) {
        if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v))
          throw std::invalid_argument("encode_pano: '" + name + "' holds non-byte values");
        ch.bytes.push_back(static_cast<std::uint8_t>(v));
      }
      c.chunks.push_back(std::move(ch));
    } else {
      if (is_known_channel(name))
        throw std::invalid_argument("encode_pano: extra channel shadows '" + name + "'");
      if (t.shape.size() != 3 || t.shape[1] != h || t.shape[2] != w)
        throw std::invalid_argument("encode_pano: extra channel '" + name +
                                    "' must be (C,H,W) at panorama size");
      c.chunks.push_back(tensor_chunk(name, t, static_cast<std::uint32_t>(t.shape[0])));
    }
  }
  return encode_container(kPanoMagic, c);
}

Panorama decode_pano(const std::uint8_t* data, std::size_t size) {
  const Container c = decode_container(kPanoMagic, data, size);
  if (c.face_count != 4)
    throw FormatError("face count " + std::to_string(c.face_count) + " (expected 4)");
  if (c.face_w < 1 || c.face_w > 4096 || c.face_h < 1 || c.face_h > 4096)
    throw FormatError("implausible face size");
  const int fw = static_cast<int>(c.face_w), fh = static_cast<int>(c.face_h);
  const int h = fh, w = 4 * fw;
  const std::uint64_t hw = static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(w);

  Panorama p;
  p.face_w = fw;
  p.face_h = fh;
  bool seen[7] = {};
  for (const Chunk& ch : c.chunks) {
    if (ch.name == "color" || ch.name == "depth" || ch.name == "normal" ||
        ch.name == "pdist" || ch.name == "semantics") {
      const int planes = ch.name == "color" || ch.name == "normal"
                             ? 3
                             : (ch.name == "semantics" ? sem::kClassCount : 1);
      if (ch.elem != kElemF32 || ch.planes != static_cast<std::uint32_t>(planes))
        throw FormatError("channel '" + ch.name + "' has the wrong type");
      if (ch.bytes.size() != hw * static_cast<std::uint64_t>(planes) * 4)
        throw FormatError("channel '" + ch.name + "' has the wrong length");
      Tensor t = f32_tensor(ch.bytes, {planes, h, w});
      if (ch.name == "color") {
        p.color = std::move(t);
        seen[0] = true;
      } else if (ch.name == "depth") {
        p.depth = std::move(t);
        seen[1] = true;
      } else if (ch.name == "normal") {
        p.normal = std::move(t);
        seen[2] = true;
      } else if (ch.name == "pdist") {
        p.pdist = std::move(t);
        seen[3] = true;
      } else {
        p.semantics = std::move(t);
        seen[4] = true;
      }
    } else if (ch.name == "mask") {
      if (ch.elem != kElemU8 || ch.planes != 1) throw FormatError("channel 'mask' has the wrong type");
      if (ch.bytes.size() != hw) throw FormatError("channel 'mask' has the wrong length");
      for (std::uint8_t v : ch.bytes)
        if (v > 1) throw FormatError("channel 'mask' holds non-boolean values");
      p.mask.assign(ch.bytes.begin(), ch.bytes.end());
      seen[5] = true;
    } else if (ch.name == "scene_category") {
      if (ch.elem != kElemU8 || ch.planes != 1 || ch.bytes.size() != 1)
        throw FormatError("channel 'scene_category' has the wrong shape");
      if (ch.bytes[0] >= sem::kSceneCount) throw FormatError("scene category out of range");
      p.scene_category = ch.bytes[0];
      seen[6] = true;
    } else if (ch.elem == kElemF32) {
      if (ch.planes < 1 || ch.bytes.size() != hw * ch.planes * 4)
        throw FormatError("unknown channel '" + ch.name + "' has an inconsistent length");
      p.extra[ch.name] = f32_tensor(ch.bytes, {static_cast<int>(ch.planes), h, w});
    } else {
      if (ch.planes != 1)
        throw FormatError("unknown channel '" + ch.name + "' has an inconsistent shape");
      Tensor t = Tensor::zeros({1, 1, static_cast<int>(ch.bytes.size())});
      for (std::size_t i = 0; i < ch.bytes.size(); ++i) t.data[i] = ch.bytes[i];
      p.extra["u8:" + ch.name] = std::move(t);
    }
  }
  for (int i = 0; i < 7; ++i)
    if (!seen[i])
      throw FormatError(std::string("missing channel '") + kKnownChannels[i] + "'");
  return p;
}

void write_pano(const std::filesystem::path& path, const Panorama& pano) {
  write_file(path, encode_pano(pano));
}

Panorama read_pano(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_pano(bytes.data(), bytes.size());
}

// ---- checkpoint container ----------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Container c;
  {
    Chunk meta;
    meta.name = "meta";
    meta.elem = kElemU8;
    meta.planes = 1;
    const std::string dumped = ck.meta.dump();
    meta.bytes.assign(dumped.begin(), dumped.end());
    c.chunks.push_back(std::move(meta));
  }
  for (const auto& [name, t] : ck.tensors) {
    if (name == "meta" || name.empty())
      throw std::invalid_argument("encode_checkpoint: bad tensor name '" + name + "'");
    Chunk ch;
    ch.name = name;
    ch.elem = kElemF32;
    ch.planes = 1;
    Writer w;
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u64(static_cast<std::uint64_t>(d));
    w.bytes(t.data.data(), t.data.size() * 4);
    ch.bytes = std::move(w.buf);
    c.chunks.push_back(std::move(ch));
  }
  return encode_container(kCheckpointMagic, c);
}

Checkpoint decode_checkpoint(const std::uint8_t* data, std::size_t size) {
  const Container c = decode_container(kCheckpointMagic, data, size);
  Checkpoint ck;
  bool saw_meta = false;
  for (const Chunk& ch : c.chunks) {
    if (ch.name == "meta") {
      ck.meta = nlohmann::json::parse(ch.bytes.begin(), ch.bytes.end(), nullptr, false);
      if (ck.meta.is_discarded()) throw FormatError("checkpoint meta is not valid JSON");
      saw_meta = true;
      continue;
    }
    Reader r{ch.bytes.data(), ch.bytes.size()};
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError("tensor '" + ch.name + "' has implausible rank");
    std::vector<int> shape;
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      const std::uint64_t d = r.u64();
      if (d < 1 || d > (1u << 24)) throw FormatError("tensor '" + ch.name + "' has a bad dim");
      numel *= static_cast<std::int64_t>(d);
      if (numel > (std::int64_t{1} << 31))
        throw FormatError("tensor '" + ch.name + "' is implausibly large");
      shape.push_back(static_cast<int>(d));
    }
    if (ch.bytes.size() != r.pos + static_cast<std::size_t>(numel) * 4)
      throw FormatError("tensor '" + ch.name + "' has the wrong payload length");
    Tensor t = Tensor::zeros(shape);
    std::memcpy(t.data.data(), ch.bytes.data() + r.pos, static_cast<std::size_t>(numel) * 4);
    ck.tensors.emplace_back(ch.name, std::move(t));
  }
  if (!saw_meta) throw FormatError("checkpoint is missing its meta chunk");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes.data(), bytes.size());
}

// ---- checkpoint bridges -------------------------------------------------------

namespace {

nlohmann::json config_to_json(const model::GeneratorConfig& cfg) {
  nlohmann::json j;
  j["face_w"] = cfg.face_w;
  j["face_h"] = cfg.face_h;
  j["hfov_deg"] = cfg.hfov_deg;
  j["vfov_deg"] = cfg.vfov_deg;
  j["inputs"] = cfg.inputs;
  j["outputs"] = cfg.outputs;
  j["stream_widths"] = std::vector<int>(cfg.stream_widths.begin(), cfg.stream_widths.end());
  j["joint_widths"] = std::vector<int>(cfg.joint_widths.begin(), cfg.joint_widths.end());
  j["disc_widths"] = std::vector<int>(cfg.disc_widths.begin(), cfg.disc_widths.end());
  j["scene_hidden"] = cfg.scene_hidden;
  j["dropout_rate"] = cfg.dropout_rate;
  j["conditional_disc"] = cfg.conditional_disc;
  return j;
}

template <std::size_t N>
void array_from_json(const nlohmann::json& j, const char* key, std::array<int, N>& out) {
  const auto v = j.at(key).get<std::vector<int>>();
  if (v.size() != N) throw FormatError(std::string("checkpoint config: bad ") + key);
  std::copy(v.begin(), v.end(), out.begin());
}

model::GeneratorConfig config_from_json(const nlohmann::json& j) {
  model::GeneratorConfig cfg;
  try {
    cfg.face_w = j.at("face_w").get<int>();
    cfg.face_h = j.at("face_h").get<int>();
    cfg.hfov_deg = j.at("hfov_deg").get<double>();
    cfg.vfov_deg = j.at("vfov_deg").get<double>();
    cfg.inputs = j.at("inputs").get<std::vector<std::string>>();
    cfg.outputs = j.at("outputs").get<std::vector<std::string>>();
    array_from_json(j, "stream_widths", cfg.stream_widths);
    array_from_json(j, "joint_widths", cfg.joint_widths);
    array_from_json(j, "disc_widths", cfg.disc_widths);
    cfg.scene_hidden = j.at("scene_hidden").get<int>();
    cfg.dropout_rate = j.at("dropout_rate").get<float>();
    cfg.conditional_disc = j.at("conditional_disc").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  return cfg;
}

nlohmann::json adam_to_json(const ag::AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

ag::AdamConfig adam_from_json(const nlohmann::json& j) {
  ag::AdamConfig a;
  try {
    a.lr = j.at("lr").get<float>();
    a.beta1 = j.at("beta1").get<float>();
    a.beta2 = j.at("beta2").get<float>();
    a.eps = j.at("eps").get<float>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint adam config: ") + e.what());
  }
  return a;
}

void store_tensors(Checkpoint& ck, const std::string& prefix, const model::ParamStore& store) {
  for (const auto& e : store.entries()) {
    ck.tensors.emplace_back(prefix + ":" + e.name, e.var->value);
    ck.tensors.emplace_back(prefix + ".m:" + e.name, e.adam.m);
    ck.tensors.emplace_back(prefix + ".v:" + e.name, e.adam.v);
  }
}

void store_bn(Checkpoint& ck, const std::string& prefix,
              const std::vector<const ag::BNState*>& states) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string base = prefix + ".bn" + std::to_string(i);
    ck.tensors.emplace_back(base + ":mean", states[i]->running_mean);
    ck.tensors.emplace_back(base + ":var", states[i]->running_var);
  }
}

void load_bn(const std::map<std::string, const Tensor*>& lookup, const std::string& prefix,
             const std::vector<ag::BNState*>& states) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string base = prefix + ".bn" + std::to_string(i);
    for (const char* part : {"mean", "var"}) {
      const std::string key = base + ":" + part;
      const auto it = lookup.find(key);
      if (it == lookup.end()) throw FormatError("checkpoint is missing tensor '" + key + "'");
      Tensor& dst = *part == 'm' ? states[i]->running_mean : states[i]->running_var;
      if (dst.shape != it->second->shape)
        throw FormatError("checkpoint tensor '" + key + "' has the wrong shape");
      dst = *it->second;
    }
  }
  const std::string next = prefix + ".bn" + std::to_string(states.size()) + ":mean";
  if (lookup.count(next)) throw FormatError("checkpoint has surplus tensor '" + next + "'");
}

void load_tensors(const std::map<std::string, const Tensor*>& lookup, const std::string& prefix,
                  model::ParamStore& store, std::int64_t adam_t) {
  for (auto& e : store.entries()) {
    for (const char* kind : {"", ".m", ".v"}) {
      const std::string key = prefix + kind + ":" + e.name;
      const auto it = lookup.find(key);
      if (it == lookup.end()) throw FormatError("checkpoint is missing tensor '" + key + "'");
      Tensor& dst = *kind == '\0' ? e.var->value : (kind[1] == 'm' ? e.adam.m : e.adam.v);
      if (dst.shape != it->second->shape)
        throw FormatError("checkpoint tensor '" + key + "' has the wrong shape");
      dst = *it->second;
    }
    e.adam.t = adam_t;
  }
}

}  // namespace

Checkpoint checkpoint_from_bundle(const model::ModelBundle& bundle) {
  Checkpoint ck;
  ck.meta["kind"] = "bundle";
  ck.meta["config"] = config_to_json(bundle.config);
  ck.meta["iteration"] = bundle.iteration;
  ck.meta["seed"] = bundle.seed;
  ck.meta["adam_g"] = adam_to_json(bundle.adam_g);
  ck.meta["adam_d"] = adam_to_json(bundle.adam_d);
  store_tensors(ck, "gen", bundle.gen.params());
  store_tensors(ck, "disc", bundle.disc.params());
  store_tensors(ck, "scene", bundle.scene.params());
  store_bn(ck, "gen", bundle.gen.bn_states());
  store_bn(ck, "disc", bundle.disc.bn_states());
  store_bn(ck, "scene", bundle.scene.bn_states());
  return ck;
}

model::ModelBundle bundle_from_checkpoint(const Checkpoint& ck) {
  if (!ck.meta.is_object() || ck.meta.value("kind", "") != "bundle")
    throw FormatError("checkpoint does not hold a model bundle");
  const model::GeneratorConfig cfg = config_from_json(ck.meta.at("config"));
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  try {
    seed = ck.meta.at("seed").get<std::uint64_t>();
    iteration = ck.meta.at("iteration").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint meta: ") + e.what());
  }
  model::ModelBundle bundle(cfg, seed);
  bundle.iteration = iteration;
  bundle.adam_g = adam_from_json(ck.meta.at("adam_g"));
  bundle.adam_d = adam_from_json(ck.meta.at("adam_d"));
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : ck.tensors) lookup[name] = &t;
  load_tensors(lookup, "gen", bundle.gen.params(), iteration);
  load_tensors(lookup, "disc", bundle.disc.params(), iteration);
  load_tensors(lookup, "scene", bundle.scene.params(), iteration);
  load_bn(lookup, "gen", bundle.gen.bn_states());
  load_bn(lookup, "disc", bundle.disc.bn_states());
  load_bn(lookup, "scene", bundle.scene.bn_states());
  return bundle;
}

namespace {

constexpr const char* kAvgFields[] = {"color", "depth", "normal", "pdist", "semantics"};

void store_avg(Checkpoint& ck, const std::string& prefix, const baseline::AvgModel& avg) {
  const Tensor* fields[] = {&avg.color, &avg.depth, &avg.normal, &avg.pdist, &avg.semantics};
  for (int i = 0; i < 5; ++i) ck.tensors.emplace_back(prefix + ":" + kAvgFields[i], *fields[i]);
}

baseline::AvgModel load_avg(const std::map<std::string, const Tensor*>& lookup,
                            const std::string& prefix, std::int64_t count,
                            const std::vector<std::int64_t>& hist) {
  baseline::AvgModel avg;
  Tensor* fields[] = {&avg.color, &avg.depth, &avg.normal, &avg.pdist, &avg.semantics};
  for (int i = 0; i < 5; ++i) {
    const std::string key = prefix + ":" + kAvgFields[i];
    const auto it = lookup.find(key);
    if (it == lookup.end()) throw FormatError("checkpoint is missing tensor '" + key + "'");
    *fields[i] = *it->second;
  }
  avg.count = count;
  if (hist.size() != static_cast<std::size_t>(sem::kSceneCount))
    throw FormatError("avg checkpoint: bad category histogram");
  std::copy(hist.begin(), hist.end(), avg.hist.begin());
  return avg;
}

}  // namespace

Checkpoint checkpoint_from_avg(const baseline::AvgModel& avg) {
  Checkpoint ck;
  ck.meta["kind"] = "avg";
  ck.meta["count"] = avg.count;
  ck.meta["hist"] = std::vector<std::int64_t>(avg.hist.begin(), avg.hist.end());
  store_avg(ck, "avg", avg);
  return ck;
}

baseline::AvgModel avg_from_checkpoint(const Checkpoint& ck) {
  if (!ck.meta.is_object() || ck.meta.value("kind", "") != "avg")
    throw FormatError("checkpoint does not hold an avg model");
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : ck.tensors) lookup[name] = &t;
  try {
    return load_avg(lookup, "avg", ck.meta.at("count").get<std::int64_t>(),
                    ck.meta.at("hist").get<std::vector<std::int64_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("avg checkpoint meta: ") + e.what());
  }
}

Checkpoint checkpoint_from_avg_type(const baseline::AvgTypeModel& m) {
  Checkpoint ck;
  ck.meta["kind"] = "avg_type";
  nlohmann::json counts = nlohmann::json::array(), hists = nlohmann::json::array(),
                 fallback = nlohmann::json::array();
  for (int c = 0; c < sem::kSceneCount; ++c) {
    const auto& avg = m.per_category[static_cast<std::size_t>(c)];
    counts.push_back(avg.count);
    hists.push_back(std::vector<std::int64_t>(avg.hist.begin(), avg.hist.end()));
    fallback.push_back(static_cast<bool>(m.fallback[static_cast<std::size_t>(c)]));
    store_avg(ck, "avg" + std::to_string(c), avg);
  }
  ck.meta["counts"] = counts;
  ck.meta["hists"] = hists;
  ck.meta["fallback"] = fallback;
  return ck;
}

baseline::AvgTypeModel avg_type_from_checkpoint(const Checkpoint& ck) {
  if (!ck.meta.is_object() || ck.meta.value("kind", "") != "avg_type")
    throw FormatError("checkpoint does not hold an avg-type model");
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : ck.tensors) lookup[name] = &t;
  baseline::AvgTypeModel m;
  try {
    const auto counts = ck.meta.at("counts").get<std::vector<std::int64_t>>();
    const auto fallback = ck.meta.at("fallback").get<std::vector<bool>>();
    const auto& hists = ck.meta.at("hists");
    if (counts.size() != sem::kSceneCount || fallback.size() != sem::kSceneCount ||
        hists.size() != sem::kSceneCount)
      throw FormatError("avg-type checkpoint: bad per-category arrays");
    for (int c = 0; c < sem::kSceneCount; ++c) {
      m.per_category[static_cast<std::size_t>(c)] =
          load_avg(lookup, "avg" + std::to_string(c), counts[static_cast<std::size_t>(c)],
                   hists.at(static_cast<std::size_t>(c)).get<std::vector<std::int64_t>>());
      m.fallback[static_cast<std::size_t>(c)] = fallback[static_cast<std::size_t>(c)];
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("avg-type checkpoint meta: ") + e.what());
  }
  return m;
}

// ---- images -------------------------------------------------------------------

void write_ppm(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb, int w,
               int h) {
  if (rgb.size() != static_cast<std::size_t>(w) * h * 3)
    throw std::invalid_argument("write_ppm: buffer size mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "P6\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const std::vector<std::uint8_t>& gray, int w,
               int h) {
  if (gray.size() != static_cast<std::size_t>(w) * h)
    throw std::invalid_argument("write_pgm: buffer size mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

namespace {

std::uint8_t to_byte(double v01) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<std::filesystem::path> export_images(const Panorama& pano,
                                                 const std::filesystem::path& dir,
                                                 const std::string& stem) {
  const int h = pano.height(), w = pano.width();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  if (pano.color.numel() == 3 * hw) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(hw) * 3);
    for (std::int64_t i = 0; i < hw; ++i)
      for (int ch = 0; ch < 3; ++ch)
        rgb[static_cast<std::size_t>(i) * 3 + ch] =
            to_byte(pano.color.data[static_cast<std::size_t>(ch * hw + i)]);
    const auto path = dir / (stem + "_color.ppm");
    write_ppm(path, rgb, w, h);
    written.push_back(path);
  }
  if (pano.semantics.numel() == sem::kClassCount * hw) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(hw) * 3);
    for (std::int64_t i = 0; i < hw; ++i) {
      int best = 0;
      float bv = pano.semantics.data[static_cast<std::size_t>(i)];
      for (int c = 1; c < sem::kClassCount; ++c) {
        const float v = pano.semantics.data[static_cast<std::size_t>(c * hw + i)];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      for (int ch = 0; ch < 3; ++ch)
        rgb[static_cast<std::size_t>(i) * 3 + ch] =
            to_byte(sem::kClassColor[static_cast<std::size_t>(best)][static_cast<std::size_t>(ch)]);
    }
    const auto path = dir / (stem + "_semantics.ppm");
    write_ppm(path, rgb, w, h);
    written.push_back(path);
  }
  if (pano.normal.numel() == 3 * hw) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(hw) * 3);
    for (std::int64_t i = 0; i < hw; ++i)
      for (int ch = 0; ch < 3; ++ch)
        rgb[static_cast<std::size_t>(i) * 3 + ch] = to_byte(
            (pano.normal.data[static_cast<std::size_t>(ch * hw + i)] + 1.0) / 2.0);
    const auto path = dir / (stem + "_normal.ppm");
    write_ppm(path, rgb, w, h);
    written.push_back(path);
  }
  if (pano.depth.numel() == hw) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i)
      gray[static_cast<std::size_t>(i)] =
          to_byte(pano.depth.data[static_cast<std::size_t>(i)] / 10.0);
    const auto path = dir / (stem + "_depth.pgm");
    write_pgm(path, gray, w, h);
    written.push_back(path);
  }
  if (pano.pdist.numel() == hw) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i)
      gray[static_cast<std::size_t>(i)] =
          to_byte((pano.pdist.data[static_cast<std::size_t>(i)] + 10.0) / 20.0);
    const auto path = dir / (stem + "_pdist.pgm");
    write_pgm(path, gray, w, h);
    written.push_back(path);
  }
  if (pano.mask.size() == static_cast<std::size_t>(hw)) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i)
      gray[static_cast<std::size_t>(i)] = pano.mask[static_cast<std::size_t>(i)] ? 255 : 0;
    const auto path = dir / (stem + "_mask.pgm");
    write_pgm(path, gray, w, h);
    written.push_back(path);
  }
  return written;
}

void export_error_image(const Tensor& err, const std::filesystem::path& path, double max_value) {
  if (err.shape.size() != 3 || err.shape[0] != 1)
    throw std::invalid_argument("export_error_image: expected a (1,H,W) map");
  if (!(max_value > 0.0)) throw std::invalid_argument("export_error_image: max_value must be positive");
  const int h = err.shape[1], w = err.shape[2];
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = to_byte(err.data[i] / max_value);
  write_pgm(path, gray, w, h);
}

// ---- reports --------------------------------------------------------------------

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <std::size_t N>
nlohmann::json opt_array_json(const std::array<std::optional<double>, N>& arr) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : arr) out.push_back(opt_json(v));
  return out;
}

}  // namespace

nlohmann::json report_to_json(const metrics::MetricReport& r) {
  nlohmann::json j;
  j["classes"] = std::vector<std::string>(sem::kClassNames.begin(), sem::kClassNames.end());
  j["pog"] = opt_array_json(r.pog);
  j["iou"] = opt_array_json(r.iou);
  j["size_error"] = opt_array_json(r.size_error);
  j["emd"] = opt_array_json(r.emd);
  j["gt_exists"] = std::vector<bool>(r.gt_exists.begin(), r.gt_exists.end());
  j["pred_exists"] = std::vector<bool>(r.pred_exists.begin(), r.pred_exists.end());
  j["pog_mean"] = opt_json(r.pog_mean);
  j["iou_mean"] = opt_json(r.iou_mean);
  j["size_mean"] = opt_json(r.size_mean);
  j["emd_mean"] = opt_json(r.emd_mean);
  j["exist_f1"] = r.exist_f1;
  j["accuracy"] = r.accuracy;
  if (r.normal) {
    j["normal"] = {{"mean_deg", r.normal->mean_deg},
                   {"median_deg", r.normal->median_deg},
                   {"pct_11_25", r.normal->pct_11_25},
                   {"pct_22_5", r.normal->pct_22_5},
                   {"pct_30", r.normal->pct_30}};
  } else {
    j["normal"] = nullptr;
  }
  if (r.surface) {
    j["surface"] = {{"mean_m", r.surface->mean_m},
                    {"median_m", r.surface->median_m},
                    {"pct_0_2", r.surface->pct_0_2},
                    {"pct_0_5", r.surface->pct_0_5},
                    {"pct_1_0", r.surface->pct_1_0}};
  } else {
    j["surface"] = nullptr;
  }
  j["eval_pixels"] = r.eval_pixels;
  return j;
}

void write_report_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << doc.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row width differs from the header");
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// ---- datasets ---------------------------------------------------------------------

void generate_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  if (spec.train_n < 1 || spec.test_n < 0)
    throw std::invalid_argument("generate_dataset: bad split sizes");
  const cam::CameraRig rig = cam::make_rig(spec.face_w, spec.face_h, 90.0, 116.0);
  std::filesystem::create_directories(dir / "train");
  std::filesystem::create_directories(dir / "test");

  nlohmann::json files;
  auto emit = [&](const std::filesystem::path& rel, int index) {
    const std::uint64_t scene_seed = spec.seed * 1000003ull + static_cast<std::uint64_t>(index);
    const Panorama pano =
        sg::render_panorama(sg::sample_scene(scene_seed, index % sem::kSceneCount), rig);
    const auto bytes = encode_pano(pano);
    write_file(dir / rel, bytes);
    files[rel.generic_string()] = sha1_hex(bytes.data(), bytes.size());
  };
  char name[32];
  for (int i = 0; i < spec.train_n; ++i) {
    std::snprintf(name, sizeof(name), "pano_%04d.p3dp", i);
    emit(std::filesystem::path("train") / name, i);
  }
  for (int i = 0; i < spec.test_n; ++i) {
    std::snprintf(name, sizeof(name), "pano_%04d.p3dp", i);
    emit(std::filesystem::path("test") / name, spec.train_n + i);
  }

  nlohmann::json manifest;
  manifest["command"] = "gen";
  manifest["dataset"] = {{"face_w", spec.face_w},
                         {"face_h", spec.face_h},
                         {"seed", spec.seed},
                         {"train_n", spec.train_n},
                         {"test_n", spec.test_n}};
  manifest["files"] = files;
  write_report_json(dir / "manifest.json", manifest);
}

std::vector<Panorama> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw FormatError("no dataset directory at " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".p3dp")
      paths.push_back(entry.path());
  if (paths.empty()) throw FormatError("no panorama files under " + dir.string());
  std::sort(paths.begin(), paths.end());
  std::vector<Panorama> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_pano(p));
  return out;
}

void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        const nlohmann::json& args,
                        const std::vector<std::filesystem::path>& inputs,
                        const std::vector<std::string>& outputs) {
  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["args"] = args;
  nlohmann::json in;
  for (const auto& p : inputs) in[p.generic_string()] = sha1_file(p);
  manifest["inputs"] = in;
  manifest["outputs"] = outputs;
  std::filesystem::create_directories(out_dir);
  write_report_json(out_dir / "manifest.json", manifest);
}

}  // namespace pano::io
