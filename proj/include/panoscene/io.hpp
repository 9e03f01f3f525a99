#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "panoscene/baselines.hpp"
#include "panoscene/metrics.hpp"
#include "panoscene/model.hpp"
#include "panoscene/panorama.hpp"

// Container formats, image export, manifests, and report emission.
//
// Panorama container (magic "P3DP", version 1, little-endian):
//   magic[4]  "P3DP"
//   u16       version
//   u16       reserved (0)
//   u32       face_w, face_h, face_count (= 4)
//   u32       channel count N
//   N x       directory entry:
//               u16 name length, name bytes,
//               u8 element type (0 = f32, 1 = u8), u8 pad (0),
//               u32 plane count, u64 payload offset, u64 byte length
//   payload   channels back to back in directory order
//   u32       CRC32 of the payload
// Channels "color", "depth", "normal", "pdist", "semantics" are f32 planes;
// "mask" is u8; "scene_category" is a single u8.  Unknown channels survive a
// read/write cycle byte for byte: f32 channels of shape (C,H,W) live in
// Panorama::extra under their own name, u8 channels under "u8:<name>" as a
// (1,1,len) tensor of byte values.
//
// The checkpoint container uses the same layout with magic "P3DC" and zero
// face dimensions; every chunk is a self-describing tensor (u32 ndim, i64
// dims, f32 data) except the u8 chunk "meta", which holds a JSON document.
namespace pano::io {

// Malformed or corrupt input; the message names the offending structure.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// IEEE 802.3 reflected CRC32; crc32("123456789") == 0xCBF43926.
std::uint32_t crc32(const void* data, std::size_t n);

// SHA-1 as lowercase hex; sha1_hex("abc") starts with "a9993e36".
std::string sha1_hex(const void* data, std::size_t n);
std::string sha1_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pano(const Panorama& pano);
Panorama decode_pano(const std::uint8_t* data, std::size_t size);
void write_pano(const std::filesystem::path& path, const Panorama& pano);
Panorama read_pano(const std::filesystem::path& path);

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;  // name -> tensor, ordered
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::uint8_t* data, std::size_t size);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Full training state: config, parameters, Adam moments, iteration.
Checkpoint checkpoint_from_bundle(const model::ModelBundle& bundle);
model::ModelBundle bundle_from_checkpoint(const Checkpoint& ck);

Checkpoint checkpoint_from_avg(const baseline::AvgModel& avg);
baseline::AvgModel avg_from_checkpoint(const Checkpoint& ck);
Checkpoint checkpoint_from_avg_type(const baseline::AvgTypeModel& m);
baseline::AvgTypeModel avg_type_from_checkpoint(const Checkpoint& ck);

// Per-channel images under dir: color.ppm, semantics.ppm (argmax through the
// fixed palette), normal.ppm ((n+1)/2), depth.pgm (0..10 m ramp), pdist.pgm
// (-10..10 m ramp), mask.pgm.  Returns the written paths; throws
// std::runtime_error naming the path on I/O failure.
std::vector<std::filesystem::path> export_images(const Panorama& pano,
                                                 const std::filesystem::path& dir,
                                                 const std::string& stem = "pano");

// Grayscale ramp 0..max_value over a (1,H,W) error map.
void export_error_image(const Tensor& err, const std::filesystem::path& path, double max_value);

void write_ppm(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb, int w,
               int h);
void write_pgm(const std::filesystem::path& path, const std::vector<std::uint8_t>& gray, int w,
               int h);

// MetricReport as a stable-keyed JSON document (absent metrics are null).
nlohmann::json report_to_json(const metrics::MetricReport& report);
void write_report_json(const std::filesystem::path& path, const nlohmann::json& doc);

// Rows of preformatted cells; the header names the columns.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct DatasetSpec {
  int train_n = 512;
  int test_n = 64;
  std::uint64_t seed = 0;
  int face_w = 64;
  int face_h = 40;
};

// Renders train/pano_NNNN.p3dp and test/pano_NNNN.p3dp (categories round
// robin, scene seeds derived from spec.seed) plus manifest.json with a SHA-1
// per file.  Deterministic: equal specs produce identical bytes.
void generate_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

// Loads every *.p3dp under dir in filename order.
std::vector<Panorama> load_dataset(const std::filesystem::path& dir);

// Run manifest: command, arguments, seed, SHA-1 of each input, output names.
void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        const nlohmann::json& args,
                        const std::vector<std::filesystem::path>& inputs,
                        const std::vector<std::string>& outputs);

}  // namespace pano::io
