#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "panoscene/autograd.hpp"
#include "panoscene/camera.hpp"
#include "panoscene/losses.hpp"
#include "panoscene/panorama.hpp"
#include "panoscene/tensor.hpp"

namespace pano::model {

// Data channels per stream name; valid names are rgb, p, n, s, d.
int stream_channels(const std::string& name);

// "pns2pns" -> inputs {p,n,s}, outputs {p,n,s}. "rgb" parses as one stream;
// outputs may not contain rgb. Streams are returned in canonical order.
std::pair<std::vector<std::string>, std::vector<std::string>> parse_model_id(
    const std::string& id);

struct GeneratorConfig {
  int face_w = 64;
  int face_h = 40;
  double hfov_deg = 90.0;
  double vfov_deg = 116.0;
  std::vector<std::string> inputs{"p", "n", "s"};
  std::vector<std::string> outputs{"p", "n", "s"};
  // Encoder: 3 stride-2 convs per input stream, then 6 stride-1 joint convs to
  // the latent. Decoder mirrors: 6 joint convs (first 3 with dropout), then 3
  // stride-2 transposed convs per output stream.
  std::array<int, 3> stream_widths{4, 8, 16};
  std::array<int, 6> joint_widths{32, 32, 32, 32, 32, 64};
  std::array<int, 4> disc_widths{4, 16, 32, 128};
  int scene_hidden = 32;
  float dropout_rate = 0.5f;
  bool conditional_disc = false;  // discriminator also sees the input streams

  int pano_w() const { return 4 * face_w; }
  int pano_h() const { return face_h; }
  int latent_h() const { return face_h / 8; }
  int latent_w() const { return pano_w() / 8; }
  bool wants_points() const;  // both p and n among outputs
  void validate() const;      // throws std::invalid_argument
};

GeneratorConfig config_for_model_id(const std::string& id);

// Named parameter leaves plus their Adam slots.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ag::Var var;
    ag::AdamState adam;
  };

  ag::Var add(const std::string& name, Tensor init);
  std::int64_t param_count() const;
  void zero_grads();
  void adam_step_all(const ag::AdamConfig& cfg);
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

struct ConvBlock {
  ag::Var w, b;
  ag::Var gamma, beta;  // null when the block has no batch norm
  std::unique_ptr<ag::BNState> bn;
  int stride = 1, pad = 1;
  bool transpose = false;
  float leaky = 0.0f;   // 0 = plain ReLU
  bool act = true;      // final blocks are linear
  bool dropout = false;
};

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  struct Out {
    std::map<std::string, ag::Var> streams;  // per output stream, final activations applied
    ag::Var points;                          // PN-layer points; null without a pn head
    Tensor points_valid;                     // (N,1,H,W) 0/1, empty without a pn head
    ag::Var latent;                          // (N,C,latent_h,latent_w)
  };

  // inputs: one (N,ch+1,H,W) tensor per input stream (mask channel last).
  // Train mode uses batch statistics and dropout; dropout_seed picks the masks.
  // Throws std::runtime_error if any output contains a non-finite value.
  Out forward(const std::map<std::string, Tensor>& inputs, bool train,
              std::uint64_t dropout_seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const GeneratorConfig& config() const { return cfg_; }
  const Tensor& rays() const { return rays_; }
  // Batch norm running statistics in a stable order; part of training state.
  std::vector<ag::BNState*> bn_states();
  std::vector<const ag::BNState*> bn_states() const;

 private:
  GeneratorConfig cfg_;
  Tensor rays_;  // (3,H,W) world rays of the rig, shared by the PN layer
  std::map<std::string, std::vector<ConvBlock>> enc_streams_;
  std::vector<ConvBlock> enc_joint_;
  std::vector<ConvBlock> dec_joint_;
  std::map<std::string, std::vector<ConvBlock>> dec_streams_;
  ParamStore params_;
};

class Discriminator {
 public:
  Discriminator(const GeneratorConfig& cfg, std::uint64_t seed);

  // channels must carry exactly the streams this discriminator was built for
  // (generator outputs, plus inputs when conditional). Returns the patch logit
  // map (N,1,H/8,W/8).
  ag::Var forward(const std::map<std::string, ag::Var>& channels, bool train);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<std::string>& streams() const { return streams_; }
  std::vector<ag::BNState*> bn_states();
  std::vector<const ag::BNState*> bn_states() const;

 private:
  std::vector<std::string> streams_;
  std::map<std::string, ConvBlock> stream_convs_;
  std::vector<ConvBlock> shared_;
  ParamStore params_;
};

class SceneHead {
 public:
  SceneHead(int latent_channels, int hidden, std::uint64_t seed);
  ag::Var forward(const ag::Var& latent);  // (N,8,1,1) logits
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::vector<ag::BNState*> bn_states();
  std::vector<const ag::BNState*> bn_states() const;

 private:
  ConvBlock fc1_, fc2_;
  ParamStore params_;
};

// Differentiable per-class mean of s_pred over all pixels; sums to 1.
ag::Var distribution_head(const ag::Var& s_pred);

struct ModelBundle {
  GeneratorConfig config;
  Generator gen;
  Discriminator disc;
  SceneHead scene;
  ag::AdamConfig adam_g, adam_d;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;

  ModelBundle(const GeneratorConfig& cfg, std::uint64_t seed);
  std::int64_t param_count() const;
};

struct Example {
  Panorama input;   // masked observation
  Panorama target;  // full ground truth
};
using Batch = std::vector<Example>;

// Packs panoramas into per-stream tensors (mask channel appended). The rgb
// stream uses extra["color_mask"] when present, the geometry mask otherwise.
std::map<std::string, Tensor> pack_inputs(const std::vector<const Panorama*>& panos,
                                          const GeneratorConfig& cfg);

struct PackedTargets {
  std::map<std::string, Tensor> streams;  // p,n,s,d as supervised tensors
  Tensor labels;                          // (N,1,H,W) class ids as floats
  Tensor valid;                           // (N,1,H,W) ground-truth mask
  Tensor points;                          // (N,3,H,W) depth-backprojected points
  Tensor points_valid;                    // (N,1,H,W)
  Tensor class_dist;                      // (N,C,1,1) pixel distribution of gt classes
  std::vector<int> scene;
};
PackedTargets pack_targets(const std::vector<const Panorama*>& panos,
                           const GeneratorConfig& cfg, const cam::CameraRig& rig);

struct StepStats {
  std::int64_t iteration = 0;
  double d_loss = 0.0;
  double adv_g = 0.0;
  double l1_p = 0.0;
  double l1_d = 0.0;
  double cos_n = 0.0;
  double ce_s = 0.0;
  double pn = 0.0;
  double scene = 0.0;
  double dist = 0.0;
  double pixel_total = 0.0;  // unweighted sum of the pixel losses
  double g_total = 0.0;
  std::map<std::string, double> as_map() const;
};

struct DivergenceError : std::runtime_error {
  StepStats stats;
  explicit DivergenceError(const std::string& msg, StepStats s)
      : std::runtime_error(msg), stats(std::move(s)) {}
};

// One discriminator update followed by one generator update; increments the
// iteration counter. Throws DivergenceError when any component exceeds 1e6 or
// turns non-finite.
StepStats train_step(ModelBundle& bundle, const Batch& batch, const loss::LossConfig& loss_cfg);

// Eval-mode forward of one masked panorama; returns a full-frame prediction
// with semantics/normal/pdist/depth populated for the model's output streams
// (depth derived from the plane encoding when p and n are predicted).
Panorama predict(ModelBundle& bundle, const Panorama& masked_input);

}  // namespace pano::model
