#include "panoscene/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "panoscene/palette.hpp"
#include "panoscene/plane_geom.hpp"
#include "panoscene/rng.hpp"

namespace pano::model {

namespace {

constexpr std::uint64_t kSeedMix = 0x9E3779B97F4A7C15ULL;

const std::vector<std::string>& canonical_streams() {
  static const std::vector<std::string> k{"rgb", "p", "n", "s", "d"};
  return k;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * kSeedMix;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor normal_init(Rng& rng, std::vector<int> shape, int fan_in) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor t = Tensor::zeros(std::move(shape));
  for (float& v : t.data) v = dist(rng);
  return t;
}

ConvBlock make_block(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout, int k,
                     int stride, int pad, bool bn, float leaky, bool act, bool transpose,
                     bool dropout) {
  ConvBlock blk;
  const int fan_in = transpose ? std::max(1, cin * k * k / (stride * stride)) : cin * k * k;
  std::vector<int> wshape =
      transpose ? std::vector<int>{cin, cout, k, k} : std::vector<int>{cout, cin, k, k};
  blk.w = ps.add(name + ".w", normal_init(rng, std::move(wshape), fan_in));
  blk.b = ps.add(name + ".b", Tensor::zeros({cout}));
  if (bn) {
    blk.gamma = ps.add(name + ".gamma", Tensor::full({cout}, 1.0f));
    blk.beta = ps.add(name + ".beta", Tensor::zeros({cout}));
    blk.bn = std::make_unique<ag::BNState>(cout);
  }
  blk.stride = stride;
  blk.pad = pad;
  blk.transpose = transpose;
  blk.leaky = leaky;
  blk.act = act;
  blk.dropout = dropout;
  return blk;
}

struct FwdCtx {
  bool train = false;
  float dropout_rate = 0.5f;
  std::uint64_t seed = 0;
  int dropout_index = 0;
};

ag::Var apply_block(const ag::Var& x, ConvBlock& blk, FwdCtx& ctx) {
  ag::Var y = blk.transpose ? ag::conv2d_transpose(x, blk.w, blk.b, blk.stride, blk.pad)
                            : ag::conv2d(x, blk.w, blk.b, blk.stride, blk.pad);
  if (blk.bn) y = ag::batchnorm(y, blk.gamma, blk.beta, *blk.bn, ctx.train);
  if (blk.act) y = blk.leaky > 0.0f ? ag::leaky_relu(y, blk.leaky) : ag::relu(y);
  if (blk.dropout && ctx.train) {
    y = ag::dropout(y, ctx.dropout_rate, mix_seed(ctx.seed, static_cast<std::uint64_t>(
                                                                ++ctx.dropout_index)));
  }
  return y;
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    std::ostringstream os;
    os << "generator_forward: non-finite values in " << what;
    throw std::runtime_error(os.str());
  }
}

std::vector<const Panorama*> pointers(const Batch& batch, bool targets) {
  std::vector<const Panorama*> out;
  out.reserve(batch.size());
  for (const Example& e : batch) out.push_back(targets ? &e.target : &e.input);
  return out;
}

Tensor elementwise_and(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mask intersection");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] != 0 && b.data[i] != 0;
  return out;
}

}  // namespace

int stream_channels(const std::string& name) {
  if (name == "rgb") return 3;
  if (name == "p" || name == "d") return 1;
  if (name == "n") return 3;
  if (name == "s") return sem::kClassCount;
  throw std::invalid_argument("unknown stream '" + name + "'");
}

std::pair<std::vector<std::string>, std::vector<std::string>> parse_model_id(
    const std::string& id) {
  const size_t sep = id.find('2');
  if (sep == std::string::npos || sep == 0 || sep + 1 >= id.size())
    throw std::invalid_argument("model id '" + id + "' is not of the form <in>2<out>");
  const auto parse_side = [&](const std::string& side, bool allow_rgb) {
    std::vector<std::string> names;
    size_t pos = 0;
    while (pos < side.size()) {
      std::string name;
      if (side.compare(pos, 3, "rgb") == 0) {
        name = "rgb";
        pos += 3;
      } else {
        name = side.substr(pos, 1);
        pos += 1;
      }
      if (name == "rgb" ? !allow_rgb : std::string("pnsd").find(name) == std::string::npos)
        throw std::invalid_argument("model id '" + id + "': invalid stream '" + name + "'");
      if (std::find(names.begin(), names.end(), name) != names.end())
        throw std::invalid_argument("model id '" + id + "': duplicate stream '" + name + "'");
      names.push_back(name);
    }
    // canonical order keeps concatenation layout independent of id spelling
    std::vector<std::string> ordered;
    for (const std::string& c : canonical_streams())
      if (std::find(names.begin(), names.end(), c) != names.end()) ordered.push_back(c);
    return ordered;
  };
  return {parse_side(id.substr(0, sep), true), parse_side(id.substr(sep + 1), false)};
}

GeneratorConfig config_for_model_id(const std::string& id) {
  GeneratorConfig cfg;
  std::tie(cfg.inputs, cfg.outputs) = parse_model_id(id);
  cfg.validate();
  return cfg;
}

bool GeneratorConfig::wants_points() const {
  const auto has = [&](const char* n) {
    return std::find(outputs.begin(), outputs.end(), n) != outputs.end();
  };
  return has("p") && has("n");
}

void GeneratorConfig::validate() const {
  if (inputs.empty()) throw std::invalid_argument("GeneratorConfig: no input streams");
  if (outputs.empty()) throw std::invalid_argument("GeneratorConfig: no output streams");
  for (const std::string& name : inputs) stream_channels(name);
  for (const std::string& name : outputs) {
    stream_channels(name);
    if (name == "rgb") throw std::invalid_argument("GeneratorConfig: rgb is input-only");
  }
  for (const auto* set : {&inputs, &outputs})
    for (size_t i = 0; i < set->size(); ++i)
      for (size_t j = i + 1; j < set->size(); ++j)
        if ((*set)[i] == (*set)[j])
          throw std::invalid_argument("GeneratorConfig: duplicate stream '" + (*set)[i] + "'");
  if (face_w < 2 || face_h < 8 || face_h % 8 != 0 || (4 * face_w) % 8 != 0)
    throw std::invalid_argument(
        "GeneratorConfig: face size must allow three clean stride-2 halvings");
  if (!(hfov_deg > 0 && hfov_deg < 180 && vfov_deg > 0 && vfov_deg < 180))
    throw std::invalid_argument("GeneratorConfig: FoV out of range");
  for (int wdt : stream_widths)
    if (wdt < 1) throw std::invalid_argument("GeneratorConfig: stream width < 1");
  for (int wdt : joint_widths)
    if (wdt < 1) throw std::invalid_argument("GeneratorConfig: joint width < 1");
  for (int wdt : disc_widths)
    if (wdt < 1) throw std::invalid_argument("GeneratorConfig: discriminator width < 1");
  if (scene_hidden < 1) throw std::invalid_argument("GeneratorConfig: scene_hidden < 1");
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f))
    throw std::invalid_argument("GeneratorConfig: dropout rate outside [0,1)");
}

ag::Var ParamStore::add(const std::string& name, Tensor init) {
  ag::Var v = ag::param(std::move(init));
  entries_.push_back(Entry{name, v, ag::AdamState(v->value.shape)});
  return v;
}

std::int64_t ParamStore::param_count() const {
  std::int64_t n = 0;
  for (const Entry& e : entries_) n += e.var->value.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) e.var->zero_grad();
}

void ParamStore::adam_step_all(const ag::AdamConfig& cfg) {
  for (Entry& e : entries_) ag::adam_step(e.var->value, e.var->grad, e.adam, cfg);
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const cam::CameraRig rig =
      cam::make_rig(cfg_.face_w, cfg_.face_h, cfg_.hfov_deg, cfg_.vfov_deg);
  rays_ = cam::rays_tensor(rig);
  Rng rng(mix_seed(seed, 0x67656eULL));

  for (const std::string& name : cfg_.inputs) {
    std::vector<ConvBlock> blocks;
    int cin = stream_channels(name) + 1;  // mask channel
    for (int i = 0; i < 3; ++i) {
      const int cout = cfg_.stream_widths[static_cast<size_t>(i)];
      blocks.push_back(make_block(params_, rng, "gen.enc." + name + "." + std::to_string(i), cin,
                                  cout, 4, 2, 1, true, 0.0f, true, false, false));
      cin = cout;
    }
    enc_streams_.emplace(name, std::move(blocks));
  }

  int cin = cfg_.stream_widths[2] * static_cast<int>(cfg_.inputs.size());
  for (int i = 0; i < 6; ++i) {
    const int cout = cfg_.joint_widths[static_cast<size_t>(i)];
    enc_joint_.push_back(make_block(params_, rng, "gen.joint." + std::to_string(i), cin, cout, 3,
                                    1, 1, true, 0.0f, true, false, false));
    cin = cout;
  }

  for (int i = 0; i < 6; ++i) {
    const int cout = i < 5 ? cfg_.joint_widths[static_cast<size_t>(4 - i)] : cfg_.joint_widths[0];
    dec_joint_.push_back(make_block(params_, rng, "gen.dec.joint." + std::to_string(i), cin, cout,
                                    3, 1, 1, true, 0.0f, true, false, i < 3));
    cin = cout;
  }

  for (const std::string& name : cfg_.outputs) {
    std::vector<ConvBlock> blocks;
    int c = cin;
    const int mids[2] = {cfg_.stream_widths[2], cfg_.stream_widths[1]};
    for (int i = 0; i < 2; ++i) {
      blocks.push_back(make_block(params_, rng, "gen.dec." + name + "." + std::to_string(i), c,
                                  mids[i], 4, 2, 1, true, 0.0f, true, true, false));
      c = mids[i];
    }
    blocks.push_back(make_block(params_, rng, "gen.dec." + name + ".2", c, stream_channels(name),
                                4, 2, 1, false, 0.0f, false, true, false));
    dec_streams_.emplace(name, std::move(blocks));
  }
}

Generator::Out Generator::forward(const std::map<std::string, Tensor>& inputs, bool train,
                                  std::uint64_t dropout_seed) {
  FwdCtx ctx{train, cfg_.dropout_rate, dropout_seed, 0};
  std::vector<ag::Var> feats;
  for (const std::string& name : cfg_.inputs) {
    const auto it = inputs.find(name);
    if (it == inputs.end())
      throw std::invalid_argument("generator_forward: missing input stream '" + name + "'");
    const Tensor& t = it->second;
    const int want_c = stream_channels(name) + 1;
    const bool shape_ok =
        (t.rank() == 4 && t.dim(1) == want_c && t.dim(2) == cfg_.pano_h() &&
         t.dim(3) == cfg_.pano_w()) ||
        (t.rank() == 3 && t.dim(0) == want_c && t.dim(1) == cfg_.pano_h() &&
         t.dim(2) == cfg_.pano_w());
    if (!shape_ok)
      throw std::invalid_argument("generator_forward: stream '" + name + "' has shape " +
                                  t.shape_str());
    ag::Var x = ag::constant(t);
    for (ConvBlock& blk : enc_streams_.at(name)) x = apply_block(x, blk, ctx);
    feats.push_back(x);
  }

  ag::Var x = feats.size() == 1 ? feats[0] : ag::concat_channels(feats);
  for (ConvBlock& blk : enc_joint_) x = apply_block(x, blk, ctx);

  Out out;
  out.latent = x;
  for (ConvBlock& blk : dec_joint_) x = apply_block(x, blk, ctx);

  for (const std::string& name : cfg_.outputs) {
    ag::Var y = x;
    for (ConvBlock& blk : dec_streams_.at(name)) y = apply_block(y, blk, ctx);
    if (name == "s")
      y = ag::softmax_channels(y);
    else if (name == "n")
      y = ag::normalize3(ag::tanh_act(y));
    out.streams[name] = y;
    check_finite(y->value, ("output stream '" + name + "'").c_str());
  }

  if (cfg_.wants_points()) {
    out.points = ag::pn_points(out.streams.at("n"), out.streams.at("p"), rays_, pg::kEpsRay,
                               &out.points_valid);
    check_finite(out.points->value, "PN-layer points");
  }
  return out;
}

namespace {

void collect_bn(std::vector<ConvBlock>& blocks, std::vector<ag::BNState*>& out) {
  for (ConvBlock& blk : blocks)
    if (blk.bn) out.push_back(blk.bn.get());
}

}  // namespace

std::vector<ag::BNState*> Generator::bn_states() {
  std::vector<ag::BNState*> out;
  for (auto& [name, blocks] : enc_streams_) collect_bn(blocks, out);
  collect_bn(enc_joint_, out);
  collect_bn(dec_joint_, out);
  for (auto& [name, blocks] : dec_streams_) collect_bn(blocks, out);
  return out;
}

std::vector<const ag::BNState*> Generator::bn_states() const {
  auto mut = const_cast<Generator*>(this)->bn_states();
  return {mut.begin(), mut.end()};
}

Discriminator::Discriminator(const GeneratorConfig& cfg, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x64697363ULL));
  streams_ = cfg.outputs;
  std::vector<int> stream_chs;
  for (const std::string& name : cfg.outputs) stream_chs.push_back(stream_channels(name));
  if (cfg.conditional_disc)
    for (const std::string& name : cfg.inputs) {
      streams_.push_back("in:" + name);
      stream_chs.push_back(stream_channels(name) + 1);
    }

  for (size_t i = 0; i < streams_.size(); ++i)
    stream_convs_.emplace(
        streams_[i], make_block(params_, rng, "disc.stream." + streams_[i], stream_chs[i],
                                cfg.disc_widths[0], 4, 2, 1, false, 0.2f, true, false, false));

  int cin = cfg.disc_widths[0] * static_cast<int>(streams_.size());
  shared_.push_back(make_block(params_, rng, "disc.shared.0", cin, cfg.disc_widths[1], 4, 2, 1,
                               true, 0.2f, true, false, false));
  shared_.push_back(make_block(params_, rng, "disc.shared.1", cfg.disc_widths[1],
                               cfg.disc_widths[2], 4, 2, 1, true, 0.2f, true, false, false));
  shared_.push_back(make_block(params_, rng, "disc.shared.2", cfg.disc_widths[2],
                               cfg.disc_widths[3], 3, 1, 1, true, 0.2f, true, false, false));
  shared_.push_back(make_block(params_, rng, "disc.final", cfg.disc_widths[3], 1, 3, 1, 1, false,
                               0.0f, false, false, false));
}

ag::Var Discriminator::forward(const std::map<std::string, ag::Var>& channels, bool train) {
  if (channels.size() != streams_.size())
    throw std::invalid_argument("discriminator: expected " + std::to_string(streams_.size()) +
                                " streams, got " + std::to_string(channels.size()));
  FwdCtx ctx{train, 0.0f, 0, 0};
  std::vector<ag::Var> feats;
  for (const std::string& name : streams_) {
    const auto it = channels.find(name);
    if (it == channels.end())
      throw std::invalid_argument("discriminator: missing stream '" + name + "'");
    ConvBlock& blk = stream_convs_.at(name);
    const Tensor& v = it->second->value;
    const int c = v.rank() == 4 ? v.dim(1) : v.dim(0);
    if (c != blk.w->value.dim(1))
      throw std::invalid_argument("discriminator: stream '" + name + "' has " +
                                  std::to_string(c) + " channels, expected " +
                                  std::to_string(blk.w->value.dim(1)));
    feats.push_back(apply_block(it->second, blk, ctx));
  }
  ag::Var x = feats.size() == 1 ? feats[0] : ag::concat_channels(feats);
  for (ConvBlock& blk : shared_) x = apply_block(x, blk, ctx);
  return x;
}

std::vector<ag::BNState*> Discriminator::bn_states() {
  std::vector<ag::BNState*> out;
  for (auto& [name, blk] : stream_convs_)
    if (blk.bn) out.push_back(blk.bn.get());
  collect_bn(shared_, out);
  return out;
}

std::vector<const ag::BNState*> Discriminator::bn_states() const {
  auto mut = const_cast<Discriminator*>(this)->bn_states();
  return {mut.begin(), mut.end()};
}

SceneHead::SceneHead(int latent_channels, int hidden, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7363656eULL));
  fc1_ = make_block(params_, rng, "scene.fc1", latent_channels, hidden, 1, 1, 0, false, 0.0f,
                    true, false, false);
  fc2_ = make_block(params_, rng, "scene.fc2", hidden, sem::kSceneCount, 1, 1, 0, false, 0.0f,
                    false, false, false);
}

ag::Var SceneHead::forward(const ag::Var& latent) {
  FwdCtx ctx{false, 0.0f, 0, 0};
  ag::Var x = ag::spatial_mean(latent);
  x = apply_block(x, fc1_, ctx);
  return apply_block(x, fc2_, ctx);
}

std::vector<ag::BNState*> SceneHead::bn_states() {
  std::vector<ag::BNState*> out;
  if (fc1_.bn) out.push_back(fc1_.bn.get());
  if (fc2_.bn) out.push_back(fc2_.bn.get());
  return out;
}

std::vector<const ag::BNState*> SceneHead::bn_states() const {
  auto mut = const_cast<SceneHead*>(this)->bn_states();
  return {mut.begin(), mut.end()};
}

ag::Var distribution_head(const ag::Var& s_pred) { return ag::spatial_mean(s_pred); }

ModelBundle::ModelBundle(const GeneratorConfig& cfg, std::uint64_t seed_in)
    : config(cfg),
      gen(cfg, mix_seed(seed_in, 1)),
      disc(cfg, mix_seed(seed_in, 2)),
      scene(cfg.joint_widths[5], cfg.scene_hidden, mix_seed(seed_in, 3)),
      seed(seed_in) {}

std::int64_t ModelBundle::param_count() const {
  return gen.params().param_count() + disc.params().param_count() + scene.params().param_count();
}

std::map<std::string, Tensor> pack_inputs(const std::vector<const Panorama*>& panos,
                                          const GeneratorConfig& cfg) {
  if (panos.empty()) throw std::invalid_argument("pack_inputs: empty batch");
  const int n = static_cast<int>(panos.size());
  const int h = cfg.pano_h(), w = cfg.pano_w();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::map<std::string, Tensor> out;
  for (const std::string& name : cfg.inputs) {
    const int ch = stream_channels(name);
    Tensor t = Tensor::zeros({n, ch + 1, h, w});
    for (int b = 0; b < n; ++b) {
      const Panorama& p = *panos[static_cast<size_t>(b)];
      if (p.face_w != cfg.face_w || p.face_h != cfg.face_h)
        throw std::invalid_argument("pack_inputs: panorama size does not match config");
      const Tensor* field = nullptr;
      if (name == "rgb")
        field = &p.color;
      else if (name == "p")
        field = &p.pdist;
      else if (name == "n")
        field = &p.normal;
      else if (name == "s")
        field = &p.semantics;
      else
        field = &p.depth;
      float* dst = t.data.data() + static_cast<std::int64_t>(b) * (ch + 1) * hw;
      std::copy(field->data.begin(), field->data.end(), dst);
      float* mask_dst = dst + static_cast<std::int64_t>(ch) * hw;
      if (name == "rgb") {
        const auto it = p.extra.find("color_mask");
        if (it != p.extra.end()) {
          std::copy(it->second.data.begin(), it->second.data.end(), mask_dst);
          continue;
        }
      }
      for (std::int64_t i = 0; i < hw; ++i)
        mask_dst[i] = p.mask[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

PackedTargets pack_targets(const std::vector<const Panorama*>& panos, const GeneratorConfig& cfg,
                           const cam::CameraRig& rig) {
  if (panos.empty()) throw std::invalid_argument("pack_targets: empty batch");
  const int n = static_cast<int>(panos.size());
  const int h = cfg.pano_h(), w = cfg.pano_w();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const Tensor rays = cam::rays_tensor(rig);
  PackedTargets out;
  out.labels = Tensor::zeros({n, 1, h, w});
  out.valid = Tensor::zeros({n, 1, h, w});
  out.points = Tensor::zeros({n, 3, h, w});
  out.points_valid = Tensor::zeros({n, 1, h, w});
  out.class_dist = Tensor::zeros({n, sem::kClassCount, 1, 1});
  for (const std::string& name : cfg.outputs) {
    const int ch = stream_channels(name);
    out.streams.emplace(name, Tensor::zeros({n, ch, h, w}));
  }
  for (int b = 0; b < n; ++b) {
    const Panorama& p = *panos[static_cast<size_t>(b)];
    if (p.face_w != cfg.face_w || p.face_h != cfg.face_h)
      throw std::invalid_argument("pack_targets: panorama size does not match config");
    for (const std::string& name : cfg.outputs) {
      const Tensor& field = name == "p"   ? p.pdist
                            : name == "n" ? p.normal
                            : name == "s" ? p.semantics
                                          : p.depth;
      Tensor& t = out.streams.at(name);
      const int ch = stream_channels(name);
      std::copy(field.data.begin(), field.data.end(),
                t.data.data() + static_cast<std::int64_t>(b) * ch * hw);
    }
    for (std::int64_t i = 0; i < hw; ++i) {
      const bool obs = p.mask[static_cast<size_t>(i)] != 0;
      out.valid.data[static_cast<size_t>(b * hw + i)] = obs ? 1.0f : 0.0f;
      int best = 0;
      float best_v = p.semantics.data[static_cast<size_t>(i)];
      for (int c = 1; c < sem::kClassCount; ++c) {
        const float v = p.semantics.data[static_cast<size_t>(c * hw + i)];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out.labels.data[static_cast<size_t>(b * hw + i)] = static_cast<float>(best);
      out.class_dist.data[static_cast<size_t>(b) * sem::kClassCount + best] += 1.0f;
      const float z = p.depth.data[static_cast<size_t>(i)];
      if (obs && z > 0.0f) {
        out.points_valid.data[static_cast<size_t>(b * hw + i)] = 1.0f;
        for (int c = 0; c < 3; ++c)
          out.points.data[static_cast<size_t>((static_cast<std::int64_t>(b) * 3 + c) * hw + i)] =
              z * rays.data[static_cast<size_t>(c * hw + i)];
      }
    }
    for (int c = 0; c < sem::kClassCount; ++c)
      out.class_dist.data[static_cast<size_t>(b) * sem::kClassCount + c] /=
          static_cast<float>(hw);
    out.scene.push_back(p.scene_category);
  }
  return out;
}

std::map<std::string, double> StepStats::as_map() const {
  return {{"d_loss", d_loss}, {"adv_g", adv_g},   {"l1_p", l1_p},
          {"l1_d", l1_d},     {"cos_n", cos_n},   {"ce_s", ce_s},
          {"pn", pn},         {"scene", scene},   {"dist", dist},
          {"pixel", pixel_total}, {"g_total", g_total}};
}

namespace {

double scalar_of(const ag::Var& v) { return static_cast<double>(v->value.data.at(0)); }

void check_divergence(const StepStats& st, const char* phase) {
  const auto bad = [](double v) { return !std::isfinite(v) || std::abs(v) > 1e6; };
  for (const auto& [name, v] : st.as_map()) {
    if (bad(v)) {
      std::ostringstream os;
      os << "training diverged during " << phase << " at iteration " << st.iteration << ": "
         << name << " = " << v;
      StepStats copy = st;
      throw DivergenceError(os.str(), std::move(copy));
    }
  }
}

}  // namespace

StepStats train_step(ModelBundle& bundle, const Batch& batch, const loss::LossConfig& loss_cfg) {
  loss_cfg.validate();
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const GeneratorConfig& cfg = bundle.config;
  const cam::CameraRig rig = cam::make_rig(cfg.face_w, cfg.face_h, cfg.hfov_deg, cfg.vfov_deg);

  const auto in_ptrs = pointers(batch, false);
  const auto gt_ptrs = pointers(batch, true);
  const std::map<std::string, Tensor> inputs = pack_inputs(in_ptrs, cfg);
  const PackedTargets targets = pack_targets(gt_ptrs, cfg, rig);

  StepStats st;
  st.iteration = bundle.iteration;
  const std::uint64_t step_seed =
      mix_seed(bundle.seed, static_cast<std::uint64_t>(bundle.iteration) + 1);

  ag::Tape tape_g;
  Generator::Out gout;
  try {
    gout = bundle.gen.forward(inputs, true, step_seed);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " at iteration " +
                             std::to_string(bundle.iteration));
  }

  const auto has_out = [&](const char* n) {
    return std::find(cfg.outputs.begin(), cfg.outputs.end(), n) != cfg.outputs.end();
  };

  // Discriminator channel sets. The real branch smooths gt semantics toward
  // the current prediction; fakes are detached so the D update leaves G alone.
  std::map<std::string, ag::Var> real_ch, fake_det, fake_live;
  for (const std::string& name : cfg.outputs) {
    fake_live[name] = gout.streams.at(name);
    Tensor real = targets.streams.at(name);
    if (name == "s")
      real = loss::smooth_real_semantics(targets.labels, gout.streams.at("s")->value,
                                         loss_cfg.gamma);
    real_ch[name] = ag::constant(std::move(real));
  }
  if (cfg.conditional_disc)
    for (const std::string& name : cfg.inputs) {
      ag::Var cond = ag::constant(inputs.at(name));
      real_ch["in:" + name] = cond;
      fake_live["in:" + name] = cond;
    }

  {
    ag::Tape tape_d;
    for (const auto& [name, var] : fake_live)
      fake_det[name] = ag::constant(var->value);
    ag::Var d_loss = loss::adv_loss_d(bundle.disc.forward(real_ch, true),
                                      bundle.disc.forward(fake_det, true));
    st.d_loss = scalar_of(d_loss);
    check_divergence(st, "the discriminator update");
    tape_d.backward(d_loss);
    bundle.disc.params().adam_step_all(bundle.adam_d);
    bundle.disc.params().zero_grads();
  }

  // Generator losses against the just-updated discriminator.
  ag::Var adv_g = loss::adv_loss_g(bundle.disc.forward(fake_live, true));
  st.adv_g = scalar_of(adv_g);

  Tensor sup_mask = targets.valid;
  if (loss_cfg.mask_only) {
    Tensor observed = Tensor::zeros(targets.valid.shape);
    const std::int64_t hw = static_cast<std::int64_t>(cfg.pano_h()) * cfg.pano_w();
    for (size_t b = 0; b < batch.size(); ++b)
      for (std::int64_t i = 0; i < hw; ++i)
        observed.data[static_cast<size_t>(static_cast<std::int64_t>(b) * hw + i)] =
            batch[b].input.mask[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    sup_mask = elementwise_and(sup_mask, observed);
  }

  std::vector<ag::Var> terms;
  const float l1w = loss_cfg.lambda_pixel;
  if (has_out("p")) {
    ag::Var l = loss::l1_masked(gout.streams.at("p"), targets.streams.at("p"), sup_mask);
    st.l1_p = scalar_of(l);
    terms.push_back(ag::mul_scalar(l, l1w));
  }
  if (has_out("d")) {
    ag::Var l = loss::l1_masked(gout.streams.at("d"), targets.streams.at("d"), sup_mask);
    st.l1_d = scalar_of(l);
    terms.push_back(ag::mul_scalar(l, l1w));
  }
  if (has_out("n")) {
    ag::Var l = loss::cosine_loss(gout.streams.at("n"), targets.streams.at("n"), sup_mask);
    st.cos_n = scalar_of(l);
    terms.push_back(ag::mul_scalar(l, l1w));
  }
  if (has_out("s")) {
    ag::Var l = loss::softmax_ce(gout.streams.at("s"), targets.labels, sup_mask, loss_cfg.ce_eps);
    st.ce_s = scalar_of(l);
    terms.push_back(ag::mul_scalar(l, l1w));

    ag::Var dist = loss::distribution_loss(distribution_head(gout.streams.at("s")),
                                           targets.class_dist);
    st.dist = scalar_of(dist);
    terms.push_back(ag::mul_scalar(dist, loss_cfg.lambda_dist));
  }
  if (gout.points) {
    Tensor pn_mask = elementwise_and(targets.points_valid, gout.points_valid);
    pn_mask = elementwise_and(pn_mask, sup_mask);
    ag::Var l = loss::pn_consistency(gout.points, targets.points, pn_mask);
    st.pn = scalar_of(l);
    const float w3 = static_cast<float>(loss::pn_weight_at(bundle.iteration, loss_cfg));
    // the pn term belongs to both the plane and the normal channel totals
    if (w3 > 0.0f) terms.push_back(ag::mul_scalar(l, 2.0f * w3));
  }
  // one shared patch score, added once per output channel total
  terms.push_back(
      ag::mul_scalar(adv_g, loss_cfg.lambda_adv * static_cast<float>(cfg.outputs.size())));

  ag::Var scene_logits = bundle.scene.forward(gout.latent);
  ag::Var sl = loss::scene_loss(scene_logits, targets.scene, loss_cfg.ce_eps);
  st.scene = scalar_of(sl);
  terms.push_back(ag::mul_scalar(sl, loss_cfg.scene_weight));

  ag::Var g_total = terms.front();
  for (size_t i = 1; i < terms.size(); ++i) g_total = ag::add(g_total, terms[i]);
  st.g_total = scalar_of(g_total);
  st.pixel_total = st.l1_p + st.l1_d + st.cos_n + st.ce_s;
  check_divergence(st, "the generator update");

  tape_g.backward(g_total);
  bundle.gen.params().adam_step_all(bundle.adam_g);
  bundle.scene.params().adam_step_all(bundle.adam_g);
  bundle.gen.params().zero_grads();
  bundle.scene.params().zero_grads();
  bundle.disc.params().zero_grads();  // grads that flowed through the frozen D pass

  bundle.iteration += 1;
  return st;
}

Panorama predict(ModelBundle& bundle, const Panorama& masked_input) {
  const GeneratorConfig& cfg = bundle.config;
  const std::map<std::string, Tensor> inputs = pack_inputs({&masked_input}, cfg);
  Generator::Out gout = bundle.gen.forward(inputs, false, 0);

  const int h = cfg.pano_h(), w = cfg.pano_w();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Panorama out;
  out.face_w = cfg.face_w;
  out.face_h = cfg.face_h;
  out.color = Tensor::zeros({3, h, w});
  out.depth = Tensor::zeros({1, h, w});
  out.normal = Tensor::zeros({3, h, w});
  out.pdist = Tensor::zeros({1, h, w});
  out.semantics = Tensor::zeros({sem::kClassCount, h, w});
  out.mask.assign(static_cast<size_t>(hw), 1);

  const auto copy_stream = [&](const char* name, Tensor& dst) {
    const auto it = gout.streams.find(name);
    if (it == gout.streams.end()) return false;
    std::copy(it->second->value.data.begin(), it->second->value.data.end(), dst.data.begin());
    return true;
  };
  copy_stream("s", out.semantics);
  copy_stream("n", out.normal);
  copy_stream("p", out.pdist);
  const bool has_d = copy_stream("d", out.depth);

  if (!has_d && cfg.wants_points()) {
    // depth is the ray parameter of the predicted plane: t = -p / (r·n)
    const Tensor& rays = bundle.gen.rays();
    for (std::int64_t i = 0; i < hw; ++i) {
      const double rn = static_cast<double>(rays.data[static_cast<size_t>(i)]) *
                            out.normal.data[static_cast<size_t>(i)] +
                        static_cast<double>(rays.data[static_cast<size_t>(hw + i)]) *
                            out.normal.data[static_cast<size_t>(hw + i)] +
                        static_cast<double>(rays.data[static_cast<size_t>(2 * hw + i)]) *
                            out.normal.data[static_cast<size_t>(2 * hw + i)];
      if (std::abs(rn) < pg::kEpsRay) continue;
      const double t = -static_cast<double>(out.pdist.data[static_cast<size_t>(i)]) / rn;
      if (t > 0.0) out.depth.data[static_cast<size_t>(i)] = static_cast<float>(t);
    }
  }

  ag::Var scene_logits = bundle.scene.forward(gout.latent);
  int best = 0;
  for (int c = 1; c < sem::kSceneCount; ++c)
    if (scene_logits->value.data[static_cast<size_t>(c)] >
        scene_logits->value.data[static_cast<size_t>(best)])
      best = c;
  out.scene_category = best;
  return out;
}

}  // namespace pano::model
