#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "usaad/blursynth.hpp"
#include "usaad/checkpoint.hpp"
#include "usaad/core/errors.hpp"
#include "usaad/core/random.hpp"
#include "usaad/imaging.hpp"
#include "usaad/losses.hpp"
#include "usaad/networks.hpp"

namespace usaad {

struct TrainConfig {
  int n_scales = 3;
  int image_size = 256;  // M
  FusionMode fusion = FusionMode::Saam;
  double lambda_adv = 1.0;
  double lambda_cyc = 10.0;
  int batch_size = 1;
  int iterations = 2000;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int checkpoint_every = 500;
  std::string blur_dir;
  std::string sharp_dir;
  std::string out_dir = "run";
  int image_channels = 3;
  int base_width = 64;  // stem width; feature channels are 4x this
  int sb_width = 64;
  int d_width = 64;
  int reduction = 16;
  std::string init = "standard";  // standard | near_identity

  void validate() const {
    if (n_scales < 1) throw UsageError("config: n_scales must be >= 1");
    const int div = 1 << (n_scales - 1);
    if (image_size % div != 0)
      throw UsageError("config: image_size must be divisible by 2^(n_scales-1) = " +
                       std::to_string(div));
    const int coarsest = image_size / div;
    if (coarsest % 4 != 0)
      throw UsageError("config: coarsest scale " + std::to_string(coarsest) +
                       " must be divisible by 4");
    PatchDiscriminator<float>::max_stride2_layers(coarsest);  // throws if too small
    if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
    if (iterations < 0) throw UsageError("config: iterations must be >= 0");
    if (learning_rate <= 0) throw UsageError("config: learning_rate must be > 0");
    if (image_channels != 1 && image_channels != 3)
      throw UsageError("config: image_channels must be 1 or 3");
    if (base_width < 1 || sb_width < 1 || d_width < 1)
      throw UsageError("config: widths must be >= 1");
    if (checkpoint_every < 1) throw UsageError("config: checkpoint_every must be >= 1");
    if (init != "standard" && init != "near_identity")
      throw UsageError("config: init must be standard or near_identity");
  }

  nlohmann::json to_json() const {
    return {{"n_scales", n_scales},
            {"image_size", image_size},
            {"fusion", fusion_name(fusion)},
            {"lambda_adv", lambda_adv},
            {"lambda_cyc", lambda_cyc},
            {"batch_size", batch_size},
            {"iterations", iterations},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
            {"blur_dir", blur_dir},
            {"sharp_dir", sharp_dir},
            {"out_dir", out_dir},
            {"image_channels", image_channels},
            {"base_width", base_width},
            {"sb_width", sb_width},
            {"d_width", d_width},
            {"reduction", reduction},
            {"init", init}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.n_scales = j.at("n_scales");
    c.image_size = j.at("image_size");
    c.fusion = parse_fusion(j.at("fusion"));
    c.lambda_adv = j.at("lambda_adv");
    c.lambda_cyc = j.at("lambda_cyc");
    c.batch_size = j.at("batch_size");
    c.iterations = j.at("iterations");
    c.learning_rate = j.at("learning_rate");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.seed = j.at("seed");
    c.checkpoint_every = j.at("checkpoint_every");
    c.blur_dir = j.at("blur_dir");
    c.sharp_dir = j.at("sharp_dir");
    c.out_dir = j.at("out_dir");
    c.image_channels = j.at("image_channels");
    c.base_width = j.at("base_width");
    c.sb_width = j.at("sb_width");
    c.d_width = j.at("d_width");
    c.reduction = j.at("reduction");
    c.init = j.at("init");
    return c;
  }
};

// Table-1 rows: scales x fusion.
inline TrainConfig ablation_preset(const std::string& name) {
  TrainConfig c;
  if (name == "Net1") {
    c.n_scales = 1;
    c.fusion = FusionMode::None;
  } else if (name == "Net2") {
    c.n_scales = 2;
    c.fusion = FusionMode::None;
  } else if (name == "Net3") {
    c.n_scales = 3;
    c.fusion = FusionMode::None;
  } else if (name == "Net4") {
    c.n_scales = 3;
    c.fusion = FusionMode::Add;
  } else if (name == "Net5") {
    c.n_scales = 3;
    c.fusion = FusionMode::Concat;
  } else if (name == "Net6") {
    c.n_scales = 3;
    c.fusion = FusionMode::ChannelAttention;
  } else if (name == "Net7") {
    c.n_scales = 3;
    c.fusion = FusionMode::SpatialAttention;
  } else if (name == "Net8") {
    c.n_scales = 3;
    c.fusion = FusionMode::Saam;
  } else {
    throw UsageError("unknown preset " + name +
                     " (valid: Net1 Net2 Net3 Net4 Net5 Net6 Net7 Net8)");
  }
  return c;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"Net1", "Net2", "Net3", "Net4",
                                              "Net5", "Net6", "Net7", "Net8"};
  return names;
}

template <typename T>
struct Models {
  GeneratorBS<T> g_bs;
  GeneratorSB<T> g_sb;
  PatchDiscriminator<T> d_s;
  PatchDiscriminator<T> d_b;

  std::vector<nn::ParamRef<T>> generator_params() {
    std::vector<nn::ParamRef<T>> out;
    g_bs.params(out);
    g_sb.params(out);
    return out;
  }
  std::vector<nn::ParamRef<T>> discriminator_params() {
    std::vector<nn::ParamRef<T>> out;
    d_s.params(out);
    d_b.params(out);
    return out;
  }
  std::vector<nn::ParamRef<T>> all_params() {
    auto out = generator_params();
    auto d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
  }
};

template <typename T>
Models<T> build_models(const TrainConfig& cfg, Rng& rng) {
  const int coarsest = cfg.image_size >> (cfg.n_scales - 1);
  const int d_layers = PatchDiscriminator<T>::max_stride2_layers(coarsest);
  Models<T> m;
  m.g_bs = GeneratorBS<T>(cfg.image_channels, cfg.base_width, cfg.fusion, cfg.reduction, rng);
  m.g_sb = GeneratorSB<T>(cfg.image_channels, cfg.sb_width, rng);
  m.d_s = PatchDiscriminator<T>("d_s", cfg.image_channels, cfg.d_width, d_layers, rng);
  m.d_b = PatchDiscriminator<T>("d_b", cfg.image_channels, cfg.d_width, d_layers, rng);
  if (cfg.init == "near_identity") {
    // Small-gain image heads: outputs start near zero, in the linear region
    // of tanh, which stabilizes the earliest cycle-loss steps.
    for (auto& p : m.generator_params()) {
      if (p.name == "g_bs.head.w" || p.name == "g_sb.c4.w") {
        for (std::size_t i = 0; i < p.var->value().numel(); ++i)
          p.var->value().data()[i] *= static_cast<T>(0.01);
      }
    }
  }
  return m;
}

template <typename T>
void zero_grads(const std::vector<nn::ParamRef<T>>& params) {
  for (const auto& p : params) p.var->zero_grad();
}

template <typename T>
void set_requires_grad(const std::vector<nn::ParamRef<T>>& params, bool flag) {
  for (const auto& p : params) p.var->set_requires_grad(flag);
}

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double b1, double b2, double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void step(const std::vector<nn::ParamRef<T>>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& p : params) {
      if (!p.var->has_grad()) continue;
      auto& slot = state_[p.name];
      if (slot.m.empty()) {
        slot.m = Tensor<T>::zeros_like(p.var->value());
        slot.v = Tensor<T>::zeros_like(p.var->value());
      }
      T* w = p.var->value().data();
      const T* g = p.var->grad().data();
      T* m = slot.m.data();
      T* v = slot.v.data();
      for (std::size_t i = 0; i < p.var->value().numel(); ++i) {
        m[i] = static_cast<T>(b1_ * m[i] + (1.0 - b1_) * g[i]);
        v[i] = static_cast<T>(b2_ * v[i] + (1.0 - b2_) * static_cast<double>(g[i]) * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  std::int64_t step_count() const { return t_; }

  void serialize(const std::string& prefix, nlohmann::json& hdr,
                 std::map<std::string, Tensor<float>>& blobs) const {
    hdr[prefix] = {{"t", t_}, {"lr", lr_}, {"b1", b1_}, {"b2", b2_}, {"eps", eps_}};
    for (const auto& [name, slot] : state_) {
      blobs[prefix + ".m." + name] = slot.m.template cast<float>();
      blobs[prefix + ".v." + name] = slot.v.template cast<float>();
    }
  }

  void restore(const std::string& prefix, const nlohmann::json& hdr,
               const std::map<std::string, Tensor<float>>& blobs) {
    const auto& j = hdr.at(prefix);
    t_ = j.at("t");
    lr_ = j.at("lr");
    b1_ = j.at("b1");
    b2_ = j.at("b2");
    eps_ = j.at("eps");
    state_.clear();
    const std::string mp = prefix + ".m.";
    for (const auto& [name, blob] : blobs) {
      if (name.rfind(mp, 0) == 0) {
        const std::string pname = name.substr(mp.size());
        Slot slot;
        slot.m = blob.template cast<T>();
        slot.v = blobs.at(prefix + ".v." + pname).template cast<T>();
        state_.emplace(pname, std::move(slot));
      }
    }
  }

 private:
  struct Slot {
    Tensor<T> m, v;
  };
  double lr_ = 2e-4, b1_ = 0.5, b2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> state_;
};

// Refilled by a fresh seeded shuffle once exhausted; blur and sharp groups
// use independent samplers so batches stay unpaired.
struct EpochSampler {
  std::vector<int> order;
  std::size_t cursor = 0;

  int next(int n_items, Rng& rng) {
    if (cursor >= order.size()) {
      order.resize(n_items);
      for (int i = 0; i < n_items; ++i) order[i] = i;
      rng.shuffle(order.begin(), order.end());
      cursor = 0;
    }
    return order[cursor++];
  }

  nlohmann::json to_json() const { return {{"order", order}, {"cursor", cursor}}; }
  static EpochSampler from_json(const nlohmann::json& j) {
    EpochSampler s;
    s.order = j.at("order").get<std::vector<int>>();
    s.cursor = j.at("cursor");
    return s;
  }
};

struct TrainState {
  TrainConfig cfg;
  Models<float> models;
  Adam<float> opt_g, opt_d;
  Rng train_rng{0};
  std::int64_t iteration = 0;
  EpochSampler blur_sampler, sharp_sampler;
};

inline TrainState make_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.cfg = cfg;
  Rng init_rng(cfg.seed);
  st.models = build_models<float>(cfg, init_rng);
  st.opt_g = Adam<float>(cfg.learning_rate, cfg.beta1, cfg.beta2);
  st.opt_d = Adam<float>(cfg.learning_rate, cfg.beta1, cfg.beta2);
  st.train_rng = Rng(Rng::mix(cfg.seed, 0x7261696e));
  return st;
}

inline Checkpoint state_to_checkpoint(TrainState& st) {
  Checkpoint ck;
  ck.header["format"] = 1;
  ck.header["iteration"] = st.iteration;
  ck.header["config"] = st.cfg.to_json();
  ck.header["train_rng"] = st.train_rng.state();
  ck.header["samplers"] = {{"blur", st.blur_sampler.to_json()},
                           {"sharp", st.sharp_sampler.to_json()}};
  for (const auto& p : st.models.all_params()) ck.blobs[p.name] = p.var->value();
  st.opt_g.serialize("adam_g", ck.header, ck.blobs);
  st.opt_d.serialize("adam_d", ck.header, ck.blobs);
  return ck;
}

inline TrainState checkpoint_to_state(const Checkpoint& ck) {
  TrainState st;
  st.cfg = TrainConfig::from_json(ck.header.at("config"));
  Rng init_rng(st.cfg.seed);
  st.models = build_models<float>(st.cfg, init_rng);
  for (const auto& p : st.models.all_params()) {
    auto it = ck.blobs.find(p.name);
    if (it == ck.blobs.end()) throw DataError("checkpoint missing parameter " + p.name);
    if (!it->second.same_shape(p.var->value()))
      throw DataError("checkpoint parameter shape mismatch: " + p.name);
    p.var->value() = it->second;
  }
  st.opt_g = Adam<float>(st.cfg.learning_rate, st.cfg.beta1, st.cfg.beta2);
  st.opt_d = Adam<float>(st.cfg.learning_rate, st.cfg.beta1, st.cfg.beta2);
  st.opt_g.restore("adam_g", ck.header, ck.blobs);
  st.opt_d.restore("adam_d", ck.header, ck.blobs);
  st.train_rng.set_state(ck.header.at("train_rng"));
  st.iteration = ck.header.at("iteration");
  st.blur_sampler = EpochSampler::from_json(ck.header.at("samplers").at("blur"));
  st.sharp_sampler = EpochSampler::from_json(ck.header.at("samplers").at("sharp"));
  return st;
}

template <typename T>
struct ScaleForward {
  ad::Var<T> fake_sharp;  // G_BS(B^i)
  ad::Var<T> reblur;      // G_SB(fake_sharp)
  ad::Var<T> fake_blur;   // G_SB(S^i)
  ad::Var<T> resharp;     // G_BS(fake_blur), its own recurrence thread
};

// Coarse-to-fine pass of both cycles. The blur->sharp->blur cycle and the
// sharp->blur->sharp cycle each thread their own (image, features) state
// through the shared G_B->S.
template <typename T>
std::vector<ScaleForward<T>> run_cycles(const GeneratorBS<T>& g_bs, const GeneratorSB<T>& g_sb,
                                        const std::vector<ad::Var<T>>& blur_pyr,
                                        const std::vector<ad::Var<T>>& sharp_pyr) {
  std::vector<ScaleForward<T>> out;
  std::optional<ScaleState<T>> prev_deblur, prev_recon;
  for (std::size_t i = 0; i < blur_pyr.size(); ++i) {
    ScaleState<T> deblur = g_bs.forward(blur_pyr[i], prev_deblur);
    ad::Var<T> reblur = g_sb.forward(deblur.image);
    ad::Var<T> fake_blur = g_sb.forward(sharp_pyr[i]);
    ScaleState<T> recon = g_bs.forward(fake_blur, prev_recon);
    out.push_back({deblur.image, reblur, fake_blur, recon.image});
    prev_deblur = deblur;
    prev_recon = recon;
  }
  return out;
}

template <typename T>
std::vector<ad::Var<T>> pyramid_vars(const ImagePyramid& pyr) {
  std::vector<ad::Var<T>> out;
  for (const auto& level : pyr.levels) out.push_back(ad::constant(level.template cast<T>()));
  return out;
}

// One alternating min-max step: discriminators first on detached fakes, then
// the generators on the adversarial + cycle objective.
inline LossBundle train_step(TrainState& st, const ImageBatch& batch_blur,
                             const ImageBatch& batch_sharp) {
  const TrainConfig& cfg = st.cfg;
  if (batch_blur.h() != cfg.image_size || batch_sharp.h() != cfg.image_size)
    throw UsageError("train_step: batches must be at config image_size");

  ImagePyramid bp = build_pyramid(batch_blur, cfg.n_scales);
  ImagePyramid sp = build_pyramid(batch_sharp, cfg.n_scales);
  auto blur_pyr = pyramid_vars<float>(bp);
  auto sharp_pyr = pyramid_vars<float>(sp);

  LossBundle bundle;
  bundle.lambda_adv = cfg.lambda_adv;
  bundle.lambda_cyc = cfg.lambda_cyc;
  bundle.scales.resize(cfg.n_scales);

  auto g_params = st.models.generator_params();
  auto d_params = st.models.discriminator_params();

  // --- discriminator phase ---
  std::vector<ad::Var<float>> fake_sharp, fake_blur;
  {
    ad::NoGradGuard ng;
    std::optional<ScaleState<float>> prev;
    for (int i = 0; i < cfg.n_scales; ++i) {
      ScaleState<float> s = st.models.g_bs.forward(blur_pyr[i], prev);
      fake_sharp.push_back(s.image);
      prev = s;
    }
    for (int i = 0; i < cfg.n_scales; ++i)
      fake_blur.push_back(st.models.g_sb.forward(sharp_pyr[i]));
  }

  zero_grads(d_params);
  ad::Var<float> d_obj;
  for (int i = 0; i < cfg.n_scales; ++i) {
    auto v_bs = gan_loss(st.models.d_s.forward(sharp_pyr[i]),
                         st.models.d_s.forward(fake_sharp[i]), GanSide::Discriminator);
    auto v_sb = gan_loss(st.models.d_b.forward(blur_pyr[i]),
                         st.models.d_b.forward(fake_blur[i]), GanSide::Discriminator);
    bundle.scales[i].gan_bs = v_bs.value().data()[0];
    bundle.scales[i].gan_sb = v_sb.value().data()[0];
    auto sum = ad::add_scalar_var(v_bs, v_sb);
    d_obj = d_obj.defined() ? ad::add_scalar_var(d_obj, sum) : sum;
  }
  // D maximizes the objective; minimize its negation scaled by lambda_adv.
  ad::backward(ad::scale(d_obj, static_cast<float>(-cfg.lambda_adv)));
  st.opt_d.step(d_params);

  // --- generator phase (discriminators frozen) ---
  set_requires_grad(d_params, false);
  zero_grads(g_params);
  auto scales = run_cycles(st.models.g_bs, st.models.g_sb, blur_pyr, sharp_pyr);
  ad::Var<float> g_obj;
  for (int i = 0; i < cfg.n_scales; ++i) {
    auto fs_logits = st.models.d_s.forward(scales[i].fake_sharp);
    auto fb_logits = st.models.d_b.forward(scales[i].fake_blur);
    auto adv = ad::add_scalar_var(gan_loss(fs_logits, fs_logits, GanSide::Generator),
                                  gan_loss(fb_logits, fb_logits, GanSide::Generator));
    auto cyc_b = cycle_loss(scales[i].reblur, blur_pyr[i]);
    auto cyc_s = cycle_loss(scales[i].resharp, sharp_pyr[i]);
    bundle.scales[i].cyc_b = cyc_b.value().data()[0];
    bundle.scales[i].cyc_s = cyc_s.value().data()[0];
    auto cyc = ad::add_scalar_var(cyc_b, cyc_s);
    auto term = ad::add_scalar_var(ad::scale(adv, static_cast<float>(-cfg.lambda_adv)),
                                   ad::scale(cyc, static_cast<float>(cfg.lambda_cyc)));
    g_obj = g_obj.defined() ? ad::add_scalar_var(g_obj, term) : term;
  }
  ad::backward(g_obj);
  st.opt_g.step(g_params);
  set_requires_grad(d_params, true);

  if (!bundle.finite())
    throw NumericError("non-finite loss: " + bundle.first_non_finite() + " (iteration " +
                       std::to_string(st.iteration + 1) + ")");
  return bundle;
}

namespace trainerdetail {

inline std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void append_csv_rows(std::ofstream& csv, std::int64_t iter, const LossBundle& b) {
  double tb = 0, ts = 0, tcb = 0, tcs = 0;
  for (std::size_t i = 0; i < b.scales.size(); ++i) {
    const auto& s = b.scales[i];
    csv << iter << ',' << (i + 1) << ',' << format_float(s.gan_bs) << ','
        << format_float(s.gan_sb) << ',' << format_float(s.cyc_b) << ','
        << format_float(s.cyc_s) << ','
        << format_float(s.weighted_total(b.lambda_adv, b.lambda_cyc)) << '\n';
    tb += s.gan_bs;
    ts += s.gan_sb;
    tcb += s.cyc_b;
    tcs += s.cyc_s;
  }
  csv << iter << ",total," << format_float(tb) << ',' << format_float(ts) << ','
      << format_float(tcb) << ',' << format_float(tcs) << ',' << format_float(b.total()) << '\n';
}

inline std::string checkpoint_name(std::int64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08" PRId64 ".usaad", iter);
  return buf;
}

// Decodes, resizes to M x M, caches. Batches are assembled from cached
// single-image tensors.
class CorpusLoader {
 public:
  CorpusLoader(std::vector<std::filesystem::path> files, int channels, int size)
      : files_(std::move(files)), channels_(channels), size_(size) {}

  int count() const { return static_cast<int>(files_.size()); }

  const ImageBatch& get(int idx) {
    auto it = cache_.find(idx);
    if (it != cache_.end()) return it->second;
    ImageBatch one = load_image(files_[idx], channels_);
    if (one.h() != size_ || one.w() != size_) one = resample_bicubic(one, size_, size_);
    for (float* p = one.data(); p != one.data() + one.numel(); ++p)
      *p = std::clamp(*p, -1.0f, 1.0f);
    return cache_.emplace(idx, std::move(one)).first->second;
  }

  ImageBatch batch(const std::vector<int>& idx) {
    ImageBatch out(static_cast<int>(idx.size()), channels_, size_, size_);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const ImageBatch& one = get(idx[i]);
      std::copy_n(one.data(), one.numel(), out.data() + i * one.numel());
    }
    return out;
  }

 private:
  std::vector<std::filesystem::path> files_;
  int channels_, size_;
  std::unordered_map<int, ImageBatch> cache_;
};

}  // namespace trainerdetail

struct FitResult {
  std::vector<LossBundle> history;
  std::filesystem::path final_checkpoint;
  std::filesystem::path history_csv;
};

// Runs the min-max loop over unpaired batches. With a resume checkpoint the
// model, optimizer, RNG and sampler state continue exactly where the
// original run stopped; out_dir and the iteration target come from cfg.
inline FitResult fit(const TrainConfig& cfg, const std::filesystem::path& resume_from = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (cfg.blur_dir.empty() || cfg.sharp_dir.empty())
    throw UsageError("config: blur_dir and sharp_dir are required");
  if (fs::weakly_canonical(cfg.blur_dir) == fs::weakly_canonical(cfg.sharp_dir))
    throw DataError("blur and sharp corpus directories must be disjoint");

  TrainState st;
  if (resume_from.empty()) {
    st = make_train_state(cfg);
  } else {
    st = checkpoint_to_state(Checkpoint::load(resume_from));
    st.cfg.out_dir = cfg.out_dir;
    st.cfg.iterations = cfg.iterations;
  }

  trainerdetail::CorpusLoader blur_loader(list_image_files(st.cfg.blur_dir),
                                          st.cfg.image_channels, st.cfg.image_size);
  trainerdetail::CorpusLoader sharp_loader(list_image_files(st.cfg.sharp_dir),
                                           st.cfg.image_channels, st.cfg.image_size);
  if (blur_loader.count() == 0 || sharp_loader.count() == 0)
    throw DataError("empty corpus directory");

  fs::create_directories(st.cfg.out_dir);
  FitResult result;
  result.history_csv = fs::path(st.cfg.out_dir) / "history.csv";
  std::ofstream csv(result.history_csv);
  csv << "iter,scale,gan_bs,gan_sb,cyc_b,cyc_s,total\n";

  if (resume_from.empty()) {
    Checkpoint initial = state_to_checkpoint(st);
    initial.save(fs::path(st.cfg.out_dir) / trainerdetail::checkpoint_name(0));
  }

  result.final_checkpoint = fs::path(st.cfg.out_dir) / trainerdetail::checkpoint_name(st.iteration);
  for (std::int64_t it = st.iteration + 1; it <= st.cfg.iterations; ++it) {
    std::vector<int> bidx(st.cfg.batch_size), sidx(st.cfg.batch_size);
    for (int b = 0; b < st.cfg.batch_size; ++b)
      bidx[b] = st.blur_sampler.next(blur_loader.count(), st.train_rng);
    for (int b = 0; b < st.cfg.batch_size; ++b)
      sidx[b] = st.sharp_sampler.next(sharp_loader.count(), st.train_rng);

    LossBundle bundle = train_step(st, blur_loader.batch(bidx), sharp_loader.batch(sidx));
    st.iteration = it;
    trainerdetail::append_csv_rows(csv, it, bundle);
    csv.flush();
    result.history.push_back(std::move(bundle));

    if (it % st.cfg.checkpoint_every == 0 || it == st.cfg.iterations) {
      Checkpoint ck = state_to_checkpoint(st);
      result.final_checkpoint = fs::path(st.cfg.out_dir) / trainerdetail::checkpoint_name(it);
      ck.save(result.final_checkpoint);
    }
  }
  return result;
}

// Full coarse-to-fine restoration pass; the finest-scale estimate is the
// output. Inputs whose size is not runnable are resized to the nearest
// valid square and the result is resized back.
inline ImageBatch run_inference(const Models<float>& models, int n_scales,
                                const ImageBatch& input) {
  ad::NoGradGuard ng;
  const int div = (1 << (n_scales - 1)) * 4;
  int side = static_cast<int>(std::lround((input.h() + input.w()) / 2.0 / div)) * div;
  if (side < div) side = div;

  ImageBatch square = input;
  if (input.h() != side || input.w() != side)
    square = ad::bilinear_resize(ad::constant(input), side, side).value();

  ImagePyramid pyr = build_pyramid(square, n_scales);
  std::optional<ScaleState<float>> prev;
  for (const auto& level : pyr.levels) {
    ScaleState<float> s = models.g_bs.forward(ad::constant(level), prev);
    prev = s;
  }
  ImageBatch out = prev->image.value();
  if (out.h() != input.h() || out.w() != input.w())
    out = ad::bilinear_resize(ad::constant(out), input.h(), input.w()).value();
  return out;
}

inline ImageBatch infer(const Checkpoint& ck, const ImageBatch& image) {
  TrainState st = checkpoint_to_state(ck);
  return run_inference(st.models, st.cfg.n_scales, image);
}

}  // namespace usaad
