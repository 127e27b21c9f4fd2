// SPDX-License-Identifier: Apache-2.0

#include "sgia/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sgia/error.hpp"
#include "sgia/image.hpp"
#include "sgia/kernels.hpp"
#include "sgia/rng.hpp"

namespace sgia {

std::string to_string(TrainableScope scope) {
  return scope == TrainableScope::kHeadOnly ? "head-only" : "full";
}

namespace {

std::vector<ConvSpec> backbone_layers(const std::string& id) {
  if (id == "linear") return {};
  if (id == "small-cnn") return {{3, 8}, {8, 16}};
  if (id == "wide-cnn") return {{3, 16}, {16, 32}};
  throw ConfigError("unknown backbone '" + id + "' (linear, small-cnn, wide-cnn)");
}

void fill_uniform(std::vector<float>& v, double bound, Rng& rng) {
  for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
}

// cols row p = 3x3 neighbourhood (zero padded) of pixel p over all channels,
// ordered [channel][dy][dx].
void im2col(const float* in, int channels, int h, int w, std::vector<float>& cols) {
  const int d = channels * 9;
  cols.assign(static_cast<std::size_t>(h) * w * d, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* row = cols.data() + (static_cast<std::size_t>(y) * w + x) * d;
      for (int c = 0; c < channels; ++c) {
        const float* plane = in + static_cast<std::size_t>(c) * h * w;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            row[c * 9 + (dy + 1) * 3 + (dx + 1)] = plane[yy * w + xx];
          }
        }
      }
    }
  }
}

void col2im(const std::vector<float>& dcols, int channels, int h, int w, float* grad_in) {
  const int d = channels * 9;
  std::fill(grad_in, grad_in + static_cast<std::size_t>(channels) * h * w, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float* row = dcols.data() + (static_cast<std::size_t>(y) * w + x) * d;
      for (int c = 0; c < channels; ++c) {
        float* plane = grad_in + static_cast<std::size_t>(c) * h * w;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            plane[yy * w + xx] += row[c * 9 + (dy + 1) * 3 + (dx + 1)];
          }
        }
      }
    }
  }
}

constexpr char kMagic[8] = {'S', 'G', 'I', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}

}  // namespace

Network::Network(const std::string& backbone_id, int input_size, int class_count,
                 std::uint64_t init_seed)
    : backbone_id_(backbone_id), input_size_(input_size), convs_(backbone_layers(backbone_id)) {
  if (class_count < 1) throw ConfigError("class_count must be >= 1");
  const int pools = static_cast<int>(convs_.size());
  if (input_size < 1 || input_size % (1 << pools) != 0)
    throw ConfigError("input size " + std::to_string(input_size) + " must be divisible by " +
                      std::to_string(1 << pools) + " for backbone " + backbone_id);
  build(class_count, init_seed);
}

std::vector<std::string> Network::known_backbones() { return {"linear", "small-cnn", "wide-cnn"}; }

void Network::build(int class_count, std::uint64_t init_seed) {
  class_count_ = class_count;
  params_.clear();
  Rng rng(init_seed);
  int side = input_size_;
  int channels = 3;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    const auto& c = convs_[l];
    const int fan_in = c.in_channels * 9;
    ParamBlock w{"conv" + std::to_string(l) + ".w", false,
                 std::vector<float>(static_cast<std::size_t>(c.out_channels) * fan_in), {}, {}};
    fill_uniform(w.value, std::sqrt(6.0 / fan_in), rng);
    ParamBlock b{"conv" + std::to_string(l) + ".b", false,
                 std::vector<float>(c.out_channels, 0.0f), {}, {}};
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
    side /= 2;
    channels = c.out_channels;
  }
  feature_dim_ = channels * side * side;
  reset_head(class_count, hash_seed({init_seed, 0x4eadULL}));
  for (auto& p : params_) p.grad.assign(p.value.size(), 0.0f);
}

void Network::reset_head(int class_count, std::uint64_t init_seed) {
  class_count_ = class_count;
  std::erase_if(params_, [](const ParamBlock& p) { return p.is_head; });
  Rng rng(init_seed);
  ParamBlock w{"head.w", true,
               std::vector<float>(static_cast<std::size_t>(class_count) * feature_dim_), {}, {}};
  fill_uniform(w.value, 1.0 / std::sqrt(static_cast<double>(feature_dim_)), rng);
  ParamBlock b{"head.b", true, std::vector<float>(class_count, 0.0f), {}, {}};
  w.grad.assign(w.value.size(), 0.0f);
  b.grad.assign(b.value.size(), 0.0f);
  params_.push_back(std::move(w));
  params_.push_back(std::move(b));
}

void Network::check_input(const Tensor& input) const {
  if (input.channels != 3 || input.height != input_size_ || input.width != input_size_)
    throw DataError("network expects 3x" + std::to_string(input_size_) + "x" +
                    std::to_string(input_size_) + " input, got " +
                    std::to_string(input.channels) + "x" + std::to_string(input.height) + "x" +
                    std::to_string(input.width));
}

void Network::forward(const Tensor& input, Workspace& ws) const {
  check_input(input);
  const auto& k = kernels::active();
  const std::size_t layers = convs_.size();
  ws.cols.resize(layers);
  ws.pre_act.resize(layers);
  ws.pooled.resize(layers);

  const float* x = input.data.data();
  int side = input_size_;
  std::vector<float> act;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& c = convs_[l];
    const int d = c.in_channels * 9;
    const int hw = side * side;
    im2col(x, c.in_channels, side, side, ws.cols[l]);
    const auto& w = params_[2 * l].value;
    const auto& b = params_[2 * l + 1].value;
    auto& pre = ws.pre_act[l];
    pre.resize(static_cast<std::size_t>(c.out_channels) * hw);
    for (int co = 0; co < c.out_channels; ++co) {
      const float* wrow = w.data() + static_cast<std::size_t>(co) * d;
      float* out = pre.data() + static_cast<std::size_t>(co) * hw;
      for (int p = 0; p < hw; ++p)
        out[p] = k.dot(wrow, ws.cols[l].data() + static_cast<std::size_t>(p) * d, d) + b[co];
    }
    act.resize(pre.size());
    k.relu(pre.data(), act.data(), pre.size());
    const int half = side / 2;
    auto& pooled = ws.pooled[l];
    pooled.resize(static_cast<std::size_t>(c.out_channels) * half * half);
    for (int co = 0; co < c.out_channels; ++co) {
      const float* a = act.data() + static_cast<std::size_t>(co) * hw;
      float* o = pooled.data() + static_cast<std::size_t>(co) * half * half;
      for (int y = 0; y < half; ++y)
        for (int xx = 0; xx < half; ++xx)
          o[y * half + xx] = 0.25f * (a[(2 * y) * side + 2 * xx] + a[(2 * y) * side + 2 * xx + 1] +
                                      a[(2 * y + 1) * side + 2 * xx] +
                                      a[(2 * y + 1) * side + 2 * xx + 1]);
    }
    x = pooled.data();
    side = half;
  }
  ws.features.assign(x, x + feature_dim_);

  const auto& hw_ = params_[params_.size() - 2].value;
  const auto& hb = params_.back().value;
  ws.logits.resize(class_count_);
  for (int c = 0; c < class_count_; ++c)
    ws.logits[c] =
        k.dot(hw_.data() + static_cast<std::size_t>(c) * feature_dim_, ws.features.data(),
              feature_dim_) +
        hb[c];
}

std::vector<float> Network::logits(const Tensor& input) const {
  forward(input, ws_);
  return ws_.logits;
}

int Network::predict(const Tensor& input) const {
  forward(input, ws_);
  return static_cast<int>(std::max_element(ws_.logits.begin(), ws_.logits.end()) -
                          ws_.logits.begin());
}

double Network::accumulate_gradients(const Tensor& input, int label, TrainableScope scope) {
  if (label < 0 || label >= class_count_) throw DataError("label outside head width");
  forward(input, ws_);
  const auto& k = kernels::active();

  // softmax cross-entropy in double
  const double max_logit = *std::max_element(ws_.logits.begin(), ws_.logits.end());
  double denom = 0.0;
  for (float z : ws_.logits) denom += std::exp(static_cast<double>(z) - max_logit);
  const double log_z = max_logit + std::log(denom);
  const double loss = log_z - ws_.logits[label];
  std::vector<float> g(class_count_);
  for (int c = 0; c < class_count_; ++c)
    g[c] = static_cast<float>(std::exp(static_cast<double>(ws_.logits[c]) - log_z) -
                              (c == label ? 1.0 : 0.0));

  auto& head_w = params_[params_.size() - 2];
  auto& head_b = params_.back();
  for (int c = 0; c < class_count_; ++c) {
    k.axpy(g[c], ws_.features.data(),
           head_w.grad.data() + static_cast<std::size_t>(c) * feature_dim_, feature_dim_);
    head_b.grad[c] += g[c];
  }
  if (scope == TrainableScope::kHeadOnly || convs_.empty()) return loss;

  std::vector<float> grad_x(feature_dim_, 0.0f);
  for (int c = 0; c < class_count_; ++c)
    k.axpy(g[c], head_w.value.data() + static_cast<std::size_t>(c) * feature_dim_,
           grad_x.data(), feature_dim_);

  int side = input_size_ >> convs_.size();
  std::vector<float> g_act;
  std::vector<float> dcols;
  for (std::size_t li = convs_.size(); li-- > 0;) {
    const auto& c = convs_[li];
    const int half = side;
    side *= 2;
    const int hw = side * side;
    const int d = c.in_channels * 9;
    // unpool
    g_act.assign(static_cast<std::size_t>(c.out_channels) * hw, 0.0f);
    for (int co = 0; co < c.out_channels; ++co) {
      const float* gp = grad_x.data() + static_cast<std::size_t>(co) * half * half;
      float* ga = g_act.data() + static_cast<std::size_t>(co) * hw;
      for (int y = 0; y < side; ++y)
        for (int xx = 0; xx < side; ++xx) ga[y * side + xx] = 0.25f * gp[(y / 2) * half + xx / 2];
    }
    k.relu_backward(ws_.pre_act[li].data(), g_act.data(), g_act.size());

    auto& w = params_[2 * li];
    auto& b = params_[2 * li + 1];
    const auto& cols = ws_.cols[li];
    const bool need_input_grad = li > 0;
    if (need_input_grad) dcols.assign(static_cast<std::size_t>(hw) * d, 0.0f);
    for (int co = 0; co < c.out_channels; ++co) {
      const float* ga = g_act.data() + static_cast<std::size_t>(co) * hw;
      float* dw = w.grad.data() + static_cast<std::size_t>(co) * d;
      const float* wrow = w.value.data() + static_cast<std::size_t>(co) * d;
      float bsum = 0.0f;
      for (int p = 0; p < hw; ++p) {
        const float gv = ga[p];
        if (gv == 0.0f) continue;
        bsum += gv;
        k.axpy(gv, cols.data() + static_cast<std::size_t>(p) * d, dw, d);
        if (need_input_grad) k.axpy(gv, wrow, dcols.data() + static_cast<std::size_t>(p) * d, d);
      }
      b.grad[co] += bsum;
    }
    if (need_input_grad) {
      grad_x.resize(static_cast<std::size_t>(c.in_channels) * hw);
      col2im(dcols, c.in_channels, side, side, grad_x.data());
    }
  }
  return loss;
}

void Network::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

void Network::sgd_step(TrainableScope scope, float lr, float weight_decay, float momentum,
                       float grad_scale) {
  const auto& k = kernels::active();
  for (auto& p : params_) {
    if (scope == TrainableScope::kHeadOnly && !p.is_head) continue;
    if (momentum == 0.0f) {
      k.sgd_step(p.value.data(), p.grad.data(), p.value.size(), lr, weight_decay, grad_scale);
    } else {
      if (p.velocity.size() != p.value.size()) p.velocity.assign(p.value.size(), 0.0f);
      k.sgd_momentum_step(p.value.data(), p.velocity.data(), p.grad.data(), p.value.size(), lr,
                          weight_decay, grad_scale, momentum);
    }
  }
}

void Network::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    const auto id_len = static_cast<std::uint32_t>(backbone_id_.size());
    put(out, id_len);
    out.write(backbone_id_.data(), id_len);
    put(out, static_cast<std::int32_t>(input_size_));
    put(out, static_cast<std::int32_t>(class_count_));
    put(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
      const auto n = static_cast<std::uint32_t>(p.name.size());
      put(out, n);
      out.write(p.name.data(), n);
      put(out, static_cast<std::uint8_t>(p.is_head));
      put(out, static_cast<std::uint64_t>(p.value.size()));
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    }
    if (!out) throw DataError("short write to checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Network Network::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path.string() + " is not a checkpoint");
  if (get<std::uint32_t>(in) != kVersion) throw DataError("unsupported checkpoint version");
  const auto id_len = get<std::uint32_t>(in);
  std::string id(id_len, '\0');
  in.read(id.data(), id_len);
  const int input_size = get<std::int32_t>(in);
  const int class_count = get<std::int32_t>(in);
  Network net(id, input_size, class_count, 0);
  const auto blocks = get<std::uint32_t>(in);
  if (blocks != net.params_.size()) throw DataError("checkpoint parameter layout mismatch");
  for (auto& p : net.params_) {
    const auto n = get<std::uint32_t>(in);
    std::string name(n, '\0');
    in.read(name.data(), n);
    const bool is_head = get<std::uint8_t>(in) != 0;
    const auto count = get<std::uint64_t>(in);
    if (name != p.name || is_head != p.is_head || count != p.value.size())
      throw DataError("checkpoint parameter layout mismatch at " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint");
  }
  return net;
}

bool operator==(const Network& a, const Network& b) {
  if (a.backbone_id_ != b.backbone_id_ || a.input_size_ != b.input_size_ ||
      a.class_count_ != b.class_count_ || a.params_.size() != b.params_.size())
    return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i)
    if (a.params_[i].value != b.params_[i].value) return false;
  return true;
}

nlohmann::json CheckpointInfo::to_json() const {
  return {{"backbone_id", backbone_id}, {"class_count", class_count}, {"input_size", input_size},
          {"stage", stage},             {"epoch", epoch},             {"seed", seed}};
}

CheckpointInfo CheckpointInfo::from_json(const nlohmann::json& j) {
  CheckpointInfo info;
  info.backbone_id = j.at("backbone_id").get<std::string>();
  info.class_count = j.at("class_count").get<int>();
  info.input_size = j.value("input_size", 0);
  info.stage = j.value("stage", "");
  info.epoch = j.value("epoch", 0);
  info.seed = j.value("seed", std::uint64_t{0});
  return info;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const CheckpointInfo& info) {
  net.save(path);
  const auto text = info.to_json().dump(2) + "\n";
  auto sidecar = path;
  sidecar += ".json";
  write_file_atomic(sidecar, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                       text.size()));
}

Network load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  Network net = Network::load(path);
  auto sidecar = path;
  sidecar += ".json";
  if (info != nullptr) {
    const auto bytes = read_file_bytes(sidecar);
    *info = CheckpointInfo::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
    if (info->backbone_id != net.backbone_id() || info->class_count != net.class_count())
      throw DataError("checkpoint descriptor disagrees with weights: " + sidecar.string());
  }
  return net;
}

ModelHandle make_model(const std::string& backbone_id, int input_size, int class_count,
                       std::uint64_t init_seed) {
  ModelHandle h;
  h.backbone_id = backbone_id;
  h.pretrained_source = "init:" + std::to_string(init_seed);
  h.trainable_scope = TrainableScope::kFull;
  h.network = Network(backbone_id, input_size, class_count, init_seed);
  return h;
}

}  // namespace sgia
