/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dynpet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dynpet {

namespace {

Tensor he_normal(std::vector<int> shape, std::int64_t fan_in,
                 std::mt19937_64& rng) {
  return Tensor::randn(std::move(shape), rng,
                       std::sqrt(2.0 / static_cast<double>(fan_in)),
                       /*requires_grad=*/true);
}

Tensor xavier_normal(std::vector<int> shape, std::int64_t fan_in,
                     std::mt19937_64& rng) {
  return Tensor::randn(std::move(shape), rng,
                       std::sqrt(1.0 / static_cast<double>(fan_in)),
                       /*requires_grad=*/true);
}

Tensor zero_param(std::vector<int> shape) {
  return Tensor::zeros(std::move(shape), /*requires_grad=*/true);
}

void copy_into(const std::vector<NamedParam>& entries, const NamedParam& dst) {
  for (const NamedParam& e : entries) {
    if (e.name != dst.name) continue;
    if (e.tensor.shape() != dst.tensor.shape())
      throw std::runtime_error("checkpoint entry '" + e.name +
                               "' has shape " + shape_str(e.tensor.shape()) +
                               ", expected " + shape_str(dst.tensor.shape()));
    Tensor target = dst.tensor;  // shared handle, aliases the parameter
    target.data() = e.tensor.data();
    return;
  }
  throw std::runtime_error("checkpoint is missing entry '" + dst.name + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// temporal encoder

TemporalEncoder::TemporalEncoder(int hidden, int out_channels,
                                 std::mt19937_64& rng)
    : hidden_(hidden), out_channels_(out_channels) {
  const int f = 3 + hidden;  // per-step features plus recurrent state
  lstm_.wi = xavier_normal({hidden, f}, f, rng);
  lstm_.bi = zero_param({hidden});
  lstm_.wf = xavier_normal({hidden, f}, f, rng);
  lstm_.bf = Tensor::full({hidden}, 1.0, /*requires_grad=*/true);
  lstm_.wg = xavier_normal({hidden, f}, f, rng);
  lstm_.bg = zero_param({hidden});
  lstm_.wo = xavier_normal({hidden, f}, f, rng);
  lstm_.bo = zero_param({hidden});
  conv_w_ = he_normal({hidden, hidden, 3}, 3 * hidden, rng);
  conv_b_ = zero_param({hidden});
  // Zero head: an untrained encoder modulates with gamma=1, beta=0.
  head_w_ = zero_param({2 * out_channels, hidden});
  head_b_ = zero_param({2 * out_channels});
}

std::pair<Tensor, Tensor> TemporalEncoder::modulation(
    const TemporalInput& input) const {
  const int t_len = static_cast<int>(input.rvbp.size());
  if (t_len < 1 || input.lvbp.size() != input.rvbp.size() ||
      input.num_frames != t_len)
    throw std::invalid_argument("temporal encoder: TAC length mismatch");
  if (input.frame_index < 0 || input.frame_index >= t_len)
    throw std::invalid_argument("temporal encoder: frame index out of range");

  double norm = 0.0;
  for (double v : input.rvbp) norm = std::max(norm, std::abs(v));
  for (double v : input.lvbp) norm = std::max(norm, std::abs(v));
  if (norm <= 0.0) norm = 1.0;

  LstmState state;
  state.h = Tensor::zeros({hidden_});
  state.c = Tensor::zeros({hidden_});
  std::vector<Tensor> rows;
  rows.reserve(t_len);
  for (int t = 0; t < t_len; ++t) {
    const Tensor x = Tensor::from(
        {3}, {input.rvbp[t] / norm, input.lvbp[t] / norm,
              t == input.frame_index ? 1.0 : 0.0});
    state = lstm_cell(x, state, lstm_);
    rows.push_back(reshape(state.h, {1, hidden_}));
  }
  const Tensor seq = transpose2d(concat(rows));        // [H, T]
  const Tensor conv = relu(conv1d(seq, conv_w_, conv_b_, /*pad=*/1));
  const Tensor pooled = row_mean(conv);                // [H]
  const Tensor head = linear(pooled, head_w_, head_b_);
  const Tensor gamma = add_scalar(slice0(head, 0, out_channels_), 1.0);
  const Tensor beta = slice0(head, out_channels_, 2 * out_channels_);
  return {gamma, beta};
}

void TemporalEncoder::collect(const std::string& prefix,
                              std::vector<NamedParam>* out) const {
  out->push_back({prefix + ".lstm.wi", lstm_.wi});
  out->push_back({prefix + ".lstm.bi", lstm_.bi});
  out->push_back({prefix + ".lstm.wf", lstm_.wf});
  out->push_back({prefix + ".lstm.bf", lstm_.bf});
  out->push_back({prefix + ".lstm.wg", lstm_.wg});
  out->push_back({prefix + ".lstm.bg", lstm_.bg});
  out->push_back({prefix + ".lstm.wo", lstm_.wo});
  out->push_back({prefix + ".lstm.bo", lstm_.bo});
  out->push_back({prefix + ".conv.w", conv_w_});
  out->push_back({prefix + ".conv.b", conv_b_});
  out->push_back({prefix + ".head.w", head_w_});
  out->push_back({prefix + ".head.b", head_b_});
}

// ---------------------------------------------------------------------------
// generator

Generator::Generator(const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.levels < 1 || cfg.base_channels < 1 || cfg.lstm_hidden < 1)
    throw std::invalid_argument("generator: bad architecture parameters");
  const int levels = cfg.levels;
  auto ch = [&](int l) { return cfg.base_channels << l; };

  for (int l = 0; l < levels; ++l) {
    const int cin = l == 0 ? 2 : ch(l - 1);
    enc_.push_back({he_normal({ch(l), cin, 3, 3, 3},
                              static_cast<std::int64_t>(cin) * 27, rng),
                    zero_param({ch(l)})});
  }
  for (int l = levels - 1; l >= 1; --l) {
    up_.push_back({he_normal({ch(l), ch(l - 1), 2, 2, 2},
                             static_cast<std::int64_t>(ch(l)) * 8, rng),
                   zero_param({ch(l - 1)})});
    dec_.push_back({he_normal({ch(l - 1), 2 * ch(l - 1), 3, 3, 3},
                              static_cast<std::int64_t>(2 * ch(l - 1)) * 27,
                              rng),
                    zero_param({ch(l - 1)})});
  }
  up_.push_back({he_normal({ch(0), ch(0), 2, 2, 2},
                           static_cast<std::int64_t>(ch(0)) * 8, rng),
                 zero_param({ch(0)})});
  final_ = {xavier_normal({1, ch(0) + 2, 3, 3, 3},
                          static_cast<std::int64_t>(ch(0) + 2) * 27, rng),
            zero_param({1})};
  temporal_ = TemporalEncoder(cfg.lstm_hidden, ch(levels - 1), rng);
}

Tensor Generator::forward(const Tensor& x, const TemporalInput& temporal) const {
  if (x.rank() != 4 || x.dim(0) != 2)
    shape_error("generator",
                "input must be [2,X,Y,Z], got " + shape_str(x.shape()));
  const int div = 1 << cfg_.levels;
  for (int ax = 1; ax <= 3; ++ax)
    if (x.dim(ax) % div != 0)
      shape_error("generator", "extent on axis " + std::to_string(ax) +
                                   " must be divisible by " +
                                   std::to_string(div) + ", got " +
                                   std::to_string(x.dim(ax)));

  Tensor inp = x;
  if (!cfg_.use_mask) {
    // ablation arm: anatomy channel silenced
    inp = concat({slice0(x, 0, 1),
                  Tensor::zeros({1, x.dim(1), x.dim(2), x.dim(3)})});
  }

  std::vector<Tensor> skips;
  Tensor h = inp;
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    h = relu(conv3d(h, enc_[l].w, enc_[l].b, /*stride=*/2, /*pad=*/1));
    if (l + 1 < enc_.size()) skips.push_back(h);
  }

  if (cfg_.use_film) {
    auto [gamma, beta] = temporal_.modulation(temporal);
    h = film(h, gamma, beta);
  }

  for (std::size_t i = 0; i < dec_.size(); ++i) {
    h = conv_transpose3d(h, up_[i].w, up_[i].b, /*stride=*/2);
    h = concat({h, skips[skips.size() - 1 - i]});
    h = relu(conv3d(h, dec_[i].w, dec_[i].b, /*stride=*/1, /*pad=*/1));
  }
  h = conv_transpose3d(h, up_.back().w, up_.back().b, /*stride=*/2);
  h = concat({h, inp});
  return tanh(conv3d(h, final_.w, final_.b, /*stride=*/1, /*pad=*/1));
}

std::vector<Tensor> Generator::parameters() const {
  std::vector<Tensor> out;
  for (const NamedParam& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::vector<NamedParam> Generator::named_parameters() const {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    out.push_back({"g.enc" + std::to_string(l) + ".w", enc_[l].w});
    out.push_back({"g.enc" + std::to_string(l) + ".b", enc_[l].b});
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    out.push_back({"g.up" + std::to_string(i) + ".w", up_[i].w});
    out.push_back({"g.up" + std::to_string(i) + ".b", up_[i].b});
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    out.push_back({"g.dec" + std::to_string(i) + ".w", dec_[i].w});
    out.push_back({"g.dec" + std::to_string(i) + ".b", dec_[i].b});
  }
  out.push_back({"g.final.w", final_.w});
  out.push_back({"g.final.b", final_.b});
  temporal_.collect("g.temporal", &out);
  return out;
}

Generator Generator::from_checkpoint(const std::vector<NamedParam>& entries) {
  const NamedParam* meta = nullptr;
  for (const NamedParam& e : entries)
    if (e.name == "meta.model") meta = &e;
  if (!meta || meta->tensor.numel() < 5)
    throw std::runtime_error("checkpoint has no model description entry");
  const std::vector<double>& m = meta->tensor.data();
  ModelConfig cfg;
  cfg.levels = static_cast<int>(m[0]);
  cfg.base_channels = static_cast<int>(m[1]);
  cfg.lstm_hidden = static_cast<int>(m[2]);
  cfg.use_film = m[3] != 0.0;
  cfg.use_mask = m[4] != 0.0;

  std::mt19937_64 rng(0);  // values are overwritten below
  Generator g(cfg, rng);
  for (const NamedParam& dst : g.named_parameters()) copy_into(entries, dst);
  return g;
}

void save_generator(const std::string& path, const Generator& g,
                    const std::vector<NamedParam>& extra) {
  std::vector<NamedParam> entries = g.named_parameters();
  const ModelConfig& cfg = g.config();
  entries.push_back(
      {"meta.model",
       Tensor::from({5}, {static_cast<double>(cfg.levels),
                          static_cast<double>(cfg.base_channels),
                          static_cast<double>(cfg.lstm_hidden),
                          cfg.use_film ? 1.0 : 0.0,
                          cfg.use_mask ? 1.0 : 0.0})});
  entries.insert(entries.end(), extra.begin(), extra.end());
  save_checkpoint(path, entries);
}

// ---------------------------------------------------------------------------
// discriminator

Discriminator::Discriminator(int px, int py, int pz, int base_channels,
                             std::mt19937_64& rng) {
  int c = 1;
  int dims[3] = {px, py, pz};
  for (int l = 0; l < 3; ++l) {
    const int cout = base_channels << l;
    conv_w_.push_back(he_normal({cout, c, 3, 3, 3},
                                static_cast<std::int64_t>(c) * 27, rng));
    conv_b_.push_back(zero_param({cout}));
    c = cout;
    for (int ax = 0; ax < 3; ++ax) dims[ax] = (dims[ax] - 1) / 2 + 1;
  }
  flat_ = c * dims[0] * dims[1] * dims[2];
  // Zero output layer: the first judgement of any input is probability 0.5.
  fc_w_ = zero_param({1, flat_});
  fc_b_ = zero_param({1});
}

Tensor Discriminator::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(0) != 1)
    shape_error("discriminator",
                "input must be [1,X,Y,Z], got " + shape_str(x.shape()));
  for (int ax = 1; ax <= 3; ++ax)
    if (x.dim(ax) % 8 != 0)
      shape_error("discriminator", "extent on axis " + std::to_string(ax) +
                                       " must be divisible by 8, got " +
                                       std::to_string(x.dim(ax)));
  Tensor h = x;
  for (std::size_t l = 0; l < conv_w_.size(); ++l)
    h = leaky_relu(conv3d(h, conv_w_[l], conv_b_[l], /*stride=*/2, /*pad=*/1),
                   0.2);
  h = reshape(h, {flat_});
  return linear(h, fc_w_, fc_b_);
}

std::vector<Tensor> Discriminator::parameters() const {
  std::vector<Tensor> out;
  for (const NamedParam& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::vector<NamedParam> Discriminator::named_parameters() const {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    out.push_back({"d.conv" + std::to_string(l) + ".w", conv_w_[l]});
    out.push_back({"d.conv" + std::to_string(l) + ".b", conv_b_[l]});
  }
  out.push_back({"d.fc.w", fc_w_});
  out.push_back({"d.fc.b", fc_b_});
  return out;
}

}  // namespace dynpet
