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

#pragma once

#include <random>
#include <string>
#include <vector>

#include "dynpet/checkpoint.hpp"
#include "dynpet/ops.hpp"
#include "dynpet/tensor.hpp"

namespace dynpet {

struct ModelConfig {
  int levels = 4;          // encoder/decoder depth of the generator
  int base_channels = 16;  // channels of the first encoder level
  int lstm_hidden = 32;    // temporal encoder state width
  bool use_film = true;    // modulate the bottleneck with temporal encoding
  bool use_mask = true;    // feed the anatomy channel (else zeros)
};

/// Conditioning input for one conversion: the two blood-pool TACs over all
/// frames and the index of the early frame being converted.
struct TemporalInput {
  std::vector<double> rvbp;
  std::vector<double> lvbp;
  int frame_index = 0;
  int num_frames = 0;  // must equal the TAC lengths
};

/**
 * Recurrent temporal encoder producing the per-channel FiLM coefficients.
 * Per time step the LSTM consumes [rvbp/m, lvbp/m, is_target_frame] where m
 * is the joint TAC maximum; the hidden-state sequence then passes through a
 * temporal convolution, a global average over time, and an affine head.
 * The head is zero-initialized, so an untrained encoder yields the identity
 * modulation gamma = 1, beta = 0 for any input.
 */
class TemporalEncoder {
 public:
  TemporalEncoder() = default;
  TemporalEncoder(int hidden, int out_channels, std::mt19937_64& rng);

  /// Returns {gamma, beta}, each [out_channels].
  std::pair<Tensor, Tensor> modulation(const TemporalInput& input) const;

  void collect(const std::string& prefix, std::vector<NamedParam>* out) const;

 private:
  int hidden_ = 0;
  int out_channels_ = 0;
  LstmWeights lstm_;
  Tensor conv_w_, conv_b_;  // temporal conv over the hidden sequence
  Tensor head_w_, head_b_;  // affine head -> [2 * out_channels]
};

/**
 * U-Net style generator translating an early frame (plus anatomy channel)
 * into a late-frame prediction in (-1, 1).
 *
 * Encoder: `levels` blocks of stride-2 3x3x3 convolution + ReLU doubling the
 * channel count from base_channels. Decoder: transposed 2x2x2 convolution,
 * skip concatenation, 3x3x3 convolution + ReLU. The full-resolution decoder
 * output is concatenated with the raw input before the final convolution and
 * tanh. FiLM modulates the bottleneck only.
 */
class Generator {
 public:
  Generator() = default;
  Generator(const ModelConfig& cfg, std::mt19937_64& rng);

  /// x is [2, X, Y, Z] (normalized frame + anatomy channel); spatial extents
  /// must be divisible by 2^levels. Returns [1, X, Y, Z].
  Tensor forward(const Tensor& x, const TemporalInput& temporal) const;

  std::vector<Tensor> parameters() const;
  std::vector<NamedParam> named_parameters() const;
  const ModelConfig& config() const { return cfg_; }

  /// Rebuilds a generator from checkpoint entries written by
  /// save_generator() (the "meta.model" entry carries the architecture).
  static Generator from_checkpoint(const std::vector<NamedParam>& entries);

 private:
  struct ConvLayer {
    Tensor w, b;
  };

  ModelConfig cfg_;
  std::vector<ConvLayer> enc_;   // stride-2 encoders
  std::vector<ConvLayer> up_;    // transposed convolutions, coarse to fine
  std::vector<ConvLayer> dec_;   // post-skip convolutions
  ConvLayer final_;              // after concatenation with the raw input
  TemporalEncoder temporal_;
};

/// Writes generator weights plus the architecture description.
void save_generator(const std::string& path, const Generator& g,
                    const std::vector<NamedParam>& extra = {});

/**
 * Patch discriminator: 3 stride-2 convolution levels (leaky ReLU 0.2) and
 * one linear output layer producing a single logit. The output layer is
 * zero-initialized so an untrained discriminator scores probability 0.5.
 * Input is a [1, X, Y, Z] candidate late frame; the linear layer is sized
 * for the construction-time patch extents.
 */
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int px, int py, int pz, int base_channels,
                std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;  // -> [1] logit

  std::vector<Tensor> parameters() const;
  std::vector<NamedParam> named_parameters() const;

 private:
  std::vector<Tensor> conv_w_, conv_b_;
  Tensor fc_w_, fc_b_;
  int flat_ = 0;
};

}  // namespace dynpet
