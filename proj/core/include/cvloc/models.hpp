#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cvloc/graph.hpp"
#include "cvloc/ops.hpp"
#include "cvloc/param_store.hpp"

namespace cvloc {

/// Miniature convnet shape: conv_blocks of (conv3x3 pad 1 -> relu ->
/// maxpool 2), flatten, optional hidden FC + relu, then the embedding
/// FC of width feature_dim. When class_count > 0 the first class_count
/// coordinates of the embedding double as the classification logits,
/// so the embedding is exactly the pre-softmax layer.
struct ArchSpec {
    int input_side = 64;
    int input_channels = 3;
    std::vector<int> conv_blocks = {16, 32, 64};
    int fc_hidden = 128;  // 0 = no hidden layer (linear past the blocks)
    int feature_dim = 32;
    int class_count = 0;  // 0 = no classification head

    void validate() const;
    /// Side length of the feature map after all pool stages.
    int spatial_after_blocks() const;
    int flat_dim() const;

    std::string to_text() const;
    static ArchSpec from_text(const std::string& text);

    bool operator==(const ArchSpec&) const = default;
};

/// Initializes backbone parameters under `prefix` into `ps`:
/// conv<i>.weight/.bias, fc_hidden.weight/.bias (if any),
/// embed.weight/.bias. Weights ~ N(0, 2/fan_in), biases zero.
void init_backbone(ParamStore& ps, const std::string& prefix, const ArchSpec& spec,
                   std::mt19937_64& rng);

/// Forward pass through the backbone described by `spec` using the
/// parameters under `prefix`. images is [N, C, S, S]; returns [N, D].
Tensor backbone_features(Graph& g, const ParamStore& ps, const std::string& prefix,
                         const ArchSpec& spec, const Tensor& images);

enum class Mode { train, eval };

/// One feature extractor: plays f_g (with class head) or a
/// single-scale f_a (same parameter layout, head optional).
class Network {
  public:
    Network(ArchSpec spec, uint64_t seed);
    Network(ArchSpec spec, ParamStore params);

    const ArchSpec& spec() const { return spec_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    /// Pre-softmax embedding, [N, D].
    Tensor features(Graph& g, const Tensor& images) const;
    /// Class logits = first class_count embedding coordinates.
    Tensor logits(Graph& g, const Tensor& features) const;

  private:
    ArchSpec spec_;
    ParamStore params_;
    Mode mode_ = Mode::train;
};

/// Three untied single-scale subnets (fine, mid, coarse), their
/// embeddings concatenated into one final fully-connected fusion
/// layer of output width feature_dim.
class MultiScaleNet {
  public:
    static constexpr const char* kPrefixes[3] = {"fine.", "mid.", "coarse."};

    /// Untied copies of `subnet_init` (a single-scale backbone store,
    /// unprefixed names) under each prefix; fusion layer seeded-random.
    MultiScaleNet(ArchSpec spec, const ParamStore& subnet_init, uint64_t fusion_seed);
    MultiScaleNet(ArchSpec spec, ParamStore params);

    const ArchSpec& spec() const { return spec_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// tiles ordered fine -> coarse, each [N, C, S, S]; returns [N, D].
    Tensor features(Graph& g, const Tensor& fine, const Tensor& mid,
                    const Tensor& coarse) const;

  private:
    ArchSpec spec_;
    ParamStore params_;
};

/// Convenience: no-grad feature extraction on a throwaway graph.
Tensor extract_features(const Network& net, const Tensor& images);
Tensor extract_features(const MultiScaleNet& net, const Tensor& fine, const Tensor& mid,
                        const Tensor& coarse);

}  // namespace cvloc
