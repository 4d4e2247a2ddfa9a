#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "organseg/geometry.hpp"
#include "organseg/volume.hpp"

namespace organseg {

// 3x3x3 convolution with zero "same" padding.
// weights[((o * in_channels + i) * 27) + kz * 9 + ky * 3 + kx], kernel offsets (k - 1) per axis.
struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

// 1x1x1 projection to the output channels; weights[o * in_channels + i].
struct ProjectionHead {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

// conv -> ReLU -> ... -> conv -> ReLU -> head -> sigmoid. Zero conv layers is allowed (head only).
struct ConvNetParams {
    std::vector<ConvLayer> layers;
    ProjectionHead head;

    int input_channels() const noexcept { return layers.empty() ? head.in_channels : layers.front().in_channels; }
    int output_channels() const noexcept { return head.out_channels; }
    // Channel chain and buffer sizes consistent, every value finite.
    void validate() const;
    std::size_t parameter_count() const noexcept;
    // Layer weights, layer bias, ..., head weights, head bias.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
};

struct NetShape {
    int hidden_layers = 2;
    int channels = 8;
    int outputs = 1;
};

// He-normal conv weights, N(0, 1/in) head weights, zero biases; drawn from Rng(seed).
ConvNetParams make_conv_net(const NetShape& shape, std::uint64_t seed);
ConvNetParams zeros_like(const ConvNetParams& params);

// Channel-major stack of same-sized maps.
struct FeatureMaps {
    Dims3 dims{1, 1, 1};
    int channels = 0;
    std::vector<double> data;

    FeatureMaps() = default;
    FeatureMaps(Dims3 d, int c) : dims(d), channels(c), data(static_cast<std::size_t>(c * d[0] * d[1] * d[2]), 0.0) {}
    std::int64_t voxels() const noexcept { return dims[0] * dims[1] * dims[2]; }
    std::span<double> channel(int c) noexcept {
        return std::span<double>(data).subspan(static_cast<std::size_t>(c * voxels()), static_cast<std::size_t>(voxels()));
    }
    std::span<const double> channel(int c) const noexcept {
        return std::span<const double>(data).subspan(static_cast<std::size_t>(c * voxels()),
                                                     static_cast<std::size_t>(voxels()));
    }
};

// Cached activations of one forward evaluation; activations[0] is the input, activations[l + 1]
// the ReLU output of conv layer l, outputs the sigmoid head.
struct ForwardPass {
    GridSpec grid;
    std::vector<FeatureMaps> activations;
    FeatureMaps outputs;
};

ForwardPass forward_pass(const ConvNetParams& params, const Volume3D& input);
// One output volume per head channel, values in (0,1), same grid as `input`.
std::vector<Volume3D> forward(const ConvNetParams& params, const Volume3D& input,
                              VolumeKind output_kind = VolumeKind::probability);

// Parameter gradients of sum_c <upstream[c], output[c]>, laid out like `params`.
ConvNetParams backward(const ConvNetParams& params, const ForwardPass& pass, std::span<const Volume3D> upstream_grad);
ConvNetParams backward(const ConvNetParams& params, const Volume3D& input, std::span<const Volume3D> upstream_grad);

enum class LossKind { l2, ce_dice };

// Adam with batch size 1. The learning rate is multiplied by decay_factor every decay_every
// steps. Training stops early when the mean loss of the last plateau_window steps improves on the
// window before it by less than plateau_tolerance (relative); plateau_window = 0 disables this.
struct TrainConfig {
    double learning_rate = 1e-3;
    double decay_factor = 0.9;
    std::size_t decay_every = 50;
    std::size_t max_steps = 200;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    std::size_t plateau_window = 20;
    double plateau_tolerance = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
    double learning_rate_at(std::size_t step) const noexcept;
};

TrainConfig regression_train_config();    // lr 1e-3
TrainConfig segmentation_train_config();  // lr 1e-5

// For l2: one heatmap target per output channel. For ce_dice: one binary mask per output channel.
struct TrainingSample {
    Volume3D input;
    std::vector<Volume3D> targets;
};

struct TrainStep {
    std::size_t step = 0;
    double learning_rate = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    ConvNetParams params;
    std::vector<TrainStep> trace;
    bool stopped_on_plateau = false;
};

// Samples are visited in epochs, each epoch a Fisher-Yates shuffle drawn from Rng(config.seed).
TrainResult train(const ConvNetParams& init, std::span<const TrainingSample> dataset, LossKind loss,
                  const TrainConfig& config);

// Loss of one sample, and its gradient with respect to the network outputs.
double sample_loss(const std::vector<Volume3D>& outputs, const std::vector<Volume3D>& targets, LossKind loss,
                   std::vector<Volume3D>* output_grad = nullptr);
// Mean sample_loss over the dataset.
double dataset_loss(const ConvNetParams& params, std::span<const TrainingSample> dataset, LossKind loss);

// `<path>` holds float64 little-endian parameters in flatten() order; `<path>.json` the layer shapes.
struct Checkpoint {
    ConvNetParams params;
    std::size_t steps = 0;
    std::string task;
};
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// CSV with header "step,lr,loss".
void write_loss_trace(const std::filesystem::path& path, std::span<const TrainStep> trace);

}  // namespace organseg
