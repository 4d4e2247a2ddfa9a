#include "organseg/tiny_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json_util.hpp"
#include "organseg/errors.hpp"
#include "organseg/heatmap.hpp"
#include "organseg/random.hpp"
#include "organseg/segmentation.hpp"
#include "organseg/volume_io.hpp"

namespace organseg {

namespace {

constexpr int kTaps = 27;

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct Range {
    std::int64_t lo;
    std::int64_t hi;
};

// Output positions n in [0, len) for which n + offset is inside [0, len).
Range valid_range(std::int64_t len, std::int64_t offset) {
    return {std::max<std::int64_t>(0, -offset), std::min<std::int64_t>(len, len - offset)};
}

// out[o] = bias[o] + sum_i sum_k W[o,i,k] * in[i](v + offset_k)
void conv_forward(const FeatureMaps& in, const ConvLayer& layer, FeatureMaps& out) {
    const auto [nx, ny, nz] = in.dims;
    out = FeatureMaps(in.dims, layer.out_channels);
    // Row-wise so the output row stays in cache across all 27 taps.
    for (int o = 0; o < layer.out_channels; ++o) {
        auto dst = out.channel(o);
        std::fill(dst.begin(), dst.end(), layer.bias[static_cast<std::size_t>(o)]);
        for (int i = 0; i < layer.in_channels; ++i) {
            const auto src = in.channel(i);
            const double* w = layer.weights.data() + (static_cast<std::size_t>(o) * layer.in_channels + i) * kTaps;
            for (std::int64_t z = 0; z < nz; ++z) {
                for (std::int64_t y = 0; y < ny; ++y) {
                    double* orow = dst.data() + (z * ny + y) * nx;
                    for (int t = 0; t < kTaps; ++t) {
                        const double wt = w[t];
                        const std::int64_t dz = t / 9 - 1;
                        const std::int64_t dy = (t / 3) % 3 - 1;
                        const std::int64_t dx = t % 3 - 1;
                        if (wt == 0.0 || z + dz < 0 || z + dz >= nz || y + dy < 0 || y + dy >= ny) continue;
                        const auto xr = valid_range(nx, dx);
                        const double* irow = src.data() + ((z + dz) * ny + (y + dy)) * nx + dx;
                        for (std::int64_t x = xr.lo; x < xr.hi; ++x) orow[x] += wt * irow[x];
                    }
                }
            }
        }
    }
}

// Four interleaved partial sums; fixed order, so still deterministic.
double row_dot(const double* a, const double* b, std::int64_t lo, std::int64_t hi) {
    double s[4] = {0.0, 0.0, 0.0, 0.0};
    std::int64_t x = lo;
    for (; x + 4 <= hi; x += 4) {
        s[0] += a[x] * b[x];
        s[1] += a[x + 1] * b[x + 1];
        s[2] += a[x + 2] * b[x + 2];
        s[3] += a[x + 3] * b[x + 3];
    }
    for (; x < hi; ++x) s[0] += a[x] * b[x];
    return (s[0] + s[1]) + (s[2] + s[3]);
}

void conv_backward(const FeatureMaps& in, const ConvLayer& layer, const FeatureMaps& out_grad, ConvLayer& grad,
                   FeatureMaps* in_grad) {
    const auto [nx, ny, nz] = in.dims;
    if (in_grad) *in_grad = FeatureMaps(in.dims, layer.in_channels);
    for (int o = 0; o < layer.out_channels; ++o) {
        const auto go = out_grad.channel(o);
        grad.bias[static_cast<std::size_t>(o)] += std::accumulate(go.begin(), go.end(), 0.0);
        for (int i = 0; i < layer.in_channels; ++i) {
            const auto src = in.channel(i);
            double* dsrc = in_grad ? in_grad->channel(i).data() : nullptr;
            const std::size_t base = (static_cast<std::size_t>(o) * layer.in_channels + i) * kTaps;
            std::array<double, kTaps> acc{};
            for (std::int64_t z = 0; z < nz; ++z) {
                for (std::int64_t y = 0; y < ny; ++y) {
                    const double* grow = go.data() + (z * ny + y) * nx;
                    for (int t = 0; t < kTaps; ++t) {
                        const std::int64_t dz = t / 9 - 1;
                        const std::int64_t dy = (t / 3) % 3 - 1;
                        const std::int64_t dx = t % 3 - 1;
                        if (z + dz < 0 || z + dz >= nz || y + dy < 0 || y + dy >= ny) continue;
                        const auto xr = valid_range(nx, dx);
                        const std::int64_t off = ((z + dz) * ny + (y + dy)) * nx + dx;
                        acc[static_cast<std::size_t>(t)] += row_dot(grow, src.data() + off, xr.lo, xr.hi);
                        const double wt = layer.weights[base + static_cast<std::size_t>(t)];
                        if (dsrc && wt != 0.0) {
                            double* drow = dsrc + off;
                            for (std::int64_t x = xr.lo; x < xr.hi; ++x) drow[x] += wt * grow[x];
                        }
                    }
                }
            }
            for (int t = 0; t < kTaps; ++t) grad.weights[base + static_cast<std::size_t>(t)] += acc[static_cast<std::size_t>(t)];
        }
    }
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

FeatureMaps to_features(const Volume3D& vol) {
    FeatureMaps f(vol.dims(), 1);
    std::copy(vol.data().begin(), vol.data().end(), f.data.begin());
    return f;
}

}  // namespace

void ConvNetParams::validate() const {
    int expected_in = input_channels();
    if (expected_in <= 0) throw InvalidArgument("network input channel count must be positive");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.in_channels != expected_in) {
            throw InvalidArgument("conv layer " + std::to_string(l) + " expects " + std::to_string(layer.in_channels) +
                                  " input channels but receives " + std::to_string(expected_in));
        }
        if (layer.out_channels <= 0 ||
            layer.weights.size() != static_cast<std::size_t>(layer.in_channels * layer.out_channels * kTaps) ||
            layer.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
            throw InvalidArgument("conv layer " + std::to_string(l) + " has inconsistent parameter buffers");
        }
        if (!all_finite(layer.weights) || !all_finite(layer.bias)) {
            throw InvalidArgument("conv layer " + std::to_string(l) + " has non-finite parameters");
        }
        expected_in = layer.out_channels;
    }
    if (head.in_channels != expected_in) {
        throw InvalidArgument("head expects " + std::to_string(head.in_channels) + " input channels but receives " +
                              std::to_string(expected_in));
    }
    if (head.out_channels <= 0 ||
        head.weights.size() != static_cast<std::size_t>(head.in_channels * head.out_channels) ||
        head.bias.size() != static_cast<std::size_t>(head.out_channels)) {
        throw InvalidArgument("head has inconsistent parameter buffers");
    }
    if (!all_finite(head.weights) || !all_finite(head.bias)) {
        throw InvalidArgument("head has non-finite parameters");
    }
}

std::size_t ConvNetParams::parameter_count() const noexcept {
    std::size_t n = head.weights.size() + head.bias.size();
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<double> ConvNetParams::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    out.insert(out.end(), head.weights.begin(), head.weights.end());
    out.insert(out.end(), head.bias.begin(), head.bias.end());
    return out;
}

void ConvNetParams::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw InvalidArgument("flat parameter vector has the wrong length");
    auto it = flat.begin();
    auto take = [&it](std::vector<double>& dst) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
        it += static_cast<std::ptrdiff_t>(dst.size());
    };
    for (auto& l : layers) {
        take(l.weights);
        take(l.bias);
    }
    take(head.weights);
    take(head.bias);
}

ConvNetParams make_conv_net(const NetShape& shape, std::uint64_t seed) {
    if (shape.hidden_layers < 0 || shape.channels <= 0 || shape.outputs <= 0) {
        throw InvalidArgument("network shape needs hidden_layers >= 0, channels > 0, outputs > 0");
    }
    Rng rng(seed);
    ConvNetParams params;
    int in = 1;
    for (int l = 0; l < shape.hidden_layers; ++l) {
        ConvLayer layer;
        layer.in_channels = in;
        layer.out_channels = shape.channels;
        layer.weights.resize(static_cast<std::size_t>(in * shape.channels * kTaps));
        layer.bias.assign(static_cast<std::size_t>(shape.channels), 0.0);
        const double stddev = std::sqrt(2.0 / (in * kTaps));
        for (double& w : layer.weights) w = stddev * rng.normal();
        params.layers.push_back(std::move(layer));
        in = shape.channels;
    }
    params.head.in_channels = in;
    params.head.out_channels = shape.outputs;
    params.head.weights.resize(static_cast<std::size_t>(in * shape.outputs));
    params.head.bias.assign(static_cast<std::size_t>(shape.outputs), 0.0);
    const double stddev = std::sqrt(1.0 / in);
    for (double& w : params.head.weights) w = stddev * rng.normal();
    return params;
}

ConvNetParams zeros_like(const ConvNetParams& params) {
    ConvNetParams out = params;
    for (auto& l : out.layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    std::fill(out.head.weights.begin(), out.head.weights.end(), 0.0);
    std::fill(out.head.bias.begin(), out.head.bias.end(), 0.0);
    return out;
}

ForwardPass forward_pass(const ConvNetParams& params, const Volume3D& input) {
    params.validate();
    if (params.input_channels() != 1) throw InvalidArgument("network must take a single input channel");
    if (!params.layers.empty()) {
        for (auto d : input.dims()) {
            if (d < 3) throw InvalidArgument("input dims " + to_string(input.dims()) + " smaller than the 3x3x3 kernel");
        }
    }
    ForwardPass pass;
    pass.grid = input.grid();
    pass.activations.push_back(to_features(input));
    for (const auto& layer : params.layers) {
        FeatureMaps next;
        conv_forward(pass.activations.back(), layer, next);
        for (double& v : next.data) v = std::max(v, 0.0);
        pass.activations.push_back(std::move(next));
    }
    const auto& last = pass.activations.back();
    const auto& head = params.head;
    pass.outputs = FeatureMaps(input.dims(), head.out_channels);
    for (int o = 0; o < head.out_channels; ++o) {
        auto dst = pass.outputs.channel(o);
        std::fill(dst.begin(), dst.end(), head.bias[static_cast<std::size_t>(o)]);
        for (int i = 0; i < head.in_channels; ++i) {
            const double w = head.weights[static_cast<std::size_t>(o * head.in_channels + i)];
            const auto src = last.channel(i);
            for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += w * src[n];
        }
        for (double& v : dst) v = sigmoid(v);
    }
    return pass;
}

std::vector<Volume3D> forward(const ConvNetParams& params, const Volume3D& input, VolumeKind output_kind) {
    const auto pass = forward_pass(params, input);
    std::vector<Volume3D> out;
    for (int o = 0; o < pass.outputs.channels; ++o) {
        const auto ch = pass.outputs.channel(o);
        out.emplace_back(pass.grid, output_kind, std::vector<double>(ch.begin(), ch.end()));
    }
    return out;
}

ConvNetParams backward(const ConvNetParams& params, const ForwardPass& pass, std::span<const Volume3D> upstream_grad) {
    if (upstream_grad.size() != static_cast<std::size_t>(params.output_channels())) {
        throw InvalidArgument("expected " + std::to_string(params.output_channels()) + " upstream gradient channels, got " +
                              std::to_string(upstream_grad.size()));
    }
    for (const auto& g : upstream_grad) {
        if (g.dims() != pass.grid.dims) throw InvalidArgument("upstream gradient dims do not match the forward pass");
    }
    ConvNetParams grad = zeros_like(params);
    const auto& head = params.head;
    const auto& last = pass.activations.back();

    // d loss / d logit = upstream * s (1 - s)
    FeatureMaps logit_grad(pass.grid.dims, head.out_channels);
    for (int o = 0; o < head.out_channels; ++o) {
        const auto s = pass.outputs.channel(o);
        const auto up = upstream_grad[static_cast<std::size_t>(o)].data();
        auto dst = logit_grad.channel(o);
        for (std::size_t n = 0; n < dst.size(); ++n) dst[n] = up[n] * s[n] * (1.0 - s[n]);
    }

    FeatureMaps act_grad(pass.grid.dims, head.in_channels);
    for (int o = 0; o < head.out_channels; ++o) {
        const auto g = logit_grad.channel(o);
        grad.head.bias[static_cast<std::size_t>(o)] = std::accumulate(g.begin(), g.end(), 0.0);
        for (int i = 0; i < head.in_channels; ++i) {
            const auto a = last.channel(i);
            double acc = 0.0;
            for (std::size_t n = 0; n < g.size(); ++n) acc += g[n] * a[n];
            grad.head.weights[static_cast<std::size_t>(o * head.in_channels + i)] = acc;
            const double w = head.weights[static_cast<std::size_t>(o * head.in_channels + i)];
            auto dst = act_grad.channel(i);
            for (std::size_t n = 0; n < g.size(); ++n) dst[n] += w * g[n];
        }
    }

    for (std::size_t l = params.layers.size(); l-- > 0;) {
        // ReLU: pass the gradient only where the layer output is positive.
        const auto& out = pass.activations[l + 1];
        for (std::size_t n = 0; n < act_grad.data.size(); ++n) {
            if (out.data[n] <= 0.0) act_grad.data[n] = 0.0;
        }
        FeatureMaps in_grad;
        conv_backward(pass.activations[l], params.layers[l], act_grad, grad.layers[l], l > 0 ? &in_grad : nullptr);
        act_grad = std::move(in_grad);
    }
    return grad;
}

ConvNetParams backward(const ConvNetParams& params, const Volume3D& input, std::span<const Volume3D> upstream_grad) {
    return backward(params, forward_pass(params, input), upstream_grad);
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("learning_rate must be finite and non-negative");
    }
    if (batch_size != 1) throw InvalidArgument("only batch_size 1 is supported");
    if (!(decay_factor > 0.0) || decay_every == 0) throw InvalidArgument("decay schedule must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw InvalidArgument("Adam moments must lie in [0,1) and epsilon > 0");
    }
}

double TrainConfig::learning_rate_at(std::size_t step) const noexcept {
    return learning_rate * std::pow(decay_factor, static_cast<double>(step / decay_every));
}

TrainConfig regression_train_config() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    return c;
}

TrainConfig segmentation_train_config() {
    TrainConfig c;
    c.learning_rate = 1e-5;
    return c;
}

double sample_loss(const std::vector<Volume3D>& outputs, const std::vector<Volume3D>& targets, LossKind loss,
                   std::vector<Volume3D>* output_grad) {
    if (outputs.size() != targets.size()) {
        throw InvalidArgument("network has " + std::to_string(outputs.size()) + " outputs but sample has " +
                              std::to_string(targets.size()) + " targets");
    }
    if (loss == LossKind::l2) {
        HeatmapStack truth;
        HeatmapStack pred;
        for (std::size_t c = 0; c < outputs.size(); ++c) {
            truth.channels.push_back(targets[c]);
            pred.channels.push_back(outputs[c]);
            truth.organ_ids.push_back(static_cast<int>(c + 1));
            pred.organ_ids.push_back(static_cast<int>(c + 1));
        }
        if (output_grad) {
            auto g = l2_loss_grad(truth, pred);
            *output_grad = std::move(g.channels);
        }
        return l2_loss(truth, pred);
    }
    double total = 0.0;
    if (output_grad) output_grad->clear();
    for (std::size_t c = 0; c < outputs.size(); ++c) {
        BinaryMaskPair pair{outputs[c], targets[c]};
        total += ce_dice_loss(pair);
        if (output_grad) output_grad->push_back(ce_dice_grad(pair));
    }
    return total;
}

double dataset_loss(const ConvNetParams& params, std::span<const TrainingSample> dataset, LossKind loss) {
    if (dataset.empty()) throw InvalidArgument("dataset is empty");
    double sum = 0.0;
    for (const auto& sample : dataset) {
        sum += sample_loss(forward(params, sample.input), sample.targets, loss);
    }
    return sum / static_cast<double>(dataset.size());
}

namespace {

void check_dataset(const ConvNetParams& params, std::span<const TrainingSample> dataset, LossKind loss) {
    if (dataset.empty()) throw InvalidArgument("training dataset is empty");
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const auto& sample = dataset[s];
        if (sample.targets.size() != static_cast<std::size_t>(params.output_channels())) {
            throw InvalidArgument("sample " + std::to_string(s) + " has " + std::to_string(sample.targets.size()) +
                                  " targets for a network with " + std::to_string(params.output_channels()) +
                                  " outputs");
        }
        for (const auto& t : sample.targets) {
            if (t.dims() != sample.input.dims()) {
                throw InvalidArgument("sample " + std::to_string(s) + " target dims differ from input dims");
            }
            if (loss == LossKind::ce_dice) {
                for (double v : t.data()) {
                    if (v != 0.0 && v != 1.0) {
                        throw InvalidArgument("ce_dice targets must be binary masks (sample " + std::to_string(s) + ")");
                    }
                }
            } else if (t.kind() != VolumeKind::heatmap) {
                throw InvalidArgument("l2 targets must be heatmaps (sample " + std::to_string(s) + ")");
            }
        }
    }
}

double window_mean(const std::vector<TrainStep>& trace, std::size_t begin, std::size_t end) {
    double sum = 0.0;
    for (std::size_t n = begin; n < end; ++n) sum += trace[n].loss;
    return sum / static_cast<double>(end - begin);
}

}  // namespace

TrainResult train(const ConvNetParams& init, std::span<const TrainingSample> dataset, LossKind loss,
                  const TrainConfig& config) {
    config.validate();
    init.validate();
    check_dataset(init, dataset, loss);

    TrainResult result;
    result.params = init;
    std::vector<double> theta = init.flatten();
    std::vector<double> m(theta.size(), 0.0);
    std::vector<double> v(theta.size(), 0.0);

    Rng rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::size_t cursor = order.size();
    double beta1_pow = 1.0;
    double beta2_pow = 1.0;

    for (std::size_t step = 0; step < config.max_steps; ++step) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t n = order.size(); n > 1; --n) {
                std::swap(order[n - 1], order[static_cast<std::size_t>(rng.below(n))]);
            }
            cursor = 0;
        }
        const auto& sample = dataset[order[cursor++]];

        const auto pass = forward_pass(result.params, sample.input);
        std::vector<Volume3D> outputs;
        for (int o = 0; o < pass.outputs.channels; ++o) {
            const auto ch = pass.outputs.channel(o);
            outputs.emplace_back(pass.grid, VolumeKind::probability, std::vector<double>(ch.begin(), ch.end()));
        }
        std::vector<Volume3D> out_grad;
        const double value = sample_loss(outputs, sample.targets, loss, &out_grad);
        if (!std::isfinite(value)) {
            throw TrainingFailure(step, "training diverged: loss is " + std::to_string(value) + " at step " +
                                            std::to_string(step));
        }
        const double lr = config.learning_rate_at(step);
        result.trace.push_back({step, lr, value});

        const auto grad = backward(result.params, pass, out_grad).flatten();
        beta1_pow *= config.beta1;
        beta2_pow *= config.beta2;
        for (std::size_t n = 0; n < theta.size(); ++n) {
            m[n] = config.beta1 * m[n] + (1.0 - config.beta1) * grad[n];
            v[n] = config.beta2 * v[n] + (1.0 - config.beta2) * grad[n] * grad[n];
            const double m_hat = m[n] / (1.0 - beta1_pow);
            const double v_hat = v[n] / (1.0 - beta2_pow);
            theta[n] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
        result.params.assign(theta);

        const std::size_t w = config.plateau_window;
        const std::size_t len = result.trace.size();
        if (w > 0 && len >= 2 * w) {
            const double before = window_mean(result.trace, len - 2 * w, len - w);
            const double recent = window_mean(result.trace, len - w, len);
            const double scale = std::max(std::abs(before), 1e-300);
            if ((before - recent) / scale < config.plateau_tolerance) {
                result.stopped_on_plateau = true;
                break;
            }
        }
    }
    return result;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    checkpoint.params.validate();
    using detail::json;
    json layers = json::array();
    for (const auto& l : checkpoint.params.layers) {
        layers.push_back({{"in", l.in_channels}, {"out", l.out_channels}, {"kernel", {3, 3, 3}}});
    }
    json header{{"format", "organseg-convnet/1"},
                {"dtype", "float64"},
                {"endian", "little"},
                {"layers", layers},
                {"head", {{"in", checkpoint.params.head.in_channels}, {"out", checkpoint.params.head.out_channels}}},
                {"activation", "relu"},
                {"output", "sigmoid"},
                {"parameter_count", checkpoint.params.parameter_count()},
                {"steps", checkpoint.steps},
                {"task", checkpoint.task}};
    write_binary_file(path, pack_float64_le(checkpoint.params.flatten()));
    detail::write_json_file(sidecar_path(path), header);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const auto header = detail::read_json_file(sidecar_path(path));
    Checkpoint cp;
    try {
        if (header.value("dtype", std::string("float64")) != "float64") {
            throw InvalidArgument("checkpoint dtype must be float64: " + path.string());
        }
        for (const auto& l : header.at("layers")) {
            ConvLayer layer;
            layer.in_channels = l.at("in").get<int>();
            layer.out_channels = l.at("out").get<int>();
            layer.weights.resize(static_cast<std::size_t>(layer.in_channels * layer.out_channels * kTaps));
            layer.bias.resize(static_cast<std::size_t>(layer.out_channels));
            cp.params.layers.push_back(std::move(layer));
        }
        cp.params.head.in_channels = header.at("head").at("in").get<int>();
        cp.params.head.out_channels = header.at("head").at("out").get<int>();
        cp.params.head.weights.resize(static_cast<std::size_t>(cp.params.head.in_channels * cp.params.head.out_channels));
        cp.params.head.bias.resize(static_cast<std::size_t>(cp.params.head.out_channels));
        cp.steps = header.value("steps", std::size_t{0});
        cp.task = header.value("task", std::string{});
    } catch (const detail::json::exception& e) {
        throw InvalidArgument("bad checkpoint header " + sidecar_path(path).string() + ": " + e.what());
    }
    const auto bytes = read_binary_file(path);
    if (bytes.size() != cp.params.parameter_count() * 8) {
        throw IoError(path.string(), "checkpoint payload size does not match header");
    }
    cp.params.assign(unpack_float64_le(bytes));
    cp.params.validate();
    return cp;
}

void write_loss_trace(const std::filesystem::path& path, std::span<const TrainStep> trace) {
    std::string text = "step,lr,loss\n";
    char line[128];
    for (const auto& s : trace) {
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", s.step, s.learning_rate, s.loss);
        text += line;
    }
    detail::write_text_file(path, text);
}

}  // namespace organseg
