#include "organseg/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "organseg/errors.hpp"

namespace organseg {

void BinaryMaskPair::validate() const {
    if (probability.dims() != truth.dims()) {
        throw InvalidArgument("probability and truth volumes differ in dims: " + to_string(probability.dims()) +
                              " vs " + to_string(truth.dims()));
    }
    for (double p : probability.data()) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("probability outside [0,1]");
    }
    for (double g : truth.data()) {
        if (g != 0.0 && g != 1.0) throw InvalidArgument("ground truth must be binary");
    }
}

namespace {

double clamp_probability(double p) noexcept {
    return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

struct DiceSums {
    double pg = 0.0;
    double denom = 0.0;
};

DiceSums dice_sums(std::span<const double> p, std::span<const double> g) {
    DiceSums s;
    for (std::size_t n = 0; n < p.size(); ++n) {
        s.pg += p[n] * g[n];
        s.denom += p[n] * p[n] + g[n] * g[n];
    }
    return s;
}

}  // namespace

double ce_dice_loss(std::span<const double> p, std::span<const double> g) {
    if (p.size() != g.size()) throw InvalidArgument("ce_dice_loss: size mismatch");
    double ce = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        if (g[n] != 0.0) ce -= g[n] * std::log(clamp_probability(p[n]));
    }
    const auto s = dice_sums(p, g);
    const double dice = s.denom > 0.0 ? 2.0 * s.pg / s.denom : 0.0;
    return ce - dice;
}

double ce_dice_loss(const BinaryMaskPair& pair) {
    pair.validate();
    return ce_dice_loss(pair.probability.data(), pair.truth.data());
}

Volume3D ce_dice_grad(const BinaryMaskPair& pair) {
    pair.validate();
    const auto p = pair.probability.data();
    const auto g = pair.truth.data();
    const auto s = dice_sums(p, g);
    Volume3D out(pair.probability.grid(), VolumeKind::intensity, 0.0);
    auto dst = out.data();
    const double inv_sq = s.denom > 0.0 ? 1.0 / (s.denom * s.denom) : 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        const double ce = g[n] != 0.0 ? -g[n] / clamp_probability(p[n]) : 0.0;
        const double dice = s.denom > 0.0 ? (2.0 * g[n] * s.denom - 2.0 * s.pg * 2.0 * p[n]) * inv_sq : 0.0;
        dst[n] = ce - dice;
    }
    return out;
}

OracleIntensityPredictor::OracleIntensityPredictor(double organ_intensity, Options options,
                                                   NormalizationStats crop_normalization)
    : intensity_(organ_intensity), options_(options), norm_(crop_normalization) {
    if (!(options_.half_width > 0.0) || !(options_.softness > 0.0)) {
        throw InvalidArgument("oracle predictor needs positive half_width and softness");
    }
}

Volume3D OracleIntensityPredictor::predict(const Volume3D& crop) const {
    Volume3D out(crop.grid(), VolumeKind::probability, 0.0);
    const auto src = crop.data();
    auto dst = out.data();
    const double lo = intensity_ - options_.half_width;
    const double hi = intensity_ + options_.half_width;
    const double scale = 1.0 / (options_.softness * std::sqrt(2.0));
    for (std::size_t n = 0; n < src.size(); ++n) {
        // A constant volume normalises to 0 everywhere; treat it as sitting at the mean.
        const double raw = norm_.stddev == 0.0 ? norm_.mean : src[n] * norm_.stddev + norm_.mean;
        // Phi(a) - Phi(b) = (erf(a/sqrt2) - erf(b/sqrt2)) / 2
        const double p = 0.5 * (std::erf((raw - lo) * scale) - std::erf((raw - hi) * scale));
        dst[n] = std::clamp(p, 0.0, 1.0);
    }
    return out;
}

ConvNetPredictor::ConvNetPredictor(ConvNetParams params, std::string label)
    : params_(std::move(params)), label_(std::move(label)) {
    params_.validate();
    if (params_.output_channels() != 1) {
        throw InvalidArgument("organ predictor network must have exactly one output channel");
    }
}

Volume3D ConvNetPredictor::predict(const Volume3D& crop) const {
    return forward(params_, crop, VolumeKind::probability).front();
}

ProbabilityCrop segment_organ(const OrganPredictor& predictor, const Volume3D& image, const BoundingBox& box,
                              int organ_id, double pad_value) {
    const auto region = crop(image, box, pad_value);
    auto prob = predictor.predict(region);
    if (prob.dims() != region.dims()) {
        throw ContractViolation("predictor '" + predictor.name() + "' returned dims " + to_string(prob.dims()) +
                                " for a crop of dims " + to_string(region.dims()));
    }
    for (double v : prob.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ContractViolation("predictor '" + predictor.name() + "' returned a value outside [0,1]");
        }
    }
    return {organ_id, std::move(prob).with_kind(VolumeKind::probability), box};
}

Volume3D binary_mask(const Volume3D& labels, int organ_id) {
    Volume3D out(labels.grid(), VolumeKind::label, 0.0);
    const auto src = labels.data();
    auto dst = out.data();
    for (std::size_t n = 0; n < src.size(); ++n) dst[n] = src[n] == organ_id ? 1.0 : 0.0;
    return out;
}

}  // namespace organseg
