#pragma once

#include <memory>
#include <span>
#include <string>

#include "organseg/geometry.hpp"
#include "organseg/tiny_model.hpp"
#include "organseg/volume.hpp"

namespace organseg {

inline constexpr double kProbabilityClamp = 1e-7;

// Predicted foreground probability p and binary ground truth g on the same grid.
struct BinaryMaskPair {
    const Volume3D& probability;
    const Volume3D& truth;

    void validate() const;
};

// L = -sum g log p  -  2 sum p g / (sum p^2 + sum g^2)
//
// The Dice term is subtracted as is (no "1 -"), so a perfect prediction scores about -1 and the
// loss is bounded below by -1. p is clamped to [1e-7, 1 - 1e-7] inside the log only. When
// sum p^2 + sum g^2 == 0 the Dice term is taken as 0.
double ce_dice_loss(const BinaryMaskPair& pair);
double ce_dice_loss(std::span<const double> p, std::span<const double> g);

// dL/dp = -g / p - [2 g (sum p^2 + sum g^2) - 2 sum p g * 2 p] / (sum p^2 + sum g^2)^2,
// with p in the first term clamped like the loss.
Volume3D ce_dice_grad(const BinaryMaskPair& pair);

// Per-organ segmenter: image crop in, foreground probability of the same dims out.
class OrganPredictor {
public:
    virtual ~OrganPredictor() = default;
    virtual Volume3D predict(const Volume3D& crop) const = 0;
    virtual std::string name() const = 0;
};

// Soft intensity band around the organ's nominal intensity:
//   p(x) = Phi((raw - lo) / s) - Phi((raw - hi) / s),  lo/hi = intensity -/+ half_width,
// where raw undoes the volume normalisation the crop went through. Purely voxel-wise, so
// predictions do not depend on where the crop boundary falls.
class OracleIntensityPredictor final : public OrganPredictor {
public:
    struct Options {
        double half_width = 50.0;
        double softness = 5.0;
    };

    OracleIntensityPredictor(double organ_intensity, Options options, NormalizationStats crop_normalization = {});
    Volume3D predict(const Volume3D& crop) const override;
    std::string name() const override { return "oracle-intensity"; }

private:
    double intensity_;
    Options options_;
    NormalizationStats norm_;
};

// Single-output tiny conv net applied to the (normalised) crop.
class ConvNetPredictor final : public OrganPredictor {
public:
    explicit ConvNetPredictor(ConvNetParams params, std::string label = "convnet");
    Volume3D predict(const Volume3D& crop) const override;
    std::string name() const override { return label_; }

private:
    ConvNetParams params_;
    std::string label_;
};

struct ProbabilityCrop {
    int organ_id = 0;
    Volume3D probability;
    BoundingBox box;  // on the grid of the image it was cut from
};

// Crop `image` at `box` (outside cells = pad_value), run the predictor, check its output contract.
ProbabilityCrop segment_organ(const OrganPredictor& predictor, const Volume3D& image, const BoundingBox& box,
                              int organ_id = 0, double pad_value = kAirHu);

// 1 where labels == organ_id, else 0.
Volume3D binary_mask(const Volume3D& labels, int organ_id);

}  // namespace organseg
