#pragma once

#include <map>
#include <string>
#include <vector>

#include "edgenet/data.hpp"
#include "edgenet/model.hpp"

namespace edgenet {

struct TensorMinMax {
    float min = 0.0f;
    float max = 0.0f;
};

// Observed value ranges per tensor. Weight tensors are calibrated from their
// own values; activation sites (named act<layer index>:<kind>) from forward
// passes over the representative dataset.
struct CalibrationStats {
    std::map<std::string, TensorMinMax> tensors;
    int64_t sample_count = 0;
};

CalibrationStats calibrate(const ModelGraph& graph, const LabeledDataset& representative);

// Asymmetric affine mapping of [min,max] onto [-128,127]. The range is
// widened minimally so that real 0 is exactly representable; a fully
// degenerate range maps to scale 1, zero point 0.
QuantParams make_qparams(float min, float max);

// q = clamp(round(x/scale) + zero_point, -128, 127), ties to even.
StoredTensor quantize_tensor(const Tensor& t, const QuantParams& qp, std::string name = "");

// x = scale * (q - zero_point). Requires an i8 tensor with QuantParams.
Tensor dequantize_tensor(const StoredTensor& t);

// Strip optimizer state and convert weights to the target precision.
// i8 requires a non-empty representative dataset matching the model's input
// size; biases stay f32 in i8 models.
DeployedModel export_deployed(const Checkpoint& ckpt, DType precision,
                              const LabeledDataset* calib = nullptr);

// Post-training precision reduction (mode F16 or I8).
DeployedModel quantize_model(const Checkpoint& ckpt, DType mode, const LabeledDataset* calib);

enum class PruneRanking { WeightL1, ActivationL1 };

// Channels selected for removal, per conv layer.
struct PruneSpec {
    PruneRanking ranking = PruneRanking::WeightL1;
    std::map<std::string, std::vector<int64_t>> channels; // sorted, distinct
};

// Rank output channels of the targeted conv layers (lowest score first) and
// select floor(fraction * Cout) of them. Activation ranking uses the mean
// absolute post-ReLU activation over the representative dataset.
PruneSpec rank_prune_channels(const Checkpoint& ckpt, const std::map<std::string, double>& fractions,
                              PruneRanking ranking, const LabeledDataset* calib = nullptr);

// Remove the selected channels and re-wire downstream consumers (the next
// conv's input channels, or the flatten-fed dense layer's input rows).
// Adam moments are sliced identically so the checkpoint stays consistent.
Checkpoint apply_prune(const Checkpoint& ckpt, const PruneSpec& spec);

Checkpoint prune_channels(const Checkpoint& ckpt, const std::map<std::string, double>& fractions,
                          PruneRanking ranking = PruneRanking::WeightL1,
                          const LabeledDataset* calib = nullptr);

} // namespace edgenet
