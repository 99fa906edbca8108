#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tucknet/backprop.hpp"
#include "tucknet/cells.hpp"
#include "tucknet/objectives.hpp"
#include "tucknet/tensor.hpp"

namespace tucknet {

/// Equal-length windows stacked along a trailing batch mode: step t holds
/// every window's step-t tensor as one [dims..., count] block, so each
/// mode product spans the whole stack in a single widened GEMM instead of
/// one small GEMM per window. With the C-order layout the batch index is
/// the fastest-varying one, which keeps each element's batch column
/// contiguous (bias broadcasts and batch reductions are then linear scans).
struct StackedWindows {
    std::vector<DenseTensor> inputs;   ///< one stacked tensor per step
    std::vector<DenseTensor> targets;  ///< one stack (last-step-only) or one per step
    std::int64_t count = 0;            ///< windows in this stack
};

/// Splits the dataset into stacks of at most `chunk` windows, preserving
/// case order (chunk <= 0 stacks everything at once). Chunking bounds the
/// memory the forward tape needs while keeping the GEMMs wide. Requires a
/// uniform-window regime (panel data keeps per-series evaluation) and
/// identical tensor dims across cases; throws ShapeError otherwise.
std::vector<StackedWindows> stack_windows(const SeriesDataset& data, LossRegime regime,
                                          std::int64_t chunk = 128);

/// Total data loss and summed parameter gradients over stacked windows:
/// the same quantities dataset_gradient() produces case by case, evaluated
/// stack-wide. The batch mode rides through every mode product untouched,
/// and the mode-d unfolding contraction sums the per-window gradient
/// terms automatically, so the two paths agree up to floating-point
/// reassociation. Squared loss only (the cross-entropy normalizer couples
/// elements of one window and must not mix windows); the head must use the
/// identity activation, as in the per-series backward pass.
DatasetGradient stacked_gradient(const Model& model, std::span<const StackedWindows> stacks,
                                 const LossSpec& spec,
                                 GruGradientVariant variant = GruGradientVariant::kFull);

}  // namespace tucknet
