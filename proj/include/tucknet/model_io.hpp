#pragma once

#include <filesystem>

#include "tucknet/cells.hpp"
#include "tucknet/data_io.hpp"

namespace tucknet {

/// A trained model plus the standardization that its inputs expect. The
/// scaler travels with the parameters so evaluation can report errors in
/// the original data units.
struct ModelBundle {
    Model model;
    ElementScaler scaler;
    bool has_scaler = false;
};

/// Binary model file "TMDL", sharing the series format's conventions
/// (little-endian fixed-width fields, atomic replace on write):
///   magic "TMDL" | version u16 (= 1) | sections in order:
///     "META": cell kind u8, activations 4 x u8 (gate, candidate, output,
///             head), order D u16, then D x u32 input, hidden, and
///             response dims;
///     "PARM": every trainable value as f64 in canonical visitation order
///             (per gate W_1..W_D, U_1..U_D, B; head V_1..V_D, bias);
///     "SCAL" (optional): count u64, then that many f64 means followed by
///             that many f64 standard deviations.
/// Each section is tagged (4 bytes) and length-prefixed (u64 payload
/// bytes). Reading validates structure and counts before use; round-trips
/// are bitwise exact.
void write_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle read_model(const std::filesystem::path& path);

}  // namespace tucknet
