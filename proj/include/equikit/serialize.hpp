// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor container and checkpoint files.
//
// Container record, little-endian:
//   magic "EQTN" | u32 rank | u32 dims[rank] | f32 payload (row-major)
// A file holds one or more records back to back. Values are stored as f32;
// checkpoints and golden fixtures round through single precision by design.
//
// A checkpoint is one container file plus a JSON sidecar (same path stem,
// ".json") naming each record: parameter name, layer id, role, group order.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "equikit/tensor.hpp"

namespace equikit {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensors(const std::string& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> load_tensors(const std::string& path);

struct ParamRecord {
  std::string name;      // e.g. "backbone.down1.weight"
  std::string layer;     // layer id, e.g. "group_conv"
  std::string role;      // "weight" | "bias" | ...
  int group_order = 1;
};

/// Writes `stem`.eqtn (records in order) and `stem`.json (metadata sidecar
/// with per-record descriptions plus a free-form config blob).
void save_checkpoint(const std::string& stem, const std::vector<ParamRecord>& records,
                     const std::vector<Tensor>& tensors, const std::string& config_json);

struct Checkpoint {
  std::vector<ParamRecord> records;
  std::vector<Tensor> tensors;
  std::string config_json;
};

/// Accepts the stem, the .eqtn path, or the .json path.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace equikit
