// SPDX-License-Identifier: Apache-2.0

#pragma once

// Run artifacts: <run-id>.ckpt checkpoints and <run-id>.metrics line files.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aft/matrix.hpp"
#include "aft/models.hpp"
#include "aft/trainer.hpp"

namespace aft {

/// A checkpoint is a JSON index naming each tensor, its shape and its
/// FeatureFile, stored under "<index>.tensors/". Values are kept as float32.
struct Checkpoint {
  std::map<std::string, Matrix> tensors;
  nlohmann::json meta = nlohmann::json::object();
};

void write_checkpoint(const std::filesystem::path& index, const Checkpoint& checkpoint);
/// Throws FormatError on a malformed index or a tensor whose shape disagrees with it.
Checkpoint read_checkpoint(const std::filesystem::path& index);

/// All parameters of a trained state plus the extractor architecture in meta.
Checkpoint checkpoint_from_state(TrainState& state);
/// Rebuilds the extractor stored in a checkpoint.
Extractor extractor_from_checkpoint(const Checkpoint& checkpoint);

nlohmann::json to_json(const StepRecord& record);
nlohmann::json to_json(const EvalRecord& record);

/// Writes the header line, one line per step and eval record, and the final line.
void write_metrics(const std::filesystem::path& path, const nlohmann::json& header, const RunRecord& run,
                   const nlohmann::json& final_line);
/// Every line of a metrics file, parsed. Throws FormatError naming the bad line.
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

}  // namespace aft
