#pragma once

// JSON documents for configs, checkpoints, logs, prediction dumps and reports.
// Field names are part of the file formats documented in docs/formats.md.

#include <string>

#include "ldpf/experiment.hpp"
#include "ldpf/json_util.hpp"

namespace ldpf {

Json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const Json& j, SyntheticSpec base = {});

Json to_json(const BackboneDescriptor& desc);
BackboneDescriptor backbone_from_json(const Json& j, BackboneDescriptor base = {});

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

Json to_json(const FusionConfig& cfg);
FusionConfig fusion_config_from_json(const Json& j, FusionConfig base = {});

Json to_json(const ExperimentConfig& cfg);
/// Keys present in `j` override `base`; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base = {});

Json to_json(const LdpfModel& model);
LdpfModel model_from_json(const Json& j);

Json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const Json& j);

Json to_json(const EpochLog& entry);
Json to_json(const PredictionRow& row);
PredictionRow prediction_row_from_json(const Json& j, std::size_t line);
Json to_json(const BoundReport& report);
Json to_json(const ClusterReport& report);
Json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const Json& j);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// One JSON object per line.
std::string training_log_ndjson(const std::vector<EpochLog>& log);
std::string prediction_dump_ndjson(const PredictionDump& dump);
/// Parses a dump; schema errors name the offending line.
PredictionDump parse_prediction_dump(const std::string& text);

/// Pretty JSON with a trailing newline.
std::string dump_document(const Json& j);

}  // namespace ldpf
