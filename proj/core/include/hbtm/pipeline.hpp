#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/inference.hpp"
#include "hbtm/topics.hpp"

namespace hbtm {

struct PipelineConfig {
  std::filesystem::path input;
  InputFormat format = InputFormat::jsonl;
  std::string epoch = "2020-01-01";
  std::optional<std::filesystem::path> stopwords_file;
  std::vector<std::string> stopwords;
  std::filesystem::path output_dir = "hbtm_out";

  std::size_t dict_size = 425;
  std::set<std::string> seeds;  // empty: keep every post
  ExpansionOptions expansion;

  EmConfig em;
  ForestMode forest_mode = ForestMode::sample;
  std::uint64_t forest_seed = 1;
  std::size_t min_cluster_size = 11;
  std::size_t subtopic_min_cluster_size = 2;
  std::size_t top_k = 8;
  double network_threshold = 10.0;
  std::size_t rank_k = 3;
  std::string attr_key = "party";
  std::vector<std::vector<std::string>> subtopics = {{"risk"}, {"vaccine", "treatment"}, {"test"}};

  bool simulate = true;
  std::uint64_t simulation_seed = 7;
  std::optional<double> simulation_t_end;  // defaults to the fitted window end
};

/// Parses a pipeline config; relative paths resolve against `base_dir`.
/// Unknown keys raise ConfigError naming the key.
PipelineConfig pipeline_config_from_json(std::string_view text,
                                         const std::filesystem::path& base_dir = {});

struct Artifact {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct PipelineResult {
  std::vector<Artifact> manifest;
  std::vector<std::string> notes;  // skipped stages and data warnings
};

/// Runs ingest, keyword expansion, markization, EM, clustering, network
/// construction and simulation, then the same analysis on every keyword
/// subtopic. Files are written as "<name>.partial" and renamed when their
/// stage succeeds; manifest.json lists every final file with its SHA-256.
/// Failures are rethrown with the stage name prefixed.
PipelineResult run_pipeline(const PipelineConfig& config);

std::string sha256_hex(std::string_view bytes);

}  // namespace hbtm
