#pragma once

#include <string>
#include <vector>

#include "crossfuse/data.hpp"
#include "crossfuse/pipeline.hpp"

namespace crossfuse {

struct PathConfig {
  std::string interactions;
  std::string user_attributes;
  std::string item_attributes;
  /// Item category lists for the KL analysis (raw id, categories joined by '|').
  std::string item_categories;
  /// Externally supplied dense feature matrices used in place of stage 1.
  std::string aux_users;
  std::string aux_items;
  std::string output = "run";
};

struct EvalConfig {
  std::vector<int> cutoffs{10, 20};
  Index kl_top_categories = 6;
  Index kl_list_length = 10;
  bool per_user = false;
};

struct RunConfig {
  PathConfig paths;
  InteractionSchema schema;
  SplitRatios ratios;
  ModelConfig model;
  EvalConfig eval;
  /// Stage-2 checkpoint interval in epochs (0: final checkpoint only).
  Index checkpoint_every = 0;
  std::string preset;

  void validate() const;
};

/// Named settings applied before any explicit key.
std::vector<std::string> preset_names();
void apply_preset(RunConfig& cfg, const std::string& name);

/// Parses `key = value` lines grouped under `[section]` headers. Comments
/// start with '#' or ';'. A top-level `preset = name` is applied first.
/// Unknown sections or keys are rejected with their line number.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);

/// Sets one `section.key` to a textual value.
void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

/// Canonical text form: every key with its current value, sections and
/// keys in a fixed order. parse_config(snapshot(c)) reproduces c.
std::string config_snapshot(const RunConfig& cfg);

/// Every recognised `section.key`.
std::vector<std::string> config_keys();

}  // namespace crossfuse
