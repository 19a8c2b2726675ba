#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visdial/dialog.hpp"

namespace visdial {

enum class DatasetFormat { json, jsonl };

/// Parses the dataset schema: a {"version", "dialogs": [...]} document, or
/// one dialog object per line for jsonl. Every returned dialog has passed
/// validate_dialog. Syntax errors raise MalformedInput with line/offset;
/// schema errors raise SchemaViolation naming the dialog.
std::vector<Dialog> parse_dataset(std::istream& in, DatasetFormat format);

/// Loads a dataset file. Picks jsonl for a ".jsonl" extension; json documents
/// in the official VisDial release layout ({"data": {"questions", "answers",
/// "dialogs"}}) are converted on the fly.
std::vector<Dialog> load_dataset_file(const std::filesystem::path& path);

/// Converts an official-release document ({"data": {...}}) into dialogs.
std::vector<Dialog> dialogs_from_release_json(const nlohmann::json& doc);

nlohmann::ordered_json dialog_to_json(const Dialog& d);
/// `position` is used in error messages only.
Dialog dialog_from_json(const nlohmann::json& j, std::size_t position);

void write_dataset(std::ostream& out, std::span<const Dialog> dialogs, DatasetFormat format,
                   const std::string& version = "1.0");

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct DatasetSplit {
  std::vector<Dialog> train;
  std::vector<Dialog> val;
  std::vector<Dialog> test;
};

/// Seeded split with no image_id shared between parts. Dialogs sharing an
/// image_id move together. Throws SpecTooLarge when the sizes exceed the
/// corpus or cannot be met exactly under that grouping.
DatasetSplit split_dataset(std::span<const Dialog> dialogs, const SplitSizes& sizes, std::uint64_t seed);

}  // namespace visdial
