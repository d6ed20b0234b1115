#pragma once

// Dataset bundles, checkpoints, CSV tables, run reports and configuration
// files.
//
// Bundle layout (one directory):
//   edges.tsv     two integer node ids per line, whitespace separated
//   features.f32  "GSF1", u32 n, u32 d, then n*d little-endian float32 values
//   features.csv  alternative: n lines of d comma-separated numbers
//   labels.csv    "node,class" per line (an optional non-numeric header is skipped)
//   meta.json     {"n": .., "d": .., "c": .., "name": ..}
// Blank lines and lines starting with '#' are ignored in the text files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sgnn/complexity.hpp"
#include "sgnn/graph.hpp"
#include "sgnn/train.hpp"

namespace sgnn {

using Json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

enum class FeatureFormat { Binary, Csv };

// Loads and validates a bundle. Self-loop lines are skipped and reported via
// `warnings`; reversed or repeated edges collapse. Malformed lines raise
// ParseError with the line number; disagreement with meta.json raises
// IntegrityError.
Graph load_dataset(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);
void save_dataset(const Graph& g, const std::filesystem::path& dir,
                  FeatureFormat format = FeatureFormat::Binary);

DenseMatrix read_features_f32(const std::filesystem::path& file);
void write_features_f32(const DenseMatrix& x, const std::filesystem::path& file);

// ---- configuration

Json config_to_json(const TrainConfig& c);
// Applies the keys present in `j` on top of `c`; unknown keys throw ValidationError.
void apply_config_json(TrainConfig& c, const Json& j);
// Single key=value override, using the same key names as the JSON form.
void apply_config_entry(TrainConfig& c, std::string_view key, std::string_view value);
// A JSON object, or key=value lines ('#' comments allowed).
void apply_config_file(TrainConfig& c, const std::filesystem::path& file);
// 64-bit FNV-1a of the canonical config JSON, as 16 hex digits.
std::string config_hash(const TrainConfig& c);

// ---- checkpoints (JSON; doubles round-trip exactly)

struct Checkpoint {
  Model model;
  TrainConfig config;
  Masks masks;
  std::string dataset;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& file);
// Throws ParseError on malformed content, IntegrityError on a version or
// config-hash mismatch or parameter shape disagreement.
Checkpoint load_checkpoint(const std::filesystem::path& file);

// ---- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Values are written with 17 significant digits.
void emit_csv(const CsvTable& t, const std::filesystem::path& file);
std::string format_csv(const CsvTable& t);
CsvTable read_csv(const std::filesystem::path& file);

// ---- reports

Json to_json(const EpochRecord& r);
Json to_json(const Evaluation& e);
Json to_json(const SnapshotMetrics& s);
Json to_json(const BoundInputs& b);
Json to_json(const ComplexityReport& c);
// Bounds with the supplied empirical risk (train error) added to each gap.
Json to_json(const BoundReport& b, double empirical_risk);

struct RunReport {
  TrainConfig config;
  std::string dataset;
  std::size_t nodes = 0, edges = 0, features = 0, classes = 0;
  TrainResult result;
  std::optional<BoundReport> bounds;
};

Json run_report_json(const RunReport& r);
// Checks required fields, types and finiteness; throws ValidationError.
void validate_run_report(const Json& j);

// One line of the JSON-lines training log (no trailing newline).
std::string epoch_log_line(const EpochRecord& r);

void write_text(const std::filesystem::path& file, std::string_view text);

}  // namespace sgnn
