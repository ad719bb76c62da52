#pragma once

#include "jsqr/likelihood.hpp"
#include "jsqr/mcmc.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace jsqr {

/// Lossless decimal form of a double (17 significant digits).
std::string format_double(double v);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t h);
std::string read_file(const std::string& path);
std::string file_hash(const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Numeric CSV with a header row. Blank lines are skipped; any malformed line
/// raises DataError naming its line number.
CsvTable read_numeric_csv(const std::string& path);

/// Reads the `y, x1..xp, s1, s2` data schema. Without a record the predictors
/// are rescaled by their own range.
Dataset read_dataset(const std::string& path, const RescaleRecord* record = nullptr);
void write_dataset(const std::string& path, const Dataset& data);

struct DrawsHeader {
  int version = 1;
  std::string config_hash;
  std::string data_hash;
  std::uint64_t seed = 0;
  std::string created;  // wall-clock stamp, excluded from the payload
  RescaleRecord rescale;
};

struct DrawsFile {
  DrawsHeader header;
  PosteriorDraws draws;
};

/// Text draws file: '#' header lines followed by a CSV of one row per draw
/// (chain, phi_index, loglik, log_post, parameters, u).
void write_draws(const std::string& path, const PosteriorDraws& draws, const DrawsHeader& header);
DrawsFile read_draws(const std::string& path);
/// The file contents after dropping the timestamp line.
std::string draws_payload(const std::string& path);

/// Flat `key = value` configuration with dotted section names. '#' starts a
/// comment; a `[section]` line prefixes the keys that follow.
using ConfigMap = std::map<std::string, std::string>;
ConfigMap parse_config(const std::string& text);
ConfigMap read_config(const std::string& path);

}  // namespace jsqr
