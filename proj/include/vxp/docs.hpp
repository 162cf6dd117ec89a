#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vxp {

struct DocFile {
  std::string name;  // relative to the docs directory
  std::string content;
};

/// protocols.md (parameter table plus protocol definitions) and formats.md,
/// both generated from the constants table.
std::vector<DocFile> render_protocol_docs();

struct DocConstant {
  std::string key;
  double value = 0.0;
};

/// Rows of the `| key | value | ...` parameter table in protocols.md.
std::vector<DocConstant> parse_doc_constants(const std::string& markdown);

/// Throws DriftDetected when a documented value, or a config struct
/// default, disagrees with the constants table.
void check_doc_constants(const std::vector<DocConstant>& documented);
void check_config_defaults();

/// Runs both checks against `docs_dir/protocols.md` and verifies that every
/// rendered file matches what is on disk.
void check_docs_in_sync(const std::filesystem::path& docs_dir);

void write_protocol_docs(const std::filesystem::path& docs_dir);

}  // namespace vxp
