#ifndef GEOCBR_CLI_HPP
#define GEOCBR_CLI_HPP

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace geocbr::cli {

/**
 * Entry point shared by the executable and the tests. `args` includes the
 * program name. Returns the process exit code: 0 on success, 1 when a
 * command fails, CLI11's code on usage errors.
 */
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace geocbr::cli

#endif  // GEOCBR_CLI_HPP
