#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace milab {

std::string read_file(const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);
void append_double(std::string& out, double value);

// Collects output files in memory and publishes them together: each file is
// written to a temporary name next to its destination and renamed into
// place. On any failure every temporary and already-renamed file is removed,
// so a failed command leaves no partial output.
class OutputStage {
 public:
  explicit OutputStage(std::filesystem::path dir);

  void add(std::string name, std::string contents);
  // Throws IoError.
  void commit();

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace milab
