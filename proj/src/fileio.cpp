#include "milab/fileio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "milab/error.hpp"

namespace milab {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_double(double value) {
  std::string out;
  append_double(out, value);
  return out;
}

void append_double(std::string& out, double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, ptr);
}

OutputStage::OutputStage(fs::path dir) : dir_(std::move(dir)) {}

void OutputStage::add(std::string name, std::string contents) {
  files_.emplace_back(std::move(name), std::move(contents));
}

void OutputStage::commit() {
  std::error_code ec;
  const bool created = !fs::exists(dir_, ec) && fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_, ec)) {
    throw IoError("cannot create output directory " + dir_.string());
  }

  std::vector<fs::path> temps, published;
  auto rollback = [&] {
    std::error_code ignored;
    for (const auto& p : temps) fs::remove(p, ignored);
    for (const auto& p : published) fs::remove(p, ignored);
    if (created) fs::remove(dir_, ignored);
  };

  for (const auto& [name, contents] : files_) {
    const fs::path tmp = dir_ / ("." + name + ".tmp");
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (out) temps.push_back(tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) {
      rollback();
      throw IoError("cannot write " + (dir_ / name).string());
    }
  }
  for (std::size_t i = 0; i < files_.size(); ++i) {
    const fs::path dest = dir_ / files_[i].first;
    fs::rename(temps[i], dest, ec);
    if (ec) {
      rollback();
      throw IoError("cannot publish " + dest.string() + ": " + ec.message());
    }
    published.push_back(dest);
  }
}

}  // namespace milab
