#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testutil {

// Self-cleaning scratch directory for file-format and pipeline tests.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto stamp =
        std::chrono::steady_clock::now().time_since_epoch().count() ^ (++counter() * 0x9e3779b9u);
    path_ = std::filesystem::temp_directory_path() /
            ("dpcam_" + tag + "_" + std::to_string(static_cast<std::uint64_t>(stamp)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static std::uint64_t& counter() {
    static std::uint64_t c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace testutil
