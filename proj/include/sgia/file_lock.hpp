// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

namespace sgia {

// Advisory flock(2) on a lock file, released on destruction. Coordinates
// both threads (each lock opens its own descriptor) and processes.
class FileLock {
 public:
  enum class Mode { kShared, kExclusive };

  FileLock(const std::filesystem::path& path, Mode mode);
  ~FileLock();

  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace sgia
