#pragma once

// Frame sourcing for networked backends. Frames come from pre-extracted
// directories (<root>/<video_id>/frame_%06d.jpg plus meta.json), from an
// external decoder command, or from a synthetic placeholder.

#include "tsearch/domain.hpp"

#include <cstddef>
#include <filesystem>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace tsearch {

/// A frame that could not be produced. Names the offending index.
class FrameError : public Error {
 public:
  FrameError(const std::string& what, FrameIndex index) : Error(what), index_(index) {}
  FrameIndex index() const { return index_; }

 private:
  FrameIndex index_;
};

struct EncodedFrame {
  FrameIndex index = 0;
  double timestamp = 0.0;
  std::string jpeg;  // raw JPEG bytes

  std::string base64() const;
  std::string data_url() const { return "data:image/jpeg;base64," + base64(); }
};

struct JpegOptions {
  int quality = 85;
  int max_long_edge = 768;
};

/// Re-encodes `jpeg` so its long edge is at most max_long_edge. Images that
/// already fit are returned unchanged.
std::string fit_jpeg(const std::string& jpeg, const JpegOptions& options);

/// Small uniform-gray JPEG.
std::string placeholder_jpeg(int width = 16, int height = 16);

std::string base64_encode(std::string_view bytes);

/// frame_%06d.jpg
std::string frame_file_name(FrameIndex index);

/// Reads <root>/<video_id>/meta.json: {"total_frames": N, "fps": 30 | "30000/1001"}.
VideoSource load_video_meta(const std::filesystem::path& root, const std::string& video_id);

class FrameStore {
 public:
  enum class Kind { directory, external_command, synthetic };

  struct Stats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t cached_bytes = 0;
  };

  /// `root` is a directory path for Kind::directory, or a command template
  /// with {video} and {index} placeholders whose stdout is one JPEG image
  /// for Kind::external_command. Unused for Kind::synthetic.
  FrameStore(Kind kind, std::string root, std::size_t cache_budget_bytes = 64u << 20, JpegOptions jpeg = {});

  static FrameStore directory(const std::filesystem::path& root, std::size_t cache_budget_bytes = 64u << 20);
  static FrameStore external_command(std::string command_template, std::size_t cache_budget_bytes = 64u << 20);
  static FrameStore synthetic();

  Kind kind() const { return kind_; }
  const std::string& root() const { return root_; }

  /// Encoded frames in the order requested. Thread-safe; concurrent requests
  /// for the same frame share one load. Throws FrameError on the first
  /// index that cannot be produced.
  std::vector<EncodedFrame> resolve(const VideoSource& video, const std::vector<FrameIndex>& indices);

  Stats stats() const;

 private:
  using Key = std::pair<std::string, FrameIndex>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<std::string>()(k.first) ^ (std::hash<FrameIndex>()(k.second) * 0x9e3779b97f4a7c15ULL);
    }
  };
  struct Entry {
    std::shared_future<std::string> bytes;
    std::size_t size = 0;
    std::list<Key>::iterator lru;
    bool ready = false;
  };

  std::string load(const VideoSource& video, FrameIndex index) const;
  std::string fetch(const VideoSource& video, FrameIndex index);

  Kind kind_;
  std::string root_;
  std::size_t budget_;
  JpegOptions jpeg_;

  // Movable handle around the cache state so FrameStore stays a value type.
  struct Cache {
    std::mutex mu;
    std::unordered_map<Key, Entry, KeyHash> entries;
    std::list<Key> lru;  // front = most recent
    std::size_t bytes = 0;
    std::size_t hits = 0;
    std::size_t misses = 0;
  };
  std::unique_ptr<Cache> cache_;
};

}  // namespace tsearch
