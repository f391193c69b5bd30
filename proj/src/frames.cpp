#include "tsearch/frames.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>

extern "C" {
#include <jpeglib.h>
}

namespace tsearch {

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string EncodedFrame::base64() const { return base64_encode(jpeg); }

std::string frame_file_name(FrameIndex index) { return fmt::format("frame_{:06d}.jpg", index); }

// ----------------------------------------------------------------------------
// JPEG helpers (libjpeg reports errors through longjmp)
// ----------------------------------------------------------------------------

namespace {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<unsigned char> pixels;
};

// Returns false and fills `error` on failure. Decodes at 1/scale_denom size.
bool decode_jpeg(const std::string& jpeg, unsigned scale_denom, Raster& out, std::string& error) {
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    error = err.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(jpeg.data()), static_cast<unsigned long>(jpeg.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.scale_num = 1;
  cinfo.scale_denom = scale_denom;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.channels = cinfo.output_components;
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * out.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool jpeg_dimensions(const std::string& jpeg, int& width, int& height, std::string& error) {
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    error = err.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(jpeg.data()), static_cast<unsigned long>(jpeg.size()));
  jpeg_read_header(&cinfo, TRUE);
  width = static_cast<int>(cinfo.image_width);
  height = static_cast<int>(cinfo.image_height);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool encode_jpeg(const Raster& raster, int quality, std::string& out, std::string& error) {
  jpeg_compress_struct cinfo{};
  JpegErrorMgr err{};
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    error = err.message;
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(raster.width);
  cinfo.image_height = static_cast<JDIMENSION>(raster.height);
  cinfo.input_components = raster.channels;
  cinfo.in_color_space = raster.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(raster.pixels.data() +
                                     static_cast<std::size_t>(cinfo.next_scanline) * raster.width * raster.channels);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  out.assign(reinterpret_cast<const char*>(buffer), size);
  std::free(buffer);
  return true;
}

// Box filter down to (w, h).
Raster downscale(const Raster& src, int w, int h) {
  Raster dst{w, h, src.channels, std::vector<unsigned char>(static_cast<std::size_t>(w) * h * src.channels)};
  for (int y = 0; y < h; ++y) {
    const int y0 = y * src.height / h;
    const int y1 = std::max(y0 + 1, (y + 1) * src.height / h);
    for (int x = 0; x < w; ++x) {
      const int x0 = x * src.width / w;
      const int x1 = std::max(x0 + 1, (x + 1) * src.width / w);
      for (int c = 0; c < src.channels; ++c) {
        unsigned sum = 0;
        for (int yy = y0; yy < y1; ++yy) {
          for (int xx = x0; xx < x1; ++xx) {
            sum += src.pixels[(static_cast<std::size_t>(yy) * src.width + xx) * src.channels + c];
          }
        }
        dst.pixels[(static_cast<std::size_t>(y) * w + x) * src.channels + c] =
            static_cast<unsigned char>(sum / static_cast<unsigned>((y1 - y0) * (x1 - x0)));
      }
    }
  }
  return dst;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

}  // namespace

std::string fit_jpeg(const std::string& jpeg, const JpegOptions& options) {
  std::string error;
  int width = 0, height = 0;
  if (!jpeg_dimensions(jpeg, width, height, error)) throw Error("not a JPEG image: " + error);
  const int long_edge = std::max(width, height);
  if (long_edge <= options.max_long_edge) return jpeg;

  unsigned denom = 1;
  while (denom < 8 && long_edge / static_cast<int>(denom * 2) >= options.max_long_edge) denom *= 2;
  Raster raster;
  if (!decode_jpeg(jpeg, denom, raster, error)) throw Error("JPEG decode failed: " + error);

  const double scale = static_cast<double>(options.max_long_edge) / std::max(raster.width, raster.height);
  if (scale < 1.0) {
    raster = downscale(raster, std::max(1, static_cast<int>(raster.width * scale + 0.5)),
                       std::max(1, static_cast<int>(raster.height * scale + 0.5)));
  }
  std::string out;
  if (!encode_jpeg(raster, options.quality, out, error)) throw Error("JPEG encode failed: " + error);
  return out;
}

std::string placeholder_jpeg(int width, int height) {
  Raster r{width, height, 1, std::vector<unsigned char>(static_cast<std::size_t>(width) * height, 128)};
  std::string out, error;
  if (!encode_jpeg(r, 85, out, error)) throw Error("JPEG encode failed: " + error);
  return out;
}

VideoSource load_video_meta(const std::filesystem::path& root, const std::string& video_id) {
  const auto path = root / video_id / "meta.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("missing " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    VideoSource v;
    v.id = video_id;
    v.total_frames = j.at("total_frames").get<FrameIndex>();
    const auto& fps = j.at("fps");
    v.fps = Rational::parse(fps.is_string() ? fps.get<std::string>() : fps.dump());
    v.validate();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ----------------------------------------------------------------------------
// FrameStore
// ----------------------------------------------------------------------------

FrameStore::FrameStore(Kind kind, std::string root, std::size_t cache_budget_bytes, JpegOptions jpeg)
    : kind_(kind), root_(std::move(root)), budget_(cache_budget_bytes), jpeg_(jpeg), cache_(std::make_unique<Cache>()) {}

FrameStore FrameStore::directory(const std::filesystem::path& root, std::size_t cache_budget_bytes) {
  return FrameStore(Kind::directory, root.string(), cache_budget_bytes);
}

FrameStore FrameStore::external_command(std::string command_template, std::size_t cache_budget_bytes) {
  return FrameStore(Kind::external_command, std::move(command_template), cache_budget_bytes);
}

FrameStore FrameStore::synthetic() { return FrameStore(Kind::synthetic, "", 1u << 20); }

std::string FrameStore::load(const VideoSource& video, FrameIndex index) const {
  switch (kind_) {
    case Kind::synthetic: {
      static const std::string placeholder = placeholder_jpeg();
      return placeholder;
    }
    case Kind::directory: {
      const auto path = std::filesystem::path(root_) / video.id / frame_file_name(index);
      std::ifstream in(path, std::ios::binary);
      if (!in) throw FrameError("missing frame file " + path.string(), index);
      std::stringstream ss;
      ss << in.rdbuf();
      try {
        return fit_jpeg(ss.str(), jpeg_);
      } catch (const Error& e) {
        throw FrameError(path.string() + ": " + e.what(), index);
      }
    }
    case Kind::external_command: {
      std::string cmd = root_;
      auto substitute = [&](const std::string& key, const std::string& value) {
        for (auto pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size())) {
          cmd.replace(pos, key.size(), value);
        }
      };
      substitute("{video}", shell_quote(video.id));
      substitute("{index}", std::to_string(index));
      std::FILE* pipe = ::popen(cmd.c_str(), "r");
      if (pipe == nullptr) throw FrameError("cannot run frame command for index " + std::to_string(index), index);
      std::string bytes;
      char buf[1 << 14];
      std::size_t got = 0;
      while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) bytes.append(buf, got);
      const int status = ::pclose(pipe);
      if (status != 0 || bytes.empty()) {
        throw FrameError(fmt::format("frame command failed for index {} (status {})", index, status), index);
      }
      try {
        return fit_jpeg(bytes, jpeg_);
      } catch (const Error& e) {
        throw FrameError(fmt::format("frame command output for index {}: {}", index, e.what()), index);
      }
    }
  }
  throw FrameError("unknown frame store kind", index);
}

std::string FrameStore::fetch(const VideoSource& video, FrameIndex index) {
  const Key key{video.id, index};
  std::promise<std::string> promise;
  std::shared_future<std::string> future;
  bool owner = false;
  {
    std::lock_guard lock(cache_->mu);
    if (auto it = cache_->entries.find(key); it != cache_->entries.end()) {
      ++cache_->hits;
      cache_->lru.splice(cache_->lru.begin(), cache_->lru, it->second.lru);
      future = it->second.bytes;
    } else {
      ++cache_->misses;
      owner = true;
      cache_->lru.push_front(key);
      Entry e;
      e.bytes = promise.get_future().share();
      e.lru = cache_->lru.begin();
      future = e.bytes;
      cache_->entries.emplace(key, std::move(e));
    }
  }
  if (!owner) return future.get();

  try {
    promise.set_value(load(video, index));
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(cache_->mu);
    if (auto it = cache_->entries.find(key); it != cache_->entries.end()) {
      cache_->lru.erase(it->second.lru);
      cache_->entries.erase(it);
    }
    return future.get();  // rethrows
  }

  std::lock_guard lock(cache_->mu);
  if (auto it = cache_->entries.find(key); it != cache_->entries.end()) {
    it->second.ready = true;
    it->second.size = future.get().size();
    cache_->bytes += it->second.size;
  }
  // Evict least recently used finished entries beyond the budget.
  auto pos = cache_->lru.end();
  while (cache_->bytes > budget_ && pos != cache_->lru.begin()) {
    --pos;
    auto it = cache_->entries.find(*pos);
    if (it == cache_->entries.end() || !it->second.ready || *pos == key) continue;
    cache_->bytes -= it->second.size;
    cache_->entries.erase(it);
    pos = cache_->lru.erase(pos);
  }
  return future.get();
}

std::vector<EncodedFrame> FrameStore::resolve(const VideoSource& video, const std::vector<FrameIndex>& indices) {
  std::vector<EncodedFrame> out;
  out.reserve(indices.size());
  for (FrameIndex index : indices) {
    if (index < 0 || index >= video.total_frames) {
      throw FrameError(fmt::format("frame index {} outside [0,{})", index, video.total_frames), index);
    }
    out.push_back({index, video.timestamp(index), fetch(video, index)});
  }
  return out;
}

FrameStore::Stats FrameStore::stats() const {
  std::lock_guard lock(cache_->mu);
  return {cache_->hits, cache_->misses, cache_->bytes};
}

}  // namespace tsearch
