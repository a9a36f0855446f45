#include "magicskin/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cerrno>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "magicskin/error.hpp"

namespace magicskin {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// --- PPM -------------------------------------------------------------------

// Reads one whitespace/comment separated header token.
bool read_token(std::istream& in, std::string& token) {
  token.clear();
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c) != 0) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && std::isspace(c) == 0 && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  // The single whitespace after maxval has been consumed, which is what P6 wants.
  return !token.empty();
}

int parse_header_int(const std::string& token, const fs::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v <= 0) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::CorruptImage, "bad PPM header field '" + token + "' in " +
                                             path.string());
  }
}

Frame load_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string tok;
  if (!read_token(in, tok) || tok != "P6") {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a binary P6 PPM");
  }
  std::string ws, hs, ms;
  if (!read_token(in, ws) || !read_token(in, hs) || !read_token(in, ms)) {
    throw Error(ErrorCode::CorruptImage, "truncated PPM header in " + path.string());
  }
  const int w = parse_header_int(ws, path);
  const int h = parse_header_int(hs, path);
  const int maxval = parse_header_int(ms, path);
  if (maxval > 255) {
    throw Error(ErrorCode::UnsupportedFormat,
                "16-bit PPM (maxval " + std::to_string(maxval) + ") is not supported");
  }
  if (maxval != 255) {
    throw Error(ErrorCode::UnsupportedFormat, "only maxval 255 PPM files are supported");
  }
  const std::size_t expected = static_cast<std::size_t>(w) * h * 3;
  std::vector<std::uint8_t> data(expected);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected) {
    throw Error(ErrorCode::CorruptImage, "PPM " + path.string() + " declares " +
                                             std::to_string(w) + "x" + std::to_string(h) +
                                             " but payload is " + std::to_string(in.gcount()) +
                                             " bytes");
  }
  if (in.peek() != EOF) {
    throw Error(ErrorCode::CorruptImage, "PPM " + path.string() + " has trailing bytes");
  }
  return Frame(w, h, std::move(data));
}

void save_ppm(const Frame& frame, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "P6\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  const auto d = frame.data();
  out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// --- PNG -------------------------------------------------------------------

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf != nullptr) *buf = msg;
  png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

Frame load_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn,
                                           png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng allocation failed");
  }
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  int bit_depth = 0;
  png_uint_32 w = 0;
  png_uint_32 h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::CorruptImage, "corrupt PNG " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UnsupportedFormat, "16-bit PNG " + path.string() + " is not supported");
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  if ((color_type & PNG_COLOR_MASK_ALPHA) != 0) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS) != 0) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UnsupportedFormat, "unexpected PNG layout in " + path.string());
  }
  data.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return Frame(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

void write_png_rows(const fs::path& path, int width, int height, int color_type,
                    const std::vector<const std::uint8_t*>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) {
    throw Error(ErrorCode::IoError,
                "cannot open " + path.string() + " for writing: " + std::strerror(errno));
  }
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn,
                                            png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "PNG write failed for " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 1);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_rows(png, const_cast<png_bytepp>(rows.data()), static_cast<png_uint_32>(height));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw Error(ErrorCode::IoError, "flush failed for " + path.string());
}

void save_png(const Frame& frame, const fs::path& path) {
  std::vector<const std::uint8_t*> rows(frame.height());
  const auto d = frame.data();
  for (int y = 0; y < frame.height(); ++y) {
    rows[y] = d.data() + static_cast<std::size_t>(y) * frame.width() * 3;
  }
  write_png_rows(path, frame.width(), frame.height(), PNG_COLOR_TYPE_RGB, rows);
}

}  // namespace

Frame load_frame(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, "no such file: " + path.string());
  }
  const auto ext = lower_ext(path);
  if (ext == ".ppm") return load_ppm(path);
  if (ext == ".png") return load_png(path);
  throw Error(ErrorCode::UnsupportedFormat, "unsupported frame extension '" + ext + "'");
}

void save_frame(const Frame& frame, const fs::path& path) {
  if (frame.empty()) throw Error(ErrorCode::InvalidArgument, "cannot save an empty frame");
  const auto ext = lower_ext(path);
  if (ext == ".ppm") {
    save_ppm(frame, path);
  } else if (ext == ".png") {
    save_png(frame, path);
  } else {
    throw Error(ErrorCode::UnsupportedFormat, "unsupported frame extension '" + ext + "'");
  }
}

std::string frame_filename(int index, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.", index);
  return std::string(buf) + ext;
}

SequenceManifest read_sequence_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    SequenceManifest m;
    m.fps = j.at("fps").get<double>();
    m.frame_count = j.at("frame_count").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, "invalid sequence manifest " + path.string() + ": " +
                                            e.what());
  }
}

void write_sequence_manifest(const SequenceManifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["fps"] = m.fps;
  j["frame_count"] = m.frame_count;
  j["width"] = m.width;
  j["height"] = m.height;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

FrameSequence load_sequence(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::FileNotFound, "no such directory: " + dir.string());
  }
  static const std::regex pattern(R"(frame_(\d{6})\.(ppm|png|PPM|PNG))");
  std::map<int, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const int idx = std::stoi(m[1].str());
      if (!files.emplace(idx, entry.path()).second) {
        throw Error(ErrorCode::NonContiguousIndices,
                    "duplicate frame index " + std::to_string(idx) + " in " + dir.string());
      }
    }
  }
  if (files.empty()) throw Error(ErrorCode::EmptyDirectory, "no frame files in " + dir.string());
  int expected = 0;
  for (const auto& [idx, p] : files) {
    if (idx != expected) {
      throw Error(ErrorCode::NonContiguousIndices,
                  "expected frame " + std::to_string(expected) + " but found " +
                      std::to_string(idx) + " in " + dir.string());
    }
    ++expected;
  }

  FrameSequence seq;
  const fs::path manifest_path = dir / "sequence.json";
  std::optional<SequenceManifest> manifest;
  if (fs::exists(manifest_path)) {
    manifest = read_sequence_manifest(manifest_path);
    seq.fps = manifest->fps;
  }
  seq.frames.reserve(files.size());
  for (const auto& [idx, p] : files) {
    Frame f = load_frame(p);
    f.set_index(idx);
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  if (manifest) {
    if (manifest->frame_count != static_cast<int>(seq.frames.size())) {
      throw Error(ErrorCode::NonContiguousIndices,
                  "sequence.json lists " + std::to_string(manifest->frame_count) +
                      " frames but directory holds " + std::to_string(seq.frames.size()));
    }
    if (manifest->width != seq.frames[0].width() || manifest->height != seq.frames[0].height()) {
      throw Error(ErrorCode::DimensionMismatch, "sequence.json dimensions disagree with frames");
    }
  }
  return seq;
}

void save_sequence(const FrameSequence& seq, const fs::path& dir, const std::string& ext) {
  if (seq.frames.empty()) throw Error(ErrorCode::InvalidArgument, "cannot save an empty sequence");
  seq.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& f : seq.frames) save_frame(f, dir / frame_filename(f.index(), ext));
  write_sequence_manifest({seq.fps, static_cast<int>(seq.frames.size()), seq.frames[0].width(),
                           seq.frames[0].height()},
                          dir / "sequence.json");
}

void save_pgm(std::span<const std::uint8_t> bits, int width, int height, const fs::path& path) {
  if (bits.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::InvalidArgument, "PGM payload does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<char> payload(bits.size());
  std::transform(bits.begin(), bits.end(), payload.begin(),
                 [](std::uint8_t b) { return static_cast<char>(b != 0 ? 255 : 0); });
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace magicskin
