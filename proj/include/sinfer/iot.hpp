#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sinfer/errors.hpp"
#include "sinfer/prng.hpp"

namespace sinfer {

inline constexpr size_t kSensorCount = 17;

inline constexpr std::array<const char*, 8> kClassNames = {
    "normal",   "backdoor",   "ddos",     "injection",
    "password", "ransomware", "scanning", "xss"};

inline int label_from_name(const std::string& name) {
  for (size_t i = 0; i < kClassNames.size(); ++i)
    if (name == kClassNames[i]) return static_cast<int>(i);
  return -1;
}

// One sensor reading: 17 subsensor values, any of which may be missing,
// plus the system status label at that moment.
struct SensorRow {
  uint64_t timestamp = 0;
  std::array<double, kSensorCount> values{};
  uint32_t present = 0;
  uint8_t label = 0;

  bool has(size_t j) const { return (present >> j) & 1; }
  void set(size_t j, double v) {
    values[j] = v;
    present |= 1u << j;
  }
  bool operator==(const SensorRow&) const = default;
};

struct SensorTable {
  std::vector<SensorRow> rows;
};

// Presence indicator per subsensor: a reading that arrived encodes as 0, a
// missing one as 1.
inline std::array<uint8_t, kSensorCount> impute_miss3(const SensorRow& row) {
  std::array<uint8_t, kSensorCount> out{};
  for (size_t j = 0; j < kSensorCount; ++j) out[j] = row.has(j) ? 0 : 1;
  return out;
}

// A window of sensor history rendered as a 3-channel image; all channels
// carry the same indicator plane.  The oldest reading is the top row and
// the window's label is the label of its last (most recent) row.
struct WindowImage {
  size_t h = 0, w = 0;
  std::vector<uint8_t> pixels;  // 3 * h * w values in {0, 1}, channel-major
  uint8_t label = 0;

  size_t data_col_lo() const { return (w - kSensorCount) / 2; }
  std::vector<double> chw() const {
    return std::vector<double>(pixels.begin(), pixels.end());
  }
  bool operator==(const WindowImage&) const = default;
};

// Stride-1 sliding windows over the stream, each rendered with the 17
// indicator columns centered by floor division: width 224 puts them at
// columns 103..119, width 32 at 7..23.
inline std::vector<WindowImage> encode_windows(const std::vector<SensorRow>& rows,
                                               size_t height = 224, size_t width = 224) {
  if (width < kSensorCount)
    throw ShapeError("window width must fit the 17 indicator columns");
  if (height == 0) throw ShapeError("window height must be positive");
  if (rows.size() < height)
    throw ShapeError("stream holds " + std::to_string(rows.size()) +
                     " rows, fewer than the window height " + std::to_string(height));

  size_t left = (width - kSensorCount) / 2;
  std::vector<WindowImage> out;
  out.reserve(rows.size() - height + 1);
  for (size_t start = 0; start + height <= rows.size(); ++start) {
    WindowImage img;
    img.h = height;
    img.w = width;
    img.pixels.assign(3 * height * width, 0);
    for (size_t r = 0; r < height; ++r) {
      std::array<uint8_t, kSensorCount> ind = impute_miss3(rows[start + r]);
      for (size_t j = 0; j < kSensorCount; ++j) {
        uint8_t v = ind[j];
        if (!v) continue;
        size_t col = left + j;
        for (size_t c = 0; c < 3; ++c)
          img.pixels[c * height * width + r * width + col] = v;
      }
    }
    img.label = rows[start + height - 1].label;
    out.push_back(std::move(img));
  }
  return out;
}

// Splits the stream into contiguous 500-reading sequences and deals whole
// sequences into the two sides; a trailing undersized sequence is dropped.
// Within each side the sequences keep their original order.
inline std::pair<SensorTable, SensorTable> partition_sequences(const SensorTable& table,
                                                               size_t seq_len,
                                                               double train_frac,
                                                               uint64_t seed) {
  if (seq_len == 0) throw ShapeError("sequence length must be positive");
  size_t chunks = table.rows.size() / seq_len;
  if (chunks == 0)
    throw ShapeError("stream holds " + std::to_string(table.rows.size()) +
                     " rows, not even one sequence of " + std::to_string(seq_len));

  size_t n_train = static_cast<size_t>(
      std::llround(train_frac * static_cast<double>(chunks)));
  if (n_train > chunks) n_train = chunks;

  std::vector<size_t> order(chunks);
  for (size_t i = 0; i < chunks; ++i) order[i] = i;
  Prg rng = Prg::from_seed(seed_from_u64(seed), 0x70617274);
  for (size_t i = chunks; i > 1; --i) {
    size_t j = rng.next_u64() % i;
    std::swap(order[i - 1], order[j]);
  }
  std::vector<bool> is_train(chunks, false);
  for (size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;

  SensorTable train, test;
  for (size_t c = 0; c < chunks; ++c) {
    auto& dst = is_train[c] ? train : test;
    dst.rows.insert(dst.rows.end(), table.rows.begin() + c * seq_len,
                    table.rows.begin() + (c + 1) * seq_len);
  }
  return {std::move(train), std::move(test)};
}

// ---- CSV ----
// Header: timestamp,s0..s16,label.  An empty cell is a missing reading.

inline void save_csv(const std::string& path, const SensorTable& table) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path);
  f << "timestamp";
  for (size_t j = 0; j < kSensorCount; ++j) f << ",s" << j;
  f << ",label\n";
  char buf[40];
  for (const SensorRow& row : table.rows) {
    f << row.timestamp;
    for (size_t j = 0; j < kSensorCount; ++j) {
      f << ',';
      if (row.has(j)) {
        std::snprintf(buf, sizeof buf, "%.17g", row.values[j]);
        f << buf;
      }
    }
    f << ',' << kClassNames[row.label] << "\n";
  }
}

inline SensorTable load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot read " + path);
  std::string line;
  size_t lineno = 0;

  auto fail = [&](const std::string& why) -> void {
    throw FormatError(path + " line " + std::to_string(lineno) + ": " + why);
  };

  if (!std::getline(f, line)) throw FormatError(path + ": empty file");
  lineno = 1;
  {
    std::string want = "timestamp";
    for (size_t j = 0; j < kSensorCount; ++j) want += ",s" + std::to_string(j);
    want += ",label";
    if (line != want) fail("unexpected header");
  }

  SensorTable table;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t pos = 0;
    while (true) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(pos));
        break;
      }
      cells.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (cells.size() != kSensorCount + 2) fail("wrong cell count");

    SensorRow row;
    try {
      row.timestamp = std::stoull(cells[0]);
    } catch (...) {
      fail("bad timestamp");
    }
    for (size_t j = 0; j < kSensorCount; ++j) {
      const std::string& cell = cells[1 + j];
      if (cell.empty()) continue;
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (...) {
        fail("bad reading in s" + std::to_string(j));
      }
      if (used != cell.size()) fail("bad reading in s" + std::to_string(j));
      row.set(j, v);
    }
    int label = label_from_name(cells.back());
    if (label < 0) fail("unknown label " + cells.back());
    row.label = static_cast<uint8_t>(label);
    table.rows.push_back(row);
  }
  return table;
}

// ---- image file ----
// "SIMG" | u32 version | u32 count | u32 channels | u32 h | u32 w |
// count * channels*h*w pixel bytes | count label bytes.

inline void save_images(const std::string& path, const std::vector<WindowImage>& images) {
  if (images.empty()) throw FormatError("no images to save");
  for (const WindowImage& img : images)
    if (img.h != images[0].h || img.w != images[0].w)
      throw ShapeError("images in one file must share dimensions");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  auto put_u32 = [&](uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  f.write("SIMG", 4);
  put_u32(1);
  put_u32(static_cast<uint32_t>(images.size()));
  put_u32(3);
  put_u32(static_cast<uint32_t>(images[0].h));
  put_u32(static_cast<uint32_t>(images[0].w));
  for (const WindowImage& img : images)
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  for (const WindowImage& img : images)
    f.write(reinterpret_cast<const char*>(&img.label), 1);
}

inline std::vector<WindowImage> load_images(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  size_t off = 0;
  auto need = [&](size_t k) {
    if (off + k > bytes.size()) throw FormatError("image file truncated");
  };
  auto u32 = [&]() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[off + i]) << (8 * i);
    off += 4;
    return v;
  };
  need(4);
  if (std::memcmp(bytes.data(), "SIMG", 4) != 0) throw FormatError("not an image file");
  off = 4;
  if (u32() != 1) throw FormatError("unsupported image file version");
  uint32_t count = u32();
  uint32_t channels = u32();
  uint32_t h = u32();
  uint32_t w = u32();
  if (channels != 3) throw FormatError("image file must carry 3 channels");
  if (count == 0 || h == 0 || w == 0) throw FormatError("empty image file");

  std::vector<WindowImage> images(count);
  size_t plane = static_cast<size_t>(channels) * h * w;
  for (WindowImage& img : images) {
    need(plane);
    img.h = h;
    img.w = w;
    img.pixels.assign(bytes.begin() + off, bytes.begin() + off + plane);
    off += plane;
    for (uint8_t v : img.pixels)
      if (v > 1) throw FormatError("image pixels must be 0 or 1");
  }
  for (WindowImage& img : images) {
    need(1);
    img.label = bytes[off++];
    if (img.label >= kClassNames.size()) throw FormatError("image label out of range");
  }
  if (off != bytes.size()) throw FormatError("trailing bytes in image file");
  return images;
}

// ---- synthetic streams ----

// Deterministic stand-in for a real sensor capture.  The stream is a
// sequence of class episodes; each class silences its own small set of
// subsensors most of the time, so the miss3 encoding separates classes.
inline SensorTable gen_synthetic_stream(uint64_t seed, size_t rows,
                                        const std::array<double, 8>& profile = {
                                            0.5, 0.0714, 0.0714, 0.0714, 0.0714,
                                            0.0715, 0.0715, 0.0714}) {
  Prg rng = Prg::from_seed(seed_from_u64(seed), 0x73747265);
  double total = 0;
  for (double p : profile) total += p;
  if (total <= 0) throw FormatError("class profile must have positive mass");

  SensorTable table;
  table.rows.reserve(rows);
  uint64_t ts = 1700000000;
  while (table.rows.size() < rows) {
    double pick = rng.next_double(0.0, total);
    size_t cls = 0;
    double acc = 0;
    for (size_t k = 0; k < profile.size(); ++k) {
      acc += profile[k];
      if (pick < acc) {
        cls = k;
        break;
      }
    }
    size_t run = 30 + static_cast<size_t>(rng.next_u64() % 51);
    for (size_t r = 0; r < run && table.rows.size() < rows; ++r) {
      SensorRow row;
      row.timestamp = ts;
      ts += 5;
      row.label = static_cast<uint8_t>(cls);
      for (size_t j = 0; j < kSensorCount; ++j) {
        bool signature = cls != 0 && (j % 8 == cls || (j + 3) % 8 == cls);
        double miss_p = signature ? 0.9 : 0.04;
        if (rng.next_double(0.0, 1.0) < miss_p) continue;
        row.set(j, rng.next_double(-1.0, 1.0) + static_cast<double>(j));
      }
      table.rows.push_back(row);
    }
  }
  return table;
}

}  // namespace sinfer
