#include "beamgrid/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "beamgrid/error.hpp"

namespace beamgrid {

using json = nlohmann::json;

namespace {

constexpr std::string_view kGridMagic = "BGRD1";
constexpr std::string_view kPathHeader = "pixel_row,pixel_col,c,psi,aod_az,aod_el,aoa_az";
constexpr std::string_view kModelFormat = "beamgrid-model";

[[noreturn]] void parse_fail(const std::string& source, std::size_t offset, const std::string& what) {
  fail(ErrorKind::kParse, source + ": " + what + " at byte offset " + std::to_string(offset));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

// Splits on single spaces, recording where each token starts.
std::vector<std::pair<std::string_view, std::size_t>> tokens(std::string_view line) {
  std::vector<std::pair<std::string_view, std::size_t>> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start), start);
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(std::string_view s, double& out) {
  // from_chars for double is missing from older libstdc++ releases.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return !tmp.empty() && end == tmp.c_str() + tmp.size();
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    parse_fail(source, e.byte == 0 ? 0 : e.byte - 1, "malformed JSON");
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::kParse, where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) fail(ErrorKind::kParse, "unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kParse, std::string("key '") + key + "' in " + where + " has the wrong type");
  }
}

template <class T>
T require_key(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) fail(ErrorKind::kParse, std::string("missing key '") + key + "' in " + where);
  T out{};
  read_key(obj, key, out, where);
  return out;
}

}  // namespace

const char* to_string(DType dtype) { return dtype == DType::kF32 ? "f32" : "u8"; }

std::size_t dtype_size(DType dtype) { return dtype == DType::kF32 ? 4 : 1; }

GridFile GridFile::make_f32(int rows, int cols, int channels) {
  GridFile g;
  g.rows = rows;
  g.cols = cols;
  g.channels = channels;
  g.dtype = DType::kF32;
  g.f32.assign(g.element_count(), 0.0f);
  return g;
}

GridFile GridFile::make_u8(int rows, int cols, int channels) {
  GridFile g;
  g.rows = rows;
  g.cols = cols;
  g.channels = channels;
  g.dtype = DType::kU8;
  g.u8.assign(g.element_count(), 0);
  return g;
}

std::string encode_grid(const GridFile& grid) {
  require(grid.rows >= 1 && grid.cols >= 1 && grid.channels >= 1, "grid dimensions must be positive");
  const std::size_t n = grid.element_count();
  require(grid.dtype == DType::kF32 ? grid.f32.size() == n : grid.u8.size() == n, "grid payload size mismatch");
  std::string out = std::string(kGridMagic) + " " + std::to_string(grid.rows) + " " + std::to_string(grid.cols) +
                    " " + std::to_string(grid.channels) + " " + to_string(grid.dtype) + "\n";
  out.reserve(out.size() + n * dtype_size(grid.dtype));
  if (grid.dtype == DType::kF32) {
    for (float v : grid.f32) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u32_le(out, bits);
    }
  } else {
    out.append(reinterpret_cast<const char*>(grid.u8.data()), n);
  }
  return out;
}

GridFile decode_grid(std::string_view bytes, const std::string& source) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos || nl > 256) parse_fail(source, 0, "missing grid header line");
  const auto tok = tokens(bytes.substr(0, nl));
  if (tok.empty() || tok[0].first != kGridMagic) parse_fail(source, 0, "bad magic, expected BGRD1");
  if (tok.size() != 5) parse_fail(source, tok.back().second, "grid header needs rows, cols, channels and dtype");
  GridFile g;
  int* fields[] = {&g.rows, &g.cols, &g.channels};
  for (int i = 0; i < 3; ++i) {
    if (!parse_number(tok[1 + i].first, *fields[i]) || *fields[i] < 1) {
      parse_fail(source, tok[1 + i].second, "invalid dimension '" + std::string(tok[1 + i].first) + "'");
    }
  }
  if (tok[4].first == "f32") {
    g.dtype = DType::kF32;
  } else if (tok[4].first == "u8") {
    g.dtype = DType::kU8;
  } else {
    parse_fail(source, tok[4].second, "unknown dtype '" + std::string(tok[4].first) + "'");
  }
  const std::size_t payload = bytes.size() - nl - 1;
  const std::size_t expected = g.element_count() * dtype_size(g.dtype);
  if (payload != expected) {
    parse_fail(source, nl + 1 + std::min(payload, expected),
               "payload is " + std::to_string(payload) + " bytes, expected " + std::to_string(expected));
  }
  const char* p = bytes.data() + nl + 1;
  if (g.dtype == DType::kF32) {
    g.f32.resize(g.element_count());
    for (std::size_t i = 0; i < g.f32.size(); ++i) {
      const std::uint32_t bits = get_u32_le(p + 4 * i);
      std::memcpy(&g.f32[i], &bits, sizeof bits);
    }
  } else {
    g.u8.assign(reinterpret_cast<const std::uint8_t*>(p), reinterpret_cast<const std::uint8_t*>(p) + expected);
  }
  return g;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "cannot read " + path.string());
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
}

void write_grid(const fs::path& path, const GridFile& grid) { write_text(path, encode_grid(grid)); }

GridFile read_grid(const fs::path& path) { return decode_grid(read_text(path), path.string()); }

GridFile height_map_to_grid(const HeightMap& map) {
  GridFile g = GridFile::make_f32(map.rows(), map.cols(), 2);
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      g.f32[g.index(r, c, 0)] = static_cast<float>(map.building(r, c));
      g.f32[g.index(r, c, 1)] = static_cast<float>(map.vegetation(r, c));
    }
  }
  return g;
}

HeightMap height_map_from_grid(const GridFile& grid, double resolution_m) {
  if (grid.channels != 2 || grid.dtype != DType::kF32) {
    fail(ErrorKind::kParse, "height map needs 2 f32 channels, got " + std::to_string(grid.channels) + " " +
                                to_string(grid.dtype));
  }
  require(resolution_m > 0.0, "resolution must be positive");
  HeightMap map(grid.rows, grid.cols, resolution_m);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const double b = grid.f(r, c, 0);
      const double v = grid.f(r, c, 1);
      if (!(b >= 0.0) || !(v >= 0.0) || !std::isfinite(b) || !std::isfinite(v)) {
        fail(ErrorKind::kParse, "height map has a negative or non-finite height at pixel (" + std::to_string(r) +
                                    ", " + std::to_string(c) + ")");
      }
      map.building(r, c) = b;
      map.vegetation(r, c) = v;
    }
  }
  return map;
}

std::string tx_to_json(const TxSite& tx) {
  json j;
  j["pixel"] = {tx.pixel.row, tx.pixel.col};
  j["height_m"] = tx.height_m;
  j["boresight_azimuth"] = tx.frame.boresight_azimuth;
  j["downtilt"] = tx.frame.downtilt;
  return j.dump();
}

TxSite tx_from_json(std::string_view text) {
  const json j = parse_json(text, "tx site");
  check_keys(j, {"pixel", "height_m", "boresight_azimuth", "downtilt"}, "tx site");
  TxSite tx;
  const auto pixel = require_key<std::vector<int>>(j, "pixel", "tx site");
  if (pixel.size() != 2) fail(ErrorKind::kParse, "tx site pixel must be [row, col]");
  tx.pixel = {pixel[0], pixel[1]};
  tx.height_m = require_key<double>(j, "height_m", "tx site");
  tx.frame.boresight_azimuth = require_key<double>(j, "boresight_azimuth", "tx site");
  tx.frame.downtilt = require_key<double>(j, "downtilt", "tx site");
  return tx;
}

std::string encode_paths(const SceneChannels& channels) {
  std::string out = "# rows=" + std::to_string(channels.rows) + " cols=" + std::to_string(channels.cols) +
                    " rx_height_m=" + format_double(channels.rx_height_m) + "\n";
  out += kPathHeader;
  out += '\n';
  char buf[256];
  for (int r = 0; r < channels.rows; ++r) {
    for (int c = 0; c < channels.cols; ++c) {
      for (const PathParams& p : channels.at(r, c).paths) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r, c, p.magnitude, p.phase,
                      p.aod_azimuth, p.aod_elevation, p.aoa_azimuth);
        out += buf;
      }
    }
  }
  return out;
}

SceneChannels decode_paths(std::string_view text, const std::string& source) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line, std::size_t& start) {
    if (pos >= text.size()) return false;
    start = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  std::size_t start = 0;
  if (!next_line(line, start) || !line.starts_with("#")) parse_fail(source, 0, "missing '# rows=.. cols=..' line");
  SceneChannels out;
  bool have_rows = false;
  bool have_cols = false;
  for (const auto& [tok, off] : tokens(line.substr(1))) {
    const std::size_t eq = tok.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string_view key = tok.substr(0, eq);
    const std::string_view val = tok.substr(eq + 1);
    bool ok = true;
    if (key == "rows") {
      ok = parse_number(val, out.rows) && out.rows >= 1;
      have_rows = true;
    } else if (key == "cols") {
      ok = parse_number(val, out.cols) && out.cols >= 1;
      have_cols = true;
    } else if (key == "rx_height_m") {
      ok = parse_real(val, out.rx_height_m);
    }
    if (!ok) parse_fail(source, 1 + off + eq + 1, "invalid value for " + std::string(key));
  }
  if (!have_rows || !have_cols) parse_fail(source, 0, "grid shape line lacks rows or cols");
  out.channels.assign(static_cast<std::size_t>(out.rows) * static_cast<std::size_t>(out.cols), {});

  if (!next_line(line, start) || line != kPathHeader) parse_fail(source, start, "bad or missing CSV header");
  while (next_line(line, start)) {
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(line_no) + ": ";
    std::string_view fields[7];
    std::size_t field_off[7];
    std::size_t f = 0;
    std::size_t i = 0;
    while (f < 7) {
      const std::size_t comma = line.find(',', i);
      const std::size_t end = comma == std::string_view::npos ? line.size() : comma;
      fields[f] = line.substr(i, end - i);
      field_off[f] = start + i;
      ++f;
      if (comma == std::string_view::npos) break;
      i = comma + 1;
    }
    if (f != 7 || fields[6].find(',') != std::string_view::npos) {
      parse_fail(source, start, at + "needs 7 fields");
    }
    int r = 0;
    int c = 0;
    if (!parse_number(fields[0], r)) parse_fail(source, field_off[0], at + "invalid pixel_row");
    if (!parse_number(fields[1], c)) parse_fail(source, field_off[1], at + "invalid pixel_col");
    if (r < 0 || r >= out.rows || c < 0 || c >= out.cols) {
      parse_fail(source, field_off[0], at + "pixel (" + std::to_string(r) + ", " + std::to_string(c) +
                                           ") outside the " + std::to_string(out.rows) + "x" +
                                           std::to_string(out.cols) + " grid");
    }
    double v[5];
    for (int k = 0; k < 5; ++k) {
      if (!parse_real(fields[2 + k], v[k]) || !std::isfinite(v[k])) {
        parse_fail(source, field_off[2 + k], at + "invalid number '" + std::string(fields[2 + k]) + "'");
      }
    }
    if (v[0] < 0.0) parse_fail(source, field_off[2], at + "negative path magnitude");
    MultipathChannel& ch = out.channels[static_cast<std::size_t>(r) * static_cast<std::size_t>(out.cols) +
                                        static_cast<std::size_t>(c)];
    ch.rx_pixel = {r, c};
    ch.paths.push_back({v[0], v[1], v[2], v[3], v[4]});
  }
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      out.channels[static_cast<std::size_t>(r) * static_cast<std::size_t>(out.cols) + static_cast<std::size_t>(c)]
          .rx_pixel = {r, c};
    }
  }
  return out;
}

TensorFiles tensor_map_to_files(const TensorMap& map, const LinkBudget& budget) {
  const int n = map.dims().size();
  TensorFiles files{GridFile::make_f32(map.rows(), map.cols(), n), GridFile::make_f32(map.rows(), map.cols(), 1),
                    GridFile::make_u8(map.rows(), map.cols(), 1)};
  const Grid<std::uint8_t> excluded = exclusion_mask(map, budget);
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      const auto t = map.tensor(r, c);
      for (int b = 0; b < n; ++b) files.tensor.f32[files.tensor.index(r, c, b)] = static_cast<float>(t[static_cast<std::size_t>(b)]);
      files.index.f32[files.index.index(r, c, 0)] = static_cast<float>(optimal_beam(map.tensor_copy(r, c)).flat);
      files.mask.u8[files.mask.index(r, c, 0)] = excluded(r, c) ? 0 : 1;
    }
  }
  return files;
}

TensorMap tensor_map_from_files(const GridFile& tensor, const GridFile& mask, const BeamDims& dims) {
  if (tensor.dtype != DType::kF32 || tensor.channels != dims.size()) {
    fail(ErrorKind::kInvalidArgument, "tensor grid has " + std::to_string(tensor.channels) + " " +
                                          to_string(tensor.dtype) + " channels, codebook needs " +
                                          std::to_string(dims.size()) + " f32");
  }
  if (mask.dtype != DType::kU8 || mask.channels != 1 || mask.rows != tensor.rows || mask.cols != tensor.cols) {
    fail(ErrorKind::kInvalidArgument, "mask grid " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                                          "x" + std::to_string(mask.channels) + " does not match tensor grid " +
                                          std::to_string(tensor.rows) + "x" + std::to_string(tensor.cols));
  }
  TensorMap map(tensor.rows, tensor.cols, dims);
  for (int r = 0; r < tensor.rows; ++r) {
    for (int c = 0; c < tensor.cols; ++c) {
      auto t = map.tensor(r, c);
      for (int b = 0; b < dims.size(); ++b) {
        const double v = tensor.f(r, c, b);
        if (!(v >= 0.0) || !std::isfinite(v)) {
          fail(ErrorKind::kParse, "tensor grid holds a negative or non-finite value at pixel (" +
                                      std::to_string(r) + ", " + std::to_string(c) + ")");
        }
        t[static_cast<std::size_t>(b)] = v;
      }
      map.set_valid(r, c, mask.u(r, c, 0) != 0);
    }
  }
  return map;
}

void write_tensor_dir(const fs::path& dir, const TensorFiles& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir.string());
  write_grid(dir / "tensor.bgrd", files.tensor);
  write_grid(dir / "index.bgrd", files.index);
  write_grid(dir / "mask.bgrd", files.mask);
}

TensorMap read_tensor_dir(const fs::path& dir, const BeamDims& dims) {
  return tensor_map_from_files(read_grid(dir / "tensor.bgrd"), read_grid(dir / "mask.bgrd"), dims);
}

GridFile prediction_to_grid(const PredictionMap& pred) {
  const int w = pred.width();
  GridFile g = GridFile::make_f32(pred.rows(), pred.cols(), w);
  for (int r = 0; r < pred.rows(); ++r) {
    for (int c = 0; c < pred.cols(); ++c) {
      for (int ch = 0; ch < w; ++ch) {
        g.f32[g.index(r, c, ch)] = pred.has(r, c) ? static_cast<float>(pred.scores(r, c)[static_cast<std::size_t>(ch)])
                                                  : std::numeric_limits<float>::quiet_NaN();
      }
    }
  }
  return g;
}

PredictionMap prediction_from_grid(const GridFile& grid, const BeamDims& dims) {
  if (grid.dtype != DType::kF32) fail(ErrorKind::kParse, "prediction grid must be f32");
  PredictionForm form;
  if (grid.channels == dims.size()) {
    form = PredictionForm::kJoint;
  } else if (grid.channels == dims.heads()) {
    form = PredictionForm::kSep;
  } else if (grid.channels == 3) {
    form = PredictionForm::kIndexTriple;
  } else {
    fail(ErrorKind::kInvalidArgument, "prediction grid has " + std::to_string(grid.channels) +
                                          " channels; the codebook needs " + std::to_string(dims.size()) +
                                          " (joint), " + std::to_string(dims.heads()) + " (sep) or 3 (index)");
  }
  PredictionMap pred(grid.rows, grid.cols, dims, form);
  std::vector<double> buf(static_cast<std::size_t>(grid.channels));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      bool present = true;
      for (int ch = 0; ch < grid.channels; ++ch) {
        buf[static_cast<std::size_t>(ch)] = grid.f(r, c, ch);
        if (std::isnan(buf[static_cast<std::size_t>(ch)])) present = false;
      }
      if (present) pred.set(r, c, buf);
    }
  }
  return pred;
}

void RunConfig::validate() const {
  scene.validate();
  budget.validate();
  train.validate();
  require(rx_height_m >= 0.0, "rx_height_m must be non-negative");
  require(resolution_m > 0.0, "resolution_m must be positive");
  require(building_fraction >= 0.0 && building_fraction <= 1.0, "building_fraction must lie in [0, 1]");
  require(dims.na >= 1 && dims.ne >= 1 && dims.nr >= 1, "codebook sizes must be positive");
  require(loss.floor_db < 0.0, "loss.floor_db must be negative");
  require(loss.epsilon_scale > 0.0, "loss.epsilon must be positive");
  if (loss.kind == LossKind::kIR) require(loss.sep, "the IR loss needs loss.sep = true");
  require(!k_list.empty(), "eval.k_list must not be empty");
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    require(k_list[i] >= 1 && k_list[i] <= dims.size(), "eval.k_list entries must lie in [1, Na*Ne*Nr]");
    require(i == 0 || k_list[i] > k_list[i - 1], "eval.k_list must be strictly increasing");
  }
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  const json j = parse_json(text, source);
  check_keys(j, {"scene", "codebook", "budget", "loss", "train", "eval"}, source);
  RunConfig cfg;
  if (j.contains("scene")) {
    const json& s = j["scene"];
    const std::string where = source + " scene";
    check_keys(s, {"carrier_hz", "reflection_loss_db", "vegetation_db_per_m", "max_reflections", "tx_mast_m", "seed",
                   "rx_height_m", "resolution_m", "building_fraction"},
               where);
    read_key(s, "carrier_hz", cfg.scene.carrier_hz, where);
    read_key(s, "reflection_loss_db", cfg.scene.reflection_loss_db, where);
    read_key(s, "vegetation_db_per_m", cfg.scene.vegetation_db_per_m, where);
    read_key(s, "max_reflections", cfg.scene.max_reflections, where);
    read_key(s, "tx_mast_m", cfg.scene.tx_mast_m, where);
    read_key(s, "seed", cfg.scene.seed, where);
    read_key(s, "rx_height_m", cfg.rx_height_m, where);
    read_key(s, "resolution_m", cfg.resolution_m, where);
    read_key(s, "building_fraction", cfg.building_fraction, where);
  }
  if (j.contains("codebook")) {
    const json& s = j["codebook"];
    const std::string where = source + " codebook";
    check_keys(s, {"Na", "Ne", "Nr", "weights"}, where);
    read_key(s, "Na", cfg.dims.na, where);
    read_key(s, "Ne", cfg.dims.ne, where);
    read_key(s, "Nr", cfg.dims.nr, where);
    read_key(s, "weights", cfg.codebook_weights, where);
  }
  if (j.contains("budget")) {
    const json& s = j["budget"];
    const std::string where = source + " budget";
    check_keys(s, {"tx_power_dbm", "noise_psd_dbm_hz", "bandwidth_hz", "noise_figure_db", "exclusion_threshold_db"},
               where);
    read_key(s, "tx_power_dbm", cfg.budget.tx_power_dbm, where);
    read_key(s, "noise_psd_dbm_hz", cfg.budget.noise_psd_dbm_hz, where);
    read_key(s, "bandwidth_hz", cfg.budget.bandwidth_hz, where);
    read_key(s, "noise_figure_db", cfg.budget.noise_figure_db, where);
    read_key(s, "exclusion_threshold_db", cfg.budget.exclusion_threshold_db, where);
  }
  if (j.contains("loss")) {
    const json& s = j["loss"];
    const std::string where = source + " loss";
    check_keys(s, {"kind", "sep", "epsilon", "floor_db"}, where);
    std::string kind = to_string(cfg.loss.kind);
    read_key(s, "kind", kind, where);
    try {
      cfg.loss.kind = parse_loss_kind(kind);
    } catch (const Error&) {
      fail(ErrorKind::kParse, "unknown loss kind '" + kind + "' in " + where);
    }
    read_key(s, "sep", cfg.loss.sep, where);
    read_key(s, "epsilon", cfg.loss.epsilon_scale, where);
    read_key(s, "floor_db", cfg.loss.floor_db, where);
  }
  if (j.contains("train")) {
    const json& s = j["train"];
    const std::string where = source + " train";
    check_keys(s, {"lr", "epochs", "batch", "lr_decay", "patience", "stop_patience", "momentum", "seed"}, where);
    read_key(s, "lr", cfg.train.lr, where);
    read_key(s, "epochs", cfg.train.epochs, where);
    read_key(s, "batch", cfg.train.batch, where);
    read_key(s, "lr_decay", cfg.train.lr_decay, where);
    read_key(s, "patience", cfg.train.patience, where);
    read_key(s, "stop_patience", cfg.train.stop_patience, where);
    read_key(s, "momentum", cfg.train.momentum, where);
    read_key(s, "seed", cfg.train.seed, where);
  }
  if (j.contains("eval")) {
    const json& s = j["eval"];
    const std::string where = source + " eval";
    check_keys(s, {"k_list"}, where);
    read_key(s, "k_list", cfg.k_list, where);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_text(path), path.string()); }

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["scene"] = {{"carrier_hz", cfg.scene.carrier_hz},
                {"reflection_loss_db", cfg.scene.reflection_loss_db},
                {"vegetation_db_per_m", cfg.scene.vegetation_db_per_m},
                {"max_reflections", cfg.scene.max_reflections},
                {"tx_mast_m", cfg.scene.tx_mast_m},
                {"seed", cfg.scene.seed},
                {"rx_height_m", cfg.rx_height_m},
                {"resolution_m", cfg.resolution_m},
                {"building_fraction", cfg.building_fraction}};
  j["codebook"] = {{"Na", cfg.dims.na}, {"Ne", cfg.dims.ne}, {"Nr", cfg.dims.nr}};
  if (!cfg.codebook_weights.empty()) j["codebook"]["weights"] = cfg.codebook_weights;
  j["budget"] = {{"tx_power_dbm", cfg.budget.tx_power_dbm},
                 {"noise_psd_dbm_hz", cfg.budget.noise_psd_dbm_hz},
                 {"bandwidth_hz", cfg.budget.bandwidth_hz},
                 {"noise_figure_db", cfg.budget.noise_figure_db},
                 {"exclusion_threshold_db", cfg.budget.exclusion_threshold_db}};
  j["loss"] = {{"kind", to_string(cfg.loss.kind)},
               {"sep", cfg.loss.sep},
               {"epsilon", cfg.loss.epsilon_scale},
               {"floor_db", cfg.loss.floor_db}};
  j["train"] = {{"lr", cfg.train.lr},
                {"epochs", cfg.train.epochs},
                {"batch", cfg.train.batch},
                {"lr_decay", cfg.train.lr_decay},
                {"patience", cfg.train.patience},
                {"stop_patience", cfg.train.stop_patience},
                {"momentum", cfg.train.momentum},
                {"seed", cfg.train.seed}};
  j["eval"] = {{"k_list", cfg.k_list}};
  return j.dump(2) + "\n";
}

Codebook codebook_from_json(std::string_view text, int nr) {
  const json j = parse_json(text, "codebook weights");
  check_keys(j, {"azimuth", "elevation"}, "codebook weights");
  auto vectors = [&](const char* key) {
    std::vector<CVector> out;
    const auto raw = require_key<std::vector<std::vector<std::array<double, 2>>>>(j, key, "codebook weights");
    for (const auto& vec : raw) {
      CVector v;
      for (const auto& [re, im] : vec) v.emplace_back(re, im);
      out.push_back(std::move(v));
    }
    return out;
  };
  return Codebook(vectors("azimuth"), vectors("elevation"), nr);
}

Codebook make_codebook(const RunConfig& cfg, const fs::path& base) {
  if (cfg.codebook_weights.empty()) return Codebook::dft(cfg.dims.na, cfg.dims.ne, cfg.dims.nr);
  fs::path path(cfg.codebook_weights);
  if (path.is_relative() && !base.empty()) path = base / path;
  Codebook cb = codebook_from_json(read_text(path), cfg.dims.nr);
  if (!(cb.dims() == cfg.dims)) {
    fail(ErrorKind::kInvalidArgument, "codebook weights in " + path.string() + " have " +
                                          std::to_string(cb.dims().na) + "x" + std::to_string(cb.dims().ne) +
                                          " beams, config says " + std::to_string(cfg.dims.na) + "x" +
                                          std::to_string(cfg.dims.ne));
  }
  return cb;
}

std::string encode_model(const SoftmaxModel& model) {
  json h;
  h["format"] = kModelFormat;
  h["schema"] = kFeatureSchemaVersion;
  h["Na"] = model.dims().na;
  h["Ne"] = model.dims().ne;
  h["Nr"] = model.dims().nr;
  h["loss_kind"] = to_string(model.loss().kind);
  h["sep"] = model.loss().sep;
  h["epsilon"] = model.loss().epsilon_scale;
  h["floor_db"] = model.loss().floor_db;
  h["seed"] = model.seed();
  h["features"] = model.features();
  h["outputs"] = model.outputs();
  GridFile g = GridFile::make_f32(model.features() + 1, 1, model.outputs());
  for (int f = 0; f < model.features(); ++f) {
    for (int o = 0; o < model.outputs(); ++o) {
      g.f32[g.index(f, 0, o)] =
          static_cast<float>(model.weights()[static_cast<std::size_t>(f) * static_cast<std::size_t>(model.outputs()) +
                                             static_cast<std::size_t>(o)]);
    }
  }
  for (int o = 0; o < model.outputs(); ++o) {
    g.f32[g.index(model.features(), 0, o)] = static_cast<float>(model.bias()[static_cast<std::size_t>(o)]);
  }
  return h.dump() + "\n" + encode_grid(g);
}

SoftmaxModel decode_model(std::string_view bytes, const std::string& source) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos) parse_fail(source, 0, "missing model header line");
  const json h = parse_json(bytes.substr(0, nl), source);
  const std::string where = source + " model header";
  check_keys(h, {"format", "schema", "Na", "Ne", "Nr", "loss_kind", "sep", "epsilon", "floor_db", "seed", "features",
                 "outputs"},
             where);
  if (require_key<std::string>(h, "format", where) != kModelFormat) parse_fail(source, 0, "not a model file");
  const int schema = require_key<int>(h, "schema", where);
  if (schema != kFeatureSchemaVersion) {
    fail(ErrorKind::kParse, source + ": feature schema version " + std::to_string(schema) + ", expected " +
                                std::to_string(kFeatureSchemaVersion));
  }
  BeamDims dims{require_key<int>(h, "Na", where), require_key<int>(h, "Ne", where), require_key<int>(h, "Nr", where)};
  LossConfig loss;
  try {
    loss.kind = parse_loss_kind(require_key<std::string>(h, "loss_kind", where));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kParse) throw;
    fail(ErrorKind::kParse, where + ": unknown loss kind");
  }
  loss.sep = require_key<bool>(h, "sep", where);
  loss.epsilon_scale = require_key<double>(h, "epsilon", where);
  loss.floor_db = require_key<double>(h, "floor_db", where);
  const int features = require_key<int>(h, "features", where);
  const int outputs = require_key<int>(h, "outputs", where);
  SoftmaxModel model(loss, dims, features, require_key<std::uint64_t>(h, "seed", where));
  if (model.outputs() != outputs) {
    fail(ErrorKind::kParse, where + ": " + std::to_string(outputs) + " outputs do not match the loss form");
  }
  const GridFile g = decode_grid(bytes.substr(nl + 1), source);
  if (g.dtype != DType::kF32 || g.rows != features + 1 || g.cols != 1 || g.channels != outputs) {
    parse_fail(source, nl + 1, "weight grid shape does not match the header");
  }
  for (int f = 0; f < features; ++f) {
    for (int o = 0; o < outputs; ++o) {
      model.weights()[static_cast<std::size_t>(f) * static_cast<std::size_t>(outputs) + static_cast<std::size_t>(o)] =
          g.f(f, 0, o);
    }
  }
  for (int o = 0; o < outputs; ++o) model.bias()[static_cast<std::size_t>(o)] = g.f(features, 0, o);
  return model;
}

void write_model(const fs::path& path, const SoftmaxModel& model) { write_text(path, encode_model(model)); }

SoftmaxModel read_model(const fs::path& path) { return decode_model(read_text(path), path.string()); }

SoftmaxModel round_to_f32(const SoftmaxModel& model) {
  SoftmaxModel out = model;
  for (double& w : out.weights()) w = static_cast<float>(w);
  for (double& b : out.bias()) b = static_cast<float>(b);
  return out;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["k"] = report.k;
  j["accuracy"] = report.accuracy;
  j["tpr"] = report.tpr;
  j["samples"] = report.samples;
  j["excluded"] = report.excluded;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  const json j = parse_json(text, "report");
  check_keys(j, {"k", "accuracy", "tpr", "samples", "excluded"}, "report");
  EvalReport r;
  r.k = require_key<std::vector<int>>(j, "k", "report");
  r.accuracy = require_key<std::vector<double>>(j, "accuracy", "report");
  r.tpr = require_key<std::vector<double>>(j, "tpr", "report");
  r.samples = require_key<std::size_t>(j, "samples", "report");
  r.excluded = require_key<std::size_t>(j, "excluded", "report");
  if (r.accuracy.size() != r.k.size() || r.tpr.size() != r.k.size()) {
    fail(ErrorKind::kParse, "report arrays differ in length");
  }
  return r;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "metric";
  for (int k : report.k) out << std::right << std::setw(10) << ("k=" + std::to_string(k));
  out << '\n';
  auto row = [&](const char* name, const std::vector<double>& v) {
    out << std::left << std::setw(10) << name << std::right << std::fixed << std::setprecision(6);
    for (double x : v) out << std::setw(10) << x;
    out << '\n';
  };
  row("accuracy", report.accuracy);
  row("tpr", report.tpr);
  out << "samples " << report.samples << "  excluded " << report.excluded << '\n';
  return out.str();
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  for (const EpochRecord& e : history) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "," +
           format_double(e.lr) + "\n";
  }
  return out;
}

std::string encode_pgm(const Grid<std::uint8_t>& image) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.data().data()), image.size());
  return out;
}

void write_pgm(const fs::path& path, const Grid<std::uint8_t>& image) { write_text(path, encode_pgm(image)); }

Grid<std::uint8_t> hit_image(const Grid<HitState>& hits) {
  Grid<std::uint8_t> out(hits.rows(), hits.cols(), 0);
  for (int r = 0; r < hits.rows(); ++r) {
    for (int c = 0; c < hits.cols(); ++c) {
      switch (hits(r, c)) {
        case HitState::kHit: out(r, c) = 255; break;
        case HitState::kMiss: out(r, c) = 0; break;
        case HitState::kNotScored: out(r, c) = 128; break;
      }
    }
  }
  return out;
}

Grid<std::uint8_t> los_image(const Grid<LosClass>& classes) {
  Grid<std::uint8_t> out(classes.rows(), classes.cols(), 0);
  for (int r = 0; r < classes.rows(); ++r) {
    for (int c = 0; c < classes.cols(); ++c) {
      switch (classes(r, c)) {
        case LosClass::kLosDominant: out(r, c) = 255; break;
        case LosClass::kLosAttenuated: out(r, c) = 160; break;
        case LosClass::kNlos: out(r, c) = 0; break;
      }
    }
  }
  return out;
}

}  // namespace beamgrid
