#include "qhash/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace qhash::io {

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'E', 'M', 'B'};

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is, const std::string& name, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw IoError(name + ": truncated while reading " + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return value;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void finish(std::ostream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string at_line(const std::string& name, std::size_t line) {
  return name + ":" + std::to_string(line) + ": ";
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& text, double& out) {
  if (text.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == text.size() && std::isfinite(out);
}

}  // namespace

void write_embeddings(std::ostream& os, const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("matrix too large for the embedding file format");
  }
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(os, kEmbeddingVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw InvalidInput("embedding value is not finite in float32");
    put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
  }
}

Matrix read_embeddings(std::istream& is, const std::string& name) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size())) throw IoError(name + ": truncated before the magic bytes");
  if (magic != kMagic) throw IoError(name + ": not an embedding file (bad magic)");
  const auto version = get_le<std::uint16_t>(is, name, "the version");
  if (version != kEmbeddingVersion) {
    throw IoError(name + ": unsupported embedding file version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint32_t>(is, name, "the row count");
  const auto cols = get_le<std::uint32_t>(is, name, "the column count");
  Matrix m(rows, cols);
  for (double& v : m.values()) {
    const float f = std::bit_cast<float>(get_le<std::uint32_t>(is, name, "the payload"));
    if (!std::isfinite(f)) throw InvalidInput(name + ": payload contains a non-finite value");
    v = f;
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(name + ": trailing bytes after the payload");
  return m;
}

void write_embeddings(const std::string& path, const Matrix& m) {
  auto out = open_out(path, std::ios::binary);
  write_embeddings(out, m);
  finish(out, path);
}

Matrix read_embeddings(const std::string& path) {
  auto in = open_in(path, std::ios::binary);
  return read_embeddings(in, path);
}

void write_labels(std::ostream& os, const std::vector<int>& labels) {
  for (int y : labels) {
    if (y < 0) throw InvalidInput("labels must be non-negative");
    os << y << '\n';
  }
}

std::vector<int> read_labels(std::istream& is, const std::string& name) {
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    int y = 0;
    if (!parse_number(text, y) || y < 0) {
      throw InvalidInput(at_line(name, line_no) + "expected a non-negative integer label, got '" + text + "'");
    }
    labels.push_back(y);
  }
  return labels;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  write_labels(out, labels);
  finish(out, path);
}

std::vector<int> read_labels(const std::string& path) {
  auto in = open_in(path);
  return read_labels(in, path);
}

void write_codes(std::ostream& os, const std::vector<HashCode>& codes, std::size_t dim) {
  const std::size_t k = codes.empty() ? 0 : codes.front().k();
  os << "# d=" << dim << " k=" << k << '\n';
  for (const auto& h : codes) {
    if (h.dim() != dim || h.k() != k) throw InvalidInput("codes disagree on d or k");
    bool first = true;
    for (auto q : h.bits()) {
      os << (first ? "" : " ") << q;
      first = false;
    }
    os << '\n';
  }
}

std::vector<HashCode> read_codes(std::istream& is, const std::string& name) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::size_t k = 0;
  bool header = false;
  std::vector<HashCode> codes;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (!header) {
      std::istringstream hs(text);
      std::string hash, d_field, k_field;
      hs >> hash >> d_field >> k_field;
      if (hash != "#" || d_field.rfind("d=", 0) != 0 || k_field.rfind("k=", 0) != 0 ||
          !parse_number(d_field.substr(2), dim) || !parse_number(k_field.substr(2), k)) {
        throw InvalidInput(at_line(name, line_no) + "expected header '# d=<d> k=<k>'");
      }
      header = true;
      continue;
    }
    std::istringstream ls(text);
    std::vector<std::uint32_t> bits;
    std::string token;
    while (ls >> token) {
      std::uint32_t q = 0;
      if (!parse_number(token, q)) throw InvalidInput(at_line(name, line_no) + "bad bit index '" + token + "'");
      bits.push_back(q);
    }
    if (bits.size() != k) {
      throw InvalidInput(at_line(name, line_no) + "expected " + std::to_string(k) + " bits, got " +
                         std::to_string(bits.size()));
    }
    try {
      codes.emplace_back(dim, std::move(bits));
    } catch (const InvalidInput& e) {
      throw InvalidInput(at_line(name, line_no) + e.what());
    }
  }
  if (!header) throw InvalidInput(name + ": missing '# d=<d> k=<k>' header");
  return codes;
}

void write_codes(const std::string& path, const std::vector<HashCode>& codes, std::size_t dim) {
  auto out = open_out(path);
  write_codes(out, codes, dim);
  finish(out, path);
}

std::vector<HashCode> read_codes(const std::string& path) {
  auto in = open_in(path);
  return read_codes(in, path);
}

KeyValueConfig KeyValueConfig::parse(std::istream& is, const std::string& name) {
  KeyValueConfig cfg;
  cfg.name_ = name;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw InvalidInput(at_line(name, line_no) + "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw InvalidInput(at_line(name, line_no) + "empty key");
    if (cfg.entries_.count(key)) {
      throw InvalidInput(at_line(name, line_no) + "duplicate key '" + key + "' (first set on line " +
                         std::to_string(cfg.entries_[key].line) + ")");
    }
    cfg.entries_[key] = {value, line_no};
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  auto in = open_in(path);
  return parse(in, path);
}

const KeyValueConfig::Entry& KeyValueConfig::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw InvalidInput(name_ + ": missing required key '" + key + "'");
  return it->second;
}

void KeyValueConfig::bad_value(const std::string& key, const std::string& expected) const {
  const auto& e = entry(key);
  throw InvalidInput(at_line(name_, e.line) + "key '" + key + "' expects " + expected + ", got '" +
                     e.value + "'");
}

std::string KeyValueConfig::get_string(const std::string& key) const { return entry(key).value; }

double KeyValueConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_real(entry(key).value, v)) bad_value(key, "a finite real number");
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key) const {
  std::size_t v = 0;
  if (!parse_number(entry(key).value, v)) bad_value(key, "a non-negative integer");
  return v;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_number(entry(key).value, v)) bad_value(key, "an integer");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, "true or false");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(entry(key).value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_real(trim(item), v)) bad_value(key, "a comma-separated list of reals");
    out.push_back(v);
  }
  if (out.empty()) bad_value(key, "a comma-separated list of reals");
  return out;
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, e] : entries_) {
    if (!known.count(key)) throw InvalidInput(at_line(name_, e.line) + "unknown key '" + key + "'");
  }
}

}  // namespace qhash::io
