#include "kdd/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace kdd {

namespace {

constexpr const char* kMagic = "KD-DEBIAS-CKPT 1";

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
  out << '[' << name << "]\n";
  char buf[40];
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      if (c > 0) out << ' ';
      std::snprintf(buf, sizeof(buf), "%.17g", m.at(r, c));
      out << buf;
    }
    out << '\n';
  }
}

void write_vector(std::ostream& out, const char* name, const std::vector<double>& v) {
  out << '[' << name << "]\n";
  char buf[40];
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out << ' ';
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    out << buf;
  }
  out << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  return out;
}

// Sequential line reader that tracks position for error messages.
struct LineReader {
  std::istream& in;
  const std::string& path;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg, int at) const {
    throw std::runtime_error(path + ":" + std::to_string(at) + ": " + msg);
  }
  [[noreturn]] void fail(const std::string& msg) const { fail(msg, line_no); }

  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string require(const char* what) {
    std::string line;
    if (!next(line)) fail(std::string("truncated file, expected ") + what, line_no + 1);
    return line;
  }
};

double parse_double(LineReader& rd, std::string_view tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    rd.fail("expected numeric value, got '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

void read_section(LineReader& rd, const std::string& name, int rows, int cols,
                  std::vector<double>& dst) {
  const std::string header = rd.require(("section [" + name + "]").c_str());
  if (header != "[" + name + "]") {
    rd.fail("expected section [" + name + "], got '" + header + "'");
  }
  dst.clear();
  dst.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const std::string line = rd.require(("row of [" + name + "]").c_str());
    const auto toks = split_ws(line);
    if (static_cast<int>(toks.size()) != cols) {
      rd.fail("section [" + name + "] row has " + std::to_string(toks.size()) +
              " values, expected " + std::to_string(cols));
    }
    for (auto tok : toks) dst.push_back(parse_double(rd, tok));
  }
}

Matrix read_matrix(LineReader& rd, const std::string& name, int rows, int cols) {
  Matrix m(rows, cols);
  read_section(rd, name, rows, cols, m.data);
  return m;
}

long long header_int(LineReader& rd, const std::map<std::string, std::string>& hdr,
                     const std::string& key) {
  auto it = hdr.find(key);
  if (it == hdr.end()) rd.fail("missing header field '" + key + "'");
  const std::string& s = it->second;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v <= 0) {
    rd.fail("header field '" + key + "' must be a positive integer, got '" + s + "'");
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TeacherModel& model) {
  std::ofstream out = open_out(path);
  out << kMagic << '\n';
  out << "kind=teacher\n";
  out << "num_users=" << model.num_users() << '\n';
  out << "num_items=" << model.num_items() << '\n';
  out << "dim=" << model.dim << '\n';
  out << "num_envs=" << model.num_envs() << '\n';
  out << '\n';
  write_matrix(out, "user_inv", model.user_inv);
  write_matrix(out, "item_inv", model.item_inv);
  write_matrix(out, "user_var", model.user_var);
  write_matrix(out, "item_var", model.item_var);
  write_matrix(out, "env_emb", model.env_emb);
  write_matrix(out, "clf_weight", model.clf_weight);
  write_vector(out, "clf_bias", model.clf_bias);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

void save_checkpoint(const std::string& path, const StudentModel& model) {
  std::ofstream out = open_out(path);
  out << kMagic << '\n';
  out << "kind=student\n";
  out << "num_users=" << model.user_emb.rows << '\n';
  out << "num_items=" << model.item_emb.rows << '\n';
  out << "dim=" << model.dim << '\n';
  out << '\n';
  write_matrix(out, "user_emb", model.user_emb);
  write_matrix(out, "item_emb", model.item_emb);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

AnyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  LineReader rd{in, path};

  const std::string magic = rd.require("magic line");
  if (magic != kMagic) {
    rd.fail("bad magic '" + magic + "', expected '" + std::string(kMagic) + "'");
  }

  std::map<std::string, std::string> hdr;
  std::string line;
  while (true) {
    line = rd.require("header or blank separator");
    if (line.empty()) break;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) rd.fail("expected key=value header, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    if (key != "kind" && key != "num_users" && key != "num_items" && key != "dim" &&
        key != "num_envs") {
      rd.fail("unknown header field '" + key + "'");
    }
    if (!hdr.emplace(key, line.substr(eq + 1)).second) {
      rd.fail("duplicate header field '" + key + "'");
    }
  }

  auto kind_it = hdr.find("kind");
  if (kind_it == hdr.end()) rd.fail("missing header field 'kind'");
  const std::string& kind = kind_it->second;
  if (kind != "teacher" && kind != "student") {
    rd.fail("unknown kind '" + kind + "', accepted kinds are teacher and student");
  }

  const int num_users = static_cast<int>(header_int(rd, hdr, "num_users"));
  const int num_items = static_cast<int>(header_int(rd, hdr, "num_items"));
  const int dim = static_cast<int>(header_int(rd, hdr, "dim"));

  AnyModel result;
  if (kind == "teacher") {
    const int num_envs = static_cast<int>(header_int(rd, hdr, "num_envs"));
    TeacherModel m;
    m.dim = dim;
    m.user_inv = read_matrix(rd, "user_inv", num_users, dim);
    m.item_inv = read_matrix(rd, "item_inv", num_items, dim);
    m.user_var = read_matrix(rd, "user_var", num_users, dim);
    m.item_var = read_matrix(rd, "item_var", num_items, dim);
    m.env_emb = read_matrix(rd, "env_emb", num_envs, dim);
    m.clf_weight = read_matrix(rd, "clf_weight", dim, num_envs);
    read_section(rd, "clf_bias", 1, num_envs, m.clf_bias);
    result = std::move(m);
  } else {
    if (hdr.count("num_envs")) rd.fail("header field 'num_envs' is not valid for kind=student");
    StudentModel m;
    m.dim = dim;
    m.user_emb = read_matrix(rd, "user_emb", num_users, dim);
    m.item_emb = read_matrix(rd, "item_emb", num_items, dim);
    result = std::move(m);
  }

  while (rd.next(line)) {
    if (!line.empty()) rd.fail("unexpected trailing content '" + line + "'");
  }
  return result;
}

}  // namespace kdd
