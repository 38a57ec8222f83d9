#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ambiq/corpus/types.hpp"
#include "ambiq/corpus/vqa_io.hpp"
#include "ambiq/error.hpp"

namespace ambiq::eval {

inline constexpr int kRepresentationFormat = 1;

/// (question_id, answer_index)
using AnswerKey = std::pair<std::string, std::size_t>;

inline std::string key_string(const AnswerKey& k) {
  return k.first + "#" + std::to_string(k.second);
}

/// Per-answer dense vectors produced outside the workbench.
///
/// On disk: a JSON manifest
///   {"format_version": 1, "source": ..., "dim": D, "count": N,
///    "encoding": "text" | "binary", "data": "<path relative to manifest>",
///    "keys": [[qid, idx], ...]}            (binary only)
/// Text data has one "qid<TAB>idx<TAB>v1 ... vD" line per vector. Binary
/// data is N * D little-endian float32 values in `keys` order.
class RepresentationFile {
 public:
  RepresentationFile(std::string source, std::size_t dim)
      : source_(std::move(source)), dim_(dim) {
    if (dim_ == 0) throw ArgumentError("representations: dim must be positive");
  }

  const std::string& source() const noexcept { return source_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  void insert(AnswerKey key, std::vector<double> v) {
    if (v.size() != dim_)
      throw ValidationError("representation-dim",
                            key_string(key) + " has " + std::to_string(v.size()) +
                                " components, expected " + std::to_string(dim_));
    if (!vectors_.emplace(key, std::move(v)).second)
      throw ValidationError("representation-key-unique", key_string(key));
  }

  const std::vector<double>& at(const std::string& qid, std::size_t idx) const {
    auto it = vectors_.find({qid, idx});
    if (it == vectors_.end())
      throw LookupError("no representation for " + key_string({qid, idx}));
    return it->second;
  }

  const std::map<AnswerKey, std::vector<double>>& vectors() const noexcept {
    return vectors_;
  }

  /// Every key must name an existing answer.
  void check_against(const std::vector<corpus::VqaExample>& examples) const {
    std::map<std::string, std::size_t> sizes;
    for (const auto& ex : examples) sizes[ex.question_id] = ex.answers.size();
    std::vector<std::string> bad;
    for (const auto& [key, v] : vectors_) {
      auto it = sizes.find(key.first);
      if (it == sizes.end() || key.second >= it->second) bad.push_back(key_string(key));
    }
    if (!bad.empty()) throw IntegrityError("representation keys without an answer", bad);
  }

 private:
  std::string source_;
  std::size_t dim_;
  std::map<AnswerKey, std::vector<double>> vectors_;
};

namespace detail {

inline std::size_t parse_index(const std::string& s, const std::string& name,
                               std::size_t lineno) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ParseError(name, lineno, "bad answer index '" + s + "'");
  return v;
}

inline void read_text_vectors(RepresentationFile& rep, std::istream& in,
                              const std::string& name) {
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw ParseError(name, lineno, "expected qid<TAB>index<TAB>vector");
    AnswerKey key{line.substr(0, t1), parse_index(line.substr(t1 + 1, t2 - t1 - 1), name, lineno)};
    std::vector<double> v;
    const char* p = line.data() + t2 + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double x = 0;
      auto [next, ec] = std::from_chars(p, end, x);
      if (ec != std::errc() || (next < end && *next != ' '))
        throw ParseError(name, lineno, "bad vector component");
      v.push_back(x);
      p = next;
    }
    if (v.size() != rep.dim())
      throw ParseError(name, lineno,
                       "vector has " + std::to_string(v.size()) + " components, expected " +
                           std::to_string(rep.dim()));
    try {
      rep.insert(std::move(key), std::move(v));
    } catch (const ValidationError& e) {
      throw ValidationError(e.invariant(), e.detail(), lineno);
    }
  }
}

inline float load_le_float(const unsigned char* p) {
  std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                       std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
  return std::bit_cast<float>(bits);
}

inline void store_le_float(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((bits >> s) & 0xff));
}

}  // namespace detail

inline RepresentationFile load_representations(const std::string& manifest_path) {
  const auto manifest = corpus::detail::parse_json_file(manifest_path);
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!manifest.is_object() || !manifest.contains(key))
      throw ValidationError("manifest-field", std::string("missing '") + key + "' in " +
                                                  manifest_path);
    return manifest.at(key);
  };
  try {
    const int version = field("format_version").get<int>();
    if (version != kRepresentationFormat)
      throw ValidationError("manifest-version",
                            "unsupported format_version " + std::to_string(version));
    RepresentationFile rep(field("source").get<std::string>(),
                           field("dim").get<std::size_t>());
    const auto count = field("count").get<std::size_t>();
    const auto encoding = field("encoding").get<std::string>();
    const auto data_path =
        (std::filesystem::path(manifest_path).parent_path() / field("data").get<std::string>())
            .string();

    if (encoding == "text") {
      std::ifstream in(data_path);
      if (!in) throw IoError("cannot open " + data_path);
      detail::read_text_vectors(rep, in, data_path);
    } else if (encoding == "binary") {
      const auto& keys = field("keys");
      if (!keys.is_array() || keys.size() != count)
        throw ValidationError("manifest-count", "keys must list exactly count entries");
      const std::string bytes = corpus::detail::read_file(data_path);
      if (bytes.size() != count * rep.dim() * 4)
        throw ParseError(data_path, bytes.size(),
                         "expected " + std::to_string(count * rep.dim() * 4) + " bytes");
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
      for (const auto& k : keys) {
        std::vector<double> v(rep.dim());
        for (auto& x : v) {
          x = detail::load_le_float(p);
          p += 4;
        }
        rep.insert({corpus::detail::id_string(k.at(0)), k.at(1).get<std::size_t>()},
                   std::move(v));
      }
    } else {
      throw ValidationError("manifest-encoding", "unknown encoding '" + encoding + "'");
    }
    if (rep.size() != count)
      throw ValidationError("manifest-count", "manifest count " + std::to_string(count) +
                                                  " but data has " + std::to_string(rep.size()));
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest-field", std::string(e.what()) + " in " + manifest_path);
  }
}

/// Write `rep` as manifest + data file next to it. Returns the data path.
inline std::string save_representations(const RepresentationFile& rep,
                                        const std::string& manifest_path,
                                        bool binary = false) {
  namespace fs = std::filesystem;
  const fs::path mpath(manifest_path);
  const std::string data_name = mpath.stem().string() + (binary ? ".f32" : ".tsv");
  const fs::path dpath = mpath.parent_path() / data_name;

  nlohmann::ordered_json m;
  m["format_version"] = kRepresentationFormat;
  m["source"] = rep.source();
  m["dim"] = rep.dim();
  m["count"] = rep.size();
  m["encoding"] = binary ? "binary" : "text";
  m["data"] = data_name;

  std::string data;
  if (binary) {
    auto keys = nlohmann::ordered_json::array();
    for (const auto& [k, v] : rep.vectors()) {
      keys.push_back({k.first, k.second});
      for (double x : v) detail::store_le_float(data, static_cast<float>(x));
    }
    m["keys"] = std::move(keys);
  } else {
    std::ostringstream out;
    out.precision(17);
    for (const auto& [k, v] : rep.vectors()) {
      out << k.first << '\t' << k.second << '\t';
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
      out << '\n';
    }
    data = out.str();
  }

  std::ofstream d(dpath, std::ios::binary);
  std::ofstream mf(mpath);
  if (!d || !mf) throw IoError("cannot write " + manifest_path);
  d << data;
  mf << m.dump(2) << '\n';
  return dpath.string();
}

}  // namespace ambiq::eval
