// Plain-text configuration: `key = value` entries grouped under [section]
// headers, `#` comments. One file drives the whole pipeline.
#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

namespace riglab {

class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& name = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  // Typed getters; the non-defaulted forms throw if the key is missing,
  // all of them throw (naming file, section and key) on a malformed value.
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long get_int(const std::string& section, const std::string& key) const;
  long get_int(const std::string& section, const std::string& key,
               long fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  // Space-separated numeric triple.
  Eigen::Vector3d get_vec3(const std::string& section, const std::string& key,
                           const Eigen::Vector3d& fallback) const;
  Eigen::Vector3d get_vec3(const std::string& section, const std::string& key) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);

  const std::string& name() const { return name_; }

 private:
  std::string raw(const std::string& section, const std::string& key) const;

  std::string name_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace riglab
