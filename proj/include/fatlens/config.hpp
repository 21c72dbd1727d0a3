#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fatlens {

enum class ValueType { string, integer, real, boolean, real_list };

struct ConfigKey {
  std::string name;
  ValueType type;
  std::string default_value;
  std::string help;
};

// Flat key=value configuration with a closed key set. Every key has a
// default; unknown keys and ill-typed values raise Error(config).
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();
  static bool known(const std::string& key);

  void set(const std::string& key, const std::string& value);
  // Lines "key = value"; '#' starts a comment; blank lines ignored.
  void load_file(const std::filesystem::path& path);
  void load_string(const std::string& text, const std::string& origin = "<string>");
  // FATLENS_<KEY> with '.' as '_' and upper case, e.g. FATLENS_LM_ORDER.
  void apply_environment();
  static std::string env_name(const std::string& key);

  const std::string& get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;
  std::filesystem::path get_path(const std::string& key) const;  // "" when unset

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fatlens
