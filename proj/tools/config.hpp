#ifndef QIMEX_TOOLS_CONFIG_HPP
#define QIMEX_TOOLS_CONFIG_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "qimex/qimex.hpp"

namespace qimex::cli {

using json = nlohmann::json;

/// Strict view of a JSON object: every key must be read before finish().
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where))
  {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  bool has(const std::string& k)
  {
    seen_.insert(k);
    return j_.contains(k);
  }

  template <class T>
  T get(const std::string& k, T def)
  {
    return has(k) ? as<T>(k) : def;
  }

  template <class T>
  T need(const std::string& k)
  {
    if (!has(k)) throw ValidationError(where_ + ": missing key '" + k + "'");
    return as<T>(k);
  }

  const json& raw(const std::string& k)
  {
    if (!has(k)) throw ValidationError(where_ + ": missing key '" + k + "'");
    return j_.at(k);
  }

  void finish() const
  {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ValidationError(where_ + ": unknown key '" + item.key() + "'");
  }

  const std::string& where() const { return where_; }

 private:
  template <class T>
  T as(const std::string& k) const
  {
    const json& v = j_.at(k);
    const std::string bad = where_ + ": key '" + k + "' has the wrong type";
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(bad);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError(bad);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(bad);
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(bad);
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ValidationError(bad);
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline double finite_number(const json& j, const std::string& where)
{
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(where + ": not finite");
  return v;
}

// A time profile: a number, or {"form": "constant"|"affine"|"inverse", ...}.
inline TimeFn parse_time_fn(const json& j, const std::string& where)
{
  if (j.is_number()) {
    double c = finite_number(j, where);
    return [c](double) { return c; };
  }
  Fields f(j, where);
  auto form = f.need<std::string>("form");
  TimeFn out;
  if (form == "constant") {
    double c = f.need<double>("value");
    out = [c](double) { return c; };
  } else if (form == "affine") {
    double c0 = f.need<double>("c0"), c1 = f.need<double>("c1");
    out = [c0, c1](double t) { return c0 + c1 * t; };
  } else if (form == "inverse") {
    double scale = f.need<double>("scale"), shift = f.need<double>("shift");
    if (!(shift > 0.0)) throw ValidationError(where + ": inverse profile needs shift > 0");
    out = [scale, shift](double t) { return scale / (t + shift); };
  } else {
    throw ValidationError(where + ": unknown form '" + form + "'");
  }
  f.finish();
  return out;
}

// A spatial profile on (0,1): number, or {"form": "constant"|"sine"|"cosine", "amplitude", "mode"}.
struct SpatialFn {
  std::string form = "constant";
  double amplitude = 0.0;
  int mode = 1;

  double operator()(double x) const
  {
    const double k = mode * std::numbers::pi;
    if (form == "sine") return amplitude * std::sin(k * x);
    if (form == "cosine") return amplitude * std::cos(k * x);
    return amplitude;
  }

  double dx(double x) const
  {
    const double k = mode * std::numbers::pi;
    if (form == "sine") return amplitude * k * std::cos(k * x);
    if (form == "cosine") return -amplitude * k * std::sin(k * x);
    return 0.0;
  }

  // product over axes, each axis with the same profile
  double product(const std::vector<double>& x) const
  {
    if (form == "constant") return amplitude;
    double v = amplitude;
    SpatialFn unit = *this;
    unit.amplitude = 1.0;
    for (double xi : x) v *= unit(xi);
    return v;
  }
};

inline SpatialFn parse_spatial_fn(const json& j, const std::string& where)
{
  SpatialFn s;
  if (j.is_number()) {
    s.amplitude = finite_number(j, where);
    return s;
  }
  Fields f(j, where);
  s.form = f.need<std::string>("form");
  if (s.form != "constant" && s.form != "sine" && s.form != "cosine")
    throw ValidationError(where + ": unknown form '" + s.form + "'");
  s.amplitude = f.get<double>("amplitude", 1.0);
  s.mode = f.get<int>("mode", 1);
  if (s.mode < 1) throw ValidationError(where + ": mode must be >= 1");
  f.finish();
  return s;
}

// -------------------------------------------------------------- tables

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> r)
  {
    if (r.size() != header.size()) throw std::logic_error("table row width mismatch");
    rows.push_back(std::move(r));
  }
};

inline std::string format_double(double v)
{
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_cell(const Cell& c)
{
  if (auto d = std::get_if<double>(&c)) return format_double(*d);
  if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

inline std::string to_csv(const Table& t)
{
  std::string out;
  for (size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += "\n";
  for (const auto& r : t.rows) {
    for (size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_cell(r[i]);
    out += "\n";
  }
  return out;
}

/// Write via a temporary file and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& text)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// NaN and infinities become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json num_list(const std::vector<double>& v)
{
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

} // namespace qimex::cli

#endif // QIMEX_TOOLS_CONFIG_HPP
