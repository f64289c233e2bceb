#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "softctl/errors.hpp"
#include "softctl/irl.hpp"
#include "softctl/mdp.hpp"

namespace softctl {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting

/// Decimal with 17 significant digits, so values round-trip exactly.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {
inline void dump_json(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        dump_json(it.value(), out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_json(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      out += std::isfinite(x) ? format_double(x) : "null";
      break;
    }
    default:
      out += j.dump();
  }
}
}  // namespace detail

/// Compact serialization with sorted keys and %.17g floats.
inline std::string to_canonical_string(const json& j) {
  std::string out;
  detail::dump_json(j, out);
  return out;
}

/// 64-bit FNV-1a, used to stamp artifacts with the config that produced them.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

// ---------------------------------------------------------------------------
// Table <-> JSON

inline json to_json(std::span<const double> v) {
  json arr = json::array();
  for (double x : v) arr.push_back(x);
  return arr;
}
inline json to_json(const Table2<double>& t) {
  json arr = json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) arr.push_back(to_json(t.row(i)));
  return arr;
}
inline json to_json(const Table3<double>& t) {
  json arr = json::array();
  for (std::size_t i = 0; i < t.dim0(); ++i) {
    json slab = json::array();
    for (std::size_t j = 0; j < t.dim1(); ++j) slab.push_back(to_json(t.row(i, j)));
    arr.push_back(std::move(slab));
  }
  return arr;
}

namespace detail {
inline double number_at(const json& j, const std::string& where) {
  if (!j.is_number()) throw InvalidMdpError(where + " is not a number");
  return j.get<double>();
}
inline const json& array_of(const json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n)
    throw InvalidMdpError(where + " must be an array of length " + std::to_string(n));
  return j;
}
inline std::size_t positive_int(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_integer() || doc[key].get<long long>() <= 0)
    throw InvalidMdpError(std::string("'") + key + "' must be a positive integer");
  return doc[key].get<std::size_t>();
}
}  // namespace detail

inline json mdp_to_json(const TabularMDP& m) {
  return json{{"num_states", m.num_states},     {"num_actions", m.num_actions}, {"horizon", m.horizon},
              {"initial_dist", m.initial_dist}, {"transition", to_json(m.transition)}, {"reward", to_json(m.reward)}};
}

/// Parses and validates an MDP description. Throws InvalidMdpError.
inline TabularMDP mdp_from_json(const json& doc) {
  if (!doc.is_object()) throw InvalidMdpError("MDP document must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const char* kKeys[] = {"num_states", "num_actions", "horizon", "initial_dist", "transition", "reward"};
    if (std::find(std::begin(kKeys), std::end(kKeys), it.key()) == std::end(kKeys))
      throw InvalidMdpError("unknown MDP key '" + it.key() + "'");
  }
  const std::size_t S = detail::positive_int(doc, "num_states");
  const std::size_t A = detail::positive_int(doc, "num_actions");
  const std::size_t T = detail::positive_int(doc, "horizon");
  for (const char* key : {"initial_dist", "transition", "reward"})
    if (!doc.contains(key)) throw InvalidMdpError(std::string("missing '") + key + "'");
  TabularMDP m = TabularMDP::zeros(S, A, T);
  const auto& init = detail::array_of(doc["initial_dist"], S, "initial_dist");
  for (std::size_t s = 0; s < S; ++s) m.initial_dist[s] = detail::number_at(init[s], "initial_dist entry");
  const auto& tr = detail::array_of(doc["transition"], S, "transition");
  const auto& rw = detail::array_of(doc["reward"], S, "reward");
  for (std::size_t s = 0; s < S; ++s) {
    const auto& tr_s = detail::array_of(tr[s], A, "transition[" + std::to_string(s) + "]");
    const auto& rw_s = detail::array_of(rw[s], A, "reward[" + std::to_string(s) + "]");
    for (std::size_t a = 0; a < A; ++a) {
      m.reward(s, a) = detail::number_at(rw_s[a], "reward entry");
      const auto& row = detail::array_of(tr_s[a], S, "transition row");
      for (std::size_t s2 = 0; s2 < S; ++s2) m.transition(s, a, s2) = detail::number_at(row[s2], "transition entry");
    }
  }
  require_valid(m);
  return m;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline TabularMDP load_mdp(const std::filesystem::path& path) { return mdp_from_json(read_json_file(path)); }

/// Feature file: nested array [S][A][d].
inline FeatureMap features_from_json(const json& doc, const TabularMDP& m) {
  if (!doc.is_array() || doc.size() != m.num_states) throw std::invalid_argument("features must be an [S][A][d] array");
  std::size_t d = 0;
  for (const auto& row : doc) {
    if (!row.is_array() || row.size() != m.num_actions) throw std::invalid_argument("features must be an [S][A][d] array");
    for (const auto& vec : row) {
      if (!vec.is_array() || vec.empty()) throw std::invalid_argument("feature vectors must be non-empty arrays");
      if (d == 0) d = vec.size();
      if (vec.size() != d) throw std::invalid_argument("feature vectors have inconsistent dimension");
    }
  }
  FeatureMap f{Table3<double>(m.num_states, m.num_actions, d)};
  for (std::size_t s = 0; s < m.num_states; ++s)
    for (std::size_t a = 0; a < m.num_actions; ++a)
      for (std::size_t k = 0; k < d; ++k) {
        const auto& x = doc[s][a][k];
        if (!x.is_number() || !std::isfinite(x.get<double>())) throw std::invalid_argument("feature entries must be finite");
        f.features(s, a, k) = x.get<double>();
      }
  return f;
}

/// Demo file: list of {"states": [...], "actions": [...]}.
inline DemoSet demos_from_json(const json& doc) {
  if (!doc.is_array()) throw std::invalid_argument("demo file must be a JSON list");
  std::vector<Trajectory> trajs;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("states") || !item.contains("actions"))
      throw std::invalid_argument("each demo needs 'states' and 'actions'");
    Trajectory tau;
    for (const auto& s : item["states"]) tau.states.push_back(s.get<std::size_t>());
    for (const auto& a : item["actions"]) tau.actions.push_back(a.get<std::size_t>());
    trajs.push_back(std::move(tau));
  }
  return DemoSet::from_trajectories(std::move(trajs));
}

inline json demos_to_json(const std::vector<Trajectory>& trajs) {
  json arr = json::array();
  for (const auto& tau : trajs) arr.push_back(json{{"states", tau.states}, {"actions", tau.actions}});
  return arr;
}

/// Writes to a sibling temporary file and renames it into place, so a failed
/// run never leaves a partial artifact at `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into '" + path.string() + "'");
  }
}

}  // namespace softctl
