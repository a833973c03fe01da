#pragma once

// Training checkpoints.
//
// A checkpoint is a CBOR document (nlohmann::json::to_cbor) with keys:
//   format      "trajocc-checkpoint"
//   version     1
//   config      full run config (same schema as the JSON config file)
//   shapes      [{name, rows, cols, offset}, ...] parameter table
//   params      binary, little-endian float32, num_params entries
//   adam        {t, m: binary, v: binary} (m, v empty before the first step)
//   rng         textual std::mt19937_64 state
//   timestep    total environment steps so far
//   stage       index of the curriculum stage in progress
//   stage_step  steps already taken in that stage

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trajocc/config.hpp"
#include "trajocc/nn.hpp"
#include "trajocc/ppo.hpp"

namespace trajocc {

struct Checkpoint {
  RunConfig config;
  Eigen::VectorXf params;
  Adam<float> adam;
  std::string rng_state;
  std::int64_t timestep = 0;
  int stage = 0;
  std::int64_t stage_step = 0;
};

namespace detail {

inline Json::binary_t pack_floats(const Eigen::VectorXf& v) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(v.size()) * sizeof(float));
  if (!bytes.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
  return Json::binary_t(std::move(bytes));
}

inline Eigen::VectorXf unpack_floats(const Json& j, const std::string& what) {
  if (!j.is_binary()) throw IoError("checkpoint field " + what + " is not binary");
  const auto& bytes = j.get_binary();
  if (bytes.size() % sizeof(float) != 0) throw IoError("checkpoint field " + what + " has a ragged length");
  Eigen::VectorXf v(static_cast<Eigen::Index>(bytes.size() / sizeof(float)));
  if (!bytes.empty()) std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

}  // namespace detail

inline std::string rng_state_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw IoError("corrupt RNG state in checkpoint");
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck,
                            const std::vector<ParamBlock>& shapes) {
  Json table = Json::array();
  for (const auto& b : shapes) {
    table.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
  }
  Json j{
      {"format", "trajocc-checkpoint"},
      {"version", 1},
      {"config", to_json(ck.config)},
      {"shapes", table},
      {"params", detail::pack_floats(ck.params)},
      {"adam", {{"t", ck.adam.t}, {"m", detail::pack_floats(ck.adam.m)}, {"v", detail::pack_floats(ck.adam.v)}}},
      {"rng", ck.rng_state},
      {"timestep", ck.timestep},
      {"stage", ck.stage},
      {"stage_step", ck.stage_step},
  };
  const auto bytes = Json::to_cbor(j);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename " + tmp + " to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Json j;
  try {
    j = Json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": not a checkpoint (" + e.what() + ")");
  }
  if (!j.is_object() || j.value("format", "") != "trajocc-checkpoint") throw IoError(path + ": not a checkpoint");
  if (j.value("version", 0) != 1) throw IoError(path + ": unsupported checkpoint version");
  Checkpoint ck;
  try {
    ck.config = parse_run_config(j.at("config"));
    ck.params = detail::unpack_floats(j.at("params"), "params");
    const auto& a = j.at("adam");
    ck.adam.t = a.at("t").get<std::int64_t>();
    ck.adam.m = detail::unpack_floats(a.at("m"), "adam.m");
    ck.adam.v = detail::unpack_floats(a.at("v"), "adam.v");
    ck.rng_state = j.at("rng").get<std::string>();
    ck.timestep = j.at("timestep").get<std::int64_t>();
    ck.stage = j.at("stage").get<int>();
    ck.stage_step = j.at("stage_step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed checkpoint (" + e.what() + ")");
  }

  // The shape table must agree with the network the config describes.
  PolicyValueNet<float> probe(ck.config.network);
  const auto& want = probe.shapes();
  const auto& got = j.at("shapes");
  bool same = got.is_array() && got.size() == want.size() &&
              ck.params.size() == probe.num_params();
  for (std::size_t i = 0; same && i < want.size(); ++i) {
    same = got[i].value("name", "") == want[i].name && got[i].value("rows", -1) == want[i].rows &&
           got[i].value("cols", -1) == want[i].cols && got[i].value("offset", -1) == want[i].offset;
  }
  if (!same) throw ShapeError(path + ": parameter table does not match the configured network");
  if (ck.adam.m.size() != ck.adam.v.size() || (ck.adam.m.size() != 0 && ck.adam.m.size() != ck.params.size())) {
    throw ShapeError(path + ": optimizer state size mismatch");
  }
  return ck;
}

}  // namespace trajocc
