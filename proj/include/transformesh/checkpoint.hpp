// Checkpoint file: versioned header followed by (name, shape, raw float64)
// records. Parameters reload byte-exactly; optimizer moments ride along as
// "optim/..." records so training can resume.
#pragma once
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/optim.hpp"
#include "transformesh/tensor.hpp"

namespace tfm {

namespace detail {

inline void write_record(std::ostream& out, const std::string& name, const Shape& shape,
                         const std::vector<double>& data) {
  std::int32_t name_len = static_cast<std::int32_t>(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
  out.write(name.data(), name_len);
  std::int32_t ndim = static_cast<std::int32_t>(shape.size());
  out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
  for (int d : shape) {
    std::int32_t dd = d;
    out.write(reinterpret_cast<const char*>(&dd), sizeof(dd));
  }
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

struct Record {
  Shape shape;
  std::vector<double> data;
};

inline std::map<std::string, Record> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "TFMCKPT1")
    throw ParseError("checkpoint: bad magic in '" + path + "'");
  std::int32_t n_records;
  if (!in.read(reinterpret_cast<char*>(&n_records), sizeof(n_records)))
    throw ParseError("checkpoint: truncated header");
  std::map<std::string, Record> records;
  for (std::int32_t r = 0; r < n_records; ++r) {
    std::int32_t name_len;
    if (!in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len)))
      throw ParseError("checkpoint: truncated record");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ParseError("checkpoint: truncated name");
    std::int32_t ndim;
    if (!in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim)))
      throw ParseError("checkpoint: truncated shape");
    Record rec;
    size_t count = 1;
    for (std::int32_t d = 0; d < ndim; ++d) {
      std::int32_t dd;
      if (!in.read(reinterpret_cast<char*>(&dd), sizeof(dd)))
        throw ParseError("checkpoint: truncated shape");
      rec.shape.push_back(dd);
      count *= static_cast<size_t>(dd);
    }
    rec.data.resize(count);
    if (!in.read(reinterpret_cast<char*>(rec.data.data()),
                 static_cast<std::streamsize>(count * sizeof(double))))
      throw ParseError("checkpoint: truncated data");
    records.emplace(std::move(name), std::move(rec));
  }
  return records;
}

}  // namespace detail

inline void save_checkpoint(const std::vector<Parameter>& params, const AdamState* state,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write("TFMCKPT1", 8);
  std::int32_t n_records = static_cast<std::int32_t>(params.size());
  if (state) n_records += static_cast<std::int32_t>(2 * params.size()) + 1;
  out.write(reinterpret_cast<const char*>(&n_records), sizeof(n_records));
  for (const auto& p : params)
    detail::write_record(out, p.name, p.tensor.shape(), p.tensor.values());
  if (state) {
    for (size_t i = 0; i < params.size(); ++i) {
      detail::write_record(out, "optim/m/" + params[i].name, params[i].tensor.shape(),
                           state->m[i]);
      detail::write_record(out, "optim/v/" + params[i].name, params[i].tensor.shape(),
                           state->v[i]);
    }
    detail::write_record(out, "optim/step", {1}, {static_cast<double>(state->step)});
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Loads parameters by name into an existing registry; shapes must match.
// `state`, when given, is restored from the optim records if present.
inline void load_checkpoint(std::vector<Parameter>& params, AdamState* state,
                            const std::string& path) {
  auto records = detail::read_records(path);
  for (auto& p : params) {
    auto it = records.find(p.name);
    if (it == records.end())
      throw ValidationError("checkpoint '" + path + "' lacks parameter '" + p.name + "'");
    if (it->second.shape != p.tensor.shape())
      throw ShapeError("checkpoint parameter '" + p.name + "': " +
                       detail::shape_str(it->second.shape) + " vs " +
                       detail::shape_str(p.tensor.shape()));
    p.tensor.values() = it->second.data;
  }
  if (state) {
    auto step_it = records.find("optim/step");
    if (step_it != records.end()) {
      *state = AdamState::init(params);
      state->step = static_cast<long>(step_it->second.data[0]);
      for (size_t i = 0; i < params.size(); ++i) {
        state->m[i] = records.at("optim/m/" + params[i].name).data;
        state->v[i] = records.at("optim/v/" + params[i].name).data;
      }
    }
  }
}

}  // namespace tfm
