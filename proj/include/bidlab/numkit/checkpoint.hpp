#pragma once

// Parameter checkpoints: a textual header (tensor names, shapes, byte
// offsets) followed by a flat little-endian payload. Same container is used
// for embedding cache arrays.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bidlab/numkit/nn.hpp"

namespace bidlab::nk {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

inline void save_checkpoint(const std::string& path,
                            const std::vector<CheckpointEntry>& entries) {
  std::ostringstream header;
  header << "bidlab-checkpoint v1\n";
  header << "tensors " << entries.size() << "\n";
  std::size_t offset = 0;
  for (const auto& e : entries) {
    header << e.name << " ";
    header << e.shape.size();
    for (int d : e.shape) header << " " << d;
    header << " " << offset << "\n";
    offset += e.data.size() * sizeof(float);
  }
  header << "end\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for write: " + path);
  std::string h = header.str();
  out.write(h.data(), std::streamsize(h.size()));
  for (const auto& e : entries)
    out.write(reinterpret_cast<const char*>(e.data.data()),
              std::streamsize(e.data.size() * sizeof(float)));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "bidlab-checkpoint v1") throw IoError("bad checkpoint magic: " + path);
  std::getline(in, line);
  std::istringstream c(line);
  std::string tok;
  std::size_t count = 0;
  c >> tok >> count;
  if (tok != "tensors") throw IoError("bad checkpoint header: " + path);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    std::getline(in, line);
    std::istringstream ls(line);
    std::size_t rank = 0, offset = 0;
    ls >> e.name >> rank;
    e.shape.resize(rank);
    std::int64_t n = 1;
    for (auto& d : e.shape) {
      ls >> d;
      n *= d;
    }
    ls >> offset;
    e.data.resize(std::size_t(n));
  }
  std::getline(in, line);
  if (line != "end") throw IoError("bad checkpoint trailer: " + path);
  for (auto& e : entries) {
    in.read(reinterpret_cast<char*>(e.data.data()),
            std::streamsize(e.data.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint: " + path);
  }
  return entries;
}

template <class T>
void save_params(const std::string& path, const ParamSet<T>& ps) {
  std::vector<CheckpointEntry> entries;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CheckpointEntry e;
    e.name = ps.names()[i];
    e.shape = ps.tensors()[i].shape();
    const auto& d = ps.tensors()[i].data();
    e.data.assign(d.begin(), d.end());
    entries.push_back(std::move(e));
  }
  save_checkpoint(path, entries);
}

template <class T>
void load_params(const std::string& path, ParamSet<T>& ps) {
  auto entries = load_checkpoint(path);
  if (entries.size() != ps.size())
    throw IoError("checkpoint tensor count mismatch: " + path);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (entries[i].name != ps.names()[i] ||
        entries[i].shape != ps.tensors()[i].shape())
      throw IoError("checkpoint layout mismatch at " + entries[i].name);
    auto& dst = ps.tensors()[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j)
      dst[j] = T(entries[i].data[j]);
  }
}

}  // namespace bidlab::nk
