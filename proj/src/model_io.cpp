#include "covidnn/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace covidnn {

static_assert(std::endian::native == std::endian::little,
              "archive payload is written as native float32 and assumes little-endian");

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

nlohmann::ordered_json header_json(const std::vector<TensorEntry>& entries) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["name"] = e.name;
    j["dtype"] = e.dtype;
    j["shape"] = e.shape;
    j["offset"] = e.offset;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

void write_archive(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::vector<TensorEntry> entries;
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    if (nt.name.empty())
      throw ArchiveError(ArchiveErrorCode::unnamed_parameter,
                         "refusing to serialize a tensor without a name");
    TensorEntry e;
    e.name = nt.name;
    e.dtype = 0;
    e.shape = nt.tensor->shape();
    e.offset = offset;
    offset += e.byte_size();
    entries.push_back(std::move(e));
  }

  const std::string header = header_json(entries).dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError(ArchiveErrorCode::io, "cannot open '" + path + "' for writing");
  out.write(kArchiveMagic, 4);
  write_u32(out, kArchiveVersion);
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& nt : tensors)
    out.write(reinterpret_cast<const char*>(nt.tensor->data()),
              static_cast<std::streamsize>(sizeof(float) *
                                           static_cast<std::size_t>(nt.tensor->size())));
  if (!out) throw ArchiveError(ArchiveErrorCode::io, "write failed for '" + path + "'");
}

namespace {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ArchiveError(ArchiveErrorCode::io, "cannot open '" + path + "'");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  in.read(buf.data(), size);
  if (in.gcount() != size) throw ArchiveError(ArchiveErrorCode::io, "read failed for '" + path + "'");
  return buf;
}

std::vector<TensorEntry> parse_header(const std::vector<char>& buf, const std::string& path,
                                      std::uint64_t* payload_start) {
  if (buf.size() < 16)
    throw ArchiveError(ArchiveErrorCode::bad_magic, "'" + path + "' is too short to be an archive");
  if (std::memcmp(buf.data(), kArchiveMagic, 4) != 0)
    throw ArchiveError(ArchiveErrorCode::bad_magic, "'" + path + "' has wrong magic bytes");
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + 4, 4);
  if (version != kArchiveVersion)
    throw ArchiveError(ArchiveErrorCode::bad_version,
                       "'" + path + "' has version " + std::to_string(version) + ", expected " +
                           std::to_string(kArchiveVersion));
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, buf.data() + 8, 8);
  if (16 + header_len > buf.size())
    throw ArchiveError(ArchiveErrorCode::bad_header,
                       "'" + path + "' header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 +
                                                         static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(ArchiveErrorCode::bad_header,
                       "'" + path + "' header is not valid JSON: " + e.what());
  }
  if (!header.is_array())
    throw ArchiveError(ArchiveErrorCode::bad_header, "'" + path + "' header must be an array");

  std::vector<TensorEntry> entries;
  for (const auto& j : header) {
    TensorEntry e;
    try {
      e.name = j.at("name").get<std::string>();
      e.dtype = j.at("dtype").get<int>();
      e.shape = j.at("shape").get<std::vector<int>>();
      e.offset = j.at("offset").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw ArchiveError(ArchiveErrorCode::bad_header,
                         "'" + path + "' header entry is malformed: " + std::string(ex.what()));
    }
    if (e.name.empty())
      throw ArchiveError(ArchiveErrorCode::bad_header, "'" + path + "' has an unnamed tensor");
    if (e.dtype != 0)
      throw ArchiveError(ArchiveErrorCode::bad_dtype,
                         "'" + path + "' tensor '" + e.name + "' has unknown dtype " +
                             std::to_string(e.dtype));
    for (int ext : e.shape)
      if (ext <= 0)
        throw ArchiveError(ArchiveErrorCode::bad_header,
                           "'" + path + "' tensor '" + e.name + "' has a non-positive extent");
    entries.push_back(std::move(e));
  }

  // Offsets must tile the payload contiguously in order.
  std::uint64_t expect = 0;
  for (const auto& e : entries) {
    if (e.offset != expect)
      throw ArchiveError(ArchiveErrorCode::overlapping_tensors,
                         "'" + path + "' tensor '" + e.name + "' offset " +
                             std::to_string(e.offset) + " does not follow previous tensor (" +
                             std::to_string(expect) + ")");
    expect += e.byte_size();
  }
  const std::uint64_t payload_bytes = buf.size() - 16 - header_len;
  if (payload_bytes < expect)
    throw ArchiveError(ArchiveErrorCode::truncated_payload,
                       "'" + path + "' payload has " + std::to_string(payload_bytes) +
                           " bytes, header declares " + std::to_string(expect));
  if (payload_bytes > expect)
    throw ArchiveError(ArchiveErrorCode::bad_header,
                       "'" + path + "' has " + std::to_string(payload_bytes - expect) +
                           " trailing payload bytes");
  *payload_start = 16 + header_len;
  return entries;
}

}  // namespace

ArchiveContents read_archive(const std::string& path) {
  const std::vector<char> buf = read_file(path);
  std::uint64_t payload_start = 0;
  ArchiveContents c;
  c.entries = parse_header(buf, path, &payload_start);
  const std::size_t n_floats = (buf.size() - payload_start) / sizeof(float);
  c.payload.resize(n_floats);
  std::memcpy(c.payload.data(), buf.data() + payload_start, n_floats * sizeof(float));
  return c;
}

std::vector<TensorEntry> read_archive_header(const std::string& path) {
  const std::vector<char> buf = read_file(path);
  std::uint64_t payload_start = 0;
  return parse_header(buf, path, &payload_start);
}

void save_weights(Network<float>& net, const std::string& path) {
  std::vector<NamedTensor> tensors;
  for (const auto& p : net.params()) tensors.push_back({p.name, p.value});
  write_archive(path, tensors);

  std::ofstream sidecar(path + ".json", std::ios::binary | std::ios::trunc);
  if (!sidecar)
    throw ArchiveError(ArchiveErrorCode::io, "cannot write sidecar '" + path + ".json'");
  sidecar << net.spec().to_json().dump(2) << "\n";
}

void load_weights(Network<float>& net, const std::string& path, bool ignore_extra) {
  ArchiveContents archive = read_archive(path);
  std::map<std::string, const TensorEntry*> by_name;
  for (const auto& e : archive.entries) {
    if (!by_name.emplace(e.name, &e).second)
      throw ArchiveError(ArchiveErrorCode::bad_header,
                         "'" + path + "' contains tensor '" + e.name + "' twice");
  }

  auto params = net.params();
  // Validate everything before touching the network.
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw ArchiveError(ArchiveErrorCode::missing_tensor,
                         "'" + path + "' is missing tensor '" + p.name + "'");
    if (it->second->shape != p.value->shape())
      throw ArchiveError(ArchiveErrorCode::shape_mismatch,
                         "tensor '" + p.name + "' has shape " +
                             shape_to_string(it->second->shape) + " in '" + path +
                             "', network expects " + shape_to_string(p.value->shape()));
  }
  if (!ignore_extra && archive.entries.size() > params.size()) {
    std::map<std::string, bool> known;
    for (const auto& p : params) known[p.name] = true;
    for (const auto& e : archive.entries)
      if (!known.count(e.name))
        throw ArchiveError(ArchiveErrorCode::extra_tensor,
                           "'" + path + "' contains unknown tensor '" + e.name + "'");
  }

  for (auto& p : params) {
    const TensorEntry& e = *by_name.at(p.name);
    const float* src = archive.payload.data() + e.offset / sizeof(float);
    std::copy(src, src + p.value->size(), p.value->data());
  }
  net.on_weights_loaded();
}

ModelSpec load_model_spec(const std::string& archive_path) {
  std::ifstream in(archive_path + ".json");
  if (!in)
    throw ArchiveError(ArchiveErrorCode::io,
                       "cannot open model spec sidecar '" + archive_path + ".json'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(ArchiveErrorCode::bad_header,
                       "bad model spec sidecar '" + archive_path + ".json': " + e.what());
  }
  return ModelSpec::from_json(j);
}

std::vector<std::string> VerifyReport::flagged_names() const {
  std::vector<std::string> names;
  for (const auto& c : checks)
    if (!c.present || !c.shape_ok || c.degenerate) names.push_back(c.name);
  return names;
}

nlohmann::ordered_json VerifyReport::to_json() const {
  nlohmann::ordered_json j;
  j["all_ok"] = all_ok;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["expected_shape"] = c.expected_shape;
    cj["present"] = c.present;
    if (c.present) {
      cj["found_shape"] = c.found_shape;
      cj["shape_ok"] = c.shape_ok;
      cj["degenerate"] = c.degenerate;
      cj["min"] = c.min;
      cj["max"] = c.max;
      cj["mean"] = c.mean;
    }
    j["checks"].push_back(std::move(cj));
  }
  j["extra_tensors"] = extra_tensors;
  return j;
}

VerifyReport verify_pretrained_alexnet(const std::string& path) {
  const auto expected = spec_param_table(build_alexnet());
  ArchiveContents archive = read_archive(path);
  std::map<std::string, const TensorEntry*> by_name;
  for (const auto& e : archive.entries) by_name[e.name] = &e;

  VerifyReport report;
  report.all_ok = true;
  for (const auto& [name, shape] : expected) {
    TensorCheck c;
    c.name = name;
    c.expected_shape = shape;
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      const TensorEntry& e = *it->second;
      c.present = true;
      c.found_shape = e.shape;
      c.shape_ok = e.shape == shape;
      const float* data = archive.payload.data() + e.offset / sizeof(float);
      const std::int64_t n = shape_size(e.shape);
      double mn = data[0], mx = data[0], sum = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        mn = std::min(mn, static_cast<double>(data[i]));
        mx = std::max(mx, static_cast<double>(data[i]));
        sum += data[i];
      }
      c.min = mn;
      c.max = mx;
      c.mean = sum / static_cast<double>(n);
      c.degenerate = mn == mx;
    }
    if (!c.present || !c.shape_ok || c.degenerate) report.all_ok = false;
    report.checks.push_back(std::move(c));
  }
  for (const auto& e : archive.entries) {
    bool known = false;
    for (const auto& [name, shape] : expected)
      if (name == e.name) known = true;
    if (!known) report.extra_tensors.push_back(e.name);
  }
  return report;
}

}  // namespace covidnn
