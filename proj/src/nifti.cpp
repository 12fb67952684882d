#include "liverstage/nifti.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace liverstage {
namespace {

// NIfTI-1 header, 348 bytes. Only the fields this reader touches are named.
#pragma pack(push, 1)
struct Nifti1Header {
  int32_t sizeof_hdr;      // 348
  char unused1[36];
  int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  int16_t intent_code;
  int16_t datatype;
  int16_t bitpix;
  int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  int16_t qform_code;
  int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr int16_t DT_UINT8 = 2;
constexpr int16_t DT_INT16 = 4;
constexpr int16_t DT_FLOAT32 = 16;

struct RawNifti {
  Nifti1Header hdr;
  std::vector<float> data;  // scaled intensities
  std::array<int, 3> dims;
  std::array<double, 3> spacing;
  std::array<double, 3> origin;
};

RawNifti read_nifti(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);

  RawNifti out;
  Nifti1Header& h = out.hdr;
  if (!f.read(reinterpret_cast<char*>(&h), sizeof(h)))
    throw std::runtime_error(path + ": truncated NIfTI header");
  if (h.sizeof_hdr != 348)
    throw std::runtime_error(path + ": not a NIfTI-1 file (byte-swapped or foreign header)");
  if (std::strncmp(h.magic, "n+1", 3) != 0)
    throw std::runtime_error(path + ": unsupported magic (only single-file .nii)");
  if (h.dim[0] != 3)
    throw std::runtime_error(path + ": only 3-D volumes are supported");
  if (h.datatype != DT_UINT8 && h.datatype != DT_INT16 && h.datatype != DT_FLOAT32)
    throw std::runtime_error(path + ": unsupported datatype " + std::to_string(h.datatype));

  for (int a = 0; a < 3; ++a) {
    out.dims[a] = h.dim[a + 1];
    out.spacing[a] = h.pixdim[a + 1];
    if (out.dims[a] <= 0) throw std::runtime_error(path + ": non-positive dimension");
    if (!(out.spacing[a] > 0.0f)) throw std::runtime_error(path + ": non-positive pixdim");
  }

  // Axis-aligned orientation only: sform, when present, must be diagonal.
  out.origin = {0.0, 0.0, 0.0};
  if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        float expect = (r == c) ? static_cast<float>(out.spacing[r]) : 0.0f;
        if (std::abs(rows[r][c] - expect) > 1e-4f * (1.0f + std::abs(expect)))
          throw std::runtime_error(path +
                                   ": non-axis-aligned sform matrices are not supported");
      }
    out.origin = {rows[0][3], rows[1][3], rows[2][3]};
  } else if (h.qform_code > 0) {
    if (std::abs(h.quatern_b) > 1e-6f || std::abs(h.quatern_c) > 1e-6f ||
        std::abs(h.quatern_d) > 1e-6f)
      throw std::runtime_error(path + ": non-axis-aligned qform is not supported");
    out.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
  }

  size_t n = static_cast<size_t>(out.dims[0]) * out.dims[1] * out.dims[2];
  size_t offset = static_cast<size_t>(h.vox_offset);
  if (offset < 352) throw std::runtime_error(path + ": bad vox_offset");
  f.seekg(static_cast<std::streamoff>(offset), std::ios::beg);

  size_t elem = (h.datatype == DT_UINT8) ? 1 : (h.datatype == DT_INT16) ? 2 : 4;
  std::vector<char> raw(n * elem);
  if (!f.read(raw.data(), static_cast<std::streamsize>(raw.size())))
    throw std::runtime_error(path + ": payload shorter than header dimensions declare");

  double slope = (h.scl_slope == 0.0f) ? 1.0 : static_cast<double>(h.scl_slope);
  double inter = static_cast<double>(h.scl_inter);

  out.data.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double v;
    if (h.datatype == DT_UINT8) {
      v = static_cast<uint8_t>(raw[i]);
    } else if (h.datatype == DT_INT16) {
      int16_t s;
      std::memcpy(&s, raw.data() + i * 2, 2);
      v = s;
    } else {
      float fv;
      std::memcpy(&fv, raw.data() + i * 4, 4);
      v = fv;
    }
    v = v * slope + inter;
    if (!std::isfinite(v))
      throw std::runtime_error(path + ": non-finite intensity at voxel " + std::to_string(i));
    out.data[i] = static_cast<float>(v);
  }
  return out;
}

void write_nifti(const std::string& path, const std::array<int, 3>& dims,
                 const std::array<double, 3>& spacing, const std::array<double, 3>& origin,
                 int16_t datatype, const void* payload, size_t payload_bytes) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.dim[0] = 3;
  for (int a = 0; a < 3; ++a) {
    h.dim[a + 1] = static_cast<int16_t>(dims[a]);
    h.pixdim[a + 1] = static_cast<float>(spacing[a]);
  }
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.pixdim[0] = 1.0f;
  h.datatype = datatype;
  h.bitpix = (datatype == DT_UINT8) ? 8 : (datatype == DT_INT16) ? 16 : 32;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.sform_code = 1;
  h.srow_x[0] = static_cast<float>(spacing[0]);
  h.srow_y[1] = static_cast<float>(spacing[1]);
  h.srow_z[2] = static_cast<float>(spacing[2]);
  h.srow_x[3] = static_cast<float>(origin[0]);
  h.srow_y[3] = static_cast<float>(origin[1]);
  h.srow_z[3] = static_cast<float>(origin[2]);
  h.qform_code = 0;
  std::memcpy(h.magic, "n+1\0", 4);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(&h), sizeof(h));
  const char pad[4] = {0, 0, 0, 0};
  f.write(pad, 4);  // header extension flag
  f.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace

Volume load_volume(const std::string& path) {
  RawNifti raw = read_nifti(path);
  Volume v;
  v.dims = raw.dims;
  v.spacing = raw.spacing;
  v.origin = raw.origin;
  v.data = std::move(raw.data);
  return v;
}

void save_volume(const Volume& v, const std::string& path) {
  v.validate();
  write_nifti(path, v.dims, v.spacing, v.origin, DT_FLOAT32, v.data.data(),
              v.data.size() * sizeof(float));
}

Mask load_mask(const std::string& path) {
  RawNifti raw = read_nifti(path);
  Mask m;
  m.dims = raw.dims;
  m.spacing = raw.spacing;
  m.origin = raw.origin;
  m.data.resize(raw.data.size());
  for (size_t i = 0; i < raw.data.size(); ++i)
    m.data[i] = (raw.data[i] != 0.0f) ? 1 : 0;
  return m;
}

void save_mask(const Mask& m, const std::string& path) {
  write_nifti(path, m.dims, m.spacing, m.origin, DT_UINT8, m.data.data(), m.data.size());
}

std::vector<Study> load_manifest(const std::string& path, ContrastMode mode) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("manifest " + path + ": " + e.what());
  }
  if (!j.is_array()) throw std::runtime_error("manifest must be a JSON array");

  auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  std::vector<Study> studies;
  for (const auto& rec : j) {
    Study s;
    s.subject_id = rec.at("subject_id").get<std::string>();
    s.contrast_mode = mode;
    if (rec.contains("stage") && !rec["stage"].is_null()) {
      int st = rec["stage"].get<int>();
      if (st < 1 || st > 4)
        throw std::runtime_error("subject " + s.subject_id + ": stage outside 1..4");
      s.stage = st;
    }
    const auto& mods = rec.at("modalities");
    for (auto it = mods.begin(); it != mods.end(); ++it)
      s.modalities[it.key()] = load_volume(resolve(it.value().get<std::string>()));
    if (!s.has("GED4"))
      throw std::runtime_error("subject " + s.subject_id + ": manifest record lacks GED4");
    if (rec.contains("mask") && !rec["mask"].is_null())
      s.mask = load_mask(resolve(rec["mask"].get<std::string>()));
    s.validate();
    studies.push_back(std::move(s));
  }
  return studies;
}

}  // namespace liverstage
