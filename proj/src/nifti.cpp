#include "dtwin/nifti.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dtwin {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace {

constexpr std::int32_t kHeaderSize = 348;
constexpr std::int64_t kVoxOffset = 352;

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;
constexpr std::int16_t DT_UINT16 = 512;

constexpr std::int16_t INTENT_LABEL = 1002;
constexpr std::int16_t INTENT_VECTOR = 1007;

// Byte offsets inside the 348-byte header.
namespace off {
constexpr std::size_t sizeof_hdr = 0, dim = 40, intent_code = 68, datatype = 70, bitpix = 72,
                      pixdim = 76, vox_offset = 108, scl_slope = 112, scl_inter = 116,
                      xyzt_units = 123, descrip = 148, qform_code = 252, sform_code = 254,
                      quatern_b = 256, qoffset_x = 268, srow_x = 280, intent_name = 328, magic = 344;
}

std::int32_t swap32(std::int32_t v) {
    const auto u = static_cast<std::uint32_t>(v);
    return static_cast<std::int32_t>((u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24));
}

template <class T>
T get(const std::vector<char>& buf, std::size_t at) {
    T v;
    std::memcpy(&v, buf.data() + at, sizeof(T));
    return v;
}

template <class T>
void put(std::vector<char>& buf, std::size_t at, T v) {
    std::memcpy(buf.data() + at, &v, sizeof(T));
}

void put_string(std::vector<char>& buf, std::size_t at, std::size_t cap, const std::string& s) {
    std::memcpy(buf.data() + at, s.data(), std::min(s.size(), cap - 1));
}

std::string get_string(const std::vector<char>& buf, std::size_t at, std::size_t cap) {
    std::string s(buf.data() + at, cap);
    return s.substr(0, s.find('\0'));
}

int bytes_per_voxel(std::int16_t dt) {
    switch (dt) {
        case DT_UINT8: return 1;
        case DT_INT16:
        case DT_UINT16: return 2;
        case DT_INT32:
        case DT_FLOAT32: return 4;
        case DT_FLOAT64: return 8;
        default: return 0;
    }
}

bool is_integer_type(std::int16_t dt) {
    return dt == DT_UINT8 || dt == DT_INT16 || dt == DT_UINT16 || dt == DT_INT32;
}

struct RawImage {
    std::vector<char> header;
    std::array<std::int64_t, 8> dim{};
    std::int16_t datatype = 0;
    std::int16_t intent_code = 0;
    std::string intent_name;
    std::string descrip;
    GridGeometry geometry;
    std::vector<double> values;  // scaled, in file order
    bool scaled = false;
};

GridGeometry parse_geometry(const std::vector<char>& h, const Index3& dims) {
    Vec3 spacing{};
    for (int a = 0; a < 3; ++a) spacing[a] = static_cast<double>(get<float>(h, off::pixdim + 4 * (a + 1)));
    Vec3 origin{};
    const auto sform = get<std::int16_t>(h, off::sform_code);
    const auto qform = get<std::int16_t>(h, off::qform_code);
    if (sform > 0) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                const double m = get<float>(h, off::srow_x + 16 * r + 4 * c);
                if (r != c && m != 0.0)
                    throw Error("nifti.oblique", "sform contains rotation/shear terms; only axis-aligned grids are supported");
                if (r == c && !(m > 0.0))
                    throw Error("nifti.oblique", "sform has a non-positive scaling term; flipped axes are not supported");
            }
            origin[r] = get<float>(h, off::srow_x + 16 * r + 12);
        }
    } else if (qform > 0) {
        for (int q = 0; q < 3; ++q) {
            if (get<float>(h, off::quatern_b + 4 * q) != 0.0f)
                throw Error("nifti.oblique", "qform quaternion is not the identity; only axis-aligned grids are supported");
        }
        if (get<float>(h, off::pixdim) < 0.0f)
            throw Error("nifti.oblique", "qform qfac = -1 (flipped z) is not supported");
        for (int a = 0; a < 3; ++a) origin[a] = get<float>(h, off::qoffset_x + 4 * a);
    }
    try {
        return GridGeometry(dims, spacing, origin);
    } catch (const Error& e) {
        throw Error("nifti.bad_header", std::string("invalid geometry: ") + e.what());
    }
}

RawImage read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("nifti.io", "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < static_cast<std::size_t>(kHeaderSize))
        throw Error("nifti.bad_header", "file shorter than a NIfTI-1 header: " + path.string());

    RawImage img;
    img.header.assign(bytes.begin(), bytes.begin() + kHeaderSize);
    const auto& h = img.header;
    const auto sizeof_hdr = get<std::int32_t>(h, off::sizeof_hdr);
    if (sizeof_hdr != kHeaderSize) {
        if (swap32(sizeof_hdr) == kHeaderSize)
            throw Error("nifti.big_endian", "big-endian NIfTI files are not supported");
        throw Error("nifti.bad_header", "sizeof_hdr is not 348");
    }
    if (std::memcmp(h.data() + off::magic, "n+1\0", 4) != 0)
        throw Error("nifti.bad_header", "magic is not \"n+1\" (only single-file .nii is supported)");

    for (int i = 0; i < 8; ++i) img.dim[i] = get<std::int16_t>(h, off::dim + 2 * i);
    if (img.dim[0] < 1 || img.dim[0] > 7) throw Error("nifti.bad_header", "dim[0] out of range");
    for (int i = 1; i <= img.dim[0]; ++i)
        if (img.dim[i] < 1) throw Error("nifti.dim_mismatch", "non-positive dimension");
    for (int i = img.dim[0] + 1; i < 8; ++i) img.dim[i] = 1;

    img.datatype = get<std::int16_t>(h, off::datatype);
    const int bpv = bytes_per_voxel(img.datatype);
    if (bpv == 0) {
        std::ostringstream os;
        os << "unsupported datatype " << img.datatype;
        throw Error("nifti.datatype", os.str());
    }
    img.intent_code = get<std::int16_t>(h, off::intent_code);
    img.intent_name = get_string(h, off::intent_name, 16);
    img.descrip = get_string(h, off::descrip, 80);

    const Index3 dims{img.dim[1], img.dim[2], img.dim[3]};
    img.geometry = parse_geometry(h, dims);

    std::int64_t count = 1;
    for (int i = 1; i < 8; ++i) count *= img.dim[i];
    const auto vox_offset = static_cast<std::int64_t>(get<float>(h, off::vox_offset));
    if (vox_offset < kHeaderSize) throw Error("nifti.bad_header", "vox_offset inside the header");
    if (static_cast<std::int64_t>(bytes.size()) < vox_offset + count * bpv)
        throw Error("nifti.dim_mismatch", "file is shorter than the dimensions in its header require");

    const double slope = get<float>(h, off::scl_slope);
    const double inter = get<float>(h, off::scl_inter);
    img.scaled = slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0);

    img.values.resize(static_cast<std::size_t>(count));
    const char* p = bytes.data() + vox_offset;
    for (std::int64_t i = 0; i < count; ++i, p += bpv) {
        double v = 0.0;
        switch (img.datatype) {
            case DT_UINT8: v = static_cast<std::uint8_t>(*p); break;
            case DT_INT16: { std::int16_t t; std::memcpy(&t, p, 2); v = t; break; }
            case DT_UINT16: { std::uint16_t t; std::memcpy(&t, p, 2); v = t; break; }
            case DT_INT32: { std::int32_t t; std::memcpy(&t, p, 4); v = t; break; }
            case DT_FLOAT32: { float t; std::memcpy(&t, p, 4); v = t; break; }
            case DT_FLOAT64: { std::memcpy(&v, p, 8); break; }
        }
        if (img.scaled) v = v * slope + inter;
        if (!std::isfinite(v)) throw Error("nifti.bad_header", "non-finite voxel value");
        img.values[static_cast<std::size_t>(i)] = v;
    }
    return img;
}

void require_3d(const RawImage& img) {
    if (img.dim[0] > 3 && img.dim[4] * img.dim[5] * img.dim[6] * img.dim[7] != 1)
        throw Error("nifti.dim_mismatch", "expected a 3-D volume");
}

std::map<int, std::string> parse_label_names(const std::string& descrip) {
    std::map<int, std::string> names;
    const std::string prefix = "labels:";
    if (descrip.rfind(prefix, 0) != 0) return names;
    std::istringstream is(descrip.substr(prefix.size()));
    std::string item;
    while (std::getline(is, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) continue;
        try {
            names[std::stoi(item.substr(0, eq))] = item.substr(eq + 1);
        } catch (const std::exception&) {
        }
    }
    return names;
}

std::string format_label_names(const std::map<int, std::string>& names) {
    std::string s = "labels:";
    bool first = true;
    for (const auto& [l, n] : names) {
        std::string item = std::to_string(l) + "=" + n;
        if (s.size() + item.size() + 1 > 79) break;
        if (!first) s += ';';
        s += item;
        first = false;
    }
    return s;
}

LabelMask to_label_mask(const RawImage& img) {
    require_3d(img);
    LabelMask mask(img.geometry);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        const double v = img.values[i];
        if (v < 0.0 || v > 65535.0 || v != std::floor(v))
            throw Error("nifti.kind", "label values must be non-negative integers below 65536");
        mask.labels[i] = static_cast<std::uint16_t>(v);
    }
    mask.label_names = parse_label_names(img.descrip);
    std::vector<bool> seen(65536, false);
    for (auto l : mask.labels) seen[l] = true;
    for (int l = 1; l < 65536; ++l)
        if (seen[static_cast<std::size_t>(l)] && !mask.label_names.contains(l))
            mask.label_names[l] = "label_" + std::to_string(l);
    return mask;
}

ScalarGrid to_scalar_grid(const RawImage& img) {
    require_3d(img);
    ScalarGrid grid(img.geometry, img.intent_name == "dose_gray" ? ScalarKind::dose_gray : ScalarKind::intensity);
    grid.values = img.values;
    return grid;
}

std::vector<char> make_header(const GridGeometry& g, std::array<std::int16_t, 8> dim, std::int16_t datatype,
                              std::int16_t intent_code, const std::string& intent_name,
                              const std::string& descrip) {
    std::vector<char> h(static_cast<std::size_t>(kVoxOffset), 0);
    put<std::int32_t>(h, off::sizeof_hdr, kHeaderSize);
    for (int i = 0; i < 8; ++i) put<std::int16_t>(h, off::dim + 2 * i, dim[i]);
    put<std::int16_t>(h, off::intent_code, intent_code);
    put<std::int16_t>(h, off::datatype, datatype);
    put<std::int16_t>(h, off::bitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(datatype)));
    put<float>(h, off::pixdim, 1.0f);
    for (int a = 0; a < 3; ++a) put<float>(h, off::pixdim + 4 * (a + 1), static_cast<float>(g.spacing[a]));
    for (int i = 4; i < 8; ++i) put<float>(h, off::pixdim + 4 * i, 1.0f);
    put<float>(h, off::vox_offset, static_cast<float>(kVoxOffset));
    put<char>(h, off::xyzt_units, 2);  // mm
    put_string(h, off::descrip, 80, descrip);
    put<std::int16_t>(h, off::qform_code, 1);
    put<std::int16_t>(h, off::sform_code, 1);
    for (int a = 0; a < 3; ++a) put<float>(h, off::qoffset_x + 4 * a, static_cast<float>(g.origin[a]));
    for (int r = 0; r < 3; ++r) {
        put<float>(h, off::srow_x + 16 * r + 4 * r, static_cast<float>(g.spacing[r]));
        put<float>(h, off::srow_x + 16 * r + 12, static_cast<float>(g.origin[r]));
    }
    put_string(h, off::intent_name, 16, intent_name);
    std::memcpy(h.data() + off::magic, "n+1\0", 4);
    return h;
}

void write_file(const std::filesystem::path& path, const std::vector<char>& header, const std::vector<char>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io.unwritable", "cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("io.unwritable", "write failed for " + path.string());
}

std::array<std::int16_t, 8> dims3(const GridGeometry& g) {
    return {3, static_cast<std::int16_t>(g.dims[0]), static_cast<std::int16_t>(g.dims[1]),
            static_cast<std::int16_t>(g.dims[2]), 1, 1, 1, 1};
}

void check_writable_dims(const GridGeometry& g) {
    for (auto d : g.dims)
        if (d > 32767) throw Error("nifti.dim_mismatch", "dimension exceeds the NIfTI-1 limit of 32767");
}

}  // namespace

NiftiImage read_nifti(const std::filesystem::path& path) {
    RawImage img = read_raw(path);
    if (img.intent_code == INTENT_LABEL && is_integer_type(img.datatype) && !img.scaled) return to_label_mask(img);
    return to_scalar_grid(img);
}

ScalarGrid read_scalar_grid(const std::filesystem::path& path) { return to_scalar_grid(read_raw(path)); }

LabelMask read_label_mask(const std::filesystem::path& path) {
    RawImage img = read_raw(path);
    if (!is_integer_type(img.datatype))
        throw Error("nifti.kind", "label masks must use an integer datatype: " + path.string());
    return to_label_mask(img);
}

VectorField read_vector_field(const std::filesystem::path& path) {
    RawImage img = read_raw(path);
    if (img.dim[0] != 5 || img.dim[4] != 1 || img.dim[5] != 3)
        throw Error("nifti.dim_mismatch", "vector fields must have dim = [5, nx, ny, nz, 1, 3]");
    VectorField field(img.geometry, img.intent_name == "dvf_pull" ? FieldConvention::backward_pull
                                                                  : FieldConvention::forward_push);
    const auto n = static_cast<std::size_t>(img.geometry.voxel_count());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) field.vectors[i][c] = img.values[c * n + i];
    return field;
}

void write_nifti(const ScalarGrid& grid, const std::filesystem::path& path) {
    check_writable_dims(grid.geometry);
    const bool dose = grid.kind == ScalarKind::dose_gray;
    auto h = make_header(grid.geometry, dims3(grid.geometry), DT_FLOAT32, 0, dose ? "dose_gray" : "",
                         dose ? "dose (Gy)" : "intensity");
    std::vector<char> data(grid.values.size() * 4);
    for (std::size_t i = 0; i < grid.values.size(); ++i) put<float>(data, 4 * i, static_cast<float>(grid.values[i]));
    write_file(path, h, data);
}

void write_nifti(const LabelMask& mask, const std::filesystem::path& path) {
    check_writable_dims(mask.geometry);
    auto h = make_header(mask.geometry, dims3(mask.geometry), DT_UINT16, INTENT_LABEL, "labels",
                         format_label_names(mask.label_names));
    std::vector<char> data(mask.labels.size() * 2);
    for (std::size_t i = 0; i < mask.labels.size(); ++i) put<std::uint16_t>(data, 2 * i, mask.labels[i]);
    write_file(path, h, data);
}

void write_nifti(const BinaryMask& mask, const std::filesystem::path& path) {
    check_writable_dims(mask.geometry);
    auto h = make_header(mask.geometry, dims3(mask.geometry), DT_UINT8, 0, "", "binary mask");
    std::vector<char> data(mask.data.begin(), mask.data.end());
    write_file(path, h, data);
}

void write_nifti(const VectorField& field, const std::filesystem::path& path) {
    const auto& g = field.geometry;
    check_writable_dims(g);
    std::array<std::int16_t, 8> dim{5, static_cast<std::int16_t>(g.dims[0]), static_cast<std::int16_t>(g.dims[1]),
                                    static_cast<std::int16_t>(g.dims[2]), 1, 3, 1, 1};
    const bool pull = field.convention == FieldConvention::backward_pull;
    auto h = make_header(g, dim, DT_FLOAT32, INTENT_VECTOR, pull ? "dvf_pull" : "dvf_push",
                         pull ? "displacement (mm), backward pull" : "displacement (mm), forward push");
    const auto n = field.vectors.size();
    std::vector<char> data(n * 3 * 4);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) put<float>(data, 4 * (c * n + i), static_cast<float>(field.vectors[i][c]));
    write_file(path, h, data);
}

}  // namespace dtwin
