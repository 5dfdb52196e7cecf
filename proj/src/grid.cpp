#include "s2rf/grid.hpp"

#include <algorithm>
#include <fstream>

#include "s2rf/binary_io.hpp"

namespace s2rf {

namespace {
constexpr char kCheckpointMagic[] = "S2CK";
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

VoxelGrid::VoxelGrid(Resolution res, BoundingBox bbox, int sh_degree)
    : res_(res), bbox_(bbox), sh_degree_(sh_degree), lattice_to_slot_(res.count(), kEmptySlot) {
    require(res.nx > 0 && res.ny > 0 && res.nz > 0, "grid resolution must be positive");
    require(bbox.min.x < bbox.max.x && bbox.min.y < bbox.max.y && bbox.min.z < bbox.max.z,
            "bbox min must be below max on every axis");
    require(sh_degree >= 0 && sh_degree <= kMaxShDegree, "sh degree must be in [0, 2]");
}

VoxelGrid VoxelGrid::dense(Resolution res, BoundingBox bbox, int sh_degree, float init_density) {
    VoxelGrid g(res, bbox, sh_degree);
    const size_t n = res.count();
    g.slot_to_lattice_.resize(n);
    for (size_t i = 0; i < n; ++i) {
        g.lattice_to_slot_[i] = static_cast<int32_t>(i);
        g.slot_to_lattice_[i] = static_cast<uint32_t>(i);
    }
    g.density_.assign(n, init_density);
    g.sh_.assign(n * size_t(g.sh_stride()), 0.0f);
    return g;
}

Vec3 VoxelGrid::cell_size() const {
    const Vec3 e = bbox_.extent();
    return {e.x / res_.nx, e.y / res_.ny, e.z / res_.nz};
}

Vec3 VoxelGrid::voxel_center(uint32_t ix, uint32_t iy, uint32_t iz) const {
    const Vec3 c = cell_size();
    return {bbox_.min.x + (ix + 0.5) * c.x, bbox_.min.y + (iy + 0.5) * c.y, bbox_.min.z + (iz + 0.5) * c.z};
}

int32_t VoxelGrid::activate(size_t lattice) {
    require(lattice < lattice_to_slot_.size(), "lattice index out of range");
    if (lattice_to_slot_[lattice] != kEmptySlot) return lattice_to_slot_[lattice];
    const auto slot = static_cast<int32_t>(slot_to_lattice_.size());
    lattice_to_slot_[lattice] = slot;
    slot_to_lattice_.push_back(static_cast<uint32_t>(lattice));
    density_.push_back(0.0f);
    sh_.resize(sh_.size() + size_t(sh_stride()), 0.0f);
    return slot;
}

size_t VoxelGrid::prune(float threshold) {
    const Vec3 cell = cell_size();
    std::vector<char> keep(n_active(), 0);
    for (size_t s = 0; s < n_active(); ++s) {
        const uint32_t lat = slot_to_lattice_[s];
        const uint32_t ix = lat % res_.nx, iy = (lat / res_.nx) % res_.ny, iz = lat / (res_.nx * res_.ny);
        const Vec3 c = voxel_center(ix, iy, iz);
        for (int k = 0; k < 27 && !keep[s]; ++k) {
            const Vec3 p{c.x + 0.5 * cell.x * (k % 3 - 1), c.y + 0.5 * cell.y * (k / 3 % 3 - 1),
                         c.z + 0.5 * cell.z * (k / 9 - 1)};
            if (std::max(trilinear_sample(*this, p).sigma, 0.0) >= threshold) keep[s] = 1;
        }
    }
    VoxelGrid out(res_, bbox_, sh_degree_);
    for (size_t s = 0; s < n_active(); ++s) {
        if (!keep[s]) continue;
        const int32_t slot = out.activate(slot_to_lattice_[s]);
        out.density(slot) = density_[s];
        std::ranges::copy(sh(static_cast<int32_t>(s)), out.sh(slot).begin());
    }
    const size_t removed = n_active() - out.n_active();
    *this = std::move(out);
    return removed;
}

GridGradients::GridGradients(const VoxelGrid& grid)
    : d_density(grid.n_active(), 0.0), d_sh(grid.n_active() * size_t(grid.sh_stride()), 0.0),
      sh_stride(grid.sh_stride()) {}

void GridGradients::zero() {
    std::ranges::fill(d_density, 0.0);
    std::ranges::fill(d_sh, 0.0);
}

bool GridGradients::matches(const VoxelGrid& grid) const {
    return d_density.size() == grid.n_active() && sh_stride == grid.sh_stride() &&
           d_sh.size() == grid.n_active() * size_t(grid.sh_stride());
}

GridGradients& GridGradients::operator+=(const GridGradients& o) {
    require(o.d_density.size() == d_density.size() && o.d_sh.size() == d_sh.size(), "gradient shape mismatch");
    for (size_t i = 0; i < d_density.size(); ++i) d_density[i] += o.d_density[i];
    for (size_t i = 0; i < d_sh.size(); ++i) d_sh[i] += o.d_sh[i];
    return *this;
}

FieldSample trilinear_sample(const VoxelGrid& grid, const Vec3& x) {
    FieldSample out;
    const BoundingBox& box = grid.bbox();
    if (!box.contains(x)) return out;

    const Resolution& res = grid.resolution();
    const Vec3 cell = grid.cell_size();
    const std::array<uint32_t, 3> n{res.nx, res.ny, res.nz};
    std::array<int64_t, 3> base{};
    std::array<double, 3> frac{};
    for (int a = 0; a < 3; ++a) {
        const double u = (x[a] - box.min[a]) / cell[a] - 0.5;
        const double f = std::floor(u);
        base[a] = static_cast<int64_t>(f);
        frac[a] = u - f;
    }

    const int stride = grid.sh_stride();
    out.n_corners = 8;
    for (int c = 0; c < 8; ++c) {
        double w = 1.0;
        bool inside = true;
        std::array<int64_t, 3> idx{};
        for (int a = 0; a < 3; ++a) {
            const int bit = (c >> a) & 1;
            idx[a] = base[a] + bit;
            w *= bit ? frac[a] : 1.0 - frac[a];
            inside = inside && idx[a] >= 0 && idx[a] < int64_t(n[a]);
        }
        int32_t slot = VoxelGrid::kEmptySlot;
        if (inside) slot = grid.slot_of(grid.lattice_index(uint32_t(idx[0]), uint32_t(idx[1]), uint32_t(idx[2])));
        out.corners[c] = {slot, w};
        if (slot == VoxelGrid::kEmptySlot || w == 0.0) continue;
        out.sigma += w * grid.density(slot);
        const std::span<const float> sh = grid.sh(slot);
        for (int j = 0; j < stride; ++j) out.sh[j] += w * sh[j];
    }
    return out;
}

void scatter_gradient(const VoxelGrid& grid, const FieldSample& sample, double d_sigma, std::span<const double> d_sh,
                      GridGradients& acc) {
    const int stride = grid.sh_stride();
    require(d_sh.size() == size_t(stride), "d_sh block does not match the grid's SH shape");
    require(acc.matches(grid), "gradient accumulator does not match the grid");
    for (int c = 0; c < sample.n_corners; ++c) {
        const auto [slot, w] = sample.corners[c];
        if (slot == VoxelGrid::kEmptySlot) continue;
        acc.d_density[slot] += w * d_sigma;
        double* dst = acc.d_sh.data() + size_t(slot) * stride;
        for (int j = 0; j < stride; ++j) dst[j] += w * d_sh[j];
    }
}

std::vector<uint8_t> serialize_checkpoint(const VoxelGrid& grid) {
    ByteWriter w;
    w.magic(std::string_view(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    for (int a = 0; a < 3; ++a) w.f64(grid.bbox().min[a]);
    for (int a = 0; a < 3; ++a) w.f64(grid.bbox().max[a]);
    w.u32(grid.resolution().nx);
    w.u32(grid.resolution().ny);
    w.u32(grid.resolution().nz);
    w.u32(static_cast<uint32_t>(grid.sh_degree()));
    w.u64(grid.n_active());
    for (uint32_t lat : grid.slot_lattice()) w.u32(lat);
    for (float d : grid.density_data()) w.f32(d);
    for (float c : grid.sh_data()) w.f32(c);
    return w.take();
}

VoxelGrid deserialize_checkpoint(std::span<const uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(std::string_view(kCheckpointMagic, 4));
    if (const uint32_t v = r.u32(); v != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(v));
    BoundingBox box;
    for (int a = 0; a < 3; ++a) box.min[a] = r.f64();
    for (int a = 0; a < 3; ++a) box.max[a] = r.f64();
    Resolution res;
    res.nx = r.u32();
    res.ny = r.u32();
    res.nz = r.u32();
    const auto degree = static_cast<int>(r.u32());
    const uint64_t n_active = r.u64();
    if (n_active > res.count()) throw FormatError("checkpoint has more active voxels than lattice cells");

    VoxelGrid g(res, box, degree);
    const size_t stride = size_t(g.sh_stride());
    r.need(n_active * (4 + 4 + 4 * stride));
    for (uint64_t s = 0; s < n_active; ++s) {
        const uint32_t lat = r.u32();
        if (lat >= res.count() || g.slot_of(lat) != VoxelGrid::kEmptySlot)
            throw FormatError("checkpoint occupancy entry invalid or duplicated");
        g.activate(lat);
    }
    for (auto& d : g.density_data()) d = r.f32();
    for (auto& c : g.sh_data()) c = r.f32();
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload");
    return g;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const VoxelGrid& grid, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(grid));
}

VoxelGrid load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace s2rf
