// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/binary_io.hpp"
#include "dift/tensordata.hpp"

#include <fstream>

namespace dift {

namespace {

constexpr std::uint32_t kDataVersion = 1;
constexpr std::uint32_t kSceneChunk = 0;
constexpr std::uint32_t kViewChunk = 1;
constexpr std::size_t kChunkEntryBytes = 3 * 4 + 3 * 8;
constexpr char kTrailerMagic[] = "DIFTEND!";

void put_vec(ByteWriter &w, const Vec3 &v)
{
    for (int k = 0; k < 3; ++k) w.put<double>(v[k]);
}

Vec3 get_vec(ByteReader &r)
{
    Vec3 v;
    for (int k = 0; k < 3; ++k) v[k] = r.get<double>();
    return v;
}

std::vector<std::uint8_t> encode_scene(const SceneObject &obj)
{
    ByteWriter w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(obj.family));
    w.put<std::uint64_t>(obj.seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(obj.vertices.size()));
    for (std::size_t i = 0; i < obj.vertices.size(); ++i) {
        put_vec(w, obj.vertices[i]);
        put_vec(w, obj.normals[i]);
        put_vec(w, obj.tangents[i]);
        w.put<double>(obj.uvs[i].x());
        w.put<double>(obj.uvs[i].y());
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(obj.triangles.size()));
    for (const auto &t : obj.triangles)
        for (auto i : t) w.put<std::uint32_t>(i);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(obj.material.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(obj.material.height));
    for (const auto &p : obj.material.texels) {
        put_vec(w, p.diffuse_albedo);
        put_vec(w, p.specular_albedo);
        w.put<double>(p.roughness_x);
        w.put<double>(p.roughness_y);
        w.put<double>(p.tangent_rotation);
    }
    return w.take();
}

SceneObject decode_scene(ByteReader &r)
{
    SceneObject obj;
    const auto family = r.get<std::uint32_t>();
    if (family > static_cast<std::uint32_t>(ShapeFamily::Superellipsoid)) throw DataError("unknown shape family");
    obj.family = static_cast<ShapeFamily>(family);
    obj.seed = r.get<std::uint64_t>();
    const auto nv = r.get<std::uint32_t>();
    if (nv > r.remaining() / 8) throw DataError("scene chunk: vertex count exceeds chunk size");
    obj.vertices.resize(nv);
    obj.normals.resize(nv);
    obj.tangents.resize(nv);
    obj.uvs.resize(nv);
    for (std::uint32_t i = 0; i < nv; ++i) {
        obj.vertices[i] = get_vec(r);
        obj.normals[i] = get_vec(r);
        obj.tangents[i] = get_vec(r);
        const double u = r.get<double>();
        obj.uvs[i] = Vec2(u, r.get<double>());
    }
    const auto nt = r.get<std::uint32_t>();
    if (nt > r.remaining() / 12) throw DataError("scene chunk: triangle count exceeds chunk size");
    obj.triangles.resize(nt);
    for (auto &t : obj.triangles)
        for (auto &i : t) i = r.get<std::uint32_t>();
    obj.material.width = static_cast<int>(r.get<std::uint32_t>());
    obj.material.height = static_cast<int>(r.get<std::uint32_t>());
    const std::size_t texels = static_cast<std::size_t>(obj.material.width) * obj.material.height;
    if (texels > r.remaining() / 8) throw DataError("scene chunk: texel count exceeds chunk size");
    obj.material.texels.resize(texels);
    for (auto &p : obj.material.texels) {
        p.diffuse_albedo = get_vec(r);
        p.specular_albedo = get_vec(r);
        p.roughness_x = r.get<double>();
        p.roughness_y = r.get<double>();
        p.tangent_rotation = r.get<double>();
    }
    try {
        obj.validate();
    } catch (const InputError &e) {
        throw DataError(std::string("scene chunk: ") + e.what());
    }
    return obj;
}

std::vector<std::uint8_t> encode_view(const Capture &cap, int view)
{
    const auto &map = cap.maps[view];
    ByteWriter w;
    w.put<double>(map.pose.theta_deg);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(map.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(map.height));
    std::vector<std::uint8_t> bits((map.records.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < map.records.size(); ++i)
        if (map.records[i].valid) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    w.put_bytes(bits);
    const auto &vis = cap.visibility[view];
    for (std::size_t i = 0; i < map.records.size(); ++i) {
        const auto &r = map.records[i];
        if (!r.valid) continue;
        const float attrs[18] = {r.position[0], r.position[1], r.position[2], r.normal[0],   r.normal[1],
                                 r.normal[2],   r.tangent[0],  r.tangent[1],  r.tangent[2],  r.diffuse[0],
                                 r.diffuse[1],  r.diffuse[2],  r.specular[0], r.specular[1], r.specular[2],
                                 r.roughness_x, r.roughness_y, r.tangent_rotation};
        w.put_array<float>(attrs);
        w.put<std::uint32_t>(r.id.triangle);
        w.put<std::uint32_t>(r.id.b1);
        w.put<std::uint32_t>(r.id.b2);
        w.put_array<std::uint64_t>(
            std::span<const std::uint64_t>(vis.data() + i * cap.mask_words, cap.mask_words));
    }
    return w.take();
}

void decode_view(ByteReader &r, Capture &cap, int view, const CaptureGeometry &geometry)
{
    AttributeMap map;
    map.pose = rotate_pose(r.get<double>());
    map.width = static_cast<int>(r.get<std::uint32_t>());
    map.height = static_cast<int>(r.get<std::uint32_t>());
    if (map.width != geometry.camera.width || map.height != geometry.camera.height)
        throw DataError("view chunk resolution differs from dataset camera");
    if (map.pose.theta_deg != geometry.pose(view).theta_deg) throw DataError("view chunk angle mismatch");
    map.records.resize(static_cast<std::size_t>(map.width) * map.height);
    const auto bits = r.get_bytes((map.records.size() + 7) / 8);
    auto &vis = cap.visibility[view];
    vis.assign(map.records.size() * cap.mask_words, 0);
    for (std::size_t i = 0; i < map.records.size(); ++i) {
        if (!((bits[i / 8] >> (i % 8)) & 1u)) continue;
        auto &rec = map.records[i];
        float a[18];
        r.get_array<float>(a);
        for (int k = 0; k < 3; ++k) {
            rec.position[k] = a[k];
            rec.normal[k] = a[3 + k];
            rec.tangent[k] = a[6 + k];
            rec.diffuse[k] = a[9 + k];
            rec.specular[k] = a[12 + k];
        }
        rec.roughness_x = a[15];
        rec.roughness_y = a[16];
        rec.tangent_rotation = a[17];
        rec.id.triangle = r.get<std::uint32_t>();
        rec.id.b1 = static_cast<std::uint16_t>(r.get<std::uint32_t>());
        rec.id.b2 = static_cast<std::uint16_t>(r.get<std::uint32_t>());
        rec.valid = true;
        r.get_array<std::uint64_t>(std::span<std::uint64_t>(vis.data() + i * cap.mask_words, cap.mask_words));
    }
    if (r.remaining() != 0) throw DataError("view chunk has trailing bytes");
    cap.maps[view] = std::move(map);
}

void write_header(ByteWriter &w, const Dataset &ds, std::uint32_t mask_words)
{
    w.put_magic("DIFTDATA");
    w.put<std::uint32_t>(kDataVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.header.shape.spatial));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.header.shape.angular));
    w.put<std::uint32_t>(ds.header.led_count);
    w.put<std::uint32_t>(ds.header.view_count);
    w.put<double>(ds.header.angular_interval_deg);
    const auto &cam = ds.geometry.camera;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cam.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cam.height));
    w.put<double>(cam.focal_px);
    w.put<double>(cam.principal_point.x());
    w.put<double>(cam.principal_point.y());
    put_vec(w, cam.position);
    put_vec(w, cam.forward);
    put_vec(w, cam.up);
    put_vec(w, cam.right);
    w.put<double>(ds.rig_config.box_size);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.rig_config.leds_per_side));
    w.put<double>(ds.rig_config.angular_exponent);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.captures.size()));
    w.put<std::uint32_t>(mask_words);
}

} // namespace

void save_dataset(const std::filesystem::path &path, const Dataset &ds)
{
    const std::uint32_t mask_words = static_cast<std::uint32_t>((ds.header.led_count + 63) / 64);
    ByteWriter probe;
    write_header(probe, ds, mask_words);
    const std::size_t chunk_count = ds.captures.size() * (1 + ds.header.view_count);
    const std::size_t header_bytes = probe.size() + 4 + chunk_count * kChunkEntryBytes + 8;

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    const std::vector<char> placeholder(header_bytes, 0);
    out.write(placeholder.data(), static_cast<std::streamsize>(placeholder.size()));

    struct Entry {
        std::uint32_t kind, capture, view;
        std::uint64_t offset, size, checksum;
    };
    std::vector<Entry> entries;
    std::uint64_t offset = header_bytes;
    auto emit = [&](std::uint32_t kind, std::uint32_t capture, std::uint32_t view, const std::vector<std::uint8_t> &b) {
        out.write(reinterpret_cast<const char *>(b.data()), static_cast<std::streamsize>(b.size()));
        entries.push_back({kind, capture, view, offset, b.size(), fnv1a64(b)});
        offset += b.size();
    };
    for (std::uint32_t c = 0; c < ds.captures.size(); ++c) {
        const auto &cap = ds.captures[c];
        if (cap.maps.size() != ds.header.view_count || cap.mask_words != mask_words)
            throw InputError("capture does not match dataset header");
        emit(kSceneChunk, c, 0, encode_scene(cap.scene->object()));
        for (std::uint32_t v = 0; v < ds.header.view_count; ++v) emit(kViewChunk, c, v, encode_view(cap, v));
    }

    ByteWriter trailer;
    trailer.put_magic(std::string_view(kTrailerMagic, 8));
    trailer.put<std::uint64_t>(offset + 16);
    out.write(reinterpret_cast<const char *>(trailer.bytes().data()), 16);

    ByteWriter head;
    write_header(head, ds, mask_words);
    head.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
    for (const auto &e : entries) {
        head.put<std::uint32_t>(e.kind);
        head.put<std::uint32_t>(e.capture);
        head.put<std::uint32_t>(e.view);
        head.put<std::uint64_t>(e.offset);
        head.put<std::uint64_t>(e.size);
        head.put<std::uint64_t>(e.checksum);
    }
    head.put<std::uint64_t>(fnv1a64(head.bytes()));
    out.seekp(0);
    out.write(reinterpret_cast<const char *>(head.bytes().data()), static_cast<std::streamsize>(head.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string() + " (disk full?)");
    out.close();
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

DatasetReader::DatasetReader(const std::filesystem::path &path) : path_(path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset " + path.string());
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    const std::string ctx = path.string();
    if (file_size < 16) throw DataError(ctx + ": truncated dataset");

    std::vector<std::uint8_t> tail(16);
    in.seekg(static_cast<std::streamoff>(file_size - 16));
    in.read(reinterpret_cast<char *>(tail.data()), 16);
    ByteReader tr(tail, ctx);
    if (std::memcmp(tail.data(), kTrailerMagic, 8) != 0) throw DataError(ctx + ": truncated dataset (no trailer)");
    tr.seek(8);
    if (tr.get<std::uint64_t>() != file_size) throw DataError(ctx + ": dataset size mismatch");

    // Fixed-size prefix first, then the index whose length it announces.
    const std::size_t fixed = 8 + 4 * 5 + 8 + 4 * 2 + 8 * 3 + 8 * 12 + 8 + 4 + 8 + 4 + 4 + 4;
    if (file_size < fixed) throw DataError(ctx + ": truncated header");
    std::vector<std::uint8_t> head(fixed);
    in.seekg(0);
    in.read(reinterpret_cast<char *>(head.data()), static_cast<std::streamsize>(fixed));
    ByteReader hr(head, ctx);
    hr.expect_magic("DIFTDATA");
    if (hr.get<std::uint32_t>() != kDataVersion) throw DataError(ctx + ": unsupported dataset version");
    auto &hd = proto_.header;
    hd.shape.spatial = static_cast<int>(hr.get<std::uint32_t>());
    hd.shape.angular = static_cast<int>(hr.get<std::uint32_t>());
    hd.led_count = hr.get<std::uint32_t>();
    hd.view_count = hr.get<std::uint32_t>();
    hd.angular_interval_deg = hr.get<double>();
    auto &cam = proto_.geometry.camera;
    cam.width = static_cast<int>(hr.get<std::uint32_t>());
    cam.height = static_cast<int>(hr.get<std::uint32_t>());
    cam.focal_px = hr.get<double>();
    cam.principal_point.x() = hr.get<double>();
    cam.principal_point.y() = hr.get<double>();
    cam.position = get_vec(hr);
    cam.forward = get_vec(hr);
    cam.up = get_vec(hr);
    cam.right = get_vec(hr);
    proto_.rig_config.box_size = hr.get<double>();
    proto_.rig_config.leds_per_side = static_cast<int>(hr.get<std::uint32_t>());
    proto_.rig_config.angular_exponent = hr.get<double>();
    capture_count_ = hr.get<std::uint32_t>();
    const auto mask_words = hr.get<std::uint32_t>();
    const auto chunk_count = hr.get<std::uint32_t>();
    if (chunk_count != capture_count_ * (1 + static_cast<std::uint64_t>(hd.view_count)))
        throw DataError(ctx + ": chunk index does not match header");

    const std::size_t header_bytes = fixed + chunk_count * kChunkEntryBytes + 8;
    if (file_size < header_bytes + 16) throw DataError(ctx + ": truncated chunk index");
    head.resize(header_bytes);
    in.read(reinterpret_cast<char *>(head.data() + fixed), static_cast<std::streamsize>(header_bytes - fixed));
    if (!in) throw DataError(ctx + ": truncated chunk index");
    ByteReader ir(head, ctx);
    ir.seek(fixed);
    index_.resize(chunk_count);
    for (auto &e : index_) {
        e.kind = ir.get<std::uint32_t>();
        e.capture = ir.get<std::uint32_t>();
        e.view = ir.get<std::uint32_t>();
        e.offset = ir.get<std::uint64_t>();
        e.size = ir.get<std::uint64_t>();
        e.checksum = ir.get<std::uint64_t>();
        if (e.offset < header_bytes || e.offset + e.size > file_size - 16)
            throw DataError(ctx + ": chunk extends past end of file");
    }
    const auto stored = ir.get<std::uint64_t>();
    if (stored != fnv1a64({head.data(), header_bytes - 8})) throw DataError(ctx + ": header checksum mismatch");

    try {
        hd.shape.validate();
        proto_.geometry.camera.validate();
        proto_.rig = LightRig::box(proto_.rig_config);
    } catch (const Error &e) {
        throw DataError(ctx + ": invalid header: " + e.what());
    }
    if (proto_.rig.led_count() != hd.led_count || mask_words != (hd.led_count + 63) / 64)
        throw DataError(ctx + ": rig does not match LED count");
    proto_.geometry.view_count = static_cast<int>(hd.view_count);
    proto_.geometry.angular_interval_deg = hd.angular_interval_deg;
}

const DatasetReader::ChunkEntry &DatasetReader::find(std::uint32_t kind, std::uint32_t capture,
                                                     std::uint32_t view) const
{
    for (const auto &e : index_)
        if (e.kind == kind && e.capture == capture && e.view == view) return e;
    throw DataError(path_.string() + ": missing chunk");
}

std::vector<std::uint8_t> DatasetReader::read_chunk(const ChunkEntry &e) const
{
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw IoError("cannot open dataset " + path_.string());
    std::vector<std::uint8_t> bytes(e.size);
    in.seekg(static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(e.size));
    if (!in) throw DataError(path_.string() + ": truncated chunk");
    if (fnv1a64(bytes) != e.checksum) throw DataError(path_.string() + ": chunk checksum mismatch");
    return bytes;
}

Dataset DatasetReader::skeleton() const
{
    Dataset ds;
    ds.header = proto_.header;
    ds.geometry = proto_.geometry;
    ds.rig_config = proto_.rig_config;
    ds.rig = proto_.rig;
    ds.captures.resize(capture_count_);
    for (std::uint32_t c = 0; c < capture_count_; ++c) {
        const auto bytes = read_chunk(find(kSceneChunk, c, 0));
        ByteReader r(bytes, path_.string() + " scene chunk");
        auto &cap = ds.captures[c];
        cap.scene = std::make_shared<const TracedScene>(decode_scene(r));
        cap.mask_words = (ds.header.led_count + 63) / 64;
        cap.maps.resize(ds.header.view_count);
        cap.visibility.resize(ds.header.view_count);
    }
    return ds;
}

void DatasetReader::load_view(Dataset &ds, int capture, int view) const
{
    const auto bytes = read_chunk(find(kViewChunk, static_cast<std::uint32_t>(capture), static_cast<std::uint32_t>(view)));
    ByteReader r(bytes, path_.string() + " view chunk");
    decode_view(r, ds.captures.at(capture), view, ds.geometry);
}

Dataset load_dataset(const std::filesystem::path &path)
{
    DatasetReader reader(path);
    Dataset ds = reader.skeleton();
    // Sequential scan of the whole file with per-chunk checksum verification.
    const auto bytes = read_file(path);
    for (const auto &e : reader.index_) {
        const std::span<const std::uint8_t> chunk(bytes.data() + e.offset, e.size);
        if (fnv1a64(chunk) != e.checksum) throw DataError(path.string() + ": chunk checksum mismatch");
        if (e.kind != kViewChunk) continue;
        ByteReader r(chunk, path.string() + " view chunk");
        decode_view(r, ds.captures.at(e.capture), static_cast<int>(e.view), ds.geometry);
    }
    ds.index_pixels();
    return ds;
}

} // namespace dift
