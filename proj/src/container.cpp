/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/container.cpp
 *
 * Copyright 2026 The facefit authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "facefit/container.hpp"

#include "facefit/error.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace facefit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- binary blob plumbing ------------------------------------------------

struct BlobWriter
{
    std::vector<unsigned char> bytes;
    json arrays = json::object();

    // Appends a row-major f32le array and records its manifest entry.
    void add(const std::string& name, const double* data, std::int64_t rows,
             std::int64_t cols)
    {
        const std::int64_t count = rows * cols;
        const std::size_t offset = bytes.size();
        bytes.resize(offset + static_cast<std::size_t>(count) * 4);
        unsigned char* out = bytes.data() + offset;
        for (std::int64_t i = 0; i < count; ++i)
        {
            const float f = static_cast<float>(data[i]);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            out[4 * i + 0] = static_cast<unsigned char>(u & 0xff);
            out[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
            out[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
            out[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
        }
        arrays[name] = {{"dtype", "f32le"},
                        {"shape", {rows, cols}},
                        {"byte_offset", offset},
                        {"byte_length", static_cast<std::size_t>(count) * 4}};
    }

    void add_matrix(const std::string& name, const MatX& m)
    {
        // Eigen default storage is column-major; serialize row-major.
        std::vector<double> row_major(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                row_major[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
        add(name, row_major.data(), m.rows(), m.cols());
    }
};

struct BlobReader
{
    std::vector<unsigned char> bytes;
    const json& arrays;

    MatX get(const std::string& name, std::int64_t want_rows = -1,
             std::int64_t want_cols = -1) const
    {
        const auto it = arrays.find(name);
        if (it == arrays.end())
            throw ValidationError("missing array \"" + name + "\"");
        const json& entry = *it;
        if (entry.value("dtype", "") != std::string("f32le"))
            throw ValidationError(name + ": unsupported dtype");
        const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
        if (shape.size() != 2)
            throw ValidationError(name + ": expected a rank-2 shape");
        const std::int64_t rows = shape[0];
        const std::int64_t cols = shape[1];
        if ((want_rows >= 0 && rows != want_rows) || (want_cols >= 0 && cols != want_cols))
        {
            std::ostringstream msg;
            msg << name << ": declared shape [" << rows << ", " << cols
                << "] contradicts the manifest dims (expected [" << want_rows << ", "
                << want_cols << "])";
            throw ValidationError(msg.str());
        }
        const auto offset = entry.at("byte_offset").get<std::int64_t>();
        const auto length = entry.at("byte_length").get<std::int64_t>();
        if (length != rows * cols * 4 || offset < 0 ||
            offset + length > static_cast<std::int64_t>(bytes.size()))
            throw ValidationError("blob length mismatch for array \"" + name + "\"");

        MatX m(rows, cols);
        const unsigned char* in = bytes.data() + offset;
        for (std::int64_t i = 0; i < rows * cols; ++i)
        {
            const std::uint32_t u = static_cast<std::uint32_t>(in[4 * i]) |
                                    (static_cast<std::uint32_t>(in[4 * i + 1]) << 8) |
                                    (static_cast<std::uint32_t>(in[4 * i + 2]) << 16) |
                                    (static_cast<std::uint32_t>(in[4 * i + 3]) << 24);
            float f;
            std::memcpy(&f, &u, 4);
            m(i / cols, i % cols) = static_cast<double>(f);
        }
        return m;
    }
};

void write_file(const fs::path& path, const void* data, std::size_t size)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out)
        throw IoError("write failed: " + path.string());
}

std::vector<unsigned char> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in)
        throw IoError("cannot open: " + path.string());
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    if (size > 0)
        in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in)
        throw IoError("read failed: " + path.string());
    return bytes;
}

json read_manifest(const fs::path& path)
{
    const auto bytes = read_file(path);
    json manifest;
    try
    {
        manifest = json::parse(bytes.begin(), bytes.end());
    }
    catch (const json::parse_error& e)
    {
        throw ValidationError("manifest parse error in " + path.string() + ": " + e.what());
    }
    const int version = manifest.value("format_version", -1);
    if (version != kContainerFormatVersion)
        throw ValidationError("unknown container version " + std::to_string(version) +
                              " in " + path.string());
    return manifest;
}

void write_manifest(const fs::path& path, const json& manifest)
{
    const std::string text = manifest.dump(2) + "\n";
    write_file(path, text.data(), text.size());
}

json vecx_to_json(const VecX& v)
{
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        arr.push_back(v[i]);
    return arr;
}

VecX json_to_vecx(const json& arr)
{
    VecX v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

} // namespace

// ---- model container -------------------------------------------------------

void save_model(const MorphableModel& model, const std::string& dir)
{
    model.validate();
    fs::create_directories(dir);

    BlobWriter blob;
    blob.add_matrix("mean_shape", model.mean_shape);
    blob.add_matrix("identity_basis", model.identity_basis);
    blob.add_matrix("expression_basis", model.expression_basis);
    blob.add_matrix("texture_mean", model.texture_mean);
    blob.add_matrix("texture_basis", model.texture_basis);

    json manifest;
    manifest["format_version"] = kContainerFormatVersion;
    manifest["vertex_count"] = model.vertex_count;
    manifest["dims"] = {{"k_id", model.k_id()},
                        {"k_exp", model.k_exp()},
                        {"k_tex", model.k_tex()}};
    manifest["arrays"] = blob.arrays;
    json tris = json::array();
    for (const auto& t : *model.triangles)
        tris.push_back({t[0], t[1], t[2]});
    manifest["triangles"] = std::move(tris);
    manifest["landmark_indices"] = model.landmark_indices;
    json regions = json::object();
    for (const auto& [name, indices] : model.regions)
        regions[name] = indices;
    manifest["regions"] = std::move(regions);

    write_manifest(fs::path(dir) / "model.json", manifest);
    write_file(fs::path(dir) / "model.bin", blob.bytes.data(), blob.bytes.size());
}

MorphableModel load_model(const std::string& dir)
{
    const json manifest = read_manifest(fs::path(dir) / "model.json");
    BlobReader blob{read_file(fs::path(dir) / "model.bin"), manifest.at("arrays")};

    MorphableModel model;
    model.vertex_count = manifest.at("vertex_count").get<int>();
    const json& dims = manifest.at("dims");
    const auto k_id = dims.at("k_id").get<std::int64_t>();
    const auto k_exp = dims.at("k_exp").get<std::int64_t>();
    const auto k_tex = dims.at("k_tex").get<std::int64_t>();
    const std::int64_t n = model.vertex_count;

    model.mean_shape = blob.get("mean_shape", n, 3);
    model.identity_basis = blob.get("identity_basis", 3 * n, k_id);
    model.expression_basis = blob.get("expression_basis", 3 * n, k_exp);
    model.texture_mean = blob.get("texture_mean", n, 3);
    model.texture_basis = blob.get("texture_basis", 3 * n, k_tex);

    auto tris = std::make_shared<TriangleList>();
    for (const auto& t : manifest.at("triangles"))
        tris->push_back({t.at(0).get<std::int32_t>(), t.at(1).get<std::int32_t>(),
                         t.at(2).get<std::int32_t>()});
    model.triangles = std::move(tris);
    model.landmark_indices = manifest.at("landmark_indices").get<std::vector<int>>();
    for (const auto& [name, indices] : manifest.at("regions").items())
        model.regions[name] = indices.get<std::vector<int>>();

    model.validate();
    return model;
}

// ---- sequence container ----------------------------------------------------

void save_sequence(const FaceSequence& seq, const std::string& dir)
{
    const int T = seq.frame_count();
    const std::int64_t n = seq.vertex_count;
    if (T == 0)
        throw ValidationError("sequence: no frames");
    for (const auto& frame : seq.vertices)
        if (frame.rows() != n)
            throw ValidationError("sequence: vertex frame row count does not match vertex_count");
    if (!seq.offsets.empty() && static_cast<int>(seq.offsets.size()) != T)
        throw ValidationError("sequence: offsets frame count does not match vertices");
    if (!seq.params.empty() && static_cast<int>(seq.params.size()) != T)
        throw ValidationError("sequence: params frame count does not match vertices");

    fs::create_directories(dir);

    BlobWriter blob;
    {
        std::vector<double> flat(static_cast<std::size_t>(T) * n * 3);
        std::size_t i = 0;
        for (const auto& frame : seq.vertices)
            for (std::int64_t v = 0; v < n; ++v)
                for (int c = 0; c < 3; ++c)
                    flat[i++] = frame(v, c);
        blob.add("vertices", flat.data(), static_cast<std::int64_t>(T) * n, 3);
    }
    if (!seq.offsets.empty())
    {
        std::vector<double> flat(static_cast<std::size_t>(T) * n * 3);
        std::size_t i = 0;
        for (const auto& frame : seq.offsets)
            for (std::int64_t v = 0; v < n; ++v)
                for (int c = 0; c < 3; ++c)
                    flat[i++] = frame(v, c);
        blob.add("offsets", flat.data(), static_cast<std::int64_t>(T) * n, 3);
    }

    json manifest;
    manifest["format_version"] = kContainerFormatVersion;
    manifest["frame_count"] = T;
    manifest["vertex_count"] = seq.vertex_count;
    manifest["fps"] = seq.fps;
    manifest["arrays"] = blob.arrays;
    if (!seq.params.empty())
    {
        json frames = json::array();
        for (const auto& p : seq.params)
        {
            json f;
            f["alpha"] = vecx_to_json(p.alpha);
            f["beta"] = vecx_to_json(p.beta);
            f["delta"] = vecx_to_json(p.delta);
            json gammas = json::object();
            for (const auto& [cam, g] : p.gamma)
                gammas[std::to_string(cam)] = vecx_to_json(g);
            f["gamma"] = std::move(gammas);
            frames.push_back(std::move(f));
        }
        manifest["frames"] = std::move(frames);
    }

    write_manifest(fs::path(dir) / "seq.json", manifest);
    write_file(fs::path(dir) / "seq.bin", blob.bytes.data(), blob.bytes.size());

    if (seq.triangles && !seq.triangles->empty())
    {
        // Wavefront OBJ snapshot of frame 0 for quick external viewing.
        std::ostringstream obj;
        obj << std::setprecision(9);
        const MatN3& v0 = seq.vertices.front();
        for (std::int64_t v = 0; v < n; ++v)
            obj << "v " << v0(v, 0) << ' ' << v0(v, 1) << ' ' << v0(v, 2) << '\n';
        for (const auto& t : *seq.triangles)
            obj << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
        const std::string text = obj.str();
        write_file(fs::path(dir) / "frame_000000.obj", text.data(), text.size());
    }
}

FaceSequence load_sequence(const std::string& dir)
{
    const json manifest = read_manifest(fs::path(dir) / "seq.json");
    BlobReader blob{read_file(fs::path(dir) / "seq.bin"), manifest.at("arrays")};

    FaceSequence seq;
    const int T = manifest.at("frame_count").get<int>();
    seq.vertex_count = manifest.at("vertex_count").get<int>();
    seq.fps = manifest.at("fps").get<double>();
    const std::int64_t n = seq.vertex_count;

    const MatX vertices = blob.get("vertices", static_cast<std::int64_t>(T) * n, 3);
    seq.vertices.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        seq.vertices.push_back(vertices.middleRows(static_cast<std::int64_t>(t) * n, n));

    if (manifest.at("arrays").contains("offsets"))
    {
        const MatX offsets = blob.get("offsets", static_cast<std::int64_t>(T) * n, 3);
        seq.offsets.reserve(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            seq.offsets.push_back(offsets.middleRows(static_cast<std::int64_t>(t) * n, n));
    }

    if (manifest.contains("frames"))
    {
        for (const auto& f : manifest.at("frames"))
        {
            FaceParams p;
            p.alpha = json_to_vecx(f.at("alpha"));
            p.beta = json_to_vecx(f.at("beta"));
            p.delta = json_to_vecx(f.at("delta"));
            for (const auto& [cam, g] : f.at("gamma").items())
                p.gamma[std::stoi(cam)] = json_to_vecx(g);
            seq.params.push_back(std::move(p));
        }
        if (static_cast<int>(seq.params.size()) != T)
            throw ValidationError("sequence: params frame count does not match frame_count");
    }
    return seq;
}

} // namespace facefit
