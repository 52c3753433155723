/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/scene.cpp
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
#include "facefit/scene.hpp"

#include "facefit/error.hpp"
#include "facefit/image.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace facefit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out)
        throw IoError("write failed: " + path.string());
}

json parse_json_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open: " + path.string());
    try
    {
        return json::parse(in);
    }
    catch (const json::parse_error& e)
    {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
}

fs::path camera_dir(const fs::path& dir, int camera_id)
{
    return dir / ("cam" + std::to_string(camera_id));
}

} // namespace

std::string frame_file_name(const std::string& kind, int frame_index,
                            const std::string& extension)
{
    std::ostringstream name;
    name << kind << '_' << std::setw(6) << std::setfill('0') << frame_index << '.'
         << extension;
    return name.str();
}

void save_scene_info(const fs::path& dir, const SceneInfo& info)
{
    if (info.frame_count < 1)
        throw ValidationError("scene: frame count must be >= 1");
    if (info.cameras.empty())
        throw ValidationError("scene: no cameras");
    fs::create_directories(dir);

    json cameras = json::array();
    for (const auto& cam : info.cameras)
    {
        cam.intrinsics.validate();
        cam.extrinsics.validate();
        json entry;
        entry["id"] = cam.id;
        entry["intrinsics"] = {{"fx", cam.intrinsics.fx},   {"fy", cam.intrinsics.fy},
                               {"cx", cam.intrinsics.cx},   {"cy", cam.intrinsics.cy},
                               {"width", cam.intrinsics.width},
                               {"height", cam.intrinsics.height}};
        const Mat4 m = cam.extrinsics.matrix();
        json flat = json::array();
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                flat.push_back(m(r, c));
        entry["extrinsics"] = flat;
        cameras.push_back(entry);
    }

    json root;
    root["format_version"] = kSceneFormatVersion;
    root["frame_count"] = info.frame_count;
    root["fps"] = info.fps;
    root["cameras"] = cameras;
    write_text(dir / "scene.json", root.dump(2) + "\n");
}

SceneInfo load_scene_info(const fs::path& dir)
{
    const fs::path path = dir / "scene.json";
    const json root = parse_json_file(path);

    const int version = root.value("format_version", -1);
    if (version != kSceneFormatVersion)
        throw ValidationError("unknown scene format version " + std::to_string(version) +
                              " in " + path.string());

    SceneInfo info;
    info.frame_count = root.value("frame_count", 0);
    info.fps = root.value("fps", 0.0);
    if (info.frame_count < 1)
        throw ValidationError("scene: frame count must be >= 1");
    if (info.fps <= 0.0)
        throw ValidationError("scene: fps must be positive");
    if (!root.contains("cameras") || !root["cameras"].is_array() || root["cameras"].empty())
        throw ValidationError("scene: no cameras in " + path.string());

    std::set<int> seen;
    for (const auto& entry : root["cameras"])
    {
        SceneCamera cam;
        cam.id = entry.value("id", -1);
        if (!seen.insert(cam.id).second)
            throw ValidationError("scene: duplicate camera id " + std::to_string(cam.id));
        const auto& intr = entry.at("intrinsics");
        cam.intrinsics.fx = intr.value("fx", 0.0);
        cam.intrinsics.fy = intr.value("fy", 0.0);
        cam.intrinsics.cx = intr.value("cx", 0.0);
        cam.intrinsics.cy = intr.value("cy", 0.0);
        cam.intrinsics.width = intr.value("width", 0);
        cam.intrinsics.height = intr.value("height", 0);
        cam.intrinsics.validate();

        const auto& flat = entry.at("extrinsics");
        if (!flat.is_array() || flat.size() != 16)
            throw ValidationError("scene: camera " + std::to_string(cam.id) +
                                  " extrinsics must hold 16 values");
        Mat4 m;
        for (int i = 0; i < 16; ++i)
            m(i / 4, i % 4) = flat[i].get<double>();
        cam.extrinsics = RigidTransform::from_matrix(m);
        cam.extrinsics.validate();
        info.cameras.push_back(cam);
    }
    return info;
}

RGBDFrame load_frame(const fs::path& dir, const SceneCamera& camera, int frame_index)
{
    const fs::path cam_dir = camera_dir(dir, camera.id);
    const fs::path color_path = cam_dir / frame_file_name("color", frame_index, "png");
    const fs::path depth_path = cam_dir / frame_file_name("depth", frame_index, "png");
    const fs::path lm_path = cam_dir / frame_file_name("landmarks", frame_index, "json");
    for (const auto& p : {color_path, depth_path, lm_path})
    {
        if (!fs::exists(p))
        {
            throw IoError("camera " + std::to_string(camera.id) + " frame " +
                          std::to_string(frame_index) + ": missing file " + p.string());
        }
    }

    RGBDFrame frame;
    frame.camera_id = camera.id;
    frame.timestamp_index = frame_index;
    frame.color = read_png_rgb8(color_path);
    frame.depth = read_png_gray16(depth_path);
    if (frame.color.width != camera.intrinsics.width ||
        frame.color.height != camera.intrinsics.height ||
        frame.depth.width != camera.intrinsics.width ||
        frame.depth.height != camera.intrinsics.height)
    {
        throw ValidationError("camera " + std::to_string(camera.id) + " frame " +
                              std::to_string(frame_index) +
                              ": image size does not match intrinsics");
    }

    const json lms = parse_json_file(lm_path);
    if (!lms.is_array())
        throw ValidationError("landmark file is not an array: " + lm_path.string());
    for (const auto& lm : lms)
    {
        if (!lm.is_array() || lm.size() != 2)
            throw ValidationError("landmark entries must be [u, v] pairs: " +
                                  lm_path.string());
        frame.landmarks2d.emplace_back(lm[0].get<double>(), lm[1].get<double>());
    }
    return frame;
}

void save_frame(const fs::path& dir, int camera_id, int frame_index,
                const ImageRGB8& color, const ImageGray16& depth,
                const std::vector<Vec2>& landmarks)
{
    const fs::path cam_dir = camera_dir(dir, camera_id);
    fs::create_directories(cam_dir);
    write_png(cam_dir / frame_file_name("color", frame_index, "png"), color);
    write_png(cam_dir / frame_file_name("depth", frame_index, "png"), depth);

    json lms = json::array();
    for (const auto& lm : landmarks)
        lms.push_back({lm.x(), lm.y()});
    write_text(cam_dir / frame_file_name("landmarks", frame_index, "json"),
               lms.dump(2) + "\n");
}

} // namespace facefit
