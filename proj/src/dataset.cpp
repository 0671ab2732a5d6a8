// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/io.hpp>

#include <json.hpp>

#include <fstream>

namespace soit {

using nlohmann::json;

std::vector<Camera> read_cameras_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open camera file '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception &e) {
        throw IoError("'" + path.string() + "': invalid JSON: " + e.what());
    }
    if (!doc.is_array())
        throw IoError("'" + path.string() + "': expected a JSON array of cameras");

    std::vector<Camera> cams;
    for (std::size_t k = 0; k < doc.size(); ++k) {
        const json &j = doc[k];
        Camera cam;
        try {
            cam.image_name = j.at("image_name").get<std::string>();
            cam.width      = j.at("width").get<int>();
            cam.height     = j.at("height").get<int>();
            cam.fx         = j.at("fx").get<double>();
            cam.fy         = j.at("fy").get<double>();
            cam.cx         = j.at("cx").get<double>();
            cam.cy         = j.at("cy").get<double>();
            const auto m   = j.at("world_to_cam").get<std::vector<double>>();
            if (m.size() != 16)
                throw IoError("'" + path.string() + "': camera " + std::to_string(k) +
                              " world_to_cam must have 16 entries");
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    cam.world_to_cam(r, c) = m[4 * r + c];
            if (j.contains("near"))
                cam.near = j.at("near").get<double>();
            if (j.contains("far"))
                cam.far = j.at("far").get<double>();
        } catch (const json::exception &e) {
            throw IoError("'" + path.string() + "': camera " + std::to_string(k) + ": " + e.what());
        }
        try {
            cam.validate();
        } catch (const InvalidParameter &e) {
            throw IoError("'" + path.string() + "': " + e.what());
        }
        cams.push_back(std::move(cam));
    }
    return cams;
}

void write_cameras_json(const fs::path &path, std::span<const Camera> cameras) {
    json doc = json::array();
    for (const auto &cam : cameras) {
        std::vector<double> m(16);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                m[4 * r + c] = cam.world_to_cam(r, c);
        doc.push_back({{"image_name", cam.image_name},
                       {"width", cam.width},
                       {"height", cam.height},
                       {"fx", cam.fx},
                       {"fy", cam.fy},
                       {"cx", cam.cx},
                       {"cy", cam.cy},
                       {"near", cam.near},
                       {"far", cam.far},
                       {"world_to_cam", m}});
    }
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot create camera file '" + path.string() + "'");
    out << doc.dump(2) << "\n";
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Camera> Dataset::train_cameras() const {
    std::vector<Camera> out;
    for (std::size_t i : train)
        out.push_back(cameras[i]);
    return out;
}

std::vector<Image<float>> Dataset::train_images() const {
    std::vector<Image<float>> out;
    for (std::size_t i : train)
        out.push_back(images[i]);
    return out;
}

void assign_split(Dataset &data) {
    data.train.clear();
    data.test.clear();
    for (std::size_t i = 0; i < data.cameras.size(); ++i)
        (i % 8 == 0 ? data.test : data.train).push_back(i);
}

Dataset load_dataset(const fs::path &root) {
    if (!fs::is_directory(root))
        throw IoError("dataset directory '" + root.string() + "' does not exist");
    Dataset data;
    data.cameras = read_cameras_json(root / "cameras.json");
    for (const auto &cam : data.cameras) {
        const fs::path img_path = root / cam.image_name;
        if (!fs::exists(img_path))
            throw IoError("dataset '" + root.string() + "': image '" + img_path.string() + "' is missing");
        Image<float> img = img_path.extension() == ".f32" ? read_f32(img_path) : read_png(img_path);
        if (img.width != cam.width || img.height != cam.height || img.channels != 3)
            throw IoError("dataset '" + root.string() + "': view '" + cam.image_name + "' is " +
                          std::to_string(img.width) + "x" + std::to_string(img.height) + " but its camera is " +
                          std::to_string(cam.width) + "x" + std::to_string(cam.height));
        data.images.push_back(std::move(img));
    }
    if (fs::exists(root / "points.ply"))
        data.init_points = read_points_ply(root / "points.ply");
    assign_split(data);
    return data;
}

void save_dataset(const fs::path &root, const Dataset &data) {
    if (data.cameras.size() != data.images.size())
        throw ContractViolation("save_dataset: camera and image counts differ");
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec)
        throw IoError("cannot create dataset directory '" + root.string() + "': " + ec.message());
    write_cameras_json(root / "cameras.json", data.cameras);
    for (std::size_t i = 0; i < data.cameras.size(); ++i) {
        const fs::path p = root / data.cameras[i].image_name;
        if (p.extension() == ".f32")
            write_f32(p, data.images[i]);
        else
            write_png(p, data.images[i]);
    }
    if (data.init_points)
        write_points_ply(root / "points.ply", *data.init_points);
}

} // namespace soit
