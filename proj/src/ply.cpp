// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/io.hpp>

#include "binio.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace soit {

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_type(const std::string &s, const fs::path &path) {
    static const std::map<std::string, PlyType> table = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},      {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},    {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},  {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},    {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    auto it = table.find(s);
    if (it == table.end())
        throw IoError("'" + path.string() + "': unknown PLY property type '" + s + "'");
    return it->second;
}

struct PlyProperty {
    std::string name;
    PlyType type       = PlyType::Float32;
    bool is_list       = false;
    PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

struct PlyFile {
    bool ascii = false;
    std::vector<std::string> comments;
    std::vector<PlyElement> elements;
    /// Scalar properties of the vertex element, one column per property.
    std::map<std::string, std::vector<double>> vertex;
    std::size_t vertex_count = 0;
};

double read_binary(binio::Reader &r, PlyType t) {
    switch (t) {
    case PlyType::Int8: return static_cast<std::int8_t>(r.u8());
    case PlyType::UInt8: return r.u8();
    case PlyType::Int16: {
        const std::uint16_t lo = r.u8(), hi = r.u8();
        return static_cast<std::int16_t>(lo | (hi << 8));
    }
    case PlyType::UInt16: {
        const std::uint16_t lo = r.u8(), hi = r.u8();
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    case PlyType::Int32: return static_cast<std::int32_t>(r.u32());
    case PlyType::UInt32: return r.u32();
    case PlyType::Float32: return r.f32();
    case PlyType::Float64: return r.f64();
    }
    return 0;
}

PlyFile read_ply(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open PLY '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "ply" && line != "ply\r")
        throw IoError("'" + path.string() + "' is not a PLY file");

    PlyFile ply;
    bool have_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii")
                ply.ascii = true;
            else if (fmt != "binary_little_endian")
                throw IoError("'" + path.string() + "': unsupported PLY format '" + fmt + "'");
            have_format = true;
        } else if (key == "comment") {
            std::string rest;
            std::getline(ls, rest);
            ply.comments.push_back(rest.empty() ? rest : rest.substr(rest.find_first_not_of(' ')));
        } else if (key == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            if (!ls)
                throw IoError("'" + path.string() + "': malformed element line '" + line + "'");
            ply.elements.push_back(e);
        } else if (key == "property") {
            if (ply.elements.empty())
                throw IoError("'" + path.string() + "': property before any element");
            PlyProperty p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                p.is_list    = true;
                p.count_type = parse_type(ct, path);
                p.type       = parse_type(it, path);
            } else {
                p.type = parse_type(type, path);
                ls >> p.name;
            }
            ply.elements.back().props.push_back(p);
        } else if (key == "end_header") {
            break;
        } else if (key == "obj_info" || key.empty()) {
            continue;
        } else {
            throw IoError("'" + path.string() + "': unexpected PLY header line '" + line + "'");
        }
    }
    if (!have_format || !in)
        throw IoError("'" + path.string() + "': truncated PLY header");

    binio::Reader reader(in, path);
    for (const auto &e : ply.elements) {
        const bool is_vertex = e.name == "vertex";
        std::vector<std::vector<double> *> cols;
        if (is_vertex) {
            ply.vertex_count = e.count;
            for (const auto &p : e.props) {
                if (p.is_list)
                    throw IoError("'" + path.string() + "': list properties on vertices are not supported");
                auto &col = ply.vertex[p.name];
                col.resize(e.count);
                cols.push_back(&col);
            }
        }
        for (std::size_t row = 0; row < e.count; ++row) {
            if (ply.ascii) {
                if (!std::getline(in, line))
                    throw IoError("'" + path.string() + "': unexpected end of file in element '" + e.name + "'");
                std::istringstream ls(line);
                for (std::size_t k = 0; k < e.props.size(); ++k) {
                    double v = 0;
                    if (e.props[k].is_list) {
                        ls >> v;
                        for (int j = 0; j < static_cast<int>(v); ++j) {
                            double skip;
                            ls >> skip;
                        }
                    } else {
                        ls >> v;
                        if (is_vertex)
                            (*cols[k])[row] = v;
                    }
                    if (!ls)
                        throw IoError("'" + path.string() + "': malformed ASCII row in element '" + e.name + "'");
                }
            } else {
                for (std::size_t k = 0; k < e.props.size(); ++k) {
                    const auto &p = e.props[k];
                    if (p.is_list) {
                        const auto n = static_cast<std::size_t>(read_binary(reader, p.count_type));
                        for (std::size_t j = 0; j < n; ++j)
                            read_binary(reader, p.type);
                    } else {
                        const double v = read_binary(reader, p.type);
                        if (is_vertex)
                            (*cols[k])[row] = v;
                    }
                }
            }
        }
    }
    return ply;
}

const std::vector<double> &column(const PlyFile &ply, const std::string &name, const fs::path &path) {
    auto it = ply.vertex.find(name);
    if (it == ply.vertex.end())
        throw IoError("'" + path.string() + "': missing vertex property '" + name + "'");
    return it->second;
}

std::vector<std::string> cloud_property_names() {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz"};
    for (int c = 0; c < 3; ++c)
        names.push_back("f_dc_" + std::to_string(c));
    for (int k = 0; k < 3 * (kShCoeffs - 1); ++k)
        names.push_back("f_rest_" + std::to_string(k));
    names.push_back("opacity");
    for (int c = 0; c < 3; ++c)
        names.push_back("scale_" + std::to_string(c));
    for (int c = 0; c < 4; ++c)
        names.push_back("rot_" + std::to_string(c));
    for (int k = 0; k < kShCoeffs; ++k)
        names.push_back("weight_sh_" + std::to_string(k));
    return names;
}

std::string format_float(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

void write_cloud_ply(const fs::path &path, const GaussianCloud<float> &cloud) {
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot create PLY '" + path.string() + "'");
    const auto names = cloud_property_names();
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "comment sigma " << format_float(static_cast<double>(cloud.sigma())) << "\n";
    out << "comment log_sigma " << format_float(static_cast<double>(cloud.log_sigma)) << "\n";
    out << "element vertex " << cloud.size() << "\n";
    for (const auto &n : names)
        out << "property float " << n << "\n";
    out << "end_header\n";

    binio::Writer w(out);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int c = 0; c < 3; ++c)
            w.f32(cloud.mu[3 * i + c]);
        for (int c = 0; c < 3; ++c)
            w.f32(0.0f);
        const float *sh = cloud.sh_color.data() + kColorWidth * i;
        for (int c = 0; c < 3; ++c)
            w.f32(sh[c]);
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < kShCoeffs; ++j)
                w.f32(sh[3 * j + c]);
        w.f32(cloud.opacity_logit[i]);
        for (int c = 0; c < 3; ++c)
            w.f32(cloud.log_scale[3 * i + c]);
        for (int c = 0; c < 4; ++c)
            w.f32(cloud.quat[4 * i + c]);
        for (int k = 0; k < kShCoeffs; ++k)
            w.f32(cloud.weight_sh[kShCoeffs * i + k]);
    }
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

GaussianCloud<float> read_cloud_ply(const fs::path &path) {
    const PlyFile ply = read_ply(path);
    GaussianCloud<float> cloud(ply.vertex_count);

    bool have_sigma = false;
    for (const auto &c : ply.comments) {
        std::istringstream ls(c);
        std::string key, value;
        ls >> key >> value;
        if (key == "log_sigma") {
            cloud.log_sigma = std::strtof(value.c_str(), nullptr);
            have_sigma      = true;
            break;
        }
        if (key == "sigma" && !have_sigma) {
            const double s = std::strtod(value.c_str(), nullptr);
            if (!(s > 0))
                throw IoError("'" + path.string() + "': sigma comment must be positive");
            cloud.log_sigma = static_cast<float>(std::log(s));
            have_sigma      = true;
        }
    }
    if (!have_sigma)
        throw IoError("'" + path.string() + "': missing 'comment sigma <value>' header line");

    auto get = [&](const std::string &name) -> const std::vector<double> & { return column(ply, name, path); };
    const std::size_t n = ply.vertex_count;
    for (int c = 0; c < 3; ++c) {
        const auto &pos = get(std::string(1, "xyz"[c]));
        const auto &dc  = get("f_dc_" + std::to_string(c));
        const auto &sc  = get("scale_" + std::to_string(c));
        for (std::size_t i = 0; i < n; ++i) {
            cloud.mu[3 * i + c]              = static_cast<float>(pos[i]);
            cloud.sh_color[kColorWidth * i + c] = static_cast<float>(dc[i]);
            cloud.log_scale[3 * i + c]       = static_cast<float>(sc[i]);
        }
        for (int j = 1; j < kShCoeffs; ++j) {
            const auto &rest = get("f_rest_" + std::to_string(c * (kShCoeffs - 1) + j - 1));
            for (std::size_t i = 0; i < n; ++i)
                cloud.sh_color[kColorWidth * i + 3 * j + c] = static_cast<float>(rest[i]);
        }
    }
    const auto &op = get("opacity");
    for (std::size_t i = 0; i < n; ++i)
        cloud.opacity_logit[i] = static_cast<float>(op[i]);
    for (int c = 0; c < 4; ++c) {
        const auto &r = get("rot_" + std::to_string(c));
        for (std::size_t i = 0; i < n; ++i)
            cloud.quat[4 * i + c] = static_cast<float>(r[i]);
    }
    for (int k = 0; k < kShCoeffs; ++k) {
        auto it = ply.vertex.find("weight_sh_" + std::to_string(k));
        for (std::size_t i = 0; i < n; ++i)
            cloud.weight_sh[kShCoeffs * i + k] =
                it != ply.vertex.end() ? static_cast<float>(it->second[i])
                                       : (k == 0 ? static_cast<float>(inverse_softplus(1.0) / kShC0) : 0.0f);
    }
    cloud.validate();
    return cloud;
}

PointCloud read_points_ply(const fs::path &path) {
    const PlyFile ply = read_ply(path);
    PointCloud pts;
    const auto &x = column(ply, "x", path), &y = column(ply, "y", path), &z = column(ply, "z", path);
    auto r = ply.vertex.find("red"), g = ply.vertex.find("green"), b = ply.vertex.find("blue");
    const bool have_color = r != ply.vertex.end() && g != ply.vertex.end() && b != ply.vertex.end();
    bool byte_color       = false;
    if (have_color) {
        for (const auto &e : ply.elements)
            if (e.name == "vertex")
                for (const auto &p : e.props)
                    if (p.name == "red")
                        byte_color = p.type == PlyType::UInt8;
    }
    const double scale = byte_color ? 1.0 / 255.0 : 1.0;
    for (std::size_t i = 0; i < ply.vertex_count; ++i) {
        pts.positions.emplace_back(static_cast<float>(x[i]), static_cast<float>(y[i]), static_cast<float>(z[i]));
        if (have_color)
            pts.colors.emplace_back(static_cast<float>(r->second[i] * scale), static_cast<float>(g->second[i] * scale),
                                    static_cast<float>(b->second[i] * scale));
        else
            pts.colors.emplace_back(0.5f, 0.5f, 0.5f);
    }
    return pts;
}

void write_points_ply(const fs::path &path, const PointCloud &points) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot create PLY '" + path.string() + "'");
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    binio::Writer w(out);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (int c = 0; c < 3; ++c)
            w.f32(points.positions[i][c]);
        for (int c = 0; c < 3; ++c)
            w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(points.colors[i][c], 0.0f, 1.0f) * 255.0f)));
    }
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

} // namespace soit
