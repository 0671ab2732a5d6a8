// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/io.hpp>

#include "binio.hpp"

#include <cstring>
#include <fstream>

namespace soit {

namespace {

constexpr char kStateMagic[8]     = {'S', 'O', 'I', 'T', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kStateVersion = 1;

void write_params(binio::Writer &w, const GaussianParams<float> &p) {
    for (Attr a : kAllAttrs)
        for (float v : p.field(a))
            w.f32(v);
    w.f32(p.log_sigma);
}

void read_params(binio::Reader &r, GaussianParams<float> &p, std::size_t n) {
    p.resize(n);
    for (Attr a : kAllAttrs)
        for (float &v : p.field(a))
            v = r.f32();
    p.log_sigma = r.f32();
}

} // namespace

void save_checkpoint(const fs::path &dir, const Checkpoint &ckpt) {
    const std::size_t n = ckpt.cloud.size();
    if (ckpt.adam.size() != n || ckpt.active.size() != n)
        throw ContractViolation("save_checkpoint: optimizer/active-set state does not match the cloud");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create checkpoint directory '" + dir.string() + "': " + ec.message());
    write_cloud_ply(dir / "scene.ply", ckpt.cloud);

    const fs::path path = dir / "state.bin";
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot create '" + path.string() + "'");
    out.write(kStateMagic, sizeof(kStateMagic));
    binio::Writer w(out);
    w.u32(kStateVersion);
    w.i64(ckpt.iteration);
    w.u64(n);
    write_params(w, ckpt.adam.m);
    write_params(w, ckpt.adam.v);
    for (std::int64_t s : ckpt.adam.steps)
        w.i64(s);
    w.i64(ckpt.adam.sigma_steps);
    w.i64(ckpt.active.stage);
    w.u8(ckpt.active.thresholds_set ? 1 : 0);
    for (double t : ckpt.active.thresholds)
        w.f64(t);
    for (std::uint8_t a : ckpt.active.active)
        w.u8(a);
    for (std::int64_t f : ckpt.active.frozen_stage)
        w.i64(f);
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const fs::path &dir) {
    Checkpoint ckpt;
    ckpt.cloud          = read_cloud_ply(dir / "scene.ply");
    const fs::path path = dir / "state.bin";
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0)
        throw IoError("'" + path.string() + "' is not a checkpoint state file");
    binio::Reader r(in, path);
    const std::uint32_t version = r.u32();
    if (version != kStateVersion)
        throw IoError("'" + path.string() + "': unsupported state version " + std::to_string(version));
    ckpt.iteration      = static_cast<int>(r.i64());
    const std::size_t n = r.u64();
    if (n != ckpt.cloud.size())
        throw IoError("'" + path.string() + "' describes " + std::to_string(n) + " Gaussians but scene.ply has " +
                      std::to_string(ckpt.cloud.size()));
    read_params(r, ckpt.adam.m, n);
    read_params(r, ckpt.adam.v, n);
    ckpt.adam.steps.resize(n);
    for (auto &s : ckpt.adam.steps)
        s = r.i64();
    ckpt.adam.sigma_steps = r.i64();
    ckpt.active.stage          = r.i64();
    ckpt.active.thresholds_set = r.u8() != 0;
    for (double &t : ckpt.active.thresholds)
        t = r.f64();
    ckpt.active.active.resize(n);
    for (auto &a : ckpt.active.active)
        a = r.u8();
    ckpt.active.frozen_stage.resize(n);
    for (auto &f : ckpt.active.frozen_stage)
        f = r.i64();
    return ckpt;
}

GaussianCloud<float> load_scene(const fs::path &path) {
    if (fs::is_directory(path))
        return read_cloud_ply(path / "scene.ply");
    return read_cloud_ply(path);
}

} // namespace soit
