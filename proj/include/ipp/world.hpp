#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ipp/common.hpp"
#include "ipp/objective.hpp"

namespace ipp {

// Hidden ground-truth scalar grid. nz == 1 denotes a planar world.
struct WorldField {
    Idx3 dims = Idx3(2, 2, 1);
    Vec3 spacing = Vec3(1.0, 1.0, 1.0);
    std::vector<double> values;  // index ix + nx*(iy + ny*iz)

    bool planar() const { return dims.z() == 1; }
    Vec3 bounds_lo() const { return Vec3::Zero(); }
    Vec3 bounds_hi() const {
        return Vec3((dims.x() - 1) * spacing.x(), (dims.y() - 1) * spacing.y(),
                    (dims.z() - 1) * spacing.z());
    }

    double& at(int ix, int iy, int iz) {
        return values[ix + dims.x() * (iy + dims.y() * iz)];
    }
    double at(int ix, int iy, int iz) const {
        return values[ix + dims.x() * (iy + dims.y() * iz)];
    }

    void validate() const {
        if (dims.x() < 2 || dims.y() < 2 || dims.z() < 1)
            throw ConfigError("WorldField: need nx,ny >= 2 and nz >= 1");
        if (static_cast<int>(values.size()) != dims.x() * dims.y() * dims.z())
            throw ShapeError("WorldField: value count does not match dims");
        for (double v : values)
            if (!std::isfinite(v)) throw ConfigError("WorldField: non-finite grid value");
    }
};

// Trilinear interpolation of the grid (degenerates to bilinear when nz == 1).
inline double value_at(const WorldField& field, const Vec3& x) {
    const Vec3 lo = field.bounds_lo();
    const Vec3 hi = field.bounds_hi();
    const double eps = 1e-9;
    for (int a = 0; a < 3; ++a) {
        if (x[a] < lo[a] - eps || x[a] > hi[a] + eps)
            throw OutOfBounds("value_at: query outside field bounds");
    }
    double t[3];
    int i0[3];
    for (int a = 0; a < 3; ++a) {
        const int n = field.dims[a];
        double u = x[a] / field.spacing[a];
        u = std::min(std::max(u, 0.0), static_cast<double>(n - 1));
        i0[a] = std::min(static_cast<int>(std::floor(u)), std::max(n - 2, 0));
        t[a] = n == 1 ? 0.0 : u - i0[a];
    }
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const double w = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) *
                         (dz ? t[2] : 1.0 - t[2]);
        if (w == 0.0) continue;
        acc += w * field.at(std::min(i0[0] + dx, field.dims.x() - 1),
                            std::min(i0[1] + dy, field.dims.y() - 1),
                            std::min(i0[2] + dz, field.dims.z() - 1));
    }
    return acc;
}

struct RobotPose {
    Idx3 cell = Idx3::Zero();
    Vec3 position(const WorldField& field) const {
        return Vec3(cell.x() * field.spacing.x(), cell.y() * field.spacing.y(),
                    cell.z() * field.spacing.z());
    }
    bool operator==(const RobotPose& o) const { return cell == o.cell; }
};

// Canonical action order; planar worlds use only the first four.
enum class Move : int { XPos = 0, XNeg, YPos, YNeg, ZPos, ZNeg };

inline constexpr std::array<Move, 6> kAllMoves = {Move::XPos, Move::XNeg, Move::YPos,
                                                 Move::YNeg, Move::ZPos, Move::ZNeg};

inline Idx3 move_delta(Move m) {
    switch (m) {
        case Move::XPos: return Idx3(1, 0, 0);
        case Move::XNeg: return Idx3(-1, 0, 0);
        case Move::YPos: return Idx3(0, 1, 0);
        case Move::YNeg: return Idx3(0, -1, 0);
        case Move::ZPos: return Idx3(0, 0, 1);
        default: return Idx3(0, 0, -1);
    }
}

inline const char* move_name(Move m) {
    static constexpr const char* names[] = {"x+", "x-", "y+", "y-", "z+", "z-"};
    return names[static_cast<int>(m)];
}

inline int action_count(const WorldField& field) { return field.planar() ? 4 : 6; }

inline bool move_legal(const WorldField& field, const RobotPose& pose, Move m) {
    if (field.planar() && static_cast<int>(m) >= 4) return false;
    const Idx3 c = pose.cell + move_delta(m);
    return c.x() >= 0 && c.x() < field.dims.x() && c.y() >= 0 && c.y() < field.dims.y() &&
           c.z() >= 0 && c.z() < field.dims.z();
}

inline std::vector<Move> legal_actions(const WorldField& field, const RobotPose& pose) {
    std::vector<Move> out;
    for (int i = 0; i < action_count(field); ++i) {
        Move m = kAllMoves[i];
        if (move_legal(field, pose, m)) out.push_back(m);
    }
    return out;
}

inline RobotPose apply_action(const RobotPose& pose, Move m, const WorldField& field) {
    if (!move_legal(field, pose, m))
        throw IllegalMove(std::string("apply_action: illegal move ") + move_name(m));
    return RobotPose{pose.cell + move_delta(m)};
}

struct SensingConfig {
    int samples_per_edge = 4;  // k
};

// k points equally spaced along the travel segment, endpoint inclusive,
// start exclusive; a stationary transition senses the pose itself.
inline std::vector<Vec3> sense_path(const SensingConfig& cfg, const RobotPose& g_prev,
                                    const RobotPose& g_next, const WorldField& field) {
    const Vec3 a = g_prev.position(field);
    const Vec3 b = g_next.position(field);
    if (g_prev == g_next) return {a};
    std::vector<Vec3> out;
    out.reserve(cfg.samples_per_edge);
    for (int i = 1; i <= cfg.samples_per_edge; ++i) {
        const double f = static_cast<double>(i) / cfg.samples_per_edge;
        out.push_back(a + f * (b - a));
    }
    return out;
}

// Ground-truth measurements; noiseless unless a noise level and rng are given.
inline std::vector<Sample> observe(const WorldField& field, const std::vector<Vec3>& xs,
                                   double noise_std = 0.0, Rng* rng = nullptr) {
    std::vector<Sample> out;
    out.reserve(xs.size());
    for (const Vec3& x : xs) {
        double v = value_at(field, x);
        if (noise_std > 0.0 && rng) v += rng->normal(0.0, noise_std);
        out.emplace_back(x, v);
    }
    return out;
}

struct EpisodeConfig {
    int budget_steps = 50;  // B, the number of IPP iterations
    int seed_samples = 5;
    ObjectiveKind objective;
    std::uint64_t rng_seed = 0;
    double obs_noise_std = 0.0;
    SensingConfig sensing;

    void validate() const {
        if (budget_steps < 1) throw ConfigError("EpisodeConfig: budget_steps >= 1 required");
        if (seed_samples < 0) throw ConfigError("EpisodeConfig: seed_samples >= 0 required");
        if (sensing.samples_per_edge < 1)
            throw ConfigError("EpisodeConfig: samples_per_edge >= 1 required");
    }
};

// Axis-aligned Gaussian blobs on a seeded RNG; substitutes for field datasets.
struct SyntheticSpec {
    int min_blobs = 4;
    int max_blobs = 8;
    double min_amplitude = 0.5;
    double max_amplitude = 2.0;
    double min_width_frac = 0.08;  // blob sigma as a fraction of the longest axis
    double max_width_frac = 0.25;
};

inline WorldField make_synthetic_field(std::uint64_t seed, const SyntheticSpec& spec,
                                       const Idx3& dims, const Vec3& spacing) {
    WorldField field;
    field.dims = dims;
    field.spacing = spacing;
    field.values.assign(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), 0.0);
    field.validate();

    Rng rng(seed);
    const Vec3 hi = field.bounds_hi();
    const double extent = hi.maxCoeff();
    const int n_blobs = rng.uniform_int(spec.min_blobs, spec.max_blobs);
    for (int b = 0; b < n_blobs; ++b) {
        const Vec3 center(rng.uniform(0.0, hi.x()), rng.uniform(0.0, hi.y()),
                          hi.z() > 0 ? rng.uniform(0.0, hi.z()) : 0.0);
        const double width = rng.uniform(spec.min_width_frac, spec.max_width_frac) * extent;
        const double amp = rng.uniform(spec.min_amplitude, spec.max_amplitude);
        for (int iz = 0; iz < dims.z(); ++iz)
            for (int iy = 0; iy < dims.y(); ++iy)
                for (int ix = 0; ix < dims.x(); ++ix) {
                    const Vec3 p(ix * spacing.x(), iy * spacing.y(), iz * spacing.z());
                    field.at(ix, iy, iz) +=
                        amp * std::exp(-(p - center).squaredNorm() / (2.0 * width * width));
                }
    }
    return field;
}

// CSV grid format: header `nx,ny,nz,sx,sy,sz`, then nx*ny*nz lines
// `ix,iy,iz,value` in any order.
inline WorldField load_grid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_grid_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(tok);
        return out;
    };
    auto parse_num = [&](const std::string& tok, int line_no) -> double {
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used])))
                ++used;
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
        }
    };

    auto header = split(line);
    if (header.size() != 6) throw ParseError(path + ":1: header must be nx,ny,nz,sx,sy,sz");
    WorldField field;
    for (int a = 0; a < 3; ++a) field.dims[a] = static_cast<int>(parse_num(header[a], 1));
    for (int a = 0; a < 3; ++a) field.spacing[a] = parse_num(header[3 + a], 1);
    const std::size_t total =
        static_cast<std::size_t>(field.dims.x()) * field.dims.y() * field.dims.z();
    field.values.assign(total, 0.0);
    std::vector<char> seen(total, 0);

    int line_no = 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto toks = split(line);
        if (toks.size() != 4)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected ix,iy,iz,value");
        int idx[3];
        for (int a = 0; a < 3; ++a) {
            idx[a] = static_cast<int>(parse_num(toks[a], line_no));
            if (idx[a] < 0 || idx[a] >= field.dims[a])
                throw ParseError(path + ":" + std::to_string(line_no) + ": index out of range");
        }
        const std::size_t flat =
            idx[0] + static_cast<std::size_t>(field.dims.x()) * (idx[1] + field.dims.y() * idx[2]);
        field.values[flat] = parse_num(toks[3], line_no);
        if (!seen[flat]) {
            seen[flat] = 1;
            ++rows;
        }
    }
    if (rows != total)
        throw ShapeError(path + ": got " + std::to_string(rows) + " grid rows, expected " +
                         std::to_string(total));
    field.validate();
    return field;
}

inline void save_grid_csv(const WorldField& field, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_grid_csv: cannot open " + path);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%.17g\n", field.dims.x(),
                  field.dims.y(), field.dims.z(), field.spacing.x(), field.spacing.y(),
                  field.spacing.z());
    out << buf;
    for (int iz = 0; iz < field.dims.z(); ++iz)
        for (int iy = 0; iy < field.dims.y(); ++iy)
            for (int ix = 0; ix < field.dims.x(); ++ix) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g\n", ix, iy, iz,
                              field.at(ix, iy, iz));
                out << buf;
            }
    if (!out) throw IoError("save_grid_csv: write failed for " + path);
}

}  // namespace ipp
