#pragma once

// Closed triangulated body surfaces.  Normals follow the convention of the
// exterior-flow formulation: the stored unit normal points out of the fluid,
// i.e. INTO the body.  Every boundary integral in the library inherits this
// orientation.

#include "vbflow/core.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace vbflow {

struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;  // wound so vertex cross product points out of the body

    // derived per-panel data
    std::vector<Vec3> centroid;
    std::vector<Vec3> normal;  // unit, into the body; analytic when the mesh has a generator
    std::vector<double> area;

    // analytic generator (ellipsoid family), when the mesh was built rather
    // than imported; lets boundary quadratures use exact surface normals
    bool has_generator = false;
    Vec3 generator_semiaxes = Vec3::Ones();

    /// Into-body normal at a surface point: analytic when generated.
    Vec3 normal_at(const Vec3& y, int panel) const;

    double total_area = 0.0;
    double max_panel_diameter = 0.0;

    int panel_count() const { return static_cast<int>(triangles.size()); }

    Vec3 vertex(int tri, int corner) const { return vertices[triangles[tri][corner]]; }

    /// Enclosed volume by the divergence theorem (normals point into the body).
    double enclosed_volume() const {
        double v = 0.0;
        for (int k = 0; k < panel_count(); ++k)
            v -= centroid[k].dot(normal[k]) * area[k] / 3.0;
        return v;
    }

    /// Sum of oriented panel areas; zero for a closed surface.
    Vec3 area_vector() const {
        Vec3 s = Vec3::Zero();
        for (int k = 0; k < panel_count(); ++k) s += normal[k] * area[k];
        return s;
    }
};

namespace detail {

// Analytic into-body normal of the ellipsoid family at (the level set through) y.
inline Vec3 ellipsoid_inward_normal(const Vec3& semiaxes, const Vec3& y) {
    const Vec3 grad = y.cwiseQuotient(semiaxes.cwiseProduct(semiaxes));
    return -grad.normalized();
}

}  // namespace detail

inline Vec3 SurfaceMesh::normal_at(const Vec3& y, int panel) const {
    if (has_generator) return detail::ellipsoid_inward_normal(generator_semiaxes, y);
    return normal[panel];
}

namespace detail {

// When `semiaxes` is non-null the per-panel normals are the analytic surface
// normals of the generating ellipsoid evaluated at the centroids; generated
// meshes are centrally symmetric, so the closed-surface closure identity
// still holds to roundoff.
inline void finalize_mesh(SurfaceMesh& mesh, const Vec3* semiaxes = nullptr) {
    mesh.has_generator = semiaxes != nullptr;
    if (semiaxes) mesh.generator_semiaxes = *semiaxes;
    const int n = mesh.panel_count();
    mesh.centroid.resize(n);
    mesh.normal.resize(n);
    mesh.area.resize(n);
    mesh.total_area = 0.0;
    mesh.max_panel_diameter = 0.0;

    // validate closedness: every directed edge must appear exactly once,
    // matched by its reverse
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            auto key = std::make_pair(t[e], t[(e + 1) % 3]);
            if (++edges[key] > 1)
                throw std::invalid_argument("SurfaceMesh: duplicated directed edge (not orientable)");
        }
    for (const auto& [key, cnt] : edges)
        if (!edges.count({key.second, key.first}))
            throw std::invalid_argument("SurfaceMesh: open boundary edge (surface not closed)");

    for (int k = 0; k < n; ++k) {
        const Vec3 a = mesh.vertex(k, 0), b = mesh.vertex(k, 1), c = mesh.vertex(k, 2);
        const Vec3 cross = (b - a).cross(c - a);
        const double twice_area = cross.norm();
        if (twice_area <= 0.0)
            throw std::invalid_argument("SurfaceMesh: degenerate panel");
        mesh.area[k] = 0.5 * twice_area;
        mesh.centroid[k] = (a + b + c) / 3.0;
        mesh.normal[k] = semiaxes ? ellipsoid_inward_normal(*semiaxes, mesh.centroid[k])
                                  : Vec3(-cross / twice_area);  // winding is outward; store into-body
        mesh.total_area += mesh.area[k];
        const double diam = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
        mesh.max_panel_diameter = std::max(mesh.max_panel_diameter, diam);
    }
}

// unit icosahedron vertices/faces, outward winding
inline void icosahedron(std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& faces) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const double s = 1.0 / std::sqrt(1.0 + phi * phi);
    const double a = s, b = phi * s;
    verts = {{-a, b, 0}, {a, b, 0}, {-a, -b, 0}, {a, -b, 0},
             {0, -a, b}, {0, a, b}, {0, -a, -b}, {0, a, -b},
             {b, 0, -a}, {b, 0, a}, {-b, 0, -a}, {-b, 0, a}};
    faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
             {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
             {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
}

}  // namespace detail

/// Icosphere with 20 * 4^refinement panels, vertices at exact radius.
inline SurfaceMesh build_sphere_mesh(double radius, int refinement) {
    if (radius <= 0.0) throw std::invalid_argument("build_sphere_mesh: radius must be positive");
    if (refinement < 0) throw std::invalid_argument("build_sphere_mesh: refinement must be >= 0");
    if (refinement > 7) throw std::invalid_argument("build_sphere_mesh: refinement > 7 exceeds the panel-count cap");

    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    detail::icosahedron(verts, faces);

    for (int level = 0; level < refinement; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int i, int j) {
            auto key = std::minmax(i, j);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = (verts[i] + verts[j]).normalized();
            verts.push_back(m);
            int idx = static_cast<int>(verts.size()) - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    SurfaceMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const auto& v : verts) mesh.vertices.push_back(radius * v);
    mesh.triangles = std::move(faces);
    const Vec3 axes = Vec3::Constant(radius);
    detail::finalize_mesh(mesh, &axes);
    return mesh;
}

/// Icosphere mapped by per-axis scaling; panel data recomputed on the mapped surface.
inline SurfaceMesh build_ellipsoid_mesh(const Vec3& semiaxes, int refinement) {
    if (semiaxes.minCoeff() <= 0.0)
        throw std::invalid_argument("build_ellipsoid_mesh: semiaxes must be positive");
    SurfaceMesh mesh = build_sphere_mesh(1.0, refinement);
    for (auto& v : mesh.vertices) v = v.cwiseProduct(semiaxes);
    detail::finalize_mesh(mesh, &semiaxes);
    return mesh;
}

/// Minimal OFF export (vertex count, face count, coordinates, index triples).
inline void write_off(const SurfaceMesh& mesh, std::ostream& out) {
    out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.triangles.size() << " 0\n";
    char buf[96];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& t : mesh.triangles)
        out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline void write_off(const SurfaceMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_off: cannot open " + path);
    write_off(mesh, out);
}

inline SurfaceMesh read_off(std::istream& in) {
    std::string tag;
    in >> tag;
    if (tag != "OFF") throw std::invalid_argument("read_off: missing OFF header");
    std::size_t nv = 0, nf = 0, ne = 0;
    in >> nv >> nf >> ne;
    SurfaceMesh mesh;
    mesh.vertices.resize(nv);
    for (auto& v : mesh.vertices) in >> v.x() >> v.y() >> v.z();
    mesh.triangles.resize(nf);
    for (auto& t : mesh.triangles) {
        int k = 0;
        in >> k;
        if (k != 3) throw std::invalid_argument("read_off: only triangle faces are supported");
        in >> t[0] >> t[1] >> t[2];
    }
    if (!in) throw std::invalid_argument("read_off: truncated file");
    detail::finalize_mesh(mesh);
    return mesh;
}

inline SurfaceMesh read_off(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_off: cannot open " + path);
    return read_off(in);
}

}  // namespace vbflow
