#include "angio/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

namespace angio {

void TubeMesh::validate_counts() const {
    const size_t v = size_t(rings) * slots;
    const size_t e = size_t(rings) * slots + size_t(rings - 1) * slots;
    const size_t q = size_t(rings - 1) * slots;
    if (size_t(vertices.rows()) != v || edges.size() != e || quad_faces.size() != q ||
        tri_faces.size() != 2 * q)
        throw NumericalError("TubeMesh: inconsistent structural counts");
}

TubeMesh make_tube_topology(int rings, int slots, MatX vertices) {
    if (rings < 2 || slots < 3)
        throw InvalidInput("make_tube_topology: need rings >= 2 and slots >= 3");
    if (vertices.rows() != long(rings) * slots || vertices.cols() != 3)
        throw InvalidInput("make_tube_topology: vertex matrix shape mismatch");

    TubeMesh m;
    m.rings = rings;
    m.slots = slots;
    m.vertices = std::move(vertices);

    m.edges.reserve(size_t(rings) * slots + size_t(rings - 1) * slots);
    for (int i = 0; i < rings; ++i)
        for (int j = 0; j < slots; ++j)
            m.edges.push_back({m.vid(i, j), m.vid(i, (j + 1) % slots)});
    for (int i = 0; i + 1 < rings; ++i)
        for (int j = 0; j < slots; ++j)
            m.edges.push_back({m.vid(i, j), m.vid(i + 1, j)});

    m.quad_faces.reserve(size_t(rings - 1) * slots);
    m.tri_faces.reserve(2 * size_t(rings - 1) * slots);
    for (int i = 0; i + 1 < rings; ++i) {
        for (int j = 0; j < slots; ++j) {
            const int a = m.vid(i, j);
            const int b = m.vid(i, (j + 1) % slots);
            const int c = m.vid(i + 1, (j + 1) % slots);
            const int d = m.vid(i + 1, j);
            m.quad_faces.push_back({a, b, c, d});
            const double diag_ac = (m.vertices.row(a) - m.vertices.row(c)).squaredNorm();
            const double diag_bd = (m.vertices.row(b) - m.vertices.row(d)).squaredNorm();
            if (diag_ac <= diag_bd) {
                m.tri_faces.push_back({a, b, c});
                m.tri_faces.push_back({a, c, d});
            } else {
                m.tri_faces.push_back({a, b, d});
                m.tri_faces.push_back({b, c, d});
            }
        }
    }
    return m;
}

TriMesh to_tri_mesh(const TubeMesh& m) {
    TriMesh t;
    t.vertices = m.vertices;
    t.faces = m.tri_faces;
    return t;
}

double mesh_volume(const TriMesh& m) {
    double vol = 0.0;
    for (const auto& f : m.faces) {
        const Vec3 a = m.vertices.row(f[0]);
        const Vec3 b = m.vertices.row(f[1]);
        const Vec3 c = m.vertices.row(f[2]);
        vol += a.dot(b.cross(c));
    }
    return vol / 6.0;
}

EdgeUseStats edge_use_stats(const TriMesh& m) {
    std::map<std::pair<int, int>, int> uses;
    for (const auto& f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++uses[{a, b}];
        }
    }
    EdgeUseStats s;
    s.total_edges = uses.size();
    for (const auto& [e, n] : uses) {
        if (n == 1) ++s.boundary_edges;
        if (n > 2) ++s.nonmanifold_edges;
    }
    return s;
}

int connected_component_count(const TriMesh& m) {
    const int n = int(m.vertices.rows());
    std::vector<int> parent(n);
    for (int i = 0; i < n; ++i) parent[i] = i;
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& f : m.faces) {
        parent[find(f[0])] = find(f[1]);
        parent[find(f[1])] = find(f[2]);
    }
    int comps = 0;
    std::vector<uint8_t> used(n, 0);
    for (const auto& f : m.faces)
        for (int v : f) used[v] = 1;
    for (int i = 0; i < n; ++i)
        if (used[i] && find(i) == i) ++comps;
    return comps;
}

long euler_characteristic(const TriMesh& m) {
    std::vector<uint8_t> used(m.vertices.rows(), 0);
    for (const auto& f : m.faces)
        for (int v : f) used[v] = 1;
    long nv = 0;
    for (uint8_t u : used) nv += u;
    return nv - long(edge_use_stats(m).total_edges) + long(m.faces.size());
}

namespace {

void write_vertices(std::FILE* f, const MatX& v) {
    for (long i = 0; i < v.rows(); ++i)
        std::fprintf(f, "v %.17g %.17g %.17g\n", v(i, 0), v(i, 1), v(i, 2));
}

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

} // namespace

void write_obj(const TubeMesh& m, const std::string& path, bool triangulated) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw InvalidInput("cannot write obj: " + path);
    write_vertices(f.get(), m.vertices);
    if (triangulated) {
        for (const auto& t : m.tri_faces)
            std::fprintf(f.get(), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    } else {
        for (const auto& q : m.quad_faces)
            std::fprintf(f.get(), "f %d %d %d %d\n", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
    }
}

void write_obj(const TriMesh& m, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw InvalidInput("cannot write obj: " + path);
    write_vertices(f.get(), m.vertices);
    for (const auto& t : m.faces)
        std::fprintf(f.get(), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
}

TriMesh read_obj(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot read obj: " + path);
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    while (std::getline(f, line)) {
        if (line.size() < 2) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 p;
            ss >> p.x() >> p.y() >> p.z();
            verts.push_back(p);
        } else if (tag == "f") {
            std::vector<int> ids;
            std::string tok;
            while (ss >> tok) {
                // accept "i", "i/..", "i//.."
                ids.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
            }
            for (size_t k = 2; k < ids.size(); ++k)
                faces.push_back({ids[0], ids[k - 1], ids[k]});
        }
    }
    TriMesh m;
    m.vertices.resize(long(verts.size()), 3);
    for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(long(i)) = verts[i];
    m.faces = std::move(faces);
    return m;
}

} // namespace angio
