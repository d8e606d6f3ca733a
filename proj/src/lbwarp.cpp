#include "lvmesh/lbwarp.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace lvmesh {

namespace {

std::vector<std::vector<int>> adjacency(const TetMesh &mesh) {
    std::vector<std::vector<int>> adj(mesh.vertices.size());
    for (const auto &e : tet_edges(mesh)) {
        adj[std::size_t(e[0])].push_back(e[1]);
        adj[std::size_t(e[1])].push_back(e[0]);
    }
    return adj;
}

} // namespace

InteriorWeights compute_weights(const TetMesh &mesh) {
    const std::size_t nv = mesh.vertices.size();
    std::vector<char> boundary(nv, 0);
    for (int v : mesh.boundary_map) {
        require(v >= 0 && std::size_t(v) < nv, "compute_weights: boundary_map out of range");
        boundary[std::size_t(v)] = 1;
    }
    const auto adj = adjacency(mesh);
    InteriorWeights w;
    for (std::size_t v = 0; v < nv; ++v) {
        if (boundary[v]) continue;
        require(!adj[v].empty(), "compute_weights: interior vertex " + std::to_string(v) + " has no neighbours");
        std::vector<std::pair<int, double>> row;
        double sum = 0.0;
        for (int j : adj[v]) {
            const double d = (mesh.vertices[std::size_t(j)] - mesh.vertices[v]).norm();
            require(d > 0.0, "compute_weights: zero-length edge at vertex " + std::to_string(v));
            row.emplace_back(j, 1.0 / d);
            sum += 1.0 / d;
        }
        for (auto &e : row) e.second /= sum;
        w.interior.push_back(int(v));
        w.rows.push_back(std::move(row));
    }
    return w;
}

double identity_residual(const TetMesh &mesh, const InteriorWeights &w) {
    double worst = 0.0;
    for (std::size_t r = 0; r < w.interior.size(); ++r) {
        Vec3 s = Vec3::Zero();
        for (const auto &[j, wij] : w.rows[r]) s += wij * mesh.vertices[std::size_t(j)];
        worst = std::max(worst, (mesh.vertices[std::size_t(w.interior[r])] - s).norm());
    }
    return worst;
}

WarpResult warp(const TetMesh &mesh, const InteriorWeights &w, const SurfaceMesh &target, const WarpOptions &opts) {
    require(target.vertices.size() == mesh.boundary_map.size(),
            "warp: target surface has " + std::to_string(target.vertices.size()) + " vertices, mesh boundary has " +
                std::to_string(mesh.boundary_map.size()));
    require(w.interior.size() == w.rows.size(), "warp: malformed weights");
    const std::size_t nv = mesh.vertices.size();

    WarpResult res;
    res.mesh = mesh;
    res.mesh.frame_id = target.frame_id;
    std::vector<int> row_of(nv, -1);
    for (std::size_t r = 0; r < w.interior.size(); ++r) {
        const int v = w.interior[r];
        require(v >= 0 && std::size_t(v) < nv, "warp: weight row for a missing vertex");
        row_of[std::size_t(v)] = int(r);
    }
    for (std::size_t s = 0; s < mesh.boundary_map.size(); ++s) {
        const int v = mesh.boundary_map[s];
        require(row_of[std::size_t(v)] < 0, "warp: weights include boundary vertex " + std::to_string(v));
        res.mesh.vertices[std::size_t(v)] = target.vertices[s];
    }

    const int n = int(w.interior.size());
    res.solver = "none";
    if (n == 0) {
        res.quality = assess(res.mesh);
        return res;
    }

    // Every interior component needs a path to the boundary.
    {
        std::vector<char> reached(std::size_t(n), 0);
        std::vector<int> stack;
        for (int r = 0; r < n; ++r)
            for (const auto &e : w.rows[std::size_t(r)])
                if (row_of[std::size_t(e.first)] < 0) {
                    reached[std::size_t(r)] = 1;
                    stack.push_back(r);
                    break;
                }
        while (!stack.empty()) {
            const int r = stack.back();
            stack.pop_back();
            for (const auto &e : w.rows[std::size_t(r)]) {
                const int q = row_of[std::size_t(e.first)];
                if (q >= 0 && !reached[std::size_t(q)]) {
                    reached[std::size_t(q)] = 1;
                    stack.push_back(q);
                }
            }
        }
        require(std::all_of(reached.begin(), reached.end(), [](char c) { return c != 0; }),
                "warp: singular system, an interior component has no boundary contact");
    }

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
    for (int r = 0; r < n; ++r) {
        trip.emplace_back(r, r, 1.0);
        for (const auto &[j, wij] : w.rows[std::size_t(r)]) {
            const int q = row_of[std::size_t(j)];
            if (q >= 0)
                trip.emplace_back(r, q, -wij);
            else
                rhs.row(r) += wij * res.mesh.vertices[std::size_t(j)].transpose();
        }
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();

    Eigen::MatrixXd X(n, 3);
    auto rel_residual = [&](const Eigen::VectorXd &x, int c) {
        const double b = rhs.col(c).norm();
        return (A * x - rhs.col(c)).norm() / (b > 0.0 ? b : 1.0);
    };

    bool ok = true;
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>> it;
    it.setTolerance(opts.tolerance);
    it.setMaxIterations(opts.max_iterations);
    it.compute(A);
    for (int c = 0; c < 3 && ok; ++c) {
        X.col(c) = it.solve(rhs.col(c));
        res.iterations = std::max(res.iterations, int(it.iterations()));
        const double rr = rel_residual(X.col(c), c);
        res.residual = std::max(res.residual, rr);
        ok = it.info() == Eigen::Success && std::isfinite(rr) && rr <= opts.tolerance * 10.0;
    }
    res.solver = "bicgstab";
    if (!ok) {
        res.residual = 0.0;
        if (n < opts.dense_below) {
            const Eigen::MatrixXd dense = Eigen::MatrixXd(A);
            const Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
            X = lu.solve(rhs);
            res.solver = "dense-lu";
        } else {
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(A);
            require(lu.info() == Eigen::Success, "warp: sparse factorization failed");
            X = lu.solve(rhs);
            res.solver = "sparse-lu";
        }
        for (int c = 0; c < 3; ++c) res.residual = std::max(res.residual, rel_residual(X.col(c), c));
        require(std::isfinite(res.residual) && res.residual <= 1e-8, "warp: linear solve did not converge");
    }
    for (int r = 0; r < n; ++r) res.mesh.vertices[std::size_t(w.interior[std::size_t(r)])] = X.row(r).transpose();
    res.quality = assess(res.mesh);
    return res;
}

} // namespace lvmesh
