#include "ddpc/datamat.hpp"

#include "ddpc/error.hpp"

#include <Eigen/SVD>

#include <atomic>
#include <string>

namespace ddpc {

namespace {

std::atomic<std::size_t> g_hankel_builds{0};

Vector singular_values(const Matrix& M)
{
    if (M.size() == 0) {
        return Vector();
    }
    Eigen::BDCSVD<Matrix> svd(M);
    return svd.singularValues();
}

Index rank_from_values(const Vector& s, double tol)
{
    if (s.size() == 0 || s(0) == 0.0) {
        return 0;
    }
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol * s(0)) {
            ++r;
        }
    }
    return r;
}

Matrix hankel_block(const Matrix& w, Index K)
{
    const Index q = w.rows();
    const Index L = w.cols() - K + 1;
    Matrix H(q * K, L);
    for (Index j = 0; j < L; ++j) {
        for (Index i = 0; i < K; ++i) {
            H.block(i * q, j, q, 1) = w.col(i + j);
        }
    }
    return H;
}

}  // namespace

Matrix interleave(const Trajectory& traj)
{
    require(traj.u.cols() == traj.y.cols(), "interleave: u and y lengths differ");
    Matrix w(traj.m() + traj.p(), traj.length());
    w.topRows(traj.m()) = traj.u;
    w.bottomRows(traj.p()) = traj.y;
    return w;
}

Matrix build_hankel(const Matrix& w, Index K)
{
    require(K >= 1, "build_hankel: depth must be positive");
    if (K > w.cols()) {
        throw InsufficientData("build_hankel: depth " + std::to_string(K) + " exceeds signal length " +
                               std::to_string(w.cols()));
    }
    ++g_hankel_builds;
    return hankel_block(w, K);
}

Matrix build_mosaic(const std::vector<Matrix>& episodes, Index K)
{
    require(!episodes.empty(), "build_mosaic: no episodes");
    require(K >= 1, "build_mosaic: depth must be positive");
    const Index q = episodes.front().rows();
    Index L = 0;
    for (const auto& ep : episodes) {
        require(ep.rows() == q, "build_mosaic: episodes have different widths");
        if (ep.cols() < K) {
            throw InsufficientData("build_mosaic: episode of length " + std::to_string(ep.cols()) +
                                   " is shorter than depth " + std::to_string(K));
        }
        L += ep.cols() - K + 1;
    }
    ++g_hankel_builds;
    Matrix H(q * K, L);
    Index col = 0;
    for (const auto& ep : episodes) {
        const Index l = ep.cols() - K + 1;
        H.middleCols(col, l) = hankel_block(ep, K);
        col += l;
    }
    return H;
}

std::size_t dense_hankel_builds()
{
    return g_hankel_builds.load();
}

Index numeric_rank(const Matrix& M, double tol)
{
    return rank_from_values(singular_values(M), tol);
}

bool pe_order(const Matrix& u, Index K, double tol)
{
    return pe_order(std::vector<Matrix>{u}, K, tol);
}

bool pe_order(const std::vector<Matrix>& u_episodes, Index K, double tol)
{
    const Matrix H = build_mosaic(u_episodes, K);
    return numeric_rank(H, tol) == H.rows();
}

Index min_data_length(Index m, Index K, Index n, Index z)
{
    require(m >= 1 && K >= 1 && n >= 1 && z >= 1, "min_data_length: arguments must be positive");
    if (z == 1) {
        return (m + 1) * (K + n) - 1;
    }
    return (m + z) * K + n - z;
}

std::vector<Index> BlockLayout::interleaved_rows() const
{
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(this->rows()));
    const Index qq = q();
    auto add = [&](Index first_step, Index steps, Index offset, Index width) {
        for (Index s = 0; s < steps; ++s) {
            for (Index c = 0; c < width; ++c) {
                rows.push_back((first_step + s) * qq + offset + c);
            }
        }
    };
    add(0, t_ini, 0, m);
    add(0, t_ini, m, p);
    add(t_ini, horizon, 0, m);
    add(t_ini, horizon, m, p);
    return rows;
}

Matrix to_stacked(const Matrix& interleaved, const BlockLayout& layout)
{
    require(interleaved.rows() == layout.rows(), "to_stacked: row count does not match the layout");
    const auto order = layout.interleaved_rows();
    Matrix out(interleaved.rows(), interleaved.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.row(static_cast<Index>(i)) = interleaved.row(order[i]);
    }
    return out;
}

DataBlocks partition(const std::vector<Trajectory>& trajectories, const HankelConfig& config, std::optional<Index> n,
                     double tol)
{
    require(!trajectories.empty(), "partition: no trajectories");
    require(config.t_ini >= 1 && config.horizon >= 1, "partition: T_ini and N must be positive");
    const Index m = trajectories.front().m();
    const Index p = trajectories.front().p();
    const Index K = config.depth();
    const Index z = static_cast<Index>(trajectories.size());
    Index total = 0;
    std::vector<Matrix> w_eps;
    std::vector<Matrix> u_eps;
    for (const auto& traj : trajectories) {
        require(traj.m() == m && traj.p() == p, "partition: trajectories have inconsistent widths");
        total += traj.length();
        w_eps.push_back(interleave(traj));
        u_eps.push_back(traj.u);
    }
    if (n) {
        const Index needed = min_data_length(m, K, *n, z);
        if (total < needed) {
            throw InsufficientData("partition: " + std::to_string(total) + " samples given, " +
                                   std::to_string(needed) + " required");
        }
    }
    DataBlocks blocks;
    blocks.layout = BlockLayout{m, p, config.t_ini, config.horizon};
    blocks.H = to_stacked(build_mosaic(w_eps, K), blocks.layout);
    blocks.episodes = z;
    blocks.samples = total;

    Index order = K + (n ? *n : 0);
    auto fits = [&](Index k) {
        Index cols = 0;
        for (const auto& u : u_eps) {
            if (u.cols() < k) {
                return false;
            }
            cols += u.cols() - k + 1;
        }
        return cols >= m * k;
    };
    if (!fits(order)) {
        order = K;
    }
    blocks.input_pe = fits(order) && pe_order(u_eps, order, tol);
    return blocks;
}

SvdReduction svd_reduce(const DataBlocks& blocks, std::optional<Index> r_a, const SvdOptions& options)
{
    Eigen::BDCSVD<Matrix> svd(blocks.H, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const Index full = rank_from_values(s, options.tol);
    const BlockLayout& lay = blocks.layout;
    const Index lower = options.n ? lay.m * lay.depth() + *options.n : 1;

    Index rank = 0;
    if (r_a) {
        rank = *r_a;
        if (rank < lower || rank > full) {
            throw ConfigError("svd_reduce: r_a=" + std::to_string(rank) + " outside [" + std::to_string(lower) + ", " +
                              std::to_string(full) + "]");
        }
    } else if (options.noise_std > 0.0 && s.size() > 1) {
        // largest gap ratio sigma_i / sigma_{i+1}, searched from the lower bound on
        double best = -1.0;
        rank = std::max<Index>(1, std::min(lower, s.size()));
        for (Index i = std::max<Index>(lower, 1); i < s.size(); ++i) {
            const double ratio = s(i) > 0.0 ? s(i - 1) / s(i) : kInf;
            if (ratio > best) {
                best = ratio;
                rank = i;
            }
            if (s(i) == 0.0) {
                break;
            }
        }
    } else {
        rank = full;
    }
    if (rank < 1) {
        throw InsufficientData("svd_reduce: Hankel matrix is numerically zero");
    }
    SvdReduction out;
    out.layout = lay;
    out.rank = rank;
    out.singular_values = s;
    out.H_reduced = svd.matrixU().leftCols(rank) * s.head(rank).asDiagonal();
    out.V = svd.matrixV().leftCols(rank);
    out.truncation_error = rank < s.size() ? s(rank) : 0.0;
    return out;
}

}  // namespace ddpc
