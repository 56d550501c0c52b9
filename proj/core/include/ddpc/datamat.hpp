#pragma once

#include "ddpc/plant.hpp"
#include "ddpc/types.hpp"

#include <optional>
#include <vector>

namespace ddpc {

/// Stacks u over y per sample: column k of the result is w_k = (u_k, y_k).
Matrix interleave(const Trajectory& traj);

/// Depth-K Hankel matrix of the q x T signal w. Column j holds w_j, ..., w_{j+K-1}.
Matrix build_hankel(const Matrix& w, Index K);

/// Mosaic-Hankel matrix: per-episode Hankel blocks side by side.
Matrix build_mosaic(const std::vector<Matrix>& episodes, Index K);

/// Number of dense Hankel or mosaic matrices built by this process so far.
std::size_t dense_hankel_builds();

/// Count of singular values above tol * sigma_max.
Index numeric_rank(const Matrix& M, double tol = kDefaultRankTol);

/// True iff the depth-K (mosaic-)Hankel of the input has full row rank m K.
bool pe_order(const Matrix& u, Index K, double tol = kDefaultRankTol);
bool pe_order(const std::vector<Matrix>& u_episodes, Index K, double tol = kDefaultRankTol);

/// Samples needed for the Hankel representation of depth K: single episode or z episodes.
Index min_data_length(Index m, Index K, Index n, Index z = 1);

struct HankelConfig {
    Index t_ini = 1;
    Index horizon = 1;

    Index depth() const { return t_ini + horizon; }
};

/// Row offsets of the stacked layout (u past, y past, u future, y future).
struct BlockLayout {
    Index m = 1;
    Index p = 1;
    Index t_ini = 0;
    Index horizon = 1;

    Index q() const { return m + p; }
    Index depth() const { return t_ini + horizon; }
    Index rows() const { return q() * depth(); }

    Index u_past() const { return 0; }
    Index y_past() const { return m * t_ini; }
    Index u_future() const { return q() * t_ini; }
    Index y_future() const { return q() * t_ini + m * horizon; }

    Index past_rows() const { return q() * t_ini; }
    Index future_rows() const { return q() * horizon; }

    /// Interleaved row index (sample-major, u before y) of each stacked row.
    std::vector<Index> interleaved_rows() const;
};

/// Reorders a sample-major interleaved matrix (rows q K) into the stacked layout.
Matrix to_stacked(const Matrix& interleaved, const BlockLayout& layout);

struct DataBlocks {
    BlockLayout layout;
    Matrix H;  // stacked: U_P; Y_P; U_F; Y_F
    Index episodes = 1;
    Index samples = 0;
    bool input_pe = true;

    Index cols() const { return H.cols(); }
    auto U_P() const { return H.middleRows(layout.u_past(), layout.m * layout.t_ini); }
    auto Y_P() const { return H.middleRows(layout.y_past(), layout.p * layout.t_ini); }
    auto U_F() const { return H.middleRows(layout.u_future(), layout.m * layout.horizon); }
    auto Y_F() const { return H.middleRows(layout.y_future(), layout.p * layout.horizon); }
    auto past() const { return H.topRows(layout.past_rows()); }
};

/// Builds the stacked blocks. With n given the data-length bound is enforced and
/// the PE flag uses order K + n; otherwise order K is checked. PE failures only set the flag.
DataBlocks partition(const std::vector<Trajectory>& trajectories, const HankelConfig& config,
                     std::optional<Index> n = std::nullopt, double tol = kDefaultRankTol);

struct SvdOptions {
    double tol = kDefaultRankTol;
    double noise_std = 0.0;
    std::optional<Index> n;
};

struct SvdReduction {
    BlockLayout layout;
    Matrix H_reduced;        // U_r Sigma_r, stacked layout
    Matrix V;                // L x r_a
    Vector singular_values;  // all of them, descending
    Index rank = 0;
    double truncation_error = 0.0;  // sigma_{r_a + 1}
};

/// Truncated SVD of the stacked Hankel. r_a = nullopt selects the rank automatically.
SvdReduction svd_reduce(const DataBlocks& blocks, std::optional<Index> r_a, const SvdOptions& options = {});

}  // namespace ddpc
