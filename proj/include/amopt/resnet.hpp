#ifndef AMOPT_RESNET_HPP
#define AMOPT_RESNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "amopt/jet.hpp"
#include "amopt/terminal.hpp"
#include "amopt/types.hpp"

namespace amopt {

/// ResNet shape: M residual blocks of L fully connected layers, `width`
/// neurons each, tanh activations. Within a block the last affine output is
/// added to the block input without an activation in between; a single
/// affine layer maps the input to the first block and the last block to the
/// scalar output.
struct NetDims {
    int blocks = 4;
    int layers = 2;
    int width = 50;
    int d_in = 2;

    long param_count() const {
        const long w = width;
        return w * d_in + w + static_cast<long>(blocks) * layers * (w * w + w) +
               w + 1;
    }
};

/// All parameters live in one flat vector; the accessors expose the usual
/// matrix views (column-major storage, fixed offset order: W_in, b_in, then
/// per block/layer W and b, then W_out, b_out).
struct ResNetParams {
    NetDims dims;
    VectorXd theta;

    long w_in_off() const { return 0; }
    long b_in_off() const { return dims.width * dims.d_in; }
    long hidden_off(int m, int l) const {
        return b_in_off() + dims.width +
               static_cast<long>(m * dims.layers + l) *
                   (static_cast<long>(dims.width) * dims.width + dims.width);
    }
    long w_out_off() const { return hidden_off(dims.blocks, 0); }
    long b_out_off() const { return w_out_off() + dims.width; }

    Eigen::Map<const MatrixXd> w_in() const {
        return {theta.data() + w_in_off(), dims.width, dims.d_in};
    }
    Eigen::Map<const VectorXd> b_in() const {
        return {theta.data() + b_in_off(), dims.width};
    }
    Eigen::Map<const MatrixXd> w_hidden(int m, int l) const {
        return {theta.data() + hidden_off(m, l), dims.width, dims.width};
    }
    Eigen::Map<const VectorXd> b_hidden(int m, int l) const {
        return {theta.data() + hidden_off(m, l) +
                    static_cast<long>(dims.width) * dims.width,
                dims.width};
    }
    Eigen::Map<const RowVectorXd> w_out() const {
        return {theta.data() + w_out_off(), dims.width};
    }
    double b_out() const { return theta[b_out_off()]; }
};

/// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
/// deterministic in the seed.
ResNetParams init_params(int blocks, int layers, int width, int d_in,
                         std::uint64_t seed);

/// Plain scalar forward pass; the reference path the batched engine is
/// tested against.
double forward(const ResNetParams& params, const VectorXd& x);

/// Channel layout of a batched jet evaluation. Full jets carry
/// (value, d/dt, d/ds_i, d2/ds_i ds_j) as channel blocks of a
/// width x (points*channels) matrix; value_only carries just the value.
struct JetBatchLayout {
    int n_spatial = 1;
    int points = 0;
    bool full = true;

    int pairs() const { return n_spatial * (n_spatial + 1) / 2; }
    int channels() const { return full ? 2 + n_spatial + pairs() : 1; }
    int cols() const { return points * channels(); }
    // channel indices
    int ch_v() const { return 0; }
    int ch_dt() const { return 1; }
    int ch_ds(int i) const { return 2 + i; }
    int ch_dss(int i, int j) const {
        return 2 + n_spatial + Jet::pair_index(i, j, n_spatial);
    }
};

/// One batched forward/backward workspace. Holds every intermediate needed
/// by the reverse sweep; reusable across iterations at a fixed layout.
class NetBatch {
  public:
    void configure(const NetDims& dims, const JetBatchLayout& layout);

    /// x0 is d_in x cols() with the jet seeds already applied.
    void forward(const ResNetParams& params, const MatrixXd& x0);

    const MatrixXd& output() const { return out_; }

    /// Accumulates d(loss)/d(theta) into grad given the adjoint of the
    /// output matrix. forward() must have been called on the same params.
    void backward(const ResNetParams& params, const MatrixXd& out_bar,
                  VectorXd& grad);

    const JetBatchLayout& layout() const { return layout_; }

    /// Reads the jet of point p out of the output row.
    Jet output_jet(int p) const;

  private:
    void tanh_forward(const MatrixXd& pre, MatrixXd& act);
    void tanh_backward(const MatrixXd& pre, const MatrixXd& act,
                       const MatrixXd& act_bar, MatrixXd& pre_bar);

    NetDims dims_;
    JetBatchLayout layout_;
    MatrixXd x0_;
    MatrixXd pre_in_, act_in_;
    std::vector<MatrixXd> pre_;        // blocks*layers affine outputs
    std::vector<MatrixXd> act_;        // blocks*(layers-1) tanh outputs
    std::vector<MatrixXd> block_out_;  // skip-connected block outputs
    MatrixXd out_;
    // scratch for the reverse sweep (preallocated in configure)
    MatrixXd bar_a_, bar_b_, bar_skip_, fp_, tmp_, fppp_, acc_;
};

/// Builds the network-input matrix for a batch of points: row i < n holds
/// s_i (divided by strike when normalizing), the last row holds t; jet
/// seeds follow the chain rule of the normalization.
MatrixXd make_input_jets(const MatrixXd& s_points, const VectorXd& t_points,
                         const JetBatchLayout& layout, double strike,
                         bool normalize);

/// Trial-function jet at one point: g1 * u_NN + g2 (raw network when
/// pinn_raw). The jet is with respect to (s_1..s_n, t).
Jet trial_eval(const ResNetParams& params, const TerminalPair& pair,
               bool normalize, const VectorXd& s, double t,
               bool pinn_raw = false);

/// Value-only trial evaluation over a grid of points (fast path).
VectorXd trial_values(const ResNetParams& params, const TerminalPair& pair,
                      bool normalize, const MatrixXd& s_points,
                      const VectorXd& t_points, bool pinn_raw = false);

/// Max |g1(s,T) u + g2(s,T) - payoff| over sample columns; zero by
/// construction for any parameters.
double trial_terminal_residual(const ResNetParams& params,
                               const TerminalPair& pair, bool normalize,
                               const MatrixXd& s_samples, bool pinn_raw = false);

// Checkpoint container: magic, JSON meta, raw little-endian float64 weights.
void save_checkpoint(const std::string& path, const ResNetParams& params,
                     const nlohmann::json& meta);
std::pair<ResNetParams, nlohmann::json> load_checkpoint(
    const std::string& path);

}  // namespace amopt

#endif  // AMOPT_RESNET_HPP
