#include "amopt/resnet.hpp"

#include <cstring>
#include <fstream>
#include <random>

namespace amopt {

namespace {

// Uniform in [0, 1] from the top 53 bits; keeps initialization bit-stable
// across standard library implementations.
double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740991.0);
}

void fill_glorot(double* data, long count, int fan_in, int fan_out,
                 std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (long i = 0; i < count; ++i)
        data[i] = limit * (2.0 * unit_uniform(rng) - 1.0);
}

}  // namespace

ResNetParams init_params(int blocks, int layers, int width, int d_in,
                         std::uint64_t seed) {
    if (blocks < 1 || layers < 1 || width < 1 || d_in < 1)
        throw ValidationError("init_params: dimensions must be positive");
    ResNetParams p;
    p.dims = NetDims{blocks, layers, width, d_in};
    p.theta = VectorXd::Zero(p.dims.param_count());
    std::mt19937_64 rng(seed);
    fill_glorot(p.theta.data() + p.w_in_off(), static_cast<long>(width) * d_in,
                d_in, width, rng);
    for (int m = 0; m < blocks; ++m)
        for (int l = 0; l < layers; ++l)
            fill_glorot(p.theta.data() + p.hidden_off(m, l),
                        static_cast<long>(width) * width, width, width, rng);
    fill_glorot(p.theta.data() + p.w_out_off(), width, width, 1, rng);
    return p;
}

double forward(const ResNetParams& params, const VectorXd& x) {
    const auto& d = params.dims;
    if (x.size() != d.d_in)
        throw ValidationError("forward: input size mismatch");
    if (!x.allFinite()) throw ValidationError("forward: non-finite input");
    VectorXd h = (params.w_in() * x + params.b_in()).array().tanh();
    VectorXd pre;
    for (int m = 0; m < d.blocks; ++m) {
        VectorXd skip = h;
        for (int l = 0; l < d.layers; ++l) {
            pre = params.w_hidden(m, l) * h + params.b_hidden(m, l);
            if (l + 1 < d.layers)
                h = pre.array().tanh();
            else
                h = pre + skip;
        }
    }
    return params.w_out() * h + params.b_out();
}

void NetBatch::configure(const NetDims& dims, const JetBatchLayout& layout) {
    dims_ = dims;
    layout_ = layout;
    const int cols = layout.cols();
    x0_.resize(dims.d_in, cols);
    pre_in_.resize(dims.width, cols);
    act_in_.resize(dims.width, cols);
    pre_.assign(static_cast<size_t>(dims.blocks) * dims.layers,
                MatrixXd(dims.width, cols));
    act_.assign(static_cast<size_t>(dims.blocks) *
                    std::max(dims.layers - 1, 0),
                MatrixXd(dims.width, cols));
    block_out_.assign(dims.blocks, MatrixXd(dims.width, cols));
    out_.resize(1, cols);
    bar_a_.resize(dims.width, cols);
    bar_b_.resize(dims.width, cols);
    bar_skip_.resize(dims.width, cols);
    fp_.resize(dims.width, layout.points);
    tmp_.resize(dims.width, layout.points);
    fppp_.resize(dims.width, layout.points);
    acc_.resize(dims.width, layout.points);
}

void NetBatch::tanh_forward(const MatrixXd& pre, MatrixXd& act) {
    const int p = layout_.points;
    act.middleCols(0, p) = pre.middleCols(0, p).array().tanh();
    if (!layout_.full) return;
    const int n = layout_.n_spatial;
    fp_ = 1.0 - act.middleCols(0, p).array().square();
    for (int c = 1; c < 2 + n; ++c)
        act.middleCols(c * p, p) =
            fp_.array() * pre.middleCols(c * p, p).array();
    // fpp = -2 f f'
    tmp_ = -2.0 * act.middleCols(0, p).array() * fp_.array();
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const int c = layout_.ch_dss(i, j);
            act.middleCols(c * p, p) =
                fp_.array() * pre.middleCols(c * p, p).array() +
                tmp_.array() * pre.middleCols(layout_.ch_ds(i) * p, p).array() *
                    pre.middleCols(layout_.ch_ds(j) * p, p).array();
        }
}

void NetBatch::tanh_backward(const MatrixXd& pre, const MatrixXd& act,
                             const MatrixXd& act_bar, MatrixXd& pre_bar) {
    const int p = layout_.points;
    auto f = act.middleCols(0, p).array();
    fp_ = 1.0 - f.square();
    if (!layout_.full) {
        pre_bar.middleCols(0, p) = fp_.array() * act_bar.middleCols(0, p).array();
        return;
    }
    const int n = layout_.n_spatial;
    // fpp = -2 f f', fppp = f' (4 f^2 - 2 f')
    tmp_ = -2.0 * f * fp_.array();
    fppp_ = fp_.array() * (4.0 * f.square() - 2.0 * fp_.array());

    // value channel: direct term + sensitivity of every other channel to v
    acc_ = fp_.array() * act_bar.middleCols(0, p).array();
    for (int c = 1; c < layout_.channels(); ++c)
        acc_.array() += tmp_.array() * pre.middleCols(c * p, p).array() *
                        act_bar.middleCols(c * p, p).array();
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const int c = layout_.ch_dss(i, j);
            acc_.array() += fppp_.array() *
                            pre.middleCols(layout_.ch_ds(i) * p, p).array() *
                            pre.middleCols(layout_.ch_ds(j) * p, p).array() *
                            act_bar.middleCols(c * p, p).array();
        }
    pre_bar.middleCols(0, p) = acc_;

    pre_bar.middleCols(p, p) =
        fp_.array() * act_bar.middleCols(p, p).array();  // dt channel

    for (int i = 0; i < n; ++i) {
        acc_ = fp_.array() * act_bar.middleCols(layout_.ch_ds(i) * p, p).array();
        for (int j = 0; j < n; ++j) {
            const int c = layout_.ch_dss(i, j);
            const double mult = (i == j) ? 2.0 : 1.0;
            acc_.array() += mult * tmp_.array() *
                            pre.middleCols(layout_.ch_ds(j) * p, p).array() *
                            act_bar.middleCols(c * p, p).array();
        }
        pre_bar.middleCols(layout_.ch_ds(i) * p, p) = acc_;
    }
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const int c = layout_.ch_dss(i, j);
            pre_bar.middleCols(c * p, p) =
                fp_.array() * act_bar.middleCols(c * p, p).array();
        }
}

void NetBatch::forward(const ResNetParams& params, const MatrixXd& x0) {
    const auto& d = dims_;
    const int p = layout_.points;
    x0_ = x0;
    pre_in_.noalias() = params.w_in() * x0_;
    pre_in_.middleCols(0, p).colwise() += params.b_in();
    tanh_forward(pre_in_, act_in_);
    const MatrixXd* h = &act_in_;
    for (int m = 0; m < d.blocks; ++m) {
        const MatrixXd* skip = h;
        for (int l = 0; l < d.layers; ++l) {
            MatrixXd& pre = pre_[m * d.layers + l];
            pre.noalias() = params.w_hidden(m, l) * (*h);
            pre.middleCols(0, p).colwise() += params.b_hidden(m, l);
            if (l + 1 < d.layers) {
                MatrixXd& act = act_[m * (d.layers - 1) + l];
                tanh_forward(pre, act);
                h = &act;
            } else {
                block_out_[m] = pre + *skip;
                h = &block_out_[m];
            }
        }
    }
    out_.noalias() = params.w_out() * (*h);
    out_.middleCols(0, p).array() += params.b_out();
}

void NetBatch::backward(const ResNetParams& params, const MatrixXd& out_bar,
                        VectorXd& grad) {
    const auto& d = dims_;
    const int p = layout_.points;
    auto grad_w = [&](long off, int rows, int cols) {
        return Eigen::Map<MatrixXd>(grad.data() + off, rows, cols);
    };

    // output affine
    grad_w(params.w_out_off(), 1, d.width).noalias() +=
        out_bar * block_out_[d.blocks - 1].transpose();
    grad[params.b_out_off()] += out_bar.middleCols(0, p).sum();
    // bar_a_ carries the flowing adjoint; bar_b_ is the transform spare
    bar_a_.noalias() = params.w_out().transpose() * out_bar;

    for (int m = d.blocks - 1; m >= 0; --m) {
        bar_skip_ = bar_a_;  // adjoint of block_out[m], reused by the skip
        for (int l = d.layers - 1; l >= 0; --l) {
            const MatrixXd& input =
                (l == 0) ? (m == 0 ? act_in_ : block_out_[m - 1])
                         : act_[m * (d.layers - 1) + l - 1];
            grad_w(params.hidden_off(m, l), d.width, d.width).noalias() +=
                bar_a_ * input.transpose();
            Eigen::Map<VectorXd>(grad.data() + params.hidden_off(m, l) +
                                     static_cast<long>(d.width) * d.width,
                                 d.width) +=
                bar_a_.middleCols(0, p).rowwise().sum();
            bar_b_.noalias() = params.w_hidden(m, l).transpose() * bar_a_;
            if (l > 0) {
                tanh_backward(pre_[m * d.layers + l - 1],
                              act_[m * (d.layers - 1) + l - 1], bar_b_, bar_a_);
            } else {
                bar_a_ = bar_b_ + bar_skip_;  // skip connection
            }
        }
    }

    tanh_backward(pre_in_, act_in_, bar_a_, bar_b_);
    grad_w(params.w_in_off(), d.width, d.d_in).noalias() +=
        bar_b_ * x0_.transpose();
    Eigen::Map<VectorXd>(grad.data() + params.b_in_off(), d.width) +=
        bar_b_.middleCols(0, p).rowwise().sum();
}

Jet NetBatch::output_jet(int p) const {
    const int np = layout_.points;
    Jet u(out_(0, p), layout_.n_spatial);
    if (!layout_.full) return u;
    u.dt = out_(0, np + p);
    for (int i = 0; i < layout_.n_spatial; ++i)
        u.ds[i] = out_(0, layout_.ch_ds(i) * np + p);
    int k = 0;
    for (int i = 0; i < layout_.n_spatial; ++i)
        for (int j = i; j < layout_.n_spatial; ++j, ++k)
            u.dss[k] = out_(0, layout_.ch_dss(i, j) * np + p);
    return u;
}

MatrixXd make_input_jets(const MatrixXd& s_points, const VectorXd& t_points,
                         const JetBatchLayout& layout, double strike,
                         bool normalize) {
    const int n = layout.n_spatial;
    const int p = layout.points;
    const double scale = normalize ? 1.0 / strike : 1.0;
    MatrixXd x0 = MatrixXd::Zero(n + 1, layout.cols());
    x0.block(0, 0, n, p) = scale * s_points;
    x0.block(n, 0, 1, p) = t_points.transpose();
    if (layout.full) {
        x0.block(n, p, 1, p).setOnes();  // dt seed
        for (int i = 0; i < n; ++i)
            x0.block(i, layout.ch_ds(i) * p, 1, p).setConstant(scale);
    }
    return x0;
}

Jet trial_eval(const ResNetParams& params, const TerminalPair& pair,
               bool normalize, const VectorXd& s, double t, bool pinn_raw) {
    const int n = pair.contract.n_assets;
    if (params.dims.d_in != n + 1)
        throw ValidationError("trial_eval: network input dimension mismatch");
    if (t > pair.contract.maturity + 1e-12)
        throw ValidationError("trial_eval: t beyond maturity");
    JetBatchLayout layout{n, 1, true};
    NetBatch nb;
    nb.configure(params.dims, layout);
    VectorXd tvec(1);
    tvec << t;
    nb.forward(params,
               make_input_jets(s, tvec, layout, pair.contract.strike, normalize));
    Jet u = nb.output_jet(0);
    if (pinn_raw) return u;

    std::array<Jet, Jet::kMaxAssets> sj;
    for (int i = 0; i < n; ++i) sj[i] = Jet::spatial(s[i], i, n);
    const Jet tj = Jet::time(t, n);
    const Jet g1 = g1_eval(pair, tj);
    const Jet g2 = g2_eval(pair, sj.data(), n, tj);
    return g1 * u + g2;
}

VectorXd trial_values(const ResNetParams& params, const TerminalPair& pair,
                      bool normalize, const MatrixXd& s_points,
                      const VectorXd& t_points, bool pinn_raw) {
    const int n = pair.contract.n_assets;
    const int p = static_cast<int>(t_points.size());
    JetBatchLayout layout{n, p, false};
    NetBatch nb;
    nb.configure(params.dims, layout);
    nb.forward(params, make_input_jets(s_points, t_points, layout,
                                       pair.contract.strike, normalize));
    VectorXd v = nb.output().row(0).transpose();
    if (pinn_raw) return v;
    for (int i = 0; i < p; ++i) {
        std::array<double, Jet::kMaxAssets> s{};
        for (int a = 0; a < n; ++a) s[a] = s_points(a, i);
        const double t = t_points[i];
        const double g1 = g1_eval<double>(pair, t);
        const double g2 = g2_eval<double>(pair, s.data(), n, t);
        v[i] = g1 * v[i] + g2;
    }
    return v;
}

double trial_terminal_residual(const ResNetParams& params,
                               const TerminalPair& pair, bool normalize,
                               const MatrixXd& s_samples, bool pinn_raw) {
    const int p = static_cast<int>(s_samples.cols());
    const VectorXd t_term =
        VectorXd::Constant(p, pair.contract.maturity);
    VectorXd v =
        trial_values(params, pair, normalize, s_samples, t_term, pinn_raw);
    double worst = 0.0;
    for (int i = 0; i < p; ++i) {
        const double phi = payoff_eval(pair.contract, s_samples.col(i));
        worst = std::max(worst, std::abs(v[i] - phi));
    }
    return worst;
}

namespace {
constexpr char kMagic[8] = {'A', 'M', 'O', 'P', 'T', 'C', 'K', '1'};
}

void save_checkpoint(const std::string& path, const ResNetParams& params,
                     const nlohmann::json& meta) {
    nlohmann::json full = meta;
    full["net"] = {{"blocks", params.dims.blocks},
                   {"layers", params.dims.layers},
                   {"width", params.dims.width},
                   {"d_in", params.dims.d_in}};
    const std::string meta_str = full.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t meta_len = meta_str.size();
    out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_len));
    const std::uint64_t count = params.theta.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(params.theta.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw CheckpointError("short write on checkpoint: " + path);
}

std::pair<ResNetParams, nlohmann::json> load_checkpoint(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("corrupt checkpoint (bad magic): " + path);
    std::uint64_t meta_len = 0;
    in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
    if (!in || meta_len > (1ull << 24))
        throw CheckpointError("corrupt checkpoint (bad meta length): " + path);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw CheckpointError("corrupt checkpoint (truncated meta): " + path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const std::exception& e) {
        throw CheckpointError("corrupt checkpoint (meta parse): " +
                              std::string(e.what()));
    }
    if (!meta.contains("net"))
        throw CheckpointError("corrupt checkpoint (missing net dims)");
    ResNetParams p;
    p.dims.blocks = meta["net"]["blocks"].get<int>();
    p.dims.layers = meta["net"]["layers"].get<int>();
    p.dims.width = meta["net"]["width"].get<int>();
    p.dims.d_in = meta["net"]["d_in"].get<int>();
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count != static_cast<std::uint64_t>(p.dims.param_count()))
        throw CheckpointError("corrupt checkpoint (parameter count mismatch)");
    p.theta.resize(static_cast<Eigen::Index>(count));
    in.read(reinterpret_cast<char*>(p.theta.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw CheckpointError("corrupt checkpoint (truncated weights)");
    if (!p.theta.allFinite())
        throw CheckpointError("corrupt checkpoint (non-finite weights)");
    return {std::move(p), std::move(meta)};
}

}  // namespace amopt
