#include "episignal/core/error.hpp"
#include "episignal/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace episignal::forecast {

namespace {

using MapM = Eigen::Map<Matrix>;
using CMapM = Eigen::Map<const Matrix>;
using MapRow = Eigen::Map<RowVector>;
using CMapRow = Eigen::Map<const RowVector>;

constexpr double kLnEps = 1e-5;
const double kGeluC = std::sqrt(2.0 / std::numbers::pi);

struct LnCache {
    Matrix xhat;
    Vector rstd;
};

Matrix layer_norm(const Matrix& x, const CMapRow& g, const CMapRow& b, LnCache* cache) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Matrix y(n, d);
    if (cache) {
        cache->xhat.resize(n, d);
        cache->rstd.resize(n);
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        RowVector xh = (x.row(r).array() - mean) * rstd;
        y.row(r) = xh.cwiseProduct(g) + b;
        if (cache) {
            cache->xhat.row(r) = xh;
            cache->rstd(r) = rstd;
        }
    }
    return y;
}

Matrix layer_norm_back(const Matrix& dy, const LnCache& c, const CMapRow& g, MapRow* dg, MapRow* db) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    Matrix dx(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        RowVector dxh = dy.row(r).cwiseProduct(g);
        const double m1 = dxh.mean();
        const double m2 = dxh.cwiseProduct(c.xhat.row(r)).mean();
        dx.row(r) = c.rstd(r) * (dxh.array() - m1 - c.xhat.row(r).array() * m2);
        if (dg) *dg += dy.row(r).cwiseProduct(c.xhat.row(r));
        if (db) *db += dy.row(r);
    }
    return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
    const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

struct LayerCache {
    Matrix h_in;
    LnCache ln1;
    Matrix a, q, k, v, o, h1;
    std::vector<Matrix> p;  // per (sequence, head), L x L, zero above the diagonal
    LnCache ln2;
    Matrix b2, u, g;
};

class Net {
public:
    explicit Net(const TransformerModel& m) : m_(m), hp_(m.hp) {
        for (std::size_t i = 0; i < m.blocks.size(); ++i) index_[m.blocks[i].name] = i;
    }

    CMapM W(const std::string& name) const {
        const auto& b = block(name);
        return CMapM(m_.theta.data() + b.offset, b.rows, b.cols);
    }
    CMapRow R(const std::string& name) const {
        const auto& b = block(name);
        return CMapRow(m_.theta.data() + b.offset, Eigen::Index(b.size()));
    }
    static MapM GW(std::vector<double>& g, const ParamBlock& b) { return MapM(g.data() + b.offset, b.rows, b.cols); }
    static MapRow GR(std::vector<double>& g, const ParamBlock& b) { return MapRow(g.data() + b.offset, Eigen::Index(b.size())); }
    const ParamBlock& block(const std::string& name) const { return m_.blocks[index_.at(name)]; }

    // Forward over a batch. Fills `out` (B x horizon) and optionally the per-position final states.
    void forward(const std::vector<Matrix>& windows, Matrix& out, Matrix* hidden, bool keep) {
        const int L = hp_.context_len, d = hp_.d_model;
        const Eigen::Index B = Eigen::Index(windows.size());
        x_.resize(B * L, m_.d_in);
        for (Eigen::Index s = 0; s < B; ++s) {
            if (windows[std::size_t(s)].rows() != L || windows[std::size_t(s)].cols() != m_.d_in)
                throw DimensionError("transformer: window must be " + std::to_string(L) + " x " + std::to_string(m_.d_in));
            x_.middleRows(s * L, L) = windows[std::size_t(s)];
        }
        Matrix pe(L, d);
        for (int p = 0; p < L; ++p)
            for (int c = 0; c < d; ++c) {
                const double freq = std::pow(10000.0, -double(c - c % 2) / double(d));
                pe(p, c) = (c % 2 == 0) ? std::sin(double(p) * freq) : std::cos(double(p) * freq);
            }
        Matrix h = x_ * W("in.W");
        h.rowwise() += R("in.b");
        for (Eigen::Index s = 0; s < B; ++s) h.middleRows(s * L, L) += pe;

        caches_.assign(keep ? std::size_t(hp_.n_layers) : 0, {});
        for (int l = 0; l < hp_.n_layers; ++l) {
            const std::string pre = "L" + std::to_string(l) + ".";
            LayerCache local;
            LayerCache& c = keep ? caches_[std::size_t(l)] : local;
            c.h_in = h;
            c.a = layer_norm(h, R(pre + "ln1.g"), R(pre + "ln1.b"), &c.ln1);
            c.q = c.a * W(pre + "Wq");
            c.q.rowwise() += R(pre + "bq");
            c.k = c.a * W(pre + "Wk");
            c.k.rowwise() += R(pre + "bk");
            c.v = c.a * W(pre + "Wv");
            c.v.rowwise() += R(pre + "bv");
            attention(c, B);
            c.h1 = h + c.o * W(pre + "Wo");
            c.h1.rowwise() += R(pre + "bo");
            c.b2 = layer_norm(c.h1, R(pre + "ln2.g"), R(pre + "ln2.b"), &c.ln2);
            c.u = c.b2 * W(pre + "W1");
            c.u.rowwise() += R(pre + "b1");
            c.g = c.u.unaryExpr([](double x) { return gelu(x); });
            h = c.h1 + c.g * W(pre + "W2");
            h.rowwise() += R(pre + "b2");
        }
        if (hidden) *hidden = h;
        last_.resize(B, d);
        for (Eigen::Index s = 0; s < B; ++s) last_.row(s) = h.row(s * L + L - 1);
        z_ = layer_norm(last_, R("out.ln.g"), R("out.ln.b"), &lnf_);
        out = z_ * W("out.W");
        out.rowwise() += R("out.b");
    }

    void backward(const Matrix& dout, std::vector<double>& grad) {
        const int L = hp_.context_len, d = hp_.d_model;
        const Eigen::Index B = dout.rows();
        auto blk = [&](const std::string& n) -> const ParamBlock& { return block(n); };

        GW(grad, blk("out.W")) += z_.transpose() * dout;
        GR(grad, blk("out.b")) += dout.colwise().sum();
        Matrix dz = dout * W("out.W").transpose();
        MapRow dgf = GR(grad, blk("out.ln.g")), dbf = GR(grad, blk("out.ln.b"));
        Matrix dlast = layer_norm_back(dz, lnf_, R("out.ln.g"), &dgf, &dbf);
        Matrix dh = Matrix::Zero(B * L, d);
        for (Eigen::Index s = 0; s < B; ++s) dh.row(s * L + L - 1) = dlast.row(s);

        for (int l = hp_.n_layers - 1; l >= 0; --l) {
            const std::string pre = "L" + std::to_string(l) + ".";
            LayerCache& c = caches_[std::size_t(l)];
            // Feed-forward branch.
            GW(grad, blk(pre + "W2")) += c.g.transpose() * dh;
            GR(grad, blk(pre + "b2")) += dh.colwise().sum();
            Matrix du = (dh * W(pre + "W2").transpose()).cwiseProduct(c.u.unaryExpr([](double x) { return gelu_grad(x); }));
            GW(grad, blk(pre + "W1")) += c.b2.transpose() * du;
            GR(grad, blk(pre + "b1")) += du.colwise().sum();
            Matrix db2 = du * W(pre + "W1").transpose();
            MapRow dg2 = GR(grad, blk(pre + "ln2.g")), dbb2 = GR(grad, blk(pre + "ln2.b"));
            Matrix dh1 = dh + layer_norm_back(db2, c.ln2, R(pre + "ln2.g"), &dg2, &dbb2);
            // Attention branch.
            GW(grad, blk(pre + "Wo")) += c.o.transpose() * dh1;
            GR(grad, blk(pre + "bo")) += dh1.colwise().sum();
            Matrix dO = dh1 * W(pre + "Wo").transpose();
            Matrix dq = Matrix::Zero(B * L, d), dk = Matrix::Zero(B * L, d), dv = Matrix::Zero(B * L, d);
            attention_back(c, dO, dq, dk, dv, B);
            GW(grad, blk(pre + "Wq")) += c.a.transpose() * dq;
            GR(grad, blk(pre + "bq")) += dq.colwise().sum();
            GW(grad, blk(pre + "Wk")) += c.a.transpose() * dk;
            GR(grad, blk(pre + "bk")) += dk.colwise().sum();
            GW(grad, blk(pre + "Wv")) += c.a.transpose() * dv;
            GR(grad, blk(pre + "bv")) += dv.colwise().sum();
            Matrix da = dq * W(pre + "Wq").transpose() + dk * W(pre + "Wk").transpose() + dv * W(pre + "Wv").transpose();
            MapRow dg1 = GR(grad, blk(pre + "ln1.g")), dbb1 = GR(grad, blk(pre + "ln1.b"));
            dh = dh1 + layer_norm_back(da, c.ln1, R(pre + "ln1.g"), &dg1, &dbb1);
        }
        GW(grad, blk("in.W")) += x_.transpose() * dh;
        GR(grad, blk("in.b")) += dh.colwise().sum();
    }

private:
    // Causal attention with explicit loops: position i only ever reads positions j <= i.
    void attention(LayerCache& c, Eigen::Index B) {
        const int L = hp_.context_len, H = hp_.n_heads, dh = hp_.d_model / hp_.n_heads;
        const double scale = 1.0 / std::sqrt(double(dh));
        c.o = Matrix::Zero(B * L, hp_.d_model);
        c.p.assign(std::size_t(B * H), Matrix());
        std::vector<double> sc(static_cast<std::size_t>(L));
        for (Eigen::Index s = 0; s < B; ++s)
            for (int hh = 0; hh < H; ++hh) {
                Matrix& P = c.p[std::size_t(s * H + hh)];
                P = Matrix::Zero(L, L);
                const int c0 = hh * dh;
                for (int i = 0; i < L; ++i) {
                    const double* qi = c.q.row(s * L + i).data() + c0;
                    double mx = -std::numeric_limits<double>::infinity();
                    for (int j = 0; j <= i; ++j) {
                        const double* kj = c.k.row(s * L + j).data() + c0;
                        double dot = 0.0;
                        for (int e = 0; e < dh; ++e) dot += qi[e] * kj[e];
                        sc[std::size_t(j)] = dot * scale;
                        mx = std::max(mx, sc[std::size_t(j)]);
                    }
                    double sum = 0.0;
                    for (int j = 0; j <= i; ++j) sum += (sc[std::size_t(j)] = std::exp(sc[std::size_t(j)] - mx));
                    double* oi = c.o.row(s * L + i).data() + c0;
                    for (int j = 0; j <= i; ++j) {
                        const double pij = sc[std::size_t(j)] / sum;
                        P(i, j) = pij;
                        const double* vj = c.v.row(s * L + j).data() + c0;
                        for (int e = 0; e < dh; ++e) oi[e] += pij * vj[e];
                    }
                }
            }
    }

    void attention_back(const LayerCache& c, const Matrix& dO, Matrix& dq, Matrix& dk, Matrix& dv, Eigen::Index B) {
        const int L = hp_.context_len, H = hp_.n_heads, dh = hp_.d_model / hp_.n_heads;
        const double scale = 1.0 / std::sqrt(double(dh));
        std::vector<double> dp(static_cast<std::size_t>(L));
        for (Eigen::Index s = 0; s < B; ++s)
            for (int hh = 0; hh < H; ++hh) {
                const Matrix& P = c.p[std::size_t(s * H + hh)];
                const int c0 = hh * dh;
                for (int i = 0; i < L; ++i) {
                    const double* doi = dO.row(s * L + i).data() + c0;
                    double dot_pd = 0.0;
                    for (int j = 0; j <= i; ++j) {
                        const double* vj = c.v.row(s * L + j).data() + c0;
                        double* dvj = dv.row(s * L + j).data() + c0;
                        double acc = 0.0;
                        for (int e = 0; e < dh; ++e) {
                            acc += doi[e] * vj[e];
                            dvj[e] += P(i, j) * doi[e];
                        }
                        dp[std::size_t(j)] = acc;
                        dot_pd += P(i, j) * acc;
                    }
                    const double* qi = c.q.row(s * L + i).data() + c0;
                    double* dqi = dq.row(s * L + i).data() + c0;
                    for (int j = 0; j <= i; ++j) {
                        const double ds = P(i, j) * (dp[std::size_t(j)] - dot_pd) * scale;
                        const double* kj = c.k.row(s * L + j).data() + c0;
                        double* dkj = dk.row(s * L + j).data() + c0;
                        for (int e = 0; e < dh; ++e) {
                            dqi[e] += ds * kj[e];
                            dkj[e] += ds * qi[e];
                        }
                    }
                }
            }
    }

    const TransformerModel& m_;
    const TransformerParams& hp_;
    std::map<std::string, std::size_t> index_;
    Matrix x_, last_, z_;
    LnCache lnf_;
    std::vector<LayerCache> caches_;
};

}  // namespace

void TransformerParams::validate() const {
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
        throw ValidationError("transformer: d_model must be a positive multiple of n_heads");
    if (n_layers < 1 || d_ff < 1 || context_len < 1) throw ValidationError("transformer: sizes must be positive");
    if (epochs < 1 || batch_size < 1) throw ValidationError("transformer: epochs and batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("transformer: learning_rate must be positive");
}

TransformerModel transformer_init(const TransformerParams& hp, int d_in, int horizon) {
    hp.validate();
    if (d_in < 1 || horizon < 1) throw ValidationError("transformer_init: d_in and horizon must be positive");
    TransformerModel m;
    m.hp = hp;
    m.d_in = d_in;
    m.horizon = horizon;
    const int d = hp.d_model, f = hp.d_ff;
    std::size_t off = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        m.blocks.push_back({name, off, rows, cols});
        off += std::size_t(rows) * std::size_t(cols);
    };
    add("in.W", d_in, d);
    add("in.b", 1, d);
    for (int l = 0; l < hp.n_layers; ++l) {
        const std::string p = "L" + std::to_string(l) + ".";
        add(p + "ln1.g", 1, d);
        add(p + "ln1.b", 1, d);
        for (const char* w : {"q", "k", "v", "o"}) {
            add(p + "W" + w, d, d);
            add(p + "b" + w, 1, d);
        }
        add(p + "ln2.g", 1, d);
        add(p + "ln2.b", 1, d);
        add(p + "W1", d, f);
        add(p + "b1", 1, f);
        add(p + "W2", f, d);
        add(p + "b2", 1, d);
    }
    add("out.ln.g", 1, d);
    add("out.ln.b", 1, d);
    add("out.W", d, horizon);
    add("out.b", 1, horizon);

    m.theta.assign(off, 0.0);
    std::mt19937_64 rng(hp.seed);
    for (const auto& b : m.blocks) {
        const bool gain = b.name.size() > 2 && b.name.compare(b.name.size() - 2, 2, ".g") == 0;
        if (gain) {
            std::fill_n(m.theta.begin() + long(b.offset), b.size(), 1.0);
        } else if (b.rows > 1) {
            const double a = std::sqrt(6.0 / double(b.rows + b.cols));
            std::uniform_real_distribution<double> u(-a, a);
            for (std::size_t i = 0; i < b.size(); ++i) m.theta[b.offset + i] = u(rng);
        }
    }
    m.adam_m.assign(off, 0.0);
    m.adam_v.assign(off, 0.0);
    return m;
}

Matrix transformer_forward(const TransformerModel& m, const std::vector<Matrix>& windows) {
    Net net(m);
    Matrix out;
    net.forward(windows, out, nullptr, false);
    return out;
}

Matrix transformer_hidden(const TransformerModel& m, const Matrix& window) {
    Net net(m);
    Matrix out, hidden;
    net.forward({window}, out, &hidden, false);
    return hidden;
}

double transformer_loss(const TransformerModel& m, const std::vector<Matrix>& windows, const Matrix& targets,
                        std::vector<double>* grad) {
    if (targets.rows() != Eigen::Index(windows.size()) || targets.cols() != m.horizon)
        throw DimensionError("transformer_loss: targets must be batch x horizon");
    Net net(m);
    Matrix out;
    net.forward(windows, out, nullptr, grad != nullptr);
    Matrix diff = out - targets;
    const double count = double(diff.size());
    const double loss = diff.squaredNorm() / count;
    if (grad) {
        grad->assign(m.theta.size(), 0.0);
        net.backward(diff * (2.0 / count), *grad);
    }
    return loss;
}

void transformer_train(TransformerModel& m, const std::vector<Matrix>& windows, const Matrix& targets) {
    const std::size_t n = windows.size();
    if (n == 0) throw ValidationError("transformer_train: no training windows");
    const int bs = m.hp.batch_size;
    const long per_epoch = long((n + std::size_t(bs) - 1) / std::size_t(bs));
    const long total = per_epoch * long(m.hp.epochs);
    std::mt19937_64 rng(m.hp.seed ^ 0xA5A5A5A5ULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m.epoch_loss.clear();
    for (int epoch = 0; epoch < m.hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (long b = 0; b < per_epoch; ++b) {
            const std::size_t lo = std::size_t(b) * std::size_t(bs), hi = std::min(n, lo + std::size_t(bs));
            std::vector<Matrix> bw;
            Matrix bt(Eigen::Index(hi - lo), m.horizon);
            for (std::size_t i = lo; i < hi; ++i) {
                bw.push_back(windows[order[i]]);
                bt.row(Eigen::Index(i - lo)) = targets.row(Eigen::Index(order[i]));
            }
            const double lr = m.hp.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * double(m.step) / double(total)));
            const double loss = transformer_loss(m, bw, bt, &grad);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "transformer: non-finite loss (lr=" << lr << ", epoch=" << epoch + 1 << ", batch=" << b + 1 << ")";
                throw NumericalError(msg.str());
            }
            sum += loss * double(hi - lo);
            ++m.step;
            const double c1 = 1.0 - std::pow(b1, double(m.step)), c2 = 1.0 - std::pow(b2, double(m.step));
            for (std::size_t i = 0; i < m.theta.size(); ++i) {
                m.adam_m[i] = b1 * m.adam_m[i] + (1.0 - b1) * grad[i];
                m.adam_v[i] = b2 * m.adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
                m.theta[i] -= lr * (m.adam_m[i] / c1) / (std::sqrt(m.adam_v[i] / c2) + eps);
            }
        }
        m.epoch_loss.push_back(sum / double(n));
    }
    for (double v : m.theta)
        if (!std::isfinite(v)) throw NumericalError("transformer: non-finite parameter after training");
}

ForecastRun run_transformer(const ForecastProblem& p, const TransformerParams& hp, int n_draws) {
    hp.validate();
    if (hp.context_len < p.horizon)
        throw ValidationError("transformer: context_len " + std::to_string(hp.context_len) + " is shorter than horizon " +
                              std::to_string(p.horizon));
    Prepared prep = prepare(p, hp.context_len - 1);
    const int L = hp.context_len, T = p.horizon, c = int(prep.cov.cols());
    auto window = [&](int t) {
        Matrix w(L, 1 + c);
        for (int r = 0; r < L; ++r) {
            const int day = t - L + 1 + r;
            w(r, 0) = prep.y[std::size_t(day)];
            for (int k = 0; k < c; ++k) w(r, 1 + k) = prep.cov(day, k);
        }
        return w;
    };
    std::vector<Matrix> tw;
    Matrix tt(Eigen::Index(prep.train_origins.size()), T);
    for (std::size_t i = 0; i < prep.train_origins.size(); ++i) {
        const int t = prep.train_origins[i];
        tw.push_back(window(t));
        for (int h = 0; h < T; ++h) tt(Eigen::Index(i), h) = prep.y[std::size_t(t + 1 + h)];
    }
    if (tw.size() < 32)
        throw ValidationError("transformer: need at least 32 training windows, got " + std::to_string(tw.size()));

    TransformerModel model = transformer_init(hp, 1 + c, T);
    transformer_train(model, tw, tt);
    Matrix fit = transformer_forward(model, tw);
    model.residuals.clear();
    for (Eigen::Index i = 0; i < tt.rows(); ++i) model.residuals.push_back(tt(i, T - 1) - fit(i, T - 1));

    std::vector<Matrix> vw;
    for (int t : prep.test_origins) vw.push_back(window(t));
    Matrix pred = transformer_forward(model, vw);

    ForecastRun run;
    run.model = "transformer";
    run.region = p.region;
    run.horizon = T;
    run.seed = hp.seed;
    std::mt19937_64 rng(hp.seed + 17);
    std::uniform_int_distribution<std::size_t> pick(0, model.residuals.size() - 1);
    for (std::size_t i = 0; i < prep.test_origins.size(); ++i) {
        const int t = prep.test_origins[i];
        ForecastPoint pt;
        pt.origin = add_days(p.target.start, t);
        pt.day = add_days(pt.origin, T);
        pt.actual = prep.y[std::size_t(t + T)];
        pt.mean = pred(Eigen::Index(i), T - 1);
        pt.draws.resize(std::size_t(std::max(1, n_draws)));
        for (auto& d : pt.draws) d = pt.mean + model.residuals[pick(rng)];
        run.points.push_back(std::move(pt));
    }
    run.rmse = run_rmse(run);
    return run;
}

}  // namespace episignal::forecast
