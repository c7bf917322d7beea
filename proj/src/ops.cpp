#include "fasw/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "fasw/error.hpp"

namespace fasw::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void check_same(const Var& a, const Var& b, const char* op) {
    require(a.shape() == b.shape(), ErrorKind::input,
            std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
}

void check_rank4(const Var& x, const char* op) {
    require(x.value().rank() == 4, ErrorKind::input,
            std::string(op) + ": expected NCHW tensor, got " + shape_string(x.shape()));
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

template <typename F>
Var unary(const Var& a, F&& forward, std::function<double(double x, double y)> dydx) {
    Tensor out(a.shape());
    const Tensor& in = a.value();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
    return make_result(std::move(out), {a}, [dydx = std::move(dydx)](Node& self) {
        Node& x = input(self, 0);
        if (!x.requires_grad) return;
        Tensor& g = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * dydx(x.value[i], self.value[i]);
        }
    });
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (input(self, k).requires_grad) input(self, k).accumulate(self.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (input(self, 0).requires_grad) input(self, 0).accumulate(self.grad);
        if (input(self, 1).requires_grad) {
            Tensor& g = input(self, 1).grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node& x = input(self, 0);
        Node& y = input(self, 1);
        if (x.requires_grad) {
            Tensor& g = x.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
        }
        if (y.requires_grad) {
            Tensor& g = y.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar_var(const Var& x, const Var& s) {
    require(s.value().size() == 1, ErrorKind::input, "mul_scalar_var: scale must be one element");
    const double sv = s.value()[0];
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * sv;
    return make_result(std::move(out), {x, s}, [](Node& self) {
        Node& xn = input(self, 0);
        Node& sn = input(self, 1);
        const double sv = sn.value[0];
        if (xn.requires_grad) {
            Tensor& g = xn.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sv;
        }
        if (sn.requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn.value[i];
            sn.grad_buffer()[0] += acc;
        }
    });
}

Var abs(const Var& a) {
    return unary(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var log(const Var& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(const Var& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var clamp(const Var& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().storage()) s += v;
    return make_result(Tensor({1}, s), {a}, [](Node& self) {
        Node& x = input(self, 0);
        if (!x.requires_grad) return;
        Tensor& g = x.grad_buffer();
        const double d = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
}

Var mean(const Var& a) {
    const std::size_t n = a.value().size();
    require(n > 0, ErrorKind::input, "mean of empty tensor");
    double s = 0.0;
    for (double v : a.value().storage()) s += v;
    return make_result(Tensor({1}, s / static_cast<double>(n)), {a}, [n](Node& self) {
        Node& x = input(self, 0);
        if (!x.requires_grad) return;
        Tensor& g = x.grad_buffer();
        const double d = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
    require(terms.size() == weights.size(), ErrorKind::input, "weighted_sum: size mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        require(terms[k].value().size() == 1, ErrorKind::input, "weighted_sum: non-scalar term");
        total += weights[k] * terms[k].value()[0];
    }
    std::vector<double> w(weights.begin(), weights.end());
    return make_result(Tensor({1}, total), std::vector<Var>(terms.begin(), terms.end()),
                       [w = std::move(w)](Node& self) {
                           for (std::size_t k = 0; k < w.size(); ++k) {
                               Node& t = input(self, k);
                               if (t.requires_grad) t.grad_buffer()[0] += w[k] * self.grad[0];
                           }
                       });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        Node& x = input(self, 0);
        if (x.requires_grad) x.accumulate(self.grad);
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check_rank4(x, "conv2d");
    require(w.value().rank() == 4 && w.value().dim(2) == w.value().dim(3), ErrorKind::input,
            "conv2d: weight must be O x C x k x k");
    const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), wd = x.value().dim(3);
    const int o = w.value().dim(0), k = w.value().dim(2);
    require(w.value().dim(1) == c, ErrorKind::input,
            "conv2d: input has " + std::to_string(c) + " channels, weight expects " +
                std::to_string(w.value().dim(1)));
    require(b.value().size() == static_cast<std::size_t>(o), ErrorKind::input, "conv2d: bias size");
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wd + 2 * pad - k) / stride + 1;
    require(oh > 0 && ow > 0, ErrorKind::input, "conv2d: output would be empty");
    const int kk = c * k * k;
    const int cols_n = oh * ow;

    // im2col for all samples, kept for the backward pass.
    auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * kk * cols_n, 0.0);
    for (int s = 0; s < n; ++s) {
        double* col = cols->data() + static_cast<std::size_t>(s) * kk * cols_n;
        for (int ci = 0; ci < c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * cols_n;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int xx = 0; xx < ow; ++xx) {
                            const int ix = xx * stride - pad + kx;
                            if (ix < 0 || ix >= wd) continue;
                            row[y * ow + xx] = x.value().at(s, ci, iy, ix);
                        }
                    }
                }
            }
        }
    }

    Tensor out({n, o, oh, ow});
    ConstMatMap wm(w.value().data(), o, kk);
    for (int s = 0; s < n; ++s) {
        ConstMatMap cm(cols->data() + static_cast<std::size_t>(s) * kk * cols_n, kk, cols_n);
        MatMap om(out.data() + static_cast<std::size_t>(s) * o * cols_n, o, cols_n);
        om.noalias() = wm * cm;
        for (int oc = 0; oc < o; ++oc) om.row(oc).array() += b.value()[static_cast<std::size_t>(oc)];
    }

    return make_result(std::move(out), {x, w, b},
                       [cols, n, c, h, wd, o, k, stride, pad, oh, ow, kk, cols_n](Node& self) {
        Node& xn = input(self, 0);
        Node& wn = input(self, 1);
        Node& bn = input(self, 2);
        if (wn.requires_grad) {
            MatMap gw(wn.grad_buffer().data(), o, kk);
            for (int s = 0; s < n; ++s) {
                ConstMatMap gm(self.grad.data() + static_cast<std::size_t>(s) * o * cols_n, o, cols_n);
                ConstMatMap cm(cols->data() + static_cast<std::size_t>(s) * kk * cols_n, kk, cols_n);
                gw.noalias() += gm * cm.transpose();
            }
        }
        if (bn.requires_grad) {
            Tensor& gb = bn.grad_buffer();
            for (int s = 0; s < n; ++s) {
                ConstMatMap gm(self.grad.data() + static_cast<std::size_t>(s) * o * cols_n, o, cols_n);
                for (int oc = 0; oc < o; ++oc) gb[static_cast<std::size_t>(oc)] += gm.row(oc).sum();
            }
        }
        if (xn.requires_grad) {
            Tensor& gx = xn.grad_buffer();
            ConstMatMap wm(wn.value.data(), o, kk);
            RowMatrix gcol(kk, cols_n);
            for (int s = 0; s < n; ++s) {
                ConstMatMap gm(self.grad.data() + static_cast<std::size_t>(s) * o * cols_n, o, cols_n);
                gcol.noalias() = wm.transpose() * gm;
                for (int ci = 0; ci < c; ++ci) {
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const double* row = gcol.data() + (static_cast<std::size_t>(ci * k + ky) * k + kx) * cols_n;
                            for (int y = 0; y < oh; ++y) {
                                const int iy = y * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int xx = 0; xx < ow; ++xx) {
                                    const int ix = xx * stride - pad + kx;
                                    if (ix < 0 || ix >= wd) continue;
                                    gx.at(s, ci, iy, ix) += row[y * ow + xx];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

namespace {

struct Tap {
    int i0, i1;
    double w0, w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int d = 0; d < out; ++d) {
        double src = (d + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, in - 1);
        const double t = src - i0;
        taps[static_cast<std::size_t>(d)] = {i0, i1, 1.0 - t, t};
    }
    return taps;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    check_rank4(x, "resize_bilinear");
    const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
    require(out_h > 0 && out_w > 0, ErrorKind::input, "resize_bilinear: empty output");
    auto ty = std::make_shared<std::vector<Tap>>(bilinear_taps(h, out_h));
    auto tx = std::make_shared<std::vector<Tap>>(bilinear_taps(w, out_w));
    Tensor out({n, c, out_h, out_w});
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < out_h; ++y) {
                const Tap& a = (*ty)[static_cast<std::size_t>(y)];
                for (int xx = 0; xx < out_w; ++xx) {
                    const Tap& bt = (*tx)[static_cast<std::size_t>(xx)];
                    const Tensor& v = x.value();
                    out.at(s, ci, y, xx) = a.w0 * (bt.w0 * v.at(s, ci, a.i0, bt.i0) + bt.w1 * v.at(s, ci, a.i0, bt.i1)) +
                                           a.w1 * (bt.w0 * v.at(s, ci, a.i1, bt.i0) + bt.w1 * v.at(s, ci, a.i1, bt.i1));
                }
            }
    return make_result(std::move(out), {x}, [ty, tx, n, c, out_h, out_w](Node& self) {
        Node& xn = input(self, 0);
        if (!xn.requires_grad) return;
        Tensor& g = xn.grad_buffer();
        for (int s = 0; s < n; ++s)
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < out_h; ++y) {
                    const Tap& a = (*ty)[static_cast<std::size_t>(y)];
                    for (int xx = 0; xx < out_w; ++xx) {
                        const Tap& bt = (*tx)[static_cast<std::size_t>(xx)];
                        const double d = self.grad.at(s, ci, y, xx);
                        g.at(s, ci, a.i0, bt.i0) += d * a.w0 * bt.w0;
                        g.at(s, ci, a.i0, bt.i1) += d * a.w0 * bt.w1;
                        g.at(s, ci, a.i1, bt.i0) += d * a.w1 * bt.w0;
                        g.at(s, ci, a.i1, bt.i1) += d * a.w1 * bt.w1;
                    }
                }
    });
}

Var avg_pool(const Var& x, int factor) {
    check_rank4(x, "avg_pool");
    const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
    require(factor >= 1 && h % factor == 0 && w % factor == 0, ErrorKind::input,
            "avg_pool: size not divisible by factor");
    const int oh = h / factor, ow = w / factor;
    const double inv = 1.0 / (factor * factor);
    Tensor out({n, c, oh, ow});
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    out.at(s, ci, y / factor, xx / factor) += inv * x.value().at(s, ci, y, xx);
    return make_result(std::move(out), {x}, [n, c, h, w, factor, inv](Node& self) {
        Node& xn = input(self, 0);
        if (!xn.requires_grad) return;
        Tensor& g = xn.grad_buffer();
        for (int s = 0; s < n; ++s)
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        g.at(s, ci, y, xx) += inv * self.grad.at(s, ci, y / factor, xx / factor);
    });
}

Var resize_to(const Var& x, int out_h, int out_w) {
    check_rank4(x, "resize_to");
    const int h = x.value().dim(2), w = x.value().dim(3);
    if (h == out_h && w == out_w) return x;
    if (out_h < h && h % out_h == 0 && w % out_w == 0 && h / out_h == w / out_w) {
        return avg_pool(x, h / out_h);
    }
    return resize_bilinear(x, out_h, out_w);
}

Var concat_channels(std::span<const Var> parts) {
    require(!parts.empty(), ErrorKind::input, "concat_channels: no inputs");
    const int n = parts[0].value().dim(0), h = parts[0].value().dim(2), w = parts[0].value().dim(3);
    std::vector<int> chans;
    int total = 0;
    for (const Var& p : parts) {
        check_rank4(p, "concat_channels");
        require(p.value().dim(0) == n && p.value().dim(2) == h && p.value().dim(3) == w,
                ErrorKind::input, "concat_channels: batch/spatial mismatch");
        chans.push_back(p.value().dim(1));
        total += p.value().dim(1);
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out({n, total, h, w});
    for (int s = 0; s < n; ++s) {
        int off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const double* src = parts[k].value().data() + static_cast<std::size_t>(s) * chans[k] * plane;
            std::copy(src, src + chans[k] * plane,
                      out.data() + (static_cast<std::size_t>(s) * total + off) * plane);
            off += chans[k];
        }
    }
    return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                       [chans, n, total, plane](Node& self) {
        for (int s = 0; s < n; ++s) {
            int off = 0;
            for (std::size_t k = 0; k < chans.size(); ++k) {
                Node& p = input(self, k);
                if (p.requires_grad) {
                    Tensor& g = p.grad_buffer();
                    const double* src = self.grad.data() + (static_cast<std::size_t>(s) * total + off) * plane;
                    double* dst = g.data() + static_cast<std::size_t>(s) * chans[k] * plane;
                    for (std::size_t i = 0; i < chans[k] * plane; ++i) dst[i] += src[i];
                }
                off += chans[k];
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    check_rank4(x, "global_avg_pool");
    const int n = x.value().dim(0), c = x.value().dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.value().dim(2)) * x.value().dim(3);
    Tensor out({n, c});
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci) {
            const double* p = x.value().data() + (static_cast<std::size_t>(s) * c + ci) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out[static_cast<std::size_t>(s) * c + ci] = acc / static_cast<double>(plane);
        }
    return make_result(std::move(out), {x}, [n, c, plane](Node& self) {
        Node& xn = input(self, 0);
        if (!xn.requires_grad) return;
        Tensor& g = xn.grad_buffer();
        for (int s = 0; s < n; ++s)
            for (int ci = 0; ci < c; ++ci) {
                const double d = self.grad[static_cast<std::size_t>(s) * c + ci] / static_cast<double>(plane);
                double* p = g.data() + (static_cast<std::size_t>(s) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += d;
            }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    require(x.value().rank() == 2 && w.value().rank() == 2 && w.value().dim(1) == x.value().dim(1),
            ErrorKind::input,
            "linear: incompatible shapes " + shape_string(x.shape()) + " and " + shape_string(w.shape()));
    const int n = x.value().dim(0), d = x.value().dim(1), o = w.value().dim(0);
    require(b.value().size() == static_cast<std::size_t>(o), ErrorKind::input, "linear: bias size");
    Tensor out({n, o});
    ConstMatMap xm(x.value().data(), n, d);
    ConstMatMap wm(w.value().data(), o, d);
    MatMap om(out.data(), n, o);
    om.noalias() = xm * wm.transpose();
    for (int s = 0; s < n; ++s)
        for (int k = 0; k < o; ++k) om(s, k) += b.value()[static_cast<std::size_t>(k)];
    return make_result(std::move(out), {x, w, b}, [n, d, o](Node& self) {
        Node& xn = input(self, 0);
        Node& wn = input(self, 1);
        Node& bn = input(self, 2);
        ConstMatMap gm(self.grad.data(), n, o);
        if (xn.requires_grad) {
            MatMap gx(xn.grad_buffer().data(), n, d);
            gx.noalias() += gm * ConstMatMap(wn.value.data(), o, d);
        }
        if (wn.requires_grad) {
            MatMap gw(wn.grad_buffer().data(), o, d);
            gw.noalias() += gm.transpose() * ConstMatMap(xn.value.data(), n, d);
        }
        if (bn.requires_grad) {
            Tensor& gb = bn.grad_buffer();
            for (int k = 0; k < o; ++k) gb[static_cast<std::size_t>(k)] += gm.col(k).sum();
        }
    });
}

Var log_softmax_rows(const Var& x) {
    require(x.value().rank() == 2, ErrorKind::input, "log_softmax_rows: expected N x K");
    const int n = x.value().dim(0), k = x.value().dim(1);
    Tensor out({n, k});
    for (int s = 0; s < n; ++s) {
        const double* row = x.value().data() + static_cast<std::size_t>(s) * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        const double lz = mx + std::log(z);
        for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(s) * k + j] = row[j] - lz;
    }
    return make_result(std::move(out), {x}, [n, k](Node& self) {
        Node& xn = input(self, 0);
        if (!xn.requires_grad) return;
        Tensor& g = xn.grad_buffer();
        for (int s = 0; s < n; ++s) {
            const std::size_t base = static_cast<std::size_t>(s) * k;
            double gsum = 0.0;
            for (int j = 0; j < k; ++j) gsum += self.grad[base + j];
            for (int j = 0; j < k; ++j) {
                g[base + j] += self.grad[base + j] - std::exp(self.value[base + j]) * gsum;
            }
        }
    });
}

Var softmax_rows(const Var& x) {
    return unary(log_softmax_rows(x), [](double v) { return std::exp(v); },
                 [](double, double y) { return y; });
}

Var bce_with_logits(const Var& logits, const Var& targets) {
    check_same(logits, targets, "bce_with_logits");
    const std::size_t n = logits.value().size();
    require(n > 0, ErrorKind::input, "bce_with_logits: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits.value()[i];
        const double t = targets.value()[i];
        // max(z,0) - z*t + log(1 + exp(-|z|))
        acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
    }
    return make_result(Tensor({1}, acc / static_cast<double>(n)), {logits, targets}, [n](Node& self) {
        Node& zn = input(self, 0);
        Node& tn = input(self, 1);
        const double d = self.grad[0] / static_cast<double>(n);
        if (zn.requires_grad) {
            Tensor& g = zn.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const double z = zn.value[i];
                const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                g[i] += d * (p - tn.value[i]);
            }
        }
        if (tn.requires_grad) {
            Tensor& g = tn.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] -= d * zn.value[i];
        }
    });
}

Var mean_abs_diff(const Var& a, const Var& b) { return mean(abs(sub(a, b))); }

Var mean_squared_diff(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

}  // namespace fasw::ad
