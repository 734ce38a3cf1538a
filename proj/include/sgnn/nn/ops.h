#pragma once

#include <cmath>
#include <stdexcept>

#include "sgnn/nn/parameter.h"
#include "sgnn/nn/tape.h"

namespace sgnn::nn {

// ---------------------------------------------------------------------------
// helpers

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

/// Gate rule: sigmoid(logit) > 0.5, strict, evaluated in T.
template <class T>
bool gate_open(T logit) {
    return stable_sigmoid(logit) > T(0.5);
}

/// Sums per-sample partials in value order, so the result is invariant to
/// sample permutation within a batch (addition of the sorted sequence is a
/// fixed summation tree).
inline double combine_partials(std::vector<double> parts) {
    std::sort(parts.begin(), parts.end());
    double total = 0.0;
    for (double p : parts) total += p;
    return total;
}

template <class T>
void check_channels(int got, int want, const char* op) {
    if (got != want) throw std::invalid_argument(std::string(op) + ": channel mismatch");
}

// ---------------------------------------------------------------------------
// sparse convolutions

/// Submanifold 3x3x3 convolution: output coordinates equal input
/// coordinates; absent neighbors contribute nothing.
/// w dims {27, Cin, Cout}, offset o = ((dx+1)*3 + (dy+1))*3 + (dz+1).
template <class T>
SparseNode<T>* subm_conv3(Tape<T>& tape, SparseNode<T>* x, Parameter<T>& w, Parameter<T>& b) {
    const int cin = x->channels;
    const int cout = static_cast<int>(b.size());
    if (w.dims != std::vector<int>{27, cin, cout}) throw std::invalid_argument("subm_conv3: weight shape mismatch");
    SparseNode<T>* y = tape.new_sparse(x->cs, cout);
    const auto& nbr = x->cs->neighbors27();
    const int n = x->rows();
    for (int r = 0; r < n; ++r) {
        T* yr = &y->val[static_cast<size_t>(r) * cout];
        for (int co = 0; co < cout; ++co) yr[co] = b.val[co];
        for (int o = 0; o < 27; ++o) {
            const int32_t nr = nbr[static_cast<size_t>(r) * 27 + o];
            if (nr < 0) continue;
            const T* xr = &x->val[static_cast<size_t>(nr) * cin];
            const T* wo = &w.val[static_cast<size_t>(o) * cin * cout];
            for (int ci = 0; ci < cin; ++ci) {
                const T xv = xr[ci];
                const T* wr = wo + static_cast<size_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) yr[co] += xv * wr[co];
            }
        }
    }
    tape.push_op([x, y, &w, &b, cin, cout, n]() {
        const auto& nbr = x->cs->neighbors27();
        for (int r = 0; r < n; ++r) {
            const T* gy = &y->grad[static_cast<size_t>(r) * cout];
            for (int co = 0; co < cout; ++co) b.grad[co] += gy[co];
            for (int o = 0; o < 27; ++o) {
                const int32_t nr = nbr[static_cast<size_t>(r) * 27 + o];
                if (nr < 0) continue;
                const T* xr = &x->val[static_cast<size_t>(nr) * cin];
                T* gx = &x->grad[static_cast<size_t>(nr) * cin];
                const T* wo = &w.val[static_cast<size_t>(o) * cin * cout];
                T* gw = &w.grad[static_cast<size_t>(o) * cin * cout];
                for (int ci = 0; ci < cin; ++ci) {
                    const T xv = xr[ci];
                    const T* wr = wo + static_cast<size_t>(ci) * cout;
                    T* gwr = gw + static_cast<size_t>(ci) * cout;
                    T acc = T(0);
                    for (int co = 0; co < cout; ++co) {
                        acc += wr[co] * gy[co];
                        gwr[co] += xv * gy[co];
                    }
                    gx[ci] += acc;
                }
            }
        }
    });
    return y;
}

inline int child_offset(const VoxelCoord& c) {
    return ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
}

/// Stride-2 kernel-2 sparse convolution: output coordinates are the unique
/// floor(c/2) parents. w dims {8, Cin, Cout}, offset = (x&1)*4+(y&1)*2+(z&1).
template <class T>
SparseNode<T>* sparse_downconv2(Tape<T>& tape, SparseNode<T>* x, Parameter<T>& w, Parameter<T>& b) {
    const int cin = x->channels;
    const int cout = static_cast<int>(b.size());
    if (w.dims != std::vector<int>{8, cin, cout})
        throw std::invalid_argument("sparse_downconv2: weight shape mismatch");
    std::vector<VoxelCoord> parents;
    parents.reserve(x->cs->coords().size());
    for (const auto& c : x->cs->coords()) parents.push_back(grid::parent_coord(c));
    auto out_cs = CoordSet::make(std::move(parents));
    SparseNode<T>* y = tape.new_sparse(out_cs, cout);

    const int n = x->rows();
    auto row_map = std::make_shared<std::vector<std::pair<int32_t, int32_t>>>(n);  // (out row, offset)
    for (int r = 0; r < n; ++r) {
        const VoxelCoord& c = x->cs->coords()[r];
        (*row_map)[r] = {out_cs->find(grid::parent_coord(c)), static_cast<int32_t>(child_offset(c))};
    }

    for (int orow = 0; orow < y->rows(); ++orow) {
        T* yr = &y->val[static_cast<size_t>(orow) * cout];
        for (int co = 0; co < cout; ++co) yr[co] = b.val[co];
    }
    for (int r = 0; r < n; ++r) {
        const auto [orow, off] = (*row_map)[r];
        const T* xr = &x->val[static_cast<size_t>(r) * cin];
        const T* wo = &w.val[static_cast<size_t>(off) * cin * cout];
        T* yr = &y->val[static_cast<size_t>(orow) * cout];
        for (int ci = 0; ci < cin; ++ci) {
            const T xv = xr[ci];
            const T* wr = wo + static_cast<size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) yr[co] += xv * wr[co];
        }
    }
    tape.push_op([x, y, &w, &b, row_map, cin, cout, n]() {
        for (int orow = 0; orow < y->rows(); ++orow) {
            const T* gy = &y->grad[static_cast<size_t>(orow) * cout];
            for (int co = 0; co < cout; ++co) b.grad[co] += gy[co];
        }
        for (int r = 0; r < n; ++r) {
            const auto [orow, off] = (*row_map)[r];
            const T* gy = &y->grad[static_cast<size_t>(orow) * cout];
            const T* xr = &x->val[static_cast<size_t>(r) * cin];
            T* gx = &x->grad[static_cast<size_t>(r) * cin];
            const T* wo = &w.val[static_cast<size_t>(off) * cin * cout];
            T* gw = &w.grad[static_cast<size_t>(off) * cin * cout];
            for (int ci = 0; ci < cin; ++ci) {
                const T xv = xr[ci];
                const T* wr = wo + static_cast<size_t>(ci) * cout;
                T* gwr = gw + static_cast<size_t>(ci) * cout;
                T acc = T(0);
                for (int co = 0; co < cout; ++co) {
                    acc += wr[co] * gy[co];
                    gwr[co] += xv * gy[co];
                }
                gx[ci] += acc;
            }
        }
    });
    return y;
}

/// Transposed convolution, kernel 2 stride 2: every input coordinate emits
/// all 8 children; child feature = bias + W[child offset] * x(parent).
template <class T>
SparseNode<T>* sparse_upsample2(Tape<T>& tape, SparseNode<T>* x, Parameter<T>& w, Parameter<T>& b) {
    const int cin = x->channels;
    const int cout = static_cast<int>(b.size());
    if (w.dims != std::vector<int>{8, cin, cout})
        throw std::invalid_argument("sparse_upsample2: weight shape mismatch");
    std::vector<VoxelCoord> children;
    children.reserve(x->cs->coords().size() * 8);
    for (const auto& c : x->cs->coords())
        for (int ox = 0; ox < 2; ++ox)
            for (int oy = 0; oy < 2; ++oy)
                for (int oz = 0; oz < 2; ++oz)
                    children.push_back(VoxelCoord{2 * c.x + ox, 2 * c.y + oy, 2 * c.z + oz, c.batch});
    auto out_cs = CoordSet::make(std::move(children));
    SparseNode<T>* y = tape.new_sparse(out_cs, cout);

    const int n = x->rows();
    auto row_map = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n) * 8);  // out rows per (parent, offset)
    for (int r = 0; r < n; ++r) {
        const VoxelCoord& c = x->cs->coords()[r];
        for (int o = 0; o < 8; ++o) {
            const VoxelCoord child{2 * c.x + ((o >> 2) & 1), 2 * c.y + ((o >> 1) & 1), 2 * c.z + (o & 1), c.batch};
            (*row_map)[static_cast<size_t>(r) * 8 + o] = out_cs->find(child);
        }
    }

    for (int orow = 0; orow < y->rows(); ++orow) {
        T* yr = &y->val[static_cast<size_t>(orow) * cout];
        for (int co = 0; co < cout; ++co) yr[co] = b.val[co];
    }
    for (int r = 0; r < n; ++r) {
        const T* xr = &x->val[static_cast<size_t>(r) * cin];
        for (int o = 0; o < 8; ++o) {
            const int32_t orow = (*row_map)[static_cast<size_t>(r) * 8 + o];
            T* yr = &y->val[static_cast<size_t>(orow) * cout];
            const T* wo = &w.val[static_cast<size_t>(o) * cin * cout];
            for (int ci = 0; ci < cin; ++ci) {
                const T xv = xr[ci];
                const T* wr = wo + static_cast<size_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) yr[co] += xv * wr[co];
            }
        }
    }
    tape.push_op([x, y, &w, &b, row_map, cin, cout, n]() {
        for (int orow = 0; orow < y->rows(); ++orow) {
            const T* gy = &y->grad[static_cast<size_t>(orow) * cout];
            for (int co = 0; co < cout; ++co) b.grad[co] += gy[co];
        }
        for (int r = 0; r < n; ++r) {
            const T* xr = &x->val[static_cast<size_t>(r) * cin];
            T* gx = &x->grad[static_cast<size_t>(r) * cin];
            for (int o = 0; o < 8; ++o) {
                const int32_t orow = (*row_map)[static_cast<size_t>(r) * 8 + o];
                const T* gy = &y->grad[static_cast<size_t>(orow) * cout];
                const T* wo = &w.val[static_cast<size_t>(o) * cin * cout];
                T* gw = &w.grad[static_cast<size_t>(o) * cin * cout];
                for (int ci = 0; ci < cin; ++ci) {
                    const T xv = xr[ci];
                    const T* wr = wo + static_cast<size_t>(ci) * cout;
                    T* gwr = gw + static_cast<size_t>(ci) * cout;
                    T acc = T(0);
                    for (int co = 0; co < cout; ++co) {
                        acc += wr[co] * gy[co];
                        gwr[co] += xv * gy[co];
                    }
                    gx[ci] += acc;
                }
            }
        }
    });
    return y;
}

// ---------------------------------------------------------------------------
// dense convolution

/// Cross-correlation with general kernel/stride/padding, parameters in the
/// (nf_in, nf_out, kernel_size, stride, padding) convention.
/// w dims {kx, ky, kz, Cin, Cout}; out spatial = floor((in + 2p - k)/s) + 1.
template <class T>
DenseNode<T>* dense_conv3(Tape<T>& tape, DenseNode<T>* x, Parameter<T>& w, Parameter<T>& b, int stride = 1,
                          int pad = 0) {
    if (w.dims.size() != 5) throw std::invalid_argument("dense_conv3: weight must be rank 5");
    const int kx = w.dims[0], ky = w.dims[1], kz = w.dims[2];
    const int cin = w.dims[3], cout = w.dims[4];
    check_channels<T>(x->c, cin, "dense_conv3");
    if (static_cast<int>(b.size()) != cout) throw std::invalid_argument("dense_conv3: bias shape mismatch");
    const int ox = (x->dx + 2 * pad - kx) / stride + 1;
    const int oy = (x->dy + 2 * pad - ky) / stride + 1;
    const int oz = (x->dz + 2 * pad - kz) / stride + 1;
    if (ox <= 0 || oy <= 0 || oz <= 0) throw std::invalid_argument("dense_conv3: kernel larger than padded input");
    VoxelCoord origin = x->origin;
    if (stride == 1) {
        origin.x += (kx - 1) / 2 - pad;
        origin.y += (ky - 1) / 2 - pad;
        origin.z += (kz - 1) / 2 - pad;
    }
    DenseNode<T>* y = tape.new_dense(x->b, cout, ox, oy, oz, origin);

    auto kernel_index = [=](int ikx, int iky, int ikz, int ci, int co) {
        return ((((static_cast<size_t>(ikx) * ky + iky) * kz + ikz) * cin + ci) * cout + co);
    };
    for (int bb = 0; bb < x->b; ++bb)
        for (int izo = 0; izo < oz; ++izo)
            for (int iyo = 0; iyo < oy; ++iyo)
                for (int ixo = 0; ixo < ox; ++ixo) {
                    for (int co = 0; co < cout; ++co) y->val[y->index(bb, co, ixo, iyo, izo)] = b.val[co];
                    for (int ikx = 0; ikx < kx; ++ikx) {
                        const int xi = ixo * stride - pad + ikx;
                        if (xi < 0 || xi >= x->dx) continue;
                        for (int iky = 0; iky < ky; ++iky) {
                            const int yi = iyo * stride - pad + iky;
                            if (yi < 0 || yi >= x->dy) continue;
                            for (int ikz = 0; ikz < kz; ++ikz) {
                                const int zi = izo * stride - pad + ikz;
                                if (zi < 0 || zi >= x->dz) continue;
                                for (int ci = 0; ci < cin; ++ci) {
                                    const T xv = x->val[x->index(bb, ci, xi, yi, zi)];
                                    for (int co = 0; co < cout; ++co)
                                        y->val[y->index(bb, co, ixo, iyo, izo)] +=
                                            xv * w.val[kernel_index(ikx, iky, ikz, ci, co)];
                                }
                            }
                        }
                    }
                }
    tape.push_op([x, y, &w, &b, kernel_index, kx, ky, kz, cin, cout, ox, oy, oz, stride, pad]() {
        for (int bb = 0; bb < x->b; ++bb)
            for (int izo = 0; izo < oz; ++izo)
                for (int iyo = 0; iyo < oy; ++iyo)
                    for (int ixo = 0; ixo < ox; ++ixo) {
                        for (int co = 0; co < cout; ++co) b.grad[co] += y->grad[y->index(bb, co, ixo, iyo, izo)];
                        for (int ikx = 0; ikx < kx; ++ikx) {
                            const int xi = ixo * stride - pad + ikx;
                            if (xi < 0 || xi >= x->dx) continue;
                            for (int iky = 0; iky < ky; ++iky) {
                                const int yi = iyo * stride - pad + iky;
                                if (yi < 0 || yi >= x->dy) continue;
                                for (int ikz = 0; ikz < kz; ++ikz) {
                                    const int zi = izo * stride - pad + ikz;
                                    if (zi < 0 || zi >= x->dz) continue;
                                    for (int ci = 0; ci < cin; ++ci) {
                                        const T xv = x->val[x->index(bb, ci, xi, yi, zi)];
                                        T acc = T(0);
                                        for (int co = 0; co < cout; ++co) {
                                            const T gy = y->grad[y->index(bb, co, ixo, iyo, izo)];
                                            acc += w.val[kernel_index(ikx, iky, ikz, ci, co)] * gy;
                                            w.grad[kernel_index(ikx, iky, ikz, ci, co)] += xv * gy;
                                        }
                                        x->grad[x->index(bb, ci, xi, yi, zi)] += acc;
                                    }
                                }
                            }
                        }
                    }
    });
    return y;
}

// ---------------------------------------------------------------------------
// scatter / gather

/// Scatter a sparse tensor into a dense box; cells without a coordinate take
/// fill (constant, no gradient). Coordinates outside the box are dropped.
template <class T>
DenseNode<T>* to_dense(Tape<T>& tape, SparseNode<T>* x, int batches, VoxelCoord origin, int dx, int dy, int dz,
                       T fill = T(0)) {
    DenseNode<T>* y = tape.new_dense(batches, x->channels, dx, dy, dz, origin, fill);
    const int n = x->rows();
    const int ch = x->channels;
    for (int r = 0; r < n; ++r) {
        const VoxelCoord& c = x->cs->coords()[r];
        if (!y->contains(c)) continue;
        for (int cc = 0; cc < ch; ++cc)
            y->val[y->index(c.batch, cc, c.x - origin.x, c.y - origin.y, c.z - origin.z)] =
                x->val[static_cast<size_t>(r) * ch + cc];
    }
    tape.push_op([x, y, origin, n, ch]() {
        for (int r = 0; r < n; ++r) {
            const VoxelCoord& c = x->cs->coords()[r];
            if (!y->contains(c)) continue;
            for (int cc = 0; cc < ch; ++cc)
                x->grad[static_cast<size_t>(r) * ch + cc] +=
                    y->grad[y->index(c.batch, cc, c.x - origin.x, c.y - origin.y, c.z - origin.z)];
        }
    });
    return y;
}

/// Gather dense values at the given coordinates. Out-of-range coordinates
/// are an error.
template <class T>
SparseNode<T>* to_sparse(Tape<T>& tape, DenseNode<T>* x, std::shared_ptr<const CoordSet> cs) {
    for (const auto& c : cs->coords())
        if (!x->contains(c)) throw std::out_of_range("to_sparse: coordinate outside dense box");
    SparseNode<T>* y = tape.new_sparse(std::move(cs), x->c);
    const int n = y->rows();
    const int ch = x->c;
    const VoxelCoord origin = x->origin;
    for (int r = 0; r < n; ++r) {
        const VoxelCoord& c = y->cs->coords()[r];
        for (int cc = 0; cc < ch; ++cc)
            y->val[static_cast<size_t>(r) * ch + cc] =
                x->val[x->index(c.batch, cc, c.x - origin.x, c.y - origin.y, c.z - origin.z)];
    }
    tape.push_op([x, y, origin, n, ch]() {
        for (int r = 0; r < n; ++r) {
            const VoxelCoord& c = y->cs->coords()[r];
            for (int cc = 0; cc < ch; ++cc)
                x->grad[x->index(c.batch, cc, c.x - origin.x, c.y - origin.y, c.z - origin.z)] +=
                    y->grad[static_cast<size_t>(r) * ch + cc];
        }
    });
    return y;
}

/// Select a subset of rows into a new coordinate set (all selected
/// coordinates must exist in the source).
template <class T>
SparseNode<T>* sparse_gather(Tape<T>& tape, SparseNode<T>* x, std::shared_ptr<const CoordSet> cs) {
    SparseNode<T>* y = tape.new_sparse(std::move(cs), x->channels);
    const int n = y->rows();
    const int ch = x->channels;
    auto rows = std::make_shared<std::vector<int32_t>>(n);
    for (int r = 0; r < n; ++r) {
        const int32_t src = x->cs->find(y->cs->coords()[r]);
        if (src < 0) throw std::out_of_range("sparse_gather: coordinate missing from source");
        (*rows)[r] = src;
        for (int cc = 0; cc < ch; ++cc)
            y->val[static_cast<size_t>(r) * ch + cc] = x->val[static_cast<size_t>(src) * ch + cc];
    }
    tape.push_op([x, y, rows, n, ch]() {
        for (int r = 0; r < n; ++r)
            for (int cc = 0; cc < ch; ++cc)
                x->grad[static_cast<size_t>((*rows)[r]) * ch + cc] += y->grad[static_cast<size_t>(r) * ch + cc];
    });
    return y;
}

/// U-Net style sparse skip: output coordinates are dst's; src features are
/// concatenated where the coordinate is shared, zero rows otherwise.
template <class T>
SparseNode<T>* skip_concat(Tape<T>& tape, SparseNode<T>* dst, SparseNode<T>* src) {
    const int cd = dst->channels, cs_ch = src->channels;
    SparseNode<T>* y = tape.new_sparse(dst->cs, cd + cs_ch);
    const int n = dst->rows();
    auto src_rows = std::make_shared<std::vector<int32_t>>(n);
    for (int r = 0; r < n; ++r) {
        (*src_rows)[r] = src->cs->find(dst->cs->coords()[r]);
        T* yr = &y->val[static_cast<size_t>(r) * (cd + cs_ch)];
        const T* dr = &dst->val[static_cast<size_t>(r) * cd];
        for (int c = 0; c < cd; ++c) yr[c] = dr[c];
        const int32_t sr = (*src_rows)[r];
        if (sr >= 0) {
            const T* srow = &src->val[static_cast<size_t>(sr) * cs_ch];
            for (int c = 0; c < cs_ch; ++c) yr[cd + c] = srow[c];
        }
    }
    tape.push_op([dst, src, y, src_rows, cd, cs_ch, n]() {
        for (int r = 0; r < n; ++r) {
            const T* gy = &y->grad[static_cast<size_t>(r) * (cd + cs_ch)];
            T* gd = &dst->grad[static_cast<size_t>(r) * cd];
            for (int c = 0; c < cd; ++c) gd[c] += gy[c];
            const int32_t sr = (*src_rows)[r];
            if (sr >= 0) {
                T* gs = &src->grad[static_cast<size_t>(sr) * cs_ch];
                for (int c = 0; c < cs_ch; ++c) gs[c] += gy[cd + c];
            }
        }
    });
    return y;
}

/// Channel-wise concatenation of two tensors on the same coordinate set.
template <class T>
SparseNode<T>* concat_features(Tape<T>& tape, SparseNode<T>* a, SparseNode<T>* b) {
    if (a->cs != b->cs && a->cs->coords() != b->cs->coords())
        throw std::invalid_argument("concat_features: coordinate sets differ");
    const int ca = a->channels, cb = b->channels;
    SparseNode<T>* y = tape.new_sparse(a->cs, ca + cb);
    const int n = a->rows();
    for (int r = 0; r < n; ++r) {
        T* yr = &y->val[static_cast<size_t>(r) * (ca + cb)];
        const T* ar = &a->val[static_cast<size_t>(r) * ca];
        const T* br = &b->val[static_cast<size_t>(r) * cb];
        for (int c = 0; c < ca; ++c) yr[c] = ar[c];
        for (int c = 0; c < cb; ++c) yr[ca + c] = br[c];
    }
    tape.push_op([a, b, y, ca, cb, n]() {
        for (int r = 0; r < n; ++r) {
            const T* gy = &y->grad[static_cast<size_t>(r) * (ca + cb)];
            T* ga = &a->grad[static_cast<size_t>(r) * ca];
            T* gb = &b->grad[static_cast<size_t>(r) * cb];
            for (int c = 0; c < ca; ++c) ga[c] += gy[c];
            for (int c = 0; c < cb; ++c) gb[c] += gy[ca + c];
        }
    });
    return y;
}

/// Elementwise addition; coordinate sets must be identical.
template <class T>
SparseNode<T>* add(Tape<T>& tape, SparseNode<T>* a, SparseNode<T>* b) {
    if (a->channels != b->channels) throw std::invalid_argument("add: channel mismatch");
    if (a->cs != b->cs && a->cs->coords() != b->cs->coords())
        throw std::invalid_argument("add: coordinate sets differ");
    SparseNode<T>* y = tape.new_sparse(a->cs, a->channels);
    for (size_t i = 0; i < a->val.size(); ++i) y->val[i] = a->val[i] + b->val[i];
    tape.push_op([a, b, y]() {
        for (size_t i = 0; i < y->grad.size(); ++i) {
            a->grad[i] += y->grad[i];
            b->grad[i] += y->grad[i];
        }
    });
    return y;
}

// ---------------------------------------------------------------------------
// elementwise activations

namespace detail {

template <class T, class Node, class Fwd, class Bwd>
Node* elementwise(Tape<T>& tape, Node* x, Node* y, Fwd fwd, Bwd bwd) {
    for (size_t i = 0; i < x->val.size(); ++i) y->val[i] = fwd(x->val[i]);
    tape.push_op([x, y, bwd]() {
        for (size_t i = 0; i < x->val.size(); ++i) x->grad[i] += bwd(x->val[i], y->val[i]) * y->grad[i];
    });
    return y;
}

}  // namespace detail

template <class T>
SparseNode<T>* relu(Tape<T>& tape, SparseNode<T>* x) {
    return detail::elementwise(
        tape, x, tape.new_sparse(x->cs, x->channels), [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
DenseNode<T>* relu(Tape<T>& tape, DenseNode<T>* x) {
    return detail::elementwise(
        tape, x, tape.new_dense(x->b, x->c, x->dx, x->dy, x->dz, x->origin), [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
SparseNode<T>* sigmoid(Tape<T>& tape, SparseNode<T>* x) {
    return detail::elementwise(
        tape, x, tape.new_sparse(x->cs, x->channels), [](T v) { return stable_sigmoid(v); },
        [](T, T s) { return s * (T(1) - s); });
}

template <class T>
DenseNode<T>* sigmoid(Tape<T>& tape, DenseNode<T>* x) {
    return detail::elementwise(
        tape, x, tape.new_dense(x->b, x->c, x->dx, x->dy, x->dz, x->origin), [](T v) { return stable_sigmoid(v); },
        [](T, T s) { return s * (T(1) - s); });
}

/// Hard clamp; the gradient passes where lo <= x <= hi.
template <class T>
SparseNode<T>* clamp(Tape<T>& tape, SparseNode<T>* x, T lo, T hi) {
    return detail::elementwise(
        tape, x, tape.new_sparse(x->cs, x->channels),
        [lo, hi](T v) { return std::clamp(v, lo, hi); },
        [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// batch normalization

namespace detail {

/// Shared batchnorm core. Rows are presented as (count, stride-1 channel
/// accessor); partial statistics are accumulated per sample and combined in
/// value order so train-mode statistics are invariant to sample order.
template <class T>
struct BnStats {
    std::vector<T> mean, inv_std;
};

}  // namespace detail

template <class T>
SparseNode<T>* batchnorm(Tape<T>& tape, SparseNode<T>* x, BatchNorm<T>& bn, bool training) {
    const int ch = x->channels;
    check_channels<T>(ch, bn.channels(), "batchnorm");
    SparseNode<T>* y = tape.new_sparse(x->cs, ch);
    const int n = x->rows();
    auto stats = std::make_shared<detail::BnStats<T>>();
    stats->mean.resize(ch);
    stats->inv_std.resize(ch);

    if (training && n > 0) {
        const auto& ranges = x->cs->batch_ranges();
        for (int c = 0; c < ch; ++c) {
            std::vector<double> parts_sum, parts_sq;
            parts_sum.reserve(ranges.size());
            parts_sq.reserve(ranges.size());
            for (const auto& [beg, end] : ranges) {
                double s = 0.0, s2 = 0.0;
                for (int r = beg; r < end; ++r) {
                    const double v = static_cast<double>(x->val[static_cast<size_t>(r) * ch + c]);
                    s += v;
                    s2 += v * v;
                }
                parts_sum.push_back(s);
                parts_sq.push_back(s2);
            }
            const double mean = combine_partials(std::move(parts_sum)) / n;
            const double var = std::max(0.0, combine_partials(std::move(parts_sq)) / n - mean * mean);
            stats->mean[c] = static_cast<T>(mean);
            stats->inv_std[c] = T(1) / std::sqrt(static_cast<T>(var) + bn.eps);
            bn.running_mean[c] = (T(1) - bn.momentum) * bn.running_mean[c] + bn.momentum * static_cast<T>(mean);
            bn.running_var[c] = (T(1) - bn.momentum) * bn.running_var[c] + bn.momentum * static_cast<T>(var);
        }
    } else {
        for (int c = 0; c < ch; ++c) {
            stats->mean[c] = bn.running_mean[c];
            stats->inv_std[c] = T(1) / std::sqrt(bn.running_var[c] + bn.eps);
        }
    }

    for (int r = 0; r < n; ++r)
        for (int c = 0; c < ch; ++c) {
            const size_t i = static_cast<size_t>(r) * ch + c;
            y->val[i] = bn.gamma.val[c] * (x->val[i] - stats->mean[c]) * stats->inv_std[c] + bn.beta.val[c];
        }

    tape.push_op([x, y, &bn, stats, training, n, ch]() {
        if (n == 0) return;
        for (int c = 0; c < ch; ++c) {
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int r = 0; r < n; ++r) {
                const size_t i = static_cast<size_t>(r) * ch + c;
                const double xhat = static_cast<double>((x->val[i] - stats->mean[c]) * stats->inv_std[c]);
                const double gy = static_cast<double>(y->grad[i]);
                sum_gy += gy;
                sum_gy_xhat += gy * xhat;
            }
            bn.beta.grad[c] += static_cast<T>(sum_gy);
            bn.gamma.grad[c] += static_cast<T>(sum_gy_xhat);
            const double g = static_cast<double>(bn.gamma.val[c]);
            const double is = static_cast<double>(stats->inv_std[c]);
            for (int r = 0; r < n; ++r) {
                const size_t i = static_cast<size_t>(r) * ch + c;
                const double gy = static_cast<double>(y->grad[i]);
                if (training) {
                    const double xhat = static_cast<double>((x->val[i] - stats->mean[c]) * stats->inv_std[c]);
                    x->grad[i] += static_cast<T>(g * is * (gy - sum_gy / n - xhat * sum_gy_xhat / n));
                } else {
                    x->grad[i] += static_cast<T>(g * is * gy);
                }
            }
        }
    });
    return y;
}

template <class T>
DenseNode<T>* batchnorm(Tape<T>& tape, DenseNode<T>* x, BatchNorm<T>& bn, bool training) {
    const int ch = x->c;
    check_channels<T>(ch, bn.channels(), "batchnorm");
    DenseNode<T>* y = tape.new_dense(x->b, ch, x->dx, x->dy, x->dz, x->origin);
    const size_t sp = x->spatial();
    const size_t n = static_cast<size_t>(x->b) * sp;
    auto stats = std::make_shared<detail::BnStats<T>>();
    stats->mean.resize(ch);
    stats->inv_std.resize(ch);

    if (training && n > 0) {
        for (int c = 0; c < ch; ++c) {
            std::vector<double> parts_sum, parts_sq;
            for (int bb = 0; bb < x->b; ++bb) {
                double s = 0.0, s2 = 0.0;
                const T* base = &x->val[(static_cast<size_t>(bb) * ch + c) * sp];
                for (size_t i = 0; i < sp; ++i) {
                    const double v = static_cast<double>(base[i]);
                    s += v;
                    s2 += v * v;
                }
                parts_sum.push_back(s);
                parts_sq.push_back(s2);
            }
            const double mean = combine_partials(std::move(parts_sum)) / static_cast<double>(n);
            const double var =
                std::max(0.0, combine_partials(std::move(parts_sq)) / static_cast<double>(n) - mean * mean);
            stats->mean[c] = static_cast<T>(mean);
            stats->inv_std[c] = T(1) / std::sqrt(static_cast<T>(var) + bn.eps);
            bn.running_mean[c] = (T(1) - bn.momentum) * bn.running_mean[c] + bn.momentum * static_cast<T>(mean);
            bn.running_var[c] = (T(1) - bn.momentum) * bn.running_var[c] + bn.momentum * static_cast<T>(var);
        }
    } else {
        for (int c = 0; c < ch; ++c) {
            stats->mean[c] = bn.running_mean[c];
            stats->inv_std[c] = T(1) / std::sqrt(bn.running_var[c] + bn.eps);
        }
    }

    for (int bb = 0; bb < x->b; ++bb)
        for (int c = 0; c < ch; ++c) {
            const T* xb = &x->val[(static_cast<size_t>(bb) * ch + c) * sp];
            T* yb = &y->val[(static_cast<size_t>(bb) * ch + c) * sp];
            for (size_t i = 0; i < sp; ++i)
                yb[i] = bn.gamma.val[c] * (xb[i] - stats->mean[c]) * stats->inv_std[c] + bn.beta.val[c];
        }

    tape.push_op([x, y, &bn, stats, training, ch, sp]() {
        const size_t n = static_cast<size_t>(x->b) * sp;
        if (n == 0) return;
        for (int c = 0; c < ch; ++c) {
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int bb = 0; bb < x->b; ++bb) {
                const T* xb = &x->val[(static_cast<size_t>(bb) * ch + c) * sp];
                const T* gyb = &y->grad[(static_cast<size_t>(bb) * ch + c) * sp];
                for (size_t i = 0; i < sp; ++i) {
                    const double xhat = static_cast<double>((xb[i] - stats->mean[c]) * stats->inv_std[c]);
                    sum_gy += static_cast<double>(gyb[i]);
                    sum_gy_xhat += static_cast<double>(gyb[i]) * xhat;
                }
            }
            bn.beta.grad[c] += static_cast<T>(sum_gy);
            bn.gamma.grad[c] += static_cast<T>(sum_gy_xhat);
            const double g = static_cast<double>(bn.gamma.val[c]);
            const double is = static_cast<double>(stats->inv_std[c]);
            for (int bb = 0; bb < x->b; ++bb) {
                const T* xb = &x->val[(static_cast<size_t>(bb) * ch + c) * sp];
                const T* gyb = &y->grad[(static_cast<size_t>(bb) * ch + c) * sp];
                T* gxb = &x->grad[(static_cast<size_t>(bb) * ch + c) * sp];
                for (size_t i = 0; i < sp; ++i) {
                    const double gy = static_cast<double>(gyb[i]);
                    if (training) {
                        const double xhat = static_cast<double>((xb[i] - stats->mean[c]) * stats->inv_std[c]);
                        gxb[i] += static_cast<T>(
                            g * is * (gy - sum_gy / static_cast<double>(n) - xhat * sum_gy_xhat / static_cast<double>(n)));
                    } else {
                        gxb[i] += static_cast<T>(g * is * gy);
                    }
                }
            }
        }
    });
    return y;
}

// ---------------------------------------------------------------------------
// gating

/// Occupancy gate: keeps coordinates with sigmoid(O) > 0.5 (strict), plus
/// any extra coordinates present in the level's coordinate set (training
/// augmentation); features are concat(F, O, S).
template <class T>
SparseNode<T>* sparsify_gate(Tape<T>& tape, SparseNode<T>* occ_logits, SparseNode<T>* feats, SparseNode<T>* sdf,
                             const std::vector<VoxelCoord>& extra = {}) {
    if (occ_logits->channels != 1 || sdf->channels != 1)
        throw std::invalid_argument("sparsify_gate: occupancy and sdf must be 1-channel");
    if (occ_logits->cs != feats->cs || occ_logits->cs != sdf->cs)
        throw std::invalid_argument("sparsify_gate: tensors must share a coordinate set");
    std::vector<VoxelCoord> selected;
    for (int r = 0; r < occ_logits->rows(); ++r)
        if (gate_open(occ_logits->val[r])) selected.push_back(occ_logits->cs->coords()[r]);
    for (const auto& c : extra)
        if (occ_logits->cs->find(c) >= 0) selected.push_back(c);
    auto cs = CoordSet::make(std::move(selected));
    SparseNode<T>* all = concat_features(tape, concat_features(tape, feats, occ_logits), sdf);
    return sparse_gather(tape, all, std::move(cs));
}

/// Dense variant for the coarse level: scans every cell of the box.
template <class T>
SparseNode<T>* sparsify_gate(Tape<T>& tape, DenseNode<T>* occ_logits, DenseNode<T>* feats, DenseNode<T>* sdf,
                             const std::vector<VoxelCoord>& extra = {}) {
    if (occ_logits->c != 1 || sdf->c != 1)
        throw std::invalid_argument("sparsify_gate: occupancy and sdf must be 1-channel");
    std::vector<VoxelCoord> selected;
    for (int bb = 0; bb < occ_logits->b; ++bb)
        for (int iz = 0; iz < occ_logits->dz; ++iz)
            for (int iy = 0; iy < occ_logits->dy; ++iy)
                for (int ix = 0; ix < occ_logits->dx; ++ix)
                    if (gate_open(occ_logits->val[occ_logits->index(bb, 0, ix, iy, iz)]))
                        selected.push_back(VoxelCoord{occ_logits->origin.x + ix, occ_logits->origin.y + iy,
                                                      occ_logits->origin.z + iz, bb});
    for (const auto& c : extra)
        if (occ_logits->contains(c)) selected.push_back(c);
    auto cs = CoordSet::make(std::move(selected));
    SparseNode<T>* f = to_sparse(tape, feats, cs);
    SparseNode<T>* o = to_sparse(tape, occ_logits, cs);
    SparseNode<T>* s = to_sparse(tape, sdf, cs);
    return concat_features(tape, concat_features(tape, f, o), s);
}

// ---------------------------------------------------------------------------
// scalar combination

template <class T>
ScalarNode<T>* weighted_sum(Tape<T>& tape, const std::vector<std::pair<T, ScalarNode<T>*>>& terms) {
    ScalarNode<T>* y = tape.new_scalar();
    for (const auto& [w, s] : terms) y->val += w * s->val;
    tape.push_op([y, terms]() {
        for (const auto& [w, s] : terms) s->grad += w * y->grad;
    });
    return y;
}

}  // namespace sgnn::nn
