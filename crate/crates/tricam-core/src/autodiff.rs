//! Minimal reverse-mode automatic differentiation over dense f64 buffers.
//!
//! A [`Tape`] records a forward pass as a flat list of nodes. Parameters
//! live in one flat `&[f64]` owned by the caller; parameter nodes reference
//! segments of it, so re-taping a forward pass never copies weights.
//! [`Tape::backward_param_grads`] walks the list in reverse and accumulates
//! `d(root)/d(param)` into a caller-provided flat buffer, which makes
//! chunked batch accumulation an ordered `+=` per chunk.
//!
//! The op set is exactly what the gaze network needs: dense and 3×3-valid
//! convolution layers, 2×2 average pooling, softsign, row scaling, row softmax,
//! column concatenation, masked squared-error sums, and scalar linear
//! combinations. Softmax sums its exponentials in value order so the output
//! is exactly equivariant under permutation of the logits.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Id(usize);

// Eight-lane dot product: the fixed accumulator split lets the compiler keep
// the loop in SIMD registers without reassociating floats behind our back,
// so results are identical on every target.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (a8, ar) = (a.chunks_exact(8), a.chunks_exact(8).remainder());
    let b8 = b.chunks_exact(8);
    for (x, y) in a8.zip(b8) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s =
        ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ar.iter().zip(&b[a.len() - ar.len()..]) {
        s += x * y;
    }
    s
}

// Dot product over `rows` row pairs with different strides, folding the
// lanes only once at the end. `a` rows start at `a_off + r·a_stride`, `b`
// rows at `r·b_stride`; both are `len` wide.
#[allow(clippy::too_many_arguments)]
fn dot_rows(
    a: &[f64],
    a_off: usize,
    a_stride: usize,
    b: &[f64],
    b_stride: usize,
    rows: usize,
    len: usize,
) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut tail = 0.0f64;
    for r in 0..rows {
        let ar = &a[a_off + r * a_stride..a_off + r * a_stride + len];
        let br = &b[r * b_stride..r * b_stride + len];
        let (a8, rem) = (ar.chunks_exact(8), ar.chunks_exact(8).remainder());
        for (x, y) in a8.zip(br.chunks_exact(8)) {
            for k in 0..8 {
                acc[k] += x[k] * y[k];
            }
        }
        for (x, y) in rem.iter().zip(&br[len - rem.len()..]) {
            tail += x * y;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

enum Storage {
    Owned(Vec<f64>),
    Param { offset: usize, len: usize },
}

enum Op {
    Leaf,
    Dense { x: Id, w: Id, b: Id, n: usize, i: usize, o: usize },
    Conv3x3 { x: Id, w: Id, b: Id, n: usize, cin: usize, cout: usize, h: usize, wd: usize },
    Conv3x3S2 { x: Id, w: Id, b: Id, n: usize, cin: usize, cout: usize, h: usize, wd: usize },
    AvgPool2 { x: Id, chans: usize, h: usize, wd: usize },
    Softsign { x: Id },
    ScaleRows { x: Id, s: Id, rows: usize, cols: usize },
    SoftmaxRows { x: Id, rows: usize, cols: usize },
    ConcatCols { parts: Vec<(Id, usize)>, rows: usize },
    SqErrSum { pred: Id, target: Id, row_mask: Option<Id>, rows: usize, cols: usize, scale: f64 },
    Lincomb { terms: Vec<(Id, f64)> },
}

impl Op {
    fn inputs(&self, mut visit: impl FnMut(Id)) {
        match self {
            Op::Leaf => {}
            Op::Dense { x, w, b, .. }
            | Op::Conv3x3 { x, w, b, .. }
            | Op::Conv3x3S2 { x, w, b, .. } => {
                visit(*x);
                visit(*w);
                visit(*b);
            }
            Op::AvgPool2 { x, .. } | Op::Softsign { x } | Op::SoftmaxRows { x, .. } => visit(*x),
            Op::ScaleRows { x, s, .. } => {
                visit(*x);
                visit(*s);
            }
            Op::ConcatCols { parts, .. } => {
                for &(id, _) in parts {
                    visit(id);
                }
            }
            Op::SqErrSum { pred, .. } => visit(*pred),
            Op::Lincomb { terms } => {
                for &(id, _) in terms {
                    visit(id);
                }
            }
        }
    }
}

struct Node {
    value: Storage,
    op: Op,
}

/// Recorded forward pass over a flat parameter buffer.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape { params, nodes: Vec::with_capacity(64) }
    }

    /// Value buffer of a node.
    pub fn value(&self, id: Id) -> &[f64] {
        match &self.nodes[id.0].value {
            Storage::Owned(v) => v,
            Storage::Param { offset, len } => &self.params[*offset..offset + len],
        }
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, id: Id) -> f64 {
        self.value(id)[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Id {
        self.nodes.push(Node { value: Storage::Owned(value), op });
        Id(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, data: Vec<f64>) -> Id {
        self.push(data, Op::Leaf)
    }

    /// Leaf referencing `params[offset..offset+len]`.
    pub fn param(&mut self, offset: usize, len: usize) -> Id {
        debug_assert!(offset + len <= self.params.len());
        self.nodes.push(Node { value: Storage::Param { offset, len }, op: Op::Leaf });
        Id(self.nodes.len() - 1)
    }

    /// `x (n×i) · w (i×o) + b (o)`, row-major throughout.
    pub fn dense(&mut self, x: Id, w: Id, b: Id, n: usize, i: usize, o: usize) -> Id {
        let mut out = vec![0.0; n * o];
        {
            let xv = self.value(x);
            let wv = self.value(w);
            let bv = self.value(b);
            for r in 0..n {
                let row = &mut out[r * o..(r + 1) * o];
                row.copy_from_slice(bv);
                let xr = &xv[r * i..(r + 1) * i];
                for (k, &a) in xr.iter().enumerate() {
                    let wrow = &wv[k * o..(k + 1) * o];
                    for (dst, &wk) in row.iter_mut().zip(wrow) {
                        *dst += a * wk;
                    }
                }
            }
        }
        self.push(out, Op::Dense { x, w, b, n, i, o })
    }

    /// Valid 3×3 convolution, stride 1. `x` is (n, cin, h, wd); `w` is
    /// (cout, cin, 3, 3); output is (n, cout, h−2, wd−2).
    pub fn conv3x3(
        &mut self,
        x: Id,
        w: Id,
        b: Id,
        n: usize,
        cin: usize,
        cout: usize,
        h: usize,
        wd: usize,
    ) -> Id {
        let (oh, ow) = (h - 2, wd - 2);
        let mut out = vec![0.0; n * cout * oh * ow];
        {
            let xv = self.value(x);
            let wv = self.value(w);
            let bv = self.value(b);
            for img in 0..n {
                let xn = &xv[img * cin * h * wd..];
                let on = &mut out[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                for oc in 0..cout {
                    let plane = &mut on[oc * oh * ow..(oc + 1) * oh * ow];
                    plane.fill(bv[oc]);
                    for ic in 0..cin {
                        let xplane = &xn[ic * h * wd..(ic + 1) * h * wd];
                        let w9 = &wv[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                        for ky in 0..3 {
                            let (w0, w1, w2) = (w9[ky * 3], w9[ky * 3 + 1], w9[ky * 3 + 2]);
                            for y in 0..oh {
                                let src = &xplane[(y + ky) * wd..(y + ky) * wd + ow + 2];
                                let dst = &mut plane[y * ow..y * ow + ow];
                                let (s0, s1, s2) = (&src[..ow], &src[1..=ow], &src[2..]);
                                for (((d, &a), &b), &c) in
                                    dst.iter_mut().zip(s0).zip(s1).zip(s2)
                                {
                                    *d += w0 * a + w1 * b + w2 * c;
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(out, Op::Conv3x3 { x, w, b, n, cin, cout, h, wd })
    }

    /// Valid 3×3 convolution with stride 2: the downsampling twin of
    /// [`Self::conv3x3`] + [`Self::avg_pool2`], with identical output
    /// dimensions and parameter shapes. `x` is (n, cin, h, wd); output is
    /// (n, cout, (h−3)/2+1, (wd−3)/2+1).
    pub fn conv3x3_s2(
        &mut self,
        x: Id,
        w: Id,
        b: Id,
        n: usize,
        cin: usize,
        cout: usize,
        h: usize,
        wd: usize,
    ) -> Id {
        let (oh, ow) = ((h - 3) / 2 + 1, (wd - 3) / 2 + 1);
        let mut out = vec![0.0; n * cout * oh * ow];
        {
            let xv = self.value(x);
            let wv = self.value(w);
            let bv = self.value(b);
            for img in 0..n {
                let xn = &xv[img * cin * h * wd..];
                let on = &mut out[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                for oc in 0..cout {
                    let plane = &mut on[oc * oh * ow..(oc + 1) * oh * ow];
                    plane.fill(bv[oc]);
                    for ic in 0..cin {
                        let xplane = &xn[ic * h * wd..(ic + 1) * h * wd];
                        let w9 = &wv[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                        for ky in 0..3 {
                            let (w0, w1, w2) = (w9[ky * 3], w9[ky * 3 + 1], w9[ky * 3 + 2]);
                            for y in 0..oh {
                                let src = &xplane[(2 * y + ky) * wd..(2 * y + ky) * wd + 2 * ow + 1];
                                let dst = &mut plane[y * ow..y * ow + ow];
                                for (xo, d) in dst.iter_mut().enumerate() {
                                    let v = 2 * xo;
                                    *d += w0 * src[v] + w1 * src[v + 1] + w2 * src[v + 2];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(out, Op::Conv3x3S2 { x, w, b, n, cin, cout, h, wd })
    }

    /// 2×2 average pooling over (chans, h, wd) planes; trailing odd row or
    /// column is dropped.
    pub fn avg_pool2(&mut self, x: Id, chans: usize, h: usize, wd: usize) -> Id {
        let (oh, ow) = (h / 2, wd / 2);
        let mut out = vec![0.0; chans * oh * ow];
        {
            let xv = self.value(x);
            for c in 0..chans {
                let xp = &xv[c * h * wd..(c + 1) * h * wd];
                let op = &mut out[c * oh * ow..(c + 1) * oh * ow];
                for y in 0..oh {
                    for x_ in 0..ow {
                        let base = 2 * y * wd + 2 * x_;
                        op[y * ow + x_] =
                            0.25 * (xp[base] + xp[base + 1] + xp[base + wd] + xp[base + wd + 1]);
                    }
                }
            }
        }
        self.push(out, Op::AvgPool2 { x, chans, h, wd })
    }

    /// Softsign activation `x / (1 + |x|)`: bounded, monotone, and cheap —
    /// a division instead of a transcendental call in the hot path.
    pub fn softsign(&mut self, x: Id) -> Id {
        let out: Vec<f64> = self.value(x).iter().map(|&v| v / (1.0 + v.abs())).collect();
        self.push(out, Op::Softsign { x })
    }

    /// Scale each row `r` of `x` (rows×cols) by `s[r]`.
    pub fn scale_rows(&mut self, x: Id, s: Id, rows: usize, cols: usize) -> Id {
        let mut out = vec![0.0; rows * cols];
        {
            let xv = self.value(x);
            let sv = self.value(s);
            for r in 0..rows {
                let f = sv[r];
                for c in 0..cols {
                    out[r * cols + c] = xv[r * cols + c] * f;
                }
            }
        }
        self.push(out, Op::ScaleRows { x, s, rows, cols })
    }

    /// Row-wise softmax. The exponential sum is accumulated in ascending
    /// value order, so permuting a row's entries permutes the outputs
    /// bit-exactly.
    pub fn softmax_rows(&mut self, x: Id, rows: usize, cols: usize) -> Id {
        let mut out = vec![0.0; rows * cols];
        {
            let xv = self.value(x);
            let mut exps: Vec<f64> = vec![0.0; cols];
            let mut sorted: Vec<f64> = vec![0.0; cols];
            for r in 0..rows {
                let row = &xv[r * cols..(r + 1) * cols];
                let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                for (e, &v) in exps.iter_mut().zip(row) {
                    *e = (v - m).exp();
                }
                sorted.copy_from_slice(&exps);
                sorted.sort_by(f64::total_cmp);
                let denom: f64 = sorted.iter().sum();
                for (o, &e) in out[r * cols..(r + 1) * cols].iter_mut().zip(exps.iter()) {
                    *o = e / denom;
                }
            }
        }
        self.push(out, Op::SoftmaxRows { x, rows, cols })
    }

    /// Concatenate blocks along the column axis. `parts` holds (node, cols);
    /// every part must have `rows` rows.
    pub fn concat_cols(&mut self, parts: &[(Id, usize)], rows: usize) -> Id {
        let total: usize = parts.iter().map(|&(_, c)| c).sum();
        let mut out = vec![0.0; rows * total];
        {
            let mut col0 = 0;
            for &(id, cols) in parts {
                let v = self.value(id);
                for r in 0..rows {
                    out[r * total + col0..r * total + col0 + cols]
                        .copy_from_slice(&v[r * cols..(r + 1) * cols]);
                }
                col0 += cols;
            }
        }
        self.push(out, Op::ConcatCols { parts: parts.to_vec(), rows })
    }

    /// Scalar `scale · Σ_r mask_r · Σ_c (pred − target)²`. `target` and the
    /// optional per-row mask are constants.
    pub fn sq_err_sum(
        &mut self,
        pred: Id,
        target: Id,
        row_mask: Option<Id>,
        rows: usize,
        cols: usize,
        scale: f64,
    ) -> Id {
        let mut acc = 0.0;
        {
            let pv = self.value(pred);
            let tv = self.value(target);
            for r in 0..rows {
                let m = match row_mask {
                    Some(mid) => self.value(mid)[r],
                    None => 1.0,
                };
                if m == 0.0 {
                    continue;
                }
                let mut row_acc = 0.0;
                for c in 0..cols {
                    let d = pv[r * cols + c] - tv[r * cols + c];
                    row_acc += d * d;
                }
                acc += m * row_acc;
            }
        }
        self.push(vec![acc * scale], Op::SqErrSum { pred, target, row_mask, rows, cols, scale })
    }

    /// Scalar `Σ coeff_k · term_k` over scalar nodes.
    pub fn lincomb(&mut self, terms: &[(Id, f64)]) -> Id {
        let v = terms.iter().map(|&(id, c)| self.scalar(id) * c).sum();
        self.push(vec![v], Op::Lincomb { terms: terms.to_vec() })
    }

    fn value_len(&self, id: Id) -> usize {
        match &self.nodes[id.0].value {
            Storage::Owned(v) => v.len(),
            Storage::Param { len, .. } => *len,
        }
    }

    /// Reverse sweep from the scalar node `root`, adding `d root / d params`
    /// into `grads_out` (which must have the same length as the parameter
    /// buffer).
    pub fn backward_param_grads(&self, root: Id, grads_out: &mut [f64]) {
        assert_eq!(grads_out.len(), self.params.len(), "gradient buffer length mismatch");
        assert_eq!(self.value_len(root), 1, "backward root must be scalar");

        // nodes that can influence a parameter; constants and anything fed
        // only by constants get no gradient buffer and no backward work
        let mut needs: Vec<bool> = vec![false; self.nodes.len()];
        for idx in 0..self.nodes.len() {
            let node = &self.nodes[idx];
            needs[idx] = match node.op {
                Op::Leaf => matches!(node.value, Storage::Param { .. }),
                _ => {
                    let mut any = false;
                    node.op.inputs(|id| any |= needs[id.0]);
                    any
                }
            };
        }
        let needs = needs;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..self.nodes.len()).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    if let Storage::Param { offset, len } = self.nodes[idx].value {
                        for (dst, src) in grads_out[offset..offset + len].iter_mut().zip(&g) {
                            *dst += src;
                        }
                    }
                }
                Op::Dense { x, w, b, n, i, o } => {
                    let (n, i, o) = (*n, *i, *o);
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if needs[x.0] {
                        let gx = ensure(&mut grads, *x, n * i);
                        for r in 0..n {
                            let grow = &g[r * o..(r + 1) * o];
                            for k in 0..i {
                                gx[r * i + k] += dot(grow, &wv[k * o..(k + 1) * o]);
                            }
                        }
                    }
                    {
                        let gw = ensure(&mut grads, *w, i * o);
                        for r in 0..n {
                            let grow = &g[r * o..(r + 1) * o];
                            let xr = &xv[r * i..(r + 1) * i];
                            for (k, &a) in xr.iter().enumerate() {
                                if a == 0.0 {
                                    continue;
                                }
                                let dst = &mut gw[k * o..(k + 1) * o];
                                for (d, gj) in dst.iter_mut().zip(grow) {
                                    *d += a * gj;
                                }
                            }
                        }
                    }
                    {
                        let gb = ensure(&mut grads, *b, o);
                        for r in 0..n {
                            for (d, gj) in gb.iter_mut().zip(&g[r * o..(r + 1) * o]) {
                                *d += gj;
                            }
                        }
                    }
                }
                Op::Conv3x3 { x, w, b, n, cin, cout, h, wd } => {
                    let (n, cin, cout, h, wd) = (*n, *cin, *cout, *h, *wd);
                    let (oh, ow) = (h - 2, wd - 2);
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if needs[x.0] {
                        let gx = ensure(&mut grads, *x, n * cin * h * wd);
                        // zero-padded upstream row: dx[v] picks taps g[v-kx],
                        // so one pass per ky covers all three kx offsets
                        let mut pad = vec![0.0; ow + 4];
                        for img in 0..n {
                            let gn = &g[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                            let gxn = &mut gx[img * cin * h * wd..(img + 1) * cin * h * wd];
                            for oc in 0..cout {
                                let gplane = &gn[oc * oh * ow..(oc + 1) * oh * ow];
                                for y in 0..oh {
                                    pad[2..2 + ow].copy_from_slice(&gplane[y * ow..y * ow + ow]);
                                    for ic in 0..cin {
                                        let gxp = &mut gxn[ic * h * wd..(ic + 1) * h * wd];
                                        let w9 =
                                            &wv[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                                        for ky in 0..3 {
                                            let (w0, w1, w2) =
                                                (w9[ky * 3], w9[ky * 3 + 1], w9[ky * 3 + 2]);
                                            let dst =
                                                &mut gxp[(y + ky) * wd..(y + ky) * wd + wd];
                                            let (p0, p1, p2) =
                                                (&pad[..wd], &pad[1..=wd], &pad[2..wd + 2]);
                                            for (((d, &a), &b), &c) in
                                                dst.iter_mut().zip(p2).zip(p1).zip(p0)
                                            {
                                                *d += w0 * a + w1 * b + w2 * c;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gw = ensure(&mut grads, *w, cout * cin * 9);
                        for img in 0..n {
                            let xn = &xv[img * cin * h * wd..(img + 1) * cin * h * wd];
                            let gn = &g[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                            for oc in 0..cout {
                                let gplane = &gn[oc * oh * ow..(oc + 1) * oh * ow];
                                for ic in 0..cin {
                                    let xp = &xn[ic * h * wd..(ic + 1) * h * wd];
                                    let gw9 = &mut gw[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            gw9[ky * 3 + kx] += dot_rows(
                                                xp,
                                                ky * wd + kx,
                                                wd,
                                                gplane,
                                                ow,
                                                oh,
                                                ow,
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gb = ensure(&mut grads, *b, cout);
                        for img in 0..n {
                            let gn = &g[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                            for (oc, gbv) in gb.iter_mut().enumerate() {
                                *gbv += gn[oc * oh * ow..(oc + 1) * oh * ow].iter().sum::<f64>();
                            }
                        }
                    }
                }
                Op::Conv3x3S2 { x, w, b, n, cin, cout, h, wd } => {
                    let (n, cin, cout, h, wd) = (*n, *cin, *cout, *h, *wd);
                    let (oh, ow) = ((h - 3) / 2 + 1, (wd - 3) / 2 + 1);
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if needs[x.0] {
                        let gx = ensure(&mut grads, *x, n * cin * h * wd);
                        for img in 0..n {
                            let gn = &g[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                            let gxn = &mut gx[img * cin * h * wd..(img + 1) * cin * h * wd];
                            for oc in 0..cout {
                                let gplane = &gn[oc * oh * ow..(oc + 1) * oh * ow];
                                for ic in 0..cin {
                                    let gxp = &mut gxn[ic * h * wd..(ic + 1) * h * wd];
                                    let w9 = &wv[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            let wk = w9[ky * 3 + kx];
                                            for y in 0..oh {
                                                let base = (2 * y + ky) * wd + kx;
                                                let gr = &gplane[y * ow..y * ow + ow];
                                                for (xo, &gv) in gr.iter().enumerate() {
                                                    gxp[base + 2 * xo] += wk * gv;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gw = ensure(&mut grads, *w, cout * cin * 9);
                        for img in 0..n {
                            let xn = &xv[img * cin * h * wd..(img + 1) * cin * h * wd];
                            let gn = &g[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                            for oc in 0..cout {
                                let gplane = &gn[oc * oh * ow..(oc + 1) * oh * ow];
                                for ic in 0..cin {
                                    let xp = &xn[ic * h * wd..(ic + 1) * h * wd];
                                    let gw9 = &mut gw[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            let mut acc = 0.0;
                                            for y in 0..oh {
                                                let base = (2 * y + ky) * wd + kx;
                                                let gr = &gplane[y * ow..y * ow + ow];
                                                for (xo, &gv) in gr.iter().enumerate() {
                                                    acc += xp[base + 2 * xo] * gv;
                                                }
                                            }
                                            gw9[ky * 3 + kx] += acc;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gb = ensure(&mut grads, *b, cout);
                        for img in 0..n {
                            let gn = &g[img * cout * oh * ow..(img + 1) * cout * oh * ow];
                            for (oc, gbv) in gb.iter_mut().enumerate() {
                                *gbv += gn[oc * oh * ow..(oc + 1) * oh * ow].iter().sum::<f64>();
                            }
                        }
                    }
                }
                Op::AvgPool2 { x, chans, h, wd } => {
                    if !needs[x.0] {
                        continue;
                    }
                    let (chans, h, wd) = (*chans, *h, *wd);
                    let (oh, ow) = (h / 2, wd / 2);
                    let gx = ensure(&mut grads, *x, chans * h * wd);
                    for c in 0..chans {
                        let gp = &g[c * oh * ow..(c + 1) * oh * ow];
                        let gxp = &mut gx[c * h * wd..(c + 1) * h * wd];
                        for y in 0..oh {
                            for x_ in 0..ow {
                                let s = 0.25 * gp[y * ow + x_];
                                let base = 2 * y * wd + 2 * x_;
                                gxp[base] += s;
                                gxp[base + 1] += s;
                                gxp[base + wd] += s;
                                gxp[base + wd + 1] += s;
                            }
                        }
                    }
                }
                Op::Softsign { x } => {
                    if !needs[x.0] {
                        continue;
                    }
                    // dy/dx = 1/(1+|x|)² = (1−|y|)², from the stored output
                    let yv = self.value(Id(idx));
                    let gx = ensure(&mut grads, *x, yv.len());
                    for ((d, &y), &gj) in gx.iter_mut().zip(yv).zip(&g) {
                        let t = 1.0 - y.abs();
                        *d += gj * t * t;
                    }
                }
                Op::ScaleRows { x, s, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    let xv = self.value(*x);
                    let sv = self.value(*s);
                    if needs[x.0] {
                        let gx = ensure(&mut grads, *x, rows * cols);
                        for r in 0..rows {
                            let f = sv[r];
                            for c in 0..cols {
                                gx[r * cols + c] += g[r * cols + c] * f;
                            }
                        }
                    }
                    if needs[s.0] {
                        let gs = ensure(&mut grads, *s, rows);
                        for r in 0..rows {
                            gs[r] += dot(&g[r * cols..(r + 1) * cols], &xv[r * cols..(r + 1) * cols]);
                        }
                    }
                }
                Op::SoftmaxRows { x, rows, cols } => {
                    if !needs[x.0] {
                        continue;
                    }
                    let (rows, cols) = (*rows, *cols);
                    let yv = self.value(Id(idx));
                    let gx = ensure(&mut grads, *x, rows * cols);
                    for r in 0..rows {
                        let yr = &yv[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(&y, &gj)| y * gj).sum();
                        for c in 0..cols {
                            gx[r * cols + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                }
                Op::ConcatCols { parts, rows } => {
                    let rows = *rows;
                    let total: usize = parts.iter().map(|&(_, c)| c).sum();
                    let parts = parts.clone();
                    let mut col0 = 0;
                    for (id, cols) in parts {
                        if needs[id.0] {
                            let gp = ensure(&mut grads, id, rows * cols);
                            for r in 0..rows {
                                for c in 0..cols {
                                    gp[r * cols + c] += g[r * total + col0 + c];
                                }
                            }
                        }
                        col0 += cols;
                    }
                }
                Op::SqErrSum { pred, target, row_mask, rows, cols, scale } => {
                    if !needs[pred.0] {
                        continue;
                    }
                    let (rows, cols, scale) = (*rows, *cols, *scale);
                    let g0 = g[0];
                    let pv = self.value(*pred);
                    let tv = self.value(*target);
                    let masks: Option<&[f64]> = row_mask.map(|m| self.value(m));
                    let gp = ensure(&mut grads, *pred, rows * cols);
                    for r in 0..rows {
                        let m = masks.map_or(1.0, |mv| mv[r]);
                        if m == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            gp[r * cols + c] +=
                                g0 * scale * m * 2.0 * (pv[r * cols + c] - tv[r * cols + c]);
                        }
                    }
                }
                Op::Lincomb { terms } => {
                    let g0 = g[0];
                    for &(id, coeff) in terms.clone().iter() {
                        if needs[id.0] {
                            let gt = ensure(&mut grads, id, 1);
                            gt[0] += g0 * coeff;
                        }
                    }
                }
            }
        }
    }
}

fn ensure(grads: &mut [Option<Vec<f64>>], id: Id, len: usize) -> &mut Vec<f64> {
    let slot = &mut grads[id.0];
    if slot.is_none() {
        *slot = Some(vec![0.0; len]);
    }
    slot.as_mut().expect("just filled")
}
