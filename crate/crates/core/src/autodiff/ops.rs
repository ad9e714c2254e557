use super::tensor::{numel, AdError, Result, Tensor};
use std::rc::Rc;

fn shape_err(msg: String) -> AdError {
    AdError::ShapeMismatch(msg)
}

/// Output shape of a binary op; the smaller operand must be a scalar or a
/// trailing suffix of the larger shape and is repeated over leading axes.
fn broadcast(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a == b {
        return Ok(a.to_vec());
    }
    let (big, small) = if numel(a) >= numel(b) { (a, b) } else { (b, a) };
    if numel(small) == 1 || (small.len() <= big.len() && big.ends_with(small)) {
        return Ok(big.to_vec());
    }
    Err(shape_err(format!("cannot broadcast {a:?} with {b:?}")))
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(AdError::Invalid(format!("axis {axis} out of range for {shape:?}")));
    }
    Ok((
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    ))
}

impl Tensor {
    fn unary(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Tensor {
        let y = Rc::new(self.data().iter().map(|&x| f(x)).collect::<Vec<_>>());
        if !self.is_tracked() {
            return Tensor::from_op_rc(&[], y, self.shape().to_vec(), |_, _| vec![])
                .expect("length preserved");
        }
        let x = self.data_rc();
        let yc = y.clone();
        Tensor::from_op_rc(&[self], y, self.shape().to_vec(), move |g, _| {
            vec![Some(
                g.iter()
                    .zip(x.iter().zip(yc.iter()))
                    .map(|(g, (&x, &y))| g * df(x, y))
                    .collect(),
            )]
        })
        .expect("length preserved")
    }

    fn binary(
        &self,
        other: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        da: impl Fn(f64, f64) -> f64 + 'static,
        db: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let shape = broadcast(self.shape(), other.shape())?;
        let n = numel(&shape);
        let (a, b) = (self.data_rc(), other.data_rc());
        let (la, lb) = (a.len(), b.len());
        let y: Vec<f64> = (0..n).map(|i| f(a[i % la], b[i % lb])).collect();
        if !self.is_tracked() && !other.is_tracked() {
            return Tensor::new(y, &shape);
        }
        Tensor::from_op(&[self, other], y, shape, move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = vec![0.0; la];
                for (i, gi) in g.iter().enumerate() {
                    ga[i % la] += gi * da(a[i % la], b[i % lb]);
                }
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; lb];
                for (i, gi) in g.iter().enumerate() {
                    gb[i % lb] += gi * db(a[i % la], b[i % lb]);
                }
                gb
            });
            vec![ga, gb]
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a / b, |_, b| 1.0 / b, |a, b| -a / (b * b))
    }

    pub fn neg(&self) -> Tensor {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.unary(move |x| s * x, move |_, _| s)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.unary(move |x| x + s, |_, _| 1.0)
    }

    pub fn relu(&self) -> Tensor {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(&self) -> Tensor {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn log(&self) -> Tensor {
        self.unary(f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn abs(&self) -> Tensor {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&self) -> Tensor {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clip(&self, lo: f64, hi: f64) -> Tensor {
        self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        )
    }

    /// `atanh(clamp(x, -bound, bound))`.
    pub fn atanh_clamped(&self, bound: f64) -> Tensor {
        self.unary(
            move |x| x.clamp(-bound, bound).atanh(),
            move |x, _| {
                if (-bound..=bound).contains(&x) {
                    1.0 / (1.0 - x * x)
                } else {
                    0.0
                }
            },
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(shape_err(format!("reshape {:?} -> {shape:?}", self.shape())));
        }
        Ok(self.with_shape(shape.to_vec()))
    }

    /// `[.., m, k] x [k, n] -> [.., m, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(shape_err(format!("matmul {sa:?} x {sb:?}")));
        }
        let (k, n) = (sb[0], sb[1]);
        let m = self.numel() / k;
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let (a, b) = (self.data_rc(), other.data_rc());
        let y = gemm(&a, &b, m, k, n);
        if !self.is_tracked() && !other.is_tracked() {
            return Tensor::new(y, &shape);
        }
        Tensor::from_op(&[self, other], y, shape, move |g, needs| {
            vec![
                needs[0].then(|| gemm_nt(g, &b, m, n, k)),
                needs[1].then(|| gemm_tn(&a, g, m, k, n)),
            ]
        })
    }

    /// Batched `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(shape_err(format!("bmm {sa:?} x {sb:?}")));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (a, b) = (self.data_rc(), other.data_rc());
        let mut y = vec![0.0; bs * m * n];
        for t in 0..bs {
            gemm_into(&a[t * m * k..(t + 1) * m * k], &b[t * k * n..(t + 1) * k * n], m, k, n, &mut y[t * m * n..(t + 1) * m * n]);
        }
        if !self.is_tracked() && !other.is_tracked() {
            return Tensor::new(y, &[bs, m, n]);
        }
        Tensor::from_op(&[self, other], y, vec![bs, m, n], move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = Vec::with_capacity(bs * m * k);
                for t in 0..bs {
                    ga.extend(gemm_nt(&g[t * m * n..(t + 1) * m * n], &b[t * k * n..(t + 1) * k * n], m, n, k));
                }
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = Vec::with_capacity(bs * k * n);
                for t in 0..bs {
                    gb.extend(gemm_tn(&a[t * m * k..(t + 1) * m * k], &g[t * m * n..(t + 1) * m * n], m, k, n));
                }
                gb
            });
            vec![ga, gb]
        })
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(shape_err(format!("transpose of {s:?}")));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let batch = self.numel() / (r * c);
        let mut shape = s.to_vec();
        let l = shape.len();
        shape.swap(l - 2, l - 1);
        let y = transpose_blocks(self.data(), batch, r, c);
        Tensor::from_op(&[self], y, shape, move |g, _| vec![Some(transpose_blocks(g, batch, c, r))])
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        Tensor::from_op(&[self], vec![self.data().iter().sum()], vec![], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
        .expect("scalar")
    }

    pub fn mean(&self) -> Tensor {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    /// Sums out `axis`.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_split(self.shape(), axis)?;
        let x = self.data();
        let mut y = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = &x[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (d, s) in y[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Tensor::from_op(&[self], y, shape, move |g, _| {
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for j in 0..len {
                    gx[(o * len + j) * inner..(o * len + j + 1) * inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        })
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| AdError::Invalid(format!("axis {axis}")))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / len as f64))
    }

    /// Joins tensors along `axis`; other axes must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| AdError::Invalid("concat of nothing".into()))?;
        let rank = first.rank();
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            if s.len() != rank || axis >= rank || s[..axis] != first.shape()[..axis] || s[axis + 1..] != first.shape()[axis + 1..] {
                return Err(shape_err(format!("concat {:?} with {s:?} on axis {axis}", first.shape())));
            }
            lens.push(s[axis]);
        }
        let (outer, _, inner) = axis_split(first.shape(), axis)?;
        let total: usize = lens.iter().sum();
        let mut y = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                y.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Tensor::from_op(parts, y, shape, move |g, needs| {
            let mut out: Vec<Option<Vec<f64>>> = lens
                .iter()
                .zip(needs)
                .map(|(&l, &nd)| nd.then(|| Vec::with_capacity(outer * l * inner)))
                .collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (slot, &l) in out.iter_mut().zip(&lens) {
                    if let Some(v) = slot {
                        v.extend_from_slice(&g[pos..pos + l * inner]);
                    }
                    pos += l * inner;
                }
            }
            out
        })
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let (outer, full, inner) = axis_split(self.shape(), axis)?;
        if start + len > full {
            return Err(shape_err(format!("slice {start}..{} of axis size {full}", start + len)));
        }
        let x = self.data();
        let mut y = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            y.extend_from_slice(&x[(o * full + start) * inner..(o * full + start + len) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Tensor::from_op(&[self], y, shape, move |g, _| {
            let mut gx = vec![0.0; outer * full * inner];
            for o in 0..outer {
                gx[(o * full + start) * inner..(o * full + start + len) * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        })
    }

    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_split(self.shape(), axis)?;
        let mut y = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mx = (0..len).map(|j| y[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..len {
                    let e = (y[idx(j)] - mx).exp();
                    y[idx(j)] = e;
                    z += e;
                }
                for j in 0..len {
                    y[idx(j)] /= z;
                }
            }
        }
        let y = Rc::new(y);
        let yc = y.clone();
        Tensor::from_op_rc(&[self], y, self.shape().to_vec(), move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |j: usize| (o * len + j) * inner + i;
                    let dot: f64 = (0..len).map(|j| g[idx(j)] * yc[idx(j)]).sum();
                    for j in 0..len {
                        gx[idx(j)] = yc[idx(j)] * (g[idx(j)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_split(self.shape(), axis)?;
        let mut y = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mx = (0..len).map(|j| y[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + (0..len).map(|j| (y[idx(j)] - mx).exp()).sum::<f64>().ln();
                for j in 0..len {
                    y[idx(j)] -= lse;
                }
            }
        }
        let y = Rc::new(y);
        let yc = y.clone();
        Tensor::from_op_rc(&[self], y, self.shape().to_vec(), move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |j: usize| (o * len + j) * inner + i;
                    let gs: f64 = (0..len).map(|j| g[idx(j)]).sum();
                    for j in 0..len {
                        gx[idx(j)] = g[idx(j)] - yc[idx(j)].exp() * gs;
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Normalises the last axis to zero mean and unit variance (`eps = 1e-5`),
    /// then applies `gain` and `bias` of that axis' length.
    pub fn layernorm(&self, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        const EPS: f64 = 1e-5;
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| AdError::Invalid("layernorm of a scalar".into()))?;
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(shape_err(format!(
                "layernorm over {d} with gain {:?} bias {:?}",
                gain.shape(),
                bias.shape()
            )));
        }
        let rows = self.numel() / d;
        let x = self.data();
        let (gm, bs) = (gain.data_rc(), bias.data());
        let mut xhat = vec![0.0; x.len()];
        let mut inv = vec![0.0; rows];
        let mut y = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + EPS).sqrt();
            inv[r] = s;
            for j in 0..d {
                let h = (row[j] - mu) * s;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gm[j] + bs[j];
            }
        }
        Tensor::from_op(&[self, gain, bias], y, self.shape().to_vec(), move |g, needs| {
            let gx = needs[0].then(|| {
                let mut gx = vec![0.0; g.len()];
                for r in 0..rows {
                    let gh: Vec<f64> = (0..d).map(|j| g[r * d + j] * gm[j]).collect();
                    let m1 = gh.iter().sum::<f64>() / d as f64;
                    let m2 = (0..d).map(|j| gh[j] * xhat[r * d + j]).sum::<f64>() / d as f64;
                    for j in 0..d {
                        gx[r * d + j] = inv[r] * (gh[j] - m1 - xhat[r * d + j] * m2);
                    }
                }
                gx
            });
            let gg = needs[1].then(|| {
                let mut gg = vec![0.0; d];
                for (i, gi) in g.iter().enumerate() {
                    gg[i % d] += gi * xhat[i];
                }
                gg
            });
            let gb = needs[2].then(|| {
                let mut gb = vec![0.0; d];
                for (i, gi) in g.iter().enumerate() {
                    gb[i % d] += gi;
                }
                gb
            });
            vec![gx, gg, gb]
        })
    }

    /// `[.., n] -> [.., E]` with `out[.., e] = x[.., idx[e]]`.
    pub fn gather_cols(&self, idx: Rc<[usize]>) -> Result<Tensor> {
        let n = *self.shape().last().ok_or_else(|| AdError::Invalid("gather on scalar".into()))?;
        if idx.iter().any(|&i| i >= n) {
            return Err(AdError::Invalid(format!("gather index beyond {n}")));
        }
        let rows = self.numel() / n;
        let e = idx.len();
        let x = self.data();
        let mut y = Vec::with_capacity(rows * e);
        for r in 0..rows {
            let row = &x[r * n..(r + 1) * n];
            y.extend(idx.iter().map(|&i| row[i]));
        }
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = e;
        Tensor::from_op(&[self], y, shape, move |g, _| vec![Some(scatter_add(g, &idx, rows, n))])
    }

    /// `[.., E] -> [.., n]` with `out[.., v] = sum over idx[e] == v of x[.., e]`,
    /// accumulated in ascending `e`.
    pub fn scatter_add_cols(&self, idx: Rc<[usize]>, n: usize) -> Result<Tensor> {
        let e = *self.shape().last().ok_or_else(|| AdError::Invalid("scatter on scalar".into()))?;
        if e != idx.len() || idx.iter().any(|&i| i >= n) {
            return Err(AdError::Invalid(format!("scatter of {e} columns into {n}")));
        }
        let rows = self.numel() / e;
        let y = scatter_add(self.data(), &idx, rows, n);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        Tensor::from_op(&[self], y, shape, move |g, _| {
            let mut gx = Vec::with_capacity(rows * e);
            for r in 0..rows {
                let row = &g[r * n..(r + 1) * n];
                gx.extend(idx.iter().map(|&i| row[i]));
            }
            vec![Some(gx)]
        })
    }
}

fn scatter_add(x: &[f64], idx: &[usize], rows: usize, n: usize) -> Vec<f64> {
    let e = idx.len();
    let mut y = vec![0.0; rows * n];
    for r in 0..rows {
        let out = &mut y[r * n..(r + 1) * n];
        for (j, &i) in idx.iter().enumerate() {
            out[i] += x[r * e + j];
        }
    }
    y
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gemm_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, y: &mut [f64]) {
    for i in 0..m {
        let yr = &mut y[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (yv, bv) in yr.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *yv += av * bv;
            }
        }
    }
}

fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; m * n];
    gemm_into(a, b, m, k, n, &mut y);
    y
}

/// `g [m, n] x b^T` with `b [k, n]`.
fn gemm_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut y = vec![0.0; m * k];
    for i in 0..m {
        let gr = &g[i * n..(i + 1) * n];
        for p in 0..k {
            y[i * k + p] = gr.iter().zip(&b[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
    y
}

/// `a^T x g` with `a [m, k]`, `g [m, n]`.
fn gemm_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; k * n];
    for i in 0..m {
        let gr = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (yv, gv) in y[p * n..(p + 1) * n].iter_mut().zip(gr) {
                *yv += av * gv;
            }
        }
    }
    y
}

fn transpose_blocks(x: &[f64], batch: usize, r: usize, c: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for t in 0..batch {
        let (src, dst) = (&x[t * r * c..(t + 1) * r * c], &mut y[t * r * c..(t + 1) * r * c]);
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    y
}
