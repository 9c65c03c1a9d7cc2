//! Low-level numeric kernels shared by forward and backward passes.

/// Row-major matrix view description: `rows × cols` with explicit strides.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MatView {
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl MatView {
    pub fn dense(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    /// The transpose of a dense `rows × cols` matrix, viewed as `cols × rows`.
    pub fn dense_t(rows: usize, cols: usize) -> Self {
        Self {
            rows: cols,
            cols: rows,
            rs: 1,
            cs: cols,
        }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `c = a · b + beta · c` for strided views.
pub(crate) fn gemm(a: &[f64], av: MatView, b: &[f64], bv: MatView, c: &mut [f64], beta: f64) {
    assert_eq!(av.cols, bv.rows, "gemm inner dimension");
    let (m, k, n) = (av.rows, av.cols, bv.cols);
    assert!(av.span() <= a.len() && bv.span() <= b.len());
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c[..m * n].iter_mut() {
            *x *= beta;
        }
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr(),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// How the right operand of a binary op maps onto the output.
#[derive(Clone, Debug)]
pub(crate) enum Broadcast {
    Same,
    Scalar,
    /// `b` equals the trailing dims of the output; index is `i % len`.
    Suffix(usize),
    /// Arbitrary numpy-style expansion; per output axis the stride into `b`
    /// (0 where `b` is broadcast).
    Strided {
        out_shape: Vec<usize>,
        strides: Vec<usize>,
    },
}

impl Broadcast {
    /// Plans how `b` expands to `out`. `None` if not broadcastable.
    pub fn plan(out: &[usize], b: &[usize]) -> Option<Self> {
        if out == b {
            return Some(Broadcast::Same);
        }
        let b_len: usize = b.iter().product();
        if b_len == 1 && b.len() <= out.len() {
            return Some(Broadcast::Scalar);
        }
        if b.len() > out.len() {
            return None;
        }
        let offset = out.len() - b.len();
        if &out[offset..] == b {
            return Some(Broadcast::Suffix(b_len));
        }
        let mut strides = vec![0; out.len()];
        let mut stride = 1;
        for i in (0..b.len()).rev() {
            let bd = b[i];
            let od = out[offset + i];
            if bd == od {
                strides[offset + i] = stride;
            } else if bd != 1 {
                return None;
            }
            stride *= bd;
        }
        Some(Broadcast::Strided {
            out_shape: out.to_vec(),
            strides,
        })
    }

    /// Calls `f(out_index, b_index)` for every output element.
    pub fn for_each(&self, out_len: usize, mut f: impl FnMut(usize, usize)) {
        match self {
            Broadcast::Same => (0..out_len).for_each(|i| f(i, i)),
            Broadcast::Scalar => (0..out_len).for_each(|i| f(i, 0)),
            Broadcast::Suffix(n) => (0..out_len).for_each(|i| f(i, i % n)),
            Broadcast::Strided { out_shape, strides } => {
                let rank = out_shape.len();
                let mut idx = vec![0usize; rank];
                let mut boff = 0usize;
                for i in 0..out_len {
                    f(i, boff);
                    for ax in (0..rank).rev() {
                        idx[ax] += 1;
                        boff += strides[ax];
                        if idx[ax] < out_shape[ax] {
                            break;
                        }
                        boff -= strides[ax] * out_shape[ax];
                        idx[ax] = 0;
                    }
                }
            }
        }
    }
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub(crate) fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Stateless 64-bit mixer (SplitMix64 finalizer).
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in `[0, 1)` keyed by (seed, stream, step, index).
pub(crate) fn counter_uniform(seed: u64, stream: u64, step: u64, index: u64) -> f64 {
    let key = mix64(seed ^ mix64(stream ^ mix64(step ^ mix64(index))));
    (key >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
