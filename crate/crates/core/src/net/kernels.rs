//! Dense products for the batched forward and reverse passes, on row-major
//! slices. Point blocks are padded to a multiple of [`COL_TILE`] columns.

pub const COL_TILE: usize = 16;

/// `z = w · y` with `w: rows × inner`, `y: inner × cols`, `z: rows × cols`.
pub fn matmul_nn(w: &[f64], y: &[f64], z: &mut [f64], rows: usize, inner: usize, cols: usize) {
    assert_eq!(w.len(), rows * inner);
    assert_eq!(y.len(), inner * cols);
    assert_eq!(z.len(), rows * cols);
    // SAFETY: the three slices have exactly the extents described by the
    // dimensions and strides passed (row-major, unit column stride), and `z`
    // does not alias the inputs.
    unsafe {
        gemm::gemm(
            rows,
            cols,
            inner,
            z.as_mut_ptr(),
            1,
            cols as isize,
            false,
            w.as_ptr(),
            1,
            inner as isize,
            y.as_ptr(),
            1,
            cols as isize,
            0.0,
            1.0,
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
}

/// `g += a · bᵀ` with `a: rows × len`, `b: inner × len`, `g: rows × inner`.
pub fn matmul_nt_acc(a: &[f64], b: &[f64], g: &mut [f64], rows: usize, inner: usize, len: usize) {
    assert_eq!(a.len(), rows * len);
    assert_eq!(b.len(), inner * len);
    assert_eq!(g.len(), rows * inner);
    // SAFETY: as above; `bᵀ` is read through swapped strides of `b`.
    unsafe {
        gemm::gemm(
            rows,
            inner,
            len,
            g.as_mut_ptr(),
            1,
            inner as isize,
            true,
            a.as_ptr(),
            1,
            len as isize,
            b.as_ptr(),
            len as isize,
            1,
            1.0,
            1.0,
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
}
