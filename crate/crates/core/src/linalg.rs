//! Blocked dense kernels for the solver inner loop.
//!
//! The E-step factorizes a 2M x 2M sign-covariance every iteration and
//! solves it against a 2M x 2N right-hand side. nalgebra's unblocked
//! Cholesky and triangular solves are fine for small instances but dominate
//! the run time at benchmark sizes, so the hot path uses the blocked
//! variants below, which push most of the flops through the gemm backend.

use nalgebra::DMatrix;

const BLOCK: usize = 64;

/// Lower Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut l = a.lower_triangle();

    let mut kb = 0;
    while kb < n {
        let cb = BLOCK.min(n - kb);

        // Unblocked factorization of the diagonal block.
        for j in kb..kb + cb {
            let mut d = l[(j, j)];
            for p in kb..j {
                d -= l[(j, p)] * l[(j, p)];
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..kb + cb {
                let mut v = l[(i, j)];
                for p in kb..j {
                    v -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = v / djj;
            }
        }

        let rest = n - kb - cb;
        if rest > 0 {
            let l11 = l.view((kb, kb), (cb, cb)).into_owned();
            let mut panel = l.view((kb + cb, kb), (rest, cb)).into_owned();

            // Panel solve: L21 := A21 * L11^-T, column by column on the
            // contiguous panel copy.
            {
                let s = panel.as_mut_slice();
                for j in 0..cb {
                    for p in 0..j {
                        let f = l11[(j, p)];
                        if f != 0.0 {
                            let (left, right) = s.split_at_mut(j * rest);
                            let pcol = &left[p * rest..(p + 1) * rest];
                            let jcol = &mut right[..rest];
                            for (x, &y) in jcol.iter_mut().zip(pcol) {
                                *x -= f * y;
                            }
                        }
                    }
                    let d = l11[(j, j)];
                    for v in &mut s[j * rest..(j + 1) * rest] {
                        *v /= d;
                    }
                }
            }
            l.view_mut((kb + cb, kb), (rest, cb)).copy_from(&panel);

            // Trailing update A22 -= L21 * L21^T on the lower block
            // triangle, one block column at a time, so it runs as gemm.
            let mut jb = 0;
            while jb < rest {
                let wj = BLOCK.min(rest - jb);
                let pj_t = panel.rows(jb, wj).transpose();
                let rows = rest - jb;
                let pi = panel.rows(jb, rows);
                l.view_mut((kb + cb + jb, kb + cb + jb), (rows, wj))
                    .gemm(-1.0, &pi, &pj_t, 1.0);
                jb += wj;
            }
        }
        kb += cb;
    }

    l.fill_upper_triangle(0.0, 1);
    Some(l)
}

/// In-place blocked forward substitution: overwrites `b` with `L^-1 b`.
pub fn solve_lower_inplace(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n, "rhs row count must match");
    let ncols = b.ncols();

    let mut kb = 0;
    while kb < n {
        let cb = BLOCK.min(n - kb);

        // Solve the diagonal block on a transposed copy so the inner
        // updates are contiguous axpys of length ncols.
        let mut t = b.view((kb, 0), (cb, ncols)).transpose();
        {
            let s = t.as_mut_slice();
            for j in 0..cb {
                for p in 0..j {
                    let f = l[(kb + j, kb + p)];
                    if f != 0.0 {
                        let (left, right) = s.split_at_mut(j * ncols);
                        let pcol = &left[p * ncols..(p + 1) * ncols];
                        let jcol = &mut right[..ncols];
                        for (x, &y) in jcol.iter_mut().zip(pcol) {
                            *x -= f * y;
                        }
                    }
                }
                let d = l[(kb + j, kb + j)];
                for v in &mut s[j * ncols..(j + 1) * ncols] {
                    *v /= d;
                }
            }
        }
        b.view_mut((kb, 0), (cb, ncols)).tr_copy_from(&t);

        // Propagate to the remaining rows with gemm.
        let rest = n - kb - cb;
        if rest > 0 {
            let solved = b.view((kb, 0), (cb, ncols)).into_owned();
            let l_panel = l.view((kb + cb, kb), (rest, cb));
            b.view_mut((kb + cb, 0), (rest, ncols))
                .gemm(-1.0, &l_panel, &solved, 1.0);
        }
        kb += cb;
    }
}

/// In-place blocked backward substitution: overwrites `b` with `L^-T b`.
pub fn solve_lower_transpose_inplace(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n, "rhs row count must match");
    let ncols = b.ncols();

    let mut kb_end = n;
    while kb_end > 0 {
        let cb = BLOCK.min(kb_end);
        let kb = kb_end - cb;

        let mut t = b.view((kb, 0), (cb, ncols)).transpose();
        {
            let s = t.as_mut_slice();
            for j in (0..cb).rev() {
                for p in j + 1..cb {
                    let f = l[(kb + p, kb + j)];
                    if f != 0.0 {
                        let (left, right) = s.split_at_mut(p * ncols);
                        let jcol = &mut left[j * ncols..(j + 1) * ncols];
                        let pcol = &right[..ncols];
                        for (x, &y) in jcol.iter_mut().zip(pcol) {
                            *x -= f * y;
                        }
                    }
                }
                let d = l[(kb + j, kb + j)];
                for v in &mut s[j * ncols..(j + 1) * ncols] {
                    *v /= d;
                }
            }
        }
        b.view_mut((kb, 0), (cb, ncols)).tr_copy_from(&t);

        // Propagate to the rows above with gemm against L21^T.
        if kb > 0 {
            let solved = b.view((kb, 0), (cb, ncols)).into_owned();
            let l_panel = l.view((kb, 0), (cb, kb));
            b.view_mut((0, 0), (kb, ncols))
                .gemm_tr(-1.0, &l_panel, &solved, 1.0);
        }
        kb_end = kb;
    }
}

/// Solve `A x = b` for symmetric positive definite `A` given its lower
/// Cholesky factor, overwriting `b`.
pub fn cholesky_solve_inplace(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    solve_lower_inplace(l, b);
    solve_lower_transpose_inplace(l, b);
}
