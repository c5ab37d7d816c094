//! Register-blocked kernels for the update loop.
//!
//! Products are written as `coefᵀ · rows`, so every output row is a linear
//! combination of input rows and no horizontal sums are needed. Each pass
//! produces up to four output rows by eight columns. Every output entry is
//! accumulated over `l` in increasing order.
//!
//! On x86-64 processors with AVX2 and FMA (detected once at run time) the
//! same loops run with fused multiply-adds, which round once instead of
//! twice; results are deterministic on a given machine either way.

const LANES: usize = 4;

/// `out[c·width + j] = Σ_{l<p} coef[l·stride + c] · rows[l·width + j]` for
/// `c < out_rows`, `j < width`.
pub(crate) fn at_b(
    coef: &[f64],
    stride: usize,
    out_rows: usize,
    rows: &[f64],
    width: usize,
    p: usize,
    out: &mut [f64],
) {
    assert!(
        out_rows <= stride || p == 0,
        "coefficient stride shorter than the output rows"
    );
    assert!(coef.len() >= p.saturating_sub(1) * stride + out_rows || p == 0);
    assert!(rows.len() >= p * width && out.len() >= out_rows * width);
    #[cfg(target_arch = "x86_64")]
    if x86::available() {
        // SAFETY: the CPU supports AVX2 and FMA; bounds were checked above.
        return unsafe { x86::at_b(coef, stride, out_rows, rows, width, p, out) };
    }
    at_b_portable(coef, stride, out_rows, rows, width, p, out)
}

fn at_b_portable(
    coef: &[f64],
    stride: usize,
    out_rows: usize,
    rows: &[f64],
    width: usize,
    p: usize,
    out: &mut [f64],
) {
    let mut c = 0;
    while c < out_rows {
        let b = LANES.min(out_rows - c);
        let dst = &mut out[c * width..];
        match b {
            1 => combine::<1>(coef, stride, c, rows, width, p, dst),
            2 => combine::<2>(coef, stride, c, rows, width, p, dst),
            3 => combine::<3>(coef, stride, c, rows, width, p, dst),
            _ => combine::<4>(coef, stride, c, rows, width, p, dst),
        }
        c += b;
    }
}

#[inline(always)]
fn combine<const B: usize>(
    coef: &[f64],
    stride: usize,
    c0: usize,
    rows: &[f64],
    width: usize,
    p: usize,
    dst: &mut [f64],
) {
    let mut j = 0;
    while j + 2 * LANES <= width {
        block::<B, 2>(coef, stride, c0, rows, width, p, j, dst);
        j += 2 * LANES;
    }
    if j + LANES <= width {
        block::<B, 1>(coef, stride, c0, rows, width, p, j, dst);
        j += LANES;
    }
    for j in j..width {
        for q in 0..B {
            let mut s = 0.0;
            for l in 0..p {
                s += coef[l * stride + c0 + q] * rows[l * width + j];
            }
            dst[q * width + j] = s;
        }
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
#[allow(clippy::needless_range_loop)]
fn block<const B: usize, const J: usize>(
    coef: &[f64],
    stride: usize,
    c0: usize,
    rows: &[f64],
    width: usize,
    p: usize,
    j: usize,
    dst: &mut [f64],
) {
    let mut acc = [[[0.0; LANES]; J]; B];
    for l in 0..p {
        let w: &[f64; B] = coef[l * stride + c0..l * stride + c0 + B]
            .try_into()
            .unwrap();
        for v in 0..J {
            let start = l * width + j + v * LANES;
            let x: &[f64; LANES] = rows[start..start + LANES].try_into().unwrap();
            for q in 0..B {
                for t in 0..LANES {
                    acc[q][v][t] += w[q] * x[t];
                }
            }
        }
    }
    for q in 0..B {
        for v in 0..J {
            let start = q * width + j + v * LANES;
            dst[start..start + LANES].copy_from_slice(&acc[q][v]);
        }
    }
}

/// Applies `f ← f · num / (den + guard)` elementwise, setting results below
/// `floor` to zero, and reports whether every result is finite.
pub(crate) fn ratio_update(
    factor: &mut [f64],
    num: &[f64],
    den: &[f64],
    guard: f64,
    floor: f64,
) -> bool {
    assert!(num.len() >= factor.len() && den.len() >= factor.len());
    #[cfg(target_arch = "x86_64")]
    if x86::available() {
        // SAFETY: the CPU supports AVX2; lengths were checked above.
        return unsafe { x86::ratio_update(factor, num, den, guard, floor) };
    }
    ratio_portable(factor, num, den, guard, floor)
}

#[inline(always)]
fn ratio_one(f: f64, a: f64, b: f64, guard: f64, floor: f64) -> f64 {
    let v = f * (a / (b + guard));
    if v < floor {
        0.0
    } else {
        v
    }
}

fn ratio_portable(factor: &mut [f64], num: &[f64], den: &[f64], guard: f64, floor: f64) -> bool {
    let mut ok = true;
    for ((f, &a), &b) in factor.iter_mut().zip(num).zip(den) {
        let v = ratio_one(*f, a, b, guard, floor);
        ok &= v.is_finite();
        *f = v;
    }
    ok
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use core::arch::x86_64::*;
    use core::sync::atomic::{AtomicU8, Ordering};

    use super::{ratio_one, LANES};

    static SUPPORT: AtomicU8 = AtomicU8::new(0);

    /// AVX2 + FMA with OS-enabled YMM state, probed once.
    pub(super) fn available() -> bool {
        match SUPPORT.load(Ordering::Relaxed) {
            1 => false,
            2 => true,
            _ => {
                let yes = probe();
                SUPPORT.store(if yes { 2 } else { 1 }, Ordering::Relaxed);
                yes
            }
        }
    }

    fn probe() -> bool {
        let leaf1 = __cpuid(1);
        let fma = leaf1.ecx & (1 << 12) != 0;
        let osxsave = leaf1.ecx & (1 << 27) != 0;
        let avx = leaf1.ecx & (1 << 28) != 0;
        if !(fma && osxsave && avx) {
            return false;
        }
        // SAFETY: OSXSAVE is set, so XGETBV is available.
        let xcr0 = unsafe { xgetbv() };
        if xcr0 & 0b110 != 0b110 || __cpuid(0).eax < 7 {
            return false;
        }
        __cpuid_count(7, 0).ebx & (1 << 5) != 0
    }

    #[target_feature(enable = "xsave")]
    unsafe fn xgetbv() -> u64 {
        _xgetbv(0)
    }

    /// Caller guarantees the bounds asserted in [`super::at_b`].
    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn at_b(
        coef: &[f64],
        stride: usize,
        out_rows: usize,
        rows: &[f64],
        width: usize,
        p: usize,
        out: &mut [f64],
    ) {
        let mut c = 0;
        while c < out_rows {
            let b = LANES.min(out_rows - c);
            let dst = &mut out[c * width..];
            // SAFETY: forwarded from the caller.
            unsafe {
                match b {
                    1 => combine::<1>(coef, stride, c, rows, width, p, dst),
                    2 => combine::<2>(coef, stride, c, rows, width, p, dst),
                    3 => combine::<3>(coef, stride, c, rows, width, p, dst),
                    _ => combine::<4>(coef, stride, c, rows, width, p, dst),
                }
            }
            c += b;
        }
    }

    #[target_feature(enable = "avx2,fma")]
    unsafe fn combine<const B: usize>(
        coef: &[f64],
        stride: usize,
        c0: usize,
        rows: &[f64],
        width: usize,
        p: usize,
        dst: &mut [f64],
    ) {
        let mut j = 0;
        // SAFETY: every block stays within `width` columns of `p` rows.
        unsafe {
            while j + 2 * LANES <= width {
                block::<B, 2>(coef, stride, c0, rows, width, p, j, dst);
                j += 2 * LANES;
            }
            if j + LANES <= width {
                block::<B, 1>(coef, stride, c0, rows, width, p, j, dst);
                j += LANES;
            }
        }
        for j in j..width {
            for q in 0..B {
                let mut s = 0.0;
                for l in 0..p {
                    s += coef[l * stride + c0 + q] * rows[l * width + j];
                }
                dst[q * width + j] = s;
            }
        }
    }

    #[target_feature(enable = "avx2,fma")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn block<const B: usize, const J: usize>(
        coef: &[f64],
        stride: usize,
        c0: usize,
        rows: &[f64],
        width: usize,
        p: usize,
        j: usize,
        dst: &mut [f64],
    ) {
        let mut acc = [[_mm256_setzero_pd(); J]; B];
        let (cp, rp) = (coef.as_ptr(), rows.as_ptr());
        for l in 0..p {
            // SAFETY: l < p, c0 + B <= stride and j + J·LANES <= width.
            unsafe {
                let mut x = [_mm256_setzero_pd(); J];
                for (v, xv) in x.iter_mut().enumerate() {
                    *xv = _mm256_loadu_pd(rp.add(l * width + j + v * LANES));
                }
                for (q, a) in acc.iter_mut().enumerate() {
                    let w = _mm256_broadcast_sd(&*cp.add(l * stride + c0 + q));
                    for (av, xv) in a.iter_mut().zip(&x) {
                        *av = _mm256_fmadd_pd(w, *xv, *av);
                    }
                }
            }
        }
        for (q, a) in acc.iter().enumerate() {
            for (v, av) in a.iter().enumerate() {
                // SAFETY: q < B output rows, each `width` long.
                unsafe { _mm256_storeu_pd(dst.as_mut_ptr().add(q * width + j + v * LANES), *av) };
            }
        }
    }

    /// Same arithmetic as the portable loop, four lanes at a time.
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn ratio_update(
        factor: &mut [f64],
        num: &[f64],
        den: &[f64],
        guard: f64,
        floor: f64,
    ) -> bool {
        let len = factor.len();
        let body = len - len % LANES;
        let (g, lo) = (_mm256_set1_pd(guard), _mm256_set1_pd(floor));
        let mut probe = _mm256_setzero_pd();
        let fp = factor.as_mut_ptr();
        let mut i = 0;
        while i < body {
            // SAFETY: i + LANES <= len <= num.len(), den.len().
            unsafe {
                let f = _mm256_loadu_pd(fp.add(i));
                let a = _mm256_loadu_pd(num.as_ptr().add(i));
                let b = _mm256_loadu_pd(den.as_ptr().add(i));
                let v = _mm256_mul_pd(f, _mm256_div_pd(a, _mm256_add_pd(b, g)));
                // Keeps v unless v < floor; NaN compares unordered and is kept.
                let keep = _mm256_cmp_pd::<_CMP_NLT_UQ>(v, lo);
                let v = _mm256_and_pd(v, keep);
                probe = _mm256_add_pd(probe, _mm256_sub_pd(v, v));
                _mm256_storeu_pd(fp.add(i), v);
            }
            i += LANES;
        }
        let mut lanes = [0.0; LANES];
        // SAFETY: lanes holds four f64.
        unsafe { _mm256_storeu_pd(lanes.as_mut_ptr(), probe) };
        let mut ok = lanes == [0.0; LANES];
        for t in body..len {
            let v = ratio_one(factor[t], num[t], den[t], guard, floor);
            ok &= v.is_finite();
            factor[t] = v;
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn data(len: usize, salt: u64) -> Vec<f64> {
        (0..len as u64)
            .map(|i| ((i * 37 + salt * 11) % 23) as f64 / 7.0)
            .collect()
    }

    #[test]
    fn at_b_matches_naive() {
        for (p, stride, k, width) in [
            (3, 7, 7, 9),
            (1, 1, 1, 1),
            (5, 4, 4, 8),
            (6, 2, 2, 3),
            (2, 8, 5, 13),
            (4, 9, 6, 20),
        ] {
            let (coef, rows) = (data(p * stride, 3), data(p * width, 4));
            let mut out = vec![f64::NAN; k * width];
            at_b(&coef, stride, k, &rows, width, p, &mut out);
            for c in 0..k {
                for j in 0..width {
                    let want: f64 = (0..p)
                        .map(|l| coef[l * stride + c] * rows[l * width + j])
                        .sum();
                    assert!((out[c * width + j] - want).abs() <= 1e-12 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn empty_sum_is_zero() {
        let mut out = vec![f64::NAN; 6];
        at_b(&[], 3, 2, &[], 3, 0, &mut out);
        assert_eq!(out, vec![0.0; 6]);
    }

    #[test]
    fn dispatch_agrees_with_portable() {
        let (coef, rows) = (data(5 * 8, 5), data(5 * 19, 6));
        let (mut fast, mut slow) = (vec![0.0; 6 * 19], vec![0.0; 6 * 19]);
        at_b(&coef, 8, 6, &rows, 19, 5, &mut fast);
        at_b_portable(&coef, 8, 6, &rows, 19, 5, &mut slow);
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }

        let num = data(11, 7);
        let den = data(11, 8);
        let mut fast = data(11, 9);
        fast[3] = 1e-200;
        let mut slow = fast.clone();
        assert!(ratio_update(&mut fast, &num, &den, 1e-12, 1e-150));
        assert!(ratio_portable(&mut slow, &num, &den, 1e-12, 1e-150));
        assert_eq!(fast, slow);
        assert_eq!(fast[3], 0.0);
    }

    #[test]
    fn ratio_reports_non_finite() {
        for at in [0, 5, 9] {
            let mut f = vec![1.0; 10];
            let mut den = vec![1.0; 10];
            den[at] = -1e-12;
            assert!(
                !ratio_update(&mut f, &[1.0; 10], &den, 1e-12, 1e-150),
                "position {at}"
            );
        }
    }
}
