//! Dense f64 matrix kernels. Every kernel accumulates each output element in
//! a fixed k-order, so results are bitwise identical regardless of the thread
//! count. Op-internal parallelism is capped by the `AVSR_THREADS` environment
//! variable (default 1); rows of the output are partitioned across threads,
//! never the reduction dimension.

use std::sync::OnceLock;

static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();

/// Thread cap read once from `AVSR_THREADS`.
pub fn thread_count() -> usize {
    pool_threads().0
}

fn pool_threads() -> (usize, Option<&'static rayon::ThreadPool>) {
    let pool = POOL.get_or_init(|| {
        let n = std::env::var("AVSR_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or(1);
        if n <= 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("thread pool construction"),
            )
        }
    });
    match pool {
        Some(p) => (p.current_num_threads(), Some(p)),
        None => (1, None),
    }
}

/// Run `body` over disjoint row chunks of `out`. `body(row0, rows)` receives
/// the first row index of the chunk and the mutable chunk itself.
fn for_row_chunks(out: &mut [f64], rows: usize, cols: usize, body: impl Fn(usize, &mut [f64]) + Sync) {
    debug_assert_eq!(out.len(), rows * cols);
    let (threads, pool) = pool_threads();
    if threads <= 1 || rows <= 1 {
        body(0, out);
        return;
    }
    let per = rows.div_ceil(threads);
    let chunk = per * cols;
    if let Some(p) = pool {
        p.install(|| {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(|(ci, c)| {
                body(ci * per, c);
            });
        });
    }
}

/// out += A · B, with A `[m,k]`, B `[k,n]`, out `[m,n]`.
pub fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    for_row_chunks(out, m, n, |row0, chunk| {
        for (local, orow) in chunk.chunks_exact_mut(n).enumerate() {
            let i = row0 + local;
            let arow = &a[i * k..(i + 1) * k];
            for (kk, &aik) in arow.iter().enumerate() {
                let brow = &b[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
    });
}

/// out += A · Bᵀ, with A `[m,k]`, B `[n,k]`, out `[m,n]`.
pub fn gemm_acc_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    for_row_chunks(out, m, n, |row0, chunk| {
        for (local, orow) in chunk.chunks_exact_mut(n).enumerate() {
            let i = row0 + local;
            let arow = &a[i * k..(i + 1) * k];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &b[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (&av, &bv) in arow.iter().zip(brow) {
                    acc += av * bv;
                }
                *o += acc;
            }
        }
    });
}

/// out += Aᵀ · B, with A `[k,m]`, B `[k,n]`, out `[m,n]`.
pub fn gemm_acc_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    for_row_chunks(out, m, n, |row0, chunk| {
        for (local, orow) in chunk.chunks_exact_mut(n).enumerate() {
            let i = row0 + local;
            for kk in 0..k {
                let av = a[kk * m + i];
                let brow = &b[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    });
}
