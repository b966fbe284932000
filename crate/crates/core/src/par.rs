//! Row-parallel loop helpers.
//!
//! With the `parallel` feature these dispatch to rayon, otherwise they run
//! the same closures sequentially. Reductions always combine per-row
//! partial sums left to right so results do not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for every `width`-long row of `out`.
pub fn for_each_row<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Like [`for_each_row`] over two equally shaped buffers at once.
pub fn for_each_row2<F>(a: &mut [f64], b: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    a.par_chunks_mut(width)
        .zip(b.par_chunks_mut(width))
        .enumerate()
        .for_each(|(i, (ra, rb))| f(i, ra, rb));
    #[cfg(not(feature = "parallel"))]
    a.chunks_mut(width)
        .zip(b.chunks_mut(width))
        .enumerate()
        .for_each(|(i, (ra, rb))| f(i, ra, rb));
}

/// Sum of `f(row)` over `0..rows`, accumulated in row order.
pub fn sum_rows<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..rows).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..rows).map(f).collect();
    partials.iter().sum()
}

/// Maps `f` over `items`, possibly concurrently, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Runs two closures, concurrently when the `parallel` feature is enabled.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    return rayon::join(a, b);
    #[cfg(not(feature = "parallel"))]
    return (a(), b());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sums_match_sequential_order() {
        let rows: Vec<f64> = (0..97).map(|i| 1.0 / (i as f64 + 0.3)).collect();
        let expected: f64 = rows.iter().sum();
        assert_eq!(sum_rows(rows.len(), |i| rows[i]).to_bits(), expected.to_bits());
    }

    #[test]
    fn for_each_row_visits_every_row_once() {
        let mut buf = vec![0.0; 12];
        for_each_row(&mut buf, 3, |i, row| row.iter_mut().for_each(|x| *x += i as f64));
        assert_eq!(buf, vec![0., 0., 0., 1., 1., 1., 2., 2., 2., 3., 3., 3.]);
    }
}
