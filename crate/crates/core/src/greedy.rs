use rayon::prelude::*;

const PAR_THRESHOLD: usize = 8192;

/// Greedy max-min (farthest-first) selection of `k` out of `n` candidates,
/// starting from `start`. `dist(candidate, selected)` must be non-negative.
/// Each step picks the unselected candidate with the largest distance to its
/// nearest selected one; ties go to the lowest index. The per-candidate update
/// is independent across candidates, so the result does not depend on the
/// number of worker threads.
pub(crate) fn max_min_select<F>(n: usize, k: usize, start: usize, dist: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    debug_assert!(start < n && k <= n);
    let mut nearest = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(k);
    if k == 0 {
        return order;
    }
    order.push(start);
    taken[start] = true;
    while order.len() < k {
        let last = *order.last().expect("non-empty");
        let update = |(j, slot): (usize, &mut f64)| {
            let d = dist(j, last);
            if d < *slot {
                *slot = d;
            }
        };
        if n >= PAR_THRESHOLD {
            nearest.par_iter_mut().enumerate().for_each(update);
        } else {
            nearest.iter_mut().enumerate().for_each(update);
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, &d) in nearest.iter().enumerate() {
            if taken[j] {
                continue;
            }
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((j, d));
            }
        }
        let (next, _) = best.expect("k <= n leaves a candidate");
        taken[next] = true;
        order.push(next);
    }
    order
}
