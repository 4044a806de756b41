use std::collections::VecDeque;

use crate::data::Mask;

/// 8-connected components of the set pixels, as sorted row-major pixel
/// indices. Components are ordered by their first pixel in row-major order.
pub fn connected_components(mask: &Mask) -> Vec<Vec<usize>> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(p) = queue.pop_front() {
            comp.push(p);
            let (r, c) = (p / w, p % w);
            for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let q = nr * w + nc;
                    if mask.data[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_diagonal() {
        assert!(connected_components(&Mask::empty(4, 5)).is_empty());
        let m = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(connected_components(&m), vec![vec![0, 3]]);
    }

    #[test]
    fn separate_blobs_in_row_major_order() {
        #[rustfmt::skip]
        let m = Mask::new(3, 4, vec![
            false, false, true, true,
            true, false, false, false,
            true, false, false, true,
        ]).unwrap();
        assert_eq!(connected_components(&m), vec![vec![2, 3], vec![4, 8], vec![11]]);
    }
}
