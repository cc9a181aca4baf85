//! Fixed-size table of the best distances seen so far.

use crate::video::PixelPos;

/// Inserts `(p, d)` into a table sorted by ascending distance, dropping the
/// current worst entry.
///
/// Nothing happens unless `d` is strictly smaller than the last distance.
/// The new entry lands after every entry whose distance is `<= d`, so on
/// ties the entries inserted first stay ahead. Returns whether the table
/// changed.
#[inline]
pub fn insert_ordered(distances: &mut [f64], positions: &mut [PixelPos], p: PixelPos, d: f64) -> bool {
    let n = distances.len();
    debug_assert_eq!(n, positions.len());
    if n == 0 || !(d < distances[n - 1]) {
        return false;
    }
    for i in (1..n).rev() {
        if distances[i - 1] <= d {
            distances[i] = d;
            positions[i] = p;
            return true;
        }
        distances[i] = distances[i - 1];
        positions[i] = positions[i - 1];
    }
    distances[0] = d;
    positions[0] = p;
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(d: &[f64]) -> (Vec<f64>, Vec<PixelPos>) {
        (d.to_vec(), (0..d.len() as i32).map(|i| PixelPos::new(i, 0, 0)).collect())
    }

    #[test]
    fn inserts_in_the_middle() {
        let (mut d, mut p) = table(&[1.0, 3.0, 5.0]);
        assert!(insert_ordered(&mut d, &mut p, PixelPos::new(9, 9, 9), 2.0));
        assert_eq!(d, vec![1.0, 2.0, 3.0]);
        assert_eq!(p[1], PixelPos::new(9, 9, 9));
        assert_eq!(p[2], PixelPos::new(1, 0, 0));
    }

    #[test]
    fn equal_to_last_is_rejected() {
        let (mut d, mut p) = table(&[1.0, 3.0, 5.0]);
        assert!(!insert_ordered(&mut d, &mut p, PixelPos::new(9, 9, 9), 5.0));
        assert_eq!(d, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn ties_go_after_existing_entries() {
        let (mut d, mut p) = table(&[1.0, 3.0, 5.0]);
        insert_ordered(&mut d, &mut p, PixelPos::new(9, 9, 9), 3.0);
        assert_eq!(d, vec![1.0, 3.0, 3.0]);
        assert_eq!(p[1], PixelPos::new(1, 0, 0));
        assert_eq!(p[2], PixelPos::new(9, 9, 9));
    }

    #[test]
    fn new_minimum_goes_first() {
        let (mut d, mut p) = table(&[1.0, 3.0, 5.0]);
        insert_ordered(&mut d, &mut p, PixelPos::new(9, 9, 9), 0.5);
        assert_eq!(d, vec![0.5, 1.0, 3.0]);
        assert_eq!(p[0], PixelPos::new(9, 9, 9));
    }

    #[test]
    fn single_entry_table() {
        let (mut d, mut p) = table(&[4.0]);
        assert!(!insert_ordered(&mut d, &mut p, PixelPos::new(1, 1, 1), 4.0));
        assert!(insert_ordered(&mut d, &mut p, PixelPos::new(1, 1, 1), 3.0));
        assert_eq!((d[0], p[0]), (3.0, PixelPos::new(1, 1, 1)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Matches a stable sort of everything seen, truncated to n.
            #[test]
            fn keeps_the_n_smallest_stably(
                n in 1usize..8,
                ds in proptest::collection::vec(0u8..20, 0..60),
            ) {
                let mut dist = vec![f64::INFINITY; n];
                let mut pos = vec![PixelPos::new(-1, -1, -1); n];
                for (i, &d) in ds.iter().enumerate() {
                    insert_ordered(&mut dist, &mut pos, PixelPos::new(i as i32, 0, 0), d as f64);
                }
                let mut all: Vec<(f64, i32)> = ds.iter().enumerate().map(|(i, &d)| (d as f64, i as i32)).collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                all.truncate(n);
                for (k, &(d, i)) in all.iter().enumerate() {
                    prop_assert_eq!(dist[k], d);
                    prop_assert_eq!(pos[k].x, i);
                }
            }
        }
    }
}
