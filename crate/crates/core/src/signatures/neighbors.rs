//! 3x3 neighborhoods of subband coefficients and histogram mutual information.

use crate::error::{Error, Result};
use crate::nsst::ChannelPlane;

/// Neighbor offsets `(dy, dx)` in row-major order; index 4 is the center.
pub const NEIGHBOR_OFFSETS: [(i8, i8); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub const MI_BINS: usize = 64;

/// Fewest samples accepted by [`mutual_information`].
pub const MIN_MI_SAMPLES: usize = 1024;

/// Nine coefficient columns gathered by a circular 3x3 window.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborWindow {
    columns: Vec<Vec<f64>>,
}

impl NeighborWindow {
    /// Column for `NEIGHBOR_OFFSETS[k]`.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn center(&self) -> &[f64] {
        &self.columns[4]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Row `y * width + x` of the column for offset `(dy, dx)` holds the
/// coefficient at `(x + dx, y + dy)`, wrapping at the borders.
pub fn neighbor_column(subband: &ChannelPlane, (dy, dx): (i8, i8)) -> Vec<f64> {
    let (w, h) = (subband.width() as i64, subband.height() as i64);
    let values = subband.values();
    let mut out = Vec::with_capacity(values.len());
    for y in 0..h {
        let row = (y + dy as i64).rem_euclid(h) * w;
        for x in 0..w {
            out.push(values[(row + (x + dx as i64).rem_euclid(w)) as usize]);
        }
    }
    out
}

pub fn build_neighbor_matrix(subband: &ChannelPlane) -> NeighborWindow {
    NeighborWindow {
        columns: NEIGHBOR_OFFSETS
            .iter()
            .map(|&off| neighbor_column(subband, off))
            .collect(),
    }
}

fn bin_indices(v: &[f64]) -> Vec<usize> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let width = hi - lo;
    v.iter()
        .map(|&x| {
            if width > 0.0 {
                (((x - lo) / width * MI_BINS as f64) as usize).min(MI_BINS - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Plug-in mutual information (nats) from a 64x64 equal-width joint histogram.
pub fn mutual_information(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "mutual information of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < MIN_MI_SAMPLES {
        return Err(Error::degenerate(format!(
            "mutual information needs at least {MIN_MI_SAMPLES} samples, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite sample".into()));
    }
    let (ia, ib) = (bin_indices(a), bin_indices(b));
    let mut joint = vec![0u64; MI_BINS * MI_BINS];
    let mut ca = [0u64; MI_BINS];
    let mut cb = [0u64; MI_BINS];
    for (&i, &j) in ia.iter().zip(&ib) {
        joint[i * MI_BINS + j] += 1;
        ca[i] += 1;
        cb[j] += 1;
    }
    let n = a.len() as f64;
    // Cell terms are symmetric in (a, b); summing them in sorted order makes
    // the estimate exactly symmetric as well.
    let mut terms: Vec<f64> = joint
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| {
            let c = c as f64;
            let marg = ca[k / MI_BINS] as f64 * cb[k % MI_BINS] as f64;
            c / n * (c * n / marg).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().max(0.0))
}

/// Offset of the neighbor with the largest mutual information with the center
/// coefficient. Ties keep the earliest offset in row-major order.
pub fn select_intra_scale_neighbor(subband: &ChannelPlane) -> Result<(i8, i8)> {
    let center = subband.values();
    let mut best: Option<((i8, i8), f64)> = None;
    for &off in NEIGHBOR_OFFSETS.iter().filter(|o| **o != (0, 0)) {
        let mi = mutual_information(center, &neighbor_column(subband, off))?;
        if best.is_none_or(|(_, b)| mi > b) {
            best = Some((off, mi));
        }
    }
    Ok(best.map(|(off, _)| off).expect("eight candidate offsets"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn random_plane(w: usize, h: usize, seed: u64) -> ChannelPlane {
        ChannelPlane::new(w, h, uniform(w * h, seed)).unwrap()
    }

    #[test]
    fn constant_subband_gives_identical_columns() {
        let p = ChannelPlane::new(16, 16, vec![0.3; 256]).unwrap();
        let win = build_neighbor_matrix(&p);
        assert_eq!(win.columns().len(), 9);
        assert!(win.columns().iter().all(|c| c == win.center()));
    }

    #[test]
    fn center_column_is_vectorized_subband() {
        let p = random_plane(20, 17, 1);
        assert_eq!(build_neighbor_matrix(&p).center(), p.values());
    }

    #[test]
    fn columns_follow_offsets() {
        let p = random_plane(18, 16, 2);
        let win = build_neighbor_matrix(&p);
        for (k, &(dy, dx)) in NEIGHBOR_OFFSETS.iter().enumerate() {
            for y in 0..16i64 {
                for x in 0..18i64 {
                    let sx = (x + dx as i64).rem_euclid(18) as usize;
                    let sy = (y + dy as i64).rem_euclid(16) as usize;
                    assert_eq!(win.column(k)[(y * 18 + x) as usize], p.get(sx, sy));
                }
            }
        }
    }

    #[test]
    fn shift_permutes_rows_identically() {
        let (w, h) = (19, 16);
        let p = random_plane(w, h, 3);
        let (sx, sy) = (5i64, -3i64);
        let shifted = build_neighbor_matrix(&p.shifted(sx, sy));
        let base = build_neighbor_matrix(&p);
        // Row r of the shifted window reads the base window at the pre-shift pixel.
        let perm: Vec<usize> = (0..w * h)
            .map(|r| {
                let (x, y) = ((r % w) as i64, (r / w) as i64);
                ((y - sy).rem_euclid(h as i64) * w as i64 + (x - sx).rem_euclid(w as i64)) as usize
            })
            .collect();
        for k in 0..9 {
            for (r, &src) in perm.iter().enumerate() {
                assert_eq!(shifted.column(k)[r], base.column(k)[src]);
            }
        }
    }

    #[test]
    fn independent_uniforms_have_small_mi() {
        let mi = mutual_information(&uniform(65536, 4), &uniform(65536, 5)).unwrap();
        assert!(mi < 0.05, "{mi}");
        assert!(mi >= 0.0);
    }

    #[test]
    fn self_information_is_histogram_entropy() {
        let a: Vec<f64> = uniform(8192, 6).iter().map(|u| u * u).collect();
        let mut counts = [0usize; MI_BINS];
        for i in bin_indices(&a) {
            counts[i] += 1;
        }
        let n = a.len() as f64;
        let entropy: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| -(c as f64 / n) * (c as f64 / n).ln())
            .sum();
        let mi = mutual_information(&a, &a).unwrap();
        assert!((mi - entropy).abs() < 1e-12);
        let b = uniform(8192, 7);
        assert!(mutual_information(&a, &b).unwrap() < mi);
    }

    #[test]
    fn mi_is_exactly_symmetric() {
        let a = uniform(4096, 8);
        let b: Vec<f64> = a.iter().zip(uniform(4096, 9)).map(|(x, y)| x + 0.3 * y).collect();
        assert_eq!(
            mutual_information(&a, &b).unwrap(),
            mutual_information(&b, &a).unwrap()
        );
    }

    #[test]
    fn mi_rejects_bad_lengths() {
        assert!(matches!(
            mutual_information(&uniform(2048, 1), &uniform(2047, 1)),
            Err(Error::Shape(_))
        ));
        assert!(mutual_information(&uniform(100, 1), &uniform(100, 2)).is_err());
    }

    #[test]
    fn horizontal_dependence_selects_horizontal_neighbor() {
        let (w, h) = (32, 256);
        let rows = uniform(h, 10);
        let values: Vec<f64> = (0..w * h).map(|i| rows[i / w]).collect();
        let p = ChannelPlane::new(w, h, values).unwrap();
        let off = select_intra_scale_neighbor(&p).unwrap();
        assert!(off == (0, -1) || off == (0, 1), "{off:?}");
    }

    #[test]
    fn white_noise_still_selects_and_is_deterministic() {
        let p = random_plane(64, 64, 11);
        let a = select_intra_scale_neighbor(&p).unwrap();
        assert!(NEIGHBOR_OFFSETS.contains(&a) && a != (0, 0));
        assert_eq!(select_intra_scale_neighbor(&p).unwrap(), a);
    }
}
