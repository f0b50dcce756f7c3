use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-dimensional free-energy profile `F_b = −kT ln p_b`, shifted so that
/// the lowest bin is zero. Empty bins have no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyProfile {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub free_energy: Vec<Option<f64>>,
}

/// Histograms `values` into `n_bins` equal bins over `range` (default: the
/// data range; values outside an explicit range are ignored).
pub fn free_energy_histogram(
    values: &[f64],
    n_bins: usize,
    kt: f64,
    range: Option<(f64, f64)>,
) -> Result<FreeEnergyProfile> {
    if n_bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {n_bins}")));
    }
    if !(kt.is_finite() && kt > 0.0) {
        return Err(Error::Config(format!("kT must be positive, got {kt}")));
    }
    if values.is_empty() {
        return Err(Error::Data("free energy of an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("free-energy input contains NaN or infinity".into()));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo.is_finite() && hi.is_finite() && lo < hi => (lo, hi),
        Some((lo, hi)) => return Err(Error::Config(format!("invalid range [{lo}, {hi}]"))),
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) }
        }
    };
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let max = *counts.iter().max().expect("n_bins >= 2");
    if max == 0 {
        return Err(Error::Data("no values fall inside the histogram range".into()));
    }
    let free_energy = counts
        .iter()
        .map(|&c| (c > 0).then(|| -kt * (c as f64 / max as f64).ln()))
        .collect();
    let bin_edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    Ok(FreeEnergyProfile { bin_edges, counts, free_energy })
}

impl FreeEnergyProfile {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bins that are local minima whose depth exceeds `min_depth`.
    ///
    /// The depth of a minimum is the smaller of the two barriers to a lower
    /// bin (or to the end of the profile) on either side. Empty bins count
    /// as infinitely high.
    pub fn local_minima(&self, min_depth: f64) -> Vec<usize> {
        let f: Vec<f64> = self
            .free_energy
            .iter()
            .map(|v| v.unwrap_or(f64::INFINITY))
            .collect();
        let n = f.len();
        let barrier = |i: usize, step: isize| {
            let mut top = f[i];
            let mut j = i as isize + step;
            while j >= 0 && (j as usize) < n {
                let v = f[j as usize];
                if v < f[i] {
                    return top;
                }
                top = top.max(v);
                j += step;
            }
            if top == f[i] { f64::INFINITY } else { top }
        };
        (0..n)
            .filter(|&i| f[i].is_finite())
            .filter(|&i| (i == 0 || f[i - 1] > f[i]) && (i + 1 == n || f[i + 1] >= f[i]))
            .filter(|&i| barrier(i, -1).min(barrier(i, 1)) - f[i] > min_depth)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_occupancy_is_flat() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 + 0.5).collect();
        let p = free_energy_histogram(&v, 10, 1.0, Some((0.0, 100.0))).unwrap();
        assert!(p.free_energy.iter().all(|f| *f == Some(0.0)));
        assert_eq!(p.bin_centers()[0], 5.0);
    }

    #[test]
    fn three_to_one_split() {
        let v = [0.1, 0.2, 0.3, 0.9];
        let p = free_energy_histogram(&v, 2, 1.0, Some((0.0, 1.0))).unwrap();
        assert_eq!(p.free_energy[0], Some(0.0));
        assert!((p.free_energy[1].unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_bins_are_missing() {
        let p = free_energy_histogram(&[0.0, 0.1, 2.9, 3.0], 3, 2.5, None).unwrap();
        assert_eq!(p.free_energy[1], None);
        assert_eq!(p.counts, vec![2, 0, 2]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(free_energy_histogram(&[1.0], 1, 1.0, None).is_err());
        assert!(free_energy_histogram(&[], 5, 1.0, None).is_err());
        assert!(free_energy_histogram(&[1.0], 5, 0.0, None).is_err());
        assert!(free_energy_histogram(&[1.0], 5, 1.0, Some((1.0, 0.0))).is_err());
    }

    #[test]
    fn minima_by_depth() {
        let p = FreeEnergyProfile {
            bin_edges: (0..=9).map(f64::from).collect(),
            counts: vec![1; 9],
            free_energy: [3.0, 0.0, 2.0, 1.9, 2.5, 1.0, 4.0, 3.0, 5.0]
                .into_iter()
                .map(Some)
                .collect(),
        };
        assert_eq!(p.local_minima(0.0), vec![1, 3, 5, 7]);
        // depths: bin 1 → 3, bin 3 → 0.1, bin 5 → 1.5, bin 7 → 1
        assert_eq!(p.local_minima(0.5), vec![1, 5, 7]);
        assert_eq!(p.local_minima(1.4), vec![1, 5]);
    }
}
