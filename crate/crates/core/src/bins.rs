//! Discretization of sample size and censoring rate.
//!
//! Empirical null tables are keyed by these bins, and the stacking features
//! include their one-hot encodings, so the boundaries must match exactly in
//! both places. The size bin is driven by the *smaller* group size and the
//! rate bin by the pooled censoring rate.

/// Sample-size bins over `min(n1, n2)`.
pub const N_BINS: [&str; 4] = ["n<=50", "50<n<=100", "100<n<=500", "n>500"];

/// Censoring-rate bins over the pooled censoring rate.
pub const R_BINS: [&str; 4] = ["r=0", "0<r<=0.15", "0.15<r<=0.35", "r>0.35"];

/// Index into [`N_BINS`] for the smaller group size.
pub fn n_bin_index(min_n: usize) -> usize {
    if min_n <= 50 {
        0
    } else if min_n <= 100 {
        1
    } else if min_n <= 500 {
        2
    } else {
        3
    }
}

/// Index into [`R_BINS`] for a pooled censoring rate in `[0, 1]`.
pub fn r_bin_index(pooled_rate: f64) -> usize {
    if pooled_rate <= 0.0 {
        0
    } else if pooled_rate <= 0.15 {
        1
    } else if pooled_rate <= 0.35 {
        2
    } else {
        3
    }
}

/// Bin label for the smaller group size.
pub fn n_bin_label(min_n: usize) -> &'static str {
    N_BINS[n_bin_index(min_n)]
}

/// Bin label for a pooled censoring rate.
pub fn r_bin_label(pooled_rate: f64) -> &'static str {
    R_BINS[r_bin_index(pooled_rate)]
}

/// Pooled censoring rate of two groups: total censored over total size.
pub fn pooled_rate(n1: usize, r1: f64, n2: usize, r2: f64) -> f64 {
    (n1 as f64 * r1 + n2 as f64 * r2) / (n1 + n2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_bins_cover_boundaries() {
        assert_eq!(n_bin_index(2), 0);
        assert_eq!(n_bin_index(50), 0);
        assert_eq!(n_bin_index(51), 1);
        assert_eq!(n_bin_index(100), 1);
        assert_eq!(n_bin_index(101), 2);
        assert_eq!(n_bin_index(500), 2);
        assert_eq!(n_bin_index(501), 3);
        assert_eq!(n_bin_label(20), "n<=50");
    }

    #[test]
    fn rate_bins_cover_boundaries() {
        assert_eq!(r_bin_index(0.0), 0);
        assert_eq!(r_bin_index(1e-9), 1);
        assert_eq!(r_bin_index(0.15), 1);
        assert_eq!(r_bin_index(0.150001), 2);
        assert_eq!(r_bin_index(0.35), 2);
        assert_eq!(r_bin_index(0.36), 3);
        assert_eq!(r_bin_label(0.3), "0.15<r<=0.35");
    }

    #[test]
    fn pooled_rate_weights_by_group_size() {
        assert_eq!(pooled_rate(10, 0.0, 10, 0.3), 0.15);
        assert!((pooled_rate(30, 0.1, 10, 0.3) - 0.15).abs() < 1e-15);
    }
}
