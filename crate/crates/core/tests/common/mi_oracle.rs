//! Direct-summation mutual information, written from the definition.

/// `sum p(x,y) ln(p(x,y) / (p(x) p(y)))` with probabilities formed by division.
pub fn direct_mi(counts: &[Vec<u64>]) -> f64 {
    let total: u64 = counts.iter().flatten().sum();
    let n = total as f64;
    let cols = counts.first().map_or(0, Vec::len);
    let px: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
    let py: Vec<f64> = (0..cols)
        .map(|j| counts.iter().map(|r| r[j]).sum::<u64>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy / (px[i] * py[j])).ln();
            }
        }
    }
    mi
}
