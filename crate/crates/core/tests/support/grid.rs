//! Brute-force maximiser of the Bradley-Terry log-likelihood on a lattice,
//! independent of the Newton fit.

/// Log-likelihood with `beta[0]` fixed at zero and `free` holding the rest.
pub fn log_likelihood(counts: &[Vec<u64>], free: &[f64]) -> f64 {
    let beta = |i: usize| if i == 0 { 0.0 } else { free[i - 1] };
    let mut ll = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            if i != j && n > 0 {
                let d = beta(j) - beta(i);
                let softplus = d.max(0.0) + (-d.abs()).exp().ln_1p();
                ll -= n as f64 * softplus;
            }
        }
    }
    ll
}

fn lattice(centre: f64, half_width: f64, step: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = (half_width / step).round() as i64;
    (-n..=n)
        .map(|k| ((centre + k as f64 * step) / step).round() * step)
        .filter(|x| *x >= lo - 1e-12 && *x <= hi + 1e-12)
        .collect()
}

fn scan(counts: &[Vec<u64>], axes: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let dims = axes.len();
    let mut idx = vec![0usize; dims];
    let mut best = (vec![0.0; dims], f64::NEG_INFINITY);
    loop {
        let point: Vec<f64> = idx.iter().zip(axes).map(|(&k, a)| a[k]).collect();
        let ll = log_likelihood(counts, &point);
        if ll > best.1 {
            best = (point, ll);
        }
        let mut d = 0;
        loop {
            if d == dims {
                return best;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Argmax of the log-likelihood over the lattice `step·Z^k ∩ [lo, hi]^k`
/// with item 0 as the reference.
///
/// An exhaustive scan is used when it is small enough; otherwise the scan
/// is refined from coarse lattices and finished with a hill climb over all
/// lattice neighbours, which reaches the lattice maximum of a concave
/// function.
pub fn grid_argmax(counts: &[Vec<u64>], lo: f64, hi: f64, step: f64) -> (Vec<f64>, f64) {
    let dims = counts.len() - 1;
    let points_per_axis = ((hi - lo) / step).round() + 1.0;
    if points_per_axis.powi(dims as i32) <= 2.5e7 {
        let axis = lattice((lo + hi) / 2.0, (hi - lo) / 2.0, step, lo, hi);
        return scan(counts, &vec![axis; dims]);
    }

    let mut centre = vec![(lo + hi) / 2.0; dims];
    let mut half = (hi - lo) / 2.0;
    let mut s = 0.1;
    loop {
        let axes: Vec<Vec<f64>> = centre.iter().map(|&c| lattice(c, half, s, lo, hi)).collect();
        centre = scan(counts, &axes).0;
        if s <= step * 1.0001 {
            break;
        }
        half = 3.0 * s;
        s = (s / 10.0).max(step);
    }

    let mut best = (centre.clone(), log_likelihood(counts, &centre));
    loop {
        let axes: Vec<Vec<f64>> = best.0.iter().map(|&c| lattice(c, step, step, lo, hi)).collect();
        let next = scan(counts, &axes);
        if next.1 <= best.1 {
            return best;
        }
        best = next;
    }
}
