//! Reference values computed without the library's envelope algorithms.
//! Each oracle is deliberately naive: brute force over chords, direct
//! scans, or closed forms.

/// Lower convex hull of the sampled graph `(xs, ys)` at `q`, by brute force
/// over all chords `[x_j, x_k]` containing `q` and all sample points at `q`.
/// Returns `None` outside the sampled range.
pub fn chord_hull_at(xs: &[f64], ys: &[f64], q: f64) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let mut best = f64::INFINITY;
    for j in 0..xs.len() {
        if !ys[j].is_finite() {
            continue;
        }
        if xs[j] == q {
            best = best.min(ys[j]);
        }
        if xs[j] > q {
            continue;
        }
        for k in 0..xs.len() {
            if xs[k] <= q || !ys[k].is_finite() {
                continue;
            }
            let lam = (xs[k] - q) / (xs[k] - xs[j]);
            best = best.min(lam * ys[j] + (1.0 - lam) * ys[k]);
        }
    }
    best.is_finite().then_some(best)
}

/// Samples `g` at `count` equispaced points of `[lo, hi]`.
pub fn sample_graph(g: impl Fn(f64) -> f64, lo: f64, hi: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect();
    let ys = xs.iter().map(|&x| g(x)).collect();
    (xs, ys)
}

pub fn double_well(s: f64) -> f64 {
    (s * s - 1.0).powi(2)
}

/// Convex envelope of the one-dimensional double well.
pub fn double_well_hull(s: f64) -> f64 {
    (s * s - 1.0).max(0.0).powi(2)
}

/// Minimum over `g in R^n` with mean `xi` of `mean_i f(g_i)`, restricted to
/// two-valued vectors (`k` entries equal to `a`, the rest fixed by the
/// mean). This is the one-dimensional discrete cell value of a double well:
/// every such `g` is the gradient of a zero-boundary sawtooth.
pub fn sawtooth_cell_value(f: impl Fn(f64) -> f64, xi: f64, n: usize, reach: f64) -> f64 {
    let mut best = f(xi);
    let scan = 4000;
    for k in 1..n {
        let (kf, rest) = (k as f64, (n - k) as f64);
        let value = |a: f64| (kf * f(a) + rest * f((n as f64 * xi - kf * a) / rest)) / n as f64;
        let mut a_best = 0.0;
        let mut v_best = f64::INFINITY;
        for i in 0..=scan {
            let a = -reach + 2.0 * reach * i as f64 / scan as f64;
            let v = value(a);
            if v < v_best {
                v_best = v;
                a_best = a;
            }
        }
        // Golden-section polish around the best scan point.
        let h = 2.0 * reach / scan as f64;
        let (mut lo, mut hi) = (a_best - h, a_best + h);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = hi - phi * (hi - lo);
            let d = lo + phi * (hi - lo);
            if value(c) < value(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        best = best.min(v_best).min(value(0.5 * (lo + hi)));
    }
    best
}

/// `int_Q (1 + |x|^2) dx / |Q|` for the cube of side `side` centered at `c`.
pub fn weighted_cube_average(c: &[f64], side: f64) -> f64 {
    1.0 + c.iter().map(|v| v * v).sum::<f64>() + c.len() as f64 * side * side / 12.0
}

/// Least-squares slope of `y = k x` and the centered coefficient of
/// determination of that fit.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let k = sxy / sxx;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - k * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    (k, 1.0 - ss_res / ss_tot)
}
