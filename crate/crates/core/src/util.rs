//! Small numerical helpers.

/// Ordinary least squares `y = slope * x + intercept`, returning `(slope, intercept, r_squared)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// Neumaier compensated sum.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Batch-means mean and standard error of a sequence, using `batches` contiguous batches.
pub(crate) fn batch_means(values: &[f64], batches: usize) -> (f64, f64, Vec<f64>) {
    let n = values.len();
    let b = batches.min(n).max(1);
    let mean = compensated_sum(values) / n as f64;
    let mut means = Vec::with_capacity(b);
    for i in 0..b {
        let lo = i * n / b;
        let hi = (i + 1) * n / b;
        let s = compensated_sum(&values[lo..hi]);
        means.push(s / (hi - lo) as f64);
    }
    if b < 2 {
        return (mean, 0.0, means);
    }
    let bm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt(), means)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}
