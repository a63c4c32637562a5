use ndarray::{Array2, ArrayView2};

/// Regression deltas along time with replicated edge frames.
///
/// `d_t = sum_{w=1..W} w (x_{t+w} - x_{t-w}) / (2 sum w^2)`.
pub fn deltas(x: ArrayView2<f64>, window: usize) -> Array2<f64> {
    let (frames, dims) = x.dim();
    let mut out = Array2::zeros((frames, dims));
    if frames == 0 || window == 0 {
        return out;
    }
    let norm = 2.0 * (1..=window).map(|w| (w * w) as f64).sum::<f64>();
    let last = frames as isize - 1;
    let at = |t: isize| t.clamp(0, last) as usize;
    for t in 0..frames as isize {
        for w in 1..=window as isize {
            let (ahead, behind) = (x.row(at(t + w)), x.row(at(t - w)));
            let mut row = out.row_mut(t as usize);
            for d in 0..dims {
                row[d] += w as f64 * (ahead[d] - behind[d]);
            }
        }
    }
    out.mapv_inplace(|v| v / norm);
    out
}
