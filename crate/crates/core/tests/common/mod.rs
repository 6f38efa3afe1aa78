//! Reference implementations used as test oracles. Everything here is
//! written directly from the definitions with plain loops, independent of
//! the library's kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use remixer::diff::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn rand_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), randn_vec(r, n)).unwrap()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

const EPS: f64 = 1e-12;
const CAP: f64 = 120.0;

pub fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let v = 10.0 * (num / (den + EPS * num)).log10();
    if v > CAP {
        CAP
    } else {
        v
    }
}

pub fn snr(s: &[f64], e: &[f64]) -> f64 {
    let mut err = 0.0;
    for i in 0..s.len() {
        err += (e[i] - s[i]).powi(2);
    }
    ratio_db(energy(s), err)
}

pub fn si_sdr(s: &[f64], e: &[f64]) -> f64 {
    let alpha = inner(e, s) / energy(s);
    if alpha == 0.0 {
        return f64::NEG_INFINITY;
    }
    let target: Vec<f64> = s.iter().map(|v| alpha * v).collect();
    let noise: Vec<f64> = e.iter().zip(&target).map(|(a, b)| a - b).collect();
    ratio_db(energy(&target), energy(&noise))
}

pub fn sd_sdr(s: &[f64], e: &[f64]) -> f64 {
    let alpha = inner(e, s) / energy(s);
    if alpha == 0.0 {
        return f64::NEG_INFINITY;
    }
    let scaled: Vec<f64> = s.iter().map(|v| alpha * v).collect();
    let err: Vec<f64> = e.iter().zip(s).map(|(a, b)| a - b).collect();
    let es = energy(s);
    let v = 10.0 * (energy(&scaled) / (energy(&err) + EPS * es)).log10();
    v.min(CAP)
}

pub fn min_sdr(s: &[f64], e: &[f64]) -> f64 {
    snr(s, e).min(sd_sdr(s, e))
}

/// Least squares through Gaussian elimination with partial pivoting on the normal equations.
pub fn lstsq(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = inner(&cols[i], &cols[j]);
        }
        a[i][k] = inner(&cols[i], y);
    }
    for c in 0..k {
        let p = (c..k).max_by(|&x, &z| a[x][c].abs().total_cmp(&a[z][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

/// `(target, interference, artifact)` of `est` against source `t`.
pub fn bss(est: &[f64], sources: &[Vec<f64>], t: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = lstsq(sources, est);
    let n = est.len();
    let mut target = vec![0.0; n];
    let mut interf = vec![0.0; n];
    for (k, s) in sources.iter().enumerate() {
        for i in 0..n {
            if k == t {
                target[i] += c[k] * s[i];
            } else {
                interf[i] += c[k] * s[i];
            }
        }
    }
    let art: Vec<f64> = (0..n).map(|i| est[i] - target[i] - interf[i]).collect();
    (c, target, interf, art)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Plain strided convolution, `x [cin, t]`, `w [cout, cin, l]`.
pub fn conv1d(x: &Tensor, w: &Tensor, stride: usize) -> Vec<f64> {
    let (cin, t) = (x.shape()[0], x.shape()[1]);
    let (cout, l) = (w.shape()[0], w.shape()[2]);
    let tout = (t - l) / stride + 1;
    let mut y = vec![0.0; cout * tout];
    for o in 0..cout {
        for f in 0..tout {
            let mut acc = 0.0;
            for c in 0..cin {
                for j in 0..l {
                    acc += w.data()[(o * cin + c) * l + j] * x.data()[c * t + f * stride + j];
                }
            }
            y[o * tout + f] = acc;
        }
    }
    y
}

/// Overlap-add transposed convolution, `x [cin, t]`, `w [cin, cout, l]`.
pub fn conv1d_transpose(x: &Tensor, w: &Tensor, stride: usize) -> Vec<f64> {
    let (cin, t) = (x.shape()[0], x.shape()[1]);
    let (cout, l) = (w.shape()[1], w.shape()[2]);
    let tout = (t - 1) * stride + l;
    let mut y = vec![0.0; cout * tout];
    for c in 0..cin {
        for f in 0..t {
            for o in 0..cout {
                for j in 0..l {
                    y[o * tout + f * stride + j] += x.data()[c * t + f] * w.data()[(c * cout + o) * l + j];
                }
            }
        }
    }
    y
}

/// Dilated depthwise convolution with symmetric zero padding.
pub fn depthwise(x: &Tensor, w: &Tensor, dilation: usize) -> Vec<f64> {
    let (c, t) = (x.shape()[0], x.shape()[1]);
    let p = w.shape()[1];
    let half = (p / 2) as isize * dilation as isize;
    let mut y = vec![0.0; c * t];
    for ch in 0..c {
        for i in 0..t {
            let mut acc = 0.0;
            for j in 0..p {
                let src = i as isize + j as isize * dilation as isize - half;
                if src >= 0 && (src as usize) < t {
                    acc += w.data()[ch * p + j] * x.data()[ch * t + src as usize];
                }
            }
            y[ch * t + i] = acc;
        }
    }
    y
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub mod gradsuite;
pub mod metricsuite;
pub mod structsuite;
pub mod e2e;
