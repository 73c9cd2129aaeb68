//! Special functions used by the limit laws and the weight asymptotics.

use std::f64::consts::PI;

/// Euler–Mascheroni constant γ.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const BERNOULLI_2K: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

/// Riemann zeta function for real `s != 1` (Euler–Maclaurin summation,
/// valid on both sides of the pole).
pub fn zeta(s: f64) -> f64 {
    assert!(s != 1.0, "zeta has a pole at s = 1");
    const N: usize = 24;
    let nf = N as f64;
    let mut acc: f64 = (1..N).map(|n| (n as f64).powf(-s)).sum();
    acc += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    // rising product s(s+1)...(s+2k-2) / (2k)!
    let mut rising = s;
    let mut fact = 2.0;
    let mut npow = nf.powf(-s - 1.0);
    for (k, b) in BERNOULLI_2K.iter().enumerate() {
        let term = b / fact * rising * npow;
        acc += term;
        let k2 = 2.0 * (k as f64 + 1.0);
        rising *= (s + k2 - 1.0) * (s + k2);
        fact *= (k2 + 1.0) * (k2 + 2.0);
        npow /= nf * nf;
    }
    acc
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-u}/u du` for `x > 0`.
pub fn e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs x > 0");
    if x > 1.0 {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    } else {
        let mut ans = -x.ln() - EULER_GAMMA;
        let mut fact = 1.0;
        for i in 1..200 {
            fact *= -x / i as f64;
            let del = -fact / i as f64;
            ans += del;
            if del.abs() < ans.abs() * 1e-17 {
                break;
            }
        }
        ans
    }
}

/// `Ein(s) = ∫_0^s (1 - e^{-u})/u du`, the entire exponential integral.
pub fn ein(s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    if s.abs() <= 1.0 {
        let mut term = 1.0;
        let mut acc = 0.0;
        for k in 1..60 {
            term *= -s / k as f64;
            let add = -term / k as f64;
            acc += add;
            if add.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        e1(s) + s.ln() + EULER_GAMMA
    }
}

/// Cosine and sine integrals `(Ci(x), Si(x))`.
pub fn cisi(x: f64) -> (f64, f64) {
    use num_complex::Complex64;
    let t = x.abs();
    if t == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    let (ci, si) = if t > 2.0 {
        let tiny = 1e-300;
        let mut b = Complex64::new(1.0, t);
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = b.inv();
        let mut h = d;
        for i in 2..1000 {
            let a = -(((i - 1) * (i - 1)) as f64);
            b += 2.0;
            d = (d * a + b).inv();
            c = b + c.inv() * a;
            let del = c * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
                break;
            }
        }
        h *= Complex64::new(t.cos(), -t.sin());
        (-h.re, 0.5 * PI + h.im)
    } else {
        let (mut sum, mut sums, mut sumc) = (0.0, 0.0, 0.0);
        let mut sign = 1.0;
        let mut fact = 1.0;
        let mut odd = true;
        for k in 1..200 {
            fact *= t / k as f64;
            let term = fact / k as f64;
            sum += sign * term;
            let err = term / f64::abs(sum);
            if odd {
                sign = -sign;
                sums = sum;
                sum = sumc;
            } else {
                sumc = sum;
                sum = sums;
            }
            if err < 1e-17 {
                break;
            }
            odd = !odd;
        }
        (sumc + t.ln() + EULER_GAMMA, sums)
    };
    (ci, if x < 0.0 { -si } else { si })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp;
        loop {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre integration of `f` over `[a, b]` with `panels`
/// equal panels of `order` nodes each.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut acc = crate::numeric::KahanSum::new();
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc.add(0.5 * h * wi * f(c + 0.5 * h * xi));
        }
    }
    acc.value()
}

/// Standard normal density.
pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}
