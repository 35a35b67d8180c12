//! Special functions needed by the Matérn family.
//!
//! The modified Bessel function of the second kind is evaluated in log space.
//! Half-integer orders use the terminating closed form; other orders use
//! Temme's series for `x < 2` and Steed's continued fraction (CF2) otherwise,
//! followed by forward recurrence from the reduced order `|mu| <= 1/2`.

use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 20_000;
const X_SWITCH: f64 = 2.0;

/// Coefficients c_k of 1/Γ(z) = Σ c_k z^k (Abramowitz & Stegun 6.1.34).
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Temme's auxiliary values for |mu| <= 1/2:
/// (gam1, gam2, 1/Γ(1+mu), 1/Γ(1-mu)).
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    // gam1 = -(c2 + c4 mu^2 + ...), gam2 = c1 + c3 mu^2 + ...
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    for (k, c) in RECIP_GAMMA.iter().enumerate().rev() {
        // k is zero based, so RECIP_GAMMA[k] = c_{k+1}
        if k % 2 == 1 {
            gam1 = gam1 * mu2 + c;
        } else {
            gam2 = gam2 * mu2 + c;
        }
    }
    let gam1 = -gam1;
    let gampl = gam2 - mu * gam1;
    let gammi = gam2 + mu * gam1;
    (gam1, gam2, gampl, gammi)
}

/// Returns `(ln K_mu(x), ln K_{mu+1}(x))` for |mu| <= 1/2.
fn ln_k_reduced(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    if x < X_SWITCH {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            let del1 = c * (p - fi * ff);
            sum1 += del1;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum.ln(), (sum1 * 2.0 / x).ln())
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh *= b * d - 1.0;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let ln_kmu = 0.5 * (PI / (2.0 * x)).ln() - x - s.ln();
        let ratio = (mu + x + 0.5 - h) / x;
        (ln_kmu, ln_kmu + ratio.ln())
    }
}

/// Returns `Some(m)` when `nu = m + 1/2` for a non-negative integer m.
pub fn half_integer_index(nu: f64) -> Option<usize> {
    let m = nu - 0.5;
    if m >= 0.0 && (m - m.round()).abs() < 1e-12 && m < 64.0 {
        Some(m.round() as usize)
    } else {
        None
    }
}

/// ln K_{m+1/2}(x) from the terminating series
/// K_{m+1/2}(x) = sqrt(pi/(2x)) e^{-x} Σ_k (m+k)!/(k!(m-k)!) (2x)^{-k}.
fn ln_k_half_integer(m: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=m {
        // ratio of consecutive coefficients: (m+k)(m-k+1)/k
        let kf = k as f64;
        let mf = m as f64;
        term *= (mf + kf) * (mf - kf + 1.0) / (kf * 2.0 * x);
        sum += term;
    }
    0.5 * (PI / (2.0 * x)).ln() - x + sum.ln()
}

/// Natural log of the modified Bessel function of the second kind, K_nu(x),
/// for real order `nu` and `x > 0`. K is even in its order.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let nu = nu.abs();
    if let Some(m) = half_integer_index(nu) {
        return ln_k_half_integer(m, x);
    }
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut lk, mut lk1) = ln_k_reduced(mu, x);
    // forward recurrence K_{v+1} = K_{v-1} + (2v/x) K_v, carried in log form
    for i in 1..=(nl as usize) {
        let v = mu + i as f64;
        // ln K_{v+1} = ln K_v + ln( (2v/x) + exp(ln K_{v-1} - ln K_v) )
        let next = lk1 + (2.0 * v / x + (lk - lk1).exp()).ln();
        lk = lk1;
        lk1 = next;
    }
    lk
}

/// K_nu(x).
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).exp()
}
