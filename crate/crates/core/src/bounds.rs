//! Closed-form tail bounds for the branching processes and the population.
//!
//! Every bound is evaluated as a logarithm first, so factorials and
//! exponentials far outside the range of `f64` are handled. Results carry
//! both the raw value, which may exceed 1, and the value clamped to `[0, 1]`
//! that probability comparisons use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Params, Scales};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub ln_raw: f64,
    pub raw: f64,
    pub clamped: f64,
}

impl Bound {
    pub fn from_ln(ln_raw: f64) -> Self {
        let raw = ln_raw.exp();
        Self {
            ln_raw,
            raw,
            clamped: raw.clamp(0.0, 1.0),
        }
    }
}

/// `ln(l!)` for real `l >= 0`.
pub fn ln_factorial(l: f64) -> f64 {
    if l < 2.0 {
        0.0
    } else {
        libm::lgamma(l + 1.0)
    }
}

/// `l * ln(x)` with the convention `0^0 = 1`.
fn ln_power(x: f64, l: f64) -> f64 {
    if l == 0.0 {
        0.0
    } else {
        l * x.ln()
    }
}

/// `ln(n0 (t mu)^l e^{rate t} / l!)`.
fn ln_poisson_tail(ln_n0: f64, t: f64, mu: f64, rate: f64, l: f64) -> f64 {
    ln_n0 + ln_power(t * mu, l) + rate * t - ln_factorial(l)
}

/// Upper bound `x^k e^x / k!` on `sum_{i >= k} x^i / i!`.
pub fn exp_tail_bound(x: f64, k: u64) -> f64 {
    (ln_power(x, k as f64) + x - ln_factorial(k as f64)).exp()
}

/// `P(M^C_t >= l) <= n0 (t mu)^l e^{Ct} / l!` for the Yule process with
/// constant branch rate `C` started from `n0` particles.
pub fn yule_tail_bound(n0: f64, t: f64, mu: f64, c: f64, l: u64) -> Bound {
    Bound::from_ln(ln_poisson_tail(n0.ln(), t, mu, c, l as f64))
}

/// `P(M^{k,up}_t > l) <= n0 (t mu)^l e^{(gamma (k + l) + 1) t} / l!` for the
/// process with type-linear branch rate started at type `k`.
pub fn zup_tail_bound(n0: f64, t: f64, mu: f64, gamma: f64, k: i64, l: u64) -> Bound {
    let rate = gamma * (k as f64 + l as f64) + 1.0;
    Bound::from_ln(ln_poisson_tail(n0.ln(), t, mu, rate, l as f64))
}

/// `P(S_t >= l) <= N (t mu)^l e^t / l!`, where `S_t` is the largest drop of
/// the minimum fitness below its initial value.
pub fn backspeed_bound(n: f64, t: f64, mu: f64, l: u64) -> Bound {
    Bound::from_ln(ln_poisson_tail(n.ln(), t, mu, 1.0, l as f64))
}

fn ln_upbound(ln_n: f64, t: f64, mu: f64, gamma: f64, w0: f64, l: f64) -> f64 {
    let rate = gamma * (w0 + 2.0 * l) + mu + 1.0;
    std::f64::consts::LN_2 + ln_n + ln_power(t * mu, l) + rate * t - ln_factorial(l - 1.0)
}

/// `P(sup_{s<=t} D_s > l) <= 2N (t mu)^l e^{(gamma (W0 + 2l) + mu + 1) t} / (l-1)!`
/// for the front displacement `D`. Undefined for `l = 0`.
pub fn upbound_bound(n: f64, t: f64, mu: f64, gamma: f64, w0: i64, l: u64) -> Result<Bound> {
    if l == 0 {
        return Err(Error::BoundUndefined("front bound needs l >= 1".into()));
    }
    Ok(Bound::from_ln(ln_upbound(
        n.ln(),
        t,
        mu,
        gamma,
        w0 as f64,
        l as f64,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct K1K2 {
    pub l: f64,
    pub k1: Bound,
    pub k2: Bound,
    /// `1 - K1 - K2` from the raw values.
    pub p: f64,
}

/// `K1` (front bound) and `K2` (back bound) at `l = floor(cal_w / 2)` and
/// `t = cal_t`, for a population given by `ln N`. Scale arguments are reals
/// so that astronomically large `N` can be evaluated.
pub fn k1k2_ln(ln_n: f64, mu: f64, gamma: f64, cal_w: f64, cal_t: f64, w0: f64) -> Result<K1K2> {
    if w0 > cal_w {
        return Err(Error::BoundUndefined(format!(
            "initial width {w0} exceeds the width scale {cal_w}"
        )));
    }
    let l = (cal_w / 2.0).floor();
    if l < 1.0 {
        return Err(Error::BoundUndefined(format!(
            "width scale {cal_w} too small: l = floor(W/2) must be >= 1"
        )));
    }
    let k1 = Bound::from_ln(ln_upbound(ln_n, cal_t, mu, gamma, w0, l));
    let k2 = Bound::from_ln(ln_poisson_tail(ln_n, cal_t, mu, 1.0, l));
    Ok(K1K2 {
        l,
        k1,
        k2,
        p: 1.0 - k1.raw - k2.raw,
    })
}

pub fn k1k2(params: &Params, scales: &Scales, w0: i64) -> Result<K1K2> {
    k1k2_ln(
        (params.n as f64).ln(),
        params.mu,
        params.gamma,
        scales.cal_w as f64,
        scales.cal_t,
        w0 as f64,
    )
}

/// Lower bound `1 - K1 - K2` on the probability that the width stays below
/// twice the width scale over one time scale.
pub fn widthspeed_lower(params: &Params, scales: &Scales, w0: i64) -> Result<f64> {
    Ok(k1k2(params, scales, w0)?.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::WChoice;
    use std::f64::consts::E;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn exp_tail_examples() {
        assert!(close(exp_tail_bound(1.0, 2), E / 2.0, 1e-14));
        assert!(E - 2.0 < exp_tail_bound(1.0, 2));
        assert_eq!(exp_tail_bound(0.0, 3), 0.0);
        assert!(close(exp_tail_bound(2.0, 0), E * E, 1e-14));
    }

    #[test]
    fn formula_examples() {
        assert!(close(
            yule_tail_bound(2.0, 1.0, 1.0, 1.0, 3).raw,
            2.0 * E / 6.0,
            1e-13
        ));
        let b = yule_tail_bound(3.0, 1.0, 1.0, 1.0, 0);
        assert!(b.raw >= 1.0 && b.clamped == 1.0);
        let z = zup_tail_bound(1.0, 0.5, 1.0, 1.0, 2, 4);
        assert!(close(z.raw, 0.0625 * 3.5f64.exp() / 24.0, 1e-13));
        assert!(zup_tail_bound(1.0, 0.5, 1.0, 1.0, 2, 0).clamped == 1.0);
        assert!(close(
            backspeed_bound(10.0, 1.0, 1.0, 5).raw,
            10.0 * E / 120.0,
            1e-13
        ));
        assert_eq!(upbound_bound(10.0, 0.0, 1.0, 1.0, 3, 2).unwrap().raw, 0.0);
        assert!(upbound_bound(10.0, 1.0, 1.0, 1.0, 3, 0).is_err());
    }

    #[test]
    fn k1k2_direct_evaluation() {
        let p = Params::new(10_000, 1.0, 0.5, 1.0).unwrap();
        let s = Scales::new(10_000, WChoice::default()).unwrap();
        let r = k1k2(&p, &s, s.cal_w).unwrap();
        let l = (s.cal_w / 2) as i32;
        let t = s.cal_t;
        let fact = |m: i32| (1..=m).map(f64::from).product::<f64>();
        let k1 = 2.0 * 1e4 * t.powi(l) * ((2.0 * l as f64 + s.cal_w as f64 + 2.0) * t).exp()
            / fact(l - 1);
        let k2 = 1e4 * t.powi(l) * t.exp() / fact(l);
        assert!(close(r.k1.raw, k1, 1e-10));
        assert!(close(r.k2.raw, k2, 1e-10));
        assert!(close(r.p, 1.0 - k1 - k2, 1e-10));
        assert!(k1k2(&p, &s, s.cal_w + 1).is_err());
    }

    #[test]
    fn p_tends_to_one_far_out() {
        // p -> 1 only once w(N) is large; with the default preset that
        // requires ln ln N in the hundreds
        let mut last = f64::NEG_INFINITY;
        for lln in [450.0f64, 550.0, 650.0, 700.0] {
            let ln_n = lln.exp();
            let w = WChoice::default();
            let s = Scales::from_ln_n(ln_n, w).unwrap();
            let cal_w = (s.w_value * ln_n / lln).floor();
            let r = k1k2_ln(ln_n, 1.0, 1.0, cal_w, s.cal_t, cal_w).unwrap();
            assert!(r.p >= last);
            last = r.p;
        }
        assert!(last > 0.999);
    }

    /// Direct product evaluation, only valid while nothing overflows.
    fn direct(n0: f64, t: f64, mu: f64, rate: f64, l: u64) -> f64 {
        let mut v = n0 * (rate * t).exp();
        for i in 1..=l {
            v *= t * mu / i as f64;
        }
        v
    }

    proptest::proptest! {
        #[test]
        fn log_space_matches_direct(
            n0 in 1.0f64..1e4, t in 0.01f64..5.0, mu in 0.01f64..3.0,
            c in 0.0f64..5.0, l in 0u64..60,
        ) {
            let want = direct(n0, t, mu, c, l);
            proptest::prop_assume!(want.is_finite() && want > 1e-290);
            proptest::prop_assert!(close(yule_tail_bound(n0, t, mu, c, l).raw, want, 1e-10));
        }

        #[test]
        fn bounds_monotone(
            n in 2.0f64..1e5, t in 0.01f64..3.0, mu in 0.01f64..3.0,
            gamma in 0.01f64..2.0, w0 in 0i64..10, l in 1u64..30,
        ) {
            let f = |n: f64, t: f64, mu: f64| upbound_bound(n, t, mu, gamma, w0, l).unwrap().raw;
            let g = |n: f64, t: f64, mu: f64| backspeed_bound(n, t, mu, l).raw;
            let hs: [&dyn Fn(f64, f64, f64) -> f64; 2] = [&f, &g];
            for h in hs {
                let base = h(n, t, mu);
                proptest::prop_assert!(h(n * 1.5, t, mu) >= base);
                proptest::prop_assert!(h(n, t * 1.5, mu) >= base);
                proptest::prop_assert!(h(n, t, mu * 1.5) >= base);
            }
            let y = |l: u64| yule_tail_bound(n, t, mu, 1.0, l).raw;
            if (l as f64) > t * mu * E {
                proptest::prop_assert!(y(l + 1) <= y(l));
            }
        }

        #[test]
        fn exp_tail_dominates_partial_sums(x in 0.0001f64..10.0, k in 0u64..31) {
            // the exact tail summed term by term from x^k / k!
            let mut term = 1.0f64;
            for i in 0..k {
                term *= x / (i + 1) as f64;
            }
            let mut tail = 0.0f64;
            let mut tk = term;
            let mut i = k;
            while tk > 1e-300 && i < k + 400 {
                tail += tk;
                i += 1;
                tk *= x / i as f64;
            }
            proptest::prop_assert!(tail <= exp_tail_bound(x, k) * (1.0 + 1e-12));
        }
    }
}
