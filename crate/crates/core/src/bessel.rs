//! Integer-order Bessel functions of the first kind.
//!
//! Values come from Miller's backward recurrence normalized with the
//! identity J₀ + 2ΣJ₂ₖ = 1, which is stable for every order and argument in
//! the supported range.

use crate::error::{Error, Result};

/// Largest supported |n|.
pub const MAX_ORDER: usize = 200;
/// Supported arguments satisfy |x| < MAX_ARG.
pub const MAX_ARG: f64 = 1e4;

const RESCALE_ABOVE: f64 = 1e250;

/// Jₙ(x) for a single order.
pub fn bessel_j(n: i64, x: f64) -> Result<f64> {
    check(n.unsigned_abs() as usize, x)?;
    let table = table(n.unsigned_abs() as usize, x.abs());
    Ok(table[n.unsigned_abs() as usize] * sign(n, x))
}

/// J₀(x), …, J_N(x).
pub fn bessel_j_orders(max_order: usize, x: f64) -> Result<Vec<f64>> {
    check(max_order, x)?;
    let mut t = table(max_order, x.abs());
    if x < 0.0 {
        for (k, v) in t.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    t.truncate(max_order + 1);
    Ok(t)
}

/// J_{−N}(x), …, J_N(x), indexed so that element `k` holds J_{k−N}(x).
pub fn bessel_j_symmetric(max_order: usize, x: f64) -> Result<Vec<f64>> {
    let pos = bessel_j_orders(max_order, x)?;
    let mut out = Vec::with_capacity(2 * max_order + 1);
    for k in (1..=max_order).rev() {
        out.push(if k % 2 == 0 { pos[k] } else { -pos[k] });
    }
    out.extend_from_slice(&pos);
    Ok(out)
}

/// As [`bessel_j_symmetric`] for orders beyond [`MAX_ORDER`], used when
/// sideband sums need a wider index window. Accuracy degrades gracefully.
pub(crate) fn symmetric_table(max_order: usize, x: f64) -> Result<Vec<f64>> {
    check(0, x)?;
    let mut pos = table(max_order, x.abs());
    if x < 0.0 {
        for (k, v) in pos.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    pos.truncate(max_order + 1);
    let mut out = Vec::with_capacity(2 * max_order + 1);
    for k in (1..=max_order).rev() {
        out.push(if k % 2 == 0 { pos[k] } else { -pos[k] });
    }
    out.extend_from_slice(&pos);
    Ok(out)
}

fn check(order: usize, x: f64) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::domain(format!("Bessel order {order} exceeds {MAX_ORDER}")));
    }
    if !x.is_finite() || x.abs() >= MAX_ARG {
        return Err(Error::domain(format!("Bessel argument {x} outside |x| < {MAX_ARG}")));
    }
    Ok(())
}

/// (−1)ⁿ factors from J₋ₙ = (−1)ⁿJₙ and Jₙ(−x) = (−1)ⁿJₙ(x).
fn sign(n: i64, x: f64) -> f64 {
    let flips = (n < 0 && n % 2 != 0) as u8 + (x < 0.0 && n % 2 != 0) as u8;
    if flips == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Jₖ(x) for k = 0..=max(order, start) with x ≥ 0. The vector may be longer
/// than `order + 1`.
fn table(order: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut t = vec![0.0; order + 1];
        t[0] = 1.0;
        return t;
    }
    let k = order.max(x.ceil() as usize);
    let mut start = k + (160.0 * k as f64).sqrt().ceil() as usize + 30;
    start += start % 2;

    let mut j = vec![0.0f64; start + 2];
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for m in (1..=start).rev() {
        let prev = 2.0 * m as f64 / x * cur - next;
        next = cur;
        cur = prev;
        j[m] = next;
        if (m - 1) % 2 == 0 && m - 1 > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > RESCALE_ABOVE {
            cur /= RESCALE_ABOVE;
            next /= RESCALE_ABOVE;
            norm /= RESCALE_ABOVE;
            for v in &mut j[m..] {
                *v /= RESCALE_ABOVE;
            }
        }
    }
    j[0] = cur;
    norm += cur;
    for v in &mut j {
        *v /= norm;
    }
    j.truncate(order.max(1) + 1);
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: Jₙ(x) = (1/2π)∫₀^{2π} cos(nτ − x sin τ) dτ, with the
    /// periodic trapezoid rule (exponentially convergent).
    fn quadrature(n: i64, x: f64) -> f64 {
        let m = 4 * ((x.abs() + n.unsigned_abs() as f64) as usize + 64);
        let h = 2.0 * std::f64::consts::PI / m as f64;
        (0..m)
            .map(|k| {
                let t = k as f64 * h;
                (n as f64 * t - x * t.sin()).cos()
            })
            .sum::<f64>()
            / m as f64
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        for n in 1..10 {
            assert_eq!(bessel_j(n, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn first_zero() {
        assert!(bessel_j(0, 2.404826).unwrap().abs() < 1e-6);
    }

    #[test]
    fn sum_rule() {
        let s: f64 = bessel_j_symmetric(60, 1.7).unwrap().iter().map(|v| v * v).sum();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn reference_values() {
        // scipy.special.jv
        let cases = [
            (0, 1.0, 0.7651976865579666),
            (1, 1.0, 0.44005058574493355),
            (5, 3.0, 0.04302843487704758),
            (2, 10.0, 0.2546303136851206),
            (30, 10.0, 1.5510960782574745e-12),
            (3, 250.0, 0.04368035394821751),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "J{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn matches_quadrature_across_range() {
        for &x in &[0.3, 3.0, 10.0, 47.5, 180.0, 2500.0] {
            for n in [0i64, 1, 2, 7, 19, 60, 150, 200] {
                let got = bessel_j(n, x).unwrap();
                let want = quadrature(n, x);
                // Summation noise of the quadrature sets the absolute floor.
                let tol = 1e-12 * want.abs() + 1e-14;
                assert!((got - want).abs() < tol, "J{n}({x}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn symmetry_relations() {
        for n in 0..12i64 {
            let a = bessel_j(n, 2.5).unwrap();
            let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(bessel_j(-n, 2.5).unwrap(), sgn * a);
            assert_eq!(bessel_j(n, -2.5).unwrap(), sgn * a);
        }
        let sym = bessel_j_symmetric(5, 1.3).unwrap();
        for (k, v) in sym.iter().enumerate() {
            assert!((*v - bessel_j(k as i64 - 5, 1.3).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(bessel_j(201, 1.0), Err(Error::Domain(_))));
        assert!(bessel_j(1, 1e4).is_err());
        assert!(bessel_j(1, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn three_term_recurrence(n in 1i64..150, x in 0.5f64..500.0) {
            let (a, b, c) = (bessel_j(n - 1, x).unwrap(), bessel_j(n, x).unwrap(), bessel_j(n + 1, x).unwrap());
            let lhs = a + c;
            let rhs = 2.0 * n as f64 / x * b;
            let scale = a.abs().max(b.abs()).max(c.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-11 * scale.max(1e-200) * (1.0 + 2.0 * n as f64 / x));
        }

        #[test]
        fn sum_rule_holds(x in 0.0f64..150.0) {
            let s: f64 = bessel_j_symmetric(200, x).unwrap().iter().map(|v| v * v).sum();
            prop_assert!((s - 1.0).abs() < 1e-11);
        }
    }
}
