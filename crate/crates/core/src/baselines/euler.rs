//! One-dimensional Euler equations: state conversions, Roe's approximate
//! Riemann flux and the exact Riemann solution.

use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};

pub const GAMMA: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerPrimitive {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

impl EulerPrimitive {
    pub const fn new(rho: f64, u: f64, p: f64) -> Self {
        Self { rho, u, p }
    }

    pub fn sound_speed(&self) -> f64 {
        (GAMMA * self.p / self.rho).sqrt()
    }

    pub fn is_physical(&self) -> bool {
        self.rho > 0.0 && self.p > 0.0 && self.u.is_finite()
    }
}

pub const SOD_LEFT: EulerPrimitive = EulerPrimitive::new(1.0, 0.0, 1.0);
pub const SOD_RIGHT: EulerPrimitive = EulerPrimitive::new(0.125, 0.0, 0.1);

pub fn conserved(p: &EulerPrimitive) -> [f64; 3] {
    [p.rho, p.rho * p.u, p.p / (GAMMA - 1.0) + 0.5 * p.rho * p.u * p.u]
}

pub fn primitive(q: &[f64; 3]) -> EulerPrimitive {
    let u = q[1] / q[0];
    EulerPrimitive { rho: q[0], u, p: (GAMMA - 1.0) * (q[2] - 0.5 * q[0] * u * u) }
}

/// Physical flux `[rho u, rho u^2 + p, u (rho E + p)]` of a conserved state.
pub fn flux(q: &[f64; 3]) -> [f64; 3] {
    let u = q[1] / q[0];
    let p = (GAMMA - 1.0) * (q[2] - 0.5 * q[1] * u);
    [q[1], q[1] * u + p, u * (q[2] + p)]
}

/// Roe upwind term `sum_k |lambda_k| alpha_k r_k` with Harten's entropy fix,
/// `delta = 0.1 (|u~| + a~)`.
pub fn roe_dissipation(ql: &[f64; 3], qr: &[f64; 3]) -> Result<[f64; 3]> {
    let (rl, rr) = (ql[0], qr[0]);
    if !(rl > 0.0 && rr > 0.0) {
        return Err(KbrError::NonPhysicalState(format!("density {rl} | {rr}")));
    }
    let (ul, ur) = (ql[1] / rl, qr[1] / rr);
    let pl = (GAMMA - 1.0) * (ql[2] - 0.5 * ql[1] * ul);
    let pr = (GAMMA - 1.0) * (qr[2] - 0.5 * qr[1] * ur);
    let (hl, hr) = ((ql[2] + pl) / rl, (qr[2] + pr) / rr);
    let (sl, sr) = (rl.sqrt(), rr.sqrt());
    let u = (sl * ul + sr * ur) / (sl + sr);
    let h = (sl * hl + sr * hr) / (sl + sr);
    let a2 = (GAMMA - 1.0) * (h - 0.5 * u * u);
    if !(a2 > 0.0) || !a2.is_finite() {
        return Err(KbrError::NonPhysicalState(format!("Roe-averaged sound speed squared {a2}")));
    }
    let a = a2.sqrt();
    let dr = qr[0] - ql[0];
    let dm = qr[1] - ql[1];
    let de = qr[2] - ql[2];
    let alpha2 = (GAMMA - 1.0) / a2 * (dr * (h - u * u) + u * dm - de);
    let alpha1 = (dr * (u + a) - dm - a * alpha2) / (2.0 * a);
    let alpha3 = dr - (alpha1 + alpha2);
    let delta = 0.1 * (u.abs() + a);
    let fix = |l: f64| {
        let l = l.abs();
        if l < delta {
            (l * l + delta * delta) / (2.0 * delta)
        } else {
            l
        }
    };
    let (l1, l2, l3) = (fix(u - a), fix(u), fix(u + a));
    let r1 = [1.0, u - a, h - u * a];
    let r2 = [1.0, u, 0.5 * u * u];
    let r3 = [1.0, u + a, h + u * a];
    let mut d = [0.0; 3];
    for k in 0..3 {
        d[k] = l1 * alpha1 * r1[k] + l2 * alpha2 * r2[k] + l3 * alpha3 * r3[k];
    }
    Ok(d)
}

/// `F = (F(q_L) + F(q_R)) / 2 - D / 2` on conserved states.
pub fn roe_flux_conserved(ql: &[f64; 3], qr: &[f64; 3]) -> Result<[f64; 3]> {
    let d = roe_dissipation(ql, qr)?;
    let (fl, fr) = (flux(ql), flux(qr));
    Ok([
        0.5 * (fl[0] + fr[0]) - 0.5 * d[0],
        0.5 * (fl[1] + fr[1]) - 0.5 * d[1],
        0.5 * (fl[2] + fr[2]) - 0.5 * d[2],
    ])
}

pub fn roe_flux(left: &EulerPrimitive, right: &EulerPrimitive) -> Result<[f64; 3]> {
    if !left.is_physical() || !right.is_physical() {
        return Err(KbrError::NonPhysicalState(format!("{left:?} | {right:?}")));
    }
    roe_flux_conserved(&conserved(left), &conserved(right))
}

/// `f_K(p)` and its derivative for one side of the Riemann problem.
fn side(p: f64, s: &EulerPrimitive) -> (f64, f64) {
    let a = s.sound_speed();
    if p > s.p {
        let ak = 2.0 / ((GAMMA + 1.0) * s.rho);
        let bk = (GAMMA - 1.0) / (GAMMA + 1.0) * s.p;
        let q = (ak / (p + bk)).sqrt();
        ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (bk + p)))
    } else {
        let e = (GAMMA - 1.0) / (2.0 * GAMMA);
        let f = 2.0 * a / (GAMMA - 1.0) * ((p / s.p).powf(e) - 1.0);
        let df = (p / s.p).powf(-(GAMMA + 1.0) / (2.0 * GAMMA)) / (s.rho * a);
        (f, df)
    }
}

/// Star-region pressure and velocity by Newton iteration on the pressure
/// function.
pub fn star_state(l: &EulerPrimitive, r: &EulerPrimitive) -> Result<(f64, f64)> {
    if !l.is_physical() || !r.is_physical() {
        return Err(KbrError::NonPhysicalState(format!("{l:?} | {r:?}")));
    }
    let (al, ar) = (l.sound_speed(), r.sound_speed());
    let du = r.u - l.u;
    if 2.0 * (al + ar) / (GAMMA - 1.0) <= du {
        return Err(KbrError::SolverFailed("initial states generate vacuum".into()));
    }
    let pvrs = 0.5 * (l.p + r.p) - 0.125 * du * (l.rho + r.rho) * (al + ar);
    let mut p = pvrs.max(1e-8);
    for _ in 0..100 {
        let (fl, dl) = side(p, l);
        let (fr, dr) = side(p, r);
        let f = fl + fr + du;
        let step = f / (dl + dr);
        let next = (p - step).max(1e-12);
        let change = 2.0 * (next - p).abs() / (next + p);
        p = next;
        if change < 1e-15 || f == 0.0 {
            let (fl, _) = side(p, l);
            let (fr, _) = side(p, r);
            return Ok((p, 0.5 * (l.u + r.u) + 0.5 * (fr - fl)));
        }
    }
    Err(KbrError::SolverFailed("pressure iteration did not converge".into()))
}

/// Exact solution of the Riemann problem sampled at similarity speed
/// `s = (x - x0) / t`.
pub fn riemann_sample(l: &EulerPrimitive, r: &EulerPrimitive, pstar: f64, ustar: f64, s: f64) -> EulerPrimitive {
    let g = GAMMA;
    let (al, ar) = (l.sound_speed(), r.sound_speed());
    if s <= ustar {
        if pstar > l.p {
            let sl = l.u - al * ((g + 1.0) / (2.0 * g) * pstar / l.p + (g - 1.0) / (2.0 * g)).sqrt();
            if s <= sl {
                *l
            } else {
                let ratio = pstar / l.p;
                let gg = (g - 1.0) / (g + 1.0);
                EulerPrimitive::new(l.rho * (ratio + gg) / (gg * ratio + 1.0), ustar, pstar)
            }
        } else {
            let shl = l.u - al;
            let astar = al * (pstar / l.p).powf((g - 1.0) / (2.0 * g));
            let stl = ustar - astar;
            if s <= shl {
                *l
            } else if s >= stl {
                EulerPrimitive::new(l.rho * (pstar / l.p).powf(1.0 / g), ustar, pstar)
            } else {
                let c = 2.0 / (g + 1.0) + (g - 1.0) / ((g + 1.0) * al) * (l.u - s);
                EulerPrimitive::new(
                    l.rho * c.powf(2.0 / (g - 1.0)),
                    2.0 / (g + 1.0) * (al + (g - 1.0) / 2.0 * l.u + s),
                    l.p * c.powf(2.0 * g / (g - 1.0)),
                )
            }
        }
    } else if pstar > r.p {
        let sr = r.u + ar * ((g + 1.0) / (2.0 * g) * pstar / r.p + (g - 1.0) / (2.0 * g)).sqrt();
        if s >= sr {
            *r
        } else {
            let ratio = pstar / r.p;
            let gg = (g - 1.0) / (g + 1.0);
            EulerPrimitive::new(r.rho * (ratio + gg) / (gg * ratio + 1.0), ustar, pstar)
        }
    } else {
        let shr = r.u + ar;
        let astar = ar * (pstar / r.p).powf((g - 1.0) / (2.0 * g));
        let str_ = ustar + astar;
        if s >= shr {
            *r
        } else if s <= str_ {
            EulerPrimitive::new(r.rho * (pstar / r.p).powf(1.0 / g), ustar, pstar)
        } else {
            let c = 2.0 / (g + 1.0) - (g - 1.0) / ((g + 1.0) * ar) * (r.u - s);
            EulerPrimitive::new(
                r.rho * c.powf(2.0 / (g - 1.0)),
                2.0 / (g + 1.0) * (-ar + (g - 1.0) / 2.0 * r.u + s),
                r.p * c.powf(2.0 * g / (g - 1.0)),
            )
        }
    }
}

/// Exact solution at time `t` for a diaphragm at `x = 0.5`.
pub fn sod_exact(xs: &[f64], t: f64, left: &EulerPrimitive, right: &EulerPrimitive) -> Result<Vec<EulerPrimitive>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(KbrError::InvalidInput(format!("sampling time must be positive, got {t}")));
    }
    let (ps, us) = star_state(left, right)?;
    Ok(xs.iter().map(|x| riemann_sample(left, right, ps, us, (x - 0.5) / t)).collect())
}

/// Shock speed of the right-moving shock when one exists.
pub fn right_shock_speed(l: &EulerPrimitive, r: &EulerPrimitive) -> Result<Option<f64>> {
    let (ps, _) = star_state(l, r)?;
    Ok((ps > r.p).then(|| {
        let g = GAMMA;
        r.u + r.sound_speed() * ((g + 1.0) / (2.0 * g) * ps / r.p + (g - 1.0) / (2.0 * g)).sqrt()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_round_trip() {
        let p = EulerPrimitive::new(0.7, -0.3, 2.1);
        let q = primitive(&conserved(&p));
        assert!((q.rho - p.rho).abs() < 1e-15 && (q.u - p.u).abs() < 1e-15 && (q.p - p.p).abs() < 1e-14);
    }

    #[test]
    fn roe_consistency_is_exact() {
        for p in [SOD_LEFT, SOD_RIGHT, EulerPrimitive::new(0.4, 1.3, 0.2)] {
            let q = conserved(&p);
            assert_eq!(roe_flux(&p, &p).unwrap(), flux(&q));
        }
    }

    #[test]
    fn roe_supersonic_upwinds() {
        let l = EulerPrimitive::new(1.0, 4.0, 1.0);
        let r = EulerPrimitive::new(0.8, 3.8, 0.9);
        let f = roe_flux(&l, &r).unwrap();
        let fl = flux(&conserved(&l));
        for k in 0..3 {
            assert!((f[k] - fl[k]).abs() < 1e-12 * fl[k].abs().max(1.0));
        }
    }

    fn bisect_star(l: &EulerPrimitive, r: &EulerPrimitive) -> f64 {
        let f = |p: f64| side(p, l).0 + side(p, r).0 + (r.u - l.u);
        let (mut a, mut b) = (1e-10, 10.0);
        for _ in 0..300 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn sod_star_state_matches_bisection() {
        let (p, u) = star_state(&SOD_LEFT, &SOD_RIGHT).unwrap();
        let pb = bisect_star(&SOD_LEFT, &SOD_RIGHT);
        assert!((p - pb).abs() < 1e-10, "{p} {pb}");
        assert!((p - 0.30313).abs() < 1e-5);
        assert!((u - 0.92745).abs() < 1e-5);
    }

    #[test]
    fn identical_states_are_constant() {
        let s = EulerPrimitive::new(0.5, 0.2, 0.7);
        let xs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        for v in sod_exact(&xs, 0.1, &s, &s).unwrap() {
            assert!((v.rho - s.rho).abs() < 1e-14 && (v.u - s.u).abs() < 1e-14 && (v.p - s.p).abs() < 1e-14);
        }
    }

    #[test]
    fn far_left_unchanged() {
        let v = sod_exact(&[0.1], 0.01, &SOD_LEFT, &SOD_RIGHT).unwrap();
        assert_eq!(v[0], SOD_LEFT);
    }

    #[test]
    fn shock_satisfies_rankine_hugoniot() {
        let s = right_shock_speed(&SOD_LEFT, &SOD_RIGHT).unwrap().unwrap();
        let t = 0.2;
        let xs = 0.5 + s * t;
        let v = sod_exact(&[xs - 1e-9, xs + 1e-9], t, &SOD_LEFT, &SOD_RIGHT).unwrap();
        let (qa, qb) = (conserved(&v[0]), conserved(&v[1]));
        let (fa, fb) = (flux(&qa), flux(&qb));
        for k in 0..3 {
            assert!(((fa[k] - fb[k]) - s * (qa[k] - qb[k])).abs() < 1e-8);
        }
    }
}
