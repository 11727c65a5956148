//! Student-t CDF by numerical integration of the density.
//!
//! With t = √ν·tan θ the density becomes cos^(ν−1) θ / B(½, ν/2), so
//! P(T > x) = ∫_a^{π/2} cos^(ν−1) θ dθ / (2 ∫_0^{π/2} cos^(ν−1) θ dθ) with
//! a = atan(x/√ν). Both integrals are taken in φ = π/2 − θ = s², which turns
//! the endpoint behaviour ~φ^(ν−1) into the smooth 2s^(2ν−1).

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
}

impl Panel {
    fn simpson(&self) -> f64 {
        (self.b - self.a) / 6.0 * (self.fa + 4.0 * self.fm + self.fb)
    }
}

fn adaptive(f: &dyn Fn(f64) -> f64, p: Panel, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (p.a + p.b);
    let left = Panel {
        a: p.a,
        b: m,
        fa: p.fa,
        fm: f(0.5 * (p.a + m)),
        fb: p.fm,
    };
    let right = Panel {
        a: m,
        b: p.b,
        fa: p.fm,
        fm: f(0.5 * (m + p.b)),
        fb: p.fb,
    };
    let (l, r) = (left.simpson(), right.simpson());
    let delta = l + r - p.simpson();
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return l + r + delta / 15.0;
    }
    adaptive(f, left, tol / 2.0, depth - 1) + adaptive(f, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson on [a, b].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let p = Panel {
        a,
        b,
        fa: f(a),
        fm: f(0.5 * (a + b)),
        fb: f(b),
    };
    adaptive(f, p, 1e-15, 50)
}

/// ∫_0^{π/2 − a} sin^(ν−1) φ dφ, i.e. the θ-integral from `a` to π/2.
fn tail_integral(a: f64, dof: f64) -> f64 {
    let f = |s: f64| 2.0 * s * (s * s).sin().powf(dof - 1.0);
    integrate(&f, 0.0, (std::f64::consts::FRAC_PI_2 - a).max(0.0).sqrt())
}

/// P(T ≤ x) for ν = `dof` ≥ 1.
pub fn t_cdf(x: f64, dof: f64) -> f64 {
    let total = tail_integral(0.0, dof);
    let upper = tail_integral((x.abs() / dof.sqrt()).atan(), dof) / (2.0 * total);
    if x >= 0.0 {
        1.0 - upper
    } else {
        upper
    }
}

/// (t, dof, one-tailed p for mean(b) > mean(a)).
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let ((na, ma, va), (nb, mb, vb)) = (stats(a), stats(b));
    let (qa, qb) = (va / na, vb / nb);
    let t = (mb - ma) / (qa + qb).sqrt();
    let dof = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    (t, dof, 1.0 - t_cdf(t, dof))
}
