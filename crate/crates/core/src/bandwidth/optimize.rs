//! Box-constrained Nelder–Mead for the two-dimensional bandwidth search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadResult {
    pub x: [f64; 2],
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

const MAX_ITER: usize = 4000;
const RESTARTS: usize = 3;

fn clamp(p: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])]
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Minimizes `f` over the box `[lo, hi]` from `x0`. Trial points are
/// projected onto the box. After convergence the simplex is rebuilt around
/// the best vertex and the search repeated until it stops improving.
pub fn nelder_mead_box(
    f: impl Fn([f64; 2]) -> f64,
    x0: [f64; 2],
    step: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    xtol: f64,
) -> NelderMeadResult {
    let eval = |p: [f64; 2]| {
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evaluations = 0usize;
    let mut best = clamp(x0, lo, hi);
    let mut best_f = eval(best);
    evaluations += 1;
    let mut converged = false;

    for _ in 0..=RESTARTS {
        let mut s: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
        s.push((best, best_f));
        for d in 0..2 {
            let mut p = best;
            p[d] += step[d];
            if p[d] > hi[d] {
                p[d] = best[d] - step[d];
            }
            let p = clamp(p, lo, hi);
            s.push((p, eval(p)));
            evaluations += 1;
        }

        let mut run_converged = false;
        for _ in 0..MAX_ITER {
            s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0[0].total_cmp(&b.0[0])).then(a.0[1].total_cmp(&b.0[1])));
            let diam = s[1..]
                .iter()
                .map(|(p, _)| (p[0] - s[0].0[0]).abs().max((p[1] - s[0].0[1]).abs()))
                .fold(0.0, f64::max);
            if diam < xtol {
                run_converged = true;
                break;
            }
            let centroid = lerp(s[0].0, s[1].0, 0.5);
            let worst = s[2];
            let r = clamp(lerp(centroid, worst.0, -1.0), lo, hi);
            let fr = eval(r);
            evaluations += 1;
            if fr < s[0].1 {
                let e = clamp(lerp(centroid, worst.0, -2.0), lo, hi);
                let fe = eval(e);
                evaluations += 1;
                s[2] = if fe < fr { (e, fe) } else { (r, fr) };
            } else if fr < s[1].1 {
                s[2] = (r, fr);
            } else {
                let (c, fc) = if fr < worst.1 {
                    let c = clamp(lerp(centroid, r, 0.5), lo, hi);
                    (c, eval(c))
                } else {
                    let c = clamp(lerp(centroid, worst.0, 0.5), lo, hi);
                    (c, eval(c))
                };
                evaluations += 1;
                if fc < worst.1.min(fr) {
                    s[2] = (c, fc);
                } else {
                    for i in 1..3 {
                        let p = lerp(s[0].0, s[i].0, 0.5);
                        s[i] = (p, eval(p));
                        evaluations += 1;
                    }
                }
            }
        }
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = s[0].1 < best_f;
        if s[0].1 <= best_f {
            best = s[0].0;
            best_f = s[0].1;
        }
        converged = run_converged;
        if !improved && run_converged {
            break;
        }
    }

    NelderMeadResult {
        x: best,
        fx: best_f,
        evaluations,
        converged,
    }
}
