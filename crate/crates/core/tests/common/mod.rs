//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use tsg::game::{Flight, GameInstance, Resource, RiskLevel, Team, Utilities};

/// One flight, one risk level, one method and a single team made of
/// `team_resources`; thresholds are vacuous.
pub fn single_team_instance(rates: &[f64], team_resources: &[usize]) -> GameInstance {
    GameInstance {
        num_methods: 1,
        risk_levels: vec![RiskLevel { prior: 1.0 }],
        flights: vec![Flight { departure_min: 600.0 }],
        resources: rates.iter().map(|&rate| Resource { rate }).collect(),
        teams: vec![Team { resources: team_resources.to_vec(), efficacy: vec![0.9] }],
        utilities: Utilities { plus: vec![vec![0.0]], minus: vec![vec![-5.0]] },
        risk_thresholds: vec![5.0],
    }
}

/// Average wait when every passenger joins the same team: each passenger
/// waits for the longest backlog among the team's resources, then adds one
/// unit to each of them; backlogs drain at their rates between arrivals.
pub fn fluid_queue_oracle(times: &[f64], rates: &[f64], team: &[usize]) -> f64 {
    if times.is_empty() {
        return 0.0;
    }
    let mut backlog = vec![0.0f64; rates.len()];
    let mut total = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let elapsed = t - times[i - 1];
            for r in 0..rates.len() {
                let left = backlog[r] - elapsed * rates[r];
                backlog[r] = if left > 0.0 { left } else { 0.0 };
            }
        }
        let mut wait = 0.0f64;
        for &r in team {
            wait = wait.max(backlog[r] / rates[r]);
        }
        total += -wait;
        for &r in team {
            backlog[r] += 1.0;
        }
    }
    -(total / times.len() as f64)
}

/// A line `a·p = b` in the plane.
#[derive(Debug, Clone, Copy)]
struct Line {
    a: [f64; 2],
    b: f64,
}

/// Maximin value of a game with two categories and two teams, found by
/// enumerating the vertices of the arrangement formed by the box, the
/// capacity rows and the breakpoints of each category's worst case.
///
/// `p_c` is the mass category `c` puts on team 0. The objective is concave
/// and piecewise linear, so its maximum over the feasible polygon sits on
/// one of those vertices.
pub fn two_by_two_maximin(inst: &GameInstance, counts: &[f64; 2], window: f64) -> Option<f64> {
    assert_eq!(inst.num_teams(), 2);
    assert_eq!(inst.num_categories(), 2);
    let value_of = |c: usize, p: f64| -> f64 {
        let kappa = inst.category(c).kappa;
        (0..inst.num_methods)
            .map(|m| {
                let z = p * inst.teams[0].efficacy[m] + (1.0 - p) * inst.teams[1].efficacy[m];
                z * inst.utilities.plus[kappa][m] + (1.0 - z) * inst.utilities.minus[kappa][m]
            })
            .fold(f64::INFINITY, f64::min)
    };
    let objective = |p: [f64; 2]| -> f64 {
        let mut per_level = vec![f64::INFINITY; inst.num_risk_levels()];
        for (c, &pc) in p.iter().enumerate() {
            let theta = inst.category(c).theta;
            per_level[theta] = per_level[theta].min(value_of(c, pc));
        }
        per_level.iter().zip(&inst.risk_levels).filter(|(u, _)| u.is_finite()).map(|(u, l)| l.prior * u).sum()
    };

    let mut lines = vec![
        Line { a: [1.0, 0.0], b: 0.0 },
        Line { a: [1.0, 0.0], b: 1.0 },
        Line { a: [0.0, 1.0], b: 0.0 },
        Line { a: [0.0, 1.0], b: 1.0 },
    ];
    // Load on resource r: Σ_c N_c (p_c·[r ∈ t0] + (1 − p_c)·[r ∈ t1]) <= f_r W.
    let mut capacity = Vec::new();
    if window.is_finite() {
        for (r, res) in inst.resources.iter().enumerate() {
            let in0 = inst.teams[0].resources.contains(&r) as u8 as f64;
            let in1 = inst.teams[1].resources.contains(&r) as u8 as f64;
            let a = [counts[0] * (in0 - in1), counts[1] * (in0 - in1)];
            let b = res.rate * window - (counts[0] + counts[1]) * in1;
            capacity.push(Line { a, b });
            lines.push(Line { a, b });
        }
    }
    // Per category, every p where two methods' utilities cross.
    for c in 0..2 {
        let kappa = inst.category(c).kappa;
        let affine = |m: usize| {
            let (e0, e1) = (inst.teams[0].efficacy[m], inst.teams[1].efficacy[m]);
            let (up, um) = (inst.utilities.plus[kappa][m], inst.utilities.minus[kappa][m]);
            // u(p) = slope·p + offset
            let at = |z: f64| z * up + (1.0 - z) * um;
            (at(e0) - at(e1), at(e1))
        };
        for m in 0..inst.num_methods {
            for k in m + 1..inst.num_methods {
                let ((s1, o1), (s2, o2)) = (affine(m), affine(k));
                if (s1 - s2).abs() > 1e-14 {
                    let p = (o2 - o1) / (s1 - s2);
                    let mut a = [0.0; 2];
                    a[c] = 1.0;
                    lines.push(Line { a, b: p });
                }
            }
        }
    }

    let feasible = |p: [f64; 2]| {
        p.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v))
            && capacity.iter().all(|l| l.a[0] * p[0] + l.a[1] * p[1] <= l.b + 1e-9 * (1.0 + l.b.abs()))
    };
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (l1, l2) = (lines[i], lines[j]);
            let det = l1.a[0] * l2.a[1] - l1.a[1] * l2.a[0];
            if det.abs() < 1e-14 {
                continue;
            }
            let p = [(l1.b * l2.a[1] - l1.a[1] * l2.b) / det, (l1.a[0] * l2.b - l1.b * l2.a[0]) / det];
            if feasible(p) {
                let p = [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)];
                let v = objective(p);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    best
}

/// Simplex-restricted Chebyshev radius by grid search over `Σ y = 1, y >= 0`
/// in two or three dimensions. Distances are measured within the simplex's
/// hyperplane.
pub fn chebyshev_radius_grid(rows: &[Vec<f64>], bounds: &[f64], n: usize, step: f64) -> (f64, Vec<f64>) {
    assert!(n == 2 || n == 3);
    let norms: Vec<f64> = rows
        .iter()
        .map(|a| {
            let mean = a.iter().sum::<f64>() / n as f64;
            a.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let depth = |y: &[f64]| -> f64 {
        rows.iter()
            .zip(bounds)
            .zip(&norms)
            .map(|((a, b), norm)| {
                let slack = b - a.iter().zip(y).map(|(x, v)| x * v).sum::<f64>();
                if *norm < 1e-14 {
                    if slack >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }
                } else {
                    slack / norm
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let search = |lo: [f64; 2], hi: [f64; 2], h: f64| -> (f64, Vec<f64>) {
        let mut best = (f64::NEG_INFINITY, vec![]);
        let steps0 = ((hi[0] - lo[0]) / h).round() as usize;
        let steps1 = if n == 3 { ((hi[1] - lo[1]) / h).round() as usize } else { 0 };
        for i in 0..=steps0 {
            let x = (lo[0] + i as f64 * h).clamp(0.0, 1.0);
            for j in 0..=steps1 {
                let y = if n == 3 { (lo[1] + j as f64 * h).clamp(0.0, 1.0) } else { 0.0 };
                if x + y > 1.0 {
                    continue;
                }
                let point = if n == 2 { vec![x, 1.0 - x] } else { vec![x, y, 1.0 - x - y] };
                let d = depth(&point);
                if d > best.0 {
                    best = (d, point);
                }
            }
        }
        best
    };
    let coarse = search([0.0, 0.0], [1.0, 1.0], step);
    let c = &coarse.1;
    let fine = step / 100.0;
    let (y0, y1) = (c[0], if n == 3 { c[1] } else { 0.0 });
    let refined = search([(y0 - 2.0 * step).max(0.0), (y1 - 2.0 * step).max(0.0)], [(y0 + 2.0 * step).min(1.0), (y1 + 2.0 * step).min(1.0)], fine);
    if refined.0 > coarse.0 { refined } else { coarse }
}
