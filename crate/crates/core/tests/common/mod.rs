//! Naive reference implementations used by the integration and acceptance
//! tests. Everything here works on unsorted rows with explicit loops and
//! shares no code with the library beyond data access and propensity
//! prediction.

#![allow(dead_code, clippy::needless_range_loop)]

use kmte::{build_power_basis, Dataset, LogitFit, Observation, ProcessKind};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random censored sample; `ties` draws durations from a small lattice.
/// Redraws until both arms (and all four cells when `with_z`) are nonempty.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, k: usize, ties: bool, with_z: bool) -> Dataset {
    loop {
        let obs: Vec<Observation> = (0..n)
            .map(|_| {
                let q = if ties {
                    f64::from(r.random_range(0..6u32)) * 0.5
                } else {
                    r.random::<f64>() * 3.0
                };
                let treated = r.random::<bool>();
                Observation {
                    q,
                    delta: r.random::<f64>() < 0.65,
                    treated,
                    x: (0..k).map(|_| r.random::<f64>()).collect(),
                    z: with_z.then(|| {
                        if r.random::<f64>() < 0.7 {
                            treated
                        } else {
                            !treated
                        }
                    }),
                }
            })
            .collect();
        let cell = |t: bool, z: bool| {
            obs.iter()
                .filter(|o| o.treated == t && (!with_z || o.z == Some(z)))
                .count()
        };
        let ok = if with_z {
            [(false, false), (false, true), (true, false), (true, true)]
                .iter()
                .all(|&(t, z)| cell(t, z) > 0)
        } else {
            cell(true, true) > 0 && cell(false, true) > 0
        };
        if ok {
            return Dataset::new(obs).unwrap();
        }
    }
}

/// Degree-one logit with random coefficients on unscaled covariates.
pub fn random_fit(r: &mut ChaCha8Rng, k: usize) -> LogitFit {
    let basis = build_power_basis(k, 1);
    let coef = (0..basis.len())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    LogitFit::from_parts(basis, vec![(0.0, 1.0); k], coef, 1e-3).unwrap()
}

pub fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Product-limit jumps by distinct event time: `S(t-) d(t) / r(t)` split
/// equally over the `d(t)` events at `t`. Returned per input row.
pub fn km_jumps(q: &[f64], delta: &[bool]) -> Vec<f64> {
    let mut times: Vec<f64> = q
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d)
        .map(|(&t, _)| t)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut out = vec![0.0; q.len()];
    let mut surv = 1.0;
    for t in times {
        let at_risk = q.iter().filter(|&&v| v >= t).count() as f64;
        let events: Vec<usize> = (0..q.len()).filter(|&i| delta[i] && q[i] == t).collect();
        let d = events.len() as f64;
        for &i in &events {
            out[i] = surv / at_risk;
        }
        surv *= 1.0 - d / at_risk;
    }
    out
}

/// Redistribution to the right on an already sorted event sequence: every
/// position starts with `1/m`; a censored position hands its mass equally
/// to all later positions, and a censored last position loses it.
pub fn redistribute_to_right(delta_sorted: &[bool]) -> Vec<Ratio<i128>> {
    let m = delta_sorted.len();
    let mut mass = vec![Ratio::new(1, m as i128); m];
    for i in 0..m {
        if !delta_sorted[i] {
            let later = (m - i - 1) as i128;
            if later > 0 {
                let share = mass[i] / Ratio::from_integer(later);
                for v in mass.iter_mut().skip(i + 1) {
                    *v += share;
                }
            }
            mass[i] = Ratio::from_integer(0);
        }
    }
    mass
}

/// One signed cell of a process.
#[derive(Debug, Clone)]
pub struct Cell {
    pub rows: Vec<usize>,
    pub sign: f64,
    pub label_one: bool,
    pub offset: f64,
}

pub fn labels(data: &Dataset, kind: ProcessKind) -> Vec<bool> {
    data.observations()
        .iter()
        .map(|o| {
            if kind == ProcessKind::Ldte {
                o.z.unwrap()
            } else {
                o.treated
            }
        })
        .collect()
}

fn rows_where(data: &Dataset, f: impl Fn(&Observation) -> bool) -> Vec<usize> {
    (0..data.len()).filter(|&i| f(data.get(i))).collect()
}

/// Cells of a process, with the homogeneity offsets filled in.
pub fn cells(data: &Dataset, fit: &LogitFit, kind: ProcessKind, tau_bar: f64) -> Vec<Cell> {
    let cell = |rows, sign, label_one| Cell {
        rows,
        sign,
        label_one,
        offset: 0.0,
    };
    match kind {
        ProcessKind::Ldte => vec![
            cell(
                rows_where(data, |o| o.treated && o.z == Some(true)),
                1.0,
                true,
            ),
            cell(
                rows_where(data, |o| o.treated && o.z == Some(false)),
                -1.0,
                false,
            ),
            cell(
                rows_where(data, |o| !o.treated && o.z == Some(false)),
                -1.0,
                false,
            ),
            cell(
                rows_where(data, |o| !o.treated && o.z == Some(true)),
                1.0,
                true,
            ),
        ],
        _ => {
            let mut c = vec![
                cell(rows_where(data, |o| o.treated), 1.0, true),
                cell(rows_where(data, |o| !o.treated), -1.0, false),
            ];
            if kind == ProcessKind::Hom {
                let ate = ate(data, fit, tau_bar);
                c[0].offset = -ate;
                c[1].offset = ate;
            }
            c
        }
    }
}

pub fn integrand(kind: ProcessKind, q: f64, y: f64, tau_bar: f64) -> f64 {
    match kind {
        ProcessKind::Dte | ProcessKind::Ldte => f64::from(u8::from(q <= y)),
        ProcessKind::Cate | ProcessKind::Hom => {
            if q <= tau_bar {
                q
            } else {
                0.0
            }
        }
    }
}

fn pi(fit: &LogitFit, x: &[f64], label_one: bool) -> f64 {
    let p = fit.predict_probability(x).unwrap();
    if label_one {
        p
    } else {
        1.0 - p
    }
}

/// KM weights of a cell's rows, aligned with `cell.rows`.
pub fn cell_weights(data: &Dataset, rows: &[usize]) -> Vec<f64> {
    let q: Vec<f64> = rows.iter().map(|&i| data.get(i).q).collect();
    let d: Vec<bool> = rows.iter().map(|&i| data.get(i).delta).collect();
    km_jumps(&q, &d)
}

pub fn process_value(
    data: &Dataset,
    fit: &LogitFit,
    kind: ProcessKind,
    tau_bar: f64,
    y: f64,
    x: &[f64],
) -> f64 {
    let n = data.len() as f64;
    let mut total = 0.0;
    for c in cells(data, fit, kind, tau_bar) {
        let w = cell_weights(data, &c.rows);
        let mut s = 0.0;
        for (j, &i) in c.rows.iter().enumerate() {
            let o = data.get(i);
            if leq(&o.x, x) {
                s += w[j]
                    * (integrand(kind, o.q, y, tau_bar) / pi(fit, &o.x, c.label_one) + c.offset);
            }
        }
        total += c.sign * c.rows.len() as f64 / n * s;
    }
    total
}

pub fn ate(data: &Dataset, fit: &LogitFit, tau_bar: f64) -> f64 {
    let inf = vec![f64::INFINITY; data.k()];
    process_value(data, fit, ProcessKind::Cate, tau_bar, tau_bar, &inf)
}

/// Censoring corrections of one cell at each of its rows.
#[derive(Debug, Clone)]
pub struct Gammas {
    pub gamma0: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Triple-loop `gamma0`, `gamma1`, `gamma2` for the cell, at its own rows.
pub fn gammas(
    data: &Dataset,
    fit: &LogitFit,
    kind: ProcessKind,
    tau_bar: f64,
    cell: &Cell,
    y: f64,
    x: &[f64],
) -> Gammas {
    let q: Vec<f64> = cell.rows.iter().map(|&i| data.get(i).q).collect();
    let d: Vec<bool> = cell.rows.iter().map(|&i| data.get(i).delta).collect();
    let m = q.len();
    let above = |v: f64| q.iter().filter(|&&w| w > v).count();
    let xi: Vec<f64> = cell
        .rows
        .iter()
        .map(|&i| {
            let o = data.get(i);
            if leq(&o.x, x) {
                integrand(kind, o.q, y, tau_bar) / pi(fit, &o.x, cell.label_one) + cell.offset
            } else {
                0.0
            }
        })
        .collect();
    let gamma0: Vec<f64> = (0..m)
        .map(|i| {
            let mut g = 1.0;
            for j in 0..m {
                if !d[j] && q[j] < q[i] && above(q[j]) > 0 {
                    g *= 1.0 + 1.0 / above(q[j]) as f64;
                }
            }
            g
        })
        .collect();
    let upper = |v: f64| -> f64 {
        (0..m)
            .filter(|&j| d[j] && q[j] > v)
            .map(|j| xi[j] * gamma0[j])
            .sum()
    };
    let gamma1 = (0..m)
        .map(|i| {
            let c = above(q[i]);
            if c == 0 {
                0.0
            } else {
                upper(q[i]) / c as f64
            }
        })
        .collect();
    let gamma2 = (0..m)
        .map(|i| {
            let mut s = 0.0;
            for v in 0..m {
                let c = above(q[v]);
                if !d[v] && q[v] < q[i] && c > 0 {
                    s += upper(q[v]) / (c * c) as f64;
                }
            }
            s
        })
        .collect();
    Gammas {
        gamma0,
        gamma1,
        gamma2,
        xi,
    }
}

pub fn eta(
    data: &Dataset,
    fit: &LogitFit,
    kind: ProcessKind,
    tau_bar: f64,
    y: f64,
    x: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for c in cells(data, fit, kind, tau_bar) {
        let g = gammas(data, fit, kind, tau_bar, &c, y, x);
        for (j, &i) in c.rows.iter().enumerate() {
            let e = if data.get(i).delta {
                g.xi[j] * g.gamma0[j]
            } else {
                g.gamma1[j]
            } - g.gamma2[j];
            out[i] += c.sign * e;
        }
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let l = b.len();
    for col in 0..l {
        let piv = (col..l)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..l {
            let f = a[row][col] / a[col][col];
            for k in col..l {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; l];
    for row in (0..l).rev() {
        let s: f64 = (row + 1..l).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Pointwise `alpha` at every row, from the series regressions.
pub fn alpha_pointwise(
    data: &Dataset,
    fit: &LogitFit,
    kind: ProcessKind,
    tau_bar: f64,
    y: f64,
    x: &[f64],
) -> Vec<f64> {
    let n = data.len();
    let r: Vec<Vec<f64>> = (0..n)
        .map(|i| fit.features(&data.get(i).x).unwrap())
        .collect();
    let l = r[0].len();
    let mut gram = vec![vec![0.0; l]; l];
    for ri in &r {
        for a in 0..l {
            for b in 0..l {
                gram[a][b] += ri[a] * ri[b] / n as f64;
            }
        }
    }
    let cs = cells(data, fit, kind, tau_bar);
    let coefs: Vec<Vec<f64>> = cs
        .iter()
        .map(|c| {
            let w = cell_weights(data, &c.rows);
            let mut b = vec![0.0; l];
            for (j, &i) in c.rows.iter().enumerate() {
                let o = data.get(i);
                let v = w[j] * integrand(kind, o.q, y, tau_bar) / pi(fit, &o.x, c.label_one);
                for a in 0..l {
                    b[a] += c.rows.len() as f64 / n as f64 * v * r[i][a];
                }
            }
            gauss_solve(gram.clone(), b)
        })
        .collect();
    let indicator = matches!(kind, ProcessKind::Dte | ProcessKind::Ldte);
    (0..n)
        .map(|k| {
            let xk = &data.get(k).x;
            if !leq(xk, x) {
                return 0.0;
            }
            let mut a = 0.0;
            for (c, coef) in cs.iter().zip(&coefs) {
                let mut f: f64 = (0..l).map(|t| r[k][t] * coef[t]).sum();
                if indicator {
                    f = f.clamp(0.0, 1.0);
                }
                let dir = if c.label_one { 1.0 } else { -1.0 };
                a -= c.sign * dir * f / pi(fit, xk, c.label_one);
            }
            a
        })
        .collect()
}

/// `alpha` projected on the logit basis with weights `p (1 - p)`.
pub fn alpha_projected(data: &Dataset, fit: &LogitFit, alpha: &[f64]) -> Vec<f64> {
    let n = data.len();
    let r: Vec<Vec<f64>> = (0..n)
        .map(|i| fit.features(&data.get(i).x).unwrap())
        .collect();
    let p: Vec<f64> = (0..n)
        .map(|i| fit.predict_probability(&data.get(i).x).unwrap())
        .collect();
    let l = r[0].len();
    let mut info = vec![vec![0.0; l]; l];
    let mut rhs = vec![0.0; l];
    for i in 0..n {
        let w = p[i] * (1.0 - p[i]) / n as f64;
        for a in 0..l {
            rhs[a] += w * alpha[i] * r[i][a];
            for b in 0..l {
                info[a][b] += w * r[i][a] * r[i][b];
            }
        }
    }
    let c = gauss_solve(info, rhs);
    r.iter()
        .map(|ri| (0..l).map(|t| ri[t] * c[t]).sum())
        .collect()
}

/// Full influence column with the projected propensity correction.
pub fn psi(
    data: &Dataset,
    fit: &LogitFit,
    kind: ProcessKind,
    tau_bar: f64,
    y: f64,
    x: &[f64],
) -> Vec<f64> {
    let n = data.len();
    let (y, inner) = match kind {
        ProcessKind::Cate | ProcessKind::Hom => (tau_bar, ProcessKind::Cate),
        _ => (y, kind),
    };
    let column = |kind: ProcessKind, x: &[f64]| -> Vec<f64> {
        let e = eta(data, fit, kind, tau_bar, y, x);
        let a = alpha_projected(data, fit, &alpha_pointwise(data, fit, kind, tau_bar, y, x));
        let lab = labels(data, kind);
        (0..n)
            .map(|i| {
                let p = fit.predict_probability(&data.get(i).x).unwrap();
                e[i] + a[i] * (f64::from(u8::from(lab[i])) - p)
            })
            .collect()
    };
    let mut out = column(kind, x);
    if kind == ProcessKind::Hom {
        let inf = vec![f64::INFINITY; data.k()];
        let ate_col = column(inner, &inf);
        let a = ate(data, fit, tau_bar);
        let g: f64 = cells(data, fit, kind, tau_bar)
            .iter()
            .map(|c| {
                let w = cell_weights(data, &c.rows);
                let s: f64 = c
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(_, &i)| leq(&data.get(i).x, x))
                    .map(|(j, _)| w[j])
                    .sum();
                c.rows.len() as f64 / n as f64 * s
            })
            .sum();
        for i in 0..n {
            out[i] -= g * (ate_col[i] - a);
        }
    }
    out
}

/// Largest absolute discrepancy per quantity between the library and the
/// naive implementations on one dataset.
#[derive(Debug, Default, Clone)]
pub struct Discrepancy {
    pub process: f64,
    pub gamma: f64,
    pub eta: f64,
    pub alpha: f64,
    pub psi: f64,
}

impl Discrepancy {
    pub fn max(&self) -> f64 {
        [self.process, self.gamma, self.eta, self.alpha, self.psi]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn merge(&mut self, o: &Discrepancy) {
        self.process = self.process.max(o.process);
        self.gamma = self.gamma.max(o.gamma);
        self.eta = self.eta.max(o.eta);
        self.alpha = self.alpha.max(o.alpha);
        self.psi = self.psi.max(o.psi);
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn compare_with_library(
    data: &Dataset,
    fit: &LogitFit,
    kind: ProcessKind,
    tau_bar: f64,
) -> Discrepancy {
    use kmte::influence::{alpha_column, SeriesContext};
    use kmte::process::WeightedProcess;
    use kmte::{
        covariate_grid, default_grid, estimate_h_functions, eta_column, gamma0, gamma1, gamma2,
        influence_matrix, project_alpha, Arms, GridMode, InstrumentCells, PropensityCorrection,
    };

    let n = data.len();
    let arms = Arms::from_dataset(data).ok();
    let icells = InstrumentCells::from_dataset(data).ok();
    let process = match kind {
        ProcessKind::Dte => {
            let a = arms.as_ref().unwrap();
            WeightedProcess::dte(&a.treated, &a.control, fit, n).unwrap()
        }
        ProcessKind::Cate => {
            let a = arms.as_ref().unwrap();
            WeightedProcess::cate(&a.treated, &a.control, fit, tau_bar, n).unwrap()
        }
        ProcessKind::Hom => {
            let a = arms.as_ref().unwrap();
            WeightedProcess::hom(&a.treated, &a.control, fit, tau_bar, n).unwrap()
        }
        ProcessKind::Ldte => WeightedProcess::ldte(icells.as_ref().unwrap(), fit, n).unwrap(),
    };
    let grid = if kind.covariate_only() {
        covariate_grid(data, tau_bar, GridMode::SamplePairs).unwrap()
    } else {
        match default_grid(data, tau_bar, GridMode::SamplePairs) {
            Ok(g) => g,
            Err(_) => return Discrepancy::default(),
        }
    };
    let values = process.evaluate(&grid);
    let psi_lib = influence_matrix(&process, data, &grid, PropensityCorrection::Projected).unwrap();
    let ctx = SeriesContext::new(data, fit, labels(data, kind)).unwrap();
    let ocells = cells(data, fit, kind, tau_bar);

    let mut d = Discrepancy::default();
    for (j, p) in grid.points().iter().enumerate() {
        let y = if kind.covariate_only() { tau_bar } else { p.y };
        let oracle_v = process_value(data, fit, kind, tau_bar, y, &p.x);
        d.process = d.process.max((values.values[j] - oracle_v).abs());

        for (term, oc) in process.terms.iter().zip(&ocells) {
            let g = gammas(data, fit, kind, tau_bar, oc, y, &p.x);
            let h = estimate_h_functions(term.sub, n);
            let sub = term.sub;
            let xi: Vec<f64> = (0..sub.len())
                .map(|i| {
                    if leq(&sub.x()[i], &p.x) {
                        integrand(kind, sub.q()[i], y, tau_bar) * term.inv_propensity[i]
                            + term.offset
                    } else {
                        0.0
                    }
                })
                .collect();
            let g0: Vec<f64> = sub.q().iter().map(|&q| gamma0(&h, q)).collect();
            for i in 0..sub.len() {
                let pos = oc
                    .rows
                    .iter()
                    .position(|&r| r == sub.original_index()[i])
                    .unwrap();
                let q = sub.q()[i];
                d.gamma = d
                    .gamma
                    .max((g0[i] - g.gamma0[pos]).abs())
                    .max((gamma1(&h, &xi, &g0, q) - g.gamma1[pos]).abs())
                    .max((gamma2(&h, &xi, &g0, q) - g.gamma2[pos]).abs());
            }
        }

        let eta_o = eta(data, fit, kind, tau_bar, y, &p.x);
        d.eta = d
            .eta
            .max(max_abs_diff(&eta_column(&process, y, &p.x), &eta_o));

        let alpha_o = alpha_pointwise(data, fit, kind, tau_bar, y, &p.x);
        let alpha_l = alpha_column(&process, &ctx, y, &p.x).0;
        d.alpha = d.alpha.max(max_abs_diff(&alpha_l, &alpha_o));
        d.alpha = d.alpha.max(max_abs_diff(
            &project_alpha(&ctx, &alpha_l),
            &alpha_projected(data, fit, &alpha_o),
        ));

        let psi_o = psi(data, fit, kind, tau_bar, y, &p.x);
        d.psi = d.psi.max(max_abs_diff(&psi_lib.column(j), &psi_o));
    }
    d
}
