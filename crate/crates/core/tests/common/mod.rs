//! Independent references shared by the integration tests and the acceptance
//! binary. Every law here is re-typed from its written form, in a different
//! arrangement from the library (expanded sums, explicit products, brute-force
//! searches), so agreement is evidence rather than tautology.
#![allow(dead_code)]

use std::f64::consts::PI;

use bctrack_core::controller::{
    actuator_command, adaptive_derivatives, bipartite_error, compensation_derivatives, delta_accumulate,
    filter_derivative, intermediate_control, virtual_control_first, virtual_control_mid, AdaptiveState,
    ControllerState, FirstStepInputs, LastStepInputs, LeaderSample, MidStepInputs,
};
use bctrack_core::fls::{FuzzySystem, MembershipGrid};
use bctrack_core::scenario::{Preset, Scenario};
use bctrack_core::{AgentGains, StepGains, TermExponents};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ------------------------------------------------------------------ graphs

/// Random signed digraph with a planted two-camp partition. A random tree
/// rooted at the leader guarantees every follower is reachable.
pub fn planted_graph(rng: &mut impl Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<i8>) {
    let signs: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let mag = |rng: &mut dyn rand::RngCore| 0.2 + 2.8 * rng.random::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    // tree: first node hears the leader, each later node hears an earlier one
    b[order[0]] = signs[order[0]] as f64 * mag(rng);
    for k in 1..n {
        let child = order[k];
        let parent = order[rng.random_range(0..k)];
        a[child][parent] = (signs[child] * signs[parent]) as f64 * mag(rng);
    }
    for i in 0..n {
        for m in 0..n {
            if i != m && a[i][m] == 0.0 && rng.random_bool(0.3) {
                a[i][m] = (signs[i] * signs[m]) as f64 * mag(rng);
            }
        }
        if b[i] == 0.0 && rng.random_bool(0.3) {
            b[i] = signs[i] as f64 * mag(rng);
        }
    }
    (a, b, signs)
}

/// Adds one link whose sign contradicts the planted partition. Needs at
/// least two followers: a lone follower can sit in either camp.
///
/// New links go where there was none, so the tree that pins every sign stays
/// intact; on a complete graph the reverse edge keeps the pair pinned.
pub fn break_balance(rng: &mut impl Rng, a: &mut [Vec<f64>], b: &mut [f64], signs: &[i8]) {
    let n = a.len();
    assert!(n >= 2, "a single follower is always balanced");
    let w = 0.2 + rng.random::<f64>();
    if rng.random_bool(0.2) {
        let i = rng.random_range(0..n);
        let pinned = b[i] == 0.0 || (0..n).any(|j| j != i && b[j] != 0.0);
        if pinned {
            b[i] = -(signs[i] as f64) * w;
            return;
        }
    }
    let empty: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).map(move |m| (i, m))).filter(|&(i, m)| i != m && a[i][m] == 0.0).collect();
    let (i, m) = if empty.is_empty() {
        let i = rng.random_range(0..n);
        (i, (i + 1 + rng.random_range(0..n - 1)) % n)
    } else {
        empty[rng.random_range(0..empty.len())]
    };
    a[i][m] = -((signs[i] * signs[m]) as f64) * w;
}

/// Every gauge `D` with `D A D >= 0` and `D b >= 0`, found by enumeration.
pub fn balanced_gauges(a: &[Vec<f64>], b: &[f64]) -> Vec<Vec<i8>> {
    let n = a.len();
    let mut found = Vec::new();
    for mask in 0u32..(1 << n) {
        let d: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let ok = (0..n).all(|i| d[i] * b[i] >= 0.0 && (0..n).all(|m| d[i] * a[i][m] * d[m] >= 0.0));
        if ok {
            found.push(d.iter().map(|v| *v as i8).collect());
        }
    }
    found
}

// ------------------------------------------------------------------ sums with scale

/// Running sum that also tracks the magnitude of its terms, so comparisons
/// can be relative to the size of the computation rather than of a result
/// that may have cancelled to near zero.
#[derive(Default, Clone, Copy)]
pub struct Terms {
    pub value: f64,
    pub scale: f64,
}

impl Terms {
    pub fn add(&mut self, t: f64) {
        self.value += t;
        self.scale += t.abs();
    }
}

pub fn rel_err(got: f64, want: Terms) -> f64 {
    let d = (got - want.value).abs();
    if d == 0.0 {
        0.0
    } else {
        d / want.scale.max(want.value.abs()).max(f64::MIN_POSITIVE)
    }
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ------------------------------------------------------------------ laws, written out

/// `z_i = (d_i + |b_i|) y_i - sum_m a_im y_m - b_i y_r`.
pub fn z_ref(row: &[f64], b: f64, i: usize, ys: &[f64], y_r: f64) -> Terms {
    let d: f64 = row.iter().map(|a| a.abs()).sum();
    let mut t = Terms::default();
    t.add((d + b.abs()) * ys[i]);
    for (a, y) in row.iter().zip(ys) {
        t.add(-a * y);
    }
    t.add(-b * y_r);
    t
}

pub fn fls_norm_ref(centers: &[f64], width: f64, x: &[f64]) -> f64 {
    let w: Vec<f64> = centers
        .iter()
        .map(|c| x.iter().map(|xj| (-(xj - c).powi(2) / (2.0 * width * width)).exp()).product())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|wl| (wl / total).powi(2)).sum::<f64>().sqrt()
}

pub struct FirstRef<'a> {
    pub e_star: f64,
    pub eta1: f64,
    pub xi: f64,
    pub q: f64,
    pub b: f64,
    pub yr_dot: f64,
    pub sigma_dot: f64,
    pub theta: f64,
    pub n11: f64,
    pub n12: f64,
    pub g: &'a StepGains,
    pub ex: &'a TermExponents,
}

pub fn alpha1_ref(r: &FirstRef) -> Terms {
    let (k, e) = (r.g.k, r.g.eps);
    let zeta = r.e_star;
    let zb = r.e_star - r.eta1;
    let mu = 2.0 / PI * r.e_star.atan();
    let mut t = Terms::default();
    t.add(-(k + 1.0) * zeta / (r.xi * r.q));
    t.add(r.b * r.yr_dot / r.q);
    t.add(mu * r.sigma_dot / r.q);
    t.add(-3.0 / 4.0 * e[0].powf(4.0 / 3.0) * r.xi.powf(r.ex.drift) * zb * r.theta * r.n11.powf(4.0 / 3.0) / r.q);
    t.add(-3.0 / 4.0 * e[2].powi(2) * r.xi.powf(r.ex.diffusion) * zb * r.theta * r.n12.powi(2) / r.q);
    t.add(-3.0 / 4.0 * r.xi.powf(r.ex.sign_bound) * zb / r.q);
    t.add(-3.0 / 4.0 * e[1].powf(4.0 / 3.0) * r.xi.powf(r.ex.drift_residual) * zb / r.q);
    t.add(-3.0 / 4.0 * e[3].powi(2) * r.xi.powf(r.ex.diffusion_residual) * zb / r.q);
    t
}

pub struct MidRef<'a> {
    pub step: usize,
    pub zeta: f64,
    pub eta: f64,
    pub eta_prev: f64,
    pub filter_rate_prev: f64,
    pub theta: f64,
    pub n1: f64,
    pub n2: f64,
    pub xi_q: f64,
    pub g: &'a StepGains,
    pub ex: &'a TermExponents,
}

pub fn alpha_mid_ref(r: &MidRef) -> Terms {
    let (k, e) = (r.g.k, r.g.eps);
    let zb = r.zeta - r.eta;
    let mut t = Terms::default();
    t.add(-(k + 1.0) * r.zeta);
    t.add(r.filter_rate_prev);
    t.add(-3.0 / 4.0 * e[0].powf(4.0 / 3.0) * zb * r.theta * r.n1.powf(4.0 / 3.0));
    t.add(-3.0 / 4.0 * e[2].powi(2) * zb * r.theta * r.n2.powi(2));
    t.add(-3.0 / 4.0 * e[1].powf(4.0 / 3.0) * zb);
    t.add(-3.0 / 4.0 * e[3].powi(2) * zb);
    t.add(-3.0 / 4.0 * zb);
    if r.step == 2 {
        t.add(-r.xi_q * r.eta_prev);
        t.add(-27.0 / 4.0 * r.xi_q.powf(r.ex.second_step_coupling) * zb);
    } else {
        t.add(-27.0 / 256.0 * zb);
        t.add(-r.eta_prev);
    }
    t
}

pub struct LastRef<'a> {
    pub zeta: f64,
    pub eta: f64,
    pub eta_prev: f64,
    pub filter_rate_prev: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub n1: f64,
    pub n2: f64,
    /// `xi q` for a second-order plant, 1 otherwise.
    pub coupling: f64,
    pub eps_tanh: f64,
    pub g: &'a StepGains,
    pub ex: &'a TermExponents,
}

pub fn ubar_ref(r: &LastRef) -> Terms {
    let (k, e) = (r.g.k, r.g.eps);
    let zb = r.zeta - r.eta;
    let mut t = Terms::default();
    t.add((k + 1.0) * r.zeta);
    t.add(3.0 / 4.0 * e[0].powf(4.0 / 3.0) * zb * r.theta * r.n1.powf(4.0 / 3.0));
    t.add(3.0 / 4.0 * e[1].powf(4.0 / 3.0) * zb);
    t.add(3.0 / 4.0 * e[2].powi(2) * zb * r.theta * r.n2.powi(2));
    t.add(3.0 / 4.0 * e[3].powi(2) * zb);
    t.add(27.0 / 256.0 * r.coupling.powf(r.ex.last_step_coupling) * zb);
    t.add(-r.filter_rate_prev);
    t.add(r.coupling * r.eta_prev);
    t.add(r.vartheta * (zb.powi(3) / r.eps_tanh).tanh());
    t
}

pub fn abar_ref(zb: f64, varphi: f64, ubar: f64, eps5: f64) -> Terms {
    let num = zb.powi(3) * varphi.powi(2) * ubar.powi(2);
    let den = (zb.powi(6) * varphi.powi(2) * ubar.powi(2) + eps5.powi(2)).sqrt();
    let mut t = Terms::default();
    t.add(-num / den);
    t
}

/// Compensation dynamics written per stage.
pub fn eta_dot_ref(eta: &[f64], filter_err: &[f64], steps: &[StepGains], xi_q: f64) -> Vec<Terms> {
    let n = eta.len();
    (0..n)
        .map(|j| {
            let mut t = Terms::default();
            t.add(-(steps[j].k + 1.0) * eta[j]);
            if j == 0 {
                if n > 1 {
                    t.add(xi_q * filter_err[0]);
                    t.add(xi_q * eta[1]);
                }
                t.add(-steps[0].lambda * xi_q * sgn(eta[0]));
            } else {
                let back = if j == 1 { xi_q } else { 1.0 };
                t.add(-back * eta[j - 1]);
                if j + 1 < n {
                    t.add(filter_err[j]);
                    t.add(eta[j + 1]);
                }
                t.add(-steps[j].lambda * sgn(eta[j]));
            }
            t
        })
        .collect()
}

pub fn delta_ref(
    zb: &[f64],
    norms: &[[f64; 2]],
    steps: &[StepGains],
    delta: f64,
    xi: f64,
    ex: &TermExponents,
) -> Terms {
    let mut t = Terms::default();
    for j in 0..zb.len() {
        let e = steps[j].eps;
        let (pd, pg) = if j == 0 { (xi.powf(ex.delta_drift), xi.powf(ex.delta_diffusion)) } else { (1.0, 1.0) };
        t.add(delta * 3.0 / 4.0 * e[0].powf(4.0 / 3.0) * zb[j].powi(4) * pd * norms[j][0].powf(4.0 / 3.0));
        t.add(delta * 3.0 / 4.0 * e[2].powi(2) * zb[j].powi(4) * pg * norms[j][1].powi(2));
    }
    t
}

pub fn adaptive_ref(delta_acc: f64, zb: f64, ubar: f64, g: &AgentGains, s: &AdaptiveState) -> [Terms; 3] {
    let mut th = Terms::default();
    th.add(delta_acc);
    th.add(-g.delta_bar * s.theta_hat);
    let mut vt = Terms::default();
    vt.add(g.gamma * zb.powi(3) * (zb.powi(3) / g.eps_tanh).tanh());
    vt.add(-g.gamma_bar * s.vartheta_hat);
    let mut vp = Terms::default();
    vp.add(g.psi * zb.powi(3) * ubar);
    vp.add(-g.psi_bar * s.varphi_hat);
    [th, vt, vp]
}

// ------------------------------------------------------------------ sweep

pub struct LawReport {
    pub name: &'static str,
    pub samples: usize,
    pub worst: f64,
}

fn sample_gains(rng: &mut ChaCha8Rng) -> StepGains {
    StepGains {
        k: rng.random_range(0.5..15.0),
        lambda: rng.random_range(0.006..0.1),
        eps: [
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
        ],
    }
}

fn sample_exponents(rng: &mut ChaCha8Rng) -> TermExponents {
    if rng.random_bool(0.5) {
        TermExponents::default()
    } else {
        let mut p = || rng.random_range(0.0..4.0);
        TermExponents {
            drift: p(),
            drift_residual: p(),
            sign_bound: p(),
            diffusion: p(),
            diffusion_residual: p(),
            delta_drift: p(),
            delta_diffusion: p(),
            second_step_coupling: p(),
            last_step_coupling: p(),
        }
    }
}

fn track(reports: &mut Vec<LawReport>, name: &'static str, err: f64) {
    match reports.iter_mut().find(|r| r.name == name) {
        Some(r) => {
            r.samples += 1;
            r.worst = r.worst.max(err);
        }
        None => reports.push(LawReport { name, samples: 1, worst: err }),
    }
}

/// Compares every law with its written-out form at `samples` random inputs.
pub fn dual_transcription(samples: usize, seed: u64) -> Vec<LawReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let presets: Vec<Scenario> = Preset::ALL.iter().map(|p| p.load()).collect();
    for _ in 0..samples {
        let u = |rng: &mut ChaCha8Rng, s: f64| rng.random_range(-s..s);

        // consensus error
        let n = rng.random_range(1..7);
        let row: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { u(&mut rng, 3.0) } else { 0.0 }).collect();
        let i = rng.random_range(0..n);
        let mut row = row;
        row[i] = 0.0;
        let b = if rng.random_bool(0.5) { u(&mut rng, 3.0) } else { 0.0 };
        let ys: Vec<f64> = (0..n).map(|_| u(&mut rng, 5.0)).collect();
        let y_r = u(&mut rng, 5.0);
        let got = bipartite_error(&row, b, ys[i], &ys, y_r);
        track(&mut reports, "bipartite consensus error", rel_err(got, z_ref(&row, b, i, &ys, y_r)));

        // fuzzy basis norm
        let centers: Vec<f64> = (0..rng.random_range(1..9)).map(|_| u(&mut rng, 2.0)).collect();
        let width = rng.random_range(0.5..2.0);
        let x: Vec<f64> = (0..rng.random_range(1..6)).map(|_| u(&mut rng, 2.5)).collect();
        let fs = FuzzySystem::new(MembershipGrid::diagonal(&centers, x.len(), width).unwrap());
        let mut want = Terms::default();
        want.add(fls_norm_ref(&centers, width, &x));
        track(&mut reports, "fuzzy basis norm", rel_err(fs.basis_norm(&x).unwrap(), want));

        let g = sample_gains(&mut rng);
        let ex = sample_exponents(&mut rng);

        // first virtual control
        let fr = FirstRef {
            e_star: u(&mut rng, 3.0),
            eta1: u(&mut rng, 1.0),
            xi: rng.random_range(1.0..40.0),
            q: rng.random_range(0.2..6.0),
            b: u(&mut rng, 3.0),
            yr_dot: u(&mut rng, 3.0),
            sigma_dot: rng.random_range(-8.0..0.0),
            theta: rng.random_range(0.0..5.0),
            n11: rng.random_range(0.3..1.0),
            n12: rng.random_range(0.3..1.0),
            g: &g,
            ex: &ex,
        };
        let fi = FirstStepInputs {
            zeta: fr.e_star,
            zeta_bar: fr.e_star - fr.eta1,
            xi: fr.xi,
            q: fr.q,
            b: fr.b,
            leader_rate: fr.yr_dot,
            mu: 2.0 / PI * fr.e_star.atan(),
            sigma_dot: fr.sigma_dot,
            theta_hat: fr.theta,
            phi_norms: [fr.n11, fr.n12],
        };
        let got = virtual_control_first(&fi, &g, &ex).unwrap();
        track(&mut reports, "first virtual control", rel_err(got, alpha1_ref(&fr)));

        // middle virtual controls
        for step in [2usize, 3] {
            let mr = MidRef {
                step,
                zeta: u(&mut rng, 3.0),
                eta: u(&mut rng, 1.0),
                eta_prev: u(&mut rng, 1.0),
                filter_rate_prev: u(&mut rng, 50.0),
                theta: rng.random_range(0.0..5.0),
                n1: rng.random_range(0.3..1.0),
                n2: rng.random_range(0.3..1.0),
                xi_q: rng.random_range(1.0..60.0),
                g: &g,
                ex: &ex,
            };
            let mi = MidStepInputs {
                step,
                zeta: mr.zeta,
                zeta_bar: mr.zeta - mr.eta,
                eta_prev: mr.eta_prev,
                filter_rate_prev: mr.filter_rate_prev,
                theta_hat: mr.theta,
                phi_norms: [mr.n1, mr.n2],
                xi: mr.xi_q / 2.0,
                q: 2.0,
            };
            let got = virtual_control_mid(&mi, &g, &ex);
            track(&mut reports, "middle virtual control", rel_err(got, alpha_mid_ref(&mr)));
        }

        // intermediate control and actuator command
        let coupling = if rng.random_bool(0.5) { rng.random_range(1.0..60.0) } else { 1.0 };
        let eps_tanh = rng.random_range(0.05..0.5);
        let lr = LastRef {
            zeta: u(&mut rng, 3.0),
            eta: u(&mut rng, 1.0),
            eta_prev: u(&mut rng, 1.0),
            filter_rate_prev: u(&mut rng, 50.0),
            theta: rng.random_range(0.0..5.0),
            vartheta: rng.random_range(0.0..5.0),
            n1: rng.random_range(0.3..1.0),
            n2: rng.random_range(0.3..1.0),
            coupling,
            eps_tanh,
            g: &g,
            ex: &ex,
        };
        let li = LastStepInputs {
            zeta: lr.zeta,
            zeta_bar: lr.zeta - lr.eta,
            eta_prev: lr.eta_prev,
            filter_rate_prev: lr.filter_rate_prev,
            theta_hat: lr.theta,
            vartheta_hat: lr.vartheta,
            phi_norms: [lr.n1, lr.n2],
            coupling,
        };
        let ubar = intermediate_control(&li, &g, eps_tanh, &ex);
        track(&mut reports, "intermediate control", rel_err(ubar, ubar_ref(&lr)));
        let (zb, varphi, eps5) = (u(&mut rng, 2.0), rng.random_range(0.0..5.0), rng.random_range(0.05..0.5));
        track(
            &mut reports,
            "actuator command",
            rel_err(actuator_command(zb, varphi, ubar, eps5), abar_ref(zb, varphi, ubar, eps5)),
        );

        // compensation dynamics for orders 2..=4
        let order = rng.random_range(2..5);
        let steps: Vec<StepGains> = (0..order).map(|_| sample_gains(&mut rng)).collect();
        let eta: Vec<f64> = (0..order).map(|_| u(&mut rng, 1.0)).collect();
        let ferr: Vec<f64> = (0..order - 1).map(|_| u(&mut rng, 0.1)).collect();
        let xi_q = rng.random_range(1.0..60.0);
        let mut got = vec![0.0; order];
        compensation_derivatives(&eta, &ferr, &steps, xi_q, &mut got);
        for (g_j, w_j) in got.iter().zip(eta_dot_ref(&eta, &ferr, &steps, xi_q)) {
            track(&mut reports, "compensation dynamics", rel_err(*g_j, w_j));
        }

        // adaptation
        let zbs: Vec<f64> = (0..order).map(|_| u(&mut rng, 2.0)).collect();
        let norms: Vec<[f64; 2]> =
            (0..order).map(|_| [rng.random_range(0.3..1.0), rng.random_range(0.3..1.0)]).collect();
        let (delta, xi) = (rng.random_range(0.5..5.0), rng.random_range(1.0..40.0));
        let got = delta_accumulate(&zbs, &norms, &steps, delta, xi, &ex);
        track(&mut reports, "adaptation increment", rel_err(got, delta_ref(&zbs, &norms, &steps, delta, xi, &ex)));
        let gains = &presets[rng.random_range(0..presets.len())].closed_loop.controllers[0].gains().clone();
        let st = AdaptiveState {
            theta_hat: rng.random_range(0.0..5.0),
            vartheta_hat: rng.random_range(0.0..5.0),
            varphi_hat: rng.random_range(0.0..5.0),
        };
        let (d_acc, zb_n, ub) = (rng.random_range(0.0..10.0), u(&mut rng, 2.0), u(&mut rng, 20.0));
        let got = adaptive_derivatives(d_acc, zb_n, ub, gains, &st);
        let want = adaptive_ref(d_acc, zb_n, ub, gains, &st);
        for (g_k, w_k) in [got.0, got.1, got.2].into_iter().zip(want) {
            track(&mut reports, "adaptive laws", rel_err(g_k, w_k));
        }

        // command filter
        let (a_star, a, tau) = (u(&mut rng, 10.0), u(&mut rng, 10.0), rng.random_range(0.001..0.1));
        let mut want = Terms::default();
        want.add(a / tau);
        want.add(-a_star / tau);
        track(&mut reports, "command filter", rel_err(filter_derivative(a_star, a, tau), want));

        // one whole controller evaluation on a shipped scenario
        let sc = &presets[rng.random_range(0..presets.len())];
        for (name, err) in full_evaluation(sc, &mut rng) {
            track(&mut reports, name, err);
        }
    }
    reports
}

/// Evaluates every agent of a shipped scenario at a random admissible state
/// and rebuilds each output from the written-out laws.
fn full_evaluation(sc: &Scenario, rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    let cfg = &sc.config;
    let cl = &sc.closed_loop;
    let n = cl.agents();
    let prof = &cl.profile;
    let t = rng.random_range(0.0..cfg.integrator.t_end);
    let sigma = prof.sigma(t);
    let y_r = cl.leader.value(t);
    let yr_dot = cl.leader.derivative(t);
    let qmax = (0..n).map(|i| cl.controllers[i].q()).fold(0.0, f64::max);
    let r = 0.45 * sigma / qmax;
    let states: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![cl.gauge.sign(i) * y_r + rng.random_range(-r..r), rng.random_range(-2.0..2.0)])
        .collect();
    let mut out = Vec::new();
    for i in 0..n {
        let ctl = &cl.controllers[i];
        let gains = ctl.gains();
        let ex = ctl.exponents();
        let st = ControllerState {
            eta: vec![rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            alpha_star: vec![rng.random_range(-5.0..5.0)],
            adaptive: AdaptiveState {
                theta_hat: rng.random_range(0.0..4.0),
                vartheta_hat: rng.random_range(0.0..4.0),
                varphi_hat: rng.random_range(0.0..4.0),
            },
        };
        let mut o = ctl.output_buffer();
        ctl.evaluate(t, &states, LeaderSample { value: y_r, rate: yr_dot }, prof, &st, false, &mut o).unwrap();

        let row = &cfg.graph.adjacency[i];
        let b = cfg.graph.leader[i];
        let ys: Vec<f64> = states.iter().map(|x| x[0]).collect();
        let z = z_ref(row, b, i, &ys, y_r);
        out.push(("controller: consensus error", rel_err(o.z, z)));
        // each later law is checked on the library's own upstream values, so
        // rounding in one stage is not counted against the next
        let mut e_ref = Terms::default();
        e_ref.add((PI * o.z / (2.0 * sigma)).tan());
        out.push(("controller: envelope transform", rel_err(o.e_star, e_ref)));
        let e_star = o.e_star;
        let mut xi_ref = Terms::default();
        xi_ref.add(PI * (1.0 + e_star * e_star) / (2.0 * sigma));
        out.push(("controller: envelope transform", rel_err(o.xi, xi_ref)));
        let xi = o.xi;
        let q: f64 = row.iter().map(|a| a.abs()).sum::<f64>() + b.abs();

        let nbrs: Vec<usize> = (0..n).filter(|&m| row[m] != 0.0).collect();
        let mut in11 = vec![states[i][0]];
        let mut in12 = vec![states[i][0]];
        for &m in &nbrs {
            in11.extend([states[m][0], states[m][1]]);
            in12.push(states[m][0]);
        }
        let fz = &cfg.fuzzy;
        let n11 = fls_norm_ref(&fz.drift_centers, fz.width, &in11);
        let n12 = fls_norm_ref(&fz.diffusion_centers, fz.width, &in12);
        let n21 = fls_norm_ref(&fz.drift_centers, fz.width, &states[i]);
        let n22 = fls_norm_ref(&fz.diffusion_centers, fz.width, &states[i]);

        let alpha1 = alpha1_ref(&FirstRef {
            e_star,
            eta1: st.eta[0],
            xi,
            q,
            b,
            yr_dot,
            sigma_dot: prof.sigma_dot(t),
            theta: st.adaptive.theta_hat,
            n11,
            n12,
            g: &gains.steps[0],
            ex,
        });
        out.push(("controller: first virtual control", rel_err(o.alpha[0], alpha1)));
        let a_star = st.alpha_star[0];
        let rate = (o.alpha[0] - a_star) / gains.tau[0];
        let zeta2 = states[i][1] - a_star;
        let ubar = ubar_ref(&LastRef {
            zeta: zeta2,
            eta: st.eta[1],
            eta_prev: st.eta[0],
            filter_rate_prev: rate,
            theta: st.adaptive.theta_hat,
            vartheta: st.adaptive.vartheta_hat,
            n1: n21,
            n2: n22,
            coupling: xi * q,
            eps_tanh: gains.eps_tanh,
            g: &gains.steps[1],
            ex,
        });
        out.push(("controller: intermediate control", rel_err(o.ubar, ubar)));
        let zb2 = zeta2 - st.eta[1];
        let abar = abar_ref(zb2, st.adaptive.varphi_hat, o.ubar, gains.eps5);
        out.push(("controller: actuator command", rel_err(o.abar, abar)));
        for (h, l) in cl.models[i].control_coeffs().iter().enumerate() {
            let mut w = Terms::default();
            w.add(sgn(*l) * abar.value);
            out.push(("controller: actuator command", rel_err(o.commands[h], w)));
        }
        let eta_dot = eta_dot_ref(&st.eta, &[a_star - o.alpha[0]], &gains.steps, xi * q);
        for (g_j, w_j) in o.eta_dot.iter().zip(eta_dot) {
            out.push(("controller: compensation dynamics", rel_err(*g_j, w_j)));
        }
        let zb = [e_star - st.eta[0], zb2];
        let delta = delta_ref(&zb, &[[n11, n12], [n21, n22]], &gains.steps, gains.delta, xi, ex);
        out.push(("controller: adaptation increment", rel_err(o.delta_acc, delta)));
        let ad = adaptive_ref(o.delta_acc, zb2, o.ubar, gains, &st.adaptive);
        let got = [o.adaptive_dot.0, o.adaptive_dot.1, o.adaptive_dot.2];
        for (g_k, w_k) in got.into_iter().zip(ad) {
            out.push(("controller: adaptive laws", rel_err(g_k, w_k)));
        }
    }
    out
}
