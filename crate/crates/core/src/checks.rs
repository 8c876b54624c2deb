//! Oracle suites run by the `check` command and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::channel::{self, Handover, LinkGeometry, RadioConfig};
use crate::envelope::envelope_target_from_rows;
use crate::error::Result;
use crate::neural::{Mlp, NetworkSpec};
use crate::objectives::PreferenceVector;
use crate::parallel::Execution;
use crate::pareto;
use crate::scalar::ddqn_target;

const FIXTURE: &str = include_str!("../tests/fixtures/channel_oracle.json");

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const SUITES: [&str; 4] = ["channel", "neural", "pareto", "envelope"];

pub fn run_suite(name: &str) -> Option<Result<SuiteReport>> {
    Some(match name {
        "channel" => channel_suite(),
        "neural" => gradient_check(&[30, 64, 64, 30], 100, 0),
        "pareto" => Ok(ccs_vs_grid(200, 100, 10_000, 0)),
        "envelope" => {
            let mut r = envelope_reduction(1000, 0);
            let d = envelope_dominance(10_000, 0);
            r.name = "envelope".into();
            r.checks += d.checks;
            r.failures.extend(d.failures);
            Ok(r)
        }
        _ => return None,
    })
}

fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Deserialize)]
struct RfCase {
    f_r_hz: f64,
    p_r_tx_w: f64,
    g_r_tx: f64,
    g_r_rx: f64,
    alpha: f64,
    sigma2_w: f64,
    d: f64,
    h: f64,
    fading: f64,
    interferers: Vec<[f64; 3]>,
    expected: f64,
}

#[derive(Deserialize)]
struct ThzCase {
    f_t_hz: f64,
    p_t_tx_w: f64,
    g_t_max_tx: f64,
    g_t_max_rx: f64,
    k_a_per_m: f64,
    n0_w: f64,
    d: f64,
    h: f64,
    interferers: Vec<[f64; 3]>,
    expected: f64,
}

#[derive(Deserialize)]
struct RateCase {
    sinr: f64,
    w_hz: f64,
    l_b: f64,
    eps_c: f64,
    expected: f64,
}

#[derive(Deserialize)]
struct QinvCase {
    p: f64,
    expected: f64,
}

#[derive(Deserialize)]
struct Pins {
    rf_sinr_r100: f64,
    thz_sinr_r20_i50: f64,
    #[serde(rename = "rate_sinr10_w5e8_lb25_eps1e-5")]
    rate_sinr10: f64,
    #[serde(rename = "inverse_q_1e-5")]
    inverse_q_1e5: f64,
}

#[derive(Deserialize)]
struct Fixture {
    rf: Vec<RfCase>,
    thz: Vec<ThzCase>,
    rate: Vec<RateCase>,
    inverse_q: Vec<QinvCase>,
    pins: Pins,
}

fn links(raw: &[[f64; 3]]) -> Result<Vec<(LinkGeometry, f64)>> {
    raw.iter()
        .map(|[d, h, g]| Ok((LinkGeometry::new(*d, *h)?, *g)))
        .collect()
}

/// Worst relative errors against the arbitrary-precision fixture, per
/// function: `(rf, thz, rate, inverse_q)`.
pub fn channel_oracle_errors() -> Result<[f64; 4]> {
    let fx: Fixture = serde_json::from_str(FIXTURE)?;
    let mut worst = [0.0f64; 4];
    for c in &fx.rf {
        let cfg = RadioConfig {
            f_r_hz: c.f_r_hz,
            p_r_tx_w: c.p_r_tx_w,
            g_r_tx: c.g_r_tx,
            g_r_rx: c.g_r_rx,
            alpha: c.alpha,
            sigma2_w: c.sigma2_w,
            ..RadioConfig::default()
        };
        let got = channel::rf_sinr(&LinkGeometry::new(c.d, c.h)?, c.fading, &links(&c.interferers)?, &cfg)?;
        worst[0] = worst[0].max(rel_err(got, c.expected));
    }
    for c in &fx.thz {
        let cfg = RadioConfig {
            f_t_hz: c.f_t_hz,
            p_t_tx_w: c.p_t_tx_w,
            g_t_max_tx: c.g_t_max_tx,
            g_t_max_rx: c.g_t_max_rx,
            k_a_per_m: c.k_a_per_m,
            n0_w: c.n0_w,
            ..RadioConfig::default()
        };
        let got = channel::thz_sinr(&LinkGeometry::new(c.d, c.h)?, &links(&c.interferers)?, &cfg)?;
        worst[1] = worst[1].max(rel_err(got, c.expected));
    }
    for c in &fx.rate {
        let got = channel::achievable_rate(c.sinr, c.w_hz, c.l_b, c.eps_c)?;
        worst[2] = worst[2].max(rel_err(got, c.expected));
    }
    for c in &fx.inverse_q {
        worst[3] = worst[3].max(rel_err(channel::inverse_q(c.p)?, c.expected));
    }
    Ok(worst)
}

/// Gap between the rate at blocklength 1e12 and `W·log2(1 + SINR)` over
/// `n` log-spaced SINRs in [1e-3, 1e4].
#[derive(Debug, Clone, Copy)]
pub struct ShannonGap {
    /// Largest relative gap over the grid.
    pub worst: f64,
    pub worst_sinr: f64,
    /// Largest relative disagreement between each measured gap and the
    /// dispersion penalty `sqrt(V/L_B)·Qinv(eps_c) / ln(1 + SINR)`.
    pub model_mismatch: f64,
}

pub const SHANNON_BLOCKLENGTH: f64 = 1e12;
pub const SHANNON_EPS_C: f64 = 1e-5;

pub fn shannon_gap(n: usize) -> Result<ShannonGap> {
    let w = 5e8;
    let qinv = channel::inverse_q(SHANNON_EPS_C)?;
    let mut out = ShannonGap {
        worst: 0.0,
        worst_sinr: f64::NAN,
        model_mismatch: 0.0,
    };
    for i in 0..n {
        let sinr = 10f64.powf(-3.0 + 7.0 * i as f64 / (n.max(2) - 1) as f64);
        let got = channel::achievable_rate(sinr, w, SHANNON_BLOCKLENGTH, SHANNON_EPS_C)?;
        let gap = rel_err(got, w * (1.0 + sinr).log2());
        if gap > out.worst {
            out.worst = gap;
            out.worst_sinr = sinr;
        }
        let v = 1.0 - 1.0 / ((1.0 + sinr) * (1.0 + sinr));
        let predicted = (v / SHANNON_BLOCKLENGTH).sqrt() * qinv / sinr.ln_1p();
        out.model_mismatch = out.model_mismatch.max(rel_err(gap, predicted));
    }
    Ok(out)
}

pub fn channel_suite() -> Result<SuiteReport> {
    let mut r = SuiteReport::new("channel");
    let fx: Fixture = serde_json::from_str(FIXTURE)?;
    let radio = RadioConfig::default();
    let pins = [
        (
            "rf_sinr at 100 m",
            channel::rf_sinr(&LinkGeometry::new(100.0, 0.0)?, 1.0, &[], &radio)?,
            fx.pins.rf_sinr_r100,
        ),
        (
            "thz_sinr at 20 m with a 50 m interferer",
            channel::thz_sinr(
                &LinkGeometry::new(20.0, 0.0)?,
                &[(LinkGeometry::new(50.0, 0.0)?, radio.g_t_max_tx * radio.g_t_max_rx)],
                &radio,
            )?,
            fx.pins.thz_sinr_r20_i50,
        ),
        (
            "rate at SINR 10",
            channel::achievable_rate(10.0, 5e8, 25.0, 1e-5)?,
            fx.pins.rate_sinr10,
        ),
        ("inverse_q(1e-5)", channel::inverse_q(1e-5)?, fx.pins.inverse_q_1e5),
    ];
    for (what, got, want) in pins {
        r.check(rel_err(got, want) <= 1e-9, || format!("{what}: {got} vs {want}"));
    }
    let names = ["rf_sinr", "thz_sinr", "achievable_rate", "inverse_q"];
    for (name, err) in names.iter().zip(channel_oracle_errors()?) {
        r.check(err <= 1e-9, || format!("{name}: worst relative error {err:e}"));
    }
    let shannon = shannon_gap(50)?;
    r.check(shannon.model_mismatch <= 1e-6, || {
        format!("Shannon gap departs from the dispersion penalty by {:e}", shannon.model_mismatch)
    });
    let mu = [
        Handover::Keep.penalty(),
        Handover::ToRbs.penalty(),
        Handover::ToTbs.penalty(),
    ];
    r.check(mu == [0.0, 0.1, 0.5], || format!("handover penalties {mu:?}"));
    Ok(r)
}

/// Backpropagation against central differences on `probes` random
/// parameters of a net with the given widths. The loss is a random linear
/// functional of the output.
pub fn gradient_check(widths: &[usize], probes: usize, seed: u64) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("neural");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec::new(widths[0], widths[1..widths.len() - 1].to_vec(), widths[widths.len() - 1]);
    let mut net = Mlp::new(spec, &mut rng)?;
    let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..widths[widths.len() - 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &Mlp| -> Result<f64> { Ok(net.forward(&x)?.iter().zip(&c).map(|(o, ci)| o * ci).sum()) };
    let (_, grads) = net.batch_gradient(std::slice::from_ref(&x), Execution::Sequential, |_, _| (0.0, c.clone()))?;
    let analytic = grads.flat();
    let n_params = net.num_params();
    let h = 1e-6;
    for _ in 0..probes {
        let k = rng.random_range(0..n_params);
        let (layer, idx) = locate(&net, k);
        let orig = param(&mut net, layer, idx);
        *param_mut(&mut net, layer, idx) = orig + h;
        let up = loss(&net)?;
        *param_mut(&mut net, layer, idx) = orig - h;
        let down = loss(&net)?;
        *param_mut(&mut net, layer, idx) = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k];
        let scale = a.abs().max(numeric.abs()).max(1e-7);
        let rel = (a - numeric).abs() / scale;
        r.check(rel <= 1e-4, || format!("parameter {k}: backprop {a:e} vs difference {numeric:e}"));
    }
    Ok(r)
}

/// (layer, flat index within the layer's weights-then-bias block).
fn locate(net: &Mlp, mut k: usize) -> (usize, usize) {
    for (l, layer) in net.layers().iter().enumerate() {
        let size = layer.weights.len() + layer.bias.len();
        if k < size {
            return (l, k);
        }
        k -= size;
    }
    unreachable!("parameter index beyond network size")
}

fn param(net: &mut Mlp, layer: usize, idx: usize) -> f64 {
    *param_mut(net, layer, idx)
}

fn param_mut(net: &mut Mlp, layer: usize, idx: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights.len();
    if idx < nw {
        &mut l.weights[idx]
    } else {
        &mut l.bias[idx - nw]
    }
}

/// CCS by brute force over `grid` evenly spaced preferences.
pub fn ccs_brute_force(points: &[[f64; 2]], grid: usize) -> Vec<usize> {
    let mut keep = vec![false; points.len()];
    for g in 0..grid {
        let w = g as f64 / (grid - 1) as f64;
        let u: Vec<f64> = points.iter().map(|p| w * p[0] + (1.0 - w) * p[1]).collect();
        let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, ui) in u.iter().enumerate() {
            if *ui >= best - pareto::TOLERANCE {
                keep[i] = true;
            }
        }
    }
    // duplicates collapse onto their first occurrence, as in the hull filter
    let mut out = Vec::new();
    for i in 0..points.len() {
        if keep[i] && !points[..i].iter().any(|q| (q[0] - points[i][0]).abs() <= pareto::TOLERANCE && (q[1] - points[i][1]).abs() <= pareto::TOLERANCE) {
            out.push(i);
        }
    }
    out
}

/// Hull-based CCS against grid brute force on `sets` random point sets of
/// 1..=`max_points` points, plus the concave-middle example.
pub fn ccs_vs_grid(sets: usize, max_points: usize, grid: usize, seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("pareto");
    let fig = [[1.0, 0.0], [0.0, 1.0], [0.4, 0.4]];
    let got = pareto::ccs(&fig).unwrap_or_default();
    r.check(got == vec![0, 1], || format!("concave-middle example gave {got:?}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..sets {
        let n = rng.random_range(1..=max_points);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let hull = pareto::ccs(&pts).unwrap_or_default();
        let brute = ccs_brute_force(&pts, grid);
        r.check(hull == brute, || format!("set {s}: hull {hull:?} vs grid {brute:?}"));
    }
    r
}

fn random_pref(rng: &mut ChaCha8Rng) -> PreferenceVector {
    PreferenceVector::from_tran_weight(rng.random()).expect("unit interval")
}

/// Envelope targets with a singleton preference set and rewards collapsed to
/// one objective, selected with the online table and evaluated with the
/// target table, against the scalar double-DQN target on that objective.
pub fn envelope_reduction(transitions: usize, seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("envelope reduction");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in 0..transitions {
        let h = rng.random_range(0..2);
        let w_h: f64 = rng.random_range(1e-3..=1.0);
        let omega = if h == 0 {
            PreferenceVector::new(w_h, 1.0 - w_h)
        } else {
            PreferenceVector::new(1.0 - w_h, w_h)
        }
        .expect("simplex");
        let gamma = rng.random_range(0.0..1.0);
        let terminal = rng.random_bool(0.1);
        let reward: f64 = rng.random_range(-1.0..1.0);
        let q_eval: Vec<f64> = (0..15).map(|_| rng.random_range(-5.0..5.0)).collect();
        let q_target: Vec<f64> = (0..15).map(|_| rng.random_range(-5.0..5.0)).collect();
        let collapse = |q: &[f64]| -> Vec<[f64; 2]> {
            q.iter()
                .map(|&v| if h == 0 { [v, 0.0] } else { [0.0, v] })
                .collect()
        };
        let mut r_vec = [0.0; 2];
        r_vec[h] = reward;
        let y = envelope_target_from_rows(r_vec, terminal, gamma, &omega, &[collapse(&q_eval)], &[collapse(&q_target)]);
        let want = ddqn_target(reward, terminal, gamma, &q_eval, &q_target);
        r.check(y[h].to_bits() == want.to_bits() && y[1 - h] == 0.0, || {
            format!("transition {z}: envelope {:?} vs ddqn {want}", y)
        });
    }
    r
}

/// `ω_g·(envelope target) >= ω_g·(fixed-ω target)` on random tabular
/// instances with four candidate preferences.
pub fn envelope_dominance(instances: usize, seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("envelope dominance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in 0..instances {
        let w: Vec<PreferenceVector> = (0..4).map(|_| random_pref(&mut rng)).collect();
        let tables: Vec<Vec<[f64; 2]>> = (0..4)
            .map(|_| (0..15).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect())
            .collect();
        let g = rng.random_range(0..4);
        let gamma = rng.random_range(0.0..1.0);
        let reward = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let env = envelope_target_from_rows(reward, false, gamma, &w[g], &tables, &tables);
        let fixed = envelope_target_from_rows(
            reward,
            false,
            gamma,
            &w[g],
            std::slice::from_ref(&tables[g]),
            std::slice::from_ref(&tables[g]),
        );
        let (pe, pf) = (w[g].dot(&env), w[g].dot(&fixed));
        r.check(pe >= pf, || format!("instance {z}: {pe} < {pf}"));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for name in SUITES {
            let r = run_suite(name).unwrap().unwrap();
            assert!(r.passed(), "{name}: {:?}", r.failures);
            assert!(r.checks > 0);
        }
        assert!(run_suite("bogus").is_none());
    }
}
