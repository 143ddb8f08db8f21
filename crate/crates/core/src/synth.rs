//! Synthetic two-cluster panels with a drifting common factor and nonlinear
//! conditional-factor outcomes.
//!
//! Covariates follow `X = mu_c + B U_t + A_c U_{c,t} + L_c V + xi`; outcomes
//! `Y = g_a(X) + g_b(X)'F_t + eta_i F_{t,1} + eps`. Templates (`mu`, `B`, `A`,
//! `L`, `sigma`, the networks) come from a structure seed and are shared by
//! all replications; a replication seed redraws latent paths, noise, the
//! factor path and the frailty terms.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::panel::Panel;
use crate::rng::{self, Domain, StreamRng};

pub const MAJORITY_TAG: &str = "A";
pub const MINORITY_TAG: &str = "B";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Easy,
    Medium,
    Hard,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Easy, Scenario::Medium, Scenario::Hard];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Easy => "easy",
            Scenario::Medium => "medium",
            Scenario::Hard => "hard",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Scenario::Easy),
            "medium" => Ok(Scenario::Medium),
            "hard" => Ok(Scenario::Hard),
            other => Err(invalid(format!("unknown scenario {other:?} (easy, medium, hard)"))),
        }
    }
}

/// Logistic drift `m_r = amplitude {L(r) - L(0)} dir` with
/// `L(r) = 1 / (1 + exp(-slope (r - center_frac T)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub amplitude: f64,
    pub slope: f64,
    pub center_frac: f64,
}

/// Noise ramp `s_r = 1 + height clip((r - start_frac T) / (span_frac T), 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRamp {
    pub height: f64,
    pub start_frac: f64,
    pub span_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_units: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    pub factor_dim: usize,
    /// Share of units in the majority cluster.
    pub majority_share: f64,
    pub separation: f64,
    pub phi: [f64; 3],
    pub factor_noise: f64,
    /// `R_jk = factor_corr^|j - k|`.
    pub factor_corr: f64,
    pub drift: Option<Drift>,
    pub ramp: Option<ScaleRamp>,
    /// Minority frailty sd; majority units always have zero frailty.
    pub frailty_sd: f64,
    pub noise_sd: f64,
    pub burn_in: usize,
    pub n_global: usize,
    pub n_cluster: usize,
    pub n_idio: usize,
    /// AR(1) persistence of the latent paths (unit stationary variance).
    pub latent_persistence: f64,
    pub idio_loading_sd: f64,
    pub sigma_range: (f64, f64),
    pub hidden_width: usize,
    /// Root-mean-square per-coordinate size of `mu_B - mu_A` per unit of
    /// separation, so the shift norm is `separation * this * sqrt(d)`.
    pub coord_shift_per_separation: f64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        let (separation, drift, ramp, frailty_sd) = match scenario {
            Scenario::Easy => (0.80, None, None, 0.0),
            Scenario::Medium => (
                0.80,
                Some(Drift { amplitude: 3.60, slope: 0.17, center_frac: 0.48 }),
                Some(ScaleRamp { height: 0.30, start_frac: 0.45, span_frac: 0.55 }),
                0.10,
            ),
            Scenario::Hard => (
                2.0,
                Some(Drift { amplitude: 5.50, slope: 0.20, center_frac: 0.35 }),
                Some(ScaleRamp { height: 0.80, start_frac: 0.40, span_frac: 0.60 }),
                0.15,
            ),
        };
        Self {
            scenario,
            n_units: 500,
            horizon: 100,
            feature_dim: 100,
            factor_dim: 3,
            majority_share: 0.88,
            separation,
            phi: [0.45, 0.60, 0.75],
            factor_noise: 0.55,
            factor_corr: 0.45,
            drift,
            ramp,
            frailty_sd,
            noise_sd: 0.50,
            burn_in: 40,
            n_global: 5,
            n_cluster: 4,
            n_idio: 8,
            latent_persistence: 0.5,
            idio_loading_sd: 0.3,
            sigma_range: (0.5, 1.5),
            hidden_width: 64,
            coord_shift_per_separation: 6.0,
        }
    }

    pub fn n_majority(&self) -> usize {
        (self.majority_share * self.n_units as f64).round() as usize
    }

    pub fn n_minority(&self) -> usize {
        self.n_units - self.n_majority()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor_dim != 3 {
            return Err(invalid("the factor process is three-dimensional"));
        }
        if self.n_units < 2 || self.feature_dim == 0 || self.hidden_width == 0 {
            return Err(invalid("need at least two units, one feature and one hidden unit"));
        }
        if self.burn_in == 0 || self.burn_in >= self.horizon {
            return Err(invalid(format!("burn_in {} must lie in [1, horizon)", self.burn_in)));
        }
        if !(self.majority_share > 0.0 && self.majority_share < 1.0) {
            return Err(invalid("majority_share must lie in (0, 1)"));
        }
        if !(self.latent_persistence.abs() < 1.0) {
            return Err(invalid("latent persistence must lie in (-1, 1)"));
        }
        Ok(())
    }

    /// Drift mean `m_r`.
    pub fn drift_mean(&self, r: usize) -> [f64; 3] {
        let Some(d) = self.drift else { return [0.0; 3] };
        let t = self.horizon as f64;
        let logistic = |x: f64| 1.0 / (1.0 + (-d.slope * (x - d.center_frac * t)).exp());
        let level = d.amplitude * (logistic(r as f64) - logistic(0.0));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        [level * s, 0.0, -level * s]
    }

    /// Noise scale `s_r`.
    pub fn noise_scale(&self, r: usize) -> f64 {
        let Some(ramp) = self.ramp else { return 1.0 };
        let t = self.horizon as f64;
        let x = (r as f64 - ramp.start_frac * t) / (ramp.span_frac * t);
        1.0 + ramp.height * x.clamp(0.0, 1.0)
    }
}

/// Factor correlation `R` and its lower Cholesky factor `C`.
pub fn factor_cholesky(corr: f64) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let r = Matrix3::from_fn(|j, k| corr.powi((j as i32 - k as i32).abs()));
    let c = r
        .cholesky()
        .ok_or_else(|| Error::Singular("factor correlation is not positive definite".into()))?
        .l();
    Ok((r, c))
}

/// One-hidden-layer tanh network with a scalar head and a vector head on a
/// shared hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeNetwork {
    /// `width x d`, row-major.
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub head_alpha: Vec<f64>,
    /// `factor_dim x width`, row-major.
    pub head_beta: Vec<f64>,
    pub width: usize,
    pub dim: usize,
}

impl OutcomeNetwork {
    fn hidden(&self, x: &[f64], out: &mut [f64]) {
        for (k, h) in out.iter_mut().enumerate() {
            let row = &self.w_in[k * self.dim..(k + 1) * self.dim];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b_in[k];
            *h = z.tanh();
        }
    }

    /// `(g_alpha(x), g_beta(x))`.
    pub fn eval(&self, x: &[f64]) -> (f64, [f64; 3]) {
        let mut h = vec![0.0; self.width];
        self.hidden(x, &mut h);
        let dot = |w: &[f64]| w.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        let ga = dot(&self.head_alpha);
        let mut gb = [0.0; 3];
        for (j, g) in gb.iter_mut().enumerate() {
            *g = dot(&self.head_beta[j * self.width..(j + 1) * self.width]);
        }
        (ga, gb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTemplate {
    pub mu: Vec<f64>,
    /// `d x n_cluster`, row-major.
    pub a: Vec<f64>,
    /// `d x n_idio`, row-major.
    pub l: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureTemplates {
    pub seed: u64,
    pub clusters: [ClusterTemplate; 2],
    /// `d x n_global`, row-major.
    pub b: Vec<f64>,
    pub network: OutcomeNetwork,
    pub chol: Matrix3<f64>,
}

impl StructureTemplates {
    pub fn mean_shift_norm(&self) -> f64 {
        self.clusters[0]
            .mu
            .iter()
            .zip(&self.clusters[1].mu)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn normals(rng: &mut StreamRng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Templates from the structure seed. Everything except the minority mean
/// shift is independent of the separation, so scenarios with equal
/// separation share identical templates.
pub fn make_structure(seed: u64, spec: &ScenarioSpec) -> Result<StructureTemplates> {
    spec.validate()?;
    let d = spec.feature_dim;
    let mut rng = rng::stream(seed, Domain::Structure, 0, 0);
    let mu_a = normals(&mut rng, d, 1.0);
    let direction = normals(&mut rng, d, 1.0);
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let shift = spec.separation * spec.coord_shift_per_separation * (d as f64).sqrt() / norm;
    let mu_b: Vec<f64> = mu_a.iter().zip(&direction).map(|(m, u)| m + shift * u).collect();
    let b = normals(&mut rng, d * spec.n_global, 1.0 / (spec.n_global as f64).sqrt());
    let cluster = |rng: &mut StreamRng, mu: Vec<f64>| ClusterTemplate {
        mu,
        a: normals(rng, d * spec.n_cluster, 1.0 / (spec.n_cluster as f64).sqrt()),
        l: normals(rng, d * spec.n_idio, spec.idio_loading_sd),
        sigma: (0..d)
            .map(|_| rng.random_range(spec.sigma_range.0..=spec.sigma_range.1))
            .collect(),
    };
    let ca = cluster(&mut rng, mu_a);
    let cb = cluster(&mut rng, mu_b);

    let width = spec.hidden_width;
    let mut net_rng = rng::stream(seed, Domain::Structure, 1, 0);
    let mut network = OutcomeNetwork {
        w_in: normals(&mut net_rng, width * d, 1.0 / (d as f64).sqrt()),
        b_in: normals(&mut net_rng, width, 1.0),
        head_alpha: normals(&mut net_rng, width, 1.0),
        head_beta: normals(&mut net_rng, 3 * width, 1.0),
        width,
        dim: d,
    };
    let (_, chol) = factor_cholesky(spec.factor_corr)?;
    let mut templates = StructureTemplates {
        seed,
        clusters: [ca, cb],
        b,
        network: network.clone(),
        chol,
    };
    // scale each head to unit sd on a probe sample of covariates
    let probe = probe_features(&templates, spec, seed, 2000);
    let outputs: Vec<(f64, [f64; 3])> = probe.chunks_exact(d).map(|x| network.eval(x)).collect();
    let sd = |vals: Vec<f64>| {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt().max(1e-12)
    };
    let sa = sd(outputs.iter().map(|o| o.0).collect());
    network.head_alpha.iter_mut().for_each(|w| *w /= sa);
    for j in 0..3 {
        let sj = sd(outputs.iter().map(|o| o.1[j]).collect());
        network.head_beta[j * width..(j + 1) * width].iter_mut().for_each(|w| *w /= sj);
    }
    templates.network = network;
    Ok(templates)
}

/// Stationary AR(1) path with unit variance.
fn ar1_path(rng: &mut StreamRng, len: usize, rho: f64) -> Vec<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut u: f64 = rng.sample(StandardNormal);
    out.push(u);
    for _ in 1..len {
        u = rho * u + innov * rng.sample::<f64, _>(StandardNormal);
        out.push(u);
    }
    out
}

/// `dim` independent AR(1) paths, returned time-major (`len x dim`).
fn latent_paths(rng: &mut StreamRng, len: usize, dim: usize, rho: f64) -> Vec<f64> {
    let paths: Vec<Vec<f64>> = (0..dim).map(|_| ar1_path(rng, len, rho)).collect();
    (0..len).flat_map(|t| paths.iter().map(move |p| p[t])).collect()
}

fn matvec_add(out: &mut [f64], m: &[f64], cols: usize, v: &[f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o += m[j * cols..(j + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// One covariate vector given the cluster template and the shared latents.
fn draw_features(
    out: &mut [f64],
    templates: &StructureTemplates,
    spec: &ScenarioSpec,
    cluster: usize,
    u_global: &[f64],
    u_cluster: &[f64],
    rng: &mut StreamRng,
) {
    let c = &templates.clusters[cluster];
    out.copy_from_slice(&c.mu);
    matvec_add(out, &templates.b, spec.n_global, u_global);
    matvec_add(out, &c.a, spec.n_cluster, u_cluster);
    let v = normals(rng, spec.n_idio, 1.0);
    matvec_add(out, &c.l, spec.n_idio, &v);
    for (o, s) in out.iter_mut().zip(&c.sigma) {
        *o += s * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Covariate draws from both clusters (majority share respected) with fresh
/// latents, used to scale the network heads.
fn probe_features(templates: &StructureTemplates, spec: &ScenarioSpec, seed: u64, n: usize) -> Vec<f64> {
    let d = spec.feature_dim;
    let mut rng = rng::stream(seed, Domain::Probe, 0, 0);
    let mut out = vec![0.0; n * d];
    for (i, row) in out.chunks_exact_mut(d).enumerate() {
        let cluster = usize::from((i as f64 + 0.5) / n as f64 >= spec.majority_share);
        let ug = normals(&mut rng, spec.n_global, 1.0);
        let uc = normals(&mut rng, spec.n_cluster, 1.0);
        draw_features(row, templates, spec, cluster, &ug, &uc, &mut rng);
    }
    out
}

/// Factor path `F_0..F_{T-1}`, time-major.
pub fn simulate_factors(spec: &ScenarioSpec, seed: u64) -> Result<Vec<[f64; 3]>> {
    let (_, c) = factor_cholesky(spec.factor_corr)?;
    let mut rng = rng::stream(seed, Domain::Factor, 0, 0);
    let mut path = vec![[0.0; 3]];
    for r in 1..spec.horizon {
        let z = nalgebra::Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let shock = c * z;
        let m = spec.drift_mean(r);
        let s = spec.noise_scale(r);
        let prev = path[r - 1];
        let mut f = [0.0; 3];
        for j in 0..3 {
            f[j] = spec.phi[j] * prev[j] + (1.0 - spec.phi[j]) * m[j] + spec.factor_noise * s * shock[j];
        }
        path.push(f);
    }
    Ok(path)
}

/// Replication-level draws besides the panel itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub scenario: Scenario,
    pub structure_seed: u64,
    pub rep_seed: u64,
    pub clusters: Vec<String>,
    pub frailty: Vec<f64>,
    pub factors: Vec<[f64; 3]>,
}

/// Simulate one replication. The factor path is attached as the shared
/// context and units carry cluster tags (`A` majority first, then `B`).
pub fn simulate_panel(templates: &StructureTemplates, spec: &ScenarioSpec, rep_seed: u64) -> Result<(Panel, SyntheticMeta)> {
    spec.validate()?;
    let (n, t_len, d) = (spec.n_units, spec.horizon, spec.feature_dim);
    let n_major = spec.n_majority();
    let factors = simulate_factors(spec, rep_seed)?;
    let u_global = latent_paths(&mut rng::stream(rep_seed, Domain::Latent, 0, 0), t_len, spec.n_global, spec.latent_persistence);
    let u_cluster: Vec<Vec<f64>> = (0..2)
        .map(|c| latent_paths(&mut rng::stream(rep_seed, Domain::Latent, 1 + c as u64, 0), t_len, spec.n_cluster, spec.latent_persistence))
        .collect();
    let mut frailty_rng = rng::stream(rep_seed, Domain::Frailty, 0, 0);
    let frailty: Vec<f64> = (0..n)
        .map(|i| {
            if i >= n_major && spec.frailty_sd > 0.0 {
                spec.frailty_sd * frailty_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect();

    let mut features = vec![0.0; n * t_len * d];
    let mut outcomes = vec![0.0; n * t_len];
    for i in 0..n {
        let cluster = usize::from(i >= n_major);
        let mut x_rng = rng::stream(rep_seed, Domain::Unit, i as u64, 0);
        let mut y_rng = rng::stream(rep_seed, Domain::Unit, i as u64, 1);
        for t in 0..t_len {
            let cell = i * t_len + t;
            let x = &mut features[cell * d..(cell + 1) * d];
            draw_features(
                x,
                templates,
                spec,
                cluster,
                &u_global[t * spec.n_global..(t + 1) * spec.n_global],
                &u_cluster[cluster][t * spec.n_cluster..(t + 1) * spec.n_cluster],
                &mut x_rng,
            );
            let (ga, gb) = templates.network.eval(x);
            let f = factors[t];
            let eps: f64 = y_rng.sample(StandardNormal);
            outcomes[cell] = ga + gb.iter().zip(&f).map(|(g, v)| g * v).sum::<f64>() + frailty[i] * f[0] + spec.noise_sd * eps;
        }
    }
    let clusters: Vec<String> = (0..n)
        .map(|i| if i < n_major { MAJORITY_TAG } else { MINORITY_TAG }.to_string())
        .collect();
    let context: Vec<f64> = factors.iter().flatten().copied().collect();
    let panel = Panel::new(n, t_len, d, features, outcomes, spec.burn_in)?
        .with_context(3, context)?
        .with_unit_tags(clusters.clone())?;
    let meta = SyntheticMeta {
        scenario: spec.scenario,
        structure_seed: templates.seed,
        rep_seed,
        clusters,
        frailty,
        factors,
    };
    Ok((panel, meta))
}

/// Population covariance implied by a cluster template given fixed latents:
/// `L L' + diag(sigma^2)`, `d x d` row-major.
pub fn conditional_covariance(template: &ClusterTemplate, n_idio: usize) -> DMatrix<f64> {
    let d = template.mu.len();
    let l = DMatrix::from_row_slice(d, n_idio, &template.l);
    let mut cov = &l * l.transpose();
    for j in 0..d {
        cov[(j, j)] += template.sigma[j] * template.sigma[j];
    }
    cov
}

/// Features drawn with all latents fixed at zero (for covariance checks).
pub fn draw_with_fixed_latents(templates: &StructureTemplates, spec: &ScenarioSpec, cluster: usize, n: usize, seed: u64) -> Vec<f64> {
    let d = spec.feature_dim;
    let mut rng = rng::stream(seed, Domain::Test, 99, cluster as u32);
    let ug = vec![0.0; spec.n_global];
    let uc = vec![0.0; spec.n_cluster];
    let mut out = vec![0.0; n * d];
    for row in out.chunks_exact_mut(d) {
        draw_features(row, templates, spec, cluster, &ug, &uc, &mut rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(s: Scenario) -> ScenarioSpec {
        ScenarioSpec {
            n_units: 50,
            horizon: 20,
            feature_dim: 10,
            burn_in: 8,
            hidden_width: 8,
            ..ScenarioSpec::new(s)
        }
    }

    #[test]
    fn scenario_constants() {
        let e = ScenarioSpec::new(Scenario::Easy);
        assert_eq!((e.n_units, e.horizon, e.feature_dim, e.burn_in), (500, 100, 100, 40));
        assert_eq!((e.n_majority(), e.n_minority()), (440, 60));
        assert_eq!(e.drift_mean(70), [0.0; 3]);
        assert_eq!(e.noise_scale(99), 1.0);
        let h = ScenarioSpec::new(Scenario::Hard);
        assert_eq!(h.noise_scale(40), 1.0);
        assert!((h.noise_scale(70) - 1.4).abs() < 1e-12);
        assert!((h.noise_scale(100) - 1.8).abs() < 1e-12);
        assert_eq!(h.drift_mean(0), [0.0; 3]);
        let m = h.drift_mean(99);
        assert!((m[0] + m[2]).abs() < 1e-15 && m[1] == 0.0 && m[0] > 0.0);
    }

    #[test]
    fn cholesky_reproduces_correlation() {
        let (r, c) = factor_cholesky(0.45).unwrap();
        assert!((c * c.transpose() - r).abs().max() < 1e-12);
        assert!((r[(0, 2)] - 0.2025).abs() < 1e-15);
    }

    #[test]
    fn factor_path_starts_at_zero() {
        let f = simulate_factors(&ScenarioSpec::new(Scenario::Medium), 3).unwrap();
        assert_eq!(f.len(), 100);
        assert_eq!(f[0], [0.0; 3]);
        assert!(f[1].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn templates_are_deterministic_and_shared_at_equal_separation() {
        let spec = small_spec(Scenario::Easy);
        let easy = make_structure(5, &spec).unwrap();
        assert_eq!(easy, make_structure(5, &spec).unwrap());
        assert_eq!(easy, make_structure(5, &small_spec(Scenario::Medium)).unwrap());
        let hard = make_structure(5, &small_spec(Scenario::Hard)).unwrap();
        assert!((hard.mean_shift_norm() / easy.mean_shift_norm() - 2.5).abs() < 1e-12);
        let expected = 0.8 * spec.coord_shift_per_separation * (spec.feature_dim as f64).sqrt();
        assert!((easy.mean_shift_norm() - expected).abs() < 1e-9);
        assert_eq!(easy.clusters[0], hard.clusters[0]);
    }

    #[test]
    fn panel_shapes_and_frailty() {
        let spec = small_spec(Scenario::Easy);
        let t = make_structure(1, &spec).unwrap();
        let (p, meta) = simulate_panel(&t, &spec, 2).unwrap();
        assert_eq!((p.n_units(), p.horizon(), p.feature_dim(), p.context_dim()), (50, 20, 10, Some(3)));
        assert!(meta.frailty.iter().all(|e| *e == 0.0));
        let spec = small_spec(Scenario::Hard);
        let (_, meta) = simulate_panel(&make_structure(1, &spec).unwrap(), &spec, 2).unwrap();
        let n_major = spec.n_majority();
        assert!(meta.frailty[..n_major].iter().all(|e| *e == 0.0));
        assert!(meta.frailty[n_major..].iter().all(|e| *e != 0.0));
    }

    #[test]
    fn zero_noise_and_network_give_zero_outcomes() {
        let spec = ScenarioSpec { noise_sd: 0.0, frailty_sd: 0.0, ..small_spec(Scenario::Hard) };
        let mut t = make_structure(1, &spec).unwrap();
        t.network.head_alpha.iter_mut().for_each(|w| *w = 0.0);
        t.network.head_beta.iter_mut().for_each(|w| *w = 0.0);
        let (p, _) = simulate_panel(&t, &spec, 4).unwrap();
        for i in 0..p.n_units() {
            for s in 0..p.horizon() {
                assert_eq!(p.y(i, s), 0.0);
            }
        }
    }
}
