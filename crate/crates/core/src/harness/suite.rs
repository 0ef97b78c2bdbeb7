use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attention::{self, AttentionParams, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sfmask::{self, MaskMode};
use crate::spectral::{self, max_abs_diff, SpectralDecomposition, EIGENVALUE_SLACK};

pub const SPECTRAL_TOL: f64 = 1e-8;
pub const TRANSFORM_TOL: f64 = 1e-10;
pub const ATTENTION_TOL: f64 = 1e-12;
pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor of the finite-difference relative error.
pub const FD_FLOOR: f64 = 1e-8;
const MAX_NODES: usize = 30;
/// Graphs used for the gradient check (each under all three mask modes).
const GRADIENT_MODELS: usize = 2;

/// Deliberate corruption of the decompositions, to confirm the checks bite.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaultInjection {
    /// Use raw Jacobi eigenvalues without the range check and clamp.
    pub skip_clamp: bool,
    /// Added to every eigenvector entry when set.
    pub eigenvector_perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub trials: usize,
    pub faults: FaultInjection,
}

impl SuiteOptions {
    pub fn new(seed: u64, trials: usize) -> Self {
        SuiteOptions {
            seed,
            trials,
            faults: FaultInjection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Worst value observed for one check across all trials.
struct Tally {
    name: &'static str,
    worst: f64,
    tol: f64,
    failures: usize,
    first_failure: Option<usize>,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Tally {
            name,
            worst: 0.0,
            tol,
            failures: 0,
            first_failure: None,
        }
    }

    /// Records an error magnitude that must not exceed the tolerance.
    fn error(&mut self, trial: usize, err: f64) {
        self.flag(trial, err, err.is_nan() || err > self.tol);
    }

    /// Records a boolean outcome; `err` is reported as the worst value.
    fn flag(&mut self, trial: usize, err: f64, failed: bool) {
        if err > self.worst || err.is_nan() {
            self.worst = err;
        }
        if failed {
            self.failures += 1;
            self.first_failure.get_or_insert(trial);
        }
    }

    fn finish(self, trials: usize) -> CheckResult {
        let detail = match self.first_failure {
            None => format!(
                "worst={:.3e} tol={:.0e} trials={trials}",
                self.worst, self.tol
            ),
            Some(t) => format!(
                "worst={:.3e} tol={:.0e} failures={}/{trials} first_trial={t}",
                self.worst, self.tol, self.failures
            ),
        };
        CheckResult {
            name: self.name,
            passed: self.failures == 0,
            detail,
        }
    }
}

fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
    let n = rng.random_range(1..=MAX_NODES);
    let p = rng.random_range(1..=9) as f64 / 10.0;
    let d = rng.random_range(1..=4);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let x = gaussian(rng, n, d);
    Graph::new(n, edges, Some(x)).expect("generated edges are valid")
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn frob2(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn vec_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Plain-loop attention without a mask, used as the reference.
fn reference_attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let n = q.nrows();
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut out = Array2::zeros((n, v.ncols()));
    for i in 0..n {
        let scores: Vec<f64> = (0..n)
            .map(|j| (0..q.ncols()).map(|c| q[[i, c]] * k[[j, c]]).sum::<f64>() * scale)
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = w.iter().sum();
        for j in 0..n {
            for c in 0..v.ncols() {
                out[[i, c]] += w[j] / z * v[[j, c]];
            }
        }
    }
    out
}

/// Largest relative error `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`
/// between the analytic gradient and central differences of step `step`.
pub fn finite_difference_gradient_error(
    x: &Array2<f64>,
    mask: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
    target: usize,
    step: f64,
) -> Result<f64> {
    let analytic = attention::loss_and_grad(x, mask, params, cfg, target)?.grad;
    let loss = |p: &AttentionParams| -> Result<f64> {
        let logits = attention::forward_with_mask(x, mask, p, cfg)?;
        Ok(attention::cross_entropy(logits.view(), target))
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let grads = analytic.tensors();
    for (t, (_, _, g)) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.tensors_mut()[t][i];
            probe.tensors_mut()[t][i] = orig + step;
            let up = loss(&probe)?;
            probe.tensors_mut()[t][i] = orig - step;
            let down = loss(&probe)?;
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let denom = g[i].abs().max(numeric.abs()).max(FD_FLOOR);
            let rel = (g[i] - numeric).abs() / denom;
            if rel > worst || rel.is_nan() {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn decompose_with_faults(g: &Graph, faults: FaultInjection) -> Result<SpectralDecomposition> {
    let l = spectral::normalized_laplacian(g);
    let mut dec = if faults.skip_clamp {
        spectral::eig_sym_unclamped(&l)?
    } else {
        spectral::eig_sym(&l)?
    };
    if let Some(delta) = faults.eigenvector_perturbation {
        dec.perturb_eigenvectors(delta);
    }
    Ok(dec)
}

/// Runs every invariant over `trials` seeded random graphs (up to 30 nodes,
/// edge probability 0.1 to 0.9, 1 to 4 Gaussian features) plus a
/// finite-difference gradient check on small models.
pub fn invariant_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut range = Tally::new("eigenvalue-range", EIGENVALUE_SLACK);
    let mut order = Tally::new("eigenvalue-order", 0.0);
    let mut ortho = Tally::new("orthogonality", SPECTRAL_TOL);
    let mut recon = Tally::new("reconstruction", SPECTRAL_TOL);
    let mut comps = Tally::new("zero-multiplicity", 0.0);
    let mut parseval = Tally::new("parseval", TRANSFORM_TOL);
    let mut bands = Tally::new("band-reconstruction", TRANSFORM_TOL);
    let mut energy = Tally::new("energy-conservation", TRANSFORM_TOL);
    let mut sign = Tally::new("sign-invariance", TRANSFORM_TOL);
    let mut bounds = Tally::new("mask-bounds", 0.0);
    let mut stochastic = Tally::new("row-stochasticity", ATTENTION_TOL);
    let mut eq2 = Tally::new("unmasked-reduction", ATTENTION_TOL);

    for trial in 0..opts.trials {
        let g = random_graph(&mut rng);
        let x = g.features().expect("random graphs carry features").clone();
        let n = g.node_count();
        let l = spectral::normalized_laplacian(&g);
        let dec = match decompose_with_faults(&g, opts.faults) {
            Ok(d) => d,
            Err(_) => {
                range.flag(trial, f64::INFINITY, true);
                recon.flag(trial, f64::INFINITY, true);
                continue;
            }
        };
        let lam = dec.eigenvalues();

        let out_of_range = lam
            .iter()
            .map(|&v| (-v).max(v - 2.0).max(0.0))
            .fold(0.0, f64::max);
        range.error(trial, out_of_range);
        let descent = lam
            .windows(2)
            .into_iter()
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max);
        order.error(trial, descent);
        ortho.error(trial, dec.orthogonality_error());
        recon.error(trial, dec.reconstruction_error(&l));

        let zeros = lam.iter().filter(|&&v| v <= SPECTRAL_TOL).count();
        let nontrivial = g.component_sizes().into_iter().filter(|&s| s > 1).count();
        let mismatch = (zeros as f64 - nontrivial as f64).abs();
        comps.flag(trial, mismatch, zeros != nontrivial);

        let norm2 = frob2(&x);
        let rel = |a: f64| (a - norm2).abs() / norm2.max(f64::MIN_POSITIVE);
        parseval.error(trial, rel(frob2(&dec.gft(&x)?)));

        let masks = sfmask::frequency_masks(lam);
        let (low, high) = sfmask::band_features(&dec, &x, &masks)?;
        bands.error(trial, max_abs_diff(&(&low + &high), &x));
        let ep = sfmask::energy_profile(&low, &high)?;
        energy.error(trial, rel(ep.total));

        let full = sfmask::components_from(dec.clone(), Some(&x), MaskMode::Full)?;
        let mut flipped = dec.clone();
        for k in (0..n).filter(|k| k % 2 == trial % 2) {
            flipped.flip_sign(k);
        }
        let flip = sfmask::components_from(flipped, Some(&x), MaskMode::Full)?;
        let (e0, e1) = (full.energy.as_ref().unwrap(), flip.energy.as_ref().unwrap());
        let sign_err = [
            max_abs_diff(&full.matrices.structure, &flip.matrices.structure),
            max_abs_diff(&full.matrices.filter, &flip.matrices.filter),
            max_abs_diff(&full.matrices.mask, &flip.matrices.mask),
            vec_diff(&e0.low, &e1.low),
            vec_diff(&e0.high, &e1.high),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        sign.error(trial, sign_err);

        let m = &full.matrices;
        let within = |a: &Array2<f64>, hi: f64| a.iter().all(|&v| (0.0..=hi).contains(&v));
        let f_ok =
            full.energy.as_ref().unwrap().total <= sfmask::ENERGY_EPS || within(&m.filter, 1.0);
        let ok = within(&m.structure, 4.0) && f_ok && within(&m.mask, 4.0);
        bounds.flag(trial, if ok { 0.0 } else { 1.0 }, !ok);

        let dh = rng.random_range(1..=4);
        let (q, k, v) = (
            gaussian(&mut rng, n, dh),
            gaussian(&mut rng, n, dh),
            gaussian(&mut rng, n, dh),
        );
        for mode in MaskMode::ALL {
            let mask = sfmask::components_from(dec.clone(), Some(&x), mode)?
                .matrices
                .mask;
            let (_, attn) = attention::masked_attention_forward(&q, &k, &v, &mask)?;
            let worst = attn
                .rows()
                .into_iter()
                .map(|r| (r.sum() - 1.0).abs())
                .fold(0.0, f64::max);
            stochastic.error(trial, worst);
        }
        let (out, _) = attention::masked_attention_forward(&q, &k, &v, &Array2::ones((n, n)))?;
        eq2.error(trial, max_abs_diff(&out, &reference_attention(&q, &k, &v)));
    }

    let mut grad = Tally::new("gradient-check", FD_REL_TOL);
    for model in 0..GRADIENT_MODELS.min(opts.trials) {
        let cfg = ModelConfig::new(3, 4, 2, 2, 2).with_seed(opts.seed.wrapping_add(model as u64));
        let params = attention::init_params(&cfg)?;
        let g = {
            let mut edges = Vec::new();
            while edges.is_empty() {
                edges = (0..4)
                    .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
                    .filter(|_| rng.random_bool(0.6))
                    .collect();
            }
            Graph::new(4, edges, Some(gaussian(&mut rng, 4, 3)))?
        };
        let x = g.features().unwrap().clone();
        let target = rng.random_range(0..2);
        for mode in MaskMode::ALL {
            let mask = sfmask::build_mask(&g, Some(&x), mode)?;
            let err = finite_difference_gradient_error(&x, &mask, &params, &cfg, target, FD_STEP)?;
            grad.error(model, err);
        }
    }

    let t = opts.trials;
    Ok(SuiteReport {
        checks: vec![
            range.finish(t),
            order.finish(t),
            ortho.finish(t),
            recon.finish(t),
            comps.finish(t),
            parseval.finish(t),
            bands.finish(t),
            energy.finish(t),
            sign.finish(t),
            bounds.finish(t),
            stochastic.finish(t),
            eq2.finish(t),
            grad.finish(GRADIENT_MODELS.min(t)),
        ],
    })
}
