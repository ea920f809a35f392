//! The two-layer kernel-regime network `f(X̃) = m^{-1/2} Σ_r a_r σ(W_rᵀ X̃)`,
//! trained by full-batch gradient descent on `½‖f − y‖²` with `a` frozen.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{aggregate_features, AggregatedFeatures, Graph};
use crate::kernel::{kernel_matrix, GramMatrix};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::rng;
use crate::scalar::{dot, norm2, Scalar};

/// Hidden units handled per parallel task; fixed so reductions do not depend
/// on the thread count.
const UNIT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize<T> {
    Fixed(T),
    /// `1 / λ_max(H)` of the training rows.
    InverseLambdaMax,
    /// `min(cap, 1 / λ_max(H))`.
    CappedInverseLambdaMax(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<T> {
    pub m: usize,
    pub step: StepSize<T>,
    pub kappa: T,
    pub steps: usize,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(m: usize, step: StepSize<T>, kappa: T, steps: usize, seed: u64) -> Result<Self> {
        let cfg = TrainConfig {
            m,
            step,
            kappa,
            steps,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("hidden width m must be at least 1".into()));
        }
        if !(self.kappa > T::zero() && self.kappa <= T::one()) {
            return Err(Error::Config(format!(
                "kappa {} outside (0, 1]",
                self.kappa
            )));
        }
        match self.step {
            StepSize::Fixed(eta) | StepSize::CappedInverseLambdaMax(eta) if !(eta > T::zero()) => {
                Err(Error::Config(format!("step size {eta} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Concrete `η` for training on `xt`.
    pub fn resolve_eta(&self, xt: &AggregatedFeatures<T>) -> Result<T> {
        let inv = || -> Result<T> {
            let eig = SymmetricEigen::new(&kernel_matrix(&xt.matrix))?;
            Ok(T::one() / eig.max())
        };
        match self.step {
            StepSize::Fixed(eta) => Ok(eta),
            StepSize::InverseLambdaMax => inv(),
            StepSize::CappedInverseLambdaMax(cap) => Ok(cap.min(inv()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    /// `m × F`; row `r` is `W_r`.
    pub w: Matrix<T>,
    /// Fixed output signs.
    pub a: Vec<T>,
    pub config: TrainConfig<T>,
}

impl<T: Scalar> ModelState<T> {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn n_features(&self) -> usize {
        self.w.cols()
    }
}

/// `W_r ~ N(0, κ² I)`, `a_r` uniform on `{−1, +1}`.
pub fn init_model<T: Scalar>(cfg: &TrainConfig<T>, f: usize) -> Result<ModelState<T>> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let data: Vec<T> = (0..cfg.m * f)
        .map(|_| cfg.kappa * T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let a = (0..cfg.m)
        .map(|_| {
            if rng.random::<bool>() {
                T::one()
            } else {
                -T::one()
            }
        })
        .collect();
    Ok(ModelState {
        w: Matrix::from_vec(cfg.m, f, data)?,
        a,
        config: *cfg,
    })
}

fn check_dims<T: Scalar>(state: &ModelState<T>, xt: &AggregatedFeatures<T>) -> Result<()> {
    if xt.n_features() != state.n_features() {
        return Err(Error::Shape {
            expected: format!("{} feature columns", state.n_features()),
            got: xt.n_features().to_string(),
        });
    }
    Ok(())
}

/// Pre-activations (`m × N`) and outputs.
fn forward_with_pre<T: Scalar>(state: &ModelState<T>, x: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let n = x.rows();
    let m = state.width();
    let mut pre = vec![T::zero(); m * n];
    let scale = T::one() / T::of(m as f64).sqrt();
    let partials: Vec<Vec<T>> = pre
        .par_chunks_mut(UNIT_CHUNK * n)
        .enumerate()
        .map(|(c, block)| {
            let mut f = vec![T::zero(); n];
            for (k, row) in block.chunks_mut(n).enumerate() {
                let r = c * UNIT_CHUNK + k;
                let wr = state.w.row(r);
                for (i, p) in row.iter_mut().enumerate() {
                    *p = dot(wr, x.row(i));
                    if *p > T::zero() {
                        f[i] += state.a[r] * *p;
                    }
                }
            }
            f
        })
        .collect();
    let mut f = vec![T::zero(); n];
    for part in partials {
        for (fi, pi) in f.iter_mut().zip(part) {
            *fi += pi;
        }
    }
    f.iter_mut().for_each(|v| *v *= scale);
    (pre, f)
}

pub fn forward<T: Scalar>(state: &ModelState<T>, xt: &AggregatedFeatures<T>) -> Result<Vec<T>> {
    check_dims(state, xt)?;
    Ok(forward_with_pre(state, &xt.matrix).1)
}

/// `∂L/∂W_r = a_r m^{-1/2} Σ_i (f_i − y_i) 1{W_rᵀX̃_i > 0} X̃_i` (rows of the result).
fn gradient_from_pre<T: Scalar>(
    state: &ModelState<T>,
    x: &Matrix<T>,
    pre: &[T],
    g: &[T],
) -> Matrix<T> {
    let n = x.rows();
    let f = x.cols();
    let scale = T::one() / T::of(state.width() as f64).sqrt();
    let mut grad = Matrix::zeros(state.width(), f);
    let data: Vec<Vec<T>> = (0..state.width())
        .into_par_iter()
        .map(|r| {
            let mut out = vec![T::zero(); f];
            let pr = &pre[r * n..(r + 1) * n];
            for i in 0..n {
                if pr[i] > T::zero() {
                    let c = g[i];
                    for (o, &xv) in out.iter_mut().zip(x.row(i)) {
                        *o += c * xv;
                    }
                }
            }
            let s = state.a[r] * scale;
            out.iter_mut().for_each(|v| *v *= s);
            out
        })
        .collect();
    for (r, row) in data.into_iter().enumerate() {
        grad.row_mut(r).copy_from_slice(&row);
    }
    grad
}

fn check_targets<T: Scalar>(y: &[T], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} targets"),
            got: y.len().to_string(),
        });
    }
    if let Some((node, v)) = y.iter().enumerate().find(|(_, v)| !(v.abs() <= T::one())) {
        return Err(Error::UnboundedLabel {
            node,
            value: v.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Loss `½‖f − y‖²` and its gradient with respect to `W` (same layout as `w`).
pub fn loss_and_gradient<T: Scalar>(
    state: &ModelState<T>,
    xt: &AggregatedFeatures<T>,
    y: &[T],
) -> Result<(T, Matrix<T>)> {
    check_dims(state, xt)?;
    check_targets(y, xt.n_nodes())?;
    let (pre, f) = forward_with_pre(state, &xt.matrix);
    let g: Vec<T> = f.iter().zip(y).map(|(&fi, &yi)| fi - yi).collect();
    let loss = T::of(0.5) * dot(&g, &g);
    Ok((loss, gradient_from_pre(state, &xt.matrix, &pre, &g)))
}

#[derive(Debug, Clone)]
pub struct TrainTrace<T> {
    pub residual_norms: Vec<T>,
    pub losses: Vec<T>,
    pub eta: T,
    pub final_state: ModelState<T>,
}

impl<T: Scalar> TrainTrace<T> {
    /// `step,residual_norm,loss,predicted_norm`; the last column is empty
    /// without a predictor.
    pub fn to_csv(&self, prediction: Option<&SpectralPrediction<T>>) -> String {
        let mut s = String::from("step,residual_norm,loss,predicted_norm\n");
        for (t, (r, l)) in self.residual_norms.iter().zip(&self.losses).enumerate() {
            let p = prediction.map_or(String::new(), |p| p.predicted_norm(t).to_string());
            s.push_str(&format!("{t},{r},{l},{p}\n"));
        }
        s
    }
}

/// Full-batch gradient descent on `W`; `a` never changes.
pub fn train_gd<T: Scalar>(
    mut state: ModelState<T>,
    xt: &AggregatedFeatures<T>,
    y: &[T],
    cfg: &TrainConfig<T>,
) -> Result<TrainTrace<T>> {
    cfg.validate()?;
    check_dims(&state, xt)?;
    check_targets(y, xt.n_nodes())?;
    let eta = cfg.resolve_eta(xt)?;
    let x = &xt.matrix;
    let mut residual_norms = Vec::with_capacity(cfg.steps + 1);
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for t in 0..=cfg.steps {
        let (pre, f) = forward_with_pre(&state, x);
        let g: Vec<T> = f.iter().zip(y).map(|(&fi, &yi)| fi - yi).collect();
        let norm = norm2(&g);
        let loss = T::of(0.5) * norm * norm;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: t });
        }
        residual_norms.push(norm);
        losses.push(loss);
        if t == cfg.steps {
            break;
        }
        let grad = gradient_from_pre(&state, x, &pre, &g);
        state
            .w
            .as_mut_slice()
            .par_iter_mut()
            .zip(grad.as_slice().par_iter())
            .for_each(|(w, &d)| *w -= eta * d);
    }
    Ok(TrainTrace {
        residual_norms,
        losses,
        eta,
        final_state: state,
    })
}

#[derive(Debug, Clone)]
pub struct SpectralPrediction<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// `(v_iᵀ y)²`, aligned with `eigenvalues`.
    pub projections: Vec<T>,
    pub eta: T,
}

impl<T: Scalar> SpectralPrediction<T> {
    /// `sqrt(Σ_i (1 − ηλ_i)^{2t} (v_iᵀy)²)`.
    pub fn predicted_norm(&self, t: usize) -> T {
        let e = 2 * t.min(i32::MAX as usize / 2);
        self.eigenvalues
            .iter()
            .zip(&self.projections)
            .map(|(&l, &p)| (T::one() - self.eta * l).powi(e as i32) * p)
            .sum::<T>()
            .sqrt()
    }

    pub fn stable(&self) -> bool {
        self.eigenvalues
            .last()
            .is_none_or(|&l| self.eta * l < T::of(2.0))
    }
}

pub fn spectral_predictor<T: Scalar>(
    gm: &GramMatrix<T>,
    y: &[T],
    eta: T,
) -> Result<SpectralPrediction<T>> {
    if y.len() != gm.n() {
        return Err(Error::Shape {
            expected: format!("{} targets", gm.n()),
            got: y.len().to_string(),
        });
    }
    let eig = gm.eigen()?;
    let n = gm.n();
    let projections = (0..n)
        .map(|k| {
            let p: T = (0..n).map(|i| eig.eigenvectors[(i, k)] * y[i]).sum();
            p * p
        })
        .collect();
    let pred = SpectralPrediction {
        eigenvalues: eig.eigenvalues,
        projections,
        eta,
    };
    if !pred.stable() {
        warn!(
            "eta * lambda_max = {} >= 2; the predicted residual diverges",
            (eta * eig_max(&pred.eigenvalues)).to_f64_lossy()
        );
    }
    Ok(pred)
}

fn eig_max<T: Scalar>(ev: &[T]) -> T {
    ev.last().copied().unwrap_or_else(T::zero)
}

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle into `round(train·N)`, `round(val·N)` and the rest.
    pub fn random(n: usize, seed: u64, train: f64, val: f64) -> Result<Self> {
        if !(train > 0.0 && val >= 0.0 && train + val <= 1.0) {
            return Err(Error::Config(format!(
                "split fractions {train}/{val} invalid"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::seeded(seed));
        let n_train = (train * n as f64).round() as usize;
        let n_val = ((val * n as f64).round() as usize).min(n - n_train);
        let mut s = Split {
            train: idx[..n_train].to_vec(),
            val: idx[n_train..n_train + n_val].to_vec(),
            test: idx[n_train + n_val..].to_vec(),
        };
        s.train.sort_unstable();
        s.val.sort_unstable();
        s.test.sort_unstable();
        Ok(s)
    }

    /// The default 10/10/80 split.
    pub fn standard(n: usize, seed: u64) -> Result<Self> {
        Self::random(n, seed, 0.1, 0.1)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::NodeOutOfRange {
                    index: i,
                    n_nodes: n,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!(
                    "node {i} appears in two split masks"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AccuracyReport<T> {
    pub n_classes: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub predictions: Vec<usize>,
    /// One per class, in class order.
    pub traces: Vec<TrainTrace<T>>,
}

impl<T: Scalar> AccuracyReport<T> {
    pub fn to_csv(&self) -> String {
        format!(
            "split,accuracy\ntrain,{}\nval,{}\ntest,{}\n",
            self.train_accuracy, self.val_accuracy, self.test_accuracy
        )
    }
}

fn accuracy(pred: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return f64::NAN;
    }
    let hits = nodes.iter().filter(|&&i| pred[i] == labels[i]).count();
    hits as f64 / nodes.len() as f64
}

/// Trains one ±1 network per class on the training rows of `X̃(g)` and
/// classifies every node by argmax (lowest class wins ties).
pub fn evaluate_classifier<T: Scalar>(
    g: &Graph<T>,
    labels: &[usize],
    split: &Split,
    cfg: &TrainConfig<T>,
) -> Result<AccuracyReport<T>> {
    cfg.validate()?;
    let n = g.n_nodes();
    if labels.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} labels"),
            got: labels.len().to_string(),
        });
    }
    split.validate(n)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    for class in 0..k {
        if !split.train.iter().any(|&i| labels[i] == class) {
            return Err(Error::DegenerateSplit { class });
        }
    }
    let xt = aggregate_features(g)?;
    let train_x = xt.select_rows(&split.train);

    let runs: Vec<(Vec<T>, TrainTrace<T>)> = (0..k)
        .into_par_iter()
        .map(|class| {
            let y: Vec<T> = split
                .train
                .iter()
                .map(|&i| {
                    if labels[i] == class {
                        T::one()
                    } else {
                        -T::one()
                    }
                })
                .collect();
            let mut c = *cfg;
            c.seed = rng::derive_seed(cfg.seed, class as u64);
            let state = init_model(&c, xt.n_features())?;
            let trace = train_gd(state, &train_x, &y, &c)?;
            let out = forward(&trace.final_state, &xt)?;
            Ok((out, trace))
        })
        .collect::<Result<_>>()?;

    let predictions: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if runs[c].0[i] > runs[best].0[i] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok(AccuracyReport {
        n_classes: k,
        train_accuracy: accuracy(&predictions, labels, &split.train),
        val_accuracy: accuracy(&predictions, labels, &split.val),
        test_accuracy: accuracy(&predictions, labels, &split.test),
        predictions,
        traces: runs.into_iter().map(|(_, t)| t).collect(),
    })
}

/// Confidence parameters of the generalization bounds; `constant` is the
/// otherwise unstated `O(·)` factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams<T> {
    pub lambda0: T,
    pub delta: T,
    pub constant: T,
}

impl<T: Scalar> BoundParams<T> {
    pub fn new(lambda0: T, delta: T) -> Self {
        BoundParams {
            lambda0,
            delta,
            constant: T::one(),
        }
    }

    fn confidence_term(&self, n: usize) -> Result<T> {
        if !(self.lambda0 > T::zero()) {
            return Err(Error::Config(format!(
                "lambda0 {} must be positive",
                self.lambda0
            )));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::Config(format!(
                "delta {} outside (0, 1)",
                self.delta
            )));
        }
        if n == 0 {
            return Err(Error::Config("bound needs n >= 1".into()));
        }
        let nn = T::of(n as f64);
        let log = (nn / (self.lambda0 * self.delta)).ln();
        if log < T::zero() {
            return Err(Error::Config("log(n / (lambda0 delta)) is negative".into()));
        }
        Ok(self.constant * (log / nn).sqrt())
    }
}

/// `sqrt(GKC) + C sqrt(log(n / (λ0 δ)) / n)`.
pub fn test_bound<T: Scalar>(gkc: T, n: usize, params: &BoundParams<T>) -> Result<T> {
    if !(gkc >= T::zero()) {
        return Err(Error::Config(format!("GKC {gkc} must be nonnegative")));
    }
    Ok(gkc.sqrt() + params.confidence_term(n)?)
}

/// `sqrt(GKC) + sqrt(KC) + C sqrt(log(n / (λ0 δ)) / n)`.
pub fn edge_bound<T: Scalar>(base_gkc: T, kc: T, n: usize, params: &BoundParams<T>) -> Result<T> {
    if !(kc >= T::zero()) {
        return Err(Error::Config(format!("KC {kc} must be nonnegative")));
    }
    Ok(test_bound(base_gkc, n, params)? + kc.sqrt())
}
